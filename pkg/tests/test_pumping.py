import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nvlab import pumping as pm

S = pm.LevelScheme()


def test_generator_columns_sum_to_zero():
    for on in (True, False):
        G = pm.rate_matrix(S, on)
        assert np.allclose(G.sum(axis=0), 0.0, atol=1e-15)
        off = G - np.diag(np.diag(G))
        assert off.min() >= 0


def test_laser_on_requires_pump():
    with pytest.raises(ValueError):
        pm.rate_matrix(pm.LevelScheme(pump_rate=0.0), True)


def test_default_steady_state_polarized():
    p = pm.steady_state(S)
    assert p.sum() == pytest.approx(1.0)
    assert p[pm.G0] > 0.8
    assert p[pm.G0] == pytest.approx(0.865, abs=1e-3)  # frozen


def test_steady_state_is_null_vector():
    p = pm.steady_state(S)
    assert np.max(np.abs(pm.rate_matrix(S, True) @ p)) < 1e-12


def test_laser_off_steady_state_not_unique():
    with pytest.raises(ValueError):
        pm.steady_state(S, laser_on=False)


def test_pump_reaches_steady_state():
    p = pm.propagate(S, pm.thermal_ground(), 350_000.0, True)
    assert np.max(np.abs(p - pm.steady_state(S))) < 1e-3


def test_symmetric_scheme_no_polarization():
    sym = S.symmetric()
    p = pm.steady_state(sym)
    ground = p[list(pm.GROUND)]
    assert np.max(np.abs(ground / ground.sum() - 1 / 3)) < 1e-9
    assert abs(pm.readout_contrast(sym)) < 1e-9


def test_readout_contrast_positive():
    c = pm.readout_contrast(S, 300.0)
    assert 0 < c < 1
    assert c == pytest.approx(0.484, abs=2e-3)  # frozen


def test_pumped_polarization_frozen():
    assert pm.pumped_polarization(S) == pytest.approx(0.924, abs=2e-3)


def test_dark_relaxation_rate():
    ev = np.sort(np.linalg.eigvals(pm.rate_matrix(S, False)).real)
    nonzero = ev[np.abs(ev) > 1e-12]
    assert -nonzero.max() == pytest.approx(1 / S.metastable_lifetime, rel=1e-9)


def test_population_validation():
    with pytest.raises(ValueError):
        pm.propagate(S, np.ones(7), 1.0, True)
    with pytest.raises(ValueError):
        pm.propagate(S, pm.ground_state(0), -1.0, True)


def test_counts_match_fine_trace():
    t, f = pm.readout_trace(S, pm.ground_state(0), 300.0, 6001)
    fine = float(np.sum((f[1:] + f[:-1]) / 2 * np.diff(t)))
    assert pm.integrated_counts(S, pm.ground_state(0), 300.0) == pytest.approx(fine, rel=1e-4)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1e5), st.lists(st.floats(0.0, 1.0), min_size=7, max_size=7).filter(lambda v: sum(v) > 0.1),
       st.booleans())
def test_propagation_stays_on_simplex(t, raw, on):
    p0 = np.array(raw) / sum(raw)
    p = pm.propagate(S, p0, t, on)
    assert p.sum() == pytest.approx(1.0, abs=1e-9)
    assert p.min() > -1e-9
