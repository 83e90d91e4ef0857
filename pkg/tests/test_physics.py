import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nvlab.physics import (INDEX, TWO_PI, FieldConfig, PhysicalConstants, QubitProjection,
                           check_density_matrix, drive_from_rabi, evolve, generalized_rabi,
                           ground_state_hamiltonian, populations, project, propagator,
                           pure_state, rabi_from_pi_time, resonance_frequencies,
                           rotating_frame_hamiltonian)

C = PhysicalConstants()


def random_hermitian(rng, n, scale):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (a + a.conj().T) / 2


def random_density(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def taylor_propagators(Hs, ts, n_pow=17, order=4):
    """Independent route: exp(-iHt) as (truncated Taylor step)^(2^n_pow)."""
    h = ts / 2**n_pow
    A = -1j * Hs * h[:, None, None]
    eye = np.broadcast_to(np.eye(Hs.shape[-1]), Hs.shape).astype(complex)
    step, term = eye.copy(), eye.copy()
    for k in range(1, order + 1):
        term = term @ A / k
        step = step + term
    for _ in range(n_pow):
        step = step @ step
    return step


def test_resonances_at_working_field():
    upper, lower = resonance_frequencies(C, 8.5)
    assert upper == 3108.0 and lower == 2632.0


def test_resonances_zero_field_degenerate():
    assert resonance_frequencies(C, 0.0) == (2870.0, 2870.0)


def test_resonances_reject_large_or_negative_field():
    with pytest.raises(ValueError):
        resonance_frequencies(C, 2870.0 / 28.0)
    with pytest.raises(ValueError):
        resonance_frequencies(C, -1.0)


@given(st.floats(0.0, 100.0))
def test_resonance_splitting_property(B):
    up, lo = resonance_frequencies(C, B)
    assert math.isclose(up - lo, 2 * C.gamma_e * B, abs_tol=1e-9)
    assert math.isclose(up + lo, 2 * C.D, rel_tol=1e-15)


def test_constants_validation():
    with pytest.raises(ValueError):
        PhysicalConstants(D=0)
    with pytest.raises(ValueError):
        FieldConfig(B_z=-1)


def test_ground_hamiltonian_spectrum():
    H = ground_state_hamiltonian(C, 8.5)
    e = np.diag(H).real / TWO_PI
    assert e[INDEX[+1]] - e[INDEX[0]] == pytest.approx(3108.0)
    assert e[INDEX[-1]] - e[INDEX[0]] == pytest.approx(2632.0)


def test_rotating_frame_resonance_condition():
    # the |0>,|-1> diagonal difference vanishes at omega_mw = 2 pi (D - gamma B)
    f = FieldConfig(B_z=8.5, omega_mw=TWO_PI * (C.D - C.gamma_e * 8.5), Omega_R=1.0)
    q = project(rotating_frame_hamiltonian(C, f), QubitProjection.MINUS)
    assert abs(q[0, 0] - q[1, 1]) < 1e-9
    assert q[0, 1] == pytest.approx(0.25)


@given(st.floats(0.0, 50.0), st.floats(-1e5, 1e5), st.floats(0.0, 1e3))
def test_rotating_frame_hermitian(B, w, Om):
    H = rotating_frame_hamiltonian(C, FieldConfig(B, w, Om))
    assert np.allclose(H, H.conj().T, atol=0)


def test_evolution_matches_fine_step_oracle():
    rng = np.random.default_rng(20240607)
    n = 100
    Hs = np.array([random_hermitian(rng, 3, TWO_PI * rng.uniform(0.1, 20.0)) for _ in range(n)])
    ts = rng.uniform(0.0, 2.0, n)
    rhos = np.array([random_density(rng, 3) for _ in range(n)])
    U = taylor_propagators(Hs, ts)
    ref = U @ rhos @ np.conj(np.swapaxes(U, 1, 2))
    got = np.array([evolve(H, r, t) for H, r, t in zip(Hs, rhos, ts)])
    assert np.max(np.abs(got - ref)) < 1e-6


def test_pi_pulse_swaps_populations_on_resonance():
    t_pi = 0.044
    f = FieldConfig(B_z=8.5, omega_mw=TWO_PI * (C.D - C.gamma_e * 8.5),
                    Omega_R=drive_from_rabi(TWO_PI * rabi_from_pi_time(t_pi)))
    H2 = project(rotating_frame_hamiltonian(C, f), QubitProjection.MINUS)
    rho = evolve(H2, pure_state(0, dim=2), t_pi)
    assert abs(populations(rho)[1] - 1.0) < 1e-8


def test_three_level_rabi_period():
    # drive 2 pi * 10 rad/us gives a |0> population period of 0.2 us on resonance
    f = FieldConfig(B_z=8.5, omega_mw=TWO_PI * (C.D - C.gamma_e * 8.5), Omega_R=TWO_PI * 10)
    H = rotating_frame_hamiltonian(C, f)
    p0 = [populations(evolve(H, pure_state(0), t))[INDEX[0]] for t in (0.0, 0.1, 0.2)]
    assert p0[0] == pytest.approx(1.0)
    assert p0[1] < 1e-4
    assert p0[2] > 1 - 1e-4


def test_generalized_rabi():
    assert generalized_rabi(3.0, 4.0) == 5.0
    with pytest.raises(ValueError):
        generalized_rabi(-1.0, 0.0)


def test_propagator_rejects_non_hermitian():
    with pytest.raises(ValueError):
        propagator(np.array([[0, 1], [0, 0]], dtype=complex), 1.0)


def test_evolve_rejects_negative_time():
    with pytest.raises(ValueError):
        evolve(np.eye(3), pure_state(0), -1.0)


def test_check_density_matrix():
    check_density_matrix(pure_state(-1))
    with pytest.raises(ValueError):
        check_density_matrix(2 * pure_state(0))
    with pytest.raises(ValueError):
        check_density_matrix(np.diag([1.5, -0.5, 0.0]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 10.0))
def test_evolution_preserves_density_matrix(seed, t):
    rng = np.random.default_rng(seed)
    rho = random_density(rng, 3)
    out = evolve(random_hermitian(rng, 3, 50.0), rho, t)
    check_density_matrix(out, tol=1e-9)
    assert np.linalg.eigvalsh(out) == pytest.approx(np.linalg.eigvalsh(rho), abs=1e-9)
