"""Seven-level rate-equation model of optical pumping and readout.

Levels (index order): ground m_s = 0, +1, -1; excited m_s = 0, +1, -1; one
merged singlet metastable.  Rates are in 1/ns, times in ns.

The intersystem-crossing rates and the singlet branching ratio are not
measured quantities here; the defaults are modelling choices that give
strong spin polarization and a positive readout contrast.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import expm, null_space

G0, GP, GM, E0, EP, EM, SINGLET = range(7)
GROUND = (G0, GP, GM)
EXCITED = (E0, EP, EM)
LABELS = ("g0", "g+1", "g-1", "e0", "e+1", "e-1", "singlet")


@dataclass(frozen=True)
class LevelScheme:
    radiative_lifetime: float = 12.9  # ns
    metastable_lifetime: float = 200.0  # ns, inside the 142-462 ns window
    isc_rate_pm1: float = 0.09  # 1/ns, modelling default
    isc_rate_0: float = 0.01  # 1/ns, modelling default
    singlet_branching_to_0: float = 0.75  # modelling default
    pump_rate: float = 0.002  # 1/ns, well below saturation

    def __post_init__(self):
        rates = (self.isc_rate_pm1, self.isc_rate_0, self.pump_rate)
        if min(rates) < 0:
            raise ValueError("rates must be >= 0")
        if self.radiative_lifetime <= 0 or self.metastable_lifetime <= 0:
            raise ValueError("lifetimes must be > 0")
        if not 0.0 <= self.singlet_branching_to_0 <= 1.0:
            raise ValueError("singlet_branching_to_0 must be in [0, 1]")

    @property
    def spin_selective(self) -> bool:
        return self.isc_rate_pm1 > self.isc_rate_0

    def symmetric(self) -> "LevelScheme":
        """Same scheme with spin-independent ISC and unbiased singlet decay."""
        return LevelScheme(
            radiative_lifetime=self.radiative_lifetime,
            metastable_lifetime=self.metastable_lifetime,
            isc_rate_pm1=self.isc_rate_0,
            isc_rate_0=self.isc_rate_0,
            singlet_branching_to_0=1.0 / 3.0,
            pump_rate=self.pump_rate,
        )


def rate_matrix(s: LevelScheme, laser_on: bool) -> np.ndarray:
    """Generator ``G`` with ``dp/dt = G p``; ``G[i, j]`` is the rate j -> i."""
    if laser_on and s.pump_rate <= 0:
        raise ValueError("laser_on requires a positive pump_rate")
    G = np.zeros((7, 7))

    def add(src, dst, rate):
        G[dst, src] += rate
        G[src, src] -= rate

    k_r = 1.0 / s.radiative_lifetime
    for g, e in zip(GROUND, EXCITED):
        if laser_on:
            add(g, e, s.pump_rate)
        add(e, g, k_r)
    add(E0, SINGLET, s.isc_rate_0)
    add(EP, SINGLET, s.isc_rate_pm1)
    add(EM, SINGLET, s.isc_rate_pm1)
    k_s = 1.0 / s.metastable_lifetime
    b0 = s.singlet_branching_to_0
    add(SINGLET, G0, k_s * b0)
    add(SINGLET, GP, k_s * (1.0 - b0) / 2.0)
    add(SINGLET, GM, k_s * (1.0 - b0) / 2.0)
    return G


def _check_populations(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (7,):
        raise ValueError("population vector must have 7 entries")
    if abs(p.sum() - 1.0) > 1e-9 or p.min() < -1e-9:
        raise ValueError("populations must lie on the probability simplex")
    return p


def propagate(s: LevelScheme, p0, t: float, laser_on: bool) -> np.ndarray:
    if t < 0:
        raise ValueError("t must be >= 0")
    p0 = _check_populations(p0)
    return expm(rate_matrix(s, laser_on) * t) @ p0


def steady_state(s: LevelScheme, laser_on: bool = True) -> np.ndarray:
    """Normalized null vector of the generator.

    Raises ``ValueError`` when the null space is not one-dimensional, which
    is the case with the laser off (any ground distribution is stationary).
    """
    ns = null_space(rate_matrix(s, laser_on), rcond=1e-12)
    if ns.shape[1] != 1:
        raise ValueError(f"steady state is not unique (null space dim {ns.shape[1]})")
    v = ns[:, 0]
    v = v / v.sum()
    return np.clip(v, 0.0, None) / np.clip(v, 0.0, None).sum()


def ground_state(m_s: int) -> np.ndarray:
    p = np.zeros(7)
    p[{0: G0, +1: GP, -1: GM}[m_s]] = 1.0
    return p


def thermal_ground() -> np.ndarray:
    p = np.zeros(7)
    p[list(GROUND)] = 1.0 / 3.0
    return p


def readout_trace(s: LevelScheme, p0, window: float, n_samples: int = 401):
    """Radiative flux (photons/ns) during a laser-on readout window.

    Returns ``(times, flux)``; flux is the excited-state population times the
    radiative rate, summed over spin.
    """
    if window <= 0:
        raise ValueError("window must be > 0")
    p0 = _check_populations(p0)
    times = np.linspace(0.0, window, n_samples)
    step = expm(rate_matrix(s, True) * (times[1] - times[0]))
    pops = np.empty((n_samples, 7))
    pops[0] = p0
    for i in range(1, n_samples):
        pops[i] = step @ pops[i - 1]
    flux = pops[:, list(EXCITED)].sum(axis=1) / s.radiative_lifetime
    return times, flux


def integrated_counts(s: LevelScheme, p0, window: float) -> float:
    times, flux = readout_trace(s, p0, window)
    return float(trapezoid(flux, times))


def readout_contrast(s: LevelScheme, window: float = 300.0, m_s: int = -1) -> float:
    """Fractional PL drop of an |m_s> start relative to an |0> start."""
    bright = integrated_counts(s, ground_state(0), window)
    dark = integrated_counts(s, ground_state(m_s), window)
    return 1.0 - dark / bright


def pumped_polarization(s: LevelScheme, duration: float = 350_000.0, p0=None) -> float:
    """Fraction of the ground manifold in |0> after a pump pulse of ``duration`` ns.

    Excited and singlet populations are allowed to relax (laser off) before
    the fraction is taken, since the microwave block follows a dark interval.
    """
    p = propagate(s, thermal_ground() if p0 is None else p0, duration, True)
    p = propagate(s, p, 20.0 * s.metastable_lifetime, False)
    return float(p[G0] / p[list(GROUND)].sum())
