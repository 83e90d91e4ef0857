"""Closed-form coherence signals: Rabi decay, T1 relaxation, Hahn echo.

All three are contrast-positive: a larger value means more population moved
out of |0>.  ``offset`` and ``amplitude`` map the normalized shape onto data.

Units: Rabi time and T2* in us, Rabi/detuning frequencies in MHz; T1 and its
delay in ms; echo tau and T2 in us, hyperfine frequencies in MHz.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .physics import TWO_PI, generalized_rabi


@dataclass(frozen=True)
class RabiParams:
    Omega_R: float  # MHz (ordinary)
    T2_star: float  # us
    Delta: float = 0.0  # MHz
    amplitude: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if self.T2_star <= 0:
            raise ValueError("T2_star must be > 0")
        if self.Omega_R < 0:
            raise ValueError("Omega_R must be >= 0")
        if self.amplitude <= 0:
            raise ValueError("amplitude must be > 0")

    @property
    def t_pi(self) -> float:
        """pi-pulse duration in us, from the generalized Rabi frequency."""
        return 1.0 / (2.0 * generalized_rabi(self.Omega_R, self.Delta))


@dataclass(frozen=True)
class T1Params:
    T1: float  # ms
    amplitude: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if self.T1 <= 0:
            raise ValueError("T1 must be > 0")


@dataclass(frozen=True)
class EchoParams:
    """Hahn-echo parameters; ``f_a``/``f_b`` are ordinary frequencies in MHz."""

    T2: float  # us
    n: float
    k: float
    f_a: float
    f_b: float
    amplitude: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if self.T2 <= 0:
            raise ValueError("T2 must be > 0")
        if self.n <= 0:
            raise ValueError("n must be > 0")
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if not self.f_a > self.f_b >= 0:
            raise ValueError("need f_a > f_b >= 0")

    @property
    def omega_a(self) -> float:
        return TWO_PI * self.f_a

    @property
    def omega_b(self) -> float:
        return TWO_PI * self.f_b


def rabi_signal(t, p: RabiParams):
    t = np.asarray(t, dtype=float)
    w = TWO_PI * generalized_rabi(p.Omega_R, p.Delta)
    return p.offset + p.amplitude * np.exp(-t / p.T2_star) * np.sin(w * t / 2.0) ** 2


def t1_signal(t, p: T1Params):
    t = np.asarray(t, dtype=float)
    return p.offset + p.amplitude * np.exp(-t / p.T1)


def echo_bracket(tau, omega_a: float, omega_b: float, k: float):
    """Hyperfine modulation factor, evaluated as the five-term cosine sum."""
    tau = np.asarray(tau, dtype=float)
    inner = (
        2.0
        - 2.0 * np.cos(omega_a * tau)
        - 2.0 * np.cos(omega_b * tau)
        + np.cos((omega_a + omega_b) * tau)
        + np.cos((omega_a - omega_b) * tau)
    )
    return 1.0 - 0.25 * k * inner


def hahn_echo_signal(tau, p: EchoParams):
    tau = np.asarray(tau, dtype=float)
    envelope = np.exp(-((2.0 * tau / p.T2) ** p.n))
    return p.offset + p.amplitude * envelope * echo_bracket(tau, p.omega_a, p.omega_b, p.k)


@dataclass(frozen=True)
class CoherenceHierarchy:
    T1: float  # ms
    T2: float  # us
    T2_star: float  # us


@dataclass(frozen=True)
class HierarchyVerdict:
    passed: bool
    t1_ge_t2: bool
    t2_gt_t2star: bool
    failures: tuple[str, ...] = ()
    # margins in sigmas; None when uncertainties were not supplied
    margins: dict = field(default_factory=dict)

    def __str__(self):
        if self.passed:
            return "PASS: T1 >= T2 > T2*"
        return "FAIL: " + "; ".join(self.failures)


def check_hierarchy(h: CoherenceHierarchy) -> HierarchyVerdict:
    """Check ``T1 >= T2 > T2*`` after converting T1 to microseconds."""
    if min(h.T1, h.T2, h.T2_star) <= 0:
        raise ValueError("coherence times must be positive")
    t1_us = h.T1 * 1e3
    ok1 = t1_us >= h.T2
    ok2 = h.T2 > h.T2_star
    failures = []
    if not ok1:
        failures.append(f"T1 ({t1_us:g} us) < T2 ({h.T2:g} us)")
    if not ok2:
        failures.append(f"T2 ({h.T2:g} us) <= T2* ({h.T2_star:g} us)")
    return HierarchyVerdict(ok1 and ok2, ok1, ok2, tuple(failures))
