"""Spin-1 ground-state physics of the NV center.

Frequencies are stored as ordinary frequencies (MHz); Hamiltonians are
returned in angular units (rad/us) so that ``exp(-1j * H * t)`` with ``t``
in microseconds is dimensionless.

Drive convention
----------------
The rotating-frame Hamiltonian carries the drive as ``Omega/(2*sqrt(2)) * Sx``.
Restricted to one transition, the off-diagonal element is ``Omega/4`` and the
population oscillates as ``sin^2(Omega * t / 4)``.  The coherence models and
the fits work with the *effective* two-level Rabi frequency, for which
``t_pi = pi / Omega_eff``; the two are related by ``Omega = 2 * Omega_eff``
(see :func:`drive_from_rabi`).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi

# basis order is (|+1>, |0>, |-1>)
INDEX = {+1: 0, 0: 1, -1: 2}


@dataclass(frozen=True)
class PhysicalConstants:
    D: float = 2870.0  # MHz
    gamma_e: float = 28.0  # MHz/mT

    def __post_init__(self):
        if self.D <= 0 or self.gamma_e <= 0:
            raise ValueError("D and gamma_e must be positive")


@dataclass(frozen=True)
class FieldConfig:
    """Static field and microwave drive.

    ``omega_mw`` and ``Omega_R`` are angular frequencies in rad/us.
    """

    B_z: float = 0.0  # mT
    omega_mw: float = 0.0
    Omega_R: float = 0.0

    def __post_init__(self):
        if self.B_z < 0:
            raise ValueError("B_z must be >= 0")
        if self.Omega_R < 0:
            raise ValueError("Omega_R must be >= 0")


class QubitProjection(enum.Enum):
    """Which two-level subspace forms the qubit."""

    PLUS = +1
    MINUS = -1

    @property
    def indices(self) -> tuple[int, int]:
        return INDEX[0], INDEX[self.value]


@dataclass(frozen=True)
class SpinOperators:
    Sz: np.ndarray
    Sx: np.ndarray


def spin_operators() -> SpinOperators:
    s = 1.0 / np.sqrt(2.0)
    Sz = np.diag([1.0, 0.0, -1.0]).astype(complex)
    Sx = np.array([[0, s, 0], [s, 0, s], [0, s, 0]], dtype=complex)
    return SpinOperators(Sz=Sz, Sx=Sx)


def ground_state_hamiltonian(c: PhysicalConstants, B_z: float) -> np.ndarray:
    """Lab-frame ground-state Hamiltonian ``2*pi*(D Sz^2 + gamma_e B_z Sz)``."""
    if B_z < 0:
        raise ValueError("B_z must be >= 0")
    ops = spin_operators()
    return TWO_PI * (c.D * ops.Sz @ ops.Sz + c.gamma_e * B_z * ops.Sz)


def rotating_frame_hamiltonian(c: PhysicalConstants, f: FieldConfig) -> np.ndarray:
    """Hamiltonian in the frame rotating about z at ``f.omega_mw``.

    Sign convention: the frame term enters as
    ``+omega_mw * Sz``, so the |0> <-> |-1> branch is resonant when
    ``omega_mw = 2*pi*(D - gamma_e*B_z)``.
    """
    ops = spin_operators()
    return (
        TWO_PI * c.D * ops.Sz @ ops.Sz
        + (TWO_PI * c.gamma_e * f.B_z + f.omega_mw) * ops.Sz
        + f.Omega_R / (2.0 * np.sqrt(2.0)) * ops.Sx
    )


def resonance_frequencies(c: PhysicalConstants, B_z: float) -> tuple[float, float]:
    """Return the (upper, lower) ODMR transition frequencies in MHz."""
    if B_z < 0:
        raise ValueError("B_z must be >= 0")
    split = c.gamma_e * B_z
    lower = c.D - split
    if lower <= 0:
        raise ValueError(
            f"lower branch D - gamma_e*B_z = {lower:g} MHz is not positive; "
            "field too large for the secular model"
        )
    return c.D + split, lower


def generalized_rabi(Omega_R: float, Delta: float) -> float:
    if np.any(np.asarray(Omega_R) < 0):
        raise ValueError("Omega_R must be >= 0")
    return np.hypot(Omega_R, Delta)


def drive_from_rabi(omega_eff: float) -> float:
    """Hamiltonian drive amplitude producing a two-level Rabi rate ``omega_eff``."""
    return 2.0 * omega_eff


def rabi_from_pi_time(t_pi: float) -> float:
    """Ordinary Rabi frequency (MHz) for a pi-time in microseconds."""
    return 1.0 / (2.0 * t_pi)


def project(H: np.ndarray, which: QubitProjection) -> np.ndarray:
    """2x2 sub-block of a 3x3 operator over the selected qubit subspace."""
    i, j = which.indices
    idx = [i, j]
    return H[np.ix_(idx, idx)]


def check_density_matrix(rho: np.ndarray, tol: float = 1e-10) -> None:
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > tol:
        raise ValueError("density matrix trace differs from 1")
    if np.min(np.linalg.eigvalsh(rho)) < -tol:
        raise ValueError("density matrix has negative eigenvalues")


def pure_state(level: int, dim: int = 3) -> np.ndarray:
    """Density matrix of a basis state; ``level`` is m_s for dim 3, index otherwise."""
    k = INDEX[level] if dim == 3 else level
    rho = np.zeros((dim, dim), dtype=complex)
    rho[k, k] = 1.0
    return rho


def propagator(H: np.ndarray, t: float) -> np.ndarray:
    """``exp(-i H t)`` for Hermitian ``H`` via eigendecomposition."""
    H = np.asarray(H, dtype=complex)
    if np.max(np.abs(H - H.conj().T), initial=0.0) > 1e-8:
        raise ValueError("Hamiltonian is not Hermitian")
    w, V = np.linalg.eigh(H)
    return (V * np.exp(-1j * w * t)) @ V.conj().T


def evolve(H: np.ndarray, rho: np.ndarray, t: float) -> np.ndarray:
    """Propagate ``rho`` under the time-independent ``H`` for time ``t`` (us)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    U = propagator(H, t)
    out = U @ rho @ U.conj().T
    # remove rounding asymmetry
    return 0.5 * (out + out.conj().T)


def populations(rho: np.ndarray) -> np.ndarray:
    return np.real(np.diag(rho))
