"""Virtual instrument: three-image measurement blocks and averaged sweeps.

Each block holds a signal image (full sequence), a reference image (same
timing, MW off) and a background image (MW and laser off), reduced to
region-averaged counts.  A sweep point is the mean of ``n_blocks``
normalized blocks ``(S - B) / (R - B)``.

Sweep variables: Rabi MW duration in ns, T1 delay in ms, echo tau in us,
ODMR frequency in MHz.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtri
from scipy.stats import poisson

from . import pumping
from .coherence import RabiParams, hahn_echo_signal, rabi_signal, t1_signal
from .physics import PhysicalConstants, rabi_from_pi_time, resonance_frequencies
from .pulses import SequenceKind

SWEEP_AXIS = {
    SequenceKind.RABI: ("mw_duration", "ns"),
    SequenceKind.T1: ("delay", "ms"),
    SequenceKind.HAHN_ECHO: ("tau", "us"),
    SequenceKind.ODMR: ("mw_frequency", "MHz"),
}

_KIND_CODE = {SequenceKind.RABI: 1, SequenceKind.T1: 2, SequenceKind.HAHN_ECHO: 3, SequenceKind.ODMR: 4}

# photon counts above this use the normal approximation
NORMAL_APPROX_COUNTS = 1000.0


class DegenerateNormalization(ValueError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    photon_budget: float = 1e4  # counts per image; 1/sqrt -> 1% shot noise
    background_level: float = 500.0
    drift_rate: float = 0.0
    rng_seed: int = 0
    enabled: bool = True

    def __post_init__(self):
        if not self.photon_budget > 0:
            raise ValueError("photon_budget must be > 0")
        if self.background_level < 0 or self.drift_rate < 0:
            raise ValueError("background_level and drift_rate must be >= 0")

    @classmethod
    def noiseless(cls, **kw) -> "NoiseModel":
        return cls(enabled=False, **kw)


@dataclass(frozen=True)
class Readout:
    """Optical readout seen by the camera.

    ``baseline`` is the relative PL with no MW; a transfer fraction ``m``
    lowers it to ``baseline - contrast * m``.
    """

    baseline: float = 1.0
    contrast: float = 0.3

    def __post_init__(self):
        if not 0 <= self.contrast <= self.baseline:
            raise ValueError("need 0 <= contrast <= baseline")

    @property
    def depth(self) -> float:
        """Normalized signal drop for a full transfer."""
        return self.contrast / self.baseline

    @classmethod
    def from_scheme(cls, scheme: pumping.LevelScheme | None = None,
                    pump_duration: float = 350_000.0, window: float = 300.0) -> "Readout":
        scheme = scheme or pumping.LevelScheme()
        p0 = pumping.pumped_polarization(scheme, pump_duration)
        c_r = pumping.readout_contrast(scheme, window)
        p1 = (1.0 - p0) / 2.0
        return cls(baseline=(1.0 - c_r) + c_r * p0, contrast=c_r * max(p0 - p1, 0.0))


@functools.lru_cache(maxsize=None)
def default_readout() -> Readout:
    """Readout derived from the default optical-pumping level scheme."""
    return Readout.from_scheme()


@dataclass(frozen=True)
class MeasurementBlock:
    signal_counts: float
    reference_counts: float
    background_counts: float


@dataclass(frozen=True)
class OdmrParams:
    B_z: float  # mT
    linewidth: float = 10.0  # MHz FWHM, modelling default
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)


class PowerCalibration:
    """MW power (dBm) -> (Rabi frequency MHz, T2* us), log-linear in dBm."""

    def __init__(self, table: dict | None = None):
        if table is None:
            f40 = rabi_from_pi_time(0.044)
            # drive amplitude scales as sqrt(power)
            table = {30.0: (f40 / math.sqrt(10.0), 0.350), 40.0: (f40, 0.190)}
        self.table = {float(k): (float(v[0]), float(v[1])) for k, v in sorted(table.items())}
        powers = list(self.table)
        rabis = [v[0] for v in self.table.values()]
        if len(powers) < 1 or any(b <= a for a, b in zip(rabis, rabis[1:])):
            raise ValueError("Rabi frequency must increase strictly with power")

    def __call__(self, power_dbm: float) -> tuple[float, float]:
        powers = np.array(list(self.table))
        vals = np.log(np.array(list(self.table.values())))
        if len(powers) == 1:
            return tuple(np.exp(vals[0]))
        i = int(np.clip(np.searchsorted(powers, power_dbm) - 1, 0, len(powers) - 2))
        w = (power_dbm - powers[i]) / (powers[i + 1] - powers[i])
        out = np.exp(vals[i] + w * (vals[i + 1] - vals[i]))
        return float(out[0]), float(out[1])

    def rabi_params(self, power_dbm: float, **kw) -> RabiParams:
        omega, t2s = self(power_dbm)
        return RabiParams(Omega_R=omega, T2_star=t2s, **kw)


def model_value(kind, x, truth):
    """Population-transfer fraction (contrast-positive model) at sweep value ``x``."""
    kind = SequenceKind.parse(kind)
    x = np.asarray(x, dtype=float)
    if kind is SequenceKind.RABI:
        return rabi_signal(x * 1e-3, truth)
    if kind is SequenceKind.T1:
        return t1_signal(x, truth)
    if kind is SequenceKind.HAHN_ECHO:
        return hahn_echo_signal(x, truth)
    return odmr_profile(x, truth)


def odmr_profile(freqs, p: OdmrParams):
    """Transfer fraction vs MW frequency: Lorentzian dips at both branches."""
    freqs = np.asarray(freqs, dtype=float)
    half = p.linewidth / 2.0
    untouched = np.ones_like(freqs)
    for f0 in resonance_frequencies(p.constants, p.B_z):
        untouched = untouched * (1.0 - half**2 / ((freqs - f0) ** 2 + half**2))
    return 1.0 - untouched


def expected_normalized(kind, x, truth, readout: Readout | None = None):
    """Noiseless normalized signal."""
    readout = readout or default_readout()
    return 1.0 - readout.depth * model_value(kind, x, truth)


def _rng(seed: int, kind: SequenceKind, x: float) -> np.random.Generator:
    bits = int(np.float64(x).view(np.uint64))
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(_KIND_CODE[kind], bits)))


def _count(lam: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Counting noise by inversion of uniform draws (Poisson, normal above 1000)."""
    lam = np.asarray(lam, dtype=float)
    u = np.clip(u, 1e-300, None)
    out = lam + np.sqrt(lam) * ndtri(u)
    small = lam < NORMAL_APPROX_COUNTS
    if small.any():
        ls = lam[small]
        out[small] = np.where(ls > 0, poisson.ppf(u[small], np.where(ls > 0, ls, 1.0)), 0.0)
    return out


def _blocks(kind, x, m, readout, noise, n_blocks):
    """Counts arrays (n_blocks, 3) for one sweep point; block b uses row b."""
    b = np.arange(n_blocks)
    drift = 1.0 + noise.drift_rate * b
    lam = np.empty((n_blocks, 3))
    lam[:, 0] = noise.background_level + noise.photon_budget * drift * (readout.baseline - readout.contrast * m)
    lam[:, 1] = noise.background_level + noise.photon_budget * drift * readout.baseline
    lam[:, 2] = noise.background_level
    lam = np.clip(lam, 0.0, None)
    if not noise.enabled:
        return lam
    u = _rng(noise.rng_seed, kind, x).random((n_blocks, 3))
    return _count(lam, u)


def measure_block(kind, x: float, truth, noise: NoiseModel, block_index: int = 0,
                  readout: Readout | None = None) -> MeasurementBlock:
    """Acquire one signal/reference/background triple at sweep value ``x``.

    Counts are a pure function of ``(noise.rng_seed, kind, x, block_index)``
    and match block ``block_index`` of :func:`run_sweep` at the same point.
    """
    kind = SequenceKind.parse(kind)
    if x < 0:
        raise ValueError("sweep value must be >= 0")
    readout = readout or default_readout()
    m = float(model_value(kind, x, truth))
    row = _blocks(kind, x, m, readout, noise, block_index + 1)[block_index]
    return MeasurementBlock(*map(float, row))


def normalize(b: MeasurementBlock) -> float:
    den = b.reference_counts - b.background_counts
    if den <= 0:
        raise DegenerateNormalization("reference does not exceed background")
    return (b.signal_counts - b.background_counts) / den


@dataclass(frozen=True)
class SweepPoint:
    x: float
    mean: float
    stderr: float
    n: int

    @property
    def valid(self) -> bool:
        return self.n >= 1 and math.isfinite(self.mean)


@dataclass
class SweepResult:
    kind: SequenceKind
    variable: str
    units: str
    points: list
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        xs = [p.x for p in self.points]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("sweep values must be strictly increasing")

    @property
    def x(self) -> np.ndarray:
        return np.array([p.x for p in self.points])

    @property
    def mean(self) -> np.ndarray:
        return np.array([p.mean for p in self.points])

    @property
    def stderr(self) -> np.ndarray:
        return np.array([p.stderr for p in self.points])

    @property
    def n(self) -> np.ndarray:
        return np.array([p.n for p in self.points])

    def valid_points(self) -> "SweepResult":
        return SweepResult(self.kind, self.variable, self.units,
                           [p for p in self.points if p.valid], dict(self.metadata))

    def to_text(self) -> str:
        head = {"kind": self.kind.value, "sweep": f"{self.variable} [{self.units}]"}
        head.update(self.metadata)
        lines = ["# nvlab sweep v1"]
        lines += [f"# {k}: {json.dumps(v, sort_keys=True)}" for k, v in head.items()]
        lines.append("x, mean, stderr, n")
        for p in self.points:
            lines.append(f"{p.x:.17e}, {p.mean:.17e}, {p.stderr:.17e}, {p.n:d}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_text())
        return path

    @classmethod
    def from_text(cls, text: str) -> "SweepResult":
        meta, points = {}, []
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if ":" in body:
                    key, _, value = body.partition(":")
                    meta[key.strip()] = json.loads(value)
                continue
            if line.startswith("x,"):
                continue
            x, mean, se, n = (s.strip() for s in line.split(","))
            points.append(SweepPoint(float(x), float(mean), float(se), int(n)))
        if "kind" not in meta or "sweep" not in meta:
            raise ValueError("sweep file lacks kind/sweep header")
        kind = SequenceKind.parse(meta.pop("kind"))
        variable, _, units = meta.pop("sweep").partition(" ")
        return cls(kind, variable, units.strip("[]"), points, meta)

    @classmethod
    def load(cls, path) -> "SweepResult":
        return cls.from_text(Path(path).read_text())


def truth_dict(truth) -> dict:
    d = asdict(truth)
    if isinstance(truth, OdmrParams):
        d["constants"] = asdict(truth.constants)
    return d


def _point(kind, x, truth, noise, n_blocks, readout) -> SweepPoint:
    m = float(model_value(kind, x, truth))
    counts = _blocks(kind, x, m, readout, noise, n_blocks)
    den = counts[:, 1] - counts[:, 2]
    ok = den > 0
    if not ok.any():
        return SweepPoint(float(x), math.nan, math.nan, 0)
    vals = (counts[ok, 0] - counts[ok, 2]) / den[ok]
    n = int(ok.sum())
    se = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return SweepPoint(float(x), float(np.mean(vals)), se, n)


def run_sweep(kind, xs, truth, noise: NoiseModel, n_blocks: int = 150,
              readout: Readout | None = None, metadata: dict | None = None) -> SweepResult:
    """Average ``n_blocks`` normalized blocks at each sweep value.

    Blocks whose reference does not exceed the background are dropped; a
    point with no usable block has ``n = 0`` and a NaN mean.
    """
    kind = SequenceKind.parse(kind)
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        raise ValueError("empty sweep grid")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("sweep grid must be strictly increasing")
    if np.any(xs < 0):
        raise ValueError("sweep values must be >= 0")
    if n_blocks < 1:
        raise ValueError("n_blocks must be >= 1")
    readout = readout or default_readout()
    points = [_point(kind, x, truth, noise, n_blocks, readout) for x in xs]
    variable, units = SWEEP_AXIS[kind]
    meta = {"seed": noise.rng_seed, "n_blocks": n_blocks, "truth": truth_dict(truth),
            "readout": asdict(readout), "noise": asdict(noise)}
    meta.update(metadata or {})
    return SweepResult(kind, variable, units, points, meta)


def run_odmr_scan(freqs, B_z: float, linewidth: float = 10.0,
                  truth: PhysicalConstants | None = None, noise: NoiseModel | None = None,
                  n_blocks: int = 150, readout: Readout | None = None,
                  metadata: dict | None = None) -> SweepResult:
    params = OdmrParams(B_z=B_z, linewidth=linewidth, constants=truth or PhysicalConstants())
    meta = {"branches_MHz": list(resonance_frequencies(params.constants, B_z))}
    meta.update(metadata or {})
    return run_sweep(SequenceKind.ODMR, freqs, params, noise or NoiseModel(), n_blocks,
                     readout, meta)


def find_dips(sweep: SweepResult, min_sigma: float = 5.0, min_depth: float = 0.0) -> list[float]:
    """Dip centers: local minima below the half-depth level, parabola-refined.

    A dip must sit at least ``min_sigma`` standard errors (and ``min_depth``)
    below the far-off-resonance level, estimated as the sweep median.
    """
    s = sweep.valid_points()
    x, y, se = s.x, s.mean, s.stderr
    if len(x) < 3:
        return []
    level = float(np.median(y))
    noise = float(np.median(se)) if np.any(se > 0) else 0.0
    depth = level - y.min()
    if depth <= max(min_sigma * noise, min_depth) or depth <= 0:
        return []
    below = y < level - depth / 2.0
    dips = []
    i = 0
    while i < len(x):
        if not below[i]:
            i += 1
            continue
        j = i
        while j < len(x) and below[j]:
            j += 1
        k = i + int(np.argmin(y[i:j]))
        if level - y[k] > min_sigma * noise:
            dips.append(_parabola_vertex(x, y, k))
        i = j
    return dips


def _parabola_vertex(x, y, k) -> float:
    if k == 0 or k == len(x) - 1:
        return float(x[k])
    x0, x1, x2 = x[k - 1:k + 2]
    y0, y1, y2 = y[k - 1:k + 2]
    den = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / den
    b = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / den
    if a <= 0:
        return float(x1)
    return float(-b / (2 * a))
