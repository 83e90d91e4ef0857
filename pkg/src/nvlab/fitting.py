"""Damped least-squares recovery of coherence parameters from sweeps.

The fitter works on the contrast-positive signal ``1 - normalized`` so that
every model has a positive amplitude.  Sweep units are converted to the
model units (Rabi durations ns -> us); reported estimates are in:

========  ==========================================
rabi      Omega_R, Delta [MHz]; T2_star [us]
t1        T1 [ms]
echo      T2 [us]; f_a, f_b [MHz]; n, k dimensionless
========  ==========================================
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coherence import (CoherenceHierarchy, HierarchyVerdict, RabiParams, T1Params,
                        check_hierarchy, echo_bracket, rabi_signal, t1_signal)
from .experiment import SweepResult
from .physics import TWO_PI
from .pulses import SequenceKind


class FitError(RuntimeError):
    pass


class DegenerateDataError(FitError):
    pass


class SingularMatrixError(FitError):
    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition number {condition:.3g})")
        self.condition = condition


# ---------------------------------------------------------------- models


def _rabi(x, p):
    return rabi_signal(x, RabiParams(Omega_R=abs(p[0]), Delta=p[1], T2_star=p[2],
                                     amplitude=max(p[3], 1e-300), offset=p[4]))


def _t1(x, p):
    return t1_signal(x, T1Params(T1=p[0], amplitude=p[1], offset=p[2]))


def _echo(x, p):
    T2, n, k, f_a, f_b, amp, off = p
    envelope = np.exp(-((2.0 * x / T2) ** n))
    return off + amp * envelope * echo_bracket(x, TWO_PI * f_a, TWO_PI * f_b, k)


@dataclass(frozen=True)
class Model:
    name: str
    kind: SequenceKind
    params: tuple
    func: object
    bounds: dict
    x_scale: float = 1.0  # sweep units -> model units


INF = np.inf
MODELS = {
    "rabi": Model("rabi", SequenceKind.RABI, ("Omega_R", "Delta", "T2_star", "amplitude", "offset"),
                  _rabi, {"Omega_R": (0.0, INF), "Delta": (-INF, INF), "T2_star": (1e-6, INF),
                          "amplitude": (1e-9, INF), "offset": (-INF, INF)}, 1e-3),
    "t1": Model("t1", SequenceKind.T1, ("T1", "amplitude", "offset"), _t1,
                {"T1": (1e-9, INF), "amplitude": (1e-9, INF), "offset": (-INF, INF)}),
    "echo": Model("echo", SequenceKind.HAHN_ECHO, ("T2", "n", "k", "f_a", "f_b", "amplitude", "offset"),
                  _echo, {"T2": (1e-6, INF), "n": (0.3, 4.0), "k": (0.0, 4.0), "f_a": (1e-6, INF),
                          "f_b": (0.0, INF), "amplitude": (1e-9, INF), "offset": (-INF, INF)}),
}

UNITS = {"Omega_R": "MHz", "Delta": "MHz", "T2_star": "us", "T1": "ms", "T2": "us",
         "f_a": "MHz", "f_b": "MHz", "n": "", "k": "", "amplitude": "", "offset": ""}

_MODEL_FOR_KIND = {m.kind: name for name, m in MODELS.items()}


# ---------------------------------------------------------------- problem


@dataclass
class FitProblem:
    model: str
    data: SweepResult
    bounds: dict = field(default_factory=dict)
    fixed: dict = field(default_factory=dict)
    weights: str = "inverse-variance"
    initial: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; choose from {sorted(MODELS)}")
        spec = MODELS[self.model]
        unknown = (set(self.bounds) | set(self.fixed) | set(self.initial)) - set(spec.params)
        if unknown:
            raise ValueError(f"unknown parameters for {self.model}: {sorted(unknown)}")
        if self.weights not in ("uniform", "inverse-variance"):
            raise ValueError("weights must be 'uniform' or 'inverse-variance'")
        merged = dict(spec.bounds)
        merged.update(self.bounds)
        for name, (lo, hi) in merged.items():
            if not lo < hi:
                raise ValueError(f"bounds for {name} are not ordered")
        self.bounds = merged
        if len(self.x) < len(self.free) + 2:
            raise ValueError("need at least two more data points than free parameters")

    @classmethod
    def create(cls, data: SweepResult, model: str | None = None, free_delta: bool = False,
               **kw) -> "FitProblem":
        """Problem with the model implied by the sweep kind; Rabi detuning fixed at 0."""
        model = model or _MODEL_FOR_KIND.get(data.kind)
        if model is None:
            raise ValueError(f"no fit model for {data.kind.value} sweeps")
        fixed = dict(kw.pop("fixed", {}))
        if model == "rabi" and not free_delta:
            fixed.setdefault("Delta", 0.0)
        return cls(model, data, fixed=fixed, **kw)

    @property
    def spec(self) -> Model:
        return MODELS[self.model]

    @property
    def free(self) -> list[str]:
        return [p for p in self.spec.params if p not in self.fixed]

    @property
    def _valid(self):
        return self.data.valid_points()

    @property
    def x(self) -> np.ndarray:
        return self._valid.x * self.spec.x_scale

    @property
    def y(self) -> np.ndarray:
        return 1.0 - self._valid.mean

    @property
    def sigma(self) -> np.ndarray:
        se = self._valid.stderr
        if self.weights == "uniform" or not np.all(np.isfinite(se)) or np.any(se <= 0):
            return np.ones_like(se)
        return se

    def full_vector(self, free_values) -> np.ndarray:
        vals = dict(zip(self.free, free_values))
        vals.update(self.fixed)
        return np.array([vals[p] for p in self.spec.params], dtype=float)


# ---------------------------------------------------------------- initial guess


def _uniform(x, y):
    if len(x) > 2 and np.ptp(np.diff(x)) > 1e-9 * np.ptp(x):
        xu = np.linspace(x[0], x[-1], len(x))
        return xu, np.interp(xu, x, y)
    return x, y


def dominant_frequency(x, y, min_bins: float = 1.5, pad: int = 8,
                       differentiate: bool = False) -> float:
    """Peak of the zero-padded spectrum of mean-subtracted ``y`` (cycles per x unit).

    Frequencies below ``min_bins`` native bins are ignored, which keeps a slow
    decay from masking the oscillation.  ``differentiate`` takes the spectrum
    of the first difference instead, weighting each component by frequency.
    """
    xu, yu = _uniform(np.asarray(x, float), np.asarray(y, float))
    dx = xu[1] - xu[0]
    if differentiate:
        yu = np.diff(yu)
        xu = xu[:-1]
    nfft = pad * len(xu)
    spec = np.abs(np.fft.rfft(yu - yu.mean(), nfft))
    freqs = np.fft.rfftfreq(nfft, dx)
    resolution = 1.0 / (len(xu) * dx)
    mask = freqs >= min_bins * resolution
    if not mask.any():
        raise DegenerateDataError("sweep too short to resolve an oscillation")
    i = np.flatnonzero(mask)[np.argmax(spec[mask])]
    return float(freqs[i])


def _decay_time(x, y, offset):
    """1/e time from a log-linear fit of ``y - offset``."""
    z = y - offset
    top = z.max()
    keep = z > 0.05 * top
    if keep.sum() < 2:
        return float(np.ptp(x)) / 3.0
    slope, _ = np.polyfit(x[keep], np.log(z[keep]), 1)
    if slope >= 0:
        return float(np.ptp(x))
    return float(-1.0 / slope)


def _upper_envelope(x, y, period):
    """Running maximum over one oscillation period, sampled at the local maxima."""
    xs, ys = [], []
    half = period / 2.0
    for i, xi in enumerate(x):
        win = np.abs(x - xi) <= half
        if y[i] >= y[win].max():
            xs.append(xi)
            ys.append(y[i])
    return np.array(xs), np.array(ys)


def initial_guess(problem: FitProblem) -> dict:
    x, y = problem.x, problem.y
    span = float(np.ptp(y))
    if span <= 1e-12 * (abs(float(np.mean(y))) + 1.0):
        raise DegenerateDataError("data are flat; nothing to fit")
    tail = float(np.median(y[-max(3, len(y) // 10):]))
    if problem.model == "t1":
        offset = float(y.min())
        guess = {"T1": _decay_time(x, y, offset), "amplitude": max(float(y.max()) - offset, span * 1e-3),
                 "offset": offset}
    elif problem.model == "rabi":
        offset = float(min(y[0], y.min()))
        f = dominant_frequency(x, y)
        ex, ey = _upper_envelope(x, y, 1.0 / f)
        T = _decay_time(ex, ey, offset) if len(ex) >= 2 else float(np.ptp(x)) / 3.0
        amp = (float(y.max()) - offset) * math.exp(1.0 / (2.0 * f * T))
        guess = {"Omega_R": f, "Delta": 0.0, "T2_star": T, "amplitude": max(amp, span * 1e-3),
                 "offset": offset}
    else:
        offset = tail
        T_e = _decay_time(x, y, offset)
        amp = max(float(y[0]) - offset, span * 1e-3)
        resid = y - offset - amp * np.exp(-x / T_e)
        f_a = dominant_frequency(x, resid, differentiate=True)
        # lowest resolvable frequency on the grid
        f_b = min(1.0 / float(np.ptp(x)), 0.25 * f_a)
        guess = {"T2": 2.0 * T_e, "n": 1.0, "k": 1.0, "f_a": f_a, "f_b": f_b,
                 "amplitude": amp, "offset": offset}
        if "f_b" not in problem.bounds or problem.bounds["f_b"] == MODELS["echo"].bounds["f_b"]:
            problem.bounds = dict(problem.bounds, f_b=(0.0, 0.5 * f_a))
    guess.update(problem.fixed)
    if problem.model == "rabi" and "Omega_R" not in problem.initial:
        # the spectrum gives the generalized frequency; remove a known detuning
        gen = guess["Omega_R"]
        guess["Omega_R"] = math.sqrt(max(gen**2 - guess["Delta"] ** 2, (0.1 * gen) ** 2))
    guess.update(problem.initial)
    guess.update(problem.fixed)
    for name, (lo, hi) in problem.bounds.items():
        guess[name] = float(np.clip(guess[name], lo, hi))
    return guess


# ---------------------------------------------------------------- optimizer


def fd_jacobian(func, p, rel_step: float = 1e-6) -> np.ndarray:
    """Central finite-difference Jacobian, step ``rel_step * |p_i|`` (or ``rel_step`` at 0)."""
    p = np.asarray(p, dtype=float)
    cols = []
    for i in range(p.size):
        h = rel_step * abs(p[i]) if p[i] != 0 else rel_step
        up, dn = p.copy(), p.copy()
        up[i] += h
        dn[i] -= h
        cols.append((func(up) - func(dn)) / (2.0 * h))
    return np.column_stack(cols)


@dataclass
class LMResult:
    p: np.ndarray
    cost: float
    iterations: int
    converged: bool
    message: str
    cost_history: list


def levenberg_marquardt(residual, p0, lower, upper, max_iter: int = 500, xtol: float = 1e-10,
                        ftol: float = 1e-12, rel_step: float = 1e-6) -> LMResult:
    """Minimize ``0.5 * |residual(p)|^2`` inside box bounds.

    Marquardt damping on the diagonal of the normal matrix: damping shrinks
    tenfold after an accepted step and grows tenfold after a rejected one.
    Trial points are clipped into the box.
    """
    lower, upper = np.asarray(lower, float), np.asarray(upper, float)
    p = np.clip(np.asarray(p0, dtype=float), lower, upper)
    r = residual(p)
    cost = 0.5 * float(r @ r)
    if not math.isfinite(cost):
        raise FitError("residual is not finite at the initial guess")
    history = [cost]
    lam = 1e-3
    for it in range(1, max_iter + 1):
        J = fd_jacobian(residual, p, rel_step)
        A = J.T @ J
        g = J.T @ r
        scale = np.maximum(np.diag(A), 1e-300)
        while True:
            try:
                step = np.linalg.solve(A + lam * np.diag(scale), -g)
            except np.linalg.LinAlgError:
                step = np.full_like(p, np.nan)
            trial = np.clip(p + step, lower, upper) if np.all(np.isfinite(step)) else p
            r_new = residual(trial)
            new_cost = 0.5 * float(r_new @ r_new)
            if math.isfinite(new_cost) and new_cost < cost:
                break
            lam *= 10.0
            if lam > 1e16:
                return LMResult(p, cost, it, True, "no further decrease possible", history)
        dp = trial - p
        drop = cost - new_cost
        p, r, cost = trial, r_new, new_cost
        history.append(cost)
        lam = max(lam / 10.0, 1e-15)
        if np.linalg.norm(dp) <= xtol * (np.linalg.norm(p) + xtol):
            return LMResult(p, cost, it, True, "relative step below tolerance", history)
        if drop <= ftol * max(cost, 1e-300):
            return LMResult(p, cost, it, True, "relative cost change below tolerance", history)
    return LMResult(p, cost, max_iter, False, f"no convergence in {max_iter} iterations", history)


# ---------------------------------------------------------------- results


@dataclass
class FitResult:
    model: str
    names: tuple
    values: dict
    uncertainties: dict
    free: tuple
    covariance: np.ndarray
    chi2: float
    reduced_chi2: float
    iterations: int
    converged: bool
    message: str = ""
    saturated: tuple = ()
    n_points: int = 0
    seed: object = None
    cost_history: list = field(default_factory=list)
    x_scale: float = 1.0

    def __getitem__(self, name):
        return self.values[name]

    def sigma(self, name) -> float:
        return self.uncertainties.get(name, 0.0)

    def curve(self, x_sweep):
        """Fitted curve in the normalized (sweep) convention."""
        p = np.array([self.values[n] for n in self.names])
        return 1.0 - MODELS[self.model].func(np.asarray(x_sweep, float) * self.x_scale, p)

    def summary(self) -> str:
        lines = [f"{self.model} fit: {'converged' if self.converged else 'NOT converged'}"
                 f" after {self.iterations} iterations, reduced chi2 = {self.reduced_chi2:.3f}"]
        for name in self.names:
            unit = UNITS.get(name, "")
            if name in self.free:
                lines.append(f"  {name} = {self.values[name]:.6g} ± {self.sigma(name):.2g} {unit}".rstrip())
            else:
                lines.append(f"  {name} = {self.values[name]:.6g} {unit} (fixed)".rstrip())
        if self.saturated:
            lines.append("  at bound: " + ", ".join(self.saturated))
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "model": self.model, "names": list(self.names), "free": list(self.free),
            "values": self.values, "uncertainties": self.uncertainties,
            "covariance": np.asarray(self.covariance).tolist(), "chi2": self.chi2,
            "reduced_chi2": self.reduced_chi2, "iterations": self.iterations,
            "converged": self.converged, "message": self.message,
            "saturated": list(self.saturated), "n_points": self.n_points, "seed": self.seed,
            "x_scale": self.x_scale,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        d = self.to_dict()
        out = ["[fit]"]
        for key in ("model", "converged", "iterations", "chi2", "reduced_chi2", "n_points", "seed",
                    "message"):
            out.append(f"{key}={json.dumps(d[key])}")
        out.append("[estimates]")
        out += [f"{n}={self.values[n]!r}" for n in self.names]
        out.append("[uncertainties]")
        out += [f"{n}={self.sigma(n)!r}" for n in self.free]
        out.append("[covariance]")
        out.append("order=" + ",".join(self.free))
        out += [",".join(repr(float(v)) for v in row) for row in np.asarray(self.covariance)]
        if self.saturated:
            out.append("[flags]")
            out.append("saturated=" + ",".join(self.saturated))
        return "\n".join(out) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        return cls(model=d["model"], names=tuple(d["names"]), values=d["values"],
                   uncertainties=d["uncertainties"], free=tuple(d["free"]),
                   covariance=np.array(d["covariance"], dtype=float), chi2=d["chi2"],
                   reduced_chi2=d["reduced_chi2"], iterations=d["iterations"],
                   converged=d["converged"], message=d.get("message", ""),
                   saturated=tuple(d.get("saturated", ())), n_points=d.get("n_points", 0),
                   seed=d.get("seed"), x_scale=d.get("x_scale", 1.0))

    @classmethod
    def load(cls, path) -> "FitResult":
        return cls.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------- fit


def _echo_starts(guess: dict) -> list[dict]:
    """Deterministic perturbations of the echo guess; branch 0 is the guess itself."""
    variants = [{}, {"n": 1.5, "k": 2.0, "f_b": 0.5}, {"n": 1.2, "k": 3.0, "f_b": 0.3},
                {"n": 2.0, "k": 0.5, "f_b": 1.0}, {"n": 1.0, "k": 3.5, "f_b": 0.15}]
    starts = []
    for v in variants:
        g = dict(guess)
        for key, val in v.items():
            g[key] = guess["f_b"] * val if key == "f_b" else val
        starts.append(g)
    return starts


def _solve(problem: FitProblem, start: dict) -> LMResult:
    free = problem.free
    x, y, sigma = problem.x, problem.y, problem.sigma
    func = problem.spec.func

    def residual(q):
        return (y - func(x, problem.full_vector(q))) / sigma

    lo = np.array([problem.bounds[n][0] for n in free])
    hi = np.array([problem.bounds[n][1] for n in free])
    return levenberg_marquardt(residual, np.array([start[n] for n in free]), lo, hi)


def fit(problem: FitProblem, multistart: bool | None = None) -> FitResult:
    """Fit ``problem``; echo fits use five deterministic starts by default."""
    guess = initial_guess(problem)
    if multistart is None:
        multistart = problem.model == "echo"
    starts = _echo_starts(guess) if multistart and problem.model == "echo" else [guess]
    for s in starts:
        for name, (lo, hi) in problem.bounds.items():
            s[name] = float(np.clip(s[name], lo, hi))
    results = [_solve(problem, s) for s in starts]
    best = min(range(len(results)), key=lambda i: (results[i].cost, i))
    lm = results[best]

    free = problem.free
    spec = problem.spec
    x, y, sigma = problem.x, problem.y, problem.sigma

    def residual(q):
        return (y - spec.func(x, problem.full_vector(q))) / sigma

    saturated = []
    for i, name in enumerate(free):
        lo, hi = problem.bounds[name]
        tol = 1e-9 * max(abs(lm.p[i]), 1.0)
        if abs(lm.p[i] - lo) <= tol or abs(lm.p[i] - hi) <= tol:
            saturated.append(name)
    interior = [i for i, n in enumerate(free) if n not in saturated]
    n_pts = len(y)
    dof = max(n_pts - len(free), 1)
    chi2 = 2.0 * lm.cost
    s2 = chi2 / dof
    cov_full = np.full((len(free), len(free)), np.nan)
    if interior:
        J = fd_jacobian(residual, lm.p)[:, interior]
        A = J.T @ J
        cond = np.linalg.cond(A)
        if not np.isfinite(cond) or cond > 1e15:
            msg = "normal matrix is singular at the optimum"
            if problem.model == "rabi" and {"Omega_R", "Delta"} <= set(free):
                msg += "; Omega_R and Delta enter only through the generalized frequency, so fix Delta"
            raise SingularMatrixError(msg, cond)
        cov = s2 * np.linalg.inv(A)
        cov = 0.5 * (cov + cov.T)
        cov_full[np.ix_(interior, interior)] = cov
    values = dict(zip(spec.params, map(float, problem.full_vector(lm.p))))
    unc = {n: float(math.sqrt(cov_full[i, i])) if i in interior else math.nan
           for i, n in enumerate(free)}
    return FitResult(
        model=problem.model, names=spec.params, values=values, uncertainties=unc,
        free=tuple(free), covariance=cov_full, chi2=chi2, reduced_chi2=s2,
        iterations=lm.iterations, converged=lm.converged, message=lm.message,
        saturated=tuple(saturated), n_points=n_pts, seed=problem.data.metadata.get("seed"),
        cost_history=lm.cost_history, x_scale=spec.x_scale,
    )


# ---------------------------------------------------------------- derived quantities


@dataclass(frozen=True)
class PiPulse:
    duration: float  # ns
    uncertainty: float  # ns
    off_resonance: bool

    def __float__(self):
        return self.duration


def extract_pi_pulse(result: FitResult) -> PiPulse:
    """pi-pulse duration (ns) from the fitted generalized Rabi frequency."""
    if result.model != "rabi":
        raise ValueError("pi-pulse extraction needs a Rabi fit")
    if not result.converged:
        raise FitError(f"Rabi fit did not converge: {result.message}")
    om, de = result["Omega_R"], result["Delta"]
    gen = math.hypot(om, de)
    t_pi = 1e3 / (2.0 * gen)
    # dt/d(Omega) and dt/d(Delta)
    grad = {"Omega_R": -t_pi * om / gen**2, "Delta": -t_pi * de / gen**2}
    idx = [result.free.index(n) for n in grad if n in result.free]
    g = np.array([grad[result.free[i]] for i in idx])
    var = float(g @ result.covariance[np.ix_(idx, idx)] @ g) if idx else 0.0
    return PiPulse(t_pi, math.sqrt(max(var, 0.0)), de != 0.0)


def validate_hierarchy(t1_fit: FitResult, echo_fit: FitResult, rabi_fit: FitResult) -> HierarchyVerdict:
    """Check T1 >= T2 > T2* on the point estimates, with margins in sigmas."""
    T1 = t1_fit["T1"]
    T2 = echo_fit["T2"]
    T2s = rabi_fit["T2_star"]
    base = check_hierarchy(CoherenceHierarchy(T1=T1, T2=T2, T2_star=T2s))

    def margin(a, sa, b, sb):
        s = math.hypot(sa, sb)
        return (a - b) / s if s > 0 and math.isfinite(s) else math.inf if a != b else 0.0

    s1 = t1_fit.sigma("T1") * 1e3
    s2 = echo_fit.sigma("T2")
    s3 = rabi_fit.sigma("T2_star")
    margins = {"T1-T2": margin(T1 * 1e3, s1, T2, s2), "T2-T2*": margin(T2, s2, T2s, s3)}
    return HierarchyVerdict(base.passed, base.t1_ge_t2, base.t2_gt_t2star, base.failures, margins)


def fit_sweep(data: SweepResult, model: str | None = None, **kw) -> FitResult:
    """Convenience: build the default problem for ``data`` and fit it."""
    multistart = kw.pop("multistart", None)
    return fit(FitProblem.create(data, model, **kw), multistart=multistart)
