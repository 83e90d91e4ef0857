"""Command-line front end: ``nvlab simulate|fit|odmr|pipeline|validate``.

Exit status: 0 success, 1 usage/config error, 2 fit non-convergence,
3 I/O error; a failed coherence-hierarchy check exits 4 (T1 < T2),
5 (T2 <= T2*) or 6 (both).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .coherence import EchoParams, HierarchyVerdict, RabiParams, T1Params, rabi_signal
from .experiment import (NoiseModel, PowerCalibration, SweepResult,
                         find_dips, run_odmr_scan, run_sweep)
from .fitting import FitError, FitResult, extract_pi_pulse, fit_sweep, validate_hierarchy
from .physics import PhysicalConstants
from .pulses import HardwareProfile, SequenceKind, block_variants, build

EXIT_OK, EXIT_USAGE, EXIT_FIT, EXIT_IO = 0, 1, 2, 3
EXIT_T1_LT_T2, EXIT_T2_LE_T2STAR, EXIT_BOTH = 4, 5, 6
POOR_FIT_CHI2 = 5.0

DEFAULT_GRIDS = {
    "rabi": {"start": 0.0, "stop": 600.0, "count": 60, "spacing": "linear"},
    "t1": {"start": 0.0, "stop": 25.0, "count": 40, "spacing": "linear"},
    "echo": {"start": 0.0, "stop": 5.0, "count": 251, "spacing": "linear"},
    "odmr": {"start": 2500.0, "stop": 3300.0, "count": 401, "spacing": "linear"},
}
DEFAULT_TRUTH = {
    "rabi": {},  # filled from the power calibration
    "t1": {"T1": 1.78},
    "echo": {"T2": 2.38, "n": 1.29, "k": 3.0, "f_a": 3.04, "f_b": 0.07},
    "odmr": {"B_z": 8.5, "linewidth": 10.0},
}


class ConfigError(ValueError):
    pass


def parse_grid(text: str) -> dict:
    parts = text.split(":")
    if len(parts) not in (3, 4) or (len(parts) == 4 and parts[3] not in ("log", "linear")):
        raise ConfigError(f"grid must be start:stop:count[:log], got {text!r}")
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"grid must be start:stop:count[:log], got {text!r}") from None
    return {"start": start, "stop": stop, "count": count,
            "spacing": parts[3] if len(parts) == 4 else "linear"}


def grid_values(g: dict) -> np.ndarray:
    if g["count"] < 8:
        raise ConfigError("grid count must be >= 8")
    if not g["stop"] > g["start"]:
        raise ConfigError("grid stop must exceed start")
    if g["spacing"] == "log":
        if g["start"] <= 0:
            raise ConfigError("log grids need a positive start")
        return np.geomspace(g["start"], g["stop"], g["count"])
    return np.linspace(g["start"], g["stop"], g["count"])


@dataclass
class RunConfig:
    kind: str = "t1"
    seed: int = 0
    power_dbm: float = 40.0
    blocks: int = 150
    out: str = "out"
    grids: dict = field(default_factory=lambda: json.loads(json.dumps(DEFAULT_GRIDS)))
    truth: dict = field(default_factory=lambda: json.loads(json.dumps(DEFAULT_TRUTH)))
    noise: dict = field(default_factory=dict)
    hardware: dict = field(default_factory=dict)
    calibration: dict = field(default_factory=dict)  # dBm -> [Omega_R MHz, T2* us]

    def __post_init__(self):
        try:
            SequenceKind.parse(self.kind)
        except ValueError:
            raise ConfigError(f"unknown experiment kind {self.kind!r}") from None
        self.kind = SequenceKind.parse(self.kind).value
        if self.seed is None:
            raise ConfigError("a seed is required")
        if int(self.blocks) < 1:
            raise ConfigError("blocks must be >= 1")
        for g in self.grids.values():
            grid_values(g)
        try:
            self.noise_model()
            self.hardware_profile()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        base = cls()
        known = set(asdict(base))
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        for key, value in d.items():
            if key in ("grids", "truth"):
                merged = getattr(base, key)
                for sub, val in value.items():
                    merged.setdefault(sub, {}).update(val)
                kw[key] = merged
            else:
                kw[key] = value
        return cls(**kw)

    def to_dict(self) -> dict:
        """Resolved configuration as embedded in outputs (without the output path)."""
        d = asdict(self)
        del d["out"]
        return d

    def noise_model(self, seed: int | None = None) -> NoiseModel:
        return NoiseModel(rng_seed=self.seed if seed is None else seed, **self.noise)

    def hardware_profile(self) -> HardwareProfile:
        return HardwareProfile(**self.hardware)

    def power_calibration(self) -> PowerCalibration:
        table = {float(k): tuple(v) for k, v in self.calibration.items()} or None
        return PowerCalibration(table)

    def truth_params(self, kind: str):
        t = dict(self.truth.get(kind, {}))
        if kind == "rabi":
            omega, t2s = self.power_calibration()(self.power_dbm)
            t.setdefault("Omega_R", omega)
            t.setdefault("T2_star", t2s)
            return RabiParams(**t)
        if kind == "t1":
            return T1Params(**t)
        if kind == "echo":
            return EchoParams(**t)
        raise ConfigError(f"no truth model for {kind}")


def load_config(args) -> RunConfig:
    data = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise IOError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
    if getattr(args, "kind", None):
        data["kind"] = args.kind
    for flag, key in (("seed", "seed"), ("out", "out"), ("power_dbm", "power_dbm"), ("blocks", "blocks")):
        value = getattr(args, flag, None)
        if value is not None:
            data[key] = value
    if getattr(args, "photon_budget", None) is not None:
        data.setdefault("noise", {})["photon_budget"] = args.photon_budget
    cfg = RunConfig.from_dict(data)
    if getattr(args, "grid", None):
        cfg.grids[cfg.kind] = parse_grid(args.grid)
        grid_values(cfg.grids[cfg.kind])
    return cfg


def _header(cfg: RunConfig, extra: dict | None = None) -> dict:
    meta = {"config": cfg.to_dict(), "power_dbm": cfg.power_dbm}
    meta.update(extra or {})
    return meta


def _outdir(cfg: RunConfig) -> Path:
    path = Path(cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_timing(cfg: RunConfig, kind: str, t_pi_ns: float, x_last: float, path: Path):
    hw = cfg.hardware_profile()
    if kind == "rabi":
        seq = build(kind, hw=hw).resolve(tau=x_last)
    else:
        tau = x_last * (1e6 if kind == "t1" else 1e3 if kind == "echo" else 0.0)
        seq = build(kind, t_pi_ns, tau if kind != "odmr" else "tau", hw=hw)
        seq = seq.resolve(tau=tau) if seq.symbols() else seq
    tables = block_variants(seq, hw, offset=hw.aom_delay + hw.aom_rise)
    lines = [f"# config: {json.dumps(cfg.to_dict(), sort_keys=True)}", f"# sequence: {seq}"]
    for name, table in tables.items():
        lines.append(f"# variant: {name}")
        lines.append(table.to_text().rstrip("\n"))
    path.write_text("\n".join(lines) + "\n")


def simulate(cfg: RunConfig, kind: str | None = None, seed: int | None = None,
             truth=None, t_pi_ns: float | None = None, out_name: str | None = None) -> tuple[SweepResult, Path]:
    kind = kind or cfg.kind
    if kind == "odmr":
        raise ConfigError("use the odmr command for frequency scans")
    seed = cfg.seed if seed is None else seed
    truth = truth if truth is not None else cfg.truth_params(kind)
    xs = grid_values(cfg.grids[kind])
    noise = cfg.noise_model(seed)
    sweep = run_sweep(kind, xs, truth, noise, int(cfg.blocks),
                      metadata=_header(cfg, {"kind_seed": seed}))
    out = _outdir(cfg)
    path = sweep.save(out / f"{out_name or kind}.sweep")
    if t_pi_ns is None:
        t_pi_ns = 1e3 * cfg.power_calibration().rabi_params(cfg.power_dbm).t_pi
    _write_timing(cfg, kind, t_pi_ns, float(xs[-1]), out / f"{out_name or kind}.timing")
    return sweep, path


def write_fit(result: FitResult, sweep: SweepResult, stem: Path):
    stem.with_suffix(".fit.json").write_text(
        json.dumps({**result.to_dict(), "config": sweep.metadata.get("config")}, indent=2,
                   sort_keys=True) + "\n")
    cfg_line = f"# config: {json.dumps(sweep.metadata.get('config'), sort_keys=True)}\n"
    stem.with_suffix(".fit.txt").write_text(cfg_line + result.to_text())
    curve = result.curve(sweep.x)
    rows = [cfg_line.rstrip("\n"), "x,y,yerr,fit"]
    rows += [f"{x:.10g},{y:.10g},{e:.6g},{c:.10g}" for x, y, e, c in zip(sweep.x, sweep.mean, sweep.stderr, curve)]
    stem.with_suffix(".curve.csv").write_text("\n".join(rows) + "\n")


def headline(result: FitResult) -> str:
    """One line in lab units, e.g. ``T1 = 1.780 ± 0.007 ms``."""
    if result.model == "t1":
        return f"T1 = {result['T1']:.3f} ± {result.sigma('T1'):.3f} ms"
    if result.model == "echo":
        return (f"T2 = {result['T2']:.3f} ± {result.sigma('T2'):.3f} us, "
                f"f_a = {result['f_a']:.4f} ± {result.sigma('f_a'):.4f} MHz, "
                f"f_b = {1e3 * result['f_b']:.0f} ± {1e3 * result.sigma('f_b'):.0f} kHz, "
                f"n = {result['n']:.2f} ± {result.sigma('n'):.2f}, k = {result['k']:.2f}")
    pi = extract_pi_pulse(result)
    return (f"t_pi = {pi.duration:.2f} ± {pi.uncertainty:.2f} ns, "
            f"T2* = {1e3 * result['T2_star']:.1f} ± {1e3 * result.sigma('T2_star'):.1f} ns")


def _fit_file(path: Path, model: str | None, free_delta: bool, weights: str, out: Path | None):
    sweep = SweepResult.load(path)
    result = fit_sweep(sweep, model, free_delta=free_delta, weights=weights)
    stem = (out or path.parent) / path.stem
    stem.parent.mkdir(parents=True, exist_ok=True)
    write_fit(result, sweep, stem)
    return sweep, result


def hierarchy_exit(verdict: HierarchyVerdict) -> int:
    if verdict.passed:
        return EXIT_OK
    if not verdict.t1_ge_t2 and not verdict.t2_gt_t2star:
        return EXIT_BOTH
    return EXIT_T1_LT_T2 if not verdict.t1_ge_t2 else EXIT_T2_LE_T2STAR


def _verdict_lines(v: HierarchyVerdict) -> list[str]:
    lines = [f"hierarchy: {v}"]
    for k, m in v.margins.items():
        lines.append(f"  margin {k}: {m:.1f} sigma" if math.isfinite(m) else f"  margin {k}: inf")
    return lines


# ---------------------------------------------------------------- commands


def cmd_simulate(args) -> int:
    cfg = load_config(args)
    sweep, path = simulate(cfg)
    print(f"simulated {cfg.kind}: {len(sweep.points)} points, {cfg.blocks} blocks, "
          f"seed {cfg.seed} -> {path}")
    return EXIT_OK


def cmd_fit(args) -> int:
    path = Path(args.file)
    if not path.exists():
        raise IOError(f"no such file: {path}")
    sweep, result = _fit_file(path, args.model, args.free_delta, args.weights,
                              Path(args.out) if args.out else None)
    print(result.summary())
    if not result.converged:
        print(f"fit did not converge: {result.message}", file=sys.stderr)
        return EXIT_FIT
    print(headline(result))
    if result.reduced_chi2 > POOR_FIT_CHI2:
        print(f"WARNING: poor fit, reduced chi2 {result.reduced_chi2:.1f} > {POOR_FIT_CHI2:g}")
    return EXIT_OK


def cmd_odmr(args) -> int:
    cfg = load_config(argparse.Namespace(**{**vars(args), "kind": "odmr"}))
    p = dict(cfg.truth.get("odmr", {}))
    if args.bz is not None:
        p["B_z"] = args.bz
    if args.linewidth is not None:
        p["linewidth"] = args.linewidth
    cfg.truth["odmr"] = p
    freqs = grid_values(cfg.grids["odmr"])
    sweep = run_odmr_scan(freqs, p["B_z"], p.get("linewidth", 10.0), PhysicalConstants(),
                          cfg.noise_model(), int(cfg.blocks), metadata=_header(cfg))
    path = sweep.save(_outdir(cfg) / "odmr.sweep")
    dips = find_dips(sweep)
    print(f"odmr scan: {len(sweep.points)} points, seed {cfg.seed} -> {path}")
    if not dips:
        print("WARNING: no resonance found in the scanned range", file=sys.stderr)
        return EXIT_OK
    print("resonances: " + ", ".join(f"{d:.1f} MHz" for d in dips))
    return EXIT_OK


def _stage_seeds(seed: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(3)]


def cmd_pipeline(args) -> int:
    if getattr(args, "grid", None):
        raise ConfigError("set per-experiment grids in the config file for pipeline runs")
    cfg = load_config(args)
    out = _outdir(cfg)
    seeds = dict(zip(("rabi", "t1", "echo"), _stage_seeds(int(cfg.seed))))
    report = ["nvlab pipeline report", f"config: {json.dumps(cfg.to_dict(), sort_keys=True)}"]
    results = {}

    def stage(kind, truth=None, t_pi=None):
        sweep, path = simulate(cfg, kind, seeds[kind], truth, t_pi)
        result = fit_sweep(sweep)
        write_fit(result, sweep, out / kind)
        report.append(f"[{kind}] seed={seeds[kind]} data={path.name} points={len(sweep.points)} "
                      f"blocks={cfg.blocks}")
        report.extend("  " + line for line in result.summary().splitlines()[1:])
        if not result.converged:
            raise FitError(f"{kind} fit did not converge: {result.message}")
        report.append("  => " + headline(result))
        results[kind] = result
        return result

    rabi_truth = cfg.truth_params("rabi")
    rabi = stage("rabi", rabi_truth)
    t_pi = extract_pi_pulse(rabi).duration
    # transfer achieved by the calibrated pi-pulse on the true drive
    efficiency = _transfer(rabi_truth, t_pi)
    report.append(f"  pi-pulse transfer on the true drive: {efficiency:.3f}")
    t1_truth = T1Params(**{**asdict(cfg.truth_params("t1")), "amplitude": efficiency})
    stage("t1", t1_truth, t_pi)
    stage("echo", None, t_pi)
    verdict = validate_hierarchy(results["t1"], results["echo"], results["rabi"])
    report.extend(_verdict_lines(verdict))
    text = "\n".join(report) + "\n"
    (out / "report.txt").write_text(text)
    print(text, end="")
    return hierarchy_exit(verdict)


def _transfer(rabi_truth: RabiParams, t_pi_ns: float) -> float:
    return float(rabi_signal(t_pi_ns * 1e-3, replace(rabi_truth, amplitude=1.0, offset=0.0)))


def cmd_validate(args) -> int:
    fits = []
    for name in (args.t1, args.echo, args.rabi):
        path = Path(name)
        if not path.exists():
            raise IOError(f"no such file: {path}")
        try:
            fits.append(FitResult.load(path))
        except (json.JSONDecodeError, KeyError) as exc:
            raise ConfigError(f"{path} is not a fit result: {exc}") from None
    expected = ("t1", "echo", "rabi")
    for f, m in zip(fits, expected):
        if f.model != m:
            raise ConfigError(f"expected a {m} fit, got {f.model}")
    verdict = validate_hierarchy(*fits)
    print("\n".join(_verdict_lines(verdict)))
    return hierarchy_exit(verdict)


# ---------------------------------------------------------------- entry point


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--power-dbm", type=float, dest="power_dbm")
    p.add_argument("--blocks", type=int, help="measurement blocks per point")
    p.add_argument("--grid", help="start:stop:count[:log]")
    p.add_argument("--photon-budget", type=float, dest="photon_budget")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nvlab", description="Virtual NV-center coherence lab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a Rabi, T1 or Hahn-echo sweep")
    p.add_argument("--kind", choices=["rabi", "t1", "echo"])
    _common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a sweep file")
    p.add_argument("file")
    p.add_argument("--model", choices=["rabi", "t1", "echo"])
    p.add_argument("--free-delta", action="store_true", help="fit the Rabi detuning")
    p.add_argument("--weights", choices=["inverse-variance", "uniform"], default="inverse-variance")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("odmr", help="simulate an ODMR scan and locate the dips")
    p.add_argument("--bz", type=float, help="on-axis field in mT")
    p.add_argument("--linewidth", type=float, help="FWHM in MHz")
    _common(p)
    p.set_defaults(func=cmd_odmr)

    p = sub.add_parser("pipeline", help="Rabi -> T1 -> echo, then the hierarchy check")
    _common(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("validate", help="hierarchy check on three fit files")
    p.add_argument("t1")
    p.add_argument("echo")
    p.add_argument("rabi")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FitError as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
