"""End-to-end acceptance checks, one per criterion, at the agreed tolerances.

Each check prints a ``criterion N: PASS|FAIL`` line (collected into the
terminal summary) and then asserts.
"""

import filecmp
import json
import time

import numpy as np

from conftest import ACCEPTANCE_LINES
from nvlab import cli, pumping
from nvlab.coherence import EchoParams, T1Params, hahn_echo_signal
from nvlab.experiment import NoiseModel, PowerCalibration, run_sweep
from nvlab.fitting import extract_pi_pulse, fit_sweep
from nvlab.physics import (TWO_PI, FieldConfig, PhysicalConstants, QubitProjection,
                           drive_from_rabi, evolve, populations, project, pure_state,
                           rabi_from_pi_time, resonance_frequencies, rotating_frame_hamiltonian)
from nvlab.pulses import HardwareProfile, LaserPulse, PulseSequence, Delay, MwPulse, compile, parse, render

from test_physics import random_density, random_hermitian, taylor_propagators
from test_pulses import sequences

NOISE = dict(photon_budget=1e4)  # 1/sqrt(1e4) = 1% shot noise
ECHO_TRUTH = EchoParams(T2=2.38, n=1.29, k=3.0, f_a=3.04, f_b=0.07)


def report(n, passed, detail):
    line = f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line


def test_criterion_01_resonance_arithmetic():
    t0 = time.perf_counter()
    up, lo = resonance_frequencies(PhysicalConstants(2870.0, 28.0), 8.5)
    dev = abs(up - 3111.0) / 3111.0
    dt = time.perf_counter() - t0
    report(1, (up, lo) == (3108.0, 2632.0) and dev < 0.0015 and dt < 1.0,
           f"({up:g}, {lo:g}) MHz, upper vs 3111 MHz: {100 * dev:.3f}%, {dt * 1e3:.1f} ms")


def test_criterion_02_rabi_round_trip():
    t0 = time.perf_counter()
    truth = PowerCalibration().rabi_params(40.0)
    xs = np.linspace(0, 600, 60)
    ok, tpis, t2s = 0, [], []
    for seed in range(50):
        r = fit_sweep(run_sweep("rabi", xs, truth, NoiseModel(rng_seed=seed, **NOISE), 150))
        tpi = extract_pi_pulse(r).duration
        tpis.append(tpi)
        t2s.append(r["T2_star"])
        ok += abs(tpi - 44.0) <= 2.0 and abs(r["T2_star"] - 0.190) <= 0.15 * 0.190
    dt = time.perf_counter() - t0
    report(2, ok >= 45 and dt < 60,
           f"{ok}/50 seeds in tolerance; t_pi {np.mean(tpis):.2f} ns, T2* {1e3 * np.mean(t2s):.1f} ns, {dt:.1f} s")


def test_criterion_03_t2star_vs_power():
    t0 = time.perf_counter()
    cal = PowerCalibration()
    grids = {30.0: np.linspace(0, 1200, 120), 40.0: np.linspace(0, 600, 60)}
    targets = {30.0: 0.350, 40.0: 0.190}
    worst, ordered = 0.0, True
    means = {}
    for dbm, xs in grids.items():
        vals = [fit_sweep(run_sweep("rabi", xs, cal.rabi_params(dbm), NoiseModel(rng_seed=s, **NOISE), 150))["T2_star"]
                for s in range(10)]
        means[dbm] = float(np.mean(vals))
        worst = max(worst, max(abs(v - targets[dbm]) / targets[dbm] for v in vals))
    ordered = means[30.0] > means[40.0]
    dt = time.perf_counter() - t0
    report(3, worst <= 0.15 and ordered and dt < 120,
           f"T2* 30 dBm {1e3 * means[30.0]:.1f} ns, 40 dBm {1e3 * means[40.0]:.1f} ns, "
           f"worst deviation {100 * worst:.2f}% over 10 seeds each, {dt:.1f} s")


def test_criterion_04_t1_round_trip():
    t0 = time.perf_counter()
    xs = np.linspace(0, 25, 40)
    vals = [fit_sweep(run_sweep("t1", xs, T1Params(T1=1.78), NoiseModel(rng_seed=s, **NOISE), 150))["T1"]
            for s in range(50)]
    ok = sum(abs(v - 1.78) <= 0.05 for v in vals)
    dt = time.perf_counter() - t0
    report(4, ok >= 40 and dt < 60, f"{ok}/50 seeds within 0.05 ms; mean T1 {np.mean(vals):.4f} ms, {dt:.1f} s")


def test_criterion_05_echo_round_trip():
    t0 = time.perf_counter()
    xs = np.linspace(0, 5, 251)
    ok, fas = 0, []
    for s in range(100):
        r = fit_sweep(run_sweep("echo", xs, ECHO_TRUTH, NoiseModel(rng_seed=s, **NOISE), 150))
        fas.append(r["f_a"])
        ok += abs(r["T2"] - 2.38) <= 0.04 and abs(r["f_a"] - 3.04) <= 0.01
    a_par = float(np.mean(fas))
    dt = time.perf_counter() - t0
    report(5, ok >= 80 and abs(a_par - 3.0) < 0.1 and dt < 300,
           f"{ok}/100 seeds with T2 and f_a in tolerance; A_par = f_a = {a_par:.3f} MHz, {dt:.1f} s")


def test_criterion_06_echo_identity():
    rng = np.random.default_rng(10_000)
    worst = 0.0
    for _ in range(10_000):
        fa = rng.uniform(1e-3, 20)
        p = EchoParams(T2=rng.uniform(1e-3, 100), n=rng.uniform(0.3, 4), k=rng.uniform(0, 4), f_a=fa,
                       f_b=rng.uniform(0, 0.999 * fa), amplitude=rng.uniform(1e-3, 10), offset=rng.uniform(-10, 10))
        err = abs(hahn_echo_signal(0.0, p) - p.offset - p.amplitude)
        worst = max(worst, err / (np.finfo(float).eps * max(abs(p.offset), p.amplitude)))
    report(6, worst <= 4, f"10000 draws, worst error {worst:.1f} ulp of the operands")


def test_criterion_07_evolution_oracle():
    rng = np.random.default_rng(7)
    n = 100
    Hs = np.array([random_hermitian(rng, 3, TWO_PI * rng.uniform(0.1, 20.0)) for _ in range(n)])
    ts = rng.uniform(0.0, 2.0, n)
    rhos = np.array([random_density(rng, 3) for _ in range(n)])
    U = taylor_propagators(Hs, ts)
    ref = U @ rhos @ np.conj(np.swapaxes(U, 1, 2))
    got = np.array([evolve(H, r, t) for H, r, t in zip(Hs, rhos, ts)])
    dev = float(np.max(np.abs(got - ref)))
    c = PhysicalConstants()
    t_pi = 0.044
    f = FieldConfig(B_z=8.5, omega_mw=TWO_PI * (c.D - c.gamma_e * 8.5),
                    Omega_R=drive_from_rabi(TWO_PI * rabi_from_pi_time(t_pi)))
    H2 = project(rotating_frame_hamiltonian(c, f), QubitProjection.MINUS)
    swap_err = abs(1.0 - populations(evolve(H2, pure_state(0, dim=2), t_pi))[1])
    report(7, dev < 1e-6 and swap_err < 1e-8, f"max deviation {dev:.2e} over 100 draws, pi swap error {swap_err:.1e}")


def test_criterion_08_optical_pumping():
    s = pumping.LevelScheme()
    ss = pumping.steady_state(s)
    pumped = pumping.propagate(s, pumping.thermal_ground(), 350_000.0, True)
    gap = float(np.max(np.abs(pumped - ss)))
    sym = pumping.steady_state(s.symmetric())
    g = sym[list(pumping.GROUND)]
    pol = float(np.max(np.abs(g / g.sum() - 1 / 3)))
    report(8, ss[pumping.G0] > 0.8 and gap < 1e-3 and pol < 1e-9,
           f"steady |0> {ss[pumping.G0]:.3f}, 350 us gap {gap:.1e}, symmetric polarization {pol:.1e}")


def test_criterion_09_pulse_compiler():
    from hypothesis import given, settings
    count = {"n": 0}

    @settings(max_examples=1000, deadline=None, derandomize=True)
    @given(sequences())
    def roundtrip(seq):
        assert parse(render(seq)) == seq
        count["n"] += 1

    roundtrip()
    hw = HardwareProfile()
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(200):
        lead = rng.uniform(hw.aom_delay, 5000.0)
        seq = PulseSequence((Delay(lead), MwPulse(None, rng.uniform(1, 500)), Delay(rng.uniform(200, 1000)),
                             LaserPulse("readout", rng.uniform(100, 5000))))
        tab = compile(seq, hw)
        (a, _), = tab.intervals("LASER")
        requested = lead + seq.elements[1].duration + seq.elements[2].tau
        worst = max(worst, abs(a * hw.tick + hw.aom_delay - requested))
    (m0, m1), = compile(PulseSequence((MwPulse(None, 44.0),)), hw).intervals("MW")
    report(9, count["n"] >= 1000 and worst <= hw.tick and m1 - m0 == 13,
           f"{count['n']} round trips, worst optical arrival error {worst:.2f} ns, 44 ns -> {m1 - m0} ticks")


def _pipeline(tmp_path, name, config):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(config))
    return cli.main(["pipeline", "--config", str(path), "--seed", "1", "--out", str(tmp_path / name)])


def test_criterion_10_hierarchy_verdict(tmp_path):
    short_t1 = {"truth": {"t1": {"T1": 0.001}}, "grids": {"t1": {"start": 0, "stop": 0.015, "count": 40}}}
    long_t2s = {"truth": {"rabi": {"T2_star": 3.0}}, "grids": {"rabi": {"start": 0, "stop": 6000, "count": 600}}}
    both = {"truth": {**short_t1["truth"], **long_t2s["truth"]}, "grids": {**short_t1["grids"], **long_t2s["grids"]}}
    codes = {name: _pipeline(tmp_path, name, cfg) for name, cfg in
             [("nominal", {}), ("t1_lt_t2", short_t1), ("t2_le_t2s", long_t2s), ("both", both)]}
    expected = {"nominal": 0, "t1_lt_t2": 4, "t2_le_t2s": 5, "both": 6}
    report(10, codes == expected, f"exit codes {codes}")


def test_criterion_11_determinism(tmp_path):
    config = tmp_path / "c.json"
    config.write_text(json.dumps({"seed": 42}))
    codes = [cli.main(["pipeline", "--config", str(config), "--out", str(tmp_path / d)]) for d in ("a", "b")]
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names, shallow=False)
    report(11, codes == [0, 0] and not mismatch and not errors and len(match) == len(names) > 0,
           f"{len(match)}/{len(names)} output files byte-identical")
