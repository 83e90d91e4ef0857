import json

import pytest

from nvlab import cli
from nvlab.experiment import SweepPoint, SweepResult
from nvlab.fitting import FitResult
from nvlab.pulses import SequenceKind, TimingTable


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_parse_grid():
    assert cli.parse_grid("0:25:40") == {"start": 0.0, "stop": 25.0, "count": 40, "spacing": "linear"}
    assert cli.grid_values(cli.parse_grid("1:100:9:log"))[4] == pytest.approx(10.0)
    for bad in ("0:1", "a:b:c", "0:1:10:cubic"):
        with pytest.raises(cli.ConfigError):
            cli.parse_grid(bad)
    with pytest.raises(cli.ConfigError):
        cli.grid_values(cli.parse_grid("0:1:7"))
    with pytest.raises(cli.ConfigError):
        cli.grid_values(cli.parse_grid("0:1:10:log"))


def test_config_validation():
    with pytest.raises(cli.ConfigError):
        cli.RunConfig.from_dict({"colour": "blue"})
    with pytest.raises(cli.ConfigError):
        cli.RunConfig.from_dict({"kind": "ramsey"})
    with pytest.raises(cli.ConfigError):
        cli.RunConfig.from_dict({"noise": {"photon_budget": -1}})
    cfg = cli.RunConfig.from_dict({"truth": {"t1": {"T1": 2.0}}})
    assert cfg.truth["echo"]["T2"] == 2.38 and cfg.truth_params("t1").T1 == 2.0


def test_simulate_and_fit(tmp_path, capsys):
    assert run("simulate", "--kind", "t1", "--seed", 3, "--out", tmp_path) == 0
    sweep = SweepResult.load(tmp_path / "t1.sweep")
    assert sweep.metadata["config"]["seed"] == 3 and len(sweep.points) == 40
    tables = (tmp_path / "t1.timing").read_text()
    assert tables.startswith("# config: ") and "# variant: background" in tables
    assert run("fit", tmp_path / "t1.sweep") == 0
    out = capsys.readouterr().out
    assert "T1 = 1.7" in out and "ms" in out
    res = FitResult.load(tmp_path / "t1.fit.json")
    assert res.converged and res.seed == 3
    assert json.loads((tmp_path / "t1.fit.json").read_text())["config"]["seed"] == 3
    csv = (tmp_path / "t1.curve.csv").read_text().splitlines()
    assert csv[1] == "x,y,yerr,fit" and len(csv) == 42


def test_simulate_grid_and_power(tmp_path):
    assert run("simulate", "--kind", "rabi", "--power-dbm", 30, "--grid", "10:1200:120",
               "--blocks", 20, "--seed", 1, "--out", tmp_path) == 0
    s = SweepResult.load(tmp_path / "rabi.sweep")
    assert s.x[0] == 10.0 and len(s.x) == 120 and set(s.n) == {20}
    assert s.metadata["truth"]["T2_star"] == pytest.approx(0.35)


def test_exit_codes(tmp_path, capsys):
    assert run("fit", tmp_path / "missing.sweep") == cli.EXIT_IO
    assert run("simulate", "--grid", "0:1:3") == cli.EXIT_USAGE
    assert run("nonsense") == cli.EXIT_USAGE
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert run("simulate", "--config", bad) == cli.EXIT_USAGE
    assert run("simulate", "--config", tmp_path / "none.json") == cli.EXIT_IO
    flat = SweepResult(SequenceKind.T1, "delay", "ms", [SweepPoint(float(i), 0.5, 0.01, 10) for i in range(12)])
    flat.save(tmp_path / "flat.sweep")
    assert run("fit", tmp_path / "flat.sweep") == cli.EXIT_FIT
    assert run("pipeline", "--grid", "0:1:10") == cli.EXIT_USAGE


def test_poor_fit_warning(tmp_path, capsys):
    run("simulate", "--kind", "echo", "--seed", 1, "--out", tmp_path)
    assert run("fit", tmp_path / "echo.sweep", "--model", "t1") == 0
    assert "WARNING: poor fit" in capsys.readouterr().out


def test_odmr(tmp_path, capsys):
    assert run("odmr", "--bz", 8.5, "--seed", 1, "--out", tmp_path) == 0
    assert "2632.0 MHz, 3108.0 MHz" in capsys.readouterr().out
    assert run("odmr", "--grid", "2700:2800:50", "--seed", 1, "--out", tmp_path) == 0
    assert "no resonance" in capsys.readouterr().err


def test_validate(tmp_path, capsys):
    for kind in ("t1", "echo", "rabi"):
        run("simulate", "--kind", kind, "--seed", 2, "--out", tmp_path)
        run("fit", tmp_path / f"{kind}.sweep")
    f = {k: tmp_path / f"{k}.fit.json" for k in ("t1", "echo", "rabi")}
    assert run("validate", f["t1"], f["echo"], f["rabi"]) == 0
    assert "PASS" in capsys.readouterr().out
    assert run("validate", f["rabi"], f["echo"], f["rabi"]) == cli.EXIT_USAGE
    assert run("validate", f["t1"], f["echo"], tmp_path / "nope.json") == cli.EXIT_IO


@pytest.mark.parametrize("t1, t2, t2s, code", [
    (1.78, 2.38, 0.19, 0), (0.001, 2.38, 0.19, 4), (1.78, 2.38, 3.0, 5), (0.001, 2.38, 3.0, 6)])
def test_hierarchy_exit_mapping(t1, t2, t2s, code):
    from nvlab.coherence import CoherenceHierarchy, check_hierarchy
    assert cli.hierarchy_exit(check_hierarchy(CoherenceHierarchy(t1, t2, t2s))) == code


def test_pipeline_report(tmp_path, capsys):
    assert run("pipeline", "--seed", 5, "--out", tmp_path) == 0
    report = (tmp_path / "report.txt").read_text()
    assert report == capsys.readouterr().out
    assert "hierarchy: PASS" in report and "pi-pulse transfer" in report
    # the T1 stage uses the calibrated pi-pulse, so its contrast is reduced
    t1 = FitResult.load(tmp_path / "t1.fit.json")
    rabi = FitResult.load(tmp_path / "rabi.fit.json")
    assert t1["amplitude"] < rabi["amplitude"]
    timing = (tmp_path / "echo.timing").read_text()
    signal = timing.split("# variant: signal\n")[1].split("# variant:")[0]
    assert len(TimingTable.from_text(signal).intervals("MW")) == 3
