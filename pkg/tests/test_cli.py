import csv
import json
import math
import subprocess
import sys

import pytest

from fishersync.cli import load_run_config, main, parse_run_config, ConfigError

GAUSS = {"kind": "gaussian", "variance": 1.0}
LOGISTIC = {"kind": "logistic", "scale": 1.0}


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return path


def make_config(tmp_path, pattern="p.json", initial=(GAUSS,), **extra):
    cfg = {"version": 1, "pattern": pattern, "catalog": {"initial": list(initial), "noise": GAUSS}, "trials": 3000, "seed": 5}
    cfg.update(extra)
    return write_json(tmp_path / "cfg.json", cfg)


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_gen_then_validate(tmp_path, capsys):
    out = tmp_path / "t8.json"
    assert main(["pattern", "gen", "--kind", "tournament", "--n", "8", "--seed", "7", "-o", str(out)]) == 0
    assert main(["pattern", "validate", str(out)]) == 0
    assert len(json.loads(out.read_text())["events"]) == 7


def test_gen_random_and_hypercube(tmp_path):
    r = tmp_path / "r.json"
    assert main(["pattern", "gen", "--kind", "random", "--n", "30", "--rounds", "4", "--density", "0.5", "--seed", "1", "-o", str(r)]) == 0
    assert main(["pattern", "validate", str(r)]) == 0
    h = tmp_path / "h.json"
    assert main(["pattern", "gen", "--kind", "hypercube", "--n", "16", "-o", str(h)]) == 0
    assert len(json.loads(h.read_text())["events"]) == 64


def test_random_gen_needs_seed(tmp_path, monkeypatch):
    monkeypatch.delenv("FSYNC_SEED", raising=False)
    args = ["pattern", "gen", "--kind", "random", "--n", "8", "--rounds", "2", "-o", str(tmp_path / "x.json")]
    assert main(args) == 2
    monkeypatch.setenv("FSYNC_SEED", "3")
    assert main(args) == 0


def test_validate_counterexample(tmp_path, capsys):
    p = write_json(tmp_path / "bad.json", {"n": 2, "events": [
        {"round": 0, "observer": 0, "observed": 1},
        {"round": 1, "observer": 1, "observed": 0},
    ]})
    assert main(["pattern", "validate", str(p)]) == 1
    assert "round 1: sensor 1 observes 0" in capsys.readouterr().out


def test_gen_not_power_of_two(tmp_path, capsys):
    assert main(["pattern", "gen", "--kind", "tournament", "--n", "6", "-o", str(tmp_path / "x.json")]) == 2
    assert "NotPowerOfTwo" in capsys.readouterr().err


def test_bounds_two_sensors(tmp_path):
    write_json(tmp_path / "p.json", {"n": 2, "events": [{"round": 0, "observer": 0, "observed": 1}]})
    cfg = make_config(tmp_path)
    out = tmp_path / "b.csv"
    assert main(["bounds", "--config", str(cfg), "-o", str(out)]) == 0
    table = rows(out)
    assert list(table[0]) == ["sensor", "round", "J", "var_floor"]
    winner = [r for r in table if r["sensor"] == "0" and r["round"] == "1"][0]
    assert float(winner["J"]) == 1.5
    assert float(winner["var_floor"]) == pytest.approx(2 / 3, rel=1e-15)
    first = out.read_bytes()
    assert main(["bounds", "--config", str(cfg), "-o", str(out)]) == 0
    assert out.read_bytes() == first
    assert b"\r" not in first


def test_bounds_empty_pattern(tmp_path):
    write_json(tmp_path / "p.json", {"n": 3, "events": []})
    cfg = make_config(tmp_path, initial=(GAUSS, {"kind": "gaussian", "variance": 4.0}))
    out = tmp_path / "b.csv"
    assert main(["bounds", "--config", str(cfg), "-o", str(out)]) == 0
    assert [(r["sensor"], r["round"], float(r["J"])) for r in rows(out)] == [("0", "0", 1.0), ("1", "0", 0.25), ("2", "0", 1.0)]


def test_bounds_pattern_flag_overrides(tmp_path):
    write_json(tmp_path / "q.json", {"n": 2, "events": []})
    cfg = make_config(tmp_path, pattern="missing.json")
    assert main(["bounds", "--config", str(cfg), "--pattern", str(tmp_path / "q.json"), "-o", str(tmp_path / "b.csv")]) == 0
    assert main(["bounds", "--config", str(cfg), "-o", str(tmp_path / "b.csv")]) == 2


@pytest.fixture
def golden(tmp_path):
    main(["pattern", "gen", "--kind", "tournament", "--n", "8", "--seed", "2", "-o", str(tmp_path / "p.json")])
    return tmp_path


def run_pair(d, cfg, *flags):
    assert main(["bounds", "--config", str(cfg), "-o", str(d / "b.csv")]) == 0
    assert main(["run", "--config", str(cfg), "--workers", "1", "-o", str(d / "r.csv"), *flags]) == 0
    return d / "r.csv", d / "b.csv"


def test_gaussian_golden_passes(golden, capsys):
    cfg = make_config(golden, trials=20000)
    r, b = run_pair(golden, cfg)
    capsys.readouterr()
    assert main(["report", "--result", str(r), "--bounds", str(b)]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "ALL GATES PASS" in out
    ratios = [float(x["ratio_var_times_J"]) for x in rows(r)]
    assert all(abs(v - 1) < 0.06 for v in ratios)
    summary = json.loads((golden / "r.csv.report.json").read_text())
    assert summary["passed"] is True


def test_run_is_deterministic(golden):
    cfg = make_config(golden)
    r, _ = run_pair(golden, cfg)
    first = r.read_bytes()
    run_pair(golden, cfg)
    assert r.read_bytes() == first


def test_doubled_variances_fail(golden, capsys):
    cfg = make_config(golden, trials=20000)
    r, b = run_pair(golden, cfg)
    table = rows(r)
    for x in table:
        x["variance"] = repr(2 * float(x["variance"]))
    with open(r, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(table[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(table)
    capsys.readouterr()
    assert main(["report", "--result", str(r), "--bounds", str(b)]) == 1
    assert "FAIL variance_within_delta0" in capsys.readouterr().out


def test_logistic_report(golden, capsys):
    cfg = make_config(golden, initial=(LOGISTIC, GAUSS), trials=20000)
    r, b = run_pair(golden, cfg)
    capsys.readouterr()
    assert main(["report", "--result", str(r), "--bounds", str(b)]) == 0
    out = capsys.readouterr().out
    assert "PASS accuracy_dominates_fi" in out
    summary = json.loads((golden / "r.csv.report.json").read_text())
    assert summary["delta0"] == pytest.approx(math.pi**2 / 9, abs=1e-4)


def test_midpoint_and_dump(golden):
    cfg = make_config(golden, trials=50)
    r, _ = run_pair(golden, cfg, "--algorithm", "midpoint", "--dump-trials")
    table = rows(r)
    assert all(x["accuracy"] == "" and x["ratio_var_times_J"] == "" for x in table)
    dumped = rows(golden / "r.trials.csv")
    assert len(dumped) == 50 * 8 * 4


def test_report_shape_mismatch(golden, tmp_path):
    cfg = make_config(golden, trials=100)
    r, _ = run_pair(golden, cfg)
    write_json(golden / "two.json", {"n": 2, "events": []})
    other = golden / "b2.csv"
    assert main(["bounds", "--config", str(cfg), "--pattern", str(golden / "two.json"), "-o", str(other)]) == 0
    assert main(["report", "--result", str(r), "--bounds", str(other)]) == 2
    assert main(["report", "--result", str(r), "--bounds", str(golden / "nope.csv")]) == 2


def test_run_dependent_pattern_exit_3(tmp_path):
    write_json(tmp_path / "p.json", {"n": 2, "events": [
        {"round": 0, "observer": 0, "observed": 1},
        {"round": 1, "observer": 1, "observed": 0},
    ]})
    cfg = make_config(tmp_path)
    assert main(["run", "--config", str(cfg), "-o", str(tmp_path / "r.csv")]) == 3
    assert main(["bounds", "--config", str(cfg), "-o", str(tmp_path / "b.csv")]) == 3


def test_seed_fallback(golden, monkeypatch):
    cfg = json.loads(make_config(golden).read_text())
    del cfg["seed"]
    path = write_json(golden / "noseed.json", cfg)
    monkeypatch.delenv("FSYNC_SEED", raising=False)
    assert main(["run", "--config", str(path), "-o", str(golden / "r.csv")]) == 2
    monkeypatch.setenv("FSYNC_SEED", "5")
    assert main(["run", "--config", str(path), "-o", str(golden / "r.csv")]) == 0
    with_seed = golden / "r2.csv"
    assert main(["run", "--config", str(make_config(golden)), "-o", str(with_seed)]) == 0
    assert (golden / "r.csv").read_bytes() == with_seed.read_bytes()


@pytest.mark.parametrize(
    "mutate",
    [
        lambda c: c.pop("version"),
        lambda c: c.update(version=2),
        lambda c: c.update(colour="red"),
        lambda c: c["catalog"].update(extra=1),
        lambda c: c["catalog"]["initial"].append({"kind": "gaussian", "variance": -1}),
        lambda c: c.update(assignment=[0, 0]),
        lambda c: c.update(algorithm="newton"),
        lambda c: c.update(tau_star={"uniform": [1, 0]}),
        lambda c: c.update(trials=1),
    ],
)
def test_bad_configs_exit_2(golden, mutate):
    cfg = json.loads(make_config(golden).read_text())
    mutate(cfg)
    path = write_json(golden / "bad.json", cfg)
    assert main(["run", "--config", str(path), "-o", str(golden / "r.csv")]) == 2


def test_config_relative_pattern_path(golden):
    cfg = load_run_config(make_config(golden))
    assert cfg.pattern_path == golden / "p.json"
    with pytest.raises(ConfigError):
        parse_run_config({"version": 1})


def test_verify_fii(capsys):
    assert main(["verify-fii"]) == 0
    out = capsys.readouterr().out
    assert "slack=" in out and "OK" in out
    assert main(["verify-fii", "--two-d", "--rho", "0", "0.5"]) == 0
    assert capsys.readouterr().out.count("OK") == 2


def test_usage_error_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_console_entry_point(tmp_path):
    out = tmp_path / "t.json"
    proc = subprocess.run(
        [sys.executable, "-m", "fishersync", "pattern", "gen", "--kind", "tournament", "--n", "4", "-o", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert out.exists()
