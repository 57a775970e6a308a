import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from jsrbound.cli import int_list, main
from jsrbound.sysmodel import SwitchedSystem, load_traces, save_system


@pytest.fixture
def files(tmp_path):
    demo = SwitchedSystem.uniform([np.diag([0.5, 0.4]), np.array([[0.3, 0.4], [-0.2, 0.5]])])
    paths = {}
    for name, sys_ in {
        "demo": demo,
        "half": SwitchedSystem.uniform([0.5 * np.eye(2)]),
        "double": SwitchedSystem.uniform([2 * np.eye(2)]),
        "diag": SwitchedSystem.uniform([np.diag([0.9, 0.3])]),
        "nilpotent": SwitchedSystem.uniform([[[0.0, 1.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]]),
    }.items():
        p = tmp_path / f"{name}.json"
        save_system(sys_, p)
        paths[name] = str(p)
    paths["dir"] = tmp_path
    return paths


def simulate(files, name, N, seed=0, extra=()):
    out = str(files["dir"] / f"{name}-{N}-{seed}.jsonl")
    assert main(["simulate", files[name], "--N", str(N), "--seed", str(seed), "--out", out, *extra]) == 0
    return out


def test_int_list():
    assert int_list("20,120") == (20, 120)
    assert int_list("20:420:200") == (20, 220, 420)
    assert int_list("1:3") == (1, 2, 3)


def test_simulate_writes_unit_traces(files):
    out = simulate(files, "demo", 100)
    s = load_traces(out)
    assert s.N == 100 and not s.has_hidden
    np.testing.assert_allclose(np.linalg.norm(s.initial_states(), axis=1), 1.0)


def test_simulate_is_deterministic(files):
    a = simulate(files, "demo", 30, seed=4)
    b = str(files["dir"] / "again.jsonl")
    main(["simulate", files["demo"], "--N", "30", "--seed", "4", "--out", b])
    assert open(a).read() == open(b).read()


def test_simulate_keep_modes(files):
    out = simulate(files, "demo", 10, extra=("--keep-modes", "--l", "3"))
    s = load_traces(out)
    assert s.has_hidden and s.l == 3


def test_simulate_csv(files):
    out = str(files["dir"] / "t.csv")
    assert main(["simulate", files["demo"], "--N", "4", "--csv", "--out", out]) == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 8 and set(rows[0]) == {"trace", "step", "x0", "x1"}


@pytest.mark.parametrize("N", ["0", "-3"])
def test_simulate_bad_N(files, N):
    assert main(["simulate", files["demo"], "--N", N, "--out", str(files["dir"] / "x")]) == 2


def test_analyze_stable(files, capsys):
    tr = simulate(files, "half", 1000)
    assert main(["analyze", tr, "--m", "1"]) == 0
    out, err = capsys.readouterr()
    rep = json.loads(out)
    assert rep["upper_best"] < 1 and rep["verdict"] == "stable"
    assert "stable" in err


def test_analyze_unstable(files, capsys):
    tr = simulate(files, "double", 20)
    assert main(["analyze", tr, "--m", "1"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["lower"] > 1 and rep["verdict"] == "unstable"


def test_analyze_sample_too_small(files, capsys):
    tr = simulate(files, "demo", 3)
    assert main(["analyze", tr, "--m", "2"]) == 2
    assert "N >= 4" in capsys.readouterr().err


def test_analyze_requires_mode_information(files):
    tr = simulate(files, "demo", 20)
    assert main(["analyze", tr]) == 2


def test_analyze_csv_and_out(files):
    tr = simulate(files, "demo", 50)
    out = str(files["dir"] / "rep.csv")
    assert main(["analyze", tr, "--m", "2", "--csv", "--out", out]) == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 1 and rows[0]["N"] == "50"


def test_analyze_ignores_hidden_modes(files, capsys):
    tr = simulate(files, "demo", 60, extra=("--keep-modes",))
    assert main(["analyze", tr, "--m", "2"]) == 0
    ref = capsys.readouterr().out
    # scramble the hidden mode fields: the report must not change
    junk = ["x", None, [99, 99], {"a": 1}, -5, [0.5]]
    lines = []
    for i, line in enumerate(open(tr)):
        obj = json.loads(line)
        obj["modes"] = junk[i % len(junk)]
        lines.append(json.dumps(obj))
    fuzzed = str(files["dir"] / "fuzzed.jsonl")
    open(fuzzed, "w").write("\n".join(lines) + "\n")
    assert main(["analyze", fuzzed, "--m", "2"]) == 0
    assert capsys.readouterr().out == ref


def test_analyze_missing_file(files):
    assert main(["analyze", str(files["dir"] / "nope.jsonl"), "--m", "2"]) == 2


def test_analyze_config_file(files, capsys):
    tr = simulate(files, "half", 200)
    cfg = files["dir"] / "cfg.json"
    cfg.write_text(json.dumps({"m": 1, "beta": 0.5}))
    assert main(["analyze", tr, "--config", str(cfg)]) == 0
    assert json.loads(capsys.readouterr().out)["beta"] == 0.5
    # explicit flags beat the config
    assert main(["analyze", tr, "--config", str(cfg), "--beta", "0.9"]) == 0
    assert json.loads(capsys.readouterr().out)["beta"] == 0.9
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["analyze", tr, "--config", str(cfg)]) == 2


def test_whitebox(files, capsys):
    assert main(["whitebox", files["diag"]]) == 0
    br = json.loads(capsys.readouterr().out)
    assert br["lower"] == pytest.approx(0.9) and br["upper"] == pytest.approx(0.9, abs=1e-3)
    assert main(["whitebox", files["nilpotent"]]) == 0
    br = json.loads(capsys.readouterr().out)
    assert br["lower"] == pytest.approx(1.0) and br["upper"] == pytest.approx(1.0, abs=1e-3)


def test_whitebox_missing_file(files):
    assert main(["whitebox", str(files["dir"] / "missing.json")]) == 2


def test_experiment(files, capsys):
    summ = str(files["dir"] / "summary.csv")
    gp = str(files["dir"] / "plot.gp")
    args = ["experiment", "--trials", "2", "--N-grid", "20,60", "--seed", "1", "--summary", summ, "--gnuplot", gp, "--with-oracle", "--depth", "4"]
    assert main(args) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 4
    assert all(r["rho_hi"] for r in rows)
    assert len(list(csv.DictReader(open(summ)))) == 2
    assert "summary.csv" in open(gp).read()


def test_experiment_empty_grid(files):
    assert main(["experiment", "--N-grid", ""]) == 2


def test_validate_beta(files, capsys):
    assert main(["validate-beta", "--trials", "3", "--N-range", "30,50", "--depth", "4", "--seed", "2"]) == 0
    out, err = capsys.readouterr()
    res = json.loads(out)
    assert res["trials"] == 3 and "Wilson" in err
    assert main(["validate-beta", "--trials", "3", "--N-range", "30,50", "--depth", "4", "--seed", "2"]) == 0
    assert json.loads(capsys.readouterr().out) == res


def test_netctl(capsys):
    assert main(["netctl", "--users", "3", "--N", "40,80", "--csv"]) == 0
    out, err = capsys.readouterr()
    assert len(out.strip().splitlines()) == 3
    assert "verdict" in err


def test_netctl_bad_users():
    assert main(["netctl", "--users", "1", "--N", "40"]) == 2


def test_usage_errors():
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["analyze"]) == 2


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "jsrbound.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "upper_best" in res.stdout and "validate-beta" in res.stdout
