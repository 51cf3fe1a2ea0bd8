"""End-to-end tests of the command-line front end."""

import json
import subprocess
import sys

import numpy as np
import pytest

from simplexci.cli import main, read_panel_csv
from simplexci.estimators import (
    influence_set,
    make_weight_model,
    quadratic_components,
    treatment_functional,
)
from simplexci.inference import bonferroni_interval, confidence_set, projection_interval


def make_fixture(tmp_path, seed=0, K=3, n_j=12, total_T=5, name="panel.csv"):
    """CSV panel whose treated path is a fixed convex mix of donor paths."""
    rng = np.random.default_rng(seed)
    mu = 1.0 + rng.standard_normal((K, total_T))
    w_star = np.zeros(K)
    w_star[0] = 0.25
    w_star[1] = 0.5
    w_star[2:] = 0.25 / max(K - 2, 1)
    means = np.vstack([w_star @ mu, mu])
    rows = ["unit,group,time,outcome"]
    for g in range(K + 1):
        for i in range(n_j):
            for t in range(1, total_T + 1):
                y = float(means[g, t - 1] + 0.4 * rng.standard_normal())
                rows.append(f"g{g}u{i},{g},{t},{y!r}")
    path = tmp_path / name
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return path


def library_sweep(path, level=0.05, grid=4, t_match=None):
    panel = read_panel_csv(str(path), t_match=t_match)
    comps = quadratic_components(panel)
    infl = influence_set(panel, comps)
    model = make_weight_model(comps, infl)
    return panel, model, confidence_set(model, level, grid)


def test_infer_json_matches_library(tmp_path, capsys):
    path = make_fixture(tmp_path)
    rc = main(["infer", str(path), "--grid", "4"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["schema_version"] == 1
    assert doc["command"] == "infer"
    assert doc["alpha"] == 0.05
    assert doc["resolution"] == 4
    _, model, cs = library_sweep(path)
    assert len(doc["records"]) == len(cs.records)
    for got, want in zip(doc["records"], cs.records):
        assert got["w"] == [float(x) for x in want.w]
        assert got["T"] == want.statistic
        assert got["d"] == want.zeros
        assert got["k"] == want.dof
        assert got["critical"] == want.critical
        assert got["member"] is bool(want.member)
    # the data were built around w = (0.25, 0.5, 0.25); it must survive the test
    members = [tuple(r["w"]) for r in doc["records"] if r["member"]]
    assert (0.25, 0.5, 0.25) in members


def test_infer_csv_round_trips_floats(tmp_path):
    path = make_fixture(tmp_path, seed=1)
    out = tmp_path / "records.csv"
    rc = main(["infer", str(path), "--grid", "4", "--format", "csv", "--out", str(out)])
    assert rc == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "w_1,w_2,w_3,T,d,k,critical,member"
    _, model, cs = library_sweep(path)
    assert len(lines) == 1 + len(cs.records)
    for line, want in zip(lines[1:], cs.records):
        cells = line.split(",")
        assert [float(c) for c in cells[:3]] == [float(x) for x in want.w]
        assert float(cells[3]) == want.statistic  # 17 significant digits
        assert int(cells[4]) == want.zeros
        assert int(cells[5]) == want.dof
        assert float(cells[6]) == want.critical
        assert cells[7] == ("true" if want.member else "false")


def test_project_matches_library_in_both_formats(tmp_path, capsys):
    path = make_fixture(tmp_path, seed=2)
    _, model, cs = library_sweep(path)
    expected = [projection_interval(cs, j) for j in range(model.K)]

    rc = main(["project", str(path), "--grid", "4"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    for j, item in enumerate(doc["intervals"]):
        assert item["coordinate"] == j + 1
        assert item["lower"] == expected[j].lower
        assert item["upper"] == expected[j].upper
        assert item["empty"] is expected[j].empty

    out = tmp_path / "intervals.csv"
    rc = main(["project", str(path), "--grid", "4", "--format", "csv", "--out", str(out)])
    assert rc == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "coordinate,lower,upper,empty"
    for j, line in enumerate(lines[1:]):
        cells = line.split(",")
        assert int(cells[0]) == j + 1
        assert float(cells[1]) == expected[j].lower
        assert float(cells[2]) == expected[j].upper


def test_bonferroni_matches_library(tmp_path, capsys):
    path = make_fixture(tmp_path, seed=3, total_T=6)
    rc = main([
        "bonferroni", str(path), "--post", "6", "--grid", "4",
        "--alpha", "0.05", "--kappa", "0.005",
    ])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    panel, model, cs = library_sweep(path, level=0.005, t_match=5)
    theta_hat, v_hat = treatment_functional(panel, 6)
    want = bonferroni_interval(cs, theta_hat, v_hat, model.n, alpha=0.05, kappa=0.005)
    assert doc["theta_interval"]["lower"] == want.lower
    assert doc["theta_interval"]["upper"] == want.upper
    assert doc["theta_interval"]["empty"] is want.empty
    assert doc["kappa"] == 0.005
    assert doc["post_period"] == 6
    assert doc["weight_set"]["members"] == int(cs.member_mask.sum())


def test_malformed_csv_is_a_validation_error(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text(
        "unit,group,time,outcome\na,0,1,1.0\na,0,2,not-a-number\n", encoding="utf-8"
    )
    rc = main(["infer", str(bad)])
    assert rc == 1
    err = capsys.readouterr().err
    assert "row 3" in err and "not-a-number" in err

    missing = tmp_path / "cols.csv"
    missing.write_text("unit,group,period,outcome\na,0,1,1.0\n", encoding="utf-8")
    assert main(["infer", str(missing)]) == 1
    assert "header must be exactly" in capsys.readouterr().err

    assert main(["infer", str(tmp_path / "nope.csv")]) == 1
    assert "cannot read" in capsys.readouterr().err


def test_usage_errors_exit_1():
    with pytest.raises(SystemExit) as exc:
        main(["infer"])  # missing input path
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1


def test_config_file_merge_and_unknown_keys(tmp_path, capsys):
    path = make_fixture(tmp_path, seed=4)
    cfg = tmp_path / "run.cfg"
    cfg.write_text("alpha=0.2\ngrid=4\n# comment line\n", encoding="utf-8")
    rc = main(["project", str(path), "--alpha", "0.1", "--config", str(cfg)])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["alpha"] == 0.1  # the flag wins over the file
    assert doc["resolution"] == 4  # the file fills what the flag left open

    bad = tmp_path / "bad.cfg"
    bad.write_text("bogus=1\n", encoding="utf-8")
    assert main(["project", str(path), "--config", str(bad)]) == 1
    assert "bogus" in capsys.readouterr().err


def test_bonferroni_parameter_validation(tmp_path, capsys):
    path = make_fixture(tmp_path, seed=5, total_T=6)
    assert main(["bonferroni", str(path)]) == 1
    assert "--post" in capsys.readouterr().err
    assert main(["bonferroni", str(path), "--post", "1"]) == 1
    capsys.readouterr()
    assert main(["bonferroni", str(path), "--post", "6", "--kappa", "0.05"]) == 1
    assert "kappa" in capsys.readouterr().err


def test_degenerate_panel_strict_is_a_numerical_error(tmp_path, capsys):
    # constant outcomes give a zero covariance everywhere on the lattice
    rows = ["unit,group,time,outcome"]
    for g in range(3):
        for i in range(3):
            for t in (1, 2, 3):
                rows.append(f"g{g}u{i},{g},{t},1.0")
    path = tmp_path / "flat.csv"
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    rc = main(["infer", str(path), "--grid", "4", "--strict"])
    assert rc == 2
    assert "numerical error" in capsys.readouterr().err
    # without --strict the sweep degrades point by point instead of failing
    with pytest.warns(RuntimeWarning):
        rc = main(["infer", str(path), "--grid", "4"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert all(not r["member"] for r in doc["records"])
    assert all("error" in r for r in doc["records"])


def test_simulate_reruns_are_byte_identical(tmp_path):
    args = [
        sys.executable, "-m", "simplexci", "simulate",
        "--K", "3", "--nj", "10", "--reps", "3", "--seed", "7",
        "--grid", "6", "--projection",
    ]
    first = tmp_path / "a.json"
    second = tmp_path / "b.json"
    for out in (first, second):
        proc = subprocess.run(args + ["--out", str(out)], capture_output=True)
        assert proc.returncode == 0, proc.stderr.decode()
    assert first.read_bytes() == second.read_bytes()
    doc = json.loads(first.read_text(encoding="utf-8"))
    assert doc["schema_version"] == 1
    assert doc["reps"] == 3
    assert "timing_seconds" not in doc


def test_simulate_csv_format(tmp_path, capsys):
    rc = main(["simulate", "--K", "3", "--nj", "10", "--reps", "2", "--seed", "1",
               "--format", "csv"])
    assert rc == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "key,value"
    keys = {line.split(",")[0] for line in lines[1:]}
    assert "coverage" in keys and "seed" in keys
