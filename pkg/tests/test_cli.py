import csv
import json
from pathlib import Path

import pytest

from fdcarleman import calculus
from fdcarleman.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(cmd, config, out, *extra):
    return main([cmd, "--config", str(CONFIGS / config), "--out", str(out), *extra])


def test_identities_default(tmp_path, capsys):
    assert run("identities", "identities.toml", tmp_path) == 0
    report = json.loads((tmp_path / "identities.json").read_text())
    assert report["failures"] == []


def test_identities_minimal_grid(tmp_path):
    cfg = tmp_path / "min.toml"
    cfg.write_text("[identities]\ntrials = 20\nn_values = [3]\nm_values = [2]\n")
    assert main(["identities", "--config", str(cfg), "--out", str(tmp_path)]) == 0


def test_identities_broken_operator(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(calculus, "avg_h", calculus.diff_h)
    cfg = tmp_path / "small.toml"
    cfg.write_text("[identities]\ntrials = 5\nn_values = [8]\nm_values = [3]\n")
    assert main(["identities", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert "average_product_rule" in err["failed"]


def test_control_report(tmp_path):
    assert run("control", "control.toml", tmp_path) == 0
    report = json.loads((tmp_path / "control_report.json").read_text())
    assert report["checks"]["target"]["holds"]
    assert report["ledger"]["feasible"]
    rows = list(csv.DictReader((tmp_path / "control_trajectory.csv").open()))
    assert list(rows[0]) == ["n", "t_n", "x_i", "y", "v"]
    # recheck the target relation from the files alone
    M = report["M"]
    yM = [float(r["y"]) for r in rows if int(r["n"]) == M]
    assert len(yM) == report["N"]
    assert abs(sum(v * v for v in yM) * report["h"] - report["yM_norm"] ** 2) <= 1e-12


def test_control_zero_data(tmp_path):
    cfg = tmp_path / "zero.toml"
    text = (CONFIGS / "control.toml").read_text().replace('kind = "modes"', 'kind = "zero"')
    cfg.write_text(text)
    assert main(["control", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "control_report.json").read_text())["v_norm"] == 0.0


def test_control_infeasible(tmp_path, capsys):
    cfg = tmp_path / "infeasible.toml"
    cfg.write_text("[discretization]\nh = 0.05\n")
    assert main(["control", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "h <= min(h0, h1)" in capsys.readouterr().err


def test_semilinear(tmp_path):
    assert run("semilinear", "semilinear.toml", tmp_path) == 0
    report = json.loads((tmp_path / "semilinear_report.json").read_text())
    assert report["fixed_point_converged"]


def test_decay_empty_sequence(tmp_path):
    cfg = tmp_path / "empty.toml"
    cfg.write_text("[discretization]\nh_sequence = []\n")
    assert main(["decay-study", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_decay_rows_sorted(tmp_path):
    cfg = tmp_path / "d.toml"
    cfg.write_text("[discretization]\nh_sequence = [0.025, 0.05, 0.0125]\n"
                   "[weights]\ntau2 = 0.2\ndelta1 = 0.49\n")
    main(["decay-study", "--config", str(cfg), "--out", str(tmp_path)])
    rows = list(csv.DictReader((tmp_path / "decay_study.csv").open()))
    hs = [float(r["h"]) for r in rows]
    assert hs == sorted(hs, reverse=True) and len(rows) == 3
    assert all(len(r["phi"].replace("-", "").replace(".", "").split("e")[0]) >= 16
               for r in rows)


def test_decay_threads_match_serial(tmp_path):
    cfg = tmp_path / "d.toml"
    cfg.write_text("[discretization]\nh_sequence = [0.05, 0.025, 0.0125]\n"
                   "[initial_data]\nkind = \"random\"\n")
    main(["decay-study", "--config", str(cfg), "--out", str(tmp_path / "a"), "--threads", "1"])
    main(["decay-study", "--config", str(cfg), "--out", str(tmp_path / "b"), "--threads", "3"])
    assert (tmp_path / "a/decay_study.csv").read_bytes() == \
        (tmp_path / "b/decay_study.csv").read_bytes()


def test_audit(tmp_path):
    assert run("audit", "audit.toml", tmp_path) == 0
    report = json.loads((tmp_path / "audit_report.json").read_text())
    assert report["ledger"]["feasible"] and report["seed"] == 11
    rows = list(csv.DictReader((tmp_path / "carleman_samples.csv").open()))
    assert len(rows) == 50


def test_bad_arguments(tmp_path):
    assert main(["nonsense"]) == 2
    assert main(["control", "--config", str(tmp_path / "missing.toml")]) == 2
