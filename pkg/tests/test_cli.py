import json

import numpy as np
import pytest

import sysrisk as sr
from sysrisk.cli import cli_main

from conftest import base_market_config


@pytest.fixture()
def liab_csv(tmp_path, liab2):
    path = tmp_path / "liab.csv"
    with open(path, "w") as fh:
        for row in liab2.matrix:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    return path


@pytest.fixture()
def study_json(tmp_path):
    cfg = {
        "kind": "corr_X",
        "sweep": [0.0],
        "n_scenarios": 2000,
        "seed": 7,
        "grid_step": 0.25,
        "epsilon": 1e-4,
        "plane_grid_step": 0.1,
        "delta": 1e-2,
    }
    path = tmp_path / "study.json"
    path.write_text(json.dumps(cfg))
    return path


def test_clear_prints_payments(liab_csv, capsys):
    rc = cli_main(["clear", "--liabilities", str(liab_csv), "--x", "0.1,1.0", "--beta", "0.5"])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["payments"] == pytest.approx([0.7, 0.8], abs=1e-10)
    assert out["defaulting"] == [1]
    assert out["aggregate"] == pytest.approx(0.175, abs=1e-10)


def test_clear_json_liabilities(tmp_path, capsys):
    path = tmp_path / "liab.json"
    path.write_text(json.dumps({"d": 2, "bilateral": 0.6, "society": 0.2}))
    rc = cli_main(["clear", "--liabilities", str(path), "--x", "1.0,1.0"])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["payments"] == pytest.approx([0.8, 0.8])


def test_risk_subcommand(tmp_path, capsys):
    samples = tmp_path / "samples.csv"
    samples.write_text("scenario,lambda_value\n0,-1\n1,0\n2,1\n3,2\n")
    rc = cli_main(["risk", "--kind", "es", "--alpha", "0.5", "--samples", str(samples)])
    assert rc == 0
    assert float(capsys.readouterr().out) == 0.5
    rc = cli_main(["risk", "--kind", "var", "--alpha", "0.25", "--samples", str(samples)])
    assert float(capsys.readouterr().out) == 0.0
    assert rc == 0


def test_simulate_deterministic(tmp_path, capsys):
    cfg = base_market_config(n=200)
    cfg_path = tmp_path / "market.json"
    cfg_path.write_text(json.dumps(cfg.to_dict()))
    rc1 = cli_main(["simulate", "--config", str(cfg_path), "--out", str(tmp_path / "a")])
    rc2 = cli_main(["simulate", "--config", str(cfg_path), "--out", str(tmp_path / "b")])
    assert rc1 == rc2 == 0
    for name in ("positions.csv", "eligibles.csv", "market_meta.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    header = (tmp_path / "a" / "positions.csv").read_text().splitlines()[0]
    assert header == "scenario,asset_1,asset_2"


def test_simulate_env_seed_override(tmp_path, capsys, monkeypatch):
    cfg = base_market_config(n=100)
    cfg_path = tmp_path / "market.json"
    cfg_path.write_text(json.dumps(cfg.to_dict()))
    monkeypatch.setenv("SYSRISK_SEED", "99")
    rc = cli_main(["simulate", "--config", str(cfg_path), "--seed", "55",
                   "--out", str(tmp_path / "env")])
    assert rc == 0
    meta = json.loads((tmp_path / "env" / "market_meta.json").read_text())
    assert meta["seed"] == 99  # env beats both flag and config


def test_study_command_and_rerun_bytes(tmp_path, study_json, capsys):
    rc = cli_main(["study", "--config", str(study_json), "--out", str(tmp_path / "s1")])
    assert rc == 0
    rc = cli_main(["study", "--config", str(study_json), "--out", str(tmp_path / "s2")])
    assert rc == 0
    for f in sorted(p.name for p in (tmp_path / "s1").iterdir()):
        assert (tmp_path / "s1" / f).read_bytes() == (tmp_path / "s2" / f).read_bytes()


def test_boundary_command(tmp_path, study_json, capsys):
    rc = cli_main(["boundary", "--config", str(study_json), "--out", str(tmp_path / "b")])
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert report["points"] == 9
    lines = (tmp_path / "b" / "boundary_intrinsic.csv").read_text().splitlines()
    assert lines[0].startswith("# {")
    assert lines[1].startswith("origin_index,lambda_1")


def test_minimal_command(tmp_path, study_json, capsys):
    rc = cli_main(["minimal", "--config", str(study_json), "--out", str(tmp_path / "m")])
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert 0 < report["k_min"] <= 2
    assert (tmp_path / "m" / "minimal_points.csv").exists()


def test_histogram_command(tmp_path, study_json, capsys):
    rc = cli_main(["histogram", "--config", str(study_json), "--out", str(tmp_path / "h")])
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert report["lam"] is not None
    assert (tmp_path / "h" / "histogram_intrinsic.csv").exists()


def test_error_reports_machine_readable(tmp_path, capsys):
    rc = cli_main(["clear", "--liabilities", str(tmp_path / "missing.csv"), "--x", "1,1"])
    assert rc != 0
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "FileNotFoundError"

    bad = tmp_path / "bad.csv"
    bad.write_text("0,0,0\n0.2,0.1,0.6\n0.2,0.6,0\n")  # self-liability
    rc = cli_main(["clear", "--liabilities", str(bad), "--x", "1,1"])
    assert rc == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ValidationError"


def test_unknown_flag_exits_nonzero(capsys):
    rc = cli_main(["clear", "--nope"])
    assert rc != 0
