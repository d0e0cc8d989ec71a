import json

import httpx
import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from tfch import experiments
from tfch.cli import main
from tfch.service import app


@pytest.fixture
def runner():
    return CliRunner()


def csv_body(text):
    return [ln for ln in text.splitlines() if not ln.startswith("#")]


def test_eigen_table3(runner):
    r = runner.invoke(main, ["eigen", "--family", "l1", "--mesh", "graded", "--gamma", "1,2",
                             "--alpha", "0.5", "--N", "100"])
    assert r.exit_code == 0, r.output
    rows = csv_body(r.output)
    assert rows[0].startswith("N,alpha,param,sigma_l1,lambda_min")
    assert [ln.split(",")[5:7] for ln in rows[1:]] == [["11.28", "17.16"], ["8.0", "12.36"]]


def test_config_file_and_flag_precedence(runner, tmp_path):
    cfg = tmp_path / "e.cfg"
    cfg.write_text("family = L1h\nmesh = graded\ngamma = 2\nalpha = 0.9\nN = 100\n")
    r = runner.invoke(main, ["eigen", "--config", str(cfg)])
    assert r.exit_code == 0
    assert csv_body(r.output)[1].split(",")[6] == "62.42"
    r = runner.invoke(main, ["eigen", "--config", str(cfg), "--N", "200"])
    assert csv_body(r.output)[1].split(",")[6] == "115.5"


def test_kernels_outputs(runner, tmp_path):
    out, rep = tmp_path / "k.csv", tmp_path / "k.json"
    r = runner.invoke(main, ["kernels", "--family", "L1", "--mesh", "graded", "--gamma", "2", "--N", "6",
                             "-o", str(out), "--report", str(rep)])
    assert r.exit_code == 0, r.output
    assert csv_body(out.read_text())[0] == "n,j,a_j"
    doc = json.loads(rep.read_text())
    assert doc["checks"] == {"orthogonal_identity": True, "complementary_identity": True, "criteria": True}


def test_kernels_report_on_stderr(runner):
    r = runner.invoke(main, ["kernels", "--N", "3"])
    assert r.exit_code == 0
    assert "n,j,a_j" in r.stdout and '"criteria"' in r.stderr


def test_failed_invariant_gives_exit_one(runner, monkeypatch):
    # with a zero tolerance round-off alone breaks the identity checks
    monkeypatch.setattr(experiments, "IDENTITY_TOL", 0.0)
    r = runner.invoke(main, ["kernels", "--family", "L1", "--mesh", "random", "--N", "40"])
    assert r.exit_code == 1
    assert "invariant checks failed: orthogonal_identity" in r.stderr


def test_errors(runner):
    r = runner.invoke(main, ["kernels", "--mesh", "ratio", "--N", "5"])
    assert r.exit_code == 1 and "ParameterError" in r.output
    r = runner.invoke(main, ["kernels", "--alpha", "2"])
    assert r.exit_code == 2
    r = runner.invoke(main, ["simulate", "--scheme", "L1", "--M", "8", "--T", "20", "--N", "2"])
    assert r.exit_code == 1 and "StepRestrictionError" in r.output


def test_simulate_to_directory(runner, tmp_path):
    out = tmp_path / "run"
    r = runner.invoke(main, ["simulate", "--scheme", "L1h", "--M", "8", "--T", "1", "--N", "10",
                             "--snapshots", "0.5,1", "-o", str(out)])
    assert r.exit_code == 0, r.output
    assert sorted(p.name for p in out.iterdir()) == ["meta.json", "phi_t0.5.csv", "phi_t1.csv", "trace.csv"]
    meta = json.loads((out / "meta.json").read_text())
    assert meta["meta"]["levels"] == 10 and all(meta["checks"].values())


def test_simulate_adaptive_flags(runner):
    r = runner.invoke(main, ["simulate", "--scheme", "L1h", "--M", "8", "--T", "0.5", "--adaptive",
                             "--eta", "100", "--tau-min", "0.01", "--tau-max", "0.1", "--warmup-gamma", "3",
                             "--warmup-N0", "5", "--warmup-T0", "0.01"])
    assert r.exit_code == 0, r.output
    assert "schedule=adaptive(" in r.output


def test_converge(runner):
    r = runner.invoke(main, ["converge", "--scheme", "L1a", "--N", "10,20", "--M", "8", "--gamma", "3"])
    assert r.exit_code == 0, r.output
    assert len(csv_body(r.output)) == 3


def test_remote_mode_matches_local(runner, monkeypatch):
    client = TestClient(app)
    monkeypatch.setattr(httpx, "post",
                        lambda url, json, timeout: client.post("/" + url.rsplit("/", 1)[-1], json=json))
    args = ["eigen", "--family", "L1a", "--mesh", "uniform", "--alpha", "0.5", "--N", "100"]
    local = runner.invoke(main, args)
    remote = runner.invoke(main, ["--url", "http://server:8000"] + args)
    assert local.exit_code == remote.exit_code == 0
    assert local.output == remote.output
    assert float(csv_body(local.output)[1].split(",")[4]) == pytest.approx(2.60e-3, rel=0.01)
