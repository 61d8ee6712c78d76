import json
import subprocess
import sys

import pytest

from graphpde.cli import main

ADV = "dt(u) + c*dx(u) = 0\nic u = g\nperiodic\n"


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds") / "adv"
    assert main(["gen-data", "--family", "advection", "--n", "4", "--n-x", "16", "--n-t", "6",
                 "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def trained(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "train"
    assert main(["train", "--data", str(dataset), "--profile", "tiny", "--iterations", "3", "--batch-size", "2",
                 "--n-points", "16", "--out", str(out)]) == 0
    return out


def test_gen_data_deterministic(dataset, tmp_path):
    assert main(["gen-data", "--family", "advection", "--n", "4", "--n-x", "16", "--n-t", "6",
                 "--out", str(tmp_path / "again")]) == 0
    a = json.loads((dataset / "manifest.json").read_text())["data_sha256"]
    b = json.loads((tmp_path / "again" / "manifest.json").read_text())["data_sha256"]
    assert a == b
    assert json.loads((dataset / "config.json").read_text())["family"] == "advection"


def test_train_writes_checkpoint_and_config(trained):
    assert (trained / "checkpoint" / "manifest.json").exists()
    assert (trained / "metrics.jsonl").exists()
    cfg = json.loads((trained / "config.json").read_text())
    assert cfg["profile"] == "tiny" and cfg["iterations"] == 3
    assert cfg["shift_augment"] is False


def test_train_shift_augment_flag(dataset, tmp_path):
    assert main(["train", "--data", str(dataset), "--profile", "tiny", "--iterations", "2", "--batch-size", "2",
                 "--n-points", "16", "--shift-augment", "--out", str(tmp_path / "s")]) == 0
    assert json.loads((tmp_path / "s" / "config.json").read_text())["shift_augment"] is True


def test_eval_is_reproducible(trained, dataset, tmp_path, capsys):
    args = ["eval", "--ckpt", str(trained / "checkpoint"), "--data", str(dataset)]
    assert main(args + ["--out", str(tmp_path / "e1")]) == 0
    assert main(args + ["--out", str(tmp_path / "e2")]) == 0
    a = json.loads((tmp_path / "e1" / "eval.json").read_text())
    b = json.loads((tmp_path / "e2" / "eval.json").read_text())
    assert a == b


def test_finetune_reports_base_digest(trained, dataset, tmp_path, capsys):
    assert main(["finetune", "--ckpt", str(trained / "checkpoint"), "--data", str(dataset), "--iterations", "2",
                 "--out", str(tmp_path / "ft")]) == 0
    digest = json.loads((trained / "checkpoint" / "manifest.json").read_text())["sha256"]
    assert f"base digest {digest}" in capsys.readouterr().out


def test_config_file_precedence(dataset, tmp_path):
    conf = tmp_path / "c.yaml"
    conf.write_text("profile: tiny\niterations: 2\nbatch_size: 2\nn_points: 8\nlr: 0.01\n")
    assert main(["train", "--config", str(conf), "--data", str(dataset), "--lr", "0.002",
                 "--out", str(tmp_path / "r")]) == 0
    cfg = json.loads((tmp_path / "r" / "config.json").read_text())
    assert cfg["lr"] == 0.002 and cfg["iterations"] == 2


def test_exit_codes(dataset, tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("lr: -1\nprofile: tiny\n")
    assert main(["train", "--config", str(bad), "--data", str(dataset), "--out", str(tmp_path / "x")]) == 2
    unknown = tmp_path / "unknown.yaml"
    unknown.write_text("learning_rate: 0.1\n")
    assert main(["train", "--config", str(unknown), "--data", str(dataset)]) == 2
    assert main(["train", "--data", str(tmp_path / "missing"), "--out", str(tmp_path / "y")]) == 3
    assert main(["eval", "--ckpt", str(tmp_path / "nock"), "--data", str(dataset), "--out", str(tmp_path / "z")]) == 3


def test_inspect_dag(tmp_path, capsys):
    pde = tmp_path / "adv.pde"
    pde.write_text(ADV)
    assert main(["inspect-dag", str(pde)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("digraph") and "violations 0" in out
    bad = tmp_path / "bad.pde"
    bad.write_text("dt(u) + c*dx(u) = = 0\nic u = g\nperiodic\n")
    assert main(["inspect-dag", str(bad)]) == 3
    assert "line 1" in capsys.readouterr().err


def test_invert_scalar(tmp_path, capsys):
    pde = tmp_path / "adv.pde"
    pde.write_text(ADV)
    assert main(["invert", "--pde", str(pde), "--truth", "c=0.7", "--bounds", "c=-2:2", "--n-ic", "2",
                 "--swarm", "10", "--pso-iterations", "15", "--n-x", "32", "--n-t", "21",
                 "--out", str(tmp_path / "inv")]) == 0
    rep = json.loads((tmp_path / "inv" / "report.json").read_text())
    assert rep["errors"]["c"] < 0.02
    assert "recovered" in capsys.readouterr().out
    assert main(["invert", "--pde", str(pde), "--truth", "c=0.7", "--out", str(tmp_path / "nob")]) == 2


def test_console_script_help():
    r = subprocess.run([sys.executable, "-m", "graphpde.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "scaling-study" in r.stdout
