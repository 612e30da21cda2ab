import csv
import json
from pathlib import Path

import numpy as np
import pytest

from sddp.cli import main

DATA = Path(__file__).parent / "data"

CONFIG = """
[panel.synthetic]
N = 12
T = 120
K = 2
K1 = 1
sigma_u = 0.5
sigma_eps = 0.2
[net]
architecture = "causal-conv"
blocks = 1
channel_width = 4
[train]
max_epochs = 10
[experiment]
methods = ["sddp", "vanilla"]
window = 3
repetitions = 2
missing_rates = [0.0, 0.2]
num_factors = 2
"""


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "exp.toml"
    p.write_text(CONFIG)
    return p


@pytest.fixture
def simulated(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--out", str(out), "--N", "10", "--T", "90", "--K", "2",
                 "--sigma-u", "0.3", "--seed", "4"]) == 0
    return out


def test_simulate_outputs(simulated):
    for name in ("panel.csv", "factors.csv", "gstar_true.csv", "common.csv", "loadings.csv",
                 "truth.json"):
        assert (simulated / name).exists()
    truth = json.loads((simulated / "truth.json").read_text())
    assert truth["config"]["N"] == 10 and truth["config"]["seed"] == 4
    with open(simulated / "panel.csv") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 91 and len(rows[0]) == 11


def test_simulate_is_reproducible(simulated, tmp_path):
    main(["simulate", "--out", str(tmp_path / "again"), "--N", "10", "--T", "90", "--K", "2",
          "--sigma-u", "0.3", "--seed", "4"])
    assert (tmp_path / "again" / "panel.csv").read_bytes() == \
        (simulated / "panel.csv").read_bytes()


def test_train_then_forecast(simulated, config, tmp_path):
    bundle = tmp_path / "bundle"
    assert main(["train", "--config", str(config), "--csv", str(simulated / "panel.csv"),
                 "--method", "sddp", "--out", str(bundle)]) == 0
    out = tmp_path / "fc.csv"
    assert main(["forecast", "--bundle", str(bundle), "--csv", str(simulated / "panel.csv"),
                 "--out", str(out)]) == 0
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "target_time", "forecast"] and len(rows) == 91
    assert rows[5][:2] == ["4", "5"]
    assert np.all(np.isfinite([float(r[2]) for r in rows[1:]]))


def test_train_is_deterministic(simulated, config, tmp_path):
    for name in ("a", "b"):
        main(["train", "--config", str(config), "--csv", str(simulated / "panel.csv"),
              "--method", "pca", "--out", str(tmp_path / name)])
        main(["forecast", "--bundle", str(tmp_path / name), "--csv",
              str(simulated / "panel.csv"), "--out", str(tmp_path / f"{name}.csv")])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_evaluate(config, tmp_path):
    out = tmp_path / "eval"
    assert main(["evaluate", "--config", str(config), "--out", str(out)]) == 0
    d = json.loads((out / "report.json").read_text())
    assert len(d["cells"]) == 2 * 2 * 2
    assert (out / "runtimes.json").exists() and (out / "report.csv").exists()


def test_evaluate_workers_identical(config, tmp_path):
    main(["evaluate", "--config", str(config), "--out", str(tmp_path / "one"),
          "--repetitions", "1"])
    main(["evaluate", "--config", str(config), "--out", str(tmp_path / "two"),
          "--repetitions", "1", "--workers", "2"])
    assert (tmp_path / "one" / "report.json").read_bytes() == \
        (tmp_path / "two" / "report.json").read_bytes()


def test_normalize(tmp_path, capsys):
    assert main(["normalize", str(DATA / "published_errors.csv"), "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "normalize_summary.json").read_text())
    assert len(summary["methods"]) == 21 and summary["degenerate_columns"] == []
    assert "lowest NCE" in capsys.readouterr().out
    with open(tmp_path / "nce.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["method", "nce"] and len(rows) == 22


def test_convergence(tmp_path, capsys):
    assert main(["convergence", "--out", str(tmp_path), "--n-grid", "10,20,40",
                 "--num-seeds", "2", "--T", "120", "--K", "1", "--sigma-u", "0.5"]) == 0
    assert (tmp_path / "convergence.csv").exists()
    assert "spearman" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    [],
    ["bogus"],
    ["train", "--out", "x"],
    ["forecast", "--bundle", "nowhere", "--out", "x"],
    ["evaluate", "--config", "missing.toml", "--out", "x"],
    ["convergence", "--out", "x", "--n-grid", "10,a"],
    ["convergence", "--out", "x", "--n-grid", "20,10"],
])
def test_config_errors_exit_1(argv, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 1
    assert "error" in capsys.readouterr().err


def test_data_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("y,x1\n1,2\n3\n")
    assert main(["normalize", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["train", "--csv", str(bad), "--out", str(tmp_path / "b")]) == 2
    assert "line 3" in capsys.readouterr().err
