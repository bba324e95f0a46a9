import json

import pytest

from strank.cli import main
from strank.dataset import load_dataset

CONFIG = {
    "synth": {"n_train_per_tissue": 120, "n_val": 60, "n_test": 80},
    "loss": {"kind": "list_strank", "list_size": 8},
    "train": {"epochs": 2, "batch_size": 32},
    "model": {"hidden_dim": 4},
}


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(CONFIG))
    return path


def test_gen_train_eval_round_trip(config_path, tmp_path, capsys):
    assert main(["gen", "--config", str(config_path), "--out", str(tmp_path / "data")]) == 0
    test = load_dataset(tmp_path / "data" / "test")
    assert test.n_spots == 80 and test.targets is not None

    assert main(["train", "--config", str(config_path), "--out", str(tmp_path / "run")]) == 0
    trained = json.loads((tmp_path / "run" / "seed_0" / "summary.json").read_text())
    ckpt = tmp_path / "run" / "seed_0" / "model.ckpt"
    assert main(["eval", "--checkpoint", str(ckpt), "--data", str(tmp_path / "data" / "test"), "--out", str(tmp_path / "ev")]) == 0
    evaluated = json.loads((tmp_path / "ev" / "summary.json").read_text())
    # the checkpoint stores float64 copies of float32 weights, so scores agree closely
    assert evaluated["mean_scc"] == pytest.approx(trained["mean_scc"], abs=1e-6)
    assert "mean_scc=" in capsys.readouterr().out


def test_table1_subcommand(tmp_path):
    assert main(["table1", "--preset", "smoke", "--out", str(tmp_path), "--seeds", "1"]) == 0
    assert (tmp_path / "table1.csv").read_text().count("\n") == 8


@pytest.mark.parametrize(
    "argv, code, status",
    [
        (["table1", "--preset", "huge", "--out", "x"], "E_ARGUMENT", 2),
        (["nonsense"], "E_ARGUMENT", 2),
        (["train", "--config", "/no/such/file.json"], "E_IO", 1),
        (["sweep-nk", "--out", "x", "--preset", "smoke", "--values", "1,4"], "E_DOMAIN", 1),
        (["sweep-params", "--out", "x", "--preset", "smoke", "--grid", "alpha2"], "E_ARGUMENT", 2),
        (["table1", "--out", "x", "--seeds", "0"], "E_ARGUMENT", 2),
    ],
)
def test_errors_are_single_prefixed_lines(argv, code, status, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == status
    err = capsys.readouterr().err
    assert err.startswith(f"error[{code}]: ")
    assert err.count("\n") == 1


def test_schema_error_exit(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({**CONFIG, "loss": {"kind": "l1"}}))
    assert main(["train", "--config", str(path)]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error[E_SCHEMA]: loss.kind")
