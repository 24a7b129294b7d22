import os

import pandas as pd
import pytest

from mope import cli
from mope.config import SNAPSHOT_NAME
from mope.settings import OUT_DIR_ENV

TINY = """\
[common]
seed = 1
num_classes = 2
image_size = 16
samples_per_class = 4
iterations = 2
batch_size = 2
log_every = 0
"""


@pytest.fixture(autouse=True)
def no_env_out_dir(monkeypatch):
    monkeypatch.delenv(OUT_DIR_ENV, raising=False)


@pytest.fixture
def tiny_cfg(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY)
    return str(path)


def mope(*argv):
    return cli.main([str(a) for a in argv])


def test_analyze(tmp_path, capsys):
    assert mope("analyze", "--out-dir", tmp_path) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "Gating receptive field: 31" in out
    assert "not stated" in out
    summary = pd.read_csv(tmp_path / "summary.csv")
    assert list(summary["params"]) == [47107, 24353]
    assert list(summary["macs"]) == [325780992, 41842944]
    assert (tmp_path / "complexity_gating.csv").exists()
    assert (tmp_path / SNAPSHOT_NAME).exists()


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_DIR_ENV, str(tmp_path / "env"))
    assert mope("analyze", "--input-size", 64) == cli.EXIT_OK
    assert (tmp_path / "env" / "summary.csv").exists()


def test_unknown_flag_is_a_usage_error():
    with pytest.raises(SystemExit) as info:
        mope("analyze", "--no-such-flag")
    assert info.value.code == cli.EXIT_CONFIG


def test_unknown_command_is_a_usage_error():
    with pytest.raises(SystemExit) as info:
        mope("serve")
    assert info.value.code == cli.EXIT_CONFIG


def test_bad_config_value(tmp_path):
    assert mope("route", "--out-dir", tmp_path, "--threshold", 2) == cli.EXIT_CONFIG


def test_route_needs_an_image(tmp_path):
    assert mope("route", "--out-dir", tmp_path) == cli.EXIT_CONFIG


def test_missing_dataset_is_an_io_error(tmp_path):
    assert mope("train-gate", "--out-dir", tmp_path) == cli.EXIT_IO


def test_missing_weights_is_an_io_error(tmp_path):
    image = tmp_path / "x.ppm"
    image.write_bytes(b"P6\n16 16\n255\n" + bytes(16 * 16 * 3))
    assert mope("denoise", "--out-dir", tmp_path, "--image", image) == cli.EXIT_IO


def test_undecodable_weights_are_an_io_error(tmp_path):
    image = tmp_path / "x.ppm"
    image.write_bytes(b"P6\n16 16\n255\n" + bytes(16 * 16 * 3))
    (tmp_path / "denoiser.mope").write_bytes(b"MOPE\x01\x00\x00\x00\x01\x00\x00\x00\x02\x00\xff\xfe")
    assert mope("denoise", "--out-dir", tmp_path, "--image", image) == cli.EXIT_IO


def test_training_runs_are_reproducible(tmp_path, tiny_cfg):
    data = tmp_path / "data"
    assert mope("gen-data", "--config", tiny_cfg, "--out-dir", tmp_path, "--data-dir", data) == cli.EXIT_OK
    for name in ("a", "b"):
        assert mope("train-gate", "--config", tiny_cfg, "--out-dir", tmp_path / name, "--data-dir", data) == 0
    # the config snapshots differ only in out_dir
    for filename in ("gate.mope", "gate_history.csv"):
        assert (tmp_path / "a" / filename).read_bytes() == (tmp_path / "b" / filename).read_bytes()
    history = pd.read_csv(tmp_path / "a" / "gate_history.csv")
    assert list(history.columns) == ["iteration", "loss_gate", "batch_accuracy", "lr"]
    assert len(history) == 2


def test_full_pipeline(tmp_path, tiny_cfg, capsys):
    def run(*argv):
        assert mope(*argv, "--config", tiny_cfg, "--out-dir", tmp_path) == cli.EXIT_OK

    run("gen-data")
    run("train-gate")
    run("train-denoiser")
    run("train-classifier")
    run("finetune-mope")
    for filename in [cli.GATE_FILE, cli.DENOISER_FILE, cli.DISCRIMINATOR_FILE, *cli.CLASSIFIER_FILES.values()]:
        assert (tmp_path / filename).exists(), filename

    run("eval")
    table = pd.read_csv(tmp_path / "eval_table.csv")
    assert set(table["model"]) == {
        "clean-only", "augmented", "mope-avg", "mope-denoise", "clean-only+avg-always", "clean-only+denoise-always",
    }
    assert set(table["condition"]) == {"clean", "lowres", "sigma=0.15"}
    assert table["accuracy"].between(0, 1).all()
    fidelity = pd.read_csv(tmp_path / "fidelity.csv")
    assert list(fidelity["route"]) == ["noisy", "average_filter", "denoiser"]
    decisions = pd.read_csv(tmp_path / "decisions.csv")
    assert len(decisions) == 2 * 2  # two heldout images, clean and noisy
    assert set(decisions["expert"]) <= {"identity", "average_filter"}

    image = tmp_path / "data" / "images" / "000000.ppm"
    capsys.readouterr()
    run("route", "--image", image, "--noisy-expert", "avg")
    assert "expert=" in capsys.readouterr().out
    assert (tmp_path / "000000_routed.ppm").exists()
    run("denoise", "--image", image, "--output", tmp_path / "clean.ppm")
    assert (tmp_path / "clean.ppm").read_bytes().startswith(b"P6\n16 16\n255\n")


def test_eval_with_tracking_counts(tmp_path, tiny_cfg):
    counts = tmp_path / "counts.csv"
    counts.write_text("frame,fn,fp,id,g\n1,1,0,0,5\n2,0,1,0,5\n")

    def run(*argv):
        return mope(*argv, "--config", tiny_cfg, "--out-dir", tmp_path)

    assert run("gen-data") == 0
    assert run("train-classifier") == 0
    assert run("eval", "--tracking-counts", counts) == 0
    assert pd.read_csv(tmp_path / "mota.csv")["value"].iloc[0] == pytest.approx(0.8)
    # no gate weights: only the ungated rows are evaluated
    assert set(pd.read_csv(tmp_path / "eval_table.csv")["model"]) == {
        "clean-only", "augmented", "clean-only+avg-always",
    }
    assert not os.path.exists(tmp_path / "gate_report.csv")
