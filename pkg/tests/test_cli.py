import json
import subprocess
import sys

import numpy as np
import pytest

from foldingnet.cli import main
from foldingnet.config import ConfigError, RunConfig

TINY = ["--set", "data.n_points=32", "--set", "data.per_class=3", "--set", "model.k=4",
        "--set", "model.codeword=8", "--set", "model.point_widths=8,8",
        "--set", "model.graph_widths=8 12", "--set", "model.head_widths=8",
        "--set", "model.fold_hidden=10,10", "--set", "model.grid_m=16",
        "--set", "model.fc_hidden=8,8", "--set", "classifier.epochs=20"]


def run(args, capsys=None):
    code = main(args)
    out = capsys.readouterr() if capsys else None
    return code, out


def test_config_defaults_and_overrides(tmp_path):
    cfg = RunConfig.load(None, ["train.lr=0.001", "model.fold_hidden=4,4"])
    assert cfg["train.lr"] == 0.001 and cfg["model.fold_hidden"] == (4, 4)
    assert cfg.model_config().grid.m == 225
    ini = tmp_path / "c.ini"
    ini.write_text("[train]\niterations = 7\n[run]\nseed = 3\n")
    cfg = RunConfig.load(ini, ["run.seed=4"])
    assert cfg["train.iterations"] == 7 and cfg["run.seed"] == 4
    cfg.dump(tmp_path / "d.ini")
    again = RunConfig.load(tmp_path / "d.ini")
    assert again.digest() == cfg.digest()


@pytest.mark.parametrize("override", ["nope.x=1", "train.nope=1", "train.lr=abc",
                                      "train.lr=-1", "model.grid_m=200", "seedless"])
def test_config_rejects(override):
    with pytest.raises(ConfigError):
        RunConfig.load(None, [override])


def test_count_params(tmp_path, capsys):
    code, out = run(["count-params", "--decoder", "folding", "--out", str(tmp_path / "a")], capsys)
    assert code == 0 and out.out.strip() == "1056262"
    code, out = run(["count-params", "--decoder", "fc", "--out", str(tmp_path / "b")], capsys)
    assert code == 0 and out.out.strip() == "15213568"
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["command"] == "count-params" and manifest["seed"] == 0
    assert len(manifest["config_sha256"]) == 64 and "numpy" in manifest["versions"]


def test_train_with_missing_dataset_exits_2(tmp_path, capsys):
    out = tmp_path / "o"
    code, res = run(["train", "--manifest", str(tmp_path / "missing.csv"), "--out", str(out)], capsys)
    assert code == 2 and res.err.startswith("ERROR config:")
    assert len(res.err.strip().splitlines()) == 1
    assert not out.exists()


def test_bad_override_exits_2(tmp_path, capsys):
    code, res = run(["count-params", "--set", "train.lr=zero", "--out", str(tmp_path)], capsys)
    assert code == 2 and "train.lr" in res.err


def test_runtime_failure_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.xyz"
    bad.write_text("1 2\n")
    ck = tmp_path / "m.npz"
    from foldingnet.model import FoldingNet, ModelConfig, GridSpec, save_checkpoint
    save_checkpoint(FoldingNet.initialize(ModelConfig(grid=GridSpec(m=16), codeword=8,
                                                      head_widths=(8,), fold_hidden=(8, 8)),
                                          np.random.default_rng(0)), ck)
    code, res = run(["reconstruct", "--checkpoint", str(ck), "--input", str(bad),
                     "--out", str(tmp_path / "r")], capsys)
    assert code == 1 and res.err.startswith("ERROR format:") and ":1:" in res.err


def test_full_pipeline(tmp_path, capsys):
    d, t = tmp_path / "data", tmp_path / "train"
    assert run(["gen-data", "--out", str(d)] + TINY)[0] == 0
    data = ["--manifest", str(d / "train.csv"), "--test-manifest", str(d / "test.csv")]
    assert run(["train", "--out", str(t), "--iterations", "4"] + data + TINY)[0] == 0
    ck = str(t / "model.ckpt.npz")
    assert (t / "loss.csv").exists() and (t / "manifest.json").exists()

    sample = str(next((d / "data").glob("*_sphere.xyz")))
    other = str(next((d / "data").glob("*_plane.xyz")))
    assert run(["reconstruct", "--checkpoint", ck, "--input", sample, "--out", str(tmp_path / "r")])[0] == 0
    assert (tmp_path / "r" / "reconstruction.ply").exists()
    assert run(["fold-stages", "--checkpoint", ck, "--input", sample, "--out", str(tmp_path / "f")])[0] == 0
    assert sorted(p.name for p in (tmp_path / "f").glob("*.ply")) == [f"stage{k}.ply" for k in range(3)]
    assert run(["interpolate", "--checkpoint", ck, "--a", sample, "--b", other, "--steps", "4",
                "--out", str(tmp_path / "i")])[0] == 0
    assert len(list((tmp_path / "i").glob("interp_*.ply"))) == 4

    e = tmp_path / "e"
    assert run(["extract-features", "--checkpoint", ck, "--out", str(e)] + data + TINY)[0] == 0
    cw = ["--train-codewords", str(e / "codewords_train.csv"), "--test-codewords", str(e / "codewords_test.csv")]
    assert run(["classify", "--out", str(tmp_path / "c")] + cw + TINY)[0] == 0
    summary = json.loads((tmp_path / "c" / "manifest.json").read_text())["summary"]
    assert 0 <= summary["test_accuracy"] <= 1
    assert run(["sweep-labels", "--out", str(tmp_path / "s"), "--set", "eval.fractions=0.5,1"] + cw + TINY)[0] == 0
    assert (tmp_path / "s" / "label_sweep.csv").read_text().startswith("fraction,n_train,accuracy,degenerate")

    small = TINY + ["--set", "train.iterations=2"]
    assert run(["compare-decoders", "--out", str(tmp_path / "cd")] + data + small)[0] == 0
    assert len((tmp_path / "cd" / "compare_decoders.csv").read_text().splitlines()) == 7
    assert run(["robustness", "--out", str(tmp_path / "rb")] + data + small)[0] == 0
    assert len((tmp_path / "rb" / "robustness.csv").read_text().splitlines()) == 5


def test_gen_data_is_idempotent(tmp_path):
    assert main(["gen-data", "--out", str(tmp_path)] + TINY) == 0
    first = {p.name: p.read_bytes() for p in (tmp_path / "data").iterdir()}
    assert main(["gen-data", "--out", str(tmp_path)] + TINY) == 0
    assert first == {p.name: p.read_bytes() for p in (tmp_path / "data").iterdir()}


def test_verify_universal_subprocess(tmp_path):
    res = subprocess.run([sys.executable, "-m", "foldingnet.cli", "verify-universal", "--m", "64",
                          "--trials", "100", "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    rows = (tmp_path / "universal_report.csv").read_text().splitlines()
    assert len(rows) == 101
    assert all(float(r.split(",")[2]) < 1e-9 for r in rows[1:])


def test_help_for_every_subcommand(capsys):
    from foldingnet.cli import COMMANDS
    for name in COMMANDS:
        with pytest.raises(SystemExit) as ex:
            main([name, "--help"])
        assert ex.value.code == 0
    assert "usage" in capsys.readouterr().out
