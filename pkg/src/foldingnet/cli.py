"""Command-line entry point: ``foldingnet <subcommand> [options]``.

Exit status is 0 on success, 1 on a runtime failure and 2 when the
configuration is invalid. Failures print one line, ``ERROR <code>: <message>``.
Every run leaves ``manifest.json`` in its output directory.
"""
from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig

log = logging.getLogger("foldingnet")


class CommandError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------- helpers

def _require_file(path, what):
    if not path:
        raise ConfigError(f"{what} is not set")
    if not Path(path).is_file():
        raise ConfigError(f"{what} not found: {path}")
    return path


def _load_clouds(manifest, cfg):
    from .pointcloud import load_dataset
    from .seeds import derive_rng
    return load_dataset(manifest, cfg["data.n_points"], derive_rng(cfg["run.seed"], "data.sampling"))


def _train_test(cfg):
    """Clouds from the manifests; without a test manifest, split the train one."""
    from .pointcloud import stratified_split
    from .seeds import derive_rng
    clouds = _load_clouds(cfg["data.manifest"], cfg)
    if cfg["data.test_manifest"]:
        return clouds, _load_clouds(cfg["data.test_manifest"], cfg)
    tr, te = stratified_split([c.label for c in clouds], cfg["data.test_fraction"],
                              derive_rng(cfg["run.seed"], "data.split"))
    return [clouds[i] for i in tr], [clouds[i] for i in te]


def _read_cloud(path):
    from .pointcloud import normalize_unit_sphere, read_off, read_ply_ascii, read_xyz, sample_mesh
    p = Path(path)
    if not p.is_file():
        raise CommandError("io", f"input not found: {path}")
    suffix = p.suffix.lower()
    if suffix == ".off":
        return normalize_unit_sphere(sample_mesh(read_off(p), 2048, np.random.default_rng(0)))
    if suffix == ".ply":
        return read_ply_ascii(p)[0]
    return read_xyz(p)


def _model(args):
    from .model import load_checkpoint
    path = _require_file(args.checkpoint, "--checkpoint")
    return load_checkpoint(path)


# ---------------------------------------------------------------- commands

def cmd_gen_data(args, cfg, out):
    from .pointcloud import SHAPE_KINDS, stratified_split, synthetic_dataset, write_manifest, write_xyz
    from .seeds import derive_rng
    clouds = synthetic_dataset(cfg["data.per_class"], cfg["data.n_points"],
                               derive_rng(cfg["run.seed"], "data.synth"))
    data_dir = out / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, c in enumerate(clouds):
        p = data_dir / f"{i:05d}_{SHAPE_KINDS[c.label]}.xyz"
        write_xyz(c, p)
        entries.append((str(p), c.label))
    tr, te = stratified_split([c.label for c in clouds], cfg["data.test_fraction"],
                              derive_rng(cfg["run.seed"], "data.split"))
    write_manifest(out / "manifest.csv", entries)
    write_manifest(out / "train.csv", [entries[i] for i in tr])
    write_manifest(out / "test.csv", [entries[i] for i in te])
    return {"clouds": len(clouds), "train": len(tr), "test": len(te)}


def cmd_train(args, cfg, out):
    from .model import FoldingNet
    from .seeds import derive_rng
    from .trainer import smoothed, train
    train_set, _ = _train_test(cfg)
    model = FoldingNet.initialize(cfg.model_config(), derive_rng(cfg["run.seed"], "model.init"))
    result = train(train_set, model, cfg.train_config(), out_dir=out)
    s = smoothed(result.losses)
    return {"iterations": len(result.losses),
            "initial_smoothed_loss": float(s[min(99, len(s) - 1)]) if len(s) else None,
            "final_smoothed_loss": float(s[-1]) if len(s) else None}


def cmd_reconstruct(args, cfg, out):
    from .pointcloud import write_ply_ascii
    from .trainer import reconstruct
    model = _model(args)
    cloud = _read_cloud(args.input)
    recon, res = reconstruct(model, cloud)
    write_ply_ascii(recon, out / "reconstruction.ply")
    return {"chamfer": res.value, "forward_mean": res.forward_mean, "backward_mean": res.backward_mean}


def cmd_fold_stages(args, cfg, out):
    from .trainer import export_stages
    model = _model(args)
    paths = export_stages(model, _read_cloud(args.input), out)
    return {"stages": [p.name for p in paths]}


def cmd_interpolate(args, cfg, out):
    from .chamfer import chamfer
    from .features import interpolate, write_rows_csv
    from .pointcloud import write_ply_ascii
    model = _model(args)
    steps = args.steps or cfg["eval.steps"]
    frames = interpolate(model, _read_cloud(args.a), _read_cloud(args.b), steps)
    rows = []
    for i, (t, f) in enumerate(zip(np.linspace(0, 1, steps), frames)):
        write_ply_ascii(f, out / f"interp_{i:02d}.ply")
        rows.append({"step": i, "t": float(t), "chamfer_to_start": chamfer(frames[0], f).value})
    write_rows_csv(rows, out / "interpolation.csv")
    return {"frames": steps}


def cmd_extract_features(args, cfg, out):
    from .features import extract_features, write_codewords_csv
    model = _model(args)
    train_set, test_set = _train_test(cfg)
    write_codewords_csv(extract_features(model, train_set), out / "codewords_train.csv")
    write_codewords_csv(extract_features(model, test_set), out / "codewords_test.csv")
    return {"train": len(train_set), "test": len(test_set)}


def _features(args, cfg):
    from .features import FeatureSet, _split_features, read_codewords_csv
    if args.train_codewords:
        a = read_codewords_csv(_require_file(args.train_codewords, "--train-codewords"))
        b = read_codewords_csv(_require_file(args.test_codewords, "--test-codewords"))
        return FeatureSet(np.vstack([a.codewords, b.codewords]), np.concatenate([a.labels, b.labels]),
                          np.array(["train"] * len(a.labels) + ["test"] * len(b.labels)))
    model = _model(args)
    train_set, test_set = _train_test(cfg)
    return _split_features(model, train_set, test_set)


def cmd_classify(args, cfg, out):
    from .features import classify
    feats = _features(args, cfg)
    clf, acc = classify(feats, cfg.classifier_config())
    train_part = feats.part("train")
    return {"test_accuracy": acc,
            "train_accuracy": clf.accuracy(train_part.codewords, train_part.labels)}


def cmd_sweep_labels(args, cfg, out):
    from .features import SWEEP_FIELDS, label_fraction_sweep, write_rows_csv
    from .seeds import derive_rng
    rows = label_fraction_sweep(_features(args, cfg), cfg["eval.fractions"],
                                derive_rng(cfg["run.seed"], "eval.sweep"), cfg.classifier_config())
    write_rows_csv(rows, out / "label_sweep.csv", SWEEP_FIELDS)
    return {"rows": len(rows)}


def cmd_compare_decoders(args, cfg, out):
    from .features import COMPARE_FIELDS, compare_decoders, write_rows_csv
    train_set, test_set = _train_test(cfg)
    rows = compare_decoders(train_set, test_set, cfg.model_config(), cfg.train_config(),
                            clf_cfg=cfg.classifier_config())
    write_rows_csv(rows, out / "compare_decoders.csv", COMPARE_FIELDS)
    return {"variants": [r["variant"] for r in rows]}


def cmd_robustness(args, cfg, out):
    from .features import ROBUSTNESS_FIELDS, robustness_harness, write_rows_csv
    train_set, test_set = _train_test(cfg)
    rows = robustness_harness(train_set, test_set, cfg.model_config(), cfg.train_config(),
                              noise_levels=(0.0, cfg["eval.noise_fraction"]),
                              clf_cfg=cfg.classifier_config())
    write_rows_csv(rows, out / "robustness.csv", ROBUSTNESS_FIELDS)
    return {"rows": len(rows)}


def cmd_verify_universal(args, cfg, out):
    from .seeds import derive_rng
    from .universal import verify_universality, write_report
    rows = []
    for m in args.m:
        try:
            rows += verify_universality(args.trials, m, derive_rng(cfg["run.seed"], f"universal.{m}"))
        except AssertionError as exc:
            raise CommandError("verify", str(exc)) from None
    write_report(rows, out / "universal_report.csv")
    worst = max(r["max_abs_error"] for r in rows)
    if not worst < args.tol:
        raise CommandError("verify", f"max reconstruction error {worst!r} >= {args.tol}")
    return {"max_abs_error": worst, "trials": len(rows)}


def cmd_count_params(args, cfg, out):
    from .model import fc_decoder_count, folding_decoder_count
    mc = cfg.model_config()
    if args.decoder == "fc":
        n = fc_decoder_count(mc.codeword, mc.fc_hidden, args.points)
    else:
        n = folding_decoder_count(mc.codeword, mc.grid.dim, mc.fold_hidden, mc.folds)
    print(n)
    return {"decoder": args.decoder, "params": n}


COMMANDS = {
    "gen-data": (cmd_gen_data, "write the synthetic 4-class dataset and manifests"),
    "train": (cmd_train, "train an auto-encoder on data.manifest"),
    "reconstruct": (cmd_reconstruct, "reconstruct one cloud with a checkpoint"),
    "fold-stages": (cmd_fold_stages, "export grid and per-fold stages as coloured PLY"),
    "interpolate": (cmd_interpolate, "decode codewords interpolated between two clouds"),
    "extract-features": (cmd_extract_features, "write codeword CSVs for train/test clouds"),
    "classify": (cmd_classify, "linear classifier on frozen codewords"),
    "sweep-labels": (cmd_sweep_labels, "accuracy vs. fraction of labelled training data"),
    "compare-decoders": (cmd_compare_decoders, "train folding variants and the FC baseline"),
    "robustness": (cmd_robustness, "graph vs. no-graph encoder under point noise"),
    "verify-universal": (cmd_verify_universal, "check the hand-built universal decoder"),
    "count-params": (cmd_count_params, "closed-form decoder parameter counts"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="foldingnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="INI config file")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config value (repeatable)")
        p.add_argument("--out", help="output directory (overrides run.out_dir)")
        p.add_argument("--seed", type=int, help="root seed (overrides run.seed)")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("reconstruct", "fold-stages", "interpolate", "extract-features",
                    "classify", "sweep-labels"):
            p.add_argument("--checkpoint")
        if name in ("reconstruct", "fold-stages"):
            p.add_argument("--input", required=True, help="XYZ, PLY or OFF file")
        if name == "interpolate":
            p.add_argument("--a", required=True)
            p.add_argument("--b", required=True)
            p.add_argument("--steps", type=int)
        if name in ("classify", "sweep-labels"):
            p.add_argument("--train-codewords")
            p.add_argument("--test-codewords")
        if name in ("train", "extract-features", "classify", "sweep-labels",
                    "compare-decoders", "robustness"):
            p.add_argument("--manifest", help="overrides data.manifest")
            p.add_argument("--test-manifest", help="overrides data.test_manifest")
        if name == "train":
            p.add_argument("--iterations", type=int)
        if name == "verify-universal":
            p.add_argument("--m", type=int, nargs="+", default=[64])
            p.add_argument("--trials", type=int, default=100)
            p.add_argument("--tol", type=float, default=1e-9)
        if name == "count-params":
            p.add_argument("--decoder", choices=("folding", "fc"), default="folding")
            p.add_argument("--points", type=int, default=2048, help="FC output points")
    return parser


def _overrides(args) -> list:
    extra = list(args.set)
    if args.seed is not None:
        extra.append(f"run.seed={args.seed}")
    if args.out:
        extra.append(f"run.out_dir={args.out}")
    if getattr(args, "manifest", None):
        extra.append(f"data.manifest={args.manifest}")
    if getattr(args, "test_manifest", None):
        extra.append(f"data.test_manifest={args.test_manifest}")
    if getattr(args, "iterations", None) is not None:
        extra.append(f"train.iterations={args.iterations}")
    return extra


def _check_inputs(command, args, cfg) -> None:
    """Validate referenced files before anything is written."""
    needs_data = command in ("train", "compare-decoders", "robustness", "extract-features") or (
        command in ("classify", "sweep-labels") and not args.train_codewords)
    if needs_data:
        _require_file(cfg["data.manifest"], "data.manifest")
        if cfg["data.test_manifest"]:
            _require_file(cfg["data.test_manifest"], "data.test_manifest")
    if getattr(args, "checkpoint", None) is not None or command in (
            "reconstruct", "fold-stages", "interpolate", "extract-features"):
        _require_file(args.checkpoint, "--checkpoint")
    if command in ("classify", "sweep-labels") and args.train_codewords:
        _require_file(args.train_codewords, "--train-codewords")
        _require_file(args.test_codewords, "--test-codewords")
    elif command in ("classify", "sweep-labels"):
        _require_file(args.checkpoint, "--checkpoint")


def _write_manifest(out: Path, command, argv, cfg, summary) -> None:
    record = {
        "command": command, "argv": list(argv), "config": cfg.to_dict(),
        "config_sha256": cfg.digest(), "seed": cfg["run.seed"], "summary": summary,
        "versions": {"foldingnet": __version__, "python": platform.python_version(),
                     "numpy": np.__version__},
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def main(argv=None) -> int:
    from .pointcloud import FormatError
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    fn = COMMANDS[args.command][0]
    try:
        cfg = RunConfig.load(args.config, _overrides(args))
        _check_inputs(args.command, args, cfg)
    except ConfigError as exc:
        print(f"ERROR config: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg["run.out_dir"])
    try:
        out.mkdir(parents=True, exist_ok=True)
        cfg.dump(out / "config.ini")
        summary = fn(args, cfg, out)
        _write_manifest(out, args.command, argv, cfg, summary)
    except ConfigError as exc:
        print(f"ERROR config: {exc}", file=sys.stderr)
        return 2
    except CommandError as exc:
        print(f"ERROR {exc.code}: {exc}", file=sys.stderr)
        return 1
    except FormatError as exc:
        print(f"ERROR format: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"ERROR io: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"ERROR value: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
