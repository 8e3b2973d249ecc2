"""Frozen-codeword evaluation: features, a linear classifier, sweeps,
interpolation and the decoder/encoder comparison harnesses."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .chamfer import chamfer
from .model import (FoldingNet, GridSpec, ModelConfig, fc_decoder_count, folding_decoder_count)
from .pointcloud import _points, shift_noise
from .seeds import derive_rng
from .trainer import TrainConfig, train

log = logging.getLogger(__name__)


@dataclass
class FeatureSet:
    codewords: np.ndarray
    labels: np.ndarray
    split: np.ndarray = None   # "train" / "test" per row

    def __post_init__(self):
        self.codewords = np.asarray(self.codewords, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.split is None:
            self.split = np.full(len(self.labels), "train")
        self.split = np.asarray(self.split)
        if not (len(self.codewords) == len(self.labels) == len(self.split)):
            raise ValueError("codewords, labels and split tags must have equal length")
        if len(self.labels) and self.labels.min() < 0:
            raise ValueError("labels must be non-negative category ids")

    def part(self, tag: str) -> "FeatureSet":
        mask = self.split == tag
        return FeatureSet(self.codewords[mask], self.labels[mask], self.split[mask])


def extract_features(model: FoldingNet, clouds: Sequence, split=None,
                     encoder: Optional[str] = None) -> FeatureSet:
    """One codeword per cloud, no augmentation."""
    codes = np.array([model.encode(_points(c), encoder) for c in clouds])
    labels = [getattr(c, "label", None) for c in clouds]
    labels = [-1 if l is None else l for l in labels]
    return FeatureSet(codes.reshape(len(clouds), -1), np.array(labels, dtype=np.int64), split)


def write_codewords_csv(features: FeatureSet, path) -> None:
    d = features.codewords.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label"] + [f"c_{i + 1}" for i in range(d)])
        for label, row in zip(features.labels, features.codewords):
            w.writerow([int(label)] + [repr(float(v)) for v in row])


def read_codewords_csv(path) -> FeatureSet:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "label":
        raise ValueError(f"{path}: missing 'label,c_1..' header")
    body = rows[1:]
    labels = np.array([int(r[0]) for r in body], dtype=np.int64)
    codes = np.array([[float(v) for v in r[1:]] for r in body]).reshape(len(body), len(rows[0]) - 1)
    return FeatureSet(codes, labels)


# ----------------------------------------------------------------- classifier

@dataclass
class LinearClassifier:
    weight: np.ndarray      # d × C, acting on standardized features
    bias: np.ndarray        # (C,)
    mean: np.ndarray
    scale: np.ndarray
    classes: np.ndarray
    meta: dict = field(default_factory=dict)

    def scores(self, x) -> np.ndarray:
        z = (np.asarray(x, dtype=np.float64) - self.mean) / self.scale
        return z @ self.weight + self.bias

    def predict(self, x) -> np.ndarray:
        return self.classes[np.argmax(self.scores(x), axis=1)]

    def accuracy(self, x, y) -> float:
        return float(np.mean(self.predict(x) == np.asarray(y)))


@dataclass(frozen=True)
class ClassifierConfig:
    margin: float = 1.0
    l2: float = 1e-4
    epochs: int = 1000
    lr: float = 0.1


def train_linear(x, y, cfg: ClassifierConfig = ClassifierConfig()) -> LinearClassifier:
    """Full-batch gradient descent on the multiclass hinge loss.

    Loss per sample: sum over wrong classes of max(0, margin + s_c - s_y).
    Features are standardized with training statistics first.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    classes, yi = np.unique(y, return_inverse=True)
    if len(classes) < 2:
        raise ValueError("need at least two classes to train a classifier")
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    z = (x - mean) / scale
    n, d = z.shape
    C = len(classes)
    W = np.zeros((d, C))
    b = np.zeros(C)
    rows = np.arange(n)
    for _ in range(cfg.epochs):
        s = z @ W + b
        viol = cfg.margin + s - s[rows, yi][:, None]
        viol[rows, yi] = 0
        active = (viol > 0).astype(np.float64)
        ds = active
        ds[rows, yi] = -active.sum(axis=1)
        ds /= n
        W -= cfg.lr * (z.T @ ds + 2 * cfg.l2 * W)
        b -= cfg.lr * ds.sum(axis=0)
    return LinearClassifier(W, b, mean, scale, classes, {"n_train": n, "config": cfg})


def classify(features: FeatureSet, cfg: ClassifierConfig = ClassifierConfig()):
    """Train on the ``train`` rows, report ``(classifier, test accuracy)``."""
    tr, te = features.part("train"), features.part("test")
    clf = train_linear(tr.codewords, tr.labels, cfg)
    acc = clf.accuracy(te.codewords, te.labels) if len(te.labels) else float("nan")
    return clf, acc


def stratified_subsample(labels, fraction: float, rng) -> Optional[np.ndarray]:
    """Sorted indices keeping round(fraction * n_c) per class; None if a class gets none."""
    labels = np.asarray(labels)
    keep = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        k = int(math.floor(fraction * len(idx) + 0.5))
        if k < 1:
            return None
        keep.extend(rng.permutation(idx)[:k] if k < len(idx) else idx)
    return np.sort(np.array(keep, dtype=np.int64))


SWEEP_FIELDS = ["fraction", "n_train", "accuracy", "degenerate"]


def label_fraction_sweep(features: FeatureSet, fractions, rng,
                         cfg: ClassifierConfig = ClassifierConfig()) -> list[dict]:
    tr, te = features.part("train"), features.part("test")
    rows = []
    for f in fractions:
        if not 0 < f <= 1:
            raise ValueError(f"fraction must be in (0, 1], got {f}")
        idx = stratified_subsample(tr.labels, f, rng)
        if idx is None or len(np.unique(tr.labels[idx])) < 2:
            rows.append({"fraction": f, "n_train": 0 if idx is None else len(idx),
                         "accuracy": float("nan"), "degenerate": True})
            continue
        clf = train_linear(tr.codewords[idx], tr.labels[idx], cfg)
        rows.append({"fraction": f, "n_train": len(idx),
                     "accuracy": clf.accuracy(te.codewords, te.labels), "degenerate": False})
    return rows


def write_rows_csv(rows, path, fields=None) -> None:
    fields = fields or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


# -------------------------------------------------------------- interpolation

def interpolate(model: FoldingNet, cloud_a, cloud_b, steps: int = 8) -> list[np.ndarray]:
    """Decode ``(1 - t) θa + t θb`` on a uniform schedule of ``steps`` values of t."""
    if steps < 2:
        raise ValueError("need at least two interpolation steps")
    ta, tb = model.encode(cloud_a), model.encode(cloud_b)
    out = []
    for i, t in enumerate(np.linspace(0.0, 1.0, steps)):
        theta = ta if i == 0 else tb if i == steps - 1 else (1 - t) * ta + t * tb
        out.append(model.decode(theta))
    return out


# ------------------------------------------------------------- harnesses

def nearest_power(m: int, dim: int) -> int:
    side = max(1, int(round(m ** (1.0 / dim))))
    return side ** dim


@dataclass(frozen=True)
class DecoderVariant:
    name: str
    decoder: str = "folding"
    grid_dim: int = 2
    grid_mode: str = "regular"
    folds: int = 2


DECODER_VARIANTS = (
    DecoderVariant("regular 2D, 2 folds"),
    DecoderVariant("regular 2D, 3 folds", folds=3),
    DecoderVariant("regular 1D, 2 folds", grid_dim=1),
    DecoderVariant("regular 3D, 2 folds", grid_dim=3),
    DecoderVariant("uniform 2D, 2 folds", grid_mode="uniform_random"),
    DecoderVariant("fully-connected", decoder="fc"),
)

COMPARE_FIELDS = ["variant", "decoder", "grid_dim", "grid_mode", "folds", "m", "final_loss",
                  "test_loss", "accuracy", "decoder_params", "decoder_params_full_scale"]


def mean_chamfer(model: FoldingNet, clouds, encoder: Optional[str] = None) -> float:
    vals = [chamfer(_points(c), model.decode(model.encode(_points(c), encoder))).value for c in clouds]
    return float(np.mean(vals))


def variant_config(base: ModelConfig, v: DecoderVariant, points: int) -> ModelConfig:
    m = nearest_power(base.grid.m, v.grid_dim)
    grid = GridSpec(dim=v.grid_dim, m=m, mode=v.grid_mode, extent=base.grid.extent)
    return replace(base, decoder=v.decoder, folds=v.folds, grid=grid, fc_points=points)


def compare_decoders(train_set, test_set, base: ModelConfig, train_cfg: TrainConfig,
                     variants=DECODER_VARIANTS, clf_cfg: ClassifierConfig = ClassifierConfig()) -> list[dict]:
    """Train every variant from the same seeds; one CSV-ready row each.

    ``decoder_params_full_scale`` is the closed-form count at codeword 512
    with 2048 output points, independent of the desk-scale widths.
    """
    points = len(_points(train_set[0]))
    rows = []
    for v in variants:
        cfg = variant_config(base, v, points)
        model = FoldingNet.initialize(cfg, derive_rng(train_cfg.seed, "model.init"))
        result = train(train_set, model, train_cfg)
        feats = _split_features(model, train_set, test_set)
        _, acc = classify(feats, clf_cfg)
        full = (fc_decoder_count() if v.decoder == "fc" else
                 folding_decoder_count(grid_dim=v.grid_dim, folds=v.folds))
        rows.append({
            "variant": v.name, "decoder": v.decoder, "grid_dim": v.grid_dim,
            "grid_mode": v.grid_mode, "folds": v.folds,
            "m": points if v.decoder == "fc" else cfg.grid.m,
            "final_loss": float(np.mean(result.losses[-100:])) if result.losses else float("nan"),
            "test_loss": mean_chamfer(model, test_set), "accuracy": acc,
            "decoder_params": model.param_count("dec."), "decoder_params_full_scale": full,
        })
        log.info("%s: test loss %.4f, accuracy %.3f", v.name, rows[-1]["test_loss"], acc)
    return rows


def _split_features(model, train_set, test_set, encoder=None) -> FeatureSet:
    a = extract_features(model, train_set, encoder=encoder)
    b = extract_features(model, test_set, encoder=encoder)
    return FeatureSet(np.vstack([a.codewords, b.codewords]),
                      np.concatenate([a.labels, b.labels]),
                      np.array(["train"] * len(a.labels) + ["test"] * len(b.labels)))


ROBUSTNESS_FIELDS = ["encoder", "noise_fraction", "final_loss", "test_loss", "accuracy"]


def add_noise(clouds, fraction: float, rng) -> list:
    return [shift_noise(c, fraction, rng) for c in clouds]


def robustness_harness(train_set, test_set, base: ModelConfig, train_cfg: TrainConfig,
                       noise_levels=(0.0, 0.05),
                       clf_cfg: ClassifierConfig = ClassifierConfig()) -> list[dict]:
    """Graph encoder vs. the no-graph ablation, each trained on noisy copies."""
    rows = []
    for frac in noise_levels:
        noise_rng = derive_rng(train_cfg.seed, f"noise.{frac!r}")
        noisy_train = add_noise(train_set, frac, noise_rng)
        noisy_test = add_noise(test_set, frac, noise_rng)
        for enc in ("graph", "no_graph"):
            cfg = replace(base, encoder=enc)
            model = FoldingNet.initialize(cfg, derive_rng(train_cfg.seed, "model.init"))
            result = train(noisy_train, model, train_cfg)
            _, acc = classify(_split_features(model, noisy_train, noisy_test), clf_cfg)
            rows.append({
                "encoder": enc, "noise_fraction": frac,
                "final_loss": float(np.mean(result.losses[-100:])) if result.losses else float("nan"),
                "test_loss": mean_chamfer(model, noisy_test), "accuracy": acc,
            })
    return rows
