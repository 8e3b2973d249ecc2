"""ADAM training loop, loss logging, checkpoints and fold-stage snapshots."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .chamfer import chamfer
from .model import FoldingNet, is_weight, save_checkpoint
from .pointcloud import PointCloud, _points, axis_aligned_rotation, shift_noise, write_ply_ascii
from .seeds import derive_rng

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-6
    batch_size: int = 1
    iterations: int = 2000
    seed: int = 0
    augment_rotations: bool = True
    noise_fraction: float = 0.0
    snapshot_every: int = 0
    checkpoint_every: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not 0 <= self.noise_fraction <= 1:
            raise ValueError("noise_fraction must be in [0, 1]")


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()}, 0)


def adam_step(params: dict, grads: dict, state: AdamState, cfg: TrainConfig):
    """One bias-corrected ADAM update, in place.

    Weight decay is decoupled: weights (not biases) are shrunk by
    ``1 - lr * weight_decay`` before the moment-based step.
    """
    if set(grads) != set(params):
        raise ValueError("gradient keys do not match parameter keys")
    state.step += 1
    t = state.step
    c1 = 1 - cfg.beta1 ** t
    c2 = 1 - cfg.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"{name}: gradient {g.shape} vs parameter {p.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1 - cfg.beta2) * (g * g)
        if cfg.weight_decay and is_weight(name):
            p *= 1 - cfg.lr * cfg.weight_decay
        p -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
    return params, state


def smoothed(losses: Sequence[float], window: int = 100) -> np.ndarray:
    """Trailing mean; the first ``window - 1`` entries average what exists so far."""
    x = np.asarray(losses, dtype=np.float64)
    c = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, len(x) + 1)
    lo = np.maximum(0, idx - window)
    return (c[idx] - c[lo]) / (idx - lo)


def grid_colors(grid: np.ndarray) -> np.ndarray:
    """RGB gradient over the grid; carried through the folds row by row."""
    lo, hi = grid.min(axis=0), grid.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    u = (grid - lo) / span
    if grid.shape[1] == 1:
        rgb = np.column_stack([u[:, 0], 1 - u[:, 0], np.full(len(u), 0.5)])
    elif grid.shape[1] == 2:
        rgb = np.column_stack([u[:, 0], u[:, 1], 1 - 0.5 * (u[:, 0] + u[:, 1])])
    else:
        rgb = u
    return np.rint(255 * rgb).astype(np.int64)


def reconstruct(model: FoldingNet, cloud) -> tuple:
    recon = model.reconstruct(cloud)
    return PointCloud(recon), chamfer(_points(cloud), recon)


def fold_stages(model: FoldingNet, cloud) -> list:
    """``[grid, stage 1, stage 2(, stage 3)]`` for one input cloud."""
    return model.stages(model.encode(cloud))


def export_stages(model: FoldingNet, cloud, out_dir, prefix: str = "") -> list:
    """Write every stage as a coloured PLY; the grid is lifted to 3-D with zeros."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stages = fold_stages(model, cloud)
    colors = grid_colors(model.grid)
    paths = []
    for k, s in enumerate(stages):
        pts = s if s.shape[1] == 3 else np.pad(s, ((0, 0), (0, 3 - s.shape[1])))
        path = out_dir / f"{prefix}stage{k}.ply"
        write_ply_ascii(pts, path, colors)
        paths.append(path)
    return paths


@dataclass
class TrainResult:
    model: FoldingNet
    losses: list
    state: AdamState


def train(dataset: Sequence, model: FoldingNet, cfg: TrainConfig, out_dir=None,
          encoder: Optional[str] = None, probe=None) -> TrainResult:
    """Batch-size-1 (or gradient-averaged minibatch) auto-encoder training.

    Mutates and returns ``model``. With ``out_dir`` set, writes ``loss.csv``
    and, at the configured cadence, ``iter{N}_stage{K}.ply`` snapshots of
    ``probe`` (default: the first dataset cloud) and ``iter{N}.ckpt.npz``.
    """
    if len(dataset) == 0:
        raise ValueError("training dataset is empty")
    clouds = [_points(c) for c in dataset]
    rng = derive_rng(cfg.seed, "train.sampling")
    aug_rng = derive_rng(cfg.seed, "train.augment")
    state = AdamState.zeros_like(model.params)
    probe = clouds[0] if probe is None else _points(probe)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    losses = []
    for it in range(cfg.iterations):
        if out is not None and cfg.snapshot_every and it % cfg.snapshot_every == 0:
            export_stages(model, probe, out / "snapshots", prefix=f"iter{it}_")
        batch_loss, batch_grads = 0.0, None
        for _ in range(cfg.batch_size):
            pts = clouds[int(rng.integers(len(clouds)))]
            if cfg.augment_rotations:
                pts = axis_aligned_rotation(pts, int(aug_rng.integers(24)))
            if cfg.noise_fraction:
                pts = shift_noise(pts, cfg.noise_fraction, aug_rng)
            loss, grads = model.loss_and_grads(pts, encoder)
            batch_loss += loss
            if batch_grads is None:
                batch_grads = grads
            else:
                for k in batch_grads:
                    batch_grads[k] += grads[k]
        if cfg.batch_size > 1:
            batch_loss /= cfg.batch_size
            for k in batch_grads:
                batch_grads[k] /= cfg.batch_size
        losses.append(batch_loss)
        adam_step(model.params, batch_grads, state, cfg)
        if out is not None and cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(model, out / f"iter{it + 1}.ckpt.npz")
        if (it + 1) % 500 == 0:
            log.info("iter %d  smoothed loss %.5f", it + 1, float(np.mean(losses[-100:])))

    if out is not None:
        write_loss_log(losses, out / "loss.csv")
        if cfg.snapshot_every:
            export_stages(model, probe, out / "snapshots", prefix=f"iter{cfg.iterations}_")
        save_checkpoint(model, out / "model.ckpt.npz", extra={"iterations": cfg.iterations})
    return TrainResult(model, losses, state)


def write_loss_log(losses, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "loss"])
        for i, l in enumerate(losses):
            w.writerow([i, repr(float(l))])
