"""Extended Chamfer distance: the larger of the two directed mean NN distances."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .knn import pairwise_sq_dists
from .pointcloud import _points
from .tensor import Node, ShapeError, _lift, _tape_of

FORWARD, BACKWARD, TIE = "forward", "backward", "tie"


@dataclass
class ChamferResult:
    value: float
    side: str                 # which directed mean attained the max
    forward_mean: float       # mean over x in S of min over x_hat
    backward_mean: float      # mean over x_hat in S_hat of min over x
    forward_match: np.ndarray   # for each x in S, index of its nearest x_hat
    backward_match: np.ndarray  # for each x_hat, index of its nearest x
    forward_dist: np.ndarray
    backward_dist: np.ndarray


def _mean(values: np.ndarray) -> float:
    # correctly rounded sum: independent of array layout and summation order
    return math.fsum(values.tolist()) / len(values)


def chamfer(s, s_hat) -> ChamferResult:
    a, b = _points(s), _points(s_hat)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("chamfer distance needs two non-empty clouds")
    d = np.sqrt(pairwise_sq_dists(a, b))
    fwd_match = np.argmin(d, axis=1)
    bwd_match = np.argmin(d, axis=0)
    fwd = d[np.arange(len(a)), fwd_match]
    bwd = d[bwd_match, np.arange(len(b))]
    fm, bm = _mean(fwd), _mean(bwd)
    side = FORWARD if fm > bm else BACKWARD if bm > fm else TIE
    return ChamferResult(max(fm, bm), side, fm, bm, fwd_match, bwd_match, fwd, bwd)


def _unit_rows(diff: np.ndarray, dist: np.ndarray) -> np.ndarray:
    out = np.zeros_like(diff)
    nz = dist > 0
    out[nz] = diff[nz] / dist[nz, None]
    return out


def chamfer_backward(result: ChamferResult, s, s_hat) -> np.ndarray:
    """Subgradient of the distance with respect to the reconstructed points.

    Only the active directed term contributes (both, averaged, on an exact
    tie). Coincident pairs contribute zero.
    """
    a, b = _points(s), _points(s_hat)
    grad = np.zeros_like(b)
    weight = 0.5 if result.side == TIE else 1.0
    if result.side in (FORWARD, TIE):
        diff = b[result.forward_match] - a
        contrib = _unit_rows(diff, result.forward_dist) / len(a)
        np.add.at(grad, result.forward_match, weight * contrib)
    if result.side in (BACKWARD, TIE):
        diff = b - a[result.backward_match]
        grad += weight * _unit_rows(diff, result.backward_dist) / len(b)
    return grad


def chamfer_loss(target, recon) -> Node:
    """Tape op: 1×1 Chamfer distance between constant ``target`` and node ``recon``."""
    recon = _lift(_tape_of(recon), recon)
    if recon.shape[1] != 3:
        raise ShapeError(f"reconstruction must be m×3, got {recon.shape}")
    target = _points(target)
    res = chamfer(target, recon.value)
    rv = recon.value

    def back(g):
        return (g[0, 0] * chamfer_backward(res, target, rv),)

    return recon.tape.record(np.array([[res.value]]), (recon,), back)
