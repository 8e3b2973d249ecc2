"""Exact k-nearest-neighbour graphs and the graph max-pooling layer."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pointcloud import _points
from .tensor import Node, ShapeError, _lift, _tape_of, matmul, relu


@dataclass(frozen=True)
class KnnGraph:
    k: int
    neighbors: np.ndarray  # (n, k) int, ascending distance, ties by index

    @property
    def n(self) -> int:
        return self.neighbors.shape[0]

    def neighborhoods(self, include_self: bool = True) -> np.ndarray:
        """(n, k+1) with the node itself in column 0, or (n, k) without it."""
        if not include_self:
            return self.neighbors
        return np.column_stack([np.arange(self.n), self.neighbors])


def pairwise_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, summed as ((dx^2 + dy^2) + dz^2).

    Coordinate differences are squared directly (no Gram-matrix shortcut) so
    d(i, j) and d(j, i) are bitwise equal.
    """
    dx = a[:, None, 0] - b[None, :, 0]
    dy = a[:, None, 1] - b[None, :, 1]
    dz = a[:, None, 2] - b[None, :, 2]
    return dx * dx + dy * dy + dz * dz


def build_knn(cloud, k: int, chunk: int = 512) -> KnnGraph:
    pts = _points(cloud)
    n = len(pts)
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < n, got k={k}, n={n}")
    out = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        d = pairwise_sq_dists(pts[start:stop], pts)
        d[np.arange(stop - start), np.arange(start, stop)] = np.inf
        # stable sort keeps ascending index order among equal distances
        out[start:stop] = np.argsort(d, axis=1, kind="stable")[:, :k]
    return KnnGraph(k, out)


def local_covariance(cloud, graph: KnnGraph) -> np.ndarray:
    """Row-major 3×3 covariance of each point's closed neighbourhood, (n, 9).

    Population form: divisor k + 1.
    """
    pts = _points(cloud)
    if len(pts) != graph.n:
        raise ShapeError(f"graph has {graph.n} nodes but cloud has {len(pts)} points")
    nb = pts[graph.neighborhoods(include_self=True)]
    centered = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / (graph.k + 1)
    return cov.reshape(len(pts), 9)


def concat_input_features(cloud, cov: np.ndarray) -> np.ndarray:
    pts = _points(cloud)
    cov = np.asarray(cov, dtype=np.float64)
    if cov.shape != (len(pts), 9):
        raise ShapeError(f"covariance block {cov.shape} does not match {len(pts)} points")
    return np.concatenate([pts, cov], axis=1)


def neighborhood_max(x, nbhd: np.ndarray) -> Node:
    """out[i, j] = max over r in nbhd[i] of x[r, j]; first index in ``nbhd[i]`` wins ties."""
    x = _lift(_tape_of(x), x)
    if nbhd.shape[0] != x.shape[0]:
        raise ShapeError(f"neighbourhoods cover {nbhd.shape[0]} nodes, features have {x.shape[0]} rows")
    gathered = x.value[nbhd]  # (n, r, f)
    pick = np.argmax(gathered, axis=1)  # (n, f)
    src = np.take_along_axis(nbhd, pick, axis=1)
    cols = np.broadcast_to(np.arange(x.shape[1]), src.shape)
    out = x.value[src, cols]

    def back(g):
        gx = np.zeros_like(x.value)
        np.add.at(gx, (src, cols), g)
        return (gx,)

    return x.tape.record(out, (x,), back)


def graph_max_pool(x, graph: KnnGraph, k_map, include_self: bool = True) -> Node:
    """ReLU of the neighbourhood max, then right-multiplied by ``k_map``."""
    xs = x.shape if isinstance(x, Node) else np.shape(x)
    if xs[0] != graph.n:
        raise ShapeError(f"features have {xs[0]} rows, graph has {graph.n} nodes")
    return matmul(relu(neighborhood_max(x, graph.neighborhoods(include_self))), k_map)

