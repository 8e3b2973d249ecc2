"""A hand-built 2-layer perceptron that folds a 2-D grid into any point cloud.

The codeword is the flattened cloud. Hidden unit (j, k) sees only the grid
coordinates of the current row and the codeword entry s[j, k]; its band gate
is open only when the row is grid point j, so summing the gates per output
channel returns row i of the cloud exactly.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .pointcloud import _points


@dataclass(frozen=True)
class UniversalConfig:
    delta: float
    u: float
    c: float
    M: int
    m: int

    @property
    def side(self) -> int:
        return math.isqrt(self.m)

    def violations(self) -> list[str]:
        out = []
        if not (self.u > 0 and self.c > 0 and self.delta > 0 and self.M > 0):
            out.append("u, c, delta and M must all be positive")
        if not self.u * self.delta ** 2 > self.c + 1:
            out.append(f"u*delta^2 = {self.u * self.delta ** 2} must exceed c + 1 = {self.c + 1}")
        if not self.u > 8 * self.M ** 2 + 4 * self.M + 1:
            out.append(f"u = {self.u} must exceed 8M^2 + 4M + 1 = {8 * self.M ** 2 + 4 * self.M + 1}")
        if not self.c > 1:
            out.append(f"c = {self.c} must exceed 1")
        if self.side ** 2 != self.m:
            out.append(f"m = {self.m} is not a perfect square")
        else:
            beta = lattice_indices(self.side)
            if np.abs(beta).max() >= self.M:
                out.append(f"grid indices reach {np.abs(beta).max()}, need |index| < M = {self.M}")
        return out

    def validate(self) -> None:
        bad = self.violations()
        if bad:
            raise ValueError("invalid universal decoder config: " + "; ".join(bad))

    @property
    def magnitude_bound(self) -> float:
        """Upper bound on any hidden pre-activation, used as an overflow guard."""
        span = 8 * self.M ** 2 + 4 * self.M
        ud2 = self.u * self.delta ** 2
        return self.u * ud2 * span + ud2 * span + 1


def lattice_indices(side: int) -> np.ndarray:
    """Integers b with grid coordinate (2b + 1) * delta, centred: -side//2 .. side - side//2 - 1."""
    return np.arange(side) - side // 2


def default_config(m: int) -> UniversalConfig:
    """c = 2, M = grid side, u = 8M^2 + 4M + 2, delta = sqrt((c + 1.5) / u).

    Each strict inequality then holds with a margin of at least 0.5.
    """
    side = math.isqrt(m)
    if m < 1 or side * side != m:
        raise ValueError(f"m must be a perfect square, got {m}")
    M = side
    c = 2.0
    u = float(8 * M * M + 4 * M + 2)
    cfg = UniversalConfig(delta=math.sqrt((c + 1.5) / u), u=u, c=c, M=M, m=m)
    cfg.validate()
    return cfg


def universal_grid(cfg: UniversalConfig):
    """Grid rows ``((2b+1)δ, (2g+1)δ)`` with their integer indices ``b``, ``g``."""
    idx = lattice_indices(cfg.side)
    b, g = np.meshgrid(idx, idx, indexing="ij")
    b, g = b.ravel(), g.ravel()
    grid = np.column_stack([(2 * b + 1) * cfg.delta, (2 * g + 1) * cfg.delta])
    return grid, b, g


def encode_trivially(cloud) -> np.ndarray:
    """Row-major flattening ``[s11, s12, s13, s21, ...]``; needs every |s| <= 1."""
    pts = _points(cloud)
    if np.abs(pts).max() > 1:
        raise ValueError("cloud leaves the [-1, 1]^3 box the construction assumes")
    return pts.reshape(-1).copy()


@dataclass(frozen=True)
class UniversalPerceptron:
    """Per-grid-point weights shared by the three channels of each group."""
    config: UniversalConfig
    grid: np.ndarray
    alpha1: np.ndarray   # u^2 x_j
    alpha2: np.ndarray   # u y_j
    bias: np.ndarray     # -u^2 x_j^2 - u y_j^2

    @property
    def hidden_units(self) -> int:
        return 3 * len(self.grid)


def build_perceptron(cfg: UniversalConfig) -> UniversalPerceptron:
    cfg.validate()
    grid, _, _ = universal_grid(cfg)
    x, y = grid[:, 0], grid[:, 1]
    a1 = (cfg.u * cfg.u) * x
    a2 = cfg.u * y
    # -(a1*x + a2*y) is -u^2 x^2 - u y^2 formed from the very products the
    # hidden units compute, so the diagonal cancels to exactly zero
    bias = -(a1 * x + a2 * y)
    return UniversalPerceptron(cfg, grid, a1, a2, bias)


def dense_hidden_layer(net: UniversalPerceptron):
    """Explicit (3m, 3m + 2) weight matrix and bias vector; for small m only.

    Input layout is ``[x, y, s11, s12, s13, ...]``; unit ``3j + k`` is (j, k).
    """
    m = len(net.grid)
    W = np.zeros((3 * m, 3 * m + 2))
    b = np.zeros(3 * m)
    for j in range(m):
        for k in range(3):
            r = 3 * j + k
            W[r, 0], W[r, 1], W[r, 2 + r] = net.alpha1[j], net.alpha2[j], 1.0
            b[r] = net.bias[j]
    return W, b


def gate(y, c):
    """Pass ``y`` where ``|y| < c``, else 0."""
    y = np.asarray(y, dtype=np.float64)
    return np.where(np.abs(y) < c, y, 0.0)


def gate_relu(y, c, ramp: float = 1e-4):
    """The gate written as a sum of ReLUs.

    A continuous ReLU network cannot jump at ±c, so the drop happens over
    ``(c - ramp, c)``. Inside ``|y| < c - ramp`` it equals :func:`gate`
    exactly; past ``c`` the three ReLU terms cancel only up to rounding
    (about 1e-11 at ramp 1e-4).
    """
    y = np.asarray(y, dtype=np.float64)
    relu = lambda t: np.maximum(t, 0.0)
    knee = c - ramp
    slope = knee / ramp

    def positive(t):
        return relu(t) - (1 + slope) * relu(t - knee) + slope * relu(t - c)

    return positive(y) - positive(-y)


@dataclass
class GateStats:
    open_per_channel: np.ndarray      # (3,) total open gates over all rows
    open_off_diagonal: int            # open gates with j != i (must be 0)
    case_m1: int                      # pairs (i, j) with |m1| >= 1
    case_m2: int                      # m1 == 0, |m2| >= 1
    case_same: int                    # m1 == m2 == 0, i.e. i == j
    min_closed_margin: float          # min |y| - c over closed gates
    min_open_margin: float            # min c - |y| over open gates
    max_abs_preactivation: float


def _case_counts(cfg: UniversalConfig):
    _, b, g = universal_grid(cfg)
    m1 = 2 * (2 * b[None, :] + 1) * (b[:, None] - b[None, :])
    m2 = 2 * (2 * g[None, :] + 1) * (g[:, None] - g[None, :])
    c1 = int(np.count_nonzero(m1 != 0))
    c2 = int(np.count_nonzero((m1 == 0) & (m2 != 0)))
    c3 = int(np.count_nonzero((m1 == 0) & (m2 == 0)))
    return c1, c2, c3


def universal_decode(theta, cfg: UniversalConfig, net: UniversalPerceptron = None,
                     with_stats: bool = False, chunk: int = 256):
    """Evaluate the perceptron on every grid row; returns the m×3 cloud.

    With ``with_stats`` also returns :class:`GateStats` and raises if any
    gate opens off the diagonal or a margin falls below ``c - 1``.
    """
    cfg.validate()
    net = build_perceptron(cfg) if net is None else net
    m = cfg.m
    s = np.asarray(theta, dtype=np.float64).reshape(-1)
    if s.size != 3 * m:
        raise ValueError(f"codeword length {s.size} does not equal 3m = {3 * m}")
    s = s.reshape(m, 3)
    out = np.empty((m, 3))
    open_ch = np.zeros(3, dtype=np.int64)
    off_diag = 0
    min_closed, min_open, max_abs = math.inf, math.inf, 0.0
    x, y = net.grid[:, 0], net.grid[:, 1]
    for start in range(0, m, chunk):
        rows = np.arange(start, min(m, start + chunk))
        lin = (net.alpha1[None, :] * x[rows, None] + net.alpha2[None, :] * y[rows, None]) + net.bias[None, :]
        diag = rows[:, None] == np.arange(m)[None, :]
        for k in range(3):
            pre = lin + s[None, :, k]
            is_open = np.abs(pre) < cfg.c
            out[rows, k] = np.where(is_open, pre, 0.0).sum(axis=1)
            if with_stats:
                open_ch[k] += int(is_open.sum())
                off_diag += int((is_open & ~diag).sum())
                absval = np.abs(pre)
                max_abs = max(max_abs, float(absval.max()))
                if (~is_open).any():
                    min_closed = min(min_closed, float((absval[~is_open] - cfg.c).min()))
                if is_open.any():
                    min_open = min(min_open, float((cfg.c - absval[is_open]).min()))
    if not with_stats:
        return out
    c1, c2, c3 = _case_counts(cfg)
    stats = GateStats(open_ch, off_diag, c1, c2, c3, min_closed, min_open, max_abs)
    if off_diag:
        raise AssertionError(f"{off_diag} gates opened away from their own grid point")
    if min(min_closed, min_open) < cfg.c - 1:
        raise AssertionError(f"gate margin fell below c - 1: closed {min_closed}, open {min_open}")
    if max_abs > cfg.magnitude_bound * (1 + 1e-12):
        raise AssertionError(f"pre-activation {max_abs} exceeds bound {cfg.magnitude_bound}")
    return out, stats


def random_box_cloud(m: int, rng, boundary_fraction: float = 0.1) -> np.ndarray:
    """Uniform in [-1, 1]^3 with a share of coordinates pinned to exactly ±1."""
    pts = rng.uniform(-1, 1, size=(m, 3))
    pin = rng.random((m, 3)) < boundary_fraction
    pts[pin] = np.where(rng.random(int(pin.sum())) < 0.5, -1.0, 1.0)
    return pts


REPORT_FIELDS = ["trial", "m", "max_abs_error", "open_ch0", "open_ch1", "open_ch2",
                 "case_m1", "case_m2", "case_same", "min_closed_margin", "min_open_margin"]


def verify_universality(trials: int, m: int, rng, boundary_fraction: float = 0.1) -> list[dict]:
    """Round-trip random clouds through the construction; one row per trial."""
    if trials < 1:
        raise ValueError("need at least one trial")
    cfg = default_config(m)
    net = build_perceptron(cfg)
    rows = []
    for t in range(trials):
        cloud = random_box_cloud(m, rng, boundary_fraction)
        recon, st = universal_decode(encode_trivially(cloud), cfg, net, with_stats=True)
        if not np.all(st.open_per_channel == m):
            raise AssertionError(f"trial {t}: open gates per channel {st.open_per_channel}, expected {m}")
        rows.append({
            "trial": t, "m": m, "max_abs_error": float(np.abs(recon - cloud).max()),
            "open_ch0": int(st.open_per_channel[0]), "open_ch1": int(st.open_per_channel[1]),
            "open_ch2": int(st.open_per_channel[2]),
            "case_m1": st.case_m1, "case_m2": st.case_m2, "case_same": st.case_same,
            "min_closed_margin": st.min_closed_margin, "min_open_margin": st.min_open_margin,
        })
    return rows


def write_report(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
