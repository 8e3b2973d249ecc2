"""Point clouds, triangle meshes, file formats, augmentations and toy shapes."""
from __future__ import annotations

import csv
import itertools
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

SHAPE_KINDS = ("plane", "sphere", "torus", "cube_surface")


class FormatError(ValueError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


@dataclass
class PointCloud:
    points: np.ndarray
    label: Optional[int] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise ValueError(f"a point cloud needs shape (n>=1, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud has non-finite coordinates")
        self.points = pts

    def __len__(self):
        return self.points.shape[0]

    def with_points(self, points) -> "PointCloud":
        return PointCloud(points, self.label)


@dataclass
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.triangles.size and (self.triangles.min() < 0
                                    or self.triangles.max() >= len(self.vertices)):
            raise ValueError("triangle index out of range")

    def areas(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)


def _points(cloud) -> np.ndarray:
    return cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)


def _like(cloud, points):
    return cloud.with_points(points) if isinstance(cloud, PointCloud) else points


# ---------------------------------------------------------------- file formats

def _content_lines(path):
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if text:
                yield lineno, text


def _floats(path, lineno, tokens):
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise FormatError(path, lineno, f"non-numeric token in {' '.join(tokens)!r}") from None


def _ints(path, lineno, tokens):
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise FormatError(path, lineno, f"non-integer token in {' '.join(tokens)!r}") from None


def read_off(path) -> TriMesh:
    """Parse an ASCII OFF mesh; polygons are fan-triangulated.

    Accepts the ModelNet quirk where the counts follow ``OFF`` on the same line.
    """
    lines = _content_lines(path)
    try:
        lineno, head = next(lines)
    except StopIteration:
        raise FormatError(path, None, "empty file") from None
    if not head.startswith("OFF"):
        raise FormatError(path, lineno, f"expected 'OFF' header, got {head!r}")
    rest = head[3:].split()
    if not rest:
        try:
            lineno, counts = next(lines)
        except StopIteration:
            raise FormatError(path, lineno, "missing counts line") from None
        rest = counts.split()
    if len(rest) < 2:
        raise FormatError(path, lineno, "counts line needs vertex and face counts")
    nv, nf = _ints(path, lineno, rest[:2])

    verts = []
    for _ in range(nv):
        try:
            lineno, text = next(lines)
        except StopIteration:
            raise FormatError(path, lineno, f"expected {nv} vertices, file ended") from None
        vals = _floats(path, lineno, text.split())
        if len(vals) < 3:
            raise FormatError(path, lineno, "vertex needs three coordinates")
        verts.append(vals[:3])

    tris = []
    for _ in range(nf):
        try:
            lineno, text = next(lines)
        except StopIteration:
            raise FormatError(path, lineno, f"expected {nf} faces, file ended") from None
        tokens = text.split()
        count = _ints(path, lineno, tokens[:1])[0]
        # trailing per-face colour values are ignored
        idx = _ints(path, lineno, tokens[1: 1 + count])
        if count < 3 or len(idx) != count:
            raise FormatError(path, lineno, f"malformed face {text!r}")
        if min(idx) < 0 or max(idx) >= nv:
            raise FormatError(path, lineno, f"vertex index out of range in {text!r}")
        for a, b in zip(idx[1:-1], idx[2:]):
            tris.append((idx[0], a, b))
    return TriMesh(np.array(verts, dtype=np.float64).reshape(-1, 3),
                   np.array(tris, dtype=np.int64).reshape(-1, 3))


def write_off(mesh: TriMesh, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"OFF\n{len(mesh.vertices)} {len(mesh.triangles)} 0\n")
        for v in mesh.vertices:
            fh.write(" ".join(repr(float(c)) for c in v) + "\n")
        for t in mesh.triangles:
            fh.write(f"3 {t[0]} {t[1]} {t[2]}\n")


def read_xyz(path) -> PointCloud:
    rows = []
    for lineno, text in _content_lines(path):
        vals = _floats(path, lineno, text.split())
        if len(vals) != 3:
            raise FormatError(path, lineno, f"expected 3 values, got {len(vals)}")
        rows.append(vals)
    if not rows:
        raise FormatError(path, None, "no points")
    return PointCloud(np.array(rows))


def write_xyz(cloud, path) -> None:
    np.savetxt(path, _points(cloud), fmt="%.17g")


def write_ply_ascii(cloud, path, colors=None) -> None:
    """ASCII PLY 1.0 with float x,y,z and optional uchar red/green/blue."""
    pts = _points(cloud)
    if colors is not None:
        colors = np.asarray(colors)
        if colors.shape != (len(pts), 3):
            raise ValueError(f"colors must be ({len(pts)}, 3), got {colors.shape}")
        colors = np.clip(np.rint(colors), 0, 255).astype(np.int64)
    header = ["ply", "format ascii 1.0", f"element vertex {len(pts)}",
              "property float x", "property float y", "property float z"]
    if colors is not None:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header.append("end_header")
    with open(path, "w") as fh:
        fh.write("\n".join(header) + "\n")
        for i, p in enumerate(pts.astype(np.float32)):
            line = " ".join("%.9g" % c for c in p)
            if colors is not None:
                line += " %d %d %d" % tuple(colors[i])
            fh.write(line + "\n")


def read_ply_ascii(path):
    """Read an ASCII PLY vertex list; returns ``(PointCloud, colors or None)``."""
    with open(path, "r") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise FormatError(path, 1, "missing 'ply' magic")
    props, count, end = [], None, None
    in_vertex = False
    for i, line in enumerate(lines[1:], start=2):
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format" and tok[1:2] != ["ascii"]:
            raise FormatError(path, i, f"only ascii PLY is supported, got {line!r}")
        elif tok[0] == "element":
            in_vertex = tok[1] == "vertex"
            if in_vertex:
                count = _ints(path, i, tok[2:3])[0]
        elif tok[0] == "property" and in_vertex:
            props.append(tok[-1])
        elif tok[0] == "end_header":
            end = i
            break
    if end is None or count is None:
        raise FormatError(path, None, "incomplete PLY header")
    for axis in "xyz":
        if axis not in props:
            raise FormatError(path, end, f"vertex property {axis!r} missing")
    body = lines[end: end + count]
    if len(body) < count:
        raise FormatError(path, end + len(body), f"expected {count} vertices")
    data = np.array([_floats(path, end + 1 + j, l.split()) for j, l in enumerate(body)])
    if data.shape[1] != len(props):
        raise FormatError(path, end + 1, "vertex row width does not match header")
    pts = data[:, [props.index(a) for a in "xyz"]]
    colors = None
    if all(c in props for c in ("red", "green", "blue")):
        colors = data[:, [props.index(c) for c in ("red", "green", "blue")]].astype(np.int64)
    return PointCloud(pts), colors


def read_manifest(path) -> list[tuple[str, int]]:
    """``path,label`` rows; relative paths resolve against the manifest's folder."""
    base = Path(path).parent
    out = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#"):
                continue
            if lineno == 1 and row[0] == "path":
                continue
            if len(row) != 2:
                raise FormatError(path, lineno, "expected 'path,label'")
            label = _ints(path, lineno, [row[1]])[0]
            p = Path(row[0])
            out.append((str(p if p.is_absolute() else base / p), label))
    return out


def write_manifest(path, entries) -> None:
    base = Path(path).parent
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "label"])
        for p, label in entries:
            w.writerow([os.path.relpath(p, base), int(label)])


def load_dataset(manifest, n_points: int = 2048, rng=None) -> list[PointCloud]:
    """Load every manifest entry; OFF meshes are sampled to ``n_points``."""
    rng = np.random.default_rng(0) if rng is None else rng
    clouds = []
    for p, label in read_manifest(manifest):
        suffix = Path(p).suffix.lower()
        if suffix == ".off":
            cloud = normalize_unit_sphere(sample_mesh(read_off(p), n_points, rng))
        elif suffix == ".ply":
            cloud = read_ply_ascii(p)[0]
        else:
            cloud = read_xyz(p)
        cloud.label = label
        clouds.append(cloud)
    return clouds


# ------------------------------------------------------------------ geometry

def sample_mesh(mesh: TriMesh, n: int, rng) -> PointCloud:
    """Area-weighted uniform surface samples."""
    areas = mesh.areas()
    total = areas.sum()
    if not total > 0:
        raise ValueError("mesh has no triangle with positive area")
    tri = rng.choice(len(areas), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))[:, None]
    r2 = rng.random(n)[:, None]
    v = mesh.vertices[mesh.triangles[tri]]
    pts = (1 - r1) * v[:, 0] + r1 * (1 - r2) * v[:, 1] + r1 * r2 * v[:, 2]
    return PointCloud(pts)


def normalize_unit_sphere(cloud):
    """Center at the centroid, then scale so the farthest point has norm 1."""
    pts = _points(cloud)
    centered = pts - pts.mean(axis=0)
    scale = np.linalg.norm(centered, axis=1).max()
    if scale == 0:
        return _like(cloud, np.zeros_like(pts))
    return _like(cloud, centered / scale)


def _rotation_group() -> np.ndarray:
    mats = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1, -1), repeat=3):
            r = np.zeros((3, 3))
            r[range(3), perm] = signs
            if round(np.linalg.det(r)) == 1:
                mats.append(r)
    return np.array(mats)


AXIS_ROTATIONS = _rotation_group()


def axis_aligned_rotation(cloud, index: int):
    """Rotate by the ``index``-th of the 24 proper rotations of the cube (0 = identity)."""
    if not 0 <= index < len(AXIS_ROTATIONS):
        raise ValueError(f"rotation index must be in [0, 24), got {index}")
    # x @ R.T is a signed coordinate permutation; no rounding happens
    return _like(cloud, _points(cloud) @ AXIS_ROTATIONS[index].T)


def inverse_rotation_index(index: int) -> int:
    target = AXIS_ROTATIONS[index].T
    for j, r in enumerate(AXIS_ROTATIONS):
        if np.array_equal(r, target):
            return j
    raise AssertionError("rotation group is not closed under inversion")


def noise_count(fraction: float, n: int) -> int:
    if not 0 <= fraction <= 1:
        raise ValueError(f"noise fraction must be in [0, 1], got {fraction}")
    # guards against 0.1 * 30 = 3.0000000000000004 style round-up
    return min(n, math.ceil(round(fraction * n, 9)))


def shift_noise(cloud, fraction: float, rng):
    """Move ``ceil(fraction * n)`` random points to uniform spots in the bounding box."""
    pts = _points(cloud).copy()
    k = noise_count(fraction, len(pts))
    if k == 0:
        return _like(cloud, pts)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    idx = rng.choice(len(pts), size=k, replace=False)
    pts[idx] = lo + rng.random((k, 3)) * (hi - lo)
    return _like(cloud, pts)


# ------------------------------------------------------------ synthetic data

def _sphere(n, rng, radius=1.0):
    g = rng.normal(size=(n, 3))
    return radius * g / np.linalg.norm(g, axis=1, keepdims=True)


def _plane(n, rng, width=1.0, height=None):
    height = rng.uniform(0.4, 1.0) if height is None else height
    xy = rng.uniform(-1, 1, size=(n, 2)) * [width, height]
    return np.column_stack([xy, np.zeros(n)])


def _torus(n, rng, R=1.0, r=None):
    r = rng.uniform(0.2, 0.5) if r is None else r
    out = np.empty((0, 3))
    while len(out) < n:
        u = rng.uniform(0, 2 * np.pi, size=2 * n)
        v = rng.uniform(0, 2 * np.pi, size=2 * n)
        # surface element is proportional to R + r cos v
        keep = rng.random(2 * n) < (R + r * np.cos(v)) / (R + r)
        u, v = u[keep], v[keep]
        ring = R + r * np.cos(v)
        out = np.vstack([out, np.column_stack([ring * np.cos(u), ring * np.sin(u), r * np.sin(v)])])
    return out[:n]


def _box_surface(n, rng, half=None):
    half = np.asarray(rng.uniform(0.5, 1.0, size=3) if half is None else half, dtype=float)
    face_area = np.array([half[1] * half[2], half[0] * half[2], half[0] * half[1]])
    face_area = np.repeat(face_area, 2)
    face = rng.choice(6, size=n, p=face_area / face_area.sum())
    pts = rng.uniform(-1, 1, size=(n, 3)) * half
    axis, sign = face // 2, np.where(face % 2 == 0, 1.0, -1.0)
    pts[np.arange(n), axis] = sign * half[axis]
    return pts


def synth_shape(kind: str, n: int, rng, params: Optional[dict] = None,
                normalize: bool = True) -> PointCloud:
    """Uniform surface samples of a primitive.

    ``params`` per kind: plane ``width``/``height``; sphere ``radius``; torus
    ``R``/``r``; cube_surface ``half`` (three half-extents). Unset shape
    parameters are drawn from ``rng`` so a class has some spread.
    """
    params = dict(params or {})
    if n < 4:
        raise ValueError(f"need at least 4 points, got {n}")
    makers = {"plane": _plane, "sphere": _sphere, "torus": _torus, "cube_surface": _box_surface}
    if kind not in makers:
        raise ValueError(f"unknown shape kind {kind!r}; choose from {SHAPE_KINDS}")
    pts = makers[kind](n, rng, **params)
    cloud = PointCloud(pts, SHAPE_KINDS.index(kind))
    return normalize_unit_sphere(cloud) if normalize else cloud


def synthetic_dataset(per_class: int, n_points: int, rng, kinds=SHAPE_KINDS) -> list[PointCloud]:
    """Class-balanced list, interleaved by class: kinds[0], kinds[1], ..."""
    out = []
    for _ in range(per_class):
        for label, kind in enumerate(kinds):
            cloud = synth_shape(kind, n_points, rng)
            cloud.label = label
            out.append(cloud)
    return out


def stratified_split(labels, test_fraction: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Indices of a per-class train/test split."""
    labels = np.asarray(labels)
    train, test = [], []
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        k = int(math.floor(len(idx) * test_fraction + 0.5))
        test.extend(idx[:k])
        train.extend(idx[k:])
    return np.sort(np.array(train, dtype=np.int64)), np.sort(np.array(test, dtype=np.int64))
