"""Graph encoder, folding decoder, fully-connected baseline decoder, checkpoints."""
from __future__ import annotations

import dataclasses
import io
import json
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from . import tensor as T
from .knn import build_knn, concat_input_features, graph_max_pool, local_covariance
from .pointcloud import _points

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class GridSpec:
    dim: int = 2
    m: int = 2025
    mode: str = "regular"
    extent: float = 0.5

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"grid dim must be 1, 2 or 3, got {self.dim}")
        if self.mode not in ("regular", "uniform_random"):
            raise ValueError(f"grid mode must be 'regular' or 'uniform_random', got {self.mode!r}")
        if self.m < 1 or not self.extent > 0:
            raise ValueError("grid needs m >= 1 and a positive extent")
        if self.mode == "regular" and self.side ** self.dim != self.m:
            raise ValueError(f"regular {self.dim}-D grid needs a perfect power, {self.m} is not")

    @property
    def side(self) -> int:
        s = int(round(self.m ** (1.0 / self.dim)))
        for cand in (s - 1, s, s + 1):
            if cand > 0 and cand ** self.dim == self.m:
                return cand
        return s


def make_grid(spec: GridSpec, rng=None) -> np.ndarray:
    """Grid points as an m×dim matrix.

    Regular grids are lattices centred at the origin with the last
    coordinate varying fastest; a side of one sits at the origin.
    """
    if spec.mode == "uniform_random":
        rng = np.random.default_rng(0) if rng is None else rng
        return rng.uniform(-spec.extent, spec.extent, size=(spec.m, spec.dim))
    side = spec.side
    axis = np.linspace(-spec.extent, spec.extent, side) if side > 1 else np.zeros(1)
    mesh = np.meshgrid(*([axis] * spec.dim), indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


@dataclass(frozen=True)
class ModelConfig:
    codeword: int = 512
    k: int = 16
    point_widths: tuple = (64, 64, 64)
    graph_widths: tuple = (128, 1024)
    head_widths: tuple = (512,)          # hidden widths; the last layer outputs ``codeword``
    fold_hidden: tuple = (512, 512)
    folds: int = 2
    grid: GridSpec = field(default_factory=GridSpec)
    encoder: str = "graph"               # "graph" | "no_graph"
    decoder: str = "folding"             # "folding" | "fc"
    fc_hidden: tuple = (1024, 2048)
    fc_points: int = 2048
    include_self: bool = True            # pool over N(i) plus i itself
    graph_relu: bool = True              # ReLU after each K_map product

    def __post_init__(self):
        if self.encoder not in ("graph", "no_graph"):
            raise ValueError(f"unknown encoder {self.encoder!r}")
        if self.decoder not in ("folding", "fc"):
            raise ValueError(f"unknown decoder {self.decoder!r}")
        if self.folds not in (2, 3):
            raise ValueError(f"folds must be 2 or 3, got {self.folds}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelConfig":
        d = dict(d)
        if "grid" in d and isinstance(d["grid"], Mapping):
            d["grid"] = GridSpec(**d["grid"])
        for key in ("point_widths", "graph_widths", "head_widths", "fold_hidden", "fc_hidden"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


# ------------------------------------------------------------ parameter layout

def _mlp_shapes(prefix, widths):
    shapes = []
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        shapes += [(f"{prefix}.{i}.w", (a, b)), (f"{prefix}.{i}.b", (1, b))]
    return shapes


def encoder_shapes(cfg: ModelConfig) -> list:
    shapes = _mlp_shapes("enc.point", (12,) + tuple(cfg.point_widths))
    prev = cfg.point_widths[-1]
    for i, w in enumerate(cfg.graph_widths):
        shapes.append((f"enc.graph.{i}.k", (prev, w)))
        prev = w
    shapes += _mlp_shapes("enc.head", (prev,) + tuple(cfg.head_widths) + (cfg.codeword,))
    return shapes


def decoder_shapes(cfg: ModelConfig) -> list:
    if cfg.decoder == "fc":
        return _mlp_shapes("dec.fc", (cfg.codeword,) + tuple(cfg.fc_hidden) + (3 * cfg.fc_points,))
    shapes = []
    for f in range(cfg.folds):
        width_in = cfg.codeword + (cfg.grid.dim if f == 0 else 3)
        shapes += _mlp_shapes(f"dec.fold{f}", (width_in,) + tuple(cfg.fold_hidden) + (3,))
    return shapes


def init_params(cfg: ModelConfig, rng) -> dict:
    """Glorot-uniform weights, zero biases."""
    params = {}
    for name, shape in encoder_shapes(cfg) + decoder_shapes(cfg):
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
        else:
            lim = np.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-lim, lim, size=shape)
    return params


def is_weight(name: str) -> bool:
    return not name.endswith(".b")


def count_params(params) -> int:
    """Total scalar weights and biases in a parameter dict (or name→shape list)."""
    if isinstance(params, Mapping):
        return int(sum(np.size(v) for v in params.values()))
    return int(sum(int(np.prod(shape)) for _, shape in params))


def folding_decoder_count(codeword=512, grid_dim=2, hidden=(512, 512), folds=2) -> int:
    cfg = ModelConfig(codeword=codeword, grid=GridSpec(dim=grid_dim, m=1), fold_hidden=tuple(hidden),
                      folds=folds)
    return count_params(decoder_shapes(cfg))


def fc_decoder_count(codeword=512, hidden=(1024, 2048), points=2048) -> int:
    cfg = ModelConfig(codeword=codeword, decoder="fc", fc_hidden=tuple(hidden), fc_points=points)
    return count_params(decoder_shapes(cfg))


def _layers(P, prefix, n_layers, last_activation="identity"):
    acts = ["relu"] * (n_layers - 1) + [last_activation]
    return [(P[f"{prefix}.{i}.w"], P[f"{prefix}.{i}.b"], acts[i]) for i in range(n_layers)]


# ------------------------------------------------------------ tape builders

def input_features(cloud, k: int):
    pts = _points(cloud)
    if len(pts) <= k:
        raise ValueError(f"cloud has {len(pts)} points; need more than k={k}")
    graph = build_knn(pts, k)
    return concat_input_features(pts, local_covariance(pts, graph)), graph


def encode_on_tape(tape: T.Tape, P, cloud, cfg: ModelConfig, encoder: Optional[str] = None) -> T.Node:
    """1×d codeword node; ``encoder='no_graph'`` swaps pooling for per-point maps."""
    encoder = encoder or cfg.encoder
    feats, graph = input_features(cloud, cfg.k)
    h = T.per_row_mlp(tape.constant(feats),
                      _layers(P, "enc.point", len(cfg.point_widths), "relu"))
    for i in range(len(cfg.graph_widths)):
        kmap = P[f"enc.graph.{i}.k"]
        if encoder == "graph":
            h = graph_max_pool(h, graph, kmap, include_self=cfg.include_self)
        else:
            h = T.matmul(T.relu(h), kmap)
        if cfg.graph_relu:
            h = T.relu(h)
    return T.per_row_mlp(T.column_max(h), _layers(P, "enc.head", len(cfg.head_widths) + 1))


def fold_once(points, theta, layers) -> T.Node:
    """Concatenate the replicated codeword to every row, then a shared MLP."""
    m = points.shape[0]
    return T.per_row_mlp(T.rowwise_concat(points, T.replicate_rows(theta, m)), layers)


def decode_on_tape(tape: T.Tape, P, theta, grid: np.ndarray, cfg: ModelConfig) -> list:
    """All stages: ``[grid, fold 1, fold 2(, fold 3)]`` for folding; ``[cloud]`` for FC."""
    if cfg.decoder == "fc":
        n_layers = len(cfg.fc_hidden) + 1
        flat = T.per_row_mlp(theta, _layers(P, "dec.fc", n_layers))
        return [T.reshape(flat, cfg.fc_points, 3)]
    x = tape.constant(grid)
    stages = [x]
    n_layers = len(cfg.fold_hidden) + 1
    for f in range(cfg.folds):
        x = fold_once(x, theta, _layers(P, f"dec.fold{f}", n_layers))
        stages.append(x)
    return stages


# ------------------------------------------------------------ model wrapper

class FoldingNet:
    """Parameters, fixed grid and config of one auto-encoder."""

    def __init__(self, config: ModelConfig, params: dict, grid: Optional[np.ndarray] = None):
        self.config = config
        self.params = params
        self.grid = make_grid(config.grid) if grid is None else np.asarray(grid, dtype=np.float64)
        expected = dict(encoder_shapes(config) + decoder_shapes(config))
        for name, shape in expected.items():
            if name not in params:
                raise ValueError(f"missing parameter {name}")
            if params[name].shape != tuple(shape):
                raise T.ShapeError(f"{name}: expected {shape}, got {params[name].shape}")

    @classmethod
    def initialize(cls, config: ModelConfig, rng) -> "FoldingNet":
        params = init_params(config, rng)
        grid = make_grid(config.grid, rng) if config.grid.mode == "uniform_random" else None
        return cls(config, params, grid)

    def _constants(self, tape):
        return {k: tape.constant(v) for k, v in self.params.items()}

    def encode(self, cloud, encoder: Optional[str] = None) -> np.ndarray:
        tape = T.Tape()
        return encode_on_tape(tape, self._constants(tape), cloud, self.config, encoder).value[0]

    def stages(self, codeword) -> list:
        tape = T.Tape()
        theta = tape.constant(np.asarray(codeword, dtype=np.float64).reshape(1, -1))
        return [s.value for s in decode_on_tape(tape, self._constants(tape), theta, self.grid, self.config)]

    def decode(self, codeword) -> np.ndarray:
        return self.stages(codeword)[-1]

    def reconstruct(self, cloud) -> np.ndarray:
        return self.decode(self.encode(cloud))

    def loss_and_grads(self, cloud, encoder: Optional[str] = None):
        """Chamfer loss of one cloud and gradients for every parameter."""
        from .chamfer import chamfer_loss

        tape = T.Tape()
        P = {k: tape.leaf(v) for k, v in self.params.items()}
        theta = encode_on_tape(tape, P, cloud, self.config, encoder)
        recon = decode_on_tape(tape, P, theta, self.grid, self.config)[-1]
        loss = chamfer_loss(_points(cloud), recon)
        tape.backward(loss)
        return float(loss.value[0, 0]), {k: node.gradient() for k, node in P.items()}

    def copy(self) -> "FoldingNet":
        return FoldingNet(self.config, {k: v.copy() for k, v in self.params.items()}, self.grid.copy())

    def param_count(self, prefix: str = "") -> int:
        return count_params({k: v for k, v in self.params.items() if k.startswith(prefix)})


# Module-level entry points mirroring the operation list.

def encode(cloud, model: FoldingNet) -> np.ndarray:
    return model.encode(cloud, "graph")


def encode_no_graph(cloud, model: FoldingNet) -> np.ndarray:
    return model.encode(cloud, "no_graph")


def decode(codeword, model: FoldingNet) -> np.ndarray:
    return model.decode(codeword)


def fc_decode(codeword, params: Mapping, points: int = 2048) -> np.ndarray:
    theta = np.asarray(codeword, dtype=np.float64).reshape(1, -1)
    n_layers = len([k for k in params if k.startswith("dec.fc.") and k.endswith(".w")])
    out_width = params[f"dec.fc.{n_layers - 1}.w"].shape[1]
    if out_width != 3 * points:
        raise T.ShapeError(f"FC decoder emits {out_width} values, need {3 * points}")
    tape = T.Tape()
    P = {k: tape.constant(v) for k, v in params.items() if k.startswith("dec.fc.")}
    flat = T.per_row_mlp(tape.constant(theta), _layers(P, "dec.fc", n_layers))
    return flat.value.reshape(points, 3)


# ------------------------------------------------------------ checkpoints

def save_checkpoint(model: FoldingNet, path, extra: Optional[dict] = None) -> None:
    """NumPy ``.npz`` archive: one array per parameter plus ``__grid__`` and a
    JSON ``__meta__`` string holding the format version and model config."""
    meta = {"format": "foldingnet-checkpoint", "version": CHECKPOINT_VERSION,
            "config": model.config.to_dict(), "extra": extra or {}}
    arrays = {f"param/{k}": v for k, v in model.params.items()}
    arrays["__grid__"] = model.grid
    arrays["__meta__"] = np.array(json.dumps(meta, sort_keys=True))
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path) -> FoldingNet:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format") != "foldingnet-checkpoint":
            raise ValueError(f"{path}: not a checkpoint file")
        if meta["version"] > CHECKPOINT_VERSION:
            raise ValueError(f"{path}: checkpoint version {meta['version']} is newer than supported")
        params = {k[len("param/"):]: data[k].copy() for k in data.files if k.startswith("param/")}
        grid = data["__grid__"].copy()
    return FoldingNet(ModelConfig.from_dict(meta["config"]), params, grid)
