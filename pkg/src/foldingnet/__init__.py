"""Point-cloud auto-encoder with a graph encoder and a folding decoder."""

__version__ = "0.1.0"

from .chamfer import ChamferResult, chamfer, chamfer_backward
from .model import FoldingNet, GridSpec, ModelConfig, load_checkpoint, make_grid, save_checkpoint
from .pointcloud import PointCloud, TriMesh
from .trainer import TrainConfig, train

__all__ = ["ChamferResult", "chamfer", "chamfer_backward", "FoldingNet", "GridSpec", "ModelConfig",
           "load_checkpoint", "make_grid", "save_checkpoint", "PointCloud", "TriMesh",
           "TrainConfig", "train"]
