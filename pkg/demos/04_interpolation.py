"""Walk a straight line between two codewords and decode each step.

Endpoints are exact reconstructions of the two inputs; the frames in between
show what the decoder does with codewords it never saw.

Run:  python3 demos/04_interpolation.py [out_dir]
"""
import sys
from pathlib import Path

import numpy as np

from foldingnet import FoldingNet, GridSpec, ModelConfig, TrainConfig, train
from foldingnet.features import interpolate
from foldingnet.pointcloud import synthetic_dataset, write_ply_ascii
from foldingnet.trainer import grid_colors

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/interp")
out.mkdir(parents=True, exist_ok=True)
rng = np.random.default_rng(2)

cfg = ModelConfig(codeword=64, k=8, point_widths=(32, 32), graph_widths=(64, 128),
                  head_widths=(64,), fold_hidden=(64, 64), grid=GridSpec(m=144))
data = synthetic_dataset(6, 256, rng)
model = FoldingNet.initialize(cfg, rng)
train(data, model, TrainConfig(iterations=300, lr=1e-3, seed=2))

plane = next(c for c in data if c.label == 0)
torus = next(c for c in data if c.label == 2)
frames = interpolate(model, plane, torus, steps=6)
colors = grid_colors(model.grid)
for i, pts in enumerate(frames):
    # spread of the decoded cloud, a rough sense of the shape changing
    print(i, np.round(pts.std(axis=0), 3))
    write_ply_ascii(pts, out / f"interp_{i:02d}.ply", colors)
print("frames in", out)
