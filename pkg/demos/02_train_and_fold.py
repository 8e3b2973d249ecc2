"""Train a small auto-encoder on synthetic shapes and watch the two folds.

The model is shrunk so this finishes in well under a minute. The three PLY
files written at the end share one color per grid point, which makes it easy
to follow how the flat grid is bent into the surface.

Run:  python3 demos/02_train_and_fold.py [out_dir]
"""
import sys
from pathlib import Path

import numpy as np

from foldingnet import FoldingNet, GridSpec, ModelConfig, TrainConfig, train
from foldingnet.pointcloud import synthetic_dataset
from foldingnet.trainer import export_stages, reconstruct, smoothed

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/fold")
rng = np.random.default_rng(0)

cfg = ModelConfig(codeword=64, k=8, point_widths=(32, 32), graph_widths=(64, 128),
                  head_widths=(64,), fold_hidden=(64, 64), grid=GridSpec(m=144))
data = synthetic_dataset(8, 256, rng)
model = FoldingNet.initialize(cfg, rng)

# %% before training
sphere = next(c for c in data if c.label == 1)
print("chamfer before:", reconstruct(model, sphere)[1].value)

# %% train (batch size 1, ADAM)
result = train(data, model, TrainConfig(iterations=400, lr=1e-3, seed=0))
s = smoothed(result.losses)
print(f"smoothed loss: start {s[0]:.4f}  end {s[-1]:.4f}")
print("chamfer after:", reconstruct(model, sphere)[1].value)

# %% grid, first fold, second fold
for p in export_stages(model, sphere, out):
    print("wrote", p)
