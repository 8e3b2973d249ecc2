"""A single hidden-layer perceptron on a fixed 2D grid can emit any point cloud.

The codeword here is just the flattened cloud. Each hidden unit watches one
grid point and one coordinate, and its gate is open only on its own grid
point, so every output row is copied back without error.

Run:  python3 demos/01_universal_decoder.py
"""
import numpy as np

from foldingnet.universal import (build_perceptron, default_config, encode_trivially,
                                  random_box_cloud, universal_decode, verify_universality)

rng = np.random.default_rng(0)

# %% construct the decoder for 64 points (an 8 x 8 grid)
cfg = default_config(64)
net = build_perceptron(cfg)
print(f"m={cfg.m}  side={cfg.side}  c={cfg.c}  delta={cfg.delta:.6f}")
print("hidden units:", net.hidden_units)

# %% round-trip one random cloud and look at the gate bookkeeping
cloud = random_box_cloud(cfg.m, rng)
recon, stats = universal_decode(encode_trivially(cloud), cfg, net, with_stats=True)
print("max |error|:", np.abs(recon - cloud).max())
print("open gates per channel:", stats.open_per_channel)
print("smallest closed margin:", stats.min_closed_margin)

# %% a batch of trials, as the verify-universal command does
rows = verify_universality(20, 64, rng)
print("worst error over 20 trials:", max(r["max_abs_error"] for r in rows))
