"""Folding decoder versus fully connected decoder, plus a noise check.

Everything is tiny so the loop over variants stays quick. The column
``decoder_params_full_scale`` is the closed-form count at full size, where
the folding decoder needs about 7% of the fully connected one's weights.

Run:  python3 demos/05_decoder_comparison.py
"""
import numpy as np

from foldingnet import GridSpec, ModelConfig, TrainConfig
from foldingnet.features import ClassifierConfig, compare_decoders, robustness_harness
from foldingnet.model import fc_decoder_count, folding_decoder_count
from foldingnet.pointcloud import stratified_split, synthetic_dataset

print("decoder weights at full size:", folding_decoder_count(), "vs", fc_decoder_count())

rng = np.random.default_rng(3)
data = synthetic_dataset(6, 96, rng)
tr, te = stratified_split([c.label for c in data], 0.25, rng)
train_set, test_set = [data[i] for i in tr], [data[i] for i in te]

base = ModelConfig(codeword=32, k=8, point_widths=(16, 16), graph_widths=(32, 64),
                   head_widths=(32,), fold_hidden=(32, 32), grid=GridSpec(m=81), fc_hidden=(64, 128))
tcfg = TrainConfig(iterations=100, lr=1e-3)
clf = ClassifierConfig(epochs=100)

for row in compare_decoders(train_set, test_set, base, tcfg, clf_cfg=clf):
    print(f"{row['variant']:<22} m={row['m']:>4}  train {row['final_loss']:.4f}  "
          f"test {row['test_loss']:.4f}  acc {row['accuracy']:.3f}")

# %% does the graph encoder hold up when 5% of points are scattered?
for row in robustness_harness(train_set, test_set, base, tcfg, (0.0, 0.05), clf):
    print(row)
