"""Frozen codewords as features for a linear classifier.

A short unsupervised run is enough for the four synthetic classes to separate
linearly. The sweep then retrains the classifier on shrinking, class-balanced
slices of the training labels.

Run:  python3 demos/03_codewords_and_labels.py
"""
import numpy as np

from foldingnet import FoldingNet, GridSpec, ModelConfig, TrainConfig, train
from foldingnet.features import FeatureSet, classify, extract_features, label_fraction_sweep
from foldingnet.pointcloud import stratified_split, synthetic_dataset

rng = np.random.default_rng(1)
data = synthetic_dataset(25, 128, rng)
tr, te = stratified_split([c.label for c in data], 0.25, rng)
train_set, test_set = [data[i] for i in tr], [data[i] for i in te]

cfg = ModelConfig(codeword=64, k=8, point_widths=(32, 32), graph_widths=(64, 128),
                  head_widths=(64,), fold_hidden=(64, 64), grid=GridSpec(m=121))
model = FoldingNet.initialize(cfg, rng)
train(train_set, model, TrainConfig(iterations=300, lr=1e-3, seed=1))

# %% one codeword per cloud, tagged by split
a = extract_features(model, train_set, ["train"] * len(train_set))
b = extract_features(model, test_set, ["test"] * len(test_set))
features = FeatureSet(np.vstack([a.codewords, b.codewords]),
                      np.concatenate([a.labels, b.labels]),
                      np.concatenate([a.split, b.split]))
clf, acc = classify(features)
print(f"test accuracy with all labels: {acc:.3f}")

# %% fewer labels
for row in label_fraction_sweep(features, [0.05, 0.1, 0.25, 0.5, 1.0], rng):
    print(f"  {row['fraction']:>5}  n={row['n_train']:>3}  acc={row['accuracy']:.3f}")
