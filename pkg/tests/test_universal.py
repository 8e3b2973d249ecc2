import math

import numpy as np
import pytest

from foldingnet.universal import (UniversalConfig, build_perceptron, default_config,
                                  dense_hidden_layer, encode_trivially, gate, gate_relu,
                                  random_box_cloud, universal_decode, universal_grid,
                                  verify_universality)


def test_default_config_examples():
    c = default_config(4)
    assert (c.M, c.c, c.u) == (2, 2.0, 42.0)
    assert abs(c.delta - math.sqrt(3.5 / 42)) < 1e-15 and abs(c.delta - 0.2887) < 1e-4
    assert abs(c.u * c.delta ** 2 - 3.5) < 1e-12
    c = default_config(16)
    assert (c.M, c.u) == (4, 146.0)
    _, b, g = universal_grid(c)
    assert sorted(set(b)) == [-2, -1, 0, 1] == sorted(set(g))
    for m in (1, 4, 9, 64, 1024, 4096):
        assert default_config(m).violations() == []
    with pytest.raises(ValueError):
        default_config(10)


def test_invalid_config_rejected_before_evaluation():
    bad = UniversalConfig(delta=0.1, u=10.0, c=2.0, M=2, m=4)
    assert len(bad.violations()) == 2
    with pytest.raises(ValueError):
        universal_decode(np.zeros(12), bad)


def test_encode_trivially():
    assert np.array_equal(encode_trivially(np.array([[0.5, -0.2, 0.1]])), [0.5, -0.2, 0.1])
    x = np.random.default_rng(0).uniform(-1, 1, size=(9, 3))
    assert np.array_equal(encode_trivially(x).reshape(9, 3), x)
    assert not encode_trivially(np.zeros((4, 3))).any()
    with pytest.raises(ValueError):
        encode_trivially(np.array([[1.5, 0, 0]]))


def test_decode_examples():
    cfg = default_config(16)
    assert np.array_equal(universal_decode(np.zeros(48), cfg), np.zeros((16, 3)))
    x = random_box_cloud(16, np.random.default_rng(1))
    assert np.abs(universal_decode(encode_trivially(x), cfg) - x).max() < 1e-9


def test_one_gate_per_row_at_1024():
    cfg = default_config(1024)
    x = random_box_cloud(1024, np.random.default_rng(2))
    out, st = universal_decode(encode_trivially(x), cfg, with_stats=True)
    assert np.abs(out - x).max() < 1e-9
    assert st.open_per_channel.tolist() == [1024] * 3 and st.open_off_diagonal == 0
    assert min(st.min_closed_margin, st.min_open_margin) >= cfg.c - 1
    assert st.case_m1 + st.case_m2 + st.case_same == 1024 ** 2 and st.case_same == 1024


def test_boundary_values_recover():
    cfg = default_config(64)
    x = np.random.default_rng(3).choice([-1.0, 1.0], size=(64, 3))
    assert np.array_equal(universal_decode(encode_trivially(x), cfg), x)


def test_dense_layer_matches_sparse_evaluation():
    cfg = default_config(9)
    net = build_perceptron(cfg)
    W, b = dense_hidden_layer(net)
    assert W.shape == (27, 29)
    x = random_box_cloud(9, np.random.default_rng(4))
    theta = encode_trivially(x)
    out = np.empty((9, 3))
    for i, (gx, gy) in enumerate(net.grid):
        z = gate(W @ np.concatenate([[gx, gy], theta]) + b, cfg.c).reshape(9, 3)
        out[i] = z.sum(axis=0)
    assert np.abs(out - x).max() < 1e-9


def test_gate_relu_equals_gate_on_grid():
    c = 2.0
    y = np.arange(-4000, 4001) / 1000.0  # 1e-3 grid over [-2c, 2c]
    # the steep ramp leaves ~1e-11 of cancellation error beyond the threshold
    assert np.abs(gate_relu(y, c) - gate(y, c)).max() < 1e-10
    inside = np.abs(y) < c - 1e-4
    assert np.array_equal(gate_relu(y, c)[inside], y[inside])


def test_gate_threshold_is_strict():
    assert gate([2.0, -2.0, 1.999], 2.0).tolist() == [0.0, 0.0, 1.999]


def test_verify_report():
    rows = verify_universality(5, 64, np.random.default_rng(5))
    assert len(rows) == 5
    assert all(r["max_abs_error"] < 1e-9 and r["open_ch0"] == 64 for r in rows)
    with pytest.raises(ValueError):
        verify_universality(0, 64, np.random.default_rng(5))
