import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from foldingnet import tensor as T
from oracles import central_diff, rel_err


def fd_check(fn, arrays, tol=1e-6):
    """Compare tape gradients with central differences for every input."""
    _, grads = T.grad(fn, *arrays)
    for i, a in enumerate(arrays):
        def scalar(v, i=i):
            args = list(arrays)
            args[i] = v
            return float(T.evaluate(fn, *args)[0, 0])
        assert rel_err(grads[i], central_diff(scalar, a)) < tol


def test_matmul_examples():
    m = np.arange(6.0).reshape(2, 3)
    assert np.array_equal(T.evaluate(lambda a, b: T.matmul(a, b), np.eye(2), m), m)
    out = T.evaluate(lambda a, b: T.matmul(a, b), [[1, 2], [3, 4]], [[1], [1]])
    assert np.array_equal(out, [[3], [7]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(T.ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        T.evaluate(lambda a, b: T.matmul(a, b), np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_gradient():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(5, 4)), rng.normal(size=(4, 3))
    w = rng.normal(size=(5, 3))
    fd_check(lambda a, b: T.weighted_sum(T.matmul(a, b), w), [a, b])


def test_per_row_mlp_examples():
    zero = [(np.zeros((2, 3)), np.zeros((1, 3)), "identity")]
    assert np.array_equal(T.evaluate(lambda x: T.per_row_mlp(x, zero), np.ones((4, 2))), np.zeros((4, 3)))
    tape = T.Tape()
    out = T.per_row_mlp(tape.constant([[-1.0, 2.0]]),
                        [(tape.constant(np.eye(2)), tape.constant(np.zeros((1, 2))), "relu")])
    assert np.array_equal(out.value, [[0, 2]])


def test_per_row_mlp_width_mismatch():
    tape = T.Tape()
    layers = [(tape.constant(np.ones((3, 4))), tape.constant(np.zeros((1, 4))), "relu"),
              (tape.constant(np.ones((5, 2))), tape.constant(np.zeros((1, 2))), "identity")]
    with pytest.raises(T.ShapeError):
        T.per_row_mlp(tape.constant(np.ones((2, 3))), layers)


def _mlp(rng, widths):
    return [(rng.normal(size=(a, b)) / np.sqrt(a), rng.normal(size=(1, b)) * 0.1,
             "relu" if i < len(widths) - 2 else "identity")
            for i, (a, b) in enumerate(zip(widths[:-1], widths[1:]))]


def test_per_row_mlp_permutation_equivariant():
    rng = np.random.default_rng(1)
    layers = _mlp(rng, [12, 16, 16, 5])
    x = rng.normal(size=(8, 12))
    perm = rng.permutation(8)

    def run(x):
        tape = T.Tape()
        return T.per_row_mlp(tape.constant(x), [(tape.constant(w), tape.constant(b), a)
                                                for w, b, a in layers]).value
    assert np.array_equal(run(x[perm]), run(x)[perm])


def test_per_row_mlp_gradient():
    rng = np.random.default_rng(2)
    layers = _mlp(rng, [4, 6, 3])
    x = rng.normal(size=(5, 4))
    w_out = rng.normal(size=(5, 3))
    flat = [x] + [a for w, b, _ in layers for a in (w, b)]

    def fn(x, w0, b0, w1, b1):
        return T.weighted_sum(T.per_row_mlp(x, [(w0, b0, "relu"), (w1, b1, "identity")]), w_out)
    # keep the hidden pre-activations away from the ReLU kink
    pre = x @ layers[0][0] + layers[0][1]
    assert np.abs(pre).min() > 1e-3
    fd_check(fn, flat, tol=1e-4)


def test_relu_examples_and_identity():
    assert np.array_equal(T.evaluate(T.relu, [[-3.0]]), [[0.0]])
    value, (g,) = T.grad(lambda x: T.weighted_sum(T.relu(x), [[1.0]]), [[0.0]])
    assert value == 0.0 and g[0, 0] == 0.0
    x = np.random.default_rng(3).normal(size=(6, 7))
    assert np.array_equal(T.evaluate(T.relu, x) + T.evaluate(T.relu, -x), np.abs(x))


def test_rowwise_concat():
    out = T.evaluate(T.rowwise_concat, [[1.0], [2.0]], [[3.0], [4.0]])
    assert np.array_equal(out, [[1, 3], [2, 4]])
    with pytest.raises(T.ShapeError):
        T.evaluate(T.rowwise_concat, np.ones((2, 1)), np.ones((3, 1)))
    tape = T.Tape()
    grid = tape.constant(np.zeros((7, 2)))
    theta = tape.constant(np.ones((1, 512)))
    assert T.rowwise_concat(grid, T.replicate_rows(theta, 7)).shape == (7, 514)


def test_rowwise_concat_gradient():
    rng = np.random.default_rng(4)
    a, b = rng.normal(size=(3, 2)), rng.normal(size=(3, 4))
    w = rng.normal(size=(3, 6))
    fd_check(lambda a, b: T.weighted_sum(T.rowwise_concat(a, b), w), [a, b])


def test_column_max_examples():
    assert np.array_equal(T.evaluate(T.column_max, [[1.0, 5.0], [3.0, 2.0]]), [[3, 5]])
    assert np.array_equal(T.evaluate(T.column_max, np.full((4, 3), 2.5)), [[2.5] * 3])
    with pytest.raises(T.ShapeError):
        T.evaluate(T.column_max, np.zeros((0, 3)))


def test_column_max_tie_routes_to_first_row():
    _, (g,) = T.grad(lambda x: T.weighted_sum(T.column_max(x), [[1.0, 1.0]]), np.ones((3, 2)))
    assert np.array_equal(g, [[1, 1], [0, 0], [0, 0]])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_column_max_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(64, 16))
    assert np.array_equal(T.evaluate(T.column_max, x[rng.permutation(64)]), T.evaluate(T.column_max, x))


def test_column_max_gradient():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(6, 4))
    w = rng.normal(size=(1, 4))
    fd_check(lambda x: T.weighted_sum(T.column_max(x), w), [x])


def test_replicate_and_reshape_gradients():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(1, 3))
    v = rng.normal(size=(4, 3))
    fd_check(lambda x: T.weighted_sum(T.replicate_rows(x, 4), v), [x])
    y = rng.normal(size=(1, 6))
    w = rng.normal(size=(2, 3))
    fd_check(lambda y: T.weighted_sum(T.reshape(y, 2, 3), w), [y])


def test_forward_is_deterministic():
    rng = np.random.default_rng(7)
    layers = _mlp(rng, [3, 8, 2])
    x = rng.normal(size=(10, 3))

    def run():
        tape = T.Tape()
        return T.per_row_mlp(tape.constant(x), [(tape.constant(w), tape.constant(b), a)
                                                for w, b, a in layers]).value
    assert np.array_equal(run(), run())


def test_gradient_accumulates_over_reuse():
    # y = sum(x) + sum(x): gradient 2 everywhere
    _, (g,) = T.grad(lambda x: T.weighted_sum(T.add(x, x), np.ones((2, 2))), np.ones((2, 2)))
    assert np.array_equal(g, np.full((2, 2), 2.0))


def test_unused_leaf_has_zero_gradient():
    _, (ga, gb) = T.grad(lambda a, b: T.weighted_sum(a, [[1.0]]), [[1.0]], [[2.0]])
    assert ga[0, 0] == 1.0 and gb[0, 0] == 0.0


def test_mixing_tapes_is_rejected():
    a = T.Tape().leaf([[1.0]])
    b = T.Tape().leaf([[1.0]])
    with pytest.raises(ValueError):
        T.add(a, b)
