import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from foldingnet import tensor as T
from foldingnet.knn import (KnnGraph, build_knn, concat_input_features, graph_max_pool,
                            local_covariance, pairwise_sq_dists)
from oracles import brute_knn, central_diff, rel_err


def test_collinear_example():
    pts = np.array([[0.0, 0, 0], [1, 0, 0], [3, 0, 0]])
    assert build_knn(pts, 1).neighbors.tolist() == [[1], [0], [1]]


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 20))
def test_matches_brute_force(seed, k):
    pts = np.random.default_rng(seed).normal(size=(64, 3))
    assert np.array_equal(build_knn(pts, k).neighbors, brute_knn(pts, k))


def test_chunking_does_not_change_result():
    pts = np.random.default_rng(0).normal(size=(70, 3))
    assert np.array_equal(build_knn(pts, 5, chunk=7).neighbors, build_knn(pts, 5).neighbors)


def test_duplicates_break_ties_by_index():
    pts = np.zeros((6, 3))
    pts[3:] = 1.0
    g = build_knn(pts, 3)
    assert g.neighbors[0].tolist() == [1, 2, 3]
    assert g.neighbors[4].tolist() == [3, 5, 0]
    assert np.array_equal(build_knn(pts, 3).neighbors, g.neighbors)
    assert np.array_equal(g.neighbors, brute_knn(pts, 3))


def test_k_must_be_below_n():
    with pytest.raises(ValueError):
        build_knn(np.zeros((4, 3)), 4)


def test_distances_symmetric():
    a = np.random.default_rng(1).normal(size=(30, 3))
    d = pairwise_sq_dists(a, a)
    assert np.array_equal(d, d.T)


def test_covariance_examples():
    pts = np.zeros((5, 3))
    assert np.array_equal(local_covariance(pts, build_knn(pts, 3)), np.zeros((5, 9)))

    line = np.outer(np.linspace(-1, 1, 12), [1.0, 2.0, -0.5])
    cov = local_covariance(line, build_knn(line, 4)).reshape(-1, 3, 3)
    # characteristic polynomial coefficients: rank 1 means the 2x2 principal
    # minors and the determinant vanish
    minors = (cov[:, 0, 0] * cov[:, 1, 1] - cov[:, 0, 1] * cov[:, 1, 0]
              + cov[:, 0, 0] * cov[:, 2, 2] - cov[:, 0, 2] * cov[:, 2, 0]
              + cov[:, 1, 1] * cov[:, 2, 2] - cov[:, 1, 2] * cov[:, 2, 1])
    trace = np.trace(cov, axis1=1, axis2=2)
    assert np.all(trace > 0)
    # sum of the two smallest eigenvalues' products ~ minors / trace
    assert np.abs(minors / trace).max() < 1e-9


def test_covariance_matches_direct_formula():
    rng = np.random.default_rng(2)
    pts = rng.normal(size=(40, 3))
    g = build_knn(pts, 6)
    cov = local_covariance(pts, g)
    for i in (0, 17, 39):
        nb = pts[[i] + list(g.neighbors[i])]
        mu = nb.mean(axis=0)
        direct = sum(np.outer(p - mu, p - mu) for p in nb) / 7
        assert np.allclose(cov[i].reshape(3, 3), direct, atol=1e-14)


def test_input_features():
    pts = np.random.default_rng(3).normal(size=(20, 3))
    f = concat_input_features(pts, local_covariance(pts, build_knn(pts, 4)))
    assert f.shape == (20, 12) and np.array_equal(f[:, :3], pts)
    assert concat_input_features(np.ones((1, 3)), np.zeros((1, 9))).shape == (1, 12)
    with pytest.raises(T.ShapeError):
        concat_input_features(pts, np.zeros((19, 9)))


def _pool(x, graph, kmap, include_self=True):
    return T.evaluate(lambda x, k: graph_max_pool(x, graph, k, include_self), x, kmap)


def test_pool_hand_example():
    g = KnnGraph(1, np.array([[1], [0]]))
    out = _pool(np.array([[1.0, -2.0], [0.0, 4.0]]), g, np.eye(2))
    assert np.array_equal(out, [[1, 4], [1, 4]])


def test_pool_constant_and_nonnegative():
    pts = np.random.default_rng(4).normal(size=(10, 3))
    g = build_knn(pts, 3)
    out = _pool(np.full((10, 4), -0.5), g, np.eye(4))
    assert np.array_equal(out, np.zeros((10, 4)))
    out = _pool(np.full((10, 4), 2.0), g, np.eye(4))
    assert np.all(out == 2.0)


def test_pool_matches_brute_force():
    rng = np.random.default_rng(5)
    pts = rng.normal(size=(25, 3))
    g = build_knn(pts, 4)
    x, kmap = rng.normal(size=(25, 6)), rng.normal(size=(6, 3))
    expect = np.zeros((25, 6))
    for i in range(25):
        for j in range(6):
            expect[i, j] = max(0.0, max(x[r, j] for r in [i] + list(g.neighbors[i])))
    assert np.allclose(_pool(x, g, kmap), expect @ kmap, rtol=0, atol=1e-14)


def test_pool_rejects_row_mismatch():
    g = build_knn(np.random.default_rng(6).normal(size=(8, 3)), 2)
    with pytest.raises(T.ShapeError):
        _pool(np.ones((7, 2)), g, np.eye(2))


def test_pool_gradient():
    rng = np.random.default_rng(7)
    pts = rng.normal(size=(12, 3))
    g = build_knn(pts, 4)
    x = rng.normal(size=(12, 5))
    kmap = rng.normal(size=(5, 3))
    w = rng.normal(size=(12, 3))
    fn = lambda x, k: T.weighted_sum(graph_max_pool(x, g, k), w)
    _, (gx, gk) = T.grad(fn, x, kmap)
    num_x = central_diff(lambda v: T.evaluate(fn, v, kmap)[0, 0], x)
    num_k = central_diff(lambda v: T.evaluate(fn, x, v)[0, 0], kmap)
    assert rel_err(gx, num_x) < 1e-4 and rel_err(gk, num_k) < 1e-4


def test_permutation_equivariance():
    rng = np.random.default_rng(8)
    pts = rng.normal(size=(30, 3))
    x = rng.normal(size=(30, 4))
    perm = rng.permutation(30)
    ga, gb = build_knn(pts, 5), build_knn(pts[perm], 5)
    ca, cb = local_covariance(pts, ga), local_covariance(pts[perm], gb)
    assert np.allclose(cb, ca[perm], atol=1e-15)
    assert np.array_equal(_pool(x[perm], gb, np.eye(4)), _pool(x, ga, np.eye(4))[perm])
