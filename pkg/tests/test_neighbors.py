"""Cosine kNN graph construction and symmetrization."""

import numpy as np
import pytest

from layersweep.errors import ParameterError, ShapeError, ZeroNormWarning
from layersweep.neighbors import (
    cosine_distance_block,
    dump_graph_csv,
    knn_graph,
    symmetrize,
)
from layersweep.synth import oracle_knn


def unit(theta):
    return np.array([np.cos(theta), np.sin(theta)])


def test_cosine_distance_block_values():
    X = np.array([[1.0, 0.0], [0.0, 2.0], [-3.0, 0.0]])
    D = cosine_distance_block(X, X)
    assert D[0, 0] == pytest.approx(0.0, abs=1e-15)
    assert D[0, 1] == pytest.approx(1.0, abs=1e-15)
    assert D[0, 2] == pytest.approx(2.0, abs=1e-15)


def test_cosine_distance_scale_invariance():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(20, 5))
    scales = rng.uniform(0.1, 10.0, size=20)
    D1 = cosine_distance_block(X, X)
    D2 = cosine_distance_block(X * scales[:, None], X * scales[:, None])
    assert np.abs(D1 - D2).max() < 1e-6


def test_cosine_distance_shape_errors():
    with pytest.raises(ShapeError):
        cosine_distance_block(np.zeros(3), np.zeros((2, 3)))
    with pytest.raises(ShapeError):
        cosine_distance_block(np.zeros((2, 3)), np.zeros((2, 4)))


def test_knn_blocked_matches_unblocked():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(150, 8))
    g_small = knn_graph(X, k=7, block_size=16)
    g_big = knn_graph(X, k=7, block_size=10_000)
    # neighbor sets identical; distances bit-comparable within 1e-6
    assert np.array_equal(g_small.indices, g_big.indices)
    assert np.abs(g_small.distances - g_big.distances).max() < 1e-6


def test_knn_matches_brute_force_oracle():
    rng = np.random.default_rng(5)
    for trial in range(10):
        n = int(rng.integers(20, 120))
        d = int(rng.integers(2, 10))
        k = int(rng.integers(1, 10))
        X = rng.normal(size=(n, d))
        g = knn_graph(X, k=k)
        ref = oracle_knn(X, k)
        assert np.array_equal(g.indices, ref.indices), f"trial {trial}"
        assert np.abs(g.distances - ref.distances).max() < 1e-9


def test_knn_angular_ordering():
    # middle point at 10 degrees is closer to 0 than to 30
    X = np.vstack([unit(0.0), unit(np.radians(10)), unit(np.radians(30))])
    g = knn_graph(X, k=1)
    assert g.neighbors(1)[0][0] == 0
    assert g.neighbors(0)[0][0] == 1
    assert g.neighbors(2)[0][0] == 1
    assert np.array_equal(g.indices, oracle_knn(X, 1).indices)


def test_knn_duplicate_points_tie_breaks_by_index():
    X = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    g = knn_graph(X, k=1)
    # rows 0 and 1 coincide: each picks the other at distance 0; ties in
    # row 2 resolve to the lowest index
    assert g.neighbors(0)[0][0] == 1
    assert g.neighbors(1)[0][0] == 0
    assert g.neighbors(2)[0][0] == 0
    assert g.neighbors(0)[1][0] == pytest.approx(0.0, abs=1e-12)


def test_knn_complete_graph_at_k_n_minus_one():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(9, 4))
    g = knn_graph(X, k=8)
    for i in range(9):
        assert sorted(g.neighbors(i)[0]) == [j for j in range(9) if j != i]


def test_knn_zero_norm_rows_warn():
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.warns(ZeroNormWarning):
        g = knn_graph(X, k=1)
    assert g.zero_norm_rows == 1
    # zero-norm rows sit at distance 1 from everything
    idx, dist = g.neighbors(0)
    assert dist[0] == pytest.approx(1.0, abs=1e-12)
    assert idx[0] == 1


def test_knn_parameter_errors():
    X = np.random.default_rng(0).normal(size=(5, 3))
    with pytest.raises(ParameterError):
        knn_graph(X, k=5)
    with pytest.raises(ParameterError):
        knn_graph(X, k=0)
    with pytest.raises(ParameterError):
        knn_graph(X, k=2, block_size=0)
    with pytest.raises(ShapeError):
        knn_graph(np.zeros(4), k=1)


def test_symmetrize_union_adds_reverse_edges():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(40, 6))
    g = knn_graph(X, k=4)
    s = symmetrize(g, mode="union")
    assert s.symmetric
    edges = set()
    weights = {}
    for i in range(s.n):
        idx, dist = s.neighbors(i)
        for j, d in zip(idx, dist):
            edges.add((i, int(j)))
            weights[(i, int(j))] = float(d)
    for i, j in edges:
        assert (j, i) in edges
        assert weights[(i, j)] == weights[(j, i)]
    # union can only add edges
    for i in range(s.n):
        assert s.degree(i) >= 4
        directed = set(g.neighbors(i)[0])
        assert directed <= set(s.neighbors(i)[0])


def test_symmetrize_mutual_drops_one_directional():
    g = knn_graph(np.vstack([unit(0.0), unit(0.2), unit(0.5)]), k=1)
    # 0->1, 1->0 mutual; 2->1 one-directional
    s_union = symmetrize(g, mode="union")
    s_mutual = symmetrize(g, mode="mutual")
    assert s_union.degree(2) == 1 and s_union.degree(1) == 2
    assert s_mutual.degree(2) == 0
    assert set(s_mutual.neighbors(0)[0]) == {1}
    assert set(s_mutual.neighbors(1)[0]) == {0}


def test_symmetrize_is_idempotent():
    rng = np.random.default_rng(4)
    g = knn_graph(rng.normal(size=(30, 5)), k=3)
    s = symmetrize(g)
    assert symmetrize(s) is s


def test_symmetrize_rows_sorted_by_distance_then_index():
    rng = np.random.default_rng(6)
    g = symmetrize(knn_graph(rng.normal(size=(50, 4)), k=5))
    for i in range(g.n):
        idx, dist = g.neighbors(i)
        keys = list(zip(dist, idx))
        assert keys == sorted(keys)


def test_symmetrize_mode_error():
    g = knn_graph(np.random.default_rng(0).normal(size=(10, 3)), k=2)
    with pytest.raises(ParameterError):
        symmetrize(g, mode="max")


def test_dump_graph_csv(tmp_path):
    g = symmetrize(knn_graph(np.random.default_rng(7).normal(size=(8, 3)), k=2))
    path = tmp_path / "graph.csv"
    dump_graph_csv(g, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "src,dst,distance"
    n_edges = sum(g.degree(i) for i in range(g.n))
    assert len(lines) == 1 + n_edges
    src, dst, dist = lines[1].split(",")
    int(src), int(dst), float(dist)
