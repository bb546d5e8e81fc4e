import numpy as np
from hypothesis import given, strategies as st

from ..graph import (
    N_EDGE_FEATURES, N_NODE_FEATURES, coates_graph, node_features,
    positional_codes, raw_node_features, standardize,
)
from ..sparse import add_missing_diagonal, from_dense, identity
from .conftest import random_dominant

seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)


def test_coates_example_edges(coates_matrix):
    g = coates_graph(coates_matrix)
    assert g.n == 3
    assert g.n_edges == 7
    assert list(zip(g.rows.tolist(), g.cols.tolist())) == [
        (0, 0), (0, 2), (1, 0), (1, 1), (2, 0), (2, 1), (2, 2)]
    assert g.incoming.tolist() == [0, 2, 4, 7]
    assert g.self_loops.tolist() == [0, 3, 6]
    assert g.matrix_values.tolist() == [2.4, 2.2, 0.5, 3.2, 2.1, 1.7, 0.0]
    assert g.edge_feats.shape == (7, N_EDGE_FEATURES)
    assert g.node_feats.shape == (3, N_NODE_FEATURES)


def test_coates_example_raw_node_features(coates_matrix):
    raw = raw_node_features(add_missing_diagonal(coates_matrix))
    expected_0 = [2, 3, 4.6, 5.0, 2.4, 2.4 / 4.6, 2.4, 2.4]
    expected_2 = [3, 2, 3.8, 2.2, 0.0, 0.0, 2.1, 2.2]
    assert np.allclose(raw[0], expected_0)
    assert np.allclose(raw[2], expected_2)


def test_coates_example_layout(coates_matrix):
    layout = coates_graph(coates_matrix).layout
    assert layout.lower.pattern() == {(0, 0), (1, 0), (1, 1), (2, 0),
                                      (2, 1), (2, 2)}
    assert layout.upper.pattern() == {(0, 0), (0, 2), (1, 1), (2, 2)}
    assert layout.lower_edges.tolist() == [0, 2, 3, 4, 5, 6]
    assert layout.upper_edges.tolist() == [0, 1, 3, 6]
    assert layout.lower_diag.tolist() == [0, 2, 5]
    assert layout.upper_diag.tolist() == [0, 2, 3]


def test_positional_codes_dense_2x2():
    g = coates_graph(from_dense([[1.0, 2.0], [3.0, 4.0]]))
    assert g.edge_feats[:, 1].tolist() == [0.0, 1.0, -1.0, 0.0]
    assert positional_codes(np.array([0, 2]), np.array([5, 1])).tolist() == [
        1.0, -1.0]


def test_identity_features_are_zero():
    g = coates_graph(identity(5))
    assert g.n_edges == 5
    assert np.array_equal(g.node_feats, np.zeros((5, N_NODE_FEATURES)))


def test_standardize_columns():
    features = np.array([[1.0, 5.0], [3.0, 5.0]])
    out = standardize(features)
    assert out[:, 0].tolist() == [-1.0, 1.0]
    assert out[:, 1].tolist() == [0.0, 0.0]


@given(seed=seeds)
def test_standardized_moments(seed):
    features = node_features(random_dominant(15, seed))
    assert np.allclose(features.mean(axis=0), 0.0, atol=1e-10)
    std = features.std(axis=0)
    assert np.all((np.abs(std - 1.0) < 1e-10) | (std == 0.0))


@given(seed=seeds)
def test_permutation_equivariance(seed):
    A = random_dominant(10, seed)
    dense = np.zeros((10, 10))
    dense[A.row_idx, A.col_idx] = A.values
    perm = np.random.default_rng(seed).permutation(10)
    B = from_dense(dense[np.ix_(perm, perm)])
    assert np.allclose(node_features(B), node_features(A)[perm], atol=1e-9)
    ga, gb = coates_graph(A), coates_graph(B)
    edges_a = {(int(i), int(j)): v for i, j, v in
               zip(ga.rows, ga.cols, ga.matrix_values)}
    for i, j, v in zip(gb.rows, gb.cols, gb.matrix_values):
        assert edges_a[(int(perm[i]), int(perm[j]))] == v
