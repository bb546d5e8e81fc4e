"""
Coates graph encoding of a sparse matrix.

Entry A_ij becomes the edge (i, j): an edge flowing from node j into
node i, so node i aggregates over the stored entries of its row. Every
node gets a self-loop (missing diagonal entries are added as stored
zeros).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sparse import CsrMatrix, add_missing_diagonal

N_NODE_FEATURES = 8
N_EDGE_FEATURES = 2

NODE_FEATURE_NAMES = (
    'row_nnz', 'col_nnz', 'row_l1', 'col_l1', 'diagonal',
    'diagonal_dominance', 'row_max', 'col_max',
)


@dataclass(frozen=True, eq=False)
class FactorLayout:
    """
    Where the final edge outputs go in the learned factors.

    `lower` / `upper` are the triangular patterns of the diagonal-completed
    matrix (values unused). `lower_edges[k]` is the edge feeding position k
    of `lower.values`; `lower_diag` are the positions of the diagonal
    inside `lower.values` (likewise for `upper`).
    """
    lower: CsrMatrix
    upper: CsrMatrix
    lower_edges: np.ndarray
    upper_edges: np.ndarray
    lower_diag: np.ndarray
    upper_diag: np.ndarray


@dataclass(frozen=True, eq=False)
class CoatesGraph:
    """
    Graph view of a matrix.

    ATTRIBUTES
    ----------
    n : int
        Node count.
    rows, cols : ndarray
        Edge k is the stored entry (rows[k], cols[k]), in CSR order of the
        diagonal-completed matrix.
    edge_feats : ndarray, (E, 2)
        [a_ij, pos_ij] with pos = +1 above the diagonal, -1 below, 0 on it.
    node_feats : ndarray, (n, 8)
        Standardized structural features, see `node_features`.
    incoming : ndarray, (n+1,)
        Edges rows == i are `incoming[i]:incoming[i+1]`; they are the
        neighborhood node i aggregates over.
    self_loops : ndarray, (n,)
        Edge index of each node's self-loop.
    """
    n: int
    rows: np.ndarray
    cols: np.ndarray
    edge_feats: np.ndarray
    node_feats: np.ndarray
    incoming: np.ndarray
    self_loops: np.ndarray
    layout: FactorLayout

    @property
    def n_edges(self):
        return len(self.rows)

    @property
    def matrix_values(self):
        return self.edge_feats[:, 0]


def positional_codes(rows, cols):
    return np.sign(cols - rows).astype(np.float64)


def raw_node_features(A):
    """
    The 8 structural features per node, before standardization:
    row nnz, col nnz, row 1-norm, col 1-norm, diagonal value,
    diagonal dominance |a_ii| / row 1-norm (0 for an empty row),
    row max |a_ij| and col max |a_ij|.
    """
    n = A.n
    rows, cols = A.row_idx, A.col_idx
    mags = np.abs(A.values)
    row_nnz = np.bincount(rows, minlength=n).astype(np.float64)
    col_nnz = np.bincount(cols, minlength=n).astype(np.float64)
    row_l1 = np.bincount(rows, weights=mags, minlength=n)
    col_l1 = np.bincount(cols, weights=mags, minlength=n)
    diagonal, _ = A.diagonal()
    dominance = np.zeros(n)
    nonzero = row_l1 > 0
    dominance[nonzero] = np.abs(diagonal[nonzero]) / row_l1[nonzero]
    row_max = np.zeros(n)
    col_max = np.zeros(n)
    np.maximum.at(row_max, rows, mags)
    np.maximum.at(col_max, cols, mags)
    return np.column_stack([row_nnz, col_nnz, row_l1, col_l1, diagonal,
                            dominance, row_max, col_max])


def standardize(features):
    """
    Per-column zero mean / unit variance; constant columns become 0.
    """
    mean = features.mean(axis=0)
    centered = features - mean
    std = np.sqrt((centered ** 2).mean(axis=0))
    degenerate = std <= 1e-12 * np.maximum(np.abs(mean), 1.0)
    out = np.zeros_like(features)
    keep = ~degenerate
    out[:, keep] = centered[:, keep] / std[keep]
    return out


def node_features(A):
    "Standardized node features of the diagonal-completed matrix."
    return standardize(raw_node_features(add_missing_diagonal(A)))


def _factor_layout(A):
    rows, cols = A.row_idx, A.col_idx
    lower_mask = cols <= rows
    upper_mask = cols >= rows
    lower = A.lower()
    upper = A.upper()
    lower_edges = np.flatnonzero(lower_mask)
    upper_edges = np.flatnonzero(upper_mask)
    lower_diag = np.flatnonzero(lower.col_idx == lower.row_idx)
    upper_diag = np.flatnonzero(upper.col_idx == upper.row_idx)
    return FactorLayout(lower=lower, upper=upper,
                        lower_edges=lower_edges, upper_edges=upper_edges,
                        lower_diag=lower_diag, upper_diag=upper_diag)


def coates_graph(A):
    """
    Encode `A` as a `CoatesGraph`: one edge per stored entry of
    `add_missing_diagonal(A)`, edge features [value, positional code],
    standardized node features.
    """
    A = add_missing_diagonal(A)
    rows = np.array(A.row_idx)
    cols = np.array(A.col_idx)
    edge_feats = np.column_stack([A.values, positional_codes(rows, cols)])
    self_loops = np.flatnonzero(rows == cols)
    return CoatesGraph(
        n=A.n,
        rows=rows,
        cols=cols,
        edge_feats=edge_feats,
        node_feats=standardize(raw_node_features(A)),
        incoming=np.array(A.row_ptr),
        self_loops=self_loops,
        layout=_factor_layout(A),
    )
