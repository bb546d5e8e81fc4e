import numpy as np
import pytest
from hypothesis import given, strategies as st

from ..exceptions import (
    DenseCapError, SingularFactorError, SparseStructureError,
)
from ..sparse import (
    CsrMatrix, add, add_missing_diagonal, csr_from_coo, diag, from_dense,
    frobenius_norm, identity, lower_tri_solve, matmul, spmv, to_dense,
    upper_tri_solve,
)
from .conftest import COATES_DENSE

seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)
sizes = st.integers(min_value=1, max_value=20)


def random_sparse(n, seed, density=0.4):
    rng = np.random.default_rng(seed)
    dense = rng.standard_normal((n, n)) * (rng.random((n, n)) < density)
    return from_dense(dense), dense


# construction ---------------

def test_csr_from_coo_identity():
    A = csr_from_coo([(0, 0, 1.0), (1, 1, 1.0)], 2)
    assert np.array_equal(to_dense(A).data, np.eye(2))
    assert A.nnz == 2


def test_csr_from_coo_sums_duplicates():
    A = csr_from_coo([(0, 1, 2.0), (0, 1, 3.0)], 2)
    assert A.nnz == 1
    assert A.get(0, 1) == 5.0


def test_csr_from_coo_sorts_columns():
    A = csr_from_coo([(1, 2, 1.0), (1, 0, 2.0), (0, 1, 3.0)], 3)
    assert A.row_ptr.tolist() == [0, 1, 3, 3]
    assert A.col_idx.tolist() == [1, 0, 2]
    assert A.values.tolist() == [3.0, 2.0, 1.0]


def test_csr_from_coo_index_out_of_range():
    with pytest.raises(SparseStructureError):
        csr_from_coo([(0, 2, 1.0)], 2)
    with pytest.raises(SparseStructureError):
        csr_from_coo([(-1, 0, 1.0)], 2)


def test_csr_rejects_unsorted_columns():
    with pytest.raises(SparseStructureError):
        CsrMatrix(2, [0, 2, 2], [1, 0], [1.0, 1.0])


def test_csr_rejects_bad_row_ptr():
    with pytest.raises(SparseStructureError):
        CsrMatrix(2, [0, 2, 1], [0, 1], [1.0, 1.0])


def test_csr_keeps_explicit_zeros():
    A = csr_from_coo([(0, 0, 0.0), (1, 1, 1.0)], 2)
    assert A.nnz == 2
    assert (0, 0) in A.pattern()


def test_csr_arrays_are_read_only(coates_matrix):
    with pytest.raises(ValueError):
        coates_matrix.values[0] = 1.0


# kernels ---------------

def test_spmv_examples():
    x = np.array([1.0, 1.0])
    assert spmv(identity(2), x).tolist() == [1.0, 1.0]
    A = from_dense([[2.0, 0.0], [1.0, 3.0]])
    assert spmv(A, x).tolist() == [2.0, 4.0]
    assert spmv(A, np.zeros(2)).tolist() == [0.0, 0.0]


def test_spmv_dimension_mismatch():
    with pytest.raises(SparseStructureError):
        spmv(identity(3), np.ones(2))


@given(n=sizes, seed=seeds)
def test_spmv_matches_dense(n, seed):
    A, dense = random_sparse(n, seed)
    x = np.random.default_rng(seed + 1).standard_normal(n)
    expected = dense @ x
    scale = max(np.abs(dense).sum(axis=1).max() * np.abs(x).max(), 1.0)
    assert np.max(np.abs(spmv(A, x) - expected)) <= 1e-13 * scale


def test_frobenius_norm_examples(coates_matrix):
    assert frobenius_norm(diag([3.0, 4.0])) == 5.0
    assert frobenius_norm(csr_from_coo([], 3)) == 0.0
    expected = np.sqrt(np.sum(COATES_DENSE ** 2))
    assert abs(frobenius_norm(coates_matrix) - expected) <= 1e-12 * expected


@given(n=sizes, seed=seeds)
def test_frobenius_norm_matches_dense(n, seed):
    A, dense = random_sparse(n, seed)
    expected = np.sum(dense ** 2)
    assert abs(frobenius_norm(A) ** 2 - expected) <= 1e-12 * max(expected, 1)


def test_add_missing_diagonal_coates_example(coates_matrix):
    completed = add_missing_diagonal(coates_matrix)
    assert completed.nnz == 7
    assert (2, 2) in completed.pattern()
    assert completed.get(2, 2) == 0.0
    assert coates_matrix.pattern() < completed.pattern()
    for i, j in coates_matrix.pattern():
        assert completed.get(i, j) == coates_matrix.get(i, j)


def test_add_missing_diagonal_identity_and_empty():
    I = identity(3)
    assert add_missing_diagonal(I) is I
    completed = add_missing_diagonal(csr_from_coo([], 3))
    assert completed.pattern() == {(0, 0), (1, 1), (2, 2)}
    assert completed.values.tolist() == [0.0, 0.0, 0.0]


@given(n=sizes, seed=seeds)
def test_add_missing_diagonal_idempotent(n, seed):
    A, _ = random_sparse(n, seed)
    once = add_missing_diagonal(A)
    twice = add_missing_diagonal(once)
    assert once.pattern() == twice.pattern()
    assert np.array_equal(once.values, twice.values)


def test_lower_tri_solve_example():
    L = from_dense([[2.0, 0.0], [1.0, 1.0]])
    assert lower_tri_solve(L, np.array([2.0, 3.0])).tolist() == [1.0, 2.0]


def test_upper_tri_solve_identity():
    b = np.array([1.0, -2.0, 3.5])
    assert upper_tri_solve(identity(3), b).tolist() == b.tolist()


def test_lower_tri_solve_zero_diagonal():
    L = csr_from_coo([(0, 0, 0.0), (1, 0, 1.0), (1, 1, 1.0)], 2)
    with pytest.raises(SingularFactorError) as e:
        lower_tri_solve(L, np.ones(2))
    assert e.value.row == 0


def test_tri_solves_need_stored_diagonal():
    L = csr_from_coo([(0, 0, 1.0), (1, 0, 1.0)], 2)
    with pytest.raises(SingularFactorError) as e:
        lower_tri_solve(L, np.ones(2))
    assert e.value.row == 1
    U = csr_from_coo([(0, 1, 1.0), (1, 1, 1.0)], 2)
    with pytest.raises(SingularFactorError) as e:
        upper_tri_solve(U, np.ones(2))
    assert e.value.row == 0


def test_tri_solves_reject_wrong_triangle():
    with pytest.raises(SparseStructureError):
        lower_tri_solve(from_dense([[1.0, 1.0], [0.0, 1.0]]), np.ones(2))
    with pytest.raises(SparseStructureError):
        upper_tri_solve(from_dense([[1.0, 0.0], [1.0, 1.0]]), np.ones(2))


@given(n=sizes, seed=seeds)
def test_tri_solves_reconstruct_rhs(n, seed):
    A, dense = random_sparse(n, seed)
    dense = dense.copy()
    dense[np.diag_indices(n)] = np.abs(dense).sum(axis=1) + 1.0
    L = from_dense(np.tril(dense))
    U = from_dense(np.triu(dense))
    b = np.random.default_rng(seed).standard_normal(n)
    for M, solve in ((L, lower_tri_solve), (U, upper_tri_solve)):
        v = solve(M, b)
        residual = np.linalg.norm(spmv(M, v) - b)
        assert residual <= 1e-10 * max(np.linalg.norm(b), 1.0)


# pattern manipulation ---------------

def test_to_dense_coates_example(coates_matrix):
    assert np.array_equal(to_dense(coates_matrix).data, COATES_DENSE)
    assert np.array_equal(to_dense(identity(4)).data, np.eye(4))


def test_to_dense_cap():
    with pytest.raises(DenseCapError):
        to_dense(identity(5), cap=4)


def test_dense_round_trip(coates_matrix):
    back = from_dense(to_dense(coates_matrix).data)
    assert back.pattern() == coates_matrix.pattern()
    assert np.array_equal(back.values, coates_matrix.values)


@given(n=st.integers(min_value=1, max_value=10), seed=seeds)
def test_matmul_matches_dense(n, seed):
    A, a = random_sparse(n, seed)
    B, b = random_sparse(n, seed + 7)
    assert np.allclose(to_dense(matmul(A, B)).data, a @ b, atol=1e-12)


def test_add_and_transpose(coates_matrix):
    D = to_dense(add(coates_matrix, identity(3), 1.0, -2.0)).data
    assert np.allclose(D, COATES_DENSE - 2 * np.eye(3))
    assert np.array_equal(to_dense(coates_matrix.transpose()).data, COATES_DENSE.T)


def test_triangular_parts(coates_matrix):
    completed = add_missing_diagonal(coates_matrix)
    assert completed.lower().pattern() == {(0, 0), (1, 0), (1, 1), (2, 0),
                                           (2, 1), (2, 2)}
    assert completed.upper().pattern() == {(0, 0), (0, 2), (1, 1), (2, 2)}
    assert completed.lower(strict=True).pattern() == {(1, 0), (2, 0), (2, 1)}
