"""
Compressed sparse row storage and the exact kernels the rest of learnlu
is built on: matvec, triangular solves, norms, pattern manipulation and
dense conversion.

All arithmetic is in 64-bit floating point. Explicit zeros are part of the
pattern: a stored zero is still a stored position.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .exceptions import DenseCapError, SingularFactorError, SparseStructureError


DEFAULT_DENSE_CAP = 2000


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    """
    Square real matrix in compressed-row form.

    `col_idx` is strictly increasing within each row. Instances are
    immutable: the arrays are marked read-only at construction, so a
    matrix can be shared freely between concurrent readers.
    """
    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        n = int(self.n)
        row_ptr = np.array(self.row_ptr, dtype=np.int64)
        col_idx = np.array(self.col_idx, dtype=np.int64)
        values = np.array(self.values, dtype=np.float64)
        _check_csr(n, row_ptr, col_idx, values)
        for arr in (row_ptr, col_idx, values):
            arr.flags.writeable = False
        object.__setattr__(self, 'n', n)
        object.__setattr__(self, 'row_ptr', row_ptr)
        object.__setattr__(self, 'col_idx', col_idx)
        object.__setattr__(self, 'values', values)

    @property
    def nnz(self):
        return int(self.row_ptr[-1])

    @property
    def shape(self):
        return (self.n, self.n)

    @functools.cached_property
    def row_idx(self):
        "Row index of every stored entry, aligned with `col_idx`."
        rows = np.repeat(np.arange(self.n, dtype=np.int64),
                         np.diff(self.row_ptr))
        rows.flags.writeable = False
        return rows

    @functools.cached_property
    def _lists(self):
        # plain python lists make the scalar loops of the triangular
        # solves several times faster than indexing numpy arrays
        return self.row_ptr.tolist(), self.col_idx.tolist(), self.values.tolist()

    def pattern(self):
        "The set of stored (row, col) positions."
        return set(zip(self.row_idx.tolist(), self.col_idx.tolist()))

    def with_values(self, values):
        "A matrix with the same pattern and new values."
        return CsrMatrix(self.n, self.row_ptr, self.col_idx, values)

    def diagonal(self):
        """
        Return `(values, present)`: the stored diagonal (0 where absent)
        and a boolean mask of which diagonal positions are stored.
        """
        diag = np.zeros(self.n)
        present = np.zeros(self.n, dtype=bool)
        mask = self.row_idx == self.col_idx
        diag[self.row_idx[mask]] = self.values[mask]
        present[self.row_idx[mask]] = True
        return diag, present

    def get(self, i, j):
        "Value at position (i, j), 0.0 if the position is not stored."
        start, stop = self.row_ptr[i], self.row_ptr[i + 1]
        k = np.searchsorted(self.col_idx[start:stop], j)
        if k < stop - start and self.col_idx[start + k] == j:
            return float(self.values[start + k])
        return 0.0

    def transpose(self):
        return csr_from_arrays(self.col_idx, self.row_idx, self.values, self.n)

    def lower(self, strict=False):
        "Lower triangular part (col <= row, or col < row if `strict`)."
        if strict:
            mask = self.col_idx < self.row_idx
        else:
            mask = self.col_idx <= self.row_idx
        return self._masked(mask)

    def upper(self, strict=False):
        "Upper triangular part (col >= row, or col > row if `strict`)."
        if strict:
            mask = self.col_idx > self.row_idx
        else:
            mask = self.col_idx >= self.row_idx
        return self._masked(mask)

    def _masked(self, mask):
        counts = np.bincount(self.row_idx[mask], minlength=self.n)
        row_ptr = np.concatenate([[0], np.cumsum(counts)])
        return CsrMatrix(self.n, row_ptr, self.col_idx[mask], self.values[mask])

    def __matmul__(self, other):
        if isinstance(other, CsrMatrix):
            return matmul(self, other)
        return spmv(self, other)


@dataclass(frozen=True, eq=False)
class DenseMatrix:
    """
    Row-major dense matrix. Only used at desk scale, for spectral analysis
    and as an oracle in tests.
    """
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, order='C')
        if data.ndim != 2:
            raise SparseStructureError(
                "dense matrix must be 2-dimensional, got shape %r"
                % (data.shape,))
        object.__setattr__(self, 'data', data)

    @property
    def n_rows(self):
        return self.data.shape[0]

    @property
    def n_cols(self):
        return self.data.shape[1]


def _check_csr(n, row_ptr, col_idx, values):
    if n < 0:
        raise SparseStructureError("negative dimension %d" % n)
    if row_ptr.shape != (n + 1,):
        raise SparseStructureError(
            "row_ptr must have length n+1 = %d, got %d" % (n + 1, len(row_ptr)))
    if row_ptr[0] != 0 or np.any(np.diff(row_ptr) < 0):
        raise SparseStructureError(
            "row_ptr must start at 0 and be nondecreasing")
    nnz = int(row_ptr[-1])
    if col_idx.shape != (nnz,) or values.shape != (nnz,):
        raise SparseStructureError(
            "col_idx and values must have length nnz = %d, got %d and %d"
            % (nnz, len(col_idx), len(values)))
    if nnz and (col_idx.min() < 0 or col_idx.max() >= n):
        raise SparseStructureError("column index out of range [0, %d)" % n)
    if nnz > 1:
        steps = np.diff(col_idx)
        row_starts = np.zeros(nnz, dtype=bool)
        row_starts[row_ptr[1:-1][row_ptr[1:-1] < nnz]] = True
        if np.any((steps <= 0) & ~row_starts[1:]):
            raise SparseStructureError(
                "column indices must be strictly increasing within each row")


def csr_from_arrays(rows, cols, values, n):
    """
    Build a canonical CSR matrix from coordinate arrays.

    Duplicate positions are summed in input order. Stored zeros are kept.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    if not (rows.shape == cols.shape == values.shape) or rows.ndim != 1:
        raise SparseStructureError(
            "coordinate arrays must be 1-dimensional and of equal length")
    if rows.size and (rows.min() < 0 or rows.max() >= n
                      or cols.min() < 0 or cols.max() >= n):
        raise SparseStructureError(
            "coordinate index out of range for dimension %d" % n)
    if rows.size == 0:
        return CsrMatrix(n, np.zeros(n + 1, dtype=np.int64),
                         np.zeros(0, dtype=np.int64), np.zeros(0))
    keys = rows * n + cols
    order = np.argsort(keys, kind='stable')
    keys = keys[order]
    unique_keys, starts = np.unique(keys, return_index=True)
    summed = np.add.reduceat(values[order], starts)
    unique_rows = unique_keys // n
    counts = np.bincount(unique_rows, minlength=n)
    row_ptr = np.concatenate([[0], np.cumsum(counts)])
    return CsrMatrix(n, row_ptr, unique_keys % n, summed)


def csr_from_coo(triples, n):
    """
    Build a CSR matrix from a list of `(row, col, value)` triples.

    Duplicates are summed; an index outside `[0, n)` raises
    `SparseStructureError`.
    """
    triples = list(triples)
    if not triples:
        return csr_from_arrays([], [], [], n)
    rows, cols, values = zip(*triples)
    return csr_from_arrays(rows, cols, values, n)


def from_dense(array, keep_zeros=False):
    "CSR matrix of the nonzero entries of a square 2-d array."
    array = np.asarray(array, dtype=np.float64)
    if array.ndim != 2 or array.shape[0] != array.shape[1]:
        raise SparseStructureError(
            "expected a square 2-d array, got shape %r" % (array.shape,))
    if keep_zeros:
        rows, cols = np.indices(array.shape)
        rows, cols = rows.ravel(), cols.ravel()
    else:
        rows, cols = np.nonzero(array)
    return csr_from_arrays(rows, cols, array[rows, cols], array.shape[0])


def identity(n):
    return diag(np.ones(n))


def diag(values):
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    return CsrMatrix(n, np.arange(n + 1), np.arange(n), values)


def spmv(A, x):
    """
    y = A x. Each y_i accumulates its row left to right.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (A.n,):
        raise SparseStructureError(
            "dimension mismatch: matrix is %d x %d, vector has shape %r"
            % (A.n, A.n, x.shape))
    return np.bincount(A.row_idx, weights=A.values * x[A.col_idx],
                       minlength=A.n)


def frobenius_norm(A):
    return float(np.sqrt(np.dot(A.values, A.values)))


def add_missing_diagonal(A):
    """
    Complete the pattern with every missing diagonal position, stored as an
    explicit 0. Existing entries are untouched, so this is idempotent.
    """
    _, present = A.diagonal()
    missing = np.flatnonzero(~present)
    if missing.size == 0:
        return A
    rows = np.concatenate([A.row_idx, missing])
    cols = np.concatenate([A.col_idx, missing])
    values = np.concatenate([A.values, np.zeros(missing.size)])
    return csr_from_arrays(rows, cols, values, A.n)


def add(A, B, alpha=1.0, beta=1.0):
    "alpha A + beta B on the union of both patterns."
    if A.n != B.n:
        raise SparseStructureError(
            "dimension mismatch: %d vs %d" % (A.n, B.n))
    return csr_from_arrays(
        np.concatenate([A.row_idx, B.row_idx]),
        np.concatenate([A.col_idx, B.col_idx]),
        np.concatenate([alpha * A.values, beta * B.values]),
        A.n,
    )


def matmul(A, B):
    """
    Sparse product A B on its exact symbolic pattern (fill-in included).
    """
    if A.n != B.n:
        raise SparseStructureError(
            "dimension mismatch: %d vs %d" % (A.n, B.n))
    a_ptr, a_cols, a_vals = A._lists
    b_ptr, b_cols, b_vals = B._lists
    rows, cols, values = [], [], []
    for i in range(A.n):
        acc = {}
        for ka in range(a_ptr[i], a_ptr[i + 1]):
            k, a_ik = a_cols[ka], a_vals[ka]
            for kb in range(b_ptr[k], b_ptr[k + 1]):
                j = b_cols[kb]
                acc[j] = acc.get(j, 0.0) + a_ik * b_vals[kb]
        for j in sorted(acc):
            rows.append(i)
            cols.append(j)
            values.append(acc[j])
    return csr_from_arrays(rows, cols, values, A.n)


def lower_tri_solve(L, b):
    """
    Solve L v = b by forward substitution, O(nnz).

    `L` may only store positions with col <= row and must store a nonzero
    diagonal entry in every row; a zero or absent diagonal raises
    `SingularFactorError` naming the row.
    """
    b = _check_rhs(L, b)
    ptr, cols, vals = L._lists
    v = [0.0] * L.n
    for i in range(L.n):
        start, stop = ptr[i], ptr[i + 1]
        if stop > start and cols[stop - 1] > i:
            raise SparseStructureError(
                "lower factor stores an entry above the diagonal in row %d" % i)
        if stop == start or cols[stop - 1] != i:
            raise SingularFactorError(
                "lower factor has no stored diagonal in row %d" % i, row=i)
        s = b[i]
        for k in range(start, stop - 1):
            s -= vals[k] * v[cols[k]]
        pivot = vals[stop - 1]
        if pivot == 0.0:
            raise SingularFactorError(
                "lower factor has a zero diagonal in row %d" % i, row=i)
        v[i] = s / pivot
    return np.array(v)


def upper_tri_solve(U, b):
    """
    Solve U v = b by backward substitution, O(nnz).

    Same contract as `lower_tri_solve`, mirrored: positions with col >= row
    and the diagonal stored first in each row.
    """
    b = _check_rhs(U, b)
    ptr, cols, vals = U._lists
    v = [0.0] * U.n
    for i in range(U.n - 1, -1, -1):
        start, stop = ptr[i], ptr[i + 1]
        if stop == start or cols[start] != i:
            if stop > start and cols[start] < i:
                raise SparseStructureError(
                    "upper factor stores an entry below the diagonal "
                    "in row %d" % i)
            raise SingularFactorError(
                "upper factor has no stored diagonal in row %d" % i, row=i)
        s = b[i]
        for k in range(start + 1, stop):
            s -= vals[k] * v[cols[k]]
        pivot = vals[start]
        if pivot == 0.0:
            raise SingularFactorError(
                "upper factor has a zero diagonal in row %d" % i, row=i)
        v[i] = s / pivot
    return np.array(v)


def _check_rhs(A, b):
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (A.n,):
        raise SparseStructureError(
            "dimension mismatch: matrix is %d x %d, vector has shape %r"
            % (A.n, A.n, b.shape))
    return b.tolist()


def to_dense(A, cap=DEFAULT_DENSE_CAP):
    """
    Element-exact dense expansion. Refuses matrices with n above `cap`.
    """
    if A.n > cap:
        raise DenseCapError(
            "matrix dimension %d exceeds the dense cap %d" % (A.n, cap))
    data = np.zeros((A.n, A.n))
    data[A.row_idx, A.col_idx] = A.values
    return DenseMatrix(data)
