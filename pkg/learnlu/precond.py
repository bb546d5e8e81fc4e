"""
Preconditioners: the `apply_inverse` interface, the classical baselines
(identity, Jacobi, ILU(0)) and the factor-pair applicator shared by
ILU(0) and the learned factorization.
"""
from __future__ import annotations

import abc
import functools
import logging
import os
from dataclasses import dataclass

import numpy as np

from .data import read_matrix_market, write_matrix_market
from .exceptions import DataIOError, SingularFactorError, SparseStructureError
from .sparse import (
    CsrMatrix, add_missing_diagonal, csr_from_arrays, diag, identity,
    lower_tri_solve, matmul, spmv, upper_tri_solve,
)

log = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-4
DEFAULT_PIVOT_GUARD = 1e-8


class Preconditioner(abc.ABC):
    """
    A fixed nonsingular linear map P^-1, applied to vectors.
    """
    name = 'abstract'

    @abc.abstractmethod
    def apply_inverse(self, v):
        "Return P^-1 v."

    @abc.abstractmethod
    def apply_inverse_transpose(self, v):
        "Return P^-T v."

    def factors(self):
        "The `FactorPair` behind this preconditioner, if it has one."
        return None


def apply_identity(v):
    return np.asarray(v, dtype=np.float64)


class IdentityPreconditioner(Preconditioner):
    name = 'none'

    def apply_inverse(self, v):
        return apply_identity(v)

    def apply_inverse_transpose(self, v):
        return apply_identity(v)


class JacobiPreconditioner(Preconditioner):
    """
    P = diag(A), with zero or absent diagonal entries replaced by 1.
    """
    name = 'jacobi'

    def __init__(self, d):
        self.d = np.array(d, dtype=np.float64)
        self.d.flags.writeable = False

    def apply_inverse(self, v):
        return np.asarray(v, dtype=np.float64) / self.d

    def apply_inverse_transpose(self, v):
        return self.apply_inverse(v)

    def factors(self):
        n = len(self.d)
        return FactorPair(L=diag(self.d), U=identity(n), epsilon=0.0)


def _jacobi_diagonal(A):
    d, _ = A.diagonal()
    return np.where(d == 0.0, 1.0, d)


def jacobi_from(A):
    return JacobiPreconditioner(_jacobi_diagonal(A))


def jacobi_factors(A):
    "Jacobi written as a factor pair: L = diag (fallback 1), U = I."
    return jacobi_from(A).factors()


@dataclass(frozen=True, eq=False)
class FactorPair:
    """
    Triangular factors of a preconditioner P = L U.

    Learned factors carry a guarded diagonal on `L` (|L_ii| >= epsilon)
    and a unit diagonal on `U`. ILU(0) factors use the textbook
    convention instead: unit diagonal on `L`, pivots on `U`.
    `guarded_pivots` counts pivots ILU(0) had to replace.
    """
    L: CsrMatrix
    U: CsrMatrix
    epsilon: float = DEFAULT_EPSILON
    guarded_pivots: int = 0

    @property
    def n(self):
        return self.L.n

    def product(self):
        "P = L U on its exact pattern, fill-in included."
        return matmul(self.L, self.U)

    def apply(self, v):
        "P v = L (U v)."
        return spmv(self.L, spmv(self.U, v))

    def check_invariants(self, source=None):
        """
        Check the learned-factor invariants: triangular patterns,
        |L_ii| >= epsilon, U_ii = 1 and, given the `source` matrix,
        pattern containment in its diagonal-completed pattern.
        Raises `SparseStructureError` on the first violation.
        """
        if np.any(self.L.col_idx > self.L.row_idx):
            raise SparseStructureError("L stores entries above the diagonal")
        if np.any(self.U.col_idx < self.U.row_idx):
            raise SparseStructureError("U stores entries below the diagonal")
        l_diag, l_present = self.L.diagonal()
        u_diag, u_present = self.U.diagonal()
        if not l_present.all() or np.any(np.abs(l_diag) < self.epsilon):
            raise SparseStructureError(
                "L has a diagonal entry below epsilon = %g" % self.epsilon)
        if not u_present.all() or np.any(u_diag != 1.0):
            raise SparseStructureError("U does not have a unit diagonal")
        if source is not None:
            allowed = add_missing_diagonal(source).pattern()
            if not (self.L.pattern() | self.U.pattern()) <= allowed:
                raise SparseStructureError(
                    "factor pattern exceeds the source matrix pattern")


def factored_apply_inverse(F, r):
    "v = U^-1 (L^-1 r) by two sparse triangular solves."
    return upper_tri_solve(F.U, lower_tri_solve(F.L, r))


class FactoredPreconditioner(Preconditioner):

    def __init__(self, factors, name='factored'):
        self._factors = factors
        self.name = name

    @property
    def L(self):
        return self._factors.L

    @property
    def U(self):
        return self._factors.U

    def apply_inverse(self, v):
        return factored_apply_inverse(self._factors, v)

    def apply_inverse_transpose(self, v):
        # P^-T = L^-T U^-T, and U^T is lower triangular
        w = lower_tri_solve(self._transposes[1], v)
        return upper_tri_solve(self._transposes[0], w)

    @functools.cached_property
    def _transposes(self):
        return self.L.transpose(), self.U.transpose()

    def factors(self):
        return self._factors


def ilu0(A, pivot_guard=DEFAULT_PIVOT_GUARD, strict=False):
    """
    Incomplete LU factorization without fill-in (IKJ variant).

    Works on the pattern of `add_missing_diagonal(A)`: updates only touch
    positions inside the pattern, so (L U)_ij = A_ij at every stored
    position where no update was dropped. `L` gets an explicit unit
    diagonal and the multipliers; `U` gets the pivots.

    PARAMETERS
    ----------
    A : CsrMatrix
    pivot_guard : float, optional
        Pivots with |u_ii| < pivot_guard are replaced by
        sign(u_ii) * pivot_guard (positive for an exact zero) and counted
        in `FactorPair.guarded_pivots`.
    strict : bool, optional
        Raise `SingularFactorError` instead of guarding.

    """
    A = add_missing_diagonal(A)
    n = A.n
    ptr, cols, _ = A._lists
    vals = A.values.tolist()
    diag_pos = [0] * n
    positions = []
    for i in range(n):
        row = {cols[k]: k for k in range(ptr[i], ptr[i + 1])}
        positions.append(row)
        diag_pos[i] = row[i]

    guarded = 0
    for i in range(n):
        row = positions[i]
        for kk in range(ptr[i], ptr[i + 1]):
            k = cols[kk]
            if k >= i:
                break
            vals[kk] /= vals[diag_pos[k]]
            multiplier = vals[kk]
            for kj in range(diag_pos[k] + 1, ptr[k + 1]):
                target = row.get(cols[kj])
                if target is not None:
                    vals[target] -= multiplier * vals[kj]
        pivot = vals[diag_pos[i]]
        if abs(pivot) < pivot_guard:
            if strict:
                raise SingularFactorError(
                    "ILU(0) pivot %r in row %d is below the guard %g"
                    % (pivot, i, pivot_guard), row=i)
            vals[diag_pos[i]] = -pivot_guard if pivot < 0 else pivot_guard
            guarded += 1
            log.warning("ILU(0) pivot %r in row %d replaced by %g",
                        pivot, i, vals[diag_pos[i]])

    rows = A.row_idx
    col_idx = A.col_idx
    vals = np.array(vals)
    strict_lower = col_idx < rows
    upper = col_idx >= rows
    L = csr_from_arrays(
        np.concatenate([rows[strict_lower], np.arange(n)]),
        np.concatenate([col_idx[strict_lower], np.arange(n)]),
        np.concatenate([vals[strict_lower], np.ones(n)]),
        n,
    )
    U = csr_from_arrays(rows[upper], col_idx[upper], vals[upper], n)
    return FactorPair(L=L, U=U, epsilon=0.0, guarded_pivots=guarded)


def save_factor_pair(F, prefix, overwrite=False):
    "Write `prefix.L.mtx` and `prefix.U.mtx`."
    write_matrix_market(F.L, prefix + '.L.mtx', overwrite=overwrite)
    write_matrix_market(F.U, prefix + '.U.mtx', overwrite=overwrite)


def load_factor_pair(prefix, epsilon=DEFAULT_EPSILON):
    for suffix in ('.L.mtx', '.U.mtx'):
        if not os.path.exists(prefix + suffix):
            raise DataIOError("missing factor file %s%s" % (prefix, suffix))
    return FactorPair(L=read_matrix_market(prefix + '.L.mtx'),
                      U=read_matrix_market(prefix + '.U.mtx'),
                      epsilon=epsilon)
