"""
Right-preconditioned GMRES with a modified Gram-Schmidt Arnoldi process
and Givens-rotation least squares on the Hessenberg matrix.

Right preconditioning solves A P^-1 y = b and returns x = x0 + P^-1 V y,
so the residual being minimized is the residual of the original system.
GMRES is never restarted.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .exceptions import NumericalBreakdownError
from .precond import IdentityPreconditioner
from .sparse import spmv

log = logging.getLogger(__name__)

PROGRESS_EVERY = 50


@dataclass(eq=False)
class ArnoldiState:
    """
    Orthonormal Krylov basis and Hessenberg coefficients.

    `basis` holds the basis vectors as rows (`k + 1` of them once `k`
    steps have run without breakdown, `k` after a lucky breakdown);
    `columns[i]` holds h_{1..i+2, i+1}. The state is updated in place by
    `arnoldi_step`.
    """
    basis: np.ndarray
    beta: float
    columns: List[np.ndarray] = field(default_factory=list)
    lucky: bool = False
    size: int = 1

    @classmethod
    def start(cls, r0, capacity=None):
        r0 = np.asarray(r0, dtype=np.float64)
        beta = float(np.linalg.norm(r0))
        if beta == 0.0:
            raise NumericalBreakdownError(
                "cannot start an Arnoldi process from a zero vector")
        capacity = max(2, capacity or 16)
        basis = np.zeros((capacity, r0.size))
        basis[0] = r0 / beta
        return cls(basis=basis, beta=beta)

    @property
    def k(self):
        "Current subspace dimension (number of completed steps)."
        return len(self.columns)

    @property
    def V(self):
        "Basis vectors as columns, n x size."
        return self.basis[:self.size].T

    def hessenberg(self):
        "Dense (k+1) x k upper Hessenberg matrix."
        H = np.zeros((self.k + 1, self.k))
        for i, col in enumerate(self.columns):
            H[:len(col), i] = col
        return H

    def _append(self, v):
        if self.size == self.basis.shape[0]:
            grown = np.zeros((2 * self.basis.shape[0], self.basis.shape[1]))
            grown[:self.size] = self.basis
            self.basis = grown
        self.basis[self.size] = v
        self.size += 1


def arnoldi_step(A, P, state, reorthogonalize=False):
    """
    Extend the Krylov basis of A P^-1 by one vector.

    w = A P^-1 v_k is orthogonalized against v_1..v_k by modified
    Gram-Schmidt (sequential subtraction). If h_{k+1,k} = ||w|| is zero the
    subspace is invariant: `state.lucky` is set and no vector is added.

    PARAMETERS
    ----------
    A : CsrMatrix
    P : Preconditioner or None
        `None` means no preconditioning.
    state : ArnoldiState
        Updated in place and returned.
    reorthogonalize : bool, optional
        Run a second Gram-Schmidt sweep, folding its coefficients into h.

    """
    if state.lucky:
        raise NumericalBreakdownError(
            "Arnoldi process already terminated by lucky breakdown")
    P = P if P is not None else IdentityPreconditioner()
    k = state.size
    w = spmv(A, P.apply_inverse(state.basis[k - 1]))
    h = np.zeros(k + 1)
    for i in range(k):
        v_i = state.basis[i]
        h[i] = np.dot(w, v_i)
        w -= h[i] * v_i
    if reorthogonalize:
        for i in range(k):
            v_i = state.basis[i]
            correction = np.dot(w, v_i)
            h[i] += correction
            w -= correction * v_i
    h[k] = np.linalg.norm(w)
    state.columns.append(h)
    if h[k] == 0.0:
        log.debug("exact solution found (lucky breakdown) at step %d", k)
        state.lucky = True
    else:
        state._append(w / h[k])
    return state


def arnoldi_residual(A, P, state):
    """
    Relative residual of the Arnoldi relation,
    ||A P^-1 V_k - V_{k+1} H||_F / ||H||_F. On lucky breakdown the last
    row of H is zero and only V_k is needed.
    """
    P = P if P is not None else IdentityPreconditioner()
    k = state.k
    H = state.hessenberg()
    V = state.basis[:state.size]
    AV = np.array([spmv(A, P.apply_inverse(V[i])) for i in range(k)])
    rows = min(k + 1, state.size)
    VH = H[:rows].T @ V[:rows]
    return float(np.linalg.norm(AV - VH) / np.linalg.norm(H))


class GivensLeastSquares(object):
    """
    Incremental QR of an upper Hessenberg matrix by Givens rotations.

    Push the columns of H one at a time; after each push `rho` is the
    least squares residual min ||beta e_1 - H y||, read off as
    |beta q_{1,k+1}| without forming y.
    """

    def __init__(self, beta):
        self.beta = float(beta)
        self.cos = []
        self.sin = []
        self.R = []
        self.g = [self.beta]

    @property
    def k(self):
        return len(self.R)

    @property
    def rho(self):
        return abs(self.g[-1])

    def push(self, column):
        """
        Add column k+1 (length k+2) of H and return the new residual.
        """
        h = [float(v) for v in column]
        k = self.k
        if len(h) != k + 2:
            raise ValueError("column %d must have length %d, got %d"
                             % (k + 1, k + 2, len(h)))
        for i in range(k):
            c, s = self.cos[i], self.sin[i]
            h[i], h[i + 1] = c * h[i] + s * h[i + 1], -s * h[i] + c * h[i + 1]
        a, b = h[k], h[k + 1]
        r = math.hypot(a, b)
        if r == 0.0:
            raise NumericalBreakdownError(
                "singular Hessenberg least squares problem at column %d"
                % (k + 1))
        c, s = a / r, b / r
        self.cos.append(c)
        self.sin.append(s)
        h[k] = r
        self.R.append(h[:k + 1])
        g_k = self.g[k]
        self.g[k] = c * g_k
        self.g.append(-s * g_k)
        return self.rho

    def solve(self):
        "Back substitution R y = g[:k]."
        k = self.k
        y = np.zeros(k)
        for i in range(k - 1, -1, -1):
            s = self.g[i]
            for j in range(i + 1, k):
                s -= self.R[j][i] * y[j]
            y[i] = s / self.R[i][i]
        return y


def hessenberg_lstsq(H, beta):
    """
    Solve min_y ||beta e_1 - H y||_2 for a (k+1) x k upper Hessenberg H.

    RETURNS
    -------
    (y, rho) : (ndarray, float)
        The minimizer and the attained minimum.
    """
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    rows, k = H.shape
    if rows != k + 1:
        raise ValueError("Hessenberg matrix must be (k+1) x k, got %r"
                         % (H.shape,))
    lstsq = GivensLeastSquares(beta)
    for i in range(k):
        lstsq.push(H[:i + 2, i])
    return lstsq.solve(), lstsq.rho


@dataclass(eq=False)
class SolveResult:
    x: np.ndarray
    iterations: int
    residual_history: List[float]
    converged: bool
    breakdown: bool = False

    @property
    def relative_residual(self):
        rho0 = self.residual_history[0]
        return self.residual_history[-1] / rho0 if rho0 > 0 else 0.0


def gmres(A, P, b, x0=None, tol=1e-8, kmax=None, reorthogonalize=False,
          monitor=None):
    """
    Right-preconditioned full GMRES.

    Iterates while rho_k > tol * rho_0 and k < kmax, then forms
    x_k = x0 + P^-1 V_k y_k.

    PARAMETERS
    ----------
    A : CsrMatrix
        Nonsingular system matrix (not checked).
    P : Preconditioner or None
        Right preconditioner, `None` for none.
    b, x0 : ndarray
        Right-hand side and initial guess (default zero).
    tol : float
        Relative residual tolerance.
    kmax : int, optional
        Iteration cap, defaults to n.
    reorthogonalize : bool
        Passed through to `arnoldi_step`.
    monitor : callable, optional
        Called as `monitor(state)` after every Arnoldi step; tests use it
        to check the orthonormality and Arnoldi invariants.

    RETURNS
    -------
    result : SolveResult
        `residual_history[0]` is ||b - A x0||; the history is
        nonincreasing and has `iterations + 1` entries.

    """
    P = P if P is not None else IdentityPreconditioner()
    b = np.asarray(b, dtype=np.float64)
    n = A.n
    if b.shape != (n,):
        raise ValueError("right-hand side has shape %r, expected (%d,)"
                         % (b.shape, n))
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=np.float64)
    if x0.shape != (n,):
        raise ValueError("initial guess has shape %r, expected (%d,)"
                         % (x0.shape, n))
    if not tol > 0:
        raise ValueError("tol must be positive, got %r" % tol)
    kmax = n if kmax is None else min(int(kmax), n)

    r0 = b - spmv(A, x0)
    rho0 = float(np.linalg.norm(r0))
    history = [rho0]
    if rho0 == 0.0:
        return SolveResult(x=x0.copy(), iterations=0, residual_history=history,
                           converged=True)

    state = ArnoldiState.start(r0, capacity=min(kmax + 1, 64))
    lstsq = GivensLeastSquares(rho0)
    rho = rho0
    while rho > tol * rho0 and state.k < kmax:
        arnoldi_step(A, P, state, reorthogonalize=reorthogonalize)
        rho = lstsq.push(state.columns[-1])
        history.append(rho)
        if monitor is not None:
            monitor(state)
        if state.k % PROGRESS_EVERY == 0:
            log.debug("gmres iteration %d: relative residual %.3e",
                      state.k, rho / rho0)
        if state.lucky:
            break

    y = lstsq.solve()
    x = x0 + P.apply_inverse(state.basis[:state.k].T @ y)
    converged = rho <= tol * rho0
    log.debug("gmres %s after %d iterations (%s): relative residual %.3e",
              'converged' if converged else 'stopped', state.k, P.name,
              rho / rho0)
    return SolveResult(x=x, iterations=state.k, residual_history=history,
                       converged=converged, breakdown=state.lucky)
