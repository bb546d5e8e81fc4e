"""
Spectral metrics of right-preconditioned operators A P^-1, the two
singular value bounds tied to the training losses, and the evaluation
report over a set of problems.

Dense quantities are only computed up to the dense cap; above it the
report keeps iteration counts and timings and leaves spectral cells
empty.
"""
from __future__ import annotations

import collections
import concurrent.futures
import functools
import logging
import math
import time

import matplotlib
import numpy as np
import scipy.linalg
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .config import EvalConfig, PRECONDITIONERS
from .data import write_csv, write_figure
from .exceptions import (
    ConfigError, NumericalBreakdownError, TrainingDivergenceError,
)
from .graph import coates_graph
from .krylov import gmres
from .neural import forward
from .precond import (
    FactoredPreconditioner, FactorPair, IdentityPreconditioner, ilu0,
    jacobi_from,
)
from .sparse import (
    DEFAULT_DENSE_CAP, DenseMatrix, add, frobenius_norm, identity, spmv,
    to_dense,
)
from .training import solve_exact

log = logging.getLogger(__name__)

JACOBI_SWEEPS = 30
BOUND_SLACK = 1e-9

BoundCheck = collections.namedtuple('BoundCheck', ['lhs', 'mid', 'rhs',
                                                   'holds'])
PowerResult = collections.namedtuple('PowerResult', ['sigma', 'converged',
                                                     'iterations'])


# preconditioners ------------------

def build_preconditioner(name, A, model=None):
    """
    The preconditioner `name` (one of `config.PRECONDITIONERS`) for `A`;
    `learned` needs `model`.
    """
    if name == 'none':
        return IdentityPreconditioner()
    if name == 'jacobi':
        return jacobi_from(A)
    if name == 'ilu0':
        return FactoredPreconditioner(ilu0(A), name='ilu0')
    if name == 'learned':
        if model is None:
            raise ConfigError("the learned preconditioner needs a model file")
        return FactoredPreconditioner(forward(model, coates_graph(A)),
                                      name='learned')
    raise ConfigError("unknown preconditioner %r, expected one of %r"
                      % (name, PRECONDITIONERS))


def preconditioner_factors(P, n):
    "The factor pair of `P`; the identity preconditioner is I times I."
    F = P.factors()
    if F is None:
        F = FactorPair(L=identity(n), U=identity(n), epsilon=1.0)
    return F


def precond_dense(A, P, cap=DEFAULT_DENSE_CAP):
    "A P^-1 as a `DenseMatrix`, column j being A (P^-1 e_j)."
    A_dense = to_dense(A, cap).data
    P_inv = np.empty((A.n, A.n))
    e = np.zeros(A.n)
    for j in range(A.n):
        e[j] = 1.0
        P_inv[:, j] = P.apply_inverse(e)
        e[j] = 0.0
    return DenseMatrix(A_dense @ P_inv)


# singular values ------------------

def _round_robin(m):
    """
    Rounds of disjoint column pairs covering every pair once (m even),
    by the circle method.
    """
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        rounds.append((np.array(players[:m // 2]),
                       np.array(players[m // 2:][::-1])))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def svd_values(B, max_sweeps=JACOBI_SWEEPS, cap=DEFAULT_DENSE_CAP):
    """
    Singular values of a square matrix by one-sided Jacobi rotations,
    descending.

    Each round rotates a set of disjoint column pairs at once; a sweep
    runs all rounds. Iteration stops after the first sweep in which every
    pair is orthogonal to within m * machine epsilon.

    Raises `NumericalBreakdownError` if `max_sweeps` sweeps do not
    converge.
    """
    data = B.data if isinstance(B, DenseMatrix) else np.asarray(B, float)
    if data.ndim != 2 or data.shape[0] != data.shape[1]:
        raise ConfigError("svd_values needs a square matrix, got shape %r"
                          % (data.shape,))
    n = data.shape[0]
    if n > cap:
        raise ConfigError("matrix dimension %d exceeds the dense cap %d"
                          % (n, cap))
    if n == 0:
        return np.zeros(0)
    m = n + (n % 2)
    X = np.zeros((n, m))
    X[:, :n] = data
    tol = max(m, 2) * np.finfo(np.float64).eps
    rounds = _round_robin(m) if m > 1 else []
    for sweep in range(max_sweeps):
        rotated = False
        for p, q in rounds:
            xp, xq = X[:, p], X[:, q]
            alpha = np.einsum('ij,ij->j', xp, xp)
            beta = np.einsum('ij,ij->j', xq, xq)
            gamma = np.einsum('ij,ij->j', xp, xq)
            active = np.abs(gamma) > tol * np.sqrt(alpha * beta)
            if not active.any():
                continue
            rotated = True
            c = np.ones_like(gamma)
            s = np.zeros_like(gamma)
            zeta = (beta[active] - alpha[active]) / (2.0 * gamma[active])
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta)
                                                  + np.sqrt(1.0 + zeta ** 2))
            c[active] = 1.0 / np.sqrt(1.0 + t ** 2)
            s[active] = c[active] * t
            X[:, p], X[:, q] = c * xp - s * xq, s * xp + c * xq
        if not rotated:
            log.debug("jacobi svd converged after %d sweeps", sweep + 1)
            sigma = np.sqrt(np.einsum('ij,ij->j', X, X))[:n]
            return np.sort(sigma)[::-1]
    raise NumericalBreakdownError(
        "one-sided Jacobi SVD did not converge in %d sweeps" % max_sweeps)


def _power(apply, apply_t, n, iters, tol, seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for k in range(1, iters + 1):
        u = apply(v)
        estimate = float(np.linalg.norm(u))
        w = apply_t(u)
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return PowerResult(estimate, True, k)
        v = w / norm_w
        if k > 1 and abs(estimate - sigma) <= tol * estimate:
            return PowerResult(estimate, True, k)
        sigma = estimate
    return PowerResult(sigma, False, iters)


def sigma_max_power(A, P, iters=500, tol=1e-10, seed=0):
    """
    Largest singular value of M = A P^-1 by power iteration on M^T M,
    applied matrix-free.

    RETURNS
    -------
    result : PowerResult
        `(sigma, converged, iterations)`; `sigma` is the best estimate
        even when the relative change never fell below `tol`.

    """
    A_t = A.transpose()
    return _power(lambda v: spmv(A, P.apply_inverse(v)),
                  lambda u: P.apply_inverse_transpose(spmv(A_t, u)),
                  A.n, iters, tol, seed)


def sigma_min_power(A, P, iters=500, tol=1e-10, seed=0):
    """
    Smallest singular value of A P^-1, as 1 / sigma_max(P A^-1). Each
    step solves with A and A^T, so this is the slow edge.
    """
    F = preconditioner_factors(P, A.n)
    Pm = F.product()
    Pm_t = Pm.transpose()
    A_t = A.transpose()
    solve = functools.partial(
        solve_exact, A, preconditioner=FactoredPreconditioner(ilu0(A)))
    solve_t = functools.partial(
        solve_exact, A_t, preconditioner=FactoredPreconditioner(ilu0(A_t)))
    result = _power(lambda v: spmv(Pm, solve(v)),
                    lambda u: solve_t(spmv(Pm_t, u)),
                    A.n, iters, tol, seed)
    return result._replace(sigma=1.0 / result.sigma)


# bound checks ------------------

def _default_eps(F):
    if F.epsilon > 0:
        return F.epsilon
    l_diag, _ = F.L.diagonal()
    u_diag, _ = F.U.diagonal()
    return float(np.min(np.abs(l_diag * u_diag)))


def lemma1_check(A, F, eps=None, cap=DEFAULT_DENSE_CAP):
    """
    Check sigma_max(A P^-1) <= ||A - L U||_F / eps + 1.

    The bound relies on ||P^-1||_2 <= 1 / eps, which the diagonal guard
    alone does not imply; a violation is logged with ||P^-1||_2 so it can
    be told apart from a kernel bug.

    RETURNS
    -------
    check : BoundCheck
        `mid` is None.

    """
    eps = _default_eps(F) if eps is None else eps
    P = FactoredPreconditioner(F)
    lhs = float(svd_values(precond_dense(A, P, cap), cap=cap)[0])
    distance = frobenius_norm(add(A, F.product(), 1.0, -1.0))
    rhs = distance / eps + 1.0 if eps > 0 else math.inf
    holds = lhs <= rhs + BOUND_SLACK
    if not holds:
        P_inv_norm = float(svd_values(
            precond_dense(identity(A.n), P, cap), cap=cap)[0])
        log.warning("upper singular value bound violated: %.6g > %.6g, "
                    "||P^-1||_2 = %.6g vs 1/eps = %.6g", lhs, rhs,
                    P_inv_norm, 1.0 / eps)
    return BoundCheck(lhs=lhs, mid=None, rhs=rhs, holds=holds)


def inverse_distance(A, F, cap=DEFAULT_DENSE_CAP):
    "Dense P A^-1."
    A_dense = to_dense(A, cap).data
    P_dense = to_dense(F.product(), cap).data
    try:
        return scipy.linalg.solve(A_dense.T, P_dense.T).T
    except (scipy.linalg.LinAlgError, ValueError) as e:
        raise NumericalBreakdownError("dense solve with A failed: %s" % e)


def lemma2_check(A, F, cap=DEFAULT_DENSE_CAP):
    """
    Check sigma_min(A P^-1) >= 1 / ||P A^-1||_F and
    sigma_min(A P^-1) >= 1 / (||P A^-1 - I||_F + 1).
    """
    lhs = float(svd_values(precond_dense(A, FactoredPreconditioner(F), cap),
                           cap=cap)[-1])
    M = inverse_distance(A, F, cap)
    mid = 1.0 / np.linalg.norm(M)
    rhs = 1.0 / (np.linalg.norm(M - np.eye(A.n)) + 1.0)
    holds = lhs >= mid - BOUND_SLACK and lhs >= rhs - BOUND_SLACK
    if not holds:
        log.warning("lower singular value bound violated: %.6g < %.6g or "
                    "%.6g", lhs, mid, rhs)
    return BoundCheck(lhs=lhs, mid=float(mid), rhs=float(rhs), holds=holds)


# evaluation ------------------

REPORT_COLUMNS = (
    'problem', 'preconditioner', 'iterations', 'converged', 'sigma_max',
    'sigma_min', 'kappa', 'frob_PA', 'frob_PAinvI', 'setup_time',
    'solve_time', 'total_time', 'lemma1_holds', 'lemma2_holds', 'failed',
)

SUMMARY_COLUMNS = (
    'preconditioner', 'problems', 'failed', 'iterations', 'sigma_max',
    'sigma_min', 'kappa', 'frob_PA', 'frob_PAinvI', 'setup_time',
    'solve_time', 'total_time',
)

_MEAN_COLUMNS = SUMMARY_COLUMNS[3:]

HISTOGRAM_HEADER = ('bin_left', 'bin_right', 'count')


# one (problem, preconditioner) cell; unavailable values are None
EvalRecord = collections.namedtuple(
    'EvalRecord', REPORT_COLUMNS,
    defaults=(None,) * (len(REPORT_COLUMNS) - 3) + (False,))


class EvalReport(object):
    """
    Records in (problem, preconditioner) order plus the singular values
    behind each record, for histograms.
    """

    def __init__(self, records, singular_values):
        self.records = list(records)
        self.singular_values = dict(singular_values)

    @property
    def preconditioners(self):
        return list(collections.OrderedDict(
            (r.preconditioner, None) for r in self.records))

    def rows(self):
        return [tuple(r) for r in self.records]

    def summary(self):
        "Per-preconditioner means over the cells where a value exists."
        rows = []
        for name in self.preconditioners:
            records = [r for r in self.records if r.preconditioner == name]
            row = [name, len(records), sum(1 for r in records if r.failed)]
            for column in _MEAN_COLUMNS:
                values = [getattr(r, column) for r in records
                          if getattr(r, column) is not None]
                row.append(float(np.mean(values)) if values else None)
            rows.append(tuple(row))
        return rows

    def pooled_singular_values(self, name):
        parts = [s for (_, p), s in sorted(self.singular_values.items())
                 if p == name]
        return np.concatenate(parts) if parts else np.zeros(0)


def _evaluate_cell(sample, name, cfg, model):
    A, n = sample.A, sample.A.n
    fields = {'problem': sample.name, 'preconditioner': name}
    sigma = None
    try:
        start = time.perf_counter()
        P = build_preconditioner(name, A, model)
        setup = time.perf_counter() - start
        start = time.perf_counter()
        result = gmres(A, P, sample.b, tol=cfg.tol, kmax=cfg.kmax,
                       reorthogonalize=cfg.reorthogonalize)
        solve = time.perf_counter() - start
        fields.update(iterations=result.iterations,
                      converged=result.converged)
        if cfg.timings:
            fields.update(setup_time=setup, solve_time=solve,
                          total_time=setup + solve)
        F = preconditioner_factors(P, n)
        fields['frob_PA'] = frobenius_norm(add(F.product(), A, 1.0, -1.0))
        if n <= cfg.dense_cap:
            sigma = svd_values(precond_dense(A, P, cfg.dense_cap),
                               cap=cfg.dense_cap)
            fields.update(sigma_max=float(sigma[0]),
                          sigma_min=float(sigma[-1]),
                          kappa=float(sigma[0] / sigma[-1]))
            M = inverse_distance(A, F, cfg.dense_cap)
            fields['frob_PAinvI'] = float(np.linalg.norm(M - np.eye(n)))
            if cfg.check_bounds:
                fields['lemma1_holds'] = lemma1_check(
                    A, F, cap=cfg.dense_cap).holds
                fields['lemma2_holds'] = lemma2_check(
                    A, F, cap=cfg.dense_cap).holds
    except (NumericalBreakdownError, TrainingDivergenceError) as e:
        log.warning("evaluation of %s with %s failed: %s", sample.name, name,
                    e)
        fields['failed'] = True
    return EvalRecord(**fields), sigma


def evaluate(problems, preconditioners, cfg=None, model=None):
    """
    Solve every problem with every preconditioner and collect the
    iteration, timing and spectral columns.

    PARAMETERS
    ----------
    problems : iterable of TrainSample
        Solved with their own right-hand side `b`.
    preconditioners : list of str
    cfg : EvalConfig, optional
    model : ModelParams, optional
        Needed for `learned`.

    RETURNS
    -------
    report : EvalReport
        Numerical failures do not abort the run: the cell is marked
        `failed` and its missing values stay None.

    """
    cfg = cfg or EvalConfig()
    problems = list(problems)
    if 'learned' in preconditioners and model is None:
        raise ConfigError("the learned preconditioner needs a model file")
    cells = [(sample, name) for sample in problems for name in preconditioners]

    def run(cell):
        return _evaluate_cell(cell[0], cell[1], cfg, model)

    if cfg.jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(cfg.jobs) as pool:
            results = list(pool.map(run, cells))
    else:
        results = [run(cell) for cell in cells]
    records = [record for record, _ in results]
    singular_values = {
        (sample.name, name): sigma
        for (sample, name), (_, sigma) in zip(cells, results)
        if sigma is not None
    }
    failed = sum(1 for r in records if r.failed)
    log.info("evaluated %d problems x %d preconditioners, %d failed cells",
             len(problems), len(preconditioners), failed)
    return EvalReport(records, singular_values)


# output ------------------

def histogram(values, bins=60):
    """
    Counts of `values` in `bins` log-spaced bins over
    [min / 2, 2 max]. Returns rows `(bin_left, bin_right, count)`.
    """
    values = np.asarray(values, dtype=np.float64)
    values = values[values > 0]
    if values.size == 0:
        return []
    edges = np.geomspace(values.min() / 2.0, values.max() * 2.0, bins + 1)
    counts, _ = np.histogram(values, bins=edges)
    return [(float(lo), float(hi), int(c))
            for lo, hi, c in zip(edges[:-1], edges[1:], counts)]


def write_report_csv(report, path, overwrite=False):
    write_csv(REPORT_COLUMNS, report.rows(), path, overwrite=overwrite)


def write_summary_csv(report, path, overwrite=False):
    write_csv(SUMMARY_COLUMNS, report.summary(), path, overwrite=overwrite)


def write_histogram_csv(rows, path, overwrite=False):
    write_csv(HISTOGRAM_HEADER, rows, path, overwrite=overwrite)


def histogram_figure(rows, title=''):
    """
    Bar chart of histogram rows on a log x axis.

    The figure is a bare `Figure` on an Agg canvas; pyplot's global state
    is never touched.
    """
    fig = Figure(figsize=(6.4, 3.2))
    FigureCanvasAgg(fig)
    ax = fig.add_subplot(1, 1, 1)
    if rows:
        left, right, counts = (np.array(column) for column in zip(*rows))
        ax.bar(left, counts, width=right - left, align='edge',
               color='steelblue', edgecolor='white', linewidth=0.5)
        ax.set_xscale('log')
    ax.set_xlabel('singular value')
    ax.set_ylabel('count')
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return fig


def write_histogram_svg(rows, path, title='', overwrite=False):
    # text as <text> elements, fixed element ids
    with matplotlib.rc_context({'svg.fonttype': 'none',
                                'svg.hashsalt': 'learnlu'}):
        write_figure(histogram_figure(rows, title), path,
                     overwrite=overwrite, format='svg',
                     metadata={'Date': None})
