"""
Loss functions for learned factorizations and the training loop.

Every loss is built on a `tape.Tape` so its gradient with respect to the
network parameters comes from a single reverse pass. Solves against A
that some losses need are constants on the tape: no gradient flows
through A^-1.
"""
from __future__ import annotations

import collections
import concurrent.futures
import functools
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import TrainConfig
from .data import write_csv
from .exceptions import (
    ConfigError, NumericalBreakdownError, TrainingDivergenceError,
    error_prefix,
)
from .graph import coates_graph
from .krylov import gmres
from .neural import TapeFactors, forward, forward_on_tape
from .precond import FactoredPreconditioner, FactorPair, ilu0
from .sparse import CsrMatrix, spmv
from .tape import Tape

log = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

HISTORY_HEADER = ('epoch', 'mean_train_loss', 'normalized_train_loss',
                  'val_iterations')


@dataclass(frozen=True, eq=False)
class TrainSample:
    """
    A training problem `A x = b`. `x` is None for unsupervised samples;
    `seed` seeds the stream the probing vectors w are drawn from.
    """
    A: CsrMatrix
    b: np.ndarray
    x: Optional[np.ndarray] = None
    seed: int = 0
    name: str = ''

    @functools.cached_property
    def graph(self):
        return coates_graph(self.A)

    @functools.cached_property
    def offline_preconditioner(self):
        return FactoredPreconditioner(ilu0(self.A), name='ilu0')

    def relative_residual(self):
        "||A x - b|| / ||b|| (0 for b = 0)."
        if self.x is None:
            raise ConfigError("sample %s has no solution vector" % self.name)
        norm_b = np.linalg.norm(self.b)
        r = np.linalg.norm(spmv(self.A, self.x) - self.b)
        return float(r / norm_b) if norm_b > 0 else float(r)


def solve_exact(A, b, tol=1e-10, check=1e-10, preconditioner=None,
                reorthogonalize=False):
    """
    Solve A x = b with ILU(0)-preconditioned GMRES at `tol`, do one step of
    iterative refinement, and verify ||A x - b|| / ||b|| < `check`.

    Raises `NumericalBreakdownError` if the verified residual is too large.
    """
    b = np.asarray(b, dtype=np.float64)
    norm_b = float(np.linalg.norm(b))
    if norm_b == 0.0:
        return np.zeros(A.n)
    P = preconditioner or FactoredPreconditioner(ilu0(A), name='ilu0')
    x = gmres(A, P, b, tol=tol, reorthogonalize=reorthogonalize).x
    r = b - spmv(A, x)
    if np.linalg.norm(r) > 0:
        x = x + gmres(A, P, r, tol=tol, reorthogonalize=reorthogonalize).x
    residual = float(np.linalg.norm(b - spmv(A, x)) / norm_b)
    if not residual < check:
        raise NumericalBreakdownError(
            "offline solve reached relative residual %.3e, needed %.1e"
            % (residual, check))
    return x


def _on_tape(F, tape):
    if isinstance(F, TapeFactors):
        return F
    if isinstance(F, FactorPair):
        return TapeFactors(L_pattern=F.L, U_pattern=F.U,
                           L_values=tape.constant(F.L.values),
                           U_values=tape.constant(F.U.values),
                           epsilon=F.epsilon)
    raise TypeError("expected TapeFactors or FactorPair, got %r" % type(F))


def _tape(tape):
    return tape if tape is not None else Tape(record=False)


def loss_max(F, A, w, tape=None):
    """
    ||A w - L (U w)||^2, an unbiased single-draw estimate of ||A - P||_F^2.

    `F` is a `TapeFactors` (gradients flow) or a `FactorPair` (plain
    evaluation); the result is a tape variable either way.
    """
    tape = _tape(tape)
    F = _on_tape(F, tape)
    return tape.sum_squares(tape.sub(spmv(A, w), F.apply(tape, w)))


def loss_min(F, A, w, solver=None, tape=None):
    """
    ||P z - w||^2 with z = A^-1 w, estimating ||P A^-1 - I||_F^2.

    `solver(A, w)` returns z; it defaults to `solve_exact`.
    """
    tape = _tape(tape)
    F = _on_tape(F, tape)
    z = (solver or solve_exact)(A, w)
    return tape.sum_squares(tape.sub(F.apply(tape, z), w))


def _require_solution(sample):
    if sample.x is None:
        raise ConfigError("sample %s has no solution vector; the loss needs "
                          "a supervised sample" % (sample.name or sample.seed))


def loss_min_hat(F, sample, tape=None):
    "||P x - b||^2 for a supervised sample (A x = b)."
    _require_solution(sample)
    tape = _tape(tape)
    F = _on_tape(F, tape)
    return tape.sum_squares(tape.sub(F.apply(tape, sample.x), sample.b))


def loss_combined(F, A, sample, w, alpha, tape=None):
    "||A w - P w||^2 + alpha ||P x||^2, the supervised combined loss."
    _require_solution(sample)
    tape = _tape(tape)
    F = _on_tape(F, tape)
    fit = loss_max(F, A, w, tape=tape)
    penalty = tape.sum_squares(F.apply(tape, sample.x))
    return tape.add(fit, tape.scale(penalty, alpha))


def loss_combined_exact(F, A, w, alpha, solver=None, tape=None):
    "||A w - P w||^2 + alpha ||P A^-1 w||^2, with a stop-gradient solve."
    tape = _tape(tape)
    F = _on_tape(F, tape)
    z = (solver or solve_exact)(A, w)
    fit = loss_max(F, A, w, tape=tape)
    penalty = tape.sum_squares(F.apply(tape, z))
    return tape.add(fit, tape.scale(penalty, alpha))


def hutchinson_estimate(apply, n, samples, rng):
    """
    Mean of ||M w||^2 over `samples` standard normal draws of w, an
    unbiased estimate of ||M||_F^2 for the linear map `apply` = M.
    """
    if samples < 1:
        raise ConfigError("need at least one Hutchinson sample, got %r"
                          % samples)
    total = 0.0
    for _ in range(samples):
        y = apply(rng.standard_normal(n))
        total += float(np.dot(y, y))
    return total / samples


def sample_loss(tape, factors, sample, cfg, rng, solver=None):
    """
    The loss `cfg.loss` of one sample, averaged over
    `cfg.hutchinson_samples` random vectors drawn from `rng`.
    """
    if cfg.loss == 'min-hat':
        return loss_min_hat(factors, sample, tape=tape)
    if solver is None:
        solver = functools.partial(
            solve_exact, tol=cfg.inner_tol, check=cfg.inner_tol,
            preconditioner=sample.offline_preconditioner,
            reorthogonalize=cfg.reorthogonalize)
    terms = []
    for _ in range(cfg.hutchinson_samples):
        w = rng.standard_normal(sample.A.n)
        if cfg.loss == 'max':
            terms.append(loss_max(factors, sample.A, w, tape=tape))
        elif cfg.loss == 'min':
            terms.append(loss_min(factors, sample.A, w, solver, tape=tape))
        elif cfg.loss == 'combined':
            terms.append(loss_combined(factors, sample.A, sample, w,
                                       cfg.alpha, tape=tape))
        elif cfg.loss == 'combined-exact':
            terms.append(loss_combined_exact(factors, sample.A, w, cfg.alpha,
                                             solver, tape=tape))
        else:
            raise ConfigError("unknown loss %r" % cfg.loss)
    total = terms[0]
    for term in terms[1:]:
        total = tape.add(total, term)
    return tape.scale(total, 1.0 / len(terms))


# optimization ------------------

class AdamState(object):
    """
    First and second moment buffers and the step count of Adam. Updated in
    place by `adam_step`.
    """

    def __init__(self, m, v, step=0):
        self.m = m
        self.v = v
        self.step = step

    @classmethod
    def zeros(cls, params):
        arrays = _arrays(params)
        return cls(m={k: np.zeros_like(a) for k, a in arrays.items()},
                   v={k: np.zeros_like(a) for k, a in arrays.items()})


def _arrays(params):
    return params.arrays if hasattr(params, 'arrays') else params


def adam_step(params, grads, state, lr, beta1=ADAM_BETA1, beta2=ADAM_BETA2,
              eps=ADAM_EPS):
    """
    One bias-corrected Adam update.

    PARAMETERS
    ----------
    params : ModelParams or dict
    grads : dict
        Same keys as the parameters.
    state : AdamState
        Updated in place.
    lr : float

    RETURNS
    -------
    params' : same type as `params`

    """
    state.step += 1
    t = state.step
    updated = collections.OrderedDict()
    for name, value in _arrays(params).items():
        g = grads[name]
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        m_hat = state.m[name] / (1.0 - beta1 ** t)
        v_hat = state.v[name] / (1.0 - beta2 ** t)
        updated[name] = value - lr * m_hat / (np.sqrt(v_hat) + eps)
    if hasattr(params, 'with_arrays'):
        return params.with_arrays(updated)
    return updated


def global_norm(grads):
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def clip_gradients(grads, max_norm):
    "Scale all gradients by max_norm / g if their global 2-norm g exceeds it."
    if not max_norm > 0:
        raise ConfigError("max_norm must be positive, got %r" % max_norm)
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads
    factor = max_norm / norm
    return collections.OrderedDict((k, g * factor) for k, g in grads.items())


# training loop ------------------

EpochRecord = collections.namedtuple(
    'EpochRecord', ['epoch', 'mean_train_loss', 'val_iterations'])


def _samples(split):
    return list(split.samples if hasattr(split, 'samples') else split)


def validation_iterations(params, samples, tol=1e-8, jobs=1,
                          reorthogonalize=False):
    """
    Mean GMRES iteration count over `samples` with the learned
    preconditioner of `params`. Solves run on up to `jobs` threads; the
    mean sums in sample order.
    """
    def iterations(sample):
        P = FactoredPreconditioner(forward(params, sample.graph), 'learned')
        return gmres(sample.A, P, sample.b, tol=tol,
                     reorthogonalize=reorthogonalize).iterations

    if jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            counts = list(pool.map(iterations, samples))
    else:
        counts = [iterations(s) for s in samples]
    return float(sum(counts)) / len(counts)


def train(model, dataset, cfg=None, solver=None):
    """
    Fit `model` by Adam on the training split, one step per sample, and
    select the epoch with the fewest mean validation GMRES iterations.

    PARAMETERS
    ----------
    model : ModelParams
        Initial parameters.
    dataset :
        Anything with `train` and `val` splits (a `ProblemSet` or a list
        of `TrainSample` each).
    cfg : TrainConfig, optional
    solver : callable, optional
        Replaces the ILU(0)-GMRES solve of the losses that need A^-1 w.

    RETURNS
    -------
    (params, history) : (ModelParams, list of EpochRecord)
        The earliest epoch wins ties. With `cfg.epochs == 0` the initial
        parameters come back with an empty history.

    NOTES
    -----
    Random vectors w are redrawn at every step from a per-sample generator
    seeded with `(cfg.seed, sample.seed)`, so reruns are bit-identical.
    A non-finite loss raises `TrainingDivergenceError` carrying the
    history of the completed epochs.

    """
    cfg = cfg or TrainConfig()
    train_samples = _samples(dataset.train)
    val_samples = _samples(dataset.val)
    if not train_samples or not val_samples:
        raise ConfigError("training needs nonempty train and val splits")
    if model.eps != cfg.eps:
        log.info("training with eps %g (model was built with %g)",
                 cfg.eps, model.eps)
        model = type(model)(config=model.config.replace(eps=cfg.eps),
                            arrays=model.arrays)

    history = []
    params = model
    if cfg.epochs == 0:
        return params, history

    rngs = [np.random.default_rng([cfg.seed, s.seed]) for s in train_samples]
    adam = AdamState.zeros(params)
    best_params, best_metric = params, math.inf
    log.info("training %d parameters with loss %s on %d samples for %d "
             "epochs", params.parameter_count, cfg.loss, len(train_samples),
             cfg.epochs)
    for epoch in range(1, cfg.epochs + 1):
        losses = []
        for index, (sample, rng) in enumerate(zip(train_samples, rngs)):
            context = ("while training on sample %d (seed %d) in epoch %d"
                       % (index, sample.seed, epoch))
            try:
                with error_prefix(context):
                    tape = Tape()
                    factors = forward_on_tape(tape, params, sample.graph,
                                              mode='train')
                    loss = sample_loss(tape, factors, sample, cfg, rng,
                                       solver)
            except TrainingDivergenceError as e:
                e.history = list(history)
                raise
            value = float(loss.value)
            if not math.isfinite(value):
                raise TrainingDivergenceError(
                    "non-finite loss %r in epoch %d at sample %d (seed %d)"
                    % (value, epoch, index, sample.seed), history=history)
            grads = clip_gradients(tape.backward(loss), cfg.clip)
            params = adam_step(params, grads, adam, cfg.lr)
            losses.append(value)

        metric = validation_iterations(params, val_samples, cfg.val_tol,
                                       cfg.jobs, cfg.reorthogonalize)
        record = EpochRecord(epoch=epoch,
                             mean_train_loss=float(np.mean(losses)),
                             val_iterations=metric)
        history.append(record)
        log.info("epoch %d: mean train loss %.6g, mean val iterations %.2f",
                 epoch, record.mean_train_loss, metric)
        if metric < best_metric:
            best_params, best_metric = params, metric
    log.info("best validation iterations %.2f at epoch %d", best_metric,
             best_epoch(history))
    return best_params, history


def best_epoch(history):
    "Epoch with the fewest validation iterations, earliest on ties."
    if not history:
        return 0
    return min(history, key=lambda r: (r.val_iterations, r.epoch)).epoch


def normalized_history(history):
    "Mean training loss of each epoch divided by the first epoch's."
    if not history:
        return []
    first = history[0].mean_train_loss
    if first == 0:
        return [0.0 for _ in history]
    return [r.mean_train_loss / first for r in history]


def write_history_csv(history, path, overwrite=False):
    rows = [(r.epoch, r.mean_train_loss, normalized, r.val_iterations)
            for r, normalized in zip(history, normalized_history(history))]
    write_csv(HISTORY_HEADER, rows, path, overwrite=overwrite)
