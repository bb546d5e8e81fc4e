"""
Synthetic problems: 2-d Poisson stiffness matrices with Gaussian noise on
every nonzero, and the train / val / test splits built from them.

A dataset on disk is a directory with a `manifest.json` and one
subdirectory per split holding `<name>.A.mtx`, `<name>.b.vec` and (for
supervised samples) `<name>.x.vec`.
"""
from __future__ import annotations

import collections
import concurrent.futures
import logging
import os
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .config import FORMAT_VERSION, check_keys
from .data import (
    ensure_directory, read_json, read_matrix_market, read_vector,
    write_json, write_matrix_market, write_vector,
)
from .decorators import error_prefix_from_args
from .exceptions import (
    ConfigError, DataIOError, GenerationError, NumericalBreakdownError,
    error_prefix,
)
from .sparse import DEFAULT_DENSE_CAP, csr_from_arrays, to_dense
from .training import TrainSample, solve_exact

log = logging.getLogger(__name__)

SPLITS = ('train', 'val', 'test')
SPLIT_OFFSETS = {'train': 0, 'val': 1000000, 'test': 2000000}
MAX_PERTURB_ATTEMPTS = 100
SUPERVISED_CHECK = 1e-10

Dataset = collections.namedtuple('Dataset', SPLITS)


@dataclass(frozen=True, eq=False)
class ProblemSet:
    split: str
    samples: Tuple[TrainSample, ...]
    grid_k: int
    seed_base: int

    @property
    def n(self):
        return self.grid_k ** 2

    @property
    def seeds(self):
        return [s.seed for s in self.samples]

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)


def poisson2d(k):
    """
    The 5-point Laplacian on a k x k grid with Dirichlet boundary and unit
    spacing: 4 on the diagonal, -1 for each grid neighbor. Nodes are
    numbered row-major, n = k^2.
    """
    if k < 2:
        raise ConfigError("poisson grid side must be at least 2, got %r" % k)
    n = k * k
    node = np.arange(n)
    r, c = node // k, node % k
    rows, cols, values = [node], [node], [np.full(n, 4.0)]
    for dr, dc in ((-1, 0), (0, -1), (0, 1), (1, 0)):
        keep = (r + dr >= 0) & (r + dr < k) & (c + dc >= 0) & (c + dc < k)
        rows.append(node[keep])
        cols.append(node[keep] + dr * k + dc)
        values.append(np.full(int(keep.sum()), -1.0))
    return csr_from_arrays(np.concatenate(rows), np.concatenate(cols),
                           np.concatenate(values), n)


def rhs_source(k):
    """
    b_i = sin(pi x_i) sin(pi y_i) on the interior grid points
    {1/(k+1), ..., k/(k+1)}^2, row-major (y is the slow index).
    """
    if k < 1:
        raise ConfigError("grid side must be at least 1, got %r" % k)
    s = np.sin(np.pi * np.arange(1, k + 1) / (k + 1))
    return np.outer(s, s).ravel()


def is_nonsingular(A, dense_cap=DEFAULT_DENSE_CAP):
    "Dense rank check up to `dense_cap`, a pilot solve above it."
    if A.n <= dense_cap:
        return int(np.linalg.matrix_rank(to_dense(A, dense_cap).data)) == A.n
    try:
        solve_exact(A, np.ones(A.n))
    except NumericalBreakdownError:
        return False
    return True


def perturb(A, rng, max_attempts=MAX_PERTURB_ATTEMPTS,
            dense_cap=DEFAULT_DENSE_CAP):
    """
    Add independent standard normal noise to every stored nonzero of `A`,
    redrawing until the result is nonsingular.

    Raises `GenerationError` after `max_attempts` singular draws.
    """
    nonzero = A.values != 0.0
    for attempt in range(max_attempts):
        noise = rng.standard_normal(A.nnz)
        B = A.with_values(np.where(nonzero, A.values + noise, 0.0))
        if is_nonsingular(B, dense_cap):
            return B
        log.warning("perturbed matrix is singular, redrawing (attempt %d)",
                    attempt + 1)
    raise GenerationError("no nonsingular perturbation in %d attempts"
                          % max_attempts)


def supervised_sample(A, rng, tol=1e-11, seed=0, name=''):
    """
    A training tuple (A, x, b) with b ~ N(0, I) and x solved offline.
    """
    b = rng.standard_normal(A.n)
    try:
        x = solve_exact(A, b, tol=tol, check=SUPERVISED_CHECK)
    except NumericalBreakdownError as e:
        raise GenerationError("rejected sample %s (seed %d): %s"
                              % (name, seed, e))
    return TrainSample(A=A, b=b, x=x, seed=seed, name=name)


def sample_seed(seed_base, split, index):
    return seed_base + SPLIT_OFFSETS[split] + index


def _make_sample(base, split, index, seed_base, offline_tol):
    seed = sample_seed(seed_base, split, index)
    name = '%s-%04d' % (split, index)
    rng = np.random.default_rng(seed)
    with error_prefix("while generating %s (seed %d)" % (name, seed)):
        A = perturb(base, rng)
        if split == 'test':
            k = int(round(np.sqrt(A.n)))
            return TrainSample(A=A, b=rhs_source(k), seed=seed, name=name)
        return supervised_sample(A, rng, tol=offline_tol, seed=seed,
                                 name=name)


def make_dataset(grid_k, counts, seed_base=0, offline_tol=1e-11, jobs=1):
    """
    Build the train / val / test splits.

    PARAMETERS
    ----------
    grid_k : int
        Grid side, n = grid_k^2.
    counts : dict
        Number of samples per split.
    seed_base : int
        Sample i of a split uses seed `seed_base + offset(split) + i`, with
        offsets 0, 10^6 and 2*10^6, so the splits never share a seed.
    jobs : int, optional
        Worker threads. Results do not depend on it.

    RETURNS
    -------
    dataset : Dataset of ProblemSet

    """
    check_keys(counts, required=SPLITS, descr="split counts")
    for split in SPLITS:
        if not 1 <= counts[split] < SPLIT_OFFSETS['val']:
            raise ConfigError("%s count must be in [1, %d), got %r"
                              % (split, SPLIT_OFFSETS['val'], counts[split]))
    base = poisson2d(grid_k)
    splits = []
    for split in SPLITS:
        def make(index, split=split):
            return _make_sample(base, split, index, seed_base, offline_tol)
        indices = range(counts[split])
        if jobs > 1:
            with concurrent.futures.ThreadPoolExecutor(jobs) as pool:
                samples = tuple(pool.map(make, indices))
        else:
            samples = tuple(make(i) for i in indices)
        log.info("generated %d %s problems of size %d", len(samples), split,
                 base.n)
        splits.append(ProblemSet(split=split, samples=samples, grid_k=grid_k,
                                 seed_base=seed_base))
    return Dataset(*splits)


def condition_number(A, dense_cap=DEFAULT_DENSE_CAP):
    "2-norm condition number of A, or None above the dense cap."
    if A.n > dense_cap:
        return None
    return float(np.linalg.cond(to_dense(A, dense_cap).data))


def condition_number_report(problem_set, dense_cap=DEFAULT_DENSE_CAP):
    kappas = [condition_number(s.A, dense_cap) for s in problem_set]
    known = [k for k in kappas if k is not None]
    if known:
        log.info("%s condition numbers: min %.4g, mean %.4g, max %.4g",
                 problem_set.split, min(known), np.mean(known), max(known))
    return kappas


# persistence ------------------

def _paths(directory, split, name):
    prefix = os.path.join(directory, split, name)
    return {'A': prefix + '.A.mtx', 'b': prefix + '.b.vec',
            'x': prefix + '.x.vec'}


@error_prefix_from_args("while saving a dataset to {directory}")
def save_dataset(dataset, directory, config=None, dense_cap=DEFAULT_DENSE_CAP,
                 overwrite=False):
    """
    Write `dataset` under `directory` with a manifest recording the grid,
    seeds, counts, the test condition numbers and the resolved `config`.
    """
    ensure_directory(directory)
    manifest = {
        'format_version': FORMAT_VERSION,
        'grid': dataset.train.grid_k,
        'seed_base': dataset.train.seed_base,
        'counts': {split: len(getattr(dataset, split)) for split in SPLITS},
        'config': config or {},
        'splits': {},
    }
    for split in SPLITS:
        problem_set = getattr(dataset, split)
        ensure_directory(os.path.join(directory, split))
        kappas = (condition_number_report(problem_set, dense_cap)
                  if split == 'test' else [None] * len(problem_set))
        entries = []
        for sample, kappa in zip(problem_set, kappas):
            paths = _paths(directory, split, sample.name)
            write_matrix_market(sample.A, paths['A'], overwrite=overwrite)
            write_vector(sample.b, paths['b'], overwrite=overwrite)
            if sample.x is not None:
                write_vector(sample.x, paths['x'], overwrite=overwrite)
            entries.append({'name': sample.name, 'seed': sample.seed,
                            'supervised': sample.x is not None,
                            'kappa': kappa})
        manifest['splits'][split] = entries
    write_json(manifest, os.path.join(directory, 'manifest.json'),
               overwrite=overwrite)
    return manifest


def load_manifest(directory):
    path = os.path.join(directory, 'manifest.json')
    if not os.path.exists(path):
        raise DataIOError("no dataset manifest at %s" % path)
    manifest = read_json(path)
    check_keys(manifest, required=['format_version', 'grid', 'seed_base',
                                   'counts', 'config', 'splits'],
               descr="dataset manifest %s" % path)
    if manifest['format_version'] != FORMAT_VERSION:
        raise DataIOError("unsupported dataset format version %r in %s"
                          % (manifest['format_version'], path))
    return manifest


@error_prefix_from_args("while loading the {split} split of {directory}")
def load_split(directory, split, manifest=None):
    manifest = manifest or load_manifest(directory)
    samples = []
    for entry in manifest['splits'][split]:
        paths = _paths(directory, split, entry['name'])
        x = read_vector(paths['x']) if entry['supervised'] else None
        samples.append(TrainSample(A=read_matrix_market(paths['A']),
                                   b=read_vector(paths['b']), x=x,
                                   seed=entry['seed'], name=entry['name']))
    return ProblemSet(split=split, samples=tuple(samples),
                      grid_k=manifest['grid'],
                      seed_base=manifest['seed_base'])


def load_dataset(directory):
    manifest = load_manifest(directory)
    return Dataset(*[load_split(directory, split, manifest)
                     for split in SPLITS])
