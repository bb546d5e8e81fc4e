import numpy as np
import pytest

from ..data import read_json
from ..dataset import (
    SPLITS, condition_number, condition_number_report, is_nonsingular,
    load_dataset, load_manifest, make_dataset, perturb, poisson2d, rhs_source,
    sample_seed, save_dataset, supervised_sample,
)
from ..exceptions import ConfigError, DataIOError, GenerationError
from ..sparse import from_dense, identity, spmv, to_dense

COUNTS = {'train': 2, 'val': 1, 'test': 1}


class ZeroNoise(object):
    "Stands in for a numpy Generator that always draws zeros."

    def standard_normal(self, size):
        return np.zeros(size)


@pytest.fixture(scope='module')
def tiny_dataset():
    return make_dataset(3, COUNTS, seed_base=5)


# poisson ---------------

def test_poisson2d_k2():
    expected = [[4, -1, -1, 0], [-1, 4, 0, -1], [-1, 0, 4, -1], [0, -1, -1, 4]]
    A = poisson2d(2)
    assert A.nnz == 12
    assert np.array_equal(to_dense(A).data, expected)


@pytest.mark.parametrize('k', [2, 3, 5, 8])
def test_poisson2d_structure(k):
    A = poisson2d(k)
    dense = to_dense(A).data
    assert A.n == k * k
    assert A.nnz == 5 * k * k - 4 * k
    assert np.array_equal(dense, dense.T)
    row_sums = dense.sum(axis=1)
    assert np.all(row_sums >= 0)
    interior = (k - 2) ** 2
    assert np.sum(row_sums == 0) == interior


def test_poisson2d_rejects_small_grid():
    with pytest.raises(ConfigError):
        poisson2d(1)


def test_rhs_source():
    assert rhs_source(1).tolist() == [1.0]
    assert np.allclose(rhs_source(2), [0.75] * 4)
    b = rhs_source(4)
    assert np.allclose(b.reshape(4, 4), b.reshape(4, 4).T)
    with pytest.raises(ConfigError):
        rhs_source(0)


# perturbation ---------------

def test_perturb_with_zero_noise_keeps_matrix():
    A = poisson2d(3)
    B = perturb(A, ZeroNoise())
    assert B.pattern() == A.pattern()
    assert np.array_equal(B.values, A.values)


def test_perturb_gives_up_on_singular_matrices():
    singular = from_dense([[1.0, 1.0], [1.0, 1.0]])
    assert not is_nonsingular(singular)
    with pytest.raises(GenerationError):
        perturb(singular, ZeroNoise(), max_attempts=3)


def test_perturb_noise_statistics():
    A = poisson2d(10)
    B = perturb(A, np.random.default_rng(0))
    assert B.pattern() == A.pattern()
    noise = B.values - A.values
    assert abs(noise.mean()) < 0.2
    assert abs(noise.std() - 1.0) < 0.15


def test_supervised_sample_residual():
    A = perturb(poisson2d(4), np.random.default_rng(3))
    sample = supervised_sample(A, np.random.default_rng(4), seed=4, name='s')
    assert sample.relative_residual() < 1e-10
    assert sample.seed == 4


# datasets ---------------

def test_make_dataset_layout(tiny_dataset):
    assert [len(getattr(tiny_dataset, s)) for s in SPLITS] == [2, 1, 1]
    assert tiny_dataset.train.n == 9
    assert tiny_dataset.train.seeds == [5, 6]
    assert tiny_dataset.val.seeds == [1000005]
    assert tiny_dataset.test.seeds == [2000005]
    assert [s.name for s in tiny_dataset.train] == ['train-0000', 'train-0001']
    for sample in list(tiny_dataset.train) + list(tiny_dataset.val):
        assert sample.relative_residual() < 1e-10
    test = tiny_dataset.test.samples[0]
    assert test.x is None
    assert np.array_equal(test.b, rhs_source(3))


def test_make_dataset_is_deterministic(tiny_dataset):
    again = make_dataset(3, COUNTS, seed_base=5, jobs=2)
    for split in SPLITS:
        for a, b in zip(getattr(tiny_dataset, split), getattr(again, split)):
            assert np.array_equal(a.A.values, b.A.values)
            assert np.array_equal(a.b, b.b)
            if a.x is not None:
                assert np.array_equal(a.x, b.x)


def test_split_seeds_are_disjoint():
    seeds = [sample_seed(0, split, i) for split in SPLITS for i in range(500)]
    assert len(set(seeds)) == len(seeds)


def test_make_dataset_checks_counts():
    with pytest.raises(ConfigError):
        make_dataset(3, {'train': 0, 'val': 1, 'test': 1})
    with pytest.raises(ConfigError):
        make_dataset(3, {'train': 1, 'val': 1})


def test_save_load_round_trip(tmpdir, tiny_dataset):
    directory = str(tmpdir.join('data'))
    save_dataset(tiny_dataset, directory, config={'generate': {'grid': 3}})
    manifest = read_json(directory + '/manifest.json')
    assert manifest['grid'] == 3
    assert manifest['counts'] == COUNTS
    assert manifest['config'] == {'generate': {'grid': 3}}
    assert manifest['splits']['train'][0]['kappa'] is None
    assert manifest['splits']['test'][0]['kappa'] > 1.0
    assert manifest['splits']['test'][0]['supervised'] is False

    loaded = load_dataset(directory)
    for split in SPLITS:
        for a, b in zip(getattr(tiny_dataset, split), getattr(loaded, split)):
            assert a.name == b.name
            assert a.seed == b.seed
            assert b.A.pattern() == a.A.pattern()
            assert np.array_equal(b.A.values, a.A.values)
            assert np.array_equal(b.b, a.b)
            assert (b.x is None) == (a.x is None)
    sample = loaded.train.samples[0]
    assert np.linalg.norm(spmv(sample.A, sample.x) - sample.b) < \
        1e-10 * np.linalg.norm(sample.b)


def test_save_refuses_overwrite(tmpdir, tiny_dataset):
    directory = str(tmpdir.join('data'))
    save_dataset(tiny_dataset, directory)
    with pytest.raises(DataIOError):
        save_dataset(tiny_dataset, directory)
    save_dataset(tiny_dataset, directory, overwrite=True)


def test_load_manifest_missing(tmpdir):
    with pytest.raises(DataIOError):
        load_manifest(str(tmpdir))


def test_condition_number():
    assert condition_number(identity(4)) == pytest.approx(1.0)
    assert condition_number(identity(4), dense_cap=3) is None


def test_condition_number_report(tiny_dataset):
    kappas = condition_number_report(tiny_dataset.test)
    assert len(kappas) == 1
    assert kappas[0] > 1.0
    assert condition_number_report(tiny_dataset.test, dense_cap=3) == [None]
