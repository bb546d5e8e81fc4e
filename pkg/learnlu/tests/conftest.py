import numpy as np
import pytest
from hypothesis import settings

from ..sparse import csr_from_coo, from_dense

settings.register_profile('fast', max_examples=25, deadline=None)
settings.load_profile('fast')

COATES_DENSE = np.array([
    [2.4, 0.0, 2.2],
    [0.5, 3.2, 0.0],
    [2.1, 1.7, 0.0],
])


@pytest.fixture
def coates_matrix():
    "Non-symmetric 3 x 3 example whose last diagonal entry is not stored."
    return csr_from_coo([(0, 0, 2.4), (0, 2, 2.2), (1, 0, 0.5),
                         (1, 1, 3.2), (2, 0, 2.1), (2, 1, 1.7)], 3)


def random_dominant(n, seed, density=0.3):
    """
    Random sparse matrix with a dominant diagonal, hence well conditioned
    and safe for ILU(0).
    """
    rng = np.random.default_rng(seed)
    dense = rng.standard_normal((n, n)) * (rng.random((n, n)) < density)
    dense[np.diag_indices(n)] = np.abs(dense).sum(axis=1) + 1.0 + rng.random(n)
    return from_dense(dense)


@pytest.fixture
def dominant_matrix():
    return random_dominant(12, seed=3)
