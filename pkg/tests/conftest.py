import numpy as np
import pytest

from slrm.apps import _selection_matrix
from slrm.objective import assemble
from slrm.structure import hankel_spec


def random_hankel_problem(rng, j=None, k=None, lam=0.7, mu=0.3, frac=1.0):
    """Small Hankel recovery problem with a random observed subset."""
    j = int(rng.integers(2, 6)) if j is None else j
    k = int(rng.integers(2, 6)) if k is None else k
    spec = hankel_spec(j, k)
    n_obs = max(1, int(round(frac * spec.n_params)))
    idx = np.sort(rng.choice(spec.n_params, size=n_obs, replace=False))
    target = rng.standard_normal(n_obs)
    return assemble(spec, _selection_matrix(idx, spec.n_params), target, lam, mu)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
