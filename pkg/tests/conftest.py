import numpy as np
import pytest

from tabsurv.dataset import from_arrays
from tabsurv.timegrid import TimeGrid


def random_simplex(rng, n, m):
    return rng.dirichlet(np.ones(m), size=n)


def toy_survival(n=120, d=3, censor=0.3, seed=0):
    """Log-linear event times with a random censoring flag."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d))
    score = x @ np.linspace(1.0, 0.2, d)
    times = np.exp(0.5 * score + 0.3 * rng.standard_normal(n)) + 0.01
    events = (rng.random(n) >= censor).astype(np.int64)
    events[:3] = 1
    return from_arrays(x, times, events)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid4():
    return TimeGrid(np.array([1.0, 2.0, 3.0, 4.0]))


@pytest.fixture
def toy():
    return toy_survival()
