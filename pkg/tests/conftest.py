import numpy as np
import pytest

from temvip import (
    BinaryOutcome,
    ContinuousOutcome,
    ObservedDataset,
    SurvivalOutcome,
    TimeGrid,
)


@pytest.fixture
def small_continuous():
    rng = np.random.default_rng(101)
    n, p = 250, 6
    W = rng.normal(size=(n, p))
    A = (rng.random(n) < 0.5).astype(int)
    y = 0.5 + 1.2 * A * W[:, 0] - 0.7 * W[:, 1] + rng.normal(scale=0.8, size=n)
    return ObservedDataset(W, A, ContinuousOutcome(y))


@pytest.fixture
def small_binary():
    rng = np.random.default_rng(202)
    n, p = 300, 5
    W = rng.normal(size=(n, p))
    pa = 1.0 / (1.0 + np.exp(-0.4 * W[:, 0]))
    A = (rng.random(n) < pa).astype(int)
    py = 1.0 / (1.0 + np.exp(-(0.2 - 0.5 * A + 0.8 * A * W[:, 0] + 0.3 * W[:, 1])))
    y = (rng.random(n) < py).astype(int)
    return ObservedDataset(W, A, BinaryOutcome(y))


def make_survival_dataset(seed=303, n=260, p=5, t_max=6, cens_rate=0.08):
    rng = np.random.default_rng(seed)
    W = rng.normal(size=(n, p))
    A = (rng.random(n) < 0.5).astype(int)
    lam = 1.0 / (1.0 + np.exp(-(-1.1 - 0.3 * A + 0.5 * A * W[:, 0] - 0.25 * W[:, 1])))
    T = rng.geometric(np.clip(lam, 1e-6, 1 - 1e-6))
    if cens_rate > 0:
        C = np.minimum(rng.geometric(cens_rate, size=n), t_max)
    else:
        C = np.full(n, t_max)
    time = np.minimum(T, C)
    censored = (T > C).astype(int)
    return ObservedDataset(W, A, SurvivalOutcome(time, censored, TimeGrid(t_max)))


@pytest.fixture
def small_survival():
    return make_survival_dataset()
