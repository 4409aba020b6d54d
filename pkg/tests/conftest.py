import numpy as np
import pytest

from esarb import MarketSnapshot, ScenarioSet, TradableLeg, WeightedSample


def random_sample(rng, size=None, nonuniform=True):
    n = int(rng.integers(2, 50)) if size is None else size
    values = rng.normal(scale=rng.uniform(0.5, 3.0), size=n)
    if nonuniform:
        weights = rng.random(n) + 1e-3
    else:
        weights = np.ones(n)
    weights = weights / weights.sum()
    return WeightedSample(values, weights)


def random_market(rng, n_scenarios=None, n_legs=None, upper_bound=1.0):
    n_s = int(rng.integers(3, 40)) if n_scenarios is None else n_scenarios
    n_l = int(rng.integers(1, 6)) if n_legs is None else n_legs
    points = np.sort(rng.normal(size=n_s))
    points = points + np.arange(n_s) * 1e-9  # nudge apart in case of ties
    weights = rng.random(n_s) + 1e-3
    weights = weights / weights.sum()
    scen = ScenarioSet(points, weights)
    legs = tuple(
        TradableLeg(f"leg{i}", float(rng.normal()), rng.normal(size=n_s))
        for i in range(n_l)
    )
    return MarketSnapshot(scen, legs, spot=1.0, upper_bound=upper_bound)


@pytest.fixture
def rng():
    return np.random.default_rng(20260815)
