"""Shared fixtures: the baseline worked example and a pool of randomized instances."""

from __future__ import annotations

import numpy as np
import pytest

from driftq.model import ProblemInstance, build_instance

# Baseline example used throughout: four promotion activities, cheap ones
# first, noise sigma^2 = 4, holding cost 3, idleness price 100.
BASELINE = dict(
    theta0=-1.5,
    mu=(0.5, 0.7, 0.175, 2.625),
    c=(5.0, 8.0, 20.0, 50.0),
    sigma2=4.0,
    h=3.0,
    p=100.0,
)


@pytest.fixture(scope="session")
def baseline() -> ProblemInstance:
    return build_instance(**BASELINE)


def make_instance_pool(n: int = 25, seed: int = 20260819) -> list[ProblemInstance]:
    """n solvable instances: 23 randomized ladders plus two with an exact
    zero drift on the ladder (one interior, one at the top), all with
    p > 1.3 c_K so every threshold is strictly positive."""
    pool = [
        # theta ladder (-1, 0, 1): zero drift in the interior
        build_instance(-1.0, (1.0, 1.0), (1.0, 3.0), 2.0, 1.0, 6.0),
        # theta ladder (-1.5, -0.75, 0): zero drift at the top
        build_instance(-1.5, (0.75, 0.75), (0.8, 2.0), 1.5, 0.8, 4.0),
    ]
    rng = np.random.default_rng(seed)
    while len(pool) < n:
        k = int(rng.integers(1, 6))
        theta0 = -float(rng.uniform(0.4, 2.5))
        mu = rng.uniform(0.2, 1.2, size=k)
        short = -theta0 - float(np.sum(mu))
        if short >= 0:
            # keep the top of the ladder strictly positive
            mu[-1] += short + float(rng.uniform(0.2, 1.0))
        c = np.cumsum(rng.uniform(0.3, 2.0, size=k)) + float(rng.uniform(0.2, 1.5))
        sigma2 = float(rng.uniform(0.5, 4.0))
        h = float(rng.uniform(0.5, 3.0))
        p = float(c[-1]) * float(rng.uniform(1.3, 3.0))
        pool.append(build_instance(theta0, mu, c, sigma2, h, p))
    return pool


@pytest.fixture(scope="session")
def instance_pool() -> list[ProblemInstance]:
    return make_instance_pool()
