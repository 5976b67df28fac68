import numpy as np
import pytest

from retire_dual import solve, validate
from retire_dual.errors import ParameterError

P0 = dict(r=0.02, mu=0.06, sigma=0.2, rho=0.03, gamma=2.0, delta=0.03, y1=1.0, y2=0.0)


def p0(L=1.2, **changes):
    raw = dict(P0, support={"L": L})
    raw.update(changes)
    return validate(raw)


def random_params(rng: np.random.Generator, max_tries: int = 100):
    """One valid parameter set drawn from a broad box; rejects draws with K <= 0."""
    for _ in range(max_tries):
        gamma = float(rng.choice([rng.uniform(0.3, 0.9), rng.uniform(1.1, 8.0)]))
        y1 = float(rng.uniform(0.5, 2.0))
        raw = dict(
            r=float(rng.uniform(0.005, 0.06)),
            sigma=float(rng.uniform(0.1, 0.4)),
            rho=float(rng.uniform(0.005, 0.08)),
            gamma=gamma,
            delta=float(rng.uniform(0.005, 0.1)),
            y1=y1,
            y2=float(rng.uniform(0.0, 0.8)) * y1,
            support={"L": float(rng.uniform(0.1, 3.0))},
        )
        raw["mu"] = raw["r"] + raw["sigma"] * float(rng.uniform(0.1, 0.5))
        try:
            return validate(raw)
        except ParameterError:
            continue
    raise RuntimeError("no valid draw")


@pytest.fixture(scope="session")
def feasible():
    return solve(p0(1.2))


@pytest.fixture(scope="session")
def delay():
    return solve(p0(0.5))


@pytest.fixture(scope="session")
def knife():
    return solve(p0(1.0))
