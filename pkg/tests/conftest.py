import itertools

import numpy as np
import pytest

from cellmarket.market import Economy
from cellmarket.scenario import load_scenario


def random_discrete_economy(rng, max_n=3, max_m=4, max_s=3):
    """Random discrete economy: U(0,1) utilities, Dirichlet beliefs, one owner per unit."""
    N = int(rng.integers(2, max_n + 1))
    M = int(rng.integers(1, max_m + 1))
    S = int(rng.integers(1, max_s + 1))
    u = rng.uniform(0, 1, (N, S, M))
    a = rng.dirichlet(np.ones(S), N)
    owner = rng.integers(0, N, (S, M))
    q = (owner[None] == np.arange(N)[:, None, None]).astype(float)
    return Economy(u, a, q)


def exhaustive_knapsack(values, weights, capacity, rtol=1e-12):
    """Max value over all 2^K subsets; independent of the package solver."""
    best = 0.0
    K = len(values)
    for sel in itertools.product((0, 1), repeat=K):
        w = sum(wi for wi, s in zip(weights, sel) if s)
        if w <= capacity * (1 + rtol):
            best = max(best, sum(vi for vi, s in zip(values, sel) if s))
    return best


@pytest.fixture
def example1():
    return load_scenario("example1").build()


@pytest.fixture
def example2():
    return load_scenario("example2").build()


@pytest.fixture
def example3():
    return load_scenario("example3").build()


@pytest.fixture(scope="session")
def secvb():
    return load_scenario("secV_B")


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line; the terminal summary prints them all."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def record(number, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
        lines.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)


def pytest_addoption(parser):
    parser.addoption(
        "--auction-cap", type=int, default=20_000,
        help="round cap for the random-economy equilibrium sweep; 1000000 runs the full budget (hours on one core)",
    )
