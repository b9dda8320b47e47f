import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cellmarket.market import (
    Allocation,
    DimensionError,
    Economy,
    EconomyError,
    StateSpace,
    budget,
    excess_demand,
    expected_utility,
    flat_index,
    is_feasible,
    market_clears,
    net_benefit,
    unflat_index,
)


def one_consumer(u, p=None):
    u = np.asarray(u, dtype=float)
    return Economy(u[None, None, :], [[1.0]], np.ones((1, 1, u.size)))


def test_flat_layout_is_state_major():
    assert flat_index(0, 1, 3) == 3
    assert unflat_index(4, 3) == (1, 1)
    e = Economy(np.arange(12, dtype=float).reshape(2, 2, 3), [[0.5, 0.5]] * 2, np.full((2, 2, 3), 0.5))
    assert e.K == 6
    # u[0, s, m] = 3 s + m, weighted by 0.5
    assert e.expected_values(0).tolist() == [0.0, 0.5, 1.0, 1.5, 2.0, 2.5]


def test_expected_utility_example_two(example2):
    x = np.array([0, 1, 0, 1.0])
    assert expected_utility(example2, 0, x) == pytest.approx(0.35 + 0.544)
    coeffs = example2.expected_values(0)
    assert coeffs == pytest.approx([0.02, 0.35, 0.016, 0.544])
    assert expected_utility(example2, 0, np.zeros(4)) == 0.0


def test_expected_utility_matches_direct_summation():
    rng = np.random.default_rng(3)
    u = rng.uniform(0, 2, (2, 3, 4))
    a = rng.dirichlet(np.ones(3), 2)
    e = Economy(u, a, np.full((2, 3, 4), 0.5))
    x = rng.uniform(0, 1, 12)
    direct = 0.0
    for s in range(3):
        for m in range(4):
            direct += a[1, s] * u[1, s, m] * x[s * 4 + m]
    assert expected_utility(e, 1, x) == pytest.approx(direct, rel=1e-14)


def test_identical_states_reduce_to_single_state():
    u = np.array([[[1.5, 0.5], [1.5, 0.5]]])
    e = Economy(u, [[0.5, 0.5]], np.ones((1, 2, 2)))
    assert expected_utility(e, 0, np.ones(4)) == pytest.approx(2.0)


def test_expected_utility_dimension_error(example2):
    with pytest.raises(DimensionError):
        expected_utility(example2, 0, np.zeros(3))
    with pytest.raises(DimensionError):
        expected_utility(example2, 5, np.zeros(4))


def test_net_benefit_examples(example2):
    assert net_benefit(example2, 1, 0, [1, 0], [1.0, 1.0]) == pytest.approx(1.20)
    assert net_benefit(example2, 1, 0, [0, 0], [1.0, 1.0]) == 0.0
    e = one_consumer([0.5])
    assert net_benefit(e, 0, 0, [1], [0.9]) == pytest.approx(-0.4)


def test_budget(example1):
    assert budget(example1, 0, [2.0, 3.0]) == pytest.approx(0.5 * 2 + 0.3 * 3)
    assert budget(example1, 0, [0.0, 0.0]) == 0.0
    q = np.zeros((2, 1, 2))
    q[0, 0] = [0.5, 0.3]
    q[1, 0] = [0.5, 0.7]
    e = Economy(np.ones((2, 1, 2)), [[1.0], [1.0]], q)
    assert budget(e, 0, [1.0, 1.0]) == pytest.approx(0.8)


def test_excess_demand(example2):
    q = np.stack([example2.endowment_vector(n) for n in range(2)])
    assert np.all(excess_demand(example2, np.ones(4), q) == 0)
    d = np.zeros((2, 4))
    d[:, 0] = 1
    z = excess_demand(example2, np.ones(4), d)
    assert z[0] == 1.0
    with pytest.raises(DimensionError):
        excess_demand(example2, np.ones(4), np.zeros((2, 3)))


def test_feasibility(example2):
    assert is_feasible(example2, Allocation(example2.endowments))
    x = np.array(example2.endowments)
    x[1, 0, 0] = 1.0
    assert not is_feasible(example2, Allocation(x))


def test_random_normalized_allocations_are_feasible():
    rng = np.random.default_rng(5)
    e = Economy(np.ones((3, 2, 2)), np.full((3, 2), 0.5), np.full((3, 2, 2), 1 / 3), divisible=True)
    for _ in range(50):
        x = rng.uniform(0, 1, (3, 2, 2))
        x /= x.sum(axis=0, keepdims=True)
        assert is_feasible(e, Allocation(x, divisible=True))


def test_market_clears():
    assert market_clears(np.zeros(3))
    assert market_clears([0.0005, 0.0], 1e-3)
    assert not market_clears([0.0005, 0.0], 1e-4)
    assert not market_clears([1.0, -1.0], mode="discrete")
    assert market_clears([0.0, 0.0], mode="discrete")
    with pytest.raises(ValueError):
        market_clears([0.0], 0.0)


def test_invariants_rejected():
    with pytest.raises(EconomyError, match="consumer 1"):
        Economy(np.ones((2, 2, 1)), [[0.5, 0.5], [0.5, 0.4]], np.full((2, 2, 1), 0.5))
    with pytest.raises(EconomyError, match="sum to"):
        Economy(np.ones((2, 1, 1)), [[1.0], [1.0]], np.full((2, 1, 1), 0.4))
    with pytest.raises(EconomyError, match="strictly positive"):
        Economy(np.ones((2, 1, 1)), [[1.0], [1.0]], [[[1.0]], [[0.0]]], divisible=True)
    with pytest.raises(EconomyError):
        Economy(-np.ones((1, 1, 1)), [[1.0]], [[[1.0]]])
    with pytest.raises(DimensionError):
        Economy(np.ones((2, 1, 1)), [[1.0]], np.full((2, 1, 1), 0.5))


def test_allocation_modes():
    with pytest.raises(EconomyError):
        Allocation(np.full((1, 1, 1), 0.5))
    Allocation(np.full((1, 1, 1), 0.5), divisible=True)
    with pytest.raises(EconomyError):
        Allocation(np.full((1, 1, 1), 1.5), divisible=True)


def test_state_space_product_order():
    sp = StateSpace.product([[1, 2], [1, 2]])
    assert sp.states.tolist() == [[1, 1], [1, 2], [2, 1], [2, 2]]
    assert StateSpace.product([[3], [4]]).S == 1
    with pytest.raises(EconomyError):
        StateSpace.product([[1], []])
    with pytest.raises(EconomyError):
        StateSpace.explicit([[1, 2], [1, 2]])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_linearity_and_monotonicity(seed):
    rng = np.random.default_rng(seed)
    N, S, M = 2, int(rng.integers(1, 4)), int(rng.integers(1, 4))
    e = Economy(rng.uniform(0, 3, (N, S, M)), rng.dirichlet(np.ones(S), N), np.full((N, S, M), 0.5), True)
    K = S * M
    x = rng.uniform(0, 1, K)
    mask = rng.random(K) < 0.5
    a, b = np.where(mask, x, 0), np.where(mask, 0, x)
    assert expected_utility(e, 0, a + b) == pytest.approx(expected_utility(e, 0, a) + expected_utility(e, 0, b))
    smaller = x * rng.uniform(0, 1, K)
    assert expected_utility(e, 1, smaller) <= expected_utility(e, 1, x) + 1e-15


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 100), st.integers(0, 2**31 - 1))
def test_budget_scales_with_prices(c, seed):
    rng = np.random.default_rng(seed)
    e = Economy(np.ones((2, 2, 2)), np.full((2, 2), 0.5), rng.dirichlet([1, 1], (2, 2)).transpose(2, 0, 1), True)
    p = rng.uniform(0, 1, 4)
    assert math.isclose(budget(e, 0, c * p), c * budget(e, 0, p), rel_tol=1e-12)
