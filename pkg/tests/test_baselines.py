import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from cellmarket.baselines import (
    AssignmentResult,
    MatchingInstance,
    SizeError,
    assign_mrp,
    assign_mwm,
    assign_nsbs,
    assign_rnd,
    brute_force_optimum,
    brute_force_realized,
    hungarian,
    iter_owner_vectors,
    pareto_check,
    score_assignment,
)
from cellmarket.market import Allocation, Economy, EconomyError
from cellmarket.tatonnement import AuctionConfig, run_auction

from conftest import random_discrete_economy


def permutation_max(W):
    """Best one-to-one matching weight by enumerating injections."""
    W = np.asarray(W)
    r, c = W.shape
    if r <= c:
        return max(sum(W[i, cols[i]] for i in range(r)) for cols in itertools.permutations(range(c), r))
    return permutation_max(W.T)


def test_mrp_examples():
    assert assign_mrp(np.array([[0.1], [0.9], [0.3], [0.2]])).owners().tolist() == [1]
    assert assign_mrp(np.full((3, 1), 0.4)).owners().tolist() == [0]


def test_mrp_secvb_first_user(secvb):
    net = secvb.network_scenario()
    assert assign_mrp(net.channel_gains).owners()[0] == 3


def test_nsbs_examples():
    assert assign_nsbs(np.array([[0.2, 0.7, 0.1]])).owners().tolist() == [0, 0, 0]
    assert assign_nsbs(np.ones((3, 4))).owners().tolist() == [0, 0, 0, 0]


def test_mrp_bounds_nsbs_on_secvb(secvb):
    from cellmarket.wireless import realized_utilities

    net = secvb.network_scenario()
    b = net.beliefs
    mrp = score_assignment(net, b, assign_mrp(net.channel_gains))
    nsbs = score_assignment(net, b, assign_nsbs(net.path_gain()))
    assert mrp.expected_utility >= nsbs.expected_utility
    X = np.asarray(mrp.assignment, dtype=float)
    assert mrp.expected_utility == pytest.approx(float((b * realized_utilities(net, X)).sum()))


def test_hungarian_examples():
    W = np.ones((3, 3)) + 9 * np.eye(3)
    pairs, total = hungarian(MatchingInstance(W))
    assert sorted(pairs) == [(0, 0), (1, 1), (2, 2)] and total == 30
    R = np.array([[1.0, 5.0, 3.0], [4.0, 2.0, 6.0]])
    pairs, total = hungarian(MatchingInstance(R))
    assert total == permutation_max(R) == 11


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_hungarian_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    r, c = int(rng.integers(1, 6)), int(rng.integers(1, 6))
    W = rng.uniform(0, 10, (r, c))
    _, total = hungarian(MatchingInstance(W))
    assert total == pytest.approx(permutation_max(W), abs=1e-9)


def test_matching_rejects_nonfinite():
    with pytest.raises(ValueError):
        MatchingInstance(np.array([[np.inf]]))


def test_mwm_rounds_assign_everyone():
    rng = np.random.default_rng(3)
    H = rng.uniform(0.1, 1, (4, 10))
    full = assign_mwm(H)
    assert np.all(full.assignment.sum(axis=0) == 1)
    part = assign_mwm(H, "single")
    assert part.assignment.sum() == 4 and not part.complete
    # the first round of the repeated mode is the single matching
    assert np.all(full.assignment[part.assignment == 1] == 1)
    with pytest.raises(ValueError):
        assign_mwm(H, "bogus")


def test_rnd_determinism_and_single_sbs():
    a, b = assign_rnd(4, 10, 7), assign_rnd(4, 10, 7)
    assert np.array_equal(a.assignment, b.assignment)
    assert not np.array_equal(assign_rnd(4, 10, 7).assignment, assign_rnd(4, 10, 8).assignment)
    assert assign_rnd(1, 5, 0).owners().tolist() == [0] * 5


def test_rnd_uniform_over_seeds():
    N, M = 4, 3
    counts = np.zeros((N, M))
    for seed in range(10_000):
        counts[assign_rnd(N, M, seed).owners(), np.arange(M)] += 1
    for m in range(M):
        expected = 10_000 / N
        assert np.all(np.abs(counts[:, m] - expected) <= 3 * np.sqrt(expected * (1 - 1 / N)))
        assert chisquare(counts[:, m]).pvalue > 1e-4


def test_assignment_result_validation():
    with pytest.raises(EconomyError):
        AssignmentResult(np.array([[1, 1], [0, 1]]), "x")
    with pytest.raises(EconomyError):
        AssignmentResult(np.array([[0.5, 1], [0.5, 0]]), "x")


def test_owner_vectors_enumerate_in_order():
    rows = np.vstack(list(iter_owner_vectors(3, 2, chunk=4)))
    assert rows.tolist() == [list(t) for t in itertools.product(range(3), repeat=2)]


def test_brute_force_examples():
    e = Economy(np.array([[[0.3]], [[0.8]]]), [[1.0], [1.0]], [[[1.0]], [[0.0]]])
    alloc, value, _ = brute_force_optimum(e)
    assert alloc.values[:, 0, 0].tolist() == [0, 1] and value == pytest.approx(0.8)
    flat = Economy(np.full((3, 1, 4), 0.5), np.ones((3, 1)), np.full((3, 1, 4), 1 / 3))
    assert brute_force_optimum(flat)[1] == pytest.approx(4 * 0.5)


def test_brute_force_hand_enumeration():
    u = np.array([[[1.0, 2.0, 0.5]], [[1.5, 1.0, 0.7]]])
    e = Economy(u, [[1.0], [1.0]], np.full((2, 1, 3), 0.5))
    best = max(sum(u[o[m], 0, m] for m in range(3)) for o in itertools.product(range(2), repeat=3))
    assert brute_force_optimum(e, "state")[1] == pytest.approx(best)


def test_brute_force_size_error():
    e = Economy(np.ones((4, 1, 11)), np.ones((4, 1)), np.full((4, 1, 11), 0.25))
    with pytest.raises(SizeError):
        brute_force_optimum(e)


def test_realized_oracle_bounds_every_baseline(secvb):
    net = secvb.network_scenario()
    b = net.beliefs
    _, per_state = brute_force_realized(net, b)
    best = per_state.sum()
    for res in (assign_mrp(net.channel_gains), assign_nsbs(net.path_gain()), assign_mwm(net.channel_gains),
                assign_rnd(4, 10, 0)):
        assert score_assignment(net, b, res).expected_utility <= best + 1e-9


def test_brute_force_bounds_auction():
    rng = np.random.default_rng(21)
    for _ in range(15):
        e = random_discrete_economy(rng)
        result, _ = run_auction(e, AuctionConfig(max_iterations=5000))
        if result.converged:
            _, value, _ = brute_force_optimum(e)
            assert value >= result.expected_utilities.sum() - 1e-12


def test_pareto_example_two(example2):
    eq = np.zeros((2, 2, 2))
    eq[1, :, 0] = 1
    eq[0, :, 1] = 1
    ok, witness = pareto_check(example2, Allocation(eq))
    assert ok and witness is None
    swapped = np.zeros((2, 2, 2))
    swapped[0, :, 0] = 1
    swapped[1, :, 1] = 1
    ok, witness = pareto_check(example2, Allocation(swapped))
    assert not ok
    vals = [example2.expected_values(n) for n in range(2)]
    better = [v @ witness.row(n) for n, v in enumerate(vals)]
    before = [v @ Allocation(swapped).row(n) for n, v in enumerate(vals)]
    assert all(a >= b for a, b in zip(better, before)) and any(a > b for a, b in zip(better, before))


def test_pareto_brute_force_optimum_identical_beliefs():
    rng = np.random.default_rng(9)
    u = rng.uniform(0, 1, (2, 2, 3))
    e = Economy(u, np.full((2, 2), 0.5), np.full((2, 2, 3), 0.5))
    alloc, _, _ = brute_force_optimum(e)
    assert pareto_check(e, alloc)[0]


def test_pareto_single_consumer():
    e = Economy(np.array([[[0.4, 0.9]]]), [[1.0]], np.ones((1, 1, 2)))
    assert pareto_check(e, Allocation(np.ones((1, 1, 2))))[0]
