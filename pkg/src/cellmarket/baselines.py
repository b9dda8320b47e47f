"""Centralized association baselines and exhaustive oracles.

MRP   max average channel gain      NSBS  nearest SBS (max path gain)
MWM   Hungarian max-weight matching RND   uniform random association
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .market import Allocation, Economy, EconomyError
from .wireless import NetworkScenario, rate, realized_utilities

ENUMERATION_LIMIT = 1 << 21
CHUNK = 1 << 16


class SizeError(ValueError):
    """The instance is too large for exhaustive enumeration."""


@dataclass(frozen=True, eq=False)
class AssignmentResult:
    """N x M 0/1 association; every user belongs to exactly one SBS.

    ``state_utilities`` and ``expected_utility`` are filled in by
    :func:`score_assignment` once a scenario is known.
    """

    assignment: np.ndarray
    method: str
    state_utilities: Optional[np.ndarray] = None
    expected_utility: Optional[float] = None
    complete: bool = True

    def __post_init__(self):
        X = np.asarray(self.assignment)
        if X.ndim not in (2, 3) or not np.all((X == 0) | (X == 1)):
            raise EconomyError("assignment must be a 0/1 matrix")
        cols = X.sum(axis=0)
        if self.complete and not np.all(cols == 1):
            raise EconomyError("every user must be associated with exactly one SBS")
        if np.any(cols > 1):
            raise EconomyError("a user is associated with more than one SBS")

    def owners(self) -> np.ndarray:
        return np.argmax(self.assignment, axis=0)


def _from_owners(owners, N: int, method: str) -> AssignmentResult:
    owners = np.asarray(owners)
    X = (owners[None, :] == np.arange(N)[:, None]).astype(int)
    return AssignmentResult(X, method)


def assign_mrp(H) -> AssignmentResult:
    """Every user to the SBS with the largest average channel gain."""
    H = np.asarray(H, dtype=float)
    return _from_owners(np.argmax(H, axis=0), H.shape[0], "MRP")


def assign_nsbs(G) -> AssignmentResult:
    """Every user to the SBS with the largest path gain, i.e. least path loss.

    ``G`` follows the path-gain convention (larger means closer).
    """
    G = np.asarray(G, dtype=float)
    return _from_owners(np.argmax(G, axis=0), G.shape[0], "NSBS")


@dataclass(frozen=True)
class MatchingInstance:
    weights: np.ndarray
    maximize: bool = True

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or not np.all(np.isfinite(w)):
            raise ValueError("matching weights must be a finite 2-D matrix")
        object.__setattr__(self, "weights", w)


def hungarian(instance: MatchingInstance):
    """One-to-one optimal matching. Returns ``(pairs, total_weight)``."""
    rows, cols = linear_sum_assignment(instance.weights, maximize=instance.maximize)
    pairs = list(zip(rows.tolist(), cols.tolist()))
    return pairs, float(instance.weights[rows, cols].sum())


def assign_mwm(H, mode: str = "rounds") -> AssignmentResult:
    """Max-weight matching on the SBS-user gain graph.

    With more users than SBSs a single matching leaves users out. In
    ``rounds`` mode matched users are removed and the matching repeats until
    everyone is associated; ``single`` mode returns the partial matching.
    """
    H = np.asarray(H, dtype=float)
    N, M = H.shape
    owners = np.full(M, -1)
    remaining = np.arange(M)
    while remaining.size:
        pairs, _ = hungarian(MatchingInstance(H[:, remaining]))
        for n, j in pairs:
            owners[remaining[j]] = n
        remaining = np.flatnonzero(owners < 0)
        if mode == "single":
            break
        if mode != "rounds":
            raise ValueError(f"unknown MWM mode {mode!r}")
    X = (owners[None, :] == np.arange(N)[:, None]).astype(int)
    return AssignmentResult(X, "MWM", complete=mode == "rounds")


def assign_rnd(N: int, M: int, seed: int) -> AssignmentResult:
    rng = np.random.default_rng(seed)
    return _from_owners(rng.integers(0, N, size=M), N, "RND")


def iter_owner_vectors(N: int, length: int, chunk: int = CHUNK) -> Iterator[np.ndarray]:
    """All N**length owner vectors in lexicographic order, in chunks.

    Row ``i`` of the concatenation is the base-N expansion of ``i`` with the
    first position most significant.
    """
    total = N**length
    powers = N ** np.arange(length - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        yield (idx[:, None] // powers[None, :]) % N


def _check_size(N: int, length: int, limit: int) -> None:
    if N**length > limit:
        raise SizeError(f"{N}**{length} = {N**length} candidate assignments exceed the limit {limit}")


def brute_force_optimum(economy: Economy, objective: str = "expected", limit: int = ENUMERATION_LIMIT):
    """Best association by enumerating every column assignment, state by state.

    ``objective="state"`` maximizes the plain aggregate utility of each
    state; ``"expected"`` weights SBS n's utility in state s by a_n^(s)
    and sums the per-state optima. Returns ``(Allocation, value, per_state)``.
    """
    if economy.divisible:
        raise EconomyError("brute force works on discrete economies only")
    if objective not in ("state", "expected"):
        raise ValueError(f"unknown objective {objective!r}")
    N, S, M = economy.N, economy.S, economy.M
    _check_size(N, M, limit)
    X = np.zeros((N, S, M))
    per_state = np.zeros(S)
    cols = np.arange(M)
    for s in range(S):
        w = economy.utilities[:, s, :]
        if objective == "expected":
            w = w * economy.beliefs[:, s : s + 1]
        best, best_owner = -np.inf, None
        for owners in iter_owner_vectors(N, M):
            vals = w[owners, cols].sum(axis=1)
            i = int(np.argmax(vals))
            if vals[i] > best:
                best, best_owner = float(vals[i]), owners[i]
        X[best_owner, s, cols] = 1.0
        per_state[s] = best
    return Allocation(X), float(per_state.sum()), per_state


def brute_force_realized(scenario: NetworkScenario, beliefs=None, limit: int = ENUMERATION_LIMIT):
    """Exhaustive optimum of the true (settled) utilities, per state.

    Unlike :func:`brute_force_optimum` this scores assignments with the
    top-alpha cut (fixed-power) and the real user count (equal-power).
    With ``beliefs`` each SBS's utility in state s is weighted by a_n^(s).
    Returns ``(owners (S, M), per_state_value)``.
    """
    N, M, S = scenario.N, scenario.M, scenario.S
    _check_size(N, M, limit)
    tx = scenario.transmission
    best_val = np.full(S, -np.inf)
    best_owner = np.zeros((S, M), dtype=int)
    for s in range(S):
        P = scenario.available_power(s)
        weight = np.ones(N) if beliefs is None else np.asarray(beliefs)[:, s]
        if tx.kind == "fixed-power":
            r = scenario.rates(np.full(N, tx.fixed_power))
            alpha = scenario.serve_limit(s)
        elif tx.kind == "full-power":
            r = scenario.rates(P)
        for owners in iter_owner_vectors(N, M):
            total = np.zeros(owners.shape[0])
            for n in range(N):
                mask = owners == n
                if tx.kind == "fixed-power":
                    if alpha[n] < 1:
                        continue
                    vals = np.where(mask, r[n][None, :], 0.0)
                    vals = -np.sort(-vals, axis=1)
                    u = vals[:, : alpha[n]].sum(axis=1)
                elif tx.kind == "full-power":
                    u = (mask * r[n][None, :]).sum(axis=1)
                else:
                    load = mask.sum(axis=1)
                    share = np.divide(P[n], load, out=np.zeros(load.shape), where=load > 0)
                    rr = rate(
                        share[:, None] * scenario.antenna_gain,
                        scenario.channel_gains[n][None, :],
                        scenario.noise_interference[n][None, :],
                        scenario.log_base,
                    )
                    u = (mask * rr).sum(axis=1)
                total += weight[n] * u
            i = int(np.argmax(total))
            if total[i] > best_val[s]:
                best_val[s] = total[i]
                best_owner[s] = owners[i]
    return best_owner, best_val


def pareto_check(economy: Economy, allocation: Allocation, limit: int = ENUMERATION_LIMIT, tol: float = 1e-12):
    """Search every feasible allocation for a Pareto improvement.

    Only allocations that hand out every state-contingent unit are
    enumerated: utilities are nonnegative, so any dominating allocation
    that leaves a unit unassigned is itself dominated after giving that
    unit to anyone. Returns ``(is_optimal, witness)`` where ``witness`` is a
    dominating :class:`Allocation` or ``None``.
    """
    if economy.divisible:
        raise EconomyError("pareto_check enumerates discrete economies only")
    N, K = economy.N, economy.K
    _check_size(N, K, limit)
    vals = np.stack([economy.expected_values(n) for n in range(N)])
    cur = np.einsum("nk,nk->n", vals, allocation.rows())
    slack = tol * np.maximum(1.0, np.abs(cur))
    ks = np.arange(K)
    for owners in iter_owner_vectors(N, K):
        util = np.stack([(owners == n) @ vals[n] for n in range(N)], axis=1)
        weak = np.all(util >= cur - slack, axis=1)
        strict = np.any(util > cur + slack, axis=1)
        hit = np.flatnonzero(weak & strict)
        if hit.size:
            rows = np.zeros((N, K))
            rows[owners[hit[0]], ks] = 1.0
            return False, Allocation.from_rows(rows, economy.S, economy.M)
    return True, None


def score_assignment(scenario: NetworkScenario, beliefs, result: AssignmentResult) -> AssignmentResult:
    """Attach realized per-state aggregate and belief-weighted expected utility."""
    U = realized_utilities(scenario, result.assignment)
    state_u = U.sum(axis=0)
    expected = float(np.sum(np.asarray(beliefs) * U))
    return AssignmentResult(result.assignment, result.method, state_u, expected, result.complete)
