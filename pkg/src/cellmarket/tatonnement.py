"""Walrasian auctioneer: announce prices, collect demands, adjust, repeat."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .demand import Bundle, demand
from .market import (
    DEFAULT_CLEARING_TOL,
    Allocation,
    DimensionError,
    Economy,
    check_prices,
    excess_demand,
    expected_utility,
    market_clears,
    net_benefit,
)

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 1e-4
DEFAULT_INITIAL_PRICE = 1e-8
DEFAULT_MAX_ITERATIONS = 10_000_000


@dataclass(frozen=True)
class AuctionConfig:
    alpha: float = DEFAULT_ALPHA
    initial_prices: Optional[tuple[float, ...]] = None
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    clearing_tolerance: float = DEFAULT_CLEARING_TOL
    record_every: int = 1
    # auction each state's market on its own; only sound when budgets do
    # not couple states (each consumer's wealth is state-separable)
    independent_states: bool = False

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha!r}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.clearing_tolerance > 0:
            raise ValueError("clearing_tolerance must be > 0")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")

    def start_prices(self, K: int) -> np.ndarray:
        if self.initial_prices is None:
            return np.full(K, DEFAULT_INITIAL_PRICE)
        p = np.asarray(self.initial_prices, dtype=float)
        if p.shape == ():
            return np.full(K, float(p))
        if p.shape != (K,):
            raise DimensionError(f"initial_prices: expected {K} entries, got {p.shape}")
        return p.copy()


@dataclass
class AuctionTrace:
    """Per-iteration prices, demands and excess demand.

    ``outcome`` is ``converged``, ``iteration-limit``, or ``stalled`` (the
    price update left every price unchanged while the market had not
    cleared, so further rounds would repeat forever).

    ``iterations[i]`` is the index of the auction round recorded in row i;
    with ``record_every > 1`` rows are thinned but the final round is
    always kept.
    """

    iterations: list = field(default_factory=list)
    prices: list = field(default_factory=list)
    demands: list = field(default_factory=list)
    excess: list = field(default_factory=list)
    outcome: str = "iteration-limit"
    iteration_count: int = 0
    dims: tuple = ()  # (N, S, M) of the economy, set by run_auction

    def record(self, t, p, d, z):
        self.iterations.append(t)
        self.prices.append(np.array(p, dtype=float))
        self.demands.append(np.array(d, dtype=float))
        self.excess.append(np.array(z, dtype=float))

    def __len__(self):
        return len(self.iterations)

    @property
    def converged(self) -> bool:
        return self.outcome == "converged"

    def price_matrix(self) -> np.ndarray:
        return np.vstack(self.prices)

    def excess_matrix(self) -> np.ndarray:
        return np.vstack(self.excess)


@dataclass(frozen=True, eq=False)
class EquilibriumResult:
    allocation: Allocation
    prices: np.ndarray
    expected_utilities: np.ndarray
    state_utilities: np.ndarray  # (S,) aggregate gross utility per state
    converged: bool
    iterations: int


def price_step_divisible(prices, excess, alpha: float) -> np.ndarray:
    """P + alpha * z, clamped at zero."""
    p = np.asarray(prices, dtype=float)
    z = np.asarray(excess, dtype=float)
    if p.shape != z.shape:
        raise DimensionError(f"prices {p.shape} and excess {z.shape} differ")
    return np.maximum(p + alpha * z, 0.0)


def price_step_indivisible(prices, excess, alpha: float) -> np.ndarray:
    """Raise by alpha every price whose good is in strict excess demand."""
    p = np.asarray(prices, dtype=float)
    z = np.asarray(excess, dtype=float)
    if p.shape != z.shape:
        raise DimensionError(f"prices {p.shape} and excess {z.shape} differ")
    return p + alpha * (z > 0)


class _DemandCache:
    """Reuses a consumer's discrete demand when no relevant price moved.

    Raising the price of an item the consumer neither holds in its bundle
    nor owns leaves its budget unchanged and only removes options, so the
    previous (lexicographically first optimal) bundle stays the answer.
    """

    def __init__(self, economy: Economy):
        self.economy = economy
        self.prices = None
        self.bundles: list[Optional[Bundle]] = [None] * economy.N
        self.owned = [economy.endowment_vector(n) > 0 for n in range(economy.N)]

    def get(self, prices: np.ndarray) -> list[Bundle]:
        eco = self.economy
        if eco.divisible or self.prices is None:
            self.bundles = [demand(eco, n, prices) for n in range(eco.N)]
        else:
            moved = prices != self.prices
            lowered = bool(np.any(prices < self.prices))
            for n in range(eco.N):
                b = self.bundles[n]
                if lowered or np.any(moved & (self.owned[n] | (b.quantities > 0))):
                    self.bundles[n] = demand(eco, n, prices)
        self.prices = prices.copy()
        return self.bundles


def _run_joint(economy: Economy, config: AuctionConfig, trace: AuctionTrace):
    mode = economy.mode
    p = check_prices(config.start_prices(economy.K), economy)
    cache = _DemandCache(economy)
    step = price_step_divisible if economy.divisible else price_step_indivisible
    t = 0
    while True:
        bundles = cache.get(p)
        d = np.vstack([b.quantities for b in bundles])
        z = excess_demand(economy, p, d)
        done = market_clears(z, config.clearing_tolerance, mode)
        last = done or t + 1 >= config.max_iterations
        if t % config.record_every == 0 or last:
            trace.record(t, p, d, z)
        if done:
            trace.outcome = "converged"
            break
        if last:
            trace.outcome = "iteration-limit"
            break
        p_next = step(p, z, config.alpha)
        if np.array_equal(p_next, p):
            # demands are a deterministic function of prices: a price
            # vector that does not move will never clear the market
            trace.outcome = "stalled"
            if t % config.record_every != 0:
                trace.record(t, p, d, z)
            break
        p = p_next
        t += 1
    trace.iteration_count = t + 1
    return p, d


def _state_economy(economy: Economy, s: int) -> Economy:
    return Economy(
        economy.utilities[:, s : s + 1, :],
        np.ones((economy.N, 1)),
        economy.endowments[:, s : s + 1, :],
        economy.divisible,
    )


def run_auction(economy: Economy, config: Optional[AuctionConfig] = None):
    """Walras' tatonnement over all M*S state-contingent markets.

    Returns ``(EquilibriumResult, AuctionTrace)``. A run that hits
    ``max_iterations`` is reported with ``converged=False`` and the last
    demands as its allocation; it is never presented as an equilibrium.
    """
    config = config or AuctionConfig()
    trace = AuctionTrace(dims=(economy.N, economy.S, economy.M))
    if config.independent_states and economy.S > 1:
        p, d = _run_independent(economy, config, trace)
    else:
        p, d = _run_joint(economy, config, trace)
    if trace.outcome == "iteration-limit":
        log.warning("auction stopped at the iteration limit (%d) without clearing", trace.iteration_count)
    elif trace.outcome == "stalled":
        log.warning("auction stalled after %d rounds: excess supply remains but no price is in excess demand",
                    trace.iteration_count)
    alloc = Allocation.from_rows(np.clip(d, 0.0, 1.0), economy.S, economy.M, economy.divisible)
    eu = np.array([expected_utility(economy, n, alloc.row(n)) for n in range(economy.N)])
    state_u = np.einsum("nsm,nsm->s", economy.utilities, alloc.values)
    result = EquilibriumResult(alloc, p, eu, state_u, trace.converged, trace.iteration_count)
    return result, trace


def _run_independent(economy: Economy, config: AuctionConfig, trace: AuctionTrace):
    # Each state's market is cleared on its own with per-state budgets
    # P^(s) . Q_n^(s). The merged trace pads finished states with their
    # final rows.
    S, M, K = economy.S, economy.M, economy.K
    start = config.start_prices(K)
    sub_traces = []
    finals_p, finals_d = [], []
    for s in range(S):
        sub = _state_economy(economy, s)
        cfg = AuctionConfig(
            alpha=config.alpha,
            initial_prices=tuple(start[s * M : (s + 1) * M]),
            max_iterations=config.max_iterations,
            clearing_tolerance=config.clearing_tolerance,
        )
        st = AuctionTrace()
        ps, ds = _run_joint(sub, cfg, st)
        sub_traces.append(st)
        finals_p.append(ps)
        finals_d.append(ds)
    length = max(len(st) for st in sub_traces)
    for i in range(length):
        rows = [min(i, len(st) - 1) for st in sub_traces]
        p = np.concatenate([sub_traces[s].prices[rows[s]] for s in range(S)])
        d = np.hstack([sub_traces[s].demands[rows[s]] for s in range(S)])
        z = np.concatenate([sub_traces[s].excess[rows[s]] for s in range(S)])
        trace.record(i, p, d, z)
    outcomes = {st.outcome for st in sub_traces}
    trace.outcome = "converged" if outcomes == {"converged"} else ("stalled" if "stalled" in outcomes else "iteration-limit")
    trace.iteration_count = max(st.iteration_count for st in sub_traces)
    return np.concatenate(finals_p), np.hstack(finals_d)


def verify_equilibrium(economy: Economy, result: EquilibriumResult, tol: float = 1e-9) -> bool:
    """Re-solve every consumer's demand at the final prices and check clearing.

    Demand optimality is checked on value: the held bundle must be
    affordable and worth at least the freshly solved optimum.
    """
    p = result.prices
    rows = result.allocation.rows()
    for n in range(economy.N):
        fresh = demand(economy, n, p)
        held = expected_utility(economy, n, rows[n])
        wealth = math.fsum(p * economy.endowment_vector(n))
        if math.fsum(p * rows[n]) > wealth * (1 + 1e-12) + tol:
            return False
        if held < fresh.value - tol * max(1.0, abs(fresh.value)):
            return False
    z = excess_demand(economy, p, rows)
    tol_clear = DEFAULT_CLEARING_TOL
    return market_clears(z, tol_clear, economy.mode)


def settle(economy: Economy, result: EquilibriumResult, realized_state: int):
    """Execute the contracts of the realized state; all others are void.

    Returns ``(net, gross)`` arrays over consumers: gross utility of the
    goods received and net benefit after paying for them.
    """
    if not 0 <= realized_state < economy.S:
        raise DimensionError(f"realized_state {realized_state} out of range [0, {economy.S})")
    M, s = economy.M, realized_state
    p_s = result.prices[s * M : (s + 1) * M]
    gross = np.empty(economy.N)
    net = np.empty(economy.N)
    for n in range(economy.N):
        x_s = result.allocation.values[n, s]
        gross[n] = math.fsum(economy.utilities[n, s] * x_s)
        net[n] = net_benefit(economy, n, s, x_s, p_s)
    return net, gross


def retain_unsold(economy: Economy, result: EquilibriumResult, tol: float = DEFAULT_CLEARING_TOL) -> Allocation:
    """Allocation actually delivered when some markets did not clear.

    Contracts on a state-contingent commodity execute only if its market
    cleared; otherwise the unit stays with its endowment holders. A
    converged result is returned unchanged.
    """
    rows = result.allocation.rows()
    z = rows.sum(axis=0) - economy.supply()
    open_ = z != 0 if not economy.divisible else np.abs(z) > tol
    if not np.any(open_):
        return result.allocation
    q = np.stack([economy.endowment_vector(n) for n in range(economy.N)])
    rows = np.where(open_[None, :], q, rows)
    # shared endowments of a discrete economy hand back fractional units
    fractional = economy.divisible or not np.all((rows == 0) | (rows == 1))
    return Allocation.from_rows(rows, economy.S, economy.M, fractional)
