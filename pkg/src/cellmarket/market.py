"""Exchange economy under uncertainty: data model and predicates.

Every state-contingent vector in this package uses one flat layout,
state-major and commodity-minor::

    index(m, s) = s * M + m      ->  (p_1^(1), ..., p_M^(1), ..., p_1^(S), ..., p_M^(S))

Per-consumer tensors are stored with shape ``(N, S, M)`` so that
``arr.reshape(N, S * M)`` yields exactly that layout.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

BELIEF_TOL = 1e-12
SUPPLY_TOL = 1e-9
DEFAULT_CLEARING_TOL = 1e-3


class DimensionError(ValueError):
    """Raised when an array does not have the shape an operation expects."""


class EconomyError(ValueError):
    """Raised when economy data violates a model invariant."""


def flat_index(m: int, s: int, M: int) -> int:
    return s * M + m


def unflat_index(k: int, M: int) -> tuple[int, int]:
    """Return ``(m, s)`` for a flat state-contingent index."""
    s, m = divmod(k, M)
    return m, s


def _check_shape(name: str, arr: np.ndarray, shape: tuple) -> None:
    if arr.shape != shape:
        raise DimensionError(f"{name}: expected shape {shape}, got {arr.shape}")


@dataclass(frozen=True)
class StateSpace:
    """Joint energy-level states of all cells.

    ``states`` is an ``(S, N)`` integer array. Built either as the full
    Cartesian product of ``per_cell_levels`` (odometer order, last cell
    fastest) or from an explicit list of joint states.
    """

    per_cell_levels: tuple[tuple[int, ...], ...]
    states: np.ndarray

    @classmethod
    def product(cls, per_cell_levels: Sequence[Sequence[int]]) -> "StateSpace":
        levels = tuple(tuple(int(v) for v in lv) for lv in per_cell_levels)
        if not levels:
            raise EconomyError("state space needs at least one cell")
        for n, lv in enumerate(levels):
            if not lv:
                raise EconomyError(f"level set of cell {n} is empty")
            if len(set(lv)) != len(lv):
                raise EconomyError(f"level set of cell {n} has duplicates")
        states = np.array(list(itertools.product(*levels)), dtype=int)
        return cls(levels, states)

    @classmethod
    def explicit(cls, states: Sequence[Sequence[int]]) -> "StateSpace":
        arr = np.asarray(states, dtype=int)
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise EconomyError("explicit state list must be a nonempty 2-D list")
        if len({tuple(r) for r in arr.tolist()}) != arr.shape[0]:
            raise EconomyError("explicit states must be mutually exclusive (no duplicates)")
        levels = tuple(tuple(sorted(set(arr[:, n].tolist()))) for n in range(arr.shape[1]))
        return cls(levels, arr)

    @property
    def S(self) -> int:
        return self.states.shape[0]

    @property
    def N(self) -> int:
        return self.states.shape[1]

    def level(self, cell: int, state: int) -> int:
        return int(self.states[state, cell])


@dataclass(frozen=True, eq=False)
class Economy:
    """Pure exchange economy with ``N`` consumers, ``M`` goods and ``S`` states.

    utilities:  (N, S, M) per-state utility u_nm^(s), nonnegative
    beliefs:    (N, S) probability vectors a_n
    endowments: (N, S, M) state-contingent endowments q_nm^(s); every
                (m, s) column sums to one unit of supply
    """

    utilities: np.ndarray
    beliefs: np.ndarray
    endowments: np.ndarray
    divisible: bool = False
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        u = np.array(self.utilities, dtype=float)
        a = np.array(self.beliefs, dtype=float)
        q = np.array(self.endowments, dtype=float)
        if u.ndim != 3:
            raise DimensionError(f"utilities must be 3-D (N, S, M), got ndim={u.ndim}")
        N, S, M = u.shape
        if N < 1 or S < 1 or M < 1:
            raise DimensionError(f"empty economy dimensions {u.shape}")
        _check_shape("beliefs", a, (N, S))
        _check_shape("endowments", q, (N, S, M))
        if not np.all(np.isfinite(u)) or np.any(u < 0):
            raise EconomyError("utilities must be finite and nonnegative")
        if np.any(a < 0):
            raise EconomyError("beliefs must be nonnegative")
        for n in range(N):
            if abs(math.fsum(a[n]) - 1.0) > BELIEF_TOL:
                raise EconomyError(f"beliefs of consumer {n} sum to {math.fsum(a[n])!r}, not 1")
        if np.any(q < 0):
            raise EconomyError("endowments must be nonnegative")
        supply = q.sum(axis=0)
        bad = np.argwhere(np.abs(supply - 1.0) > SUPPLY_TOL)
        if bad.size:
            s, m = bad[0]
            raise EconomyError(
                f"endowments of commodity {m} in state {s} sum to {float(supply[s, m])!r}, not 1"
            )
        if self.divisible and np.any(q <= 0):
            raise EconomyError("divisible economies need strictly positive endowments")
        for arr in (u, a, q):
            arr.setflags(write=False)
        object.__setattr__(self, "utilities", u)
        object.__setattr__(self, "beliefs", a)
        object.__setattr__(self, "endowments", q)

    @property
    def N(self) -> int:
        return self.utilities.shape[0]

    @property
    def S(self) -> int:
        return self.utilities.shape[1]

    @property
    def M(self) -> int:
        return self.utilities.shape[2]

    @property
    def K(self) -> int:
        """Number of state-contingent commodities, M * S."""
        return self.M * self.S

    @property
    def mode(self) -> str:
        return "continuous" if self.divisible else "discrete"

    def expected_values(self, consumer: int) -> np.ndarray:
        """Flat vector of a_n^(s) * u_nm^(s), the per-unit expected utility."""
        self._check_consumer(consumer)
        return (self.beliefs[consumer][:, None] * self.utilities[consumer]).reshape(-1)

    def endowment_vector(self, consumer: int) -> np.ndarray:
        self._check_consumer(consumer)
        return self.endowments[consumer].reshape(-1)

    def supply(self) -> np.ndarray:
        # validated to sum to one within SUPPLY_TOL; the exact unit keeps
        # discrete clearing (z == 0) free of rounding noise
        return np.ones(self.K)

    def _check_consumer(self, consumer: int) -> None:
        if not 0 <= consumer < self.N:
            raise DimensionError(f"consumer index {consumer} out of range [0, {self.N})")


@dataclass(frozen=True, eq=False)
class Allocation:
    """Holdings x_nm^(s), stored as an ``(N, S, M)`` array."""

    values: np.ndarray
    divisible: bool = False

    def __post_init__(self):
        x = np.array(self.values, dtype=float)
        if x.ndim != 3:
            raise DimensionError(f"allocation must be 3-D (N, S, M), got ndim={x.ndim}")
        if self.divisible:
            if np.any(x < -1e-12) or np.any(x > 1 + 1e-12):
                raise EconomyError("continuous allocation entries must lie in [0, 1]")
        elif not np.all((x == 0) | (x == 1)):
            raise EconomyError("discrete allocation entries must be 0 or 1")
        x.setflags(write=False)
        object.__setattr__(self, "values", x)

    @classmethod
    def from_rows(cls, rows: np.ndarray, S: int, M: int, divisible: bool = False) -> "Allocation":
        rows = np.asarray(rows, dtype=float)
        return cls(rows.reshape(rows.shape[0], S, M), divisible)

    def row(self, consumer: int) -> np.ndarray:
        return self.values[consumer].reshape(-1)

    def rows(self) -> np.ndarray:
        return self.values.reshape(self.values.shape[0], -1)


def check_prices(prices, economy: Economy) -> np.ndarray:
    p = np.asarray(prices, dtype=float)
    _check_shape("prices", p, (economy.K,))
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise EconomyError("prices must be finite and nonnegative")
    return p


def expected_utility(economy: Economy, consumer: int, allocation_row) -> float:
    """Sum over states and goods of a_n^(s) u_nm^(s) x_nm^(s)."""
    x = np.asarray(allocation_row, dtype=float)
    _check_shape("allocation_row", x, (economy.K,))
    return math.fsum(economy.expected_values(consumer) * x)


def net_benefit(economy: Economy, consumer: int, state: int, allocation_state_row, prices_state_row) -> float:
    """Utility minus payment for one state. Negative values are allowed."""
    economy._check_consumer(consumer)
    if not 0 <= state < economy.S:
        raise DimensionError(f"state index {state} out of range [0, {economy.S})")
    x = np.asarray(allocation_state_row, dtype=float)
    p = np.asarray(prices_state_row, dtype=float)
    _check_shape("allocation_state_row", x, (economy.M,))
    _check_shape("prices_state_row", p, (economy.M,))
    u = economy.utilities[consumer, state]
    return math.fsum(u * x) - math.fsum(p * x)


def budget(economy: Economy, consumer: int, prices) -> float:
    """Wealth P . Q_n of a consumer at the given prices."""
    p = check_prices(prices, economy)
    return math.fsum(p * economy.endowment_vector(consumer))


def excess_demand(economy: Economy, prices, demands) -> np.ndarray:
    """z = sum_n d_n - sum_n q_n for every state-contingent commodity.

    ``prices`` only participates in the shape check; demands are assumed to
    have been computed at these prices.
    """
    check_prices(prices, economy)
    d = np.asarray(demands, dtype=float)
    _check_shape("demands", d, (economy.N, economy.K))
    return d.sum(axis=0) - economy.supply()


def is_feasible(economy: Economy, allocation: Allocation, tol: float = 1e-12) -> bool:
    if allocation.divisible != economy.divisible:
        raise EconomyError("allocation mode does not match economy mode")
    _check_shape("allocation", allocation.values, economy.endowments.shape)
    return bool(np.all(allocation.values.sum(axis=0) <= economy.endowments.sum(axis=0) + tol))


def market_clears(excess, tolerance: float = DEFAULT_CLEARING_TOL, mode: str = "continuous") -> bool:
    """Continuous: max |z| <= tolerance.  Discrete: every z is exactly zero."""
    z = np.asarray(excess, dtype=float)
    if mode == "discrete":
        return bool(np.all(z == 0))
    if mode != "continuous":
        raise ValueError(f"unknown mode {mode!r}")
    if tolerance <= 0:
        raise ValueError("continuous clearing needs a positive tolerance")
    return bool(np.max(np.abs(z), initial=0.0) <= tolerance)
