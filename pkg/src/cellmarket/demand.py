"""Consumer demand at given prices.

Indivisible goods reduce to a 0-1 knapsack (values a_n^(s) u_nm^(s),
weights p_m^(s), capacity P . Q_n).  Divisible goods with linear utility
reduce to a fractional knapsack solved greedily by value density.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .market import Economy, budget, check_prices

# Relative slack on capacities; absorbs summation-order noise in P . Q_n.
CAPACITY_RTOL = 1e-12
# Relative width within which two bundle values count as a tie.
TIE_RTOL = 1e-12
# Below this many candidate items bound-based fixing costs more than it saves.
REDUCE_MIN_ITEMS = 16


class KnapsackError(ValueError):
    pass


@dataclass(frozen=True)
class KnapsackInstance:
    values: np.ndarray
    weights: np.ndarray
    capacity: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if v.ndim != 1 or v.shape != w.shape:
            raise KnapsackError(f"values and weights must be equal-length vectors, got {v.shape} and {w.shape}")
        if np.any(v < 0) or np.any(w < 0):
            raise KnapsackError("values and weights must be nonnegative")
        if not (math.isfinite(self.capacity) and self.capacity >= 0):
            raise KnapsackError(f"capacity must be finite and >= 0, got {self.capacity!r}")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "capacity", float(self.capacity))


@dataclass(frozen=True)
class KnapsackResult:
    selection: tuple[int, ...]
    value: float
    spend: float


@dataclass(frozen=True, eq=False)
class Bundle:
    quantities: np.ndarray
    spend: float
    value: float


def _fractional_bound(order, values, weights, start_cap):
    total = 0.0
    cap = start_cap
    for i in order:
        w = weights[i]
        if w <= cap:
            cap -= w
            total += values[i]
        else:
            total += values[i] * cap / w
            break
    return total


def _best_value(items, values, weights, cap):
    """Optimal 0-1 value over ``items`` by depth-first branch and bound."""
    order = sorted(items, key=lambda i: (-values[i] / weights[i], i))
    n = len(order)
    c, best = cap, 0.0
    for i in order:
        if weights[i] <= c:
            c -= weights[i]
            best += values[i]
    stack = [(0, cap, 0.0)]
    while stack:
        pos, c, v = stack.pop()
        if v > best:
            best = v
        if pos == n or v + _fractional_bound(order[pos:], values, weights, c) <= best:
            continue
        i = order[pos]
        stack.append((pos + 1, c, v))
        if weights[i] <= c:
            stack.append((pos + 1, c - weights[i], v + values[i]))
    return best


def _suffix_frontiers(items, values, weights, cap):
    """Pareto frontiers (weight, value) of every suffix ``items[k:]``.

    Entry k holds weights ascending and values strictly ascending, so the
    best value within capacity c is the last entry with weight <= c.
    """
    W, V = np.zeros(1), np.zeros(1)
    fronts = [None] * (len(items) + 1)
    fronts[-1] = (W, V)
    for k in range(len(items) - 1, -1, -1):
        i = items[k]
        W2, V2 = W + weights[i], V + values[i]
        fit = W2 <= cap
        Wa = np.concatenate([W, W2[fit]])
        Va = np.concatenate([V, V2[fit]])
        order = np.lexsort((-Va, Wa))
        Wa, Va = Wa[order], Va[order]
        prev = np.concatenate(([-np.inf], np.maximum.accumulate(Va)[:-1]))
        keep = Va > prev
        W, V = Wa[keep], Va[keep]
        fronts[k] = (W, V)
    return fronts


def _best_within(front, c):
    W, V = front
    j = int(np.searchsorted(W, c, side="right")) - 1
    return V[j] if j >= 0 else -np.inf


def _reduce(items, values, weights, cap):
    """Fix items that every near-optimal selection includes (1) or excludes (0).

    Uses Dantzig bounds with each item forced out or in, against a greedy
    lower bound. The margin exceeds the tie width, so only items decided
    for the whole tie set are fixed; the rest are marked -1.
    """
    order = sorted(range(len(items)), key=lambda j: (-values[items[j]] / weights[items[j]], items[j]))
    wv = np.array([weights[items[j]] for j in order])
    vv = np.array([values[items[j]] for j in order])
    lb, c = 0.0, cap
    for wi, vi in zip(wv.tolist(), vv.tolist()):
        if wi <= c:
            c -= wi
            lb += vi
    lb = max(lb, float(vv.max()))
    K = len(order)
    keep = 1.0 - np.eye(K)
    W, V = wv * keep, vv * keep
    CW, CV = np.cumsum(W, axis=1), np.cumsum(V, axis=1)

    def bound(caps):
        b = (CW <= caps[:, None]).sum(axis=1)
        rows = np.arange(K)
        prev_w = np.where(b > 0, CW[rows, np.maximum(b - 1, 0)], 0.0)
        prev_v = np.where(b > 0, CV[rows, np.maximum(b - 1, 0)], 0.0)
        nxt = np.minimum(b, K - 1)
        frac = np.where(b < K, V[rows, nxt] * (caps - prev_w) / np.where(b < K, W[rows, nxt], 1.0), 0.0)
        return prev_v + frac

    ub_out = bound(np.full(K, cap))
    ub_in = vv + bound(cap - wv)
    floor = lb - (TIE_RTOL + 1e-9) * max(1.0, lb)
    status = np.full(len(items), -1)
    status[np.array(order)[ub_out < floor]] = 1
    status[np.array(order)[ub_in < floor]] = 0
    return status


def knapsack_01(instance: KnapsackInstance) -> KnapsackResult:
    """Exact 0-1 knapsack with deterministic tie-breaking.

    Solved by dynamic programming over Pareto frontiers of item suffixes,
    after bound-based fixing of items decided for every near-optimal
    selection. Among maximum-value selections (values within TIE_RTOL count
    as equal) the lexicographically smallest sorted index tuple is
    returned: items are fixed in index order, each taken whenever the
    optimum is still reachable with it. Free positive-value items are
    always taken and zero-value items never are.
    """
    v = instance.values.tolist()
    w = instance.weights.tolist()
    cap = instance.capacity * (1.0 + CAPACITY_RTOL)

    free = [i for i in range(len(v)) if v[i] > 0 and w[i] == 0]
    cand = [i for i in range(len(v)) if v[i] > 0 and 0 < w[i] <= cap]
    chosen = []
    if cand:
        if len(cand) >= REDUCE_MIN_ITEMS:
            status = _reduce(cand, v, w, cap)
        else:
            status = np.full(len(cand), -1)
        open_items = [i for i, s in zip(cand, status) if s == -1]
        fronts = _suffix_frontiers(open_items, v, w, cap)
        # value and weight of fixed-in items at or after each position of cand
        fv, fw = [0.0] * (len(cand) + 1), [0.0] * (len(cand) + 1)
        for k in range(len(cand) - 1, -1, -1):
            inside = status[k] == 1
            fv[k] = fv[k + 1] + (v[cand[k]] if inside else 0.0)
            fw[k] = fw[k + 1] + (w[cand[k]] if inside else 0.0)
        opt = fv[0] + _best_within(fronts[0], cap - fw[0])
        target = opt - TIE_RTOL * max(1.0, abs(opt))
        c, acc, pos = cap, 0.0, 0
        for k, i in enumerate(cand):
            if status[k] == 0:
                continue
            if status[k] == 1:
                chosen.append(i)
                c -= w[i]
                acc += v[i]
                continue
            pos += 1
            if acc >= target:
                continue
            rest = fv[k + 1] + _best_within(fronts[pos], c - w[i] - fw[k + 1])
            if w[i] <= c and acc + v[i] + rest >= target:
                chosen.append(i)
                c -= w[i]
                acc += v[i]
    selection = tuple(sorted(free + chosen))
    return KnapsackResult(
        selection,
        math.fsum(v[i] for i in selection),
        math.fsum(w[i] for i in selection),
    )


def knapsack_bnb(instance: KnapsackInstance) -> float:
    """Optimal value by branch and bound with the fractional bound.

    Independent of the frontier solver behind :func:`knapsack_01`; used to
    cross-check it.
    """
    v = instance.values.tolist()
    w = instance.weights.tolist()
    cap = instance.capacity * (1.0 + CAPACITY_RTOL)
    free = math.fsum(v[i] for i in range(len(v)) if v[i] > 0 and w[i] == 0)
    cand = [i for i in range(len(v)) if v[i] > 0 and 0 < w[i] <= cap]
    return free + (_best_value(cand, v, w, cap) if cand else 0.0)


def knapsack_dp(instance: KnapsackInstance, unit: float = 1e-6) -> float:
    """Optimal value by dynamic programming over weights scaled to ``unit``.

    Exact only when every weight is an integer multiple of ``unit``; kept as
    an independent cross-check of :func:`knapsack_01`.
    """
    w_int = np.rint(instance.weights / unit).astype(np.int64)
    cap_int = int(math.floor(instance.capacity / unit + 1e-9))
    best = np.zeros(cap_int + 1)
    for vi, wi in zip(instance.values, w_int):
        if vi <= 0:
            continue
        if wi == 0:
            best += vi
        elif wi <= cap_int:
            cand = best[:-wi] + vi
            best[wi:] = np.maximum(best[wi:], cand)
    return float(best[cap_int])


def fractional_knapsack(values, weights, capacity: float) -> np.ndarray:
    """Greedy fill by value density with the last item possibly fractional.

    Quantities are capped at 1. Density ties go to the lower index.
    """
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    x = np.zeros_like(v)
    free = (v > 0) & (w == 0)
    x[free] = 1.0
    paid = np.flatnonzero((v > 0) & (w > 0))
    order = sorted(paid.tolist(), key=lambda i: (-v[i] / w[i], i))
    cap = capacity
    for i in order:
        if cap <= 0:
            break
        if w[i] <= cap:
            x[i] = 1.0
            cap -= w[i]
        else:
            x[i] = cap / w[i]
            cap = 0.0
    return x


def demand_indivisible(economy: Economy, consumer: int, prices) -> Bundle:
    if economy.divisible:
        raise ValueError("demand_indivisible needs a discrete economy")
    p = check_prices(prices, economy)
    inst = KnapsackInstance(economy.expected_values(consumer), p, budget(economy, consumer, p))
    res = knapsack_01(inst)
    x = np.zeros(economy.K)
    x[list(res.selection)] = 1.0
    return Bundle(x, res.spend, res.value)


def demand_divisible(economy: Economy, consumer: int, prices) -> Bundle:
    if not economy.divisible:
        raise ValueError("demand_divisible needs a continuous economy")
    p = check_prices(prices, economy)
    vals = economy.expected_values(consumer)
    x = fractional_knapsack(vals, p, budget(economy, consumer, p))
    return Bundle(x, math.fsum(p * x), math.fsum(vals * x))


def demand(economy: Economy, consumer: int, prices) -> Bundle:
    if economy.divisible:
        return demand_divisible(economy, consumer, prices)
    return demand_indivisible(economy, consumer, prices)
