"""Small-cell network description and its mapping to an exchange economy.

SBSs are consumers, users are goods and the joint harvested-energy levels
are nature's states.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .market import Economy, EconomyError, StateSpace

SCENARIOS = ("fixed-power", "full-power", "equal-power")


@dataclass(frozen=True)
class TransmissionScenario:
    kind: str = "full-power"
    fixed_power: Optional[float] = None  # per-user power P_n, fixed-power only

    def __post_init__(self):
        if self.kind not in SCENARIOS:
            raise EconomyError(f"unknown transmission scenario {self.kind!r}; expected one of {SCENARIOS}")
        if self.kind == "fixed-power":
            if self.fixed_power is None or not self.fixed_power > 0:
                raise EconomyError("fixed-power transmission needs a per-user power > 0")


@dataclass(frozen=True, eq=False)
class NetworkScenario:
    """Everything needed to turn a small-cell network into an :class:`Economy`.

    ``channel_gains`` is H (N x M, linear). When both ``fading`` and
    ``pathloss`` are given, H must equal their elementwise product.
    ``noise_interference`` is N0 + I_nm, either a scalar or an N x M array.
    ``power_per_level`` maps an energy level to available power; ``None``
    means level k gives k power units.
    """

    channel_gains: np.ndarray
    states: StateSpace
    transmission: TransmissionScenario = field(default_factory=TransmissionScenario)
    noise_interference: float | np.ndarray = 1.0
    antenna_gain: float = 1.0
    power_per_level: Optional[Mapping[int, float]] = None
    beliefs: Optional[np.ndarray] = None
    endowment_policy: str = "uniform"
    endowment_seed: int = 0
    endowment_matrix: Optional[np.ndarray] = None
    divisible: bool = False
    fading: Optional[np.ndarray] = None
    pathloss: Optional[np.ndarray] = None
    log_base: float = 2.0

    def __post_init__(self):
        H = np.array(self.channel_gains, dtype=float)
        if H.ndim != 2:
            raise EconomyError("channel_gains must be an N x M matrix")
        if not np.all(H > 0):
            raise EconomyError("channel gains must be strictly positive")
        if self.states.N != H.shape[0]:
            raise EconomyError(f"state space covers {self.states.N} cells but H has {H.shape[0]} rows")
        ni = np.broadcast_to(np.asarray(self.noise_interference, dtype=float), H.shape)
        if not np.all(ni > 0):
            raise EconomyError("noise plus interference must be > 0")
        if self.antenna_gain <= 0:
            raise EconomyError("antenna gain must be > 0")
        for name in ("fading", "pathloss"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.array(arr, dtype=float)
                if arr.shape != H.shape or not np.all(arr > 0):
                    raise EconomyError(f"{name} must be a positive matrix shaped like H")
                object.__setattr__(self, name, arr)
        if self.fading is not None and self.pathloss is not None:
            if not np.allclose(H, self.fading * self.pathloss, rtol=0, atol=1e-9):
                raise EconomyError("channel gains differ from fading o pathloss")
        if self.beliefs is not None:
            a = np.array(self.beliefs, dtype=float)
            if a.shape != (H.shape[0], self.states.S):
                raise EconomyError(f"beliefs must be shaped {(H.shape[0], self.states.S)}, got {a.shape}")
            object.__setattr__(self, "beliefs", a)
        if self.endowment_policy not in ("uniform", "random", "explicit"):
            raise EconomyError(f"unknown endowment policy {self.endowment_policy!r}")
        if self.endowment_policy == "explicit" and self.endowment_matrix is None:
            raise EconomyError("explicit endowment policy needs an endowment matrix")
        object.__setattr__(self, "channel_gains", H)
        object.__setattr__(self, "noise_interference", ni.copy())

    @property
    def N(self) -> int:
        return self.channel_gains.shape[0]

    @property
    def M(self) -> int:
        return self.channel_gains.shape[1]

    @property
    def S(self) -> int:
        return self.states.S

    def path_gain(self) -> np.ndarray:
        """Path gain G, given directly or recovered as H / F."""
        if self.pathloss is not None:
            return self.pathloss
        if self.fading is not None:
            return self.channel_gains / self.fading
        raise EconomyError("scenario has neither a path-loss nor a fading matrix")

    def available_power(self, state: int) -> np.ndarray:
        """Total power P_n^(s) of every SBS in a state."""
        levels = self.states.states[state]
        if self.power_per_level is None:
            return levels.astype(float)
        try:
            return np.array([float(self.power_per_level[int(k)]) for k in levels])
        except KeyError as exc:
            raise EconomyError(f"no power mapping for energy level {exc.args[0]}") from None

    def rates(self, power) -> np.ndarray:
        """N x M rates when SBS n transmits to every user with ``power[n]``."""
        p = np.asarray(power, dtype=float).reshape(-1, 1)
        return rate(p * self.antenna_gain, self.channel_gains, self.noise_interference, self.log_base)

    def serve_limit(self, state: int) -> np.ndarray:
        """alpha_n^(s) = floor(P_n^(s) / P_n), fixed-power only."""
        P = self.available_power(state)
        # guard against 2.9999999 style float noise from the power map
        return np.floor(P / self.transmission.fixed_power + 1e-12).astype(int)


def rate(power, gain, noise_plus_interference, base: float = 2.0):
    """log_base(1 + power * gain / (N0 + I)); vectorized over arrays."""
    p = np.asarray(power, dtype=float)
    g = np.asarray(gain, dtype=float)
    ni = np.asarray(noise_plus_interference, dtype=float)
    if np.any(ni <= 0):
        raise ValueError("noise plus interference must be > 0")
    if np.any(p < 0) or np.any(g < 0):
        raise ValueError("power and gain must be >= 0")
    out = np.log1p(p * g / ni) / math.log(base)
    return float(out) if out.ndim == 0 else out


def state_space(per_cell_levels=None, explicit=None) -> StateSpace:
    """Full Cartesian product of per-cell levels, or an explicit joint list."""
    if explicit is not None:
        return StateSpace.explicit(explicit)
    if per_cell_levels is None:
        raise EconomyError("need per-cell levels or an explicit state list")
    return StateSpace.product(per_cell_levels)


def utility_matrix(scenario: NetworkScenario, state: int) -> np.ndarray:
    """Demand-time utilities u_nm^(s) (N x M).

    fixed-power: rate at P_n for every user (upper bound; the top-alpha cut
    happens at settlement); zero when the SBS cannot serve anyone.
    full-power: rate at P_n^(s).  equal-power: rate at P_n^(s) / M (lower bound).
    """
    if not 0 <= state < scenario.S:
        raise EconomyError(f"state index {state} out of range")
    tx = scenario.transmission
    P = scenario.available_power(state)
    if tx.kind == "fixed-power":
        u = scenario.rates(np.full(scenario.N, tx.fixed_power))
        u[scenario.serve_limit(state) < 1] = 0.0
        return u
    if tx.kind == "full-power":
        return scenario.rates(P)
    if tx.kind == "equal-power":
        return scenario.rates(P / scenario.M)
    raise EconomyError(f"unknown transmission scenario {tx.kind!r}")


def settle_fixed_power(rates_row, assignment_row, serve_limit: int) -> float:
    """Sum of the ``serve_limit`` largest rates among the assigned users.

    Fractional assignments weight each served user's rate by its share.
    """
    r = np.asarray(rates_row, dtype=float)
    x = np.asarray(assignment_row, dtype=float)
    if serve_limit <= 0:
        return 0.0
    assigned = np.flatnonzero(x > 0)
    top = assigned[np.argsort(-r[assigned], kind="stable")][:serve_limit]
    return math.fsum(r[top] * x[top])


def realized_utilities(scenario: NetworkScenario, assignment) -> np.ndarray:
    """True per-state utility of every SBS for an (N, S, M) assignment.

    Unlike the demand-time utilities this applies the top-alpha cut for
    fixed-power and the actual number of served users for equal-power.
    """
    X = np.asarray(assignment, dtype=float)
    N, S, M = scenario.N, scenario.S, scenario.M
    if X.shape == (N, M):
        X = np.repeat(X[:, None, :], S, axis=1)
    if X.shape != (N, S, M):
        raise EconomyError(f"assignment must be shaped {(N, S, M)} or {(N, M)}, got {X.shape}")
    tx = scenario.transmission
    out = np.zeros((N, S))
    for s in range(S):
        P = scenario.available_power(s)
        if tx.kind == "fixed-power":
            r = scenario.rates(np.full(N, tx.fixed_power))
            alpha = scenario.serve_limit(s)
            out[:, s] = [settle_fixed_power(r[n], X[n, s], alpha[n]) for n in range(N)]
        elif tx.kind == "full-power":
            out[:, s] = (scenario.rates(P) * X[:, s]).sum(axis=1)
        else:
            load = X[:, s].sum(axis=1)
            share = np.divide(P, load, out=np.zeros(N), where=load > 0)
            out[:, s] = (scenario.rates(share) * X[:, s]).sum(axis=1)
    return out


def sample_beliefs(N: int, S: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draws from the probability simplex (Dirichlet(1, ..., 1))."""
    return rng.dirichlet(np.ones(S), size=N)


def make_endowments(scenario: NetworkScenario, rng: np.random.Generator) -> np.ndarray:
    N, S, M = scenario.N, scenario.S, scenario.M
    policy = scenario.endowment_policy
    if policy == "uniform":
        return np.full((N, S, M), 1.0 / N)
    if policy == "explicit":
        q = np.array(scenario.endowment_matrix, dtype=float)
        if q.shape == (N, M):
            q = np.repeat(q[:, None, :], S, axis=1)
        if q.shape != (N, S, M):
            raise EconomyError(f"endowment matrix must be shaped {(N, S, M)} or {(N, M)}, got {q.shape}")
        sums = q.sum(axis=0)
        bad = np.argwhere(np.abs(sums - 1.0) > 1e-9)
        if bad.size:
            s, m = bad[0]
            raise EconomyError(f"endowment column for user {m} in state {s} sums to {float(sums[s, m])!r}, not 1")
        return q
    if scenario.divisible:
        return np.moveaxis(rng.dirichlet(np.ones(N), size=(S, M)), -1, 0)
    owner = rng.integers(0, N, size=(S, M))
    return (owner[None, :, :] == np.arange(N)[:, None, None]).astype(float)


def build_economy(scenario: NetworkScenario, seed: Optional[int] = None) -> Economy:
    """Algorithm-3 step one: utilities per state, beliefs and endowments.

    Beliefs come from the scenario when given, otherwise they are sampled
    after the endowments from the same seeded generator.
    """
    rng = np.random.default_rng(scenario.endowment_seed if seed is None else seed)
    u = np.stack([utility_matrix(scenario, s) for s in range(scenario.S)], axis=1)
    q = make_endowments(scenario, rng)
    a = scenario.beliefs if scenario.beliefs is not None else sample_beliefs(scenario.N, scenario.S, rng)
    return Economy(u, a, q, scenario.divisible)
