"""Run scenarios, score every method and export traces and plot data."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .baselines import (
    SizeError,
    assign_mrp,
    assign_mwm,
    assign_nsbs,
    assign_rnd,
    brute_force_optimum,
    brute_force_realized,
)
from .market import Economy, excess_demand, expected_utility
from .scenario import METHODS, ScenarioFile
from .tatonnement import AuctionTrace, retain_unsold, run_auction
from .wireless import realized_utilities

log = logging.getLogger(__name__)

class MethodError(ValueError):
    """A requested method cannot run on this scenario."""


@dataclass
class MethodResult:
    method: str
    expected_utility: float
    state_utilities: list
    assignment: list  # (N, S, M) holdings actually delivered
    normalized: Optional[float] = None
    outcome: Optional[str] = None  # auction only
    iterations: Optional[int] = None
    price_updates: Optional[list] = None  # rounds in which each p[m,s] moved
    uncleared: Optional[int] = None
    prices: Optional[list] = None


@dataclass
class RunReport:
    scenario: str
    mode: str
    endowment_seed: Optional[int]
    rnd_seed: int
    normalizer: str
    methods: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)  # wall-clock seconds, never part of to_dict()
    trace: Optional[AuctionTrace] = None

    def to_dict(self) -> dict:
        """Deterministic content; wall-clock timings are kept apart."""
        return {
            "scenario": self.scenario,
            "mode": self.mode,
            "endowment_seed": self.endowment_seed,
            "rnd_seed": self.rnd_seed,
            "normalizer": self.normalizer,
            "methods": {k: asdict(v) for k, v in self.methods.items()},
        }

    def write(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = [out / "report.json", out / "timings.json"]
        written[0].write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        written[1].write_text(json.dumps(self.timings, indent=2) + "\n")
        if self.trace is not None and len(self.trace):
            for fmt in ("csv", "json"):
                p = out / f"trace.{fmt}"
                export_trace(self.trace, p, fmt)
                written.append(p)
        return written

    @property
    def auction_converged(self) -> Optional[bool]:
        auc = self.methods.get("AUC")
        return None if auc is None else auc.outcome == "converged"


def _check_methods(sc: ScenarioFile, methods: Sequence[str]) -> list[str]:
    out = []
    for m in methods:
        if m not in METHODS:
            raise MethodError(f"unknown method {m!r}; expected one of {METHODS}")
        if m in ("MRP", "NSBS", "MWM", "RND") and not sc.is_network:
            raise MethodError(f"{m} needs a network scenario")
        if m in ("MRP", "NSBS", "MWM", "RND", "ORACLE") and sc.divisible:
            raise MethodError(f"{m} needs a discrete scenario")
        if m not in out:
            out.append(m)
    return out


def _economy_scores(economy: Economy, X: np.ndarray):
    rows = X.reshape(economy.N, -1)
    expected = math.fsum(expected_utility(economy, n, rows[n]) for n in range(economy.N))
    return expected, np.einsum("nsm,nsm->s", economy.utilities, X)


def _network_scores(network, beliefs, X: np.ndarray):
    U = realized_utilities(network, X)
    return float(np.sum(beliefs * U)), U.sum(axis=0)


def run(sc: ScenarioFile, methods: Optional[Sequence[str]] = None, *, endowment_seed: Optional[int] = None,
        rnd_seed: Optional[int] = None) -> RunReport:
    """Execute each method on a scenario and score it.

    Network scenarios are scored on realized utilities (top-alpha cut for
    fixed-power, actual load for equal-power) weighted by each SBS's
    beliefs. Explicit economies are scored on expected utility directly.
    """
    methods = _check_methods(sc, methods or sc.run.methods)
    rnd_seed = sc.run.rnd_seed if rnd_seed is None else rnd_seed
    economy = sc.build(endowment_seed)
    network = sc.network_scenario(endowment_seed) if sc.is_network else None
    seed_used = network.endowment_seed if network is not None else None

    def score(X):
        if network is not None:
            return _network_scores(network, economy.beliefs, X)
        return _economy_scores(economy, X)

    report = RunReport(sc.name, sc.mode, seed_used, rnd_seed, "max")
    N, S, M = economy.N, economy.S, economy.M
    for m in methods:
        t0 = time.perf_counter()
        if m == "AUC":
            result, trace = run_auction(economy, sc.auction.config())
            delivered = retain_unsold(economy, result, sc.auction.clearing_tolerance).values
            P = trace.price_matrix()
            moves = (np.diff(P, axis=0) != 0).sum(axis=0) if len(P) > 1 else np.zeros(economy.K, int)
            exp_u, state_u = score(delivered)
            rows = result.allocation.rows()
            z = excess_demand(economy, result.prices, rows)
            uncleared = int(np.sum(z != 0)) if not economy.divisible else int(np.sum(np.abs(z) > sc.auction.clearing_tolerance))
            res = MethodResult(m, exp_u, state_u.tolist(), delivered.tolist(), outcome=trace.outcome,
                               iterations=trace.iteration_count, price_updates=moves.astype(int).tolist(),
                               uncleared=uncleared, prices=result.prices.tolist())
            report.trace = trace
        elif m == "ORACLE":
            if network is not None:
                try:
                    owners, per_state = brute_force_realized(network, economy.beliefs)
                except SizeError as exc:
                    log.warning("oracle skipped: %s", exc)
                    continue
                X = (owners[None, :, :] == np.arange(N)[:, None, None]).astype(float)
            else:
                try:
                    alloc, _, _ = brute_force_optimum(economy, "expected")
                except SizeError as exc:
                    log.warning("oracle skipped: %s", exc)
                    continue
                X = alloc.values
            exp_u, state_u = score(X)
            res = MethodResult(m, exp_u, state_u.tolist(), X.tolist())
        else:
            if m == "MRP":
                a = assign_mrp(network.channel_gains)
            elif m == "NSBS":
                a = assign_nsbs(network.path_gain())
            elif m == "MWM":
                a = assign_mwm(network.channel_gains, sc.run.mwm_mode)
            else:
                a = assign_rnd(N, M, rnd_seed)
            X = np.repeat(np.asarray(a.assignment, dtype=float)[:, None, :], S, axis=1)
            exp_u, state_u = score(X)
            res = MethodResult(m, exp_u, state_u.tolist(), X.tolist())
        report.timings[m] = time.perf_counter() - t0
        report.methods[m] = res

    if "ORACLE" in report.methods:
        report.normalizer = "oracle"
        divisor = report.methods["ORACLE"].expected_utility
    else:
        divisor = max((r.expected_utility for r in report.methods.values()), default=0.0)
    for r in report.methods.values():
        r.normalized = r.expected_utility / divisor if divisor > 0 else None
    return report


# ---- traces -------------------------------------------------------------

def trace_columns(N: int, S: int, M: int) -> list[str]:
    """CSV header. Labels are 1-based; order is state-major, commodity-minor."""
    cs = [(m, s) for s in range(1, S + 1) for m in range(1, M + 1)]
    cols = ["iter"] + [f"p[{m},{s}]" for m, s in cs] + [f"z[{m},{s}]" for m, s in cs]
    return cols + [f"d[{n},{m},{s}]" for n in range(1, N + 1) for m, s in cs]


def _dims(trace: AuctionTrace):
    if trace.dims:
        return tuple(trace.dims)
    # no economy shape attached: label columns as a single state
    return trace.demands[0].shape[0], 1, trace.prices[0].shape[0]


def export_trace(trace: AuctionTrace, path, fmt: str = "csv") -> Path:
    """Write a trace as CSV or JSON. Floats are written with repr, so they
    read back bit-exactly.
    """
    if not len(trace):
        raise ValueError("trace is empty")
    path = Path(path)
    N, S, M = _dims(trace)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(trace_columns(N, S, M))
        for t, p, z, d in zip(trace.iterations, trace.prices, trace.excess, trace.demands):
            w.writerow([t] + [repr(float(v)) for v in np.concatenate([p, z, d.reshape(-1)])])
        text = buf.getvalue()
    elif fmt == "json":
        doc = {
            "N": N, "S": S, "M": M,
            "outcome": trace.outcome,
            "iteration_count": trace.iteration_count,
            "records": [
                {"iter": int(t), "prices": p.tolist(), "excess": z.tolist(), "demands": d.tolist()}
                for t, p, z, d in zip(trace.iterations, trace.prices, trace.excess, trace.demands)
            ],
        }
        text = json.dumps(doc, indent=1) + "\n"
    else:
        raise ValueError(f"unknown trace format {fmt!r}")
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write trace to {path}: {exc}") from exc
    return path


def load_trace(path) -> AuctionTrace:
    path = Path(path)
    tr = AuctionTrace()
    if path.suffix == ".json":
        doc = json.loads(path.read_text(encoding="utf-8"))
        for r in doc["records"]:
            tr.record(r["iter"], r["prices"], r["demands"], r["excess"])
        tr.outcome = doc["outcome"]
        tr.iteration_count = doc["iteration_count"]
        tr.dims = (doc["N"], doc["S"], doc["M"])
        return tr
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    K = sum(c.startswith("p[") for c in header)
    N = sum(c.startswith("d[") for c in header) // K
    M = max(int(c[2:-1].split(",")[0]) for c in header if c.startswith("p["))
    tr.dims = (N, K // M, M)
    for row in rows[1:]:
        vals = np.array([float(v) for v in row[1:]])
        tr.record(int(row[0]), vals[:K], vals[2 * K:].reshape(N, K), vals[K:2 * K])
    tr.iteration_count = tr.iterations[-1] + 1 if tr.iterations else 0
    return tr


def replay_trace(economy: Economy, trace: AuctionTrace) -> bool:
    """Recompute every recorded excess vector from the recorded demands."""
    for p, d, z in zip(trace.prices, trace.demands, trace.excess):
        again = excess_demand(economy, p, d)
        if not np.array_equal(again, z):
            return False
    return True


def commodity_series(trace: AuctionTrace, m: int, s: int, M: int):
    """(iterations, prices, excess) of commodity m in state s, both 0-based."""
    k = s * M + m
    return (np.asarray(trace.iterations), trace.price_matrix()[:, k], trace.excess_matrix()[:, k])


# ---- Edgeworth box ------------------------------------------------------

def _segment_in_box(point, direction):
    # clip the line point + t * direction to the unit box
    lo, hi = -np.inf, np.inf
    for i in range(2):
        if direction[i] == 0:
            if not 0 <= point[i] <= 1:
                return None
            continue
        a = (0 - point[i]) / direction[i]
        b = (1 - point[i]) / direction[i]
        lo, hi = max(lo, min(a, b)), min(hi, max(a, b))
    if lo > hi:
        return None
    return [(np.asarray(point) + lo * np.asarray(direction)).tolist(),
            (np.asarray(point) + hi * np.asarray(direction)).tolist()]


def _indifference(u, level, consumer):
    # linear utility u1 x1 + u2 x2 = level in the consumer's own frame,
    # mapped to consumer-1 coordinates
    u1, u2 = u
    if u1 == 0 and u2 == 0:
        return None
    if u2 != 0:
        own = (0.0, level / u2)
        direction = (1.0, -u1 / u2)
    else:
        own = (level / u1, 0.0)
        direction = (0.0, 1.0)
    if consumer == 1:
        own = (1 - own[0], 1 - own[1])
        direction = (-direction[0], -direction[1])
    return _segment_in_box(own, direction)


def edgeworth_data(economy: Economy, price_sets: dict, allocation=None) -> dict:
    """Plot data for a two-consumer, two-good, one-state divisible economy.

    Coordinates are consumer 1's holdings (x11, x12); consumer 2's origin
    is the opposite corner (1, 1). For every labelled price vector the
    budget line through the endowment and both consumers' indifference
    lines through the endowment and through their demands are given.
    """
    from .demand import demand

    if (economy.N, economy.M, economy.S) != (2, 2, 1) or not economy.divisible:
        raise ValueError(f"Edgeworth box needs N=2, M=2, S=1 divisible goods; got N={economy.N}, "
                         f"M={economy.M}, S={economy.S}, divisible={economy.divisible}")
    e = economy.endowment_vector(0)
    out = {
        "box": {"width": 1.0, "height": 1.0, "origin_consumer_1": [0.0, 0.0], "origin_consumer_2": [1.0, 1.0]},
        "endowment": e.tolist(),
        "prices": {},
    }
    for label, p in price_sets.items():
        p = np.asarray(p, dtype=float)
        entry = {"prices": p.tolist()}
        entry["budget_slope"] = -p[0] / p[1] if p[1] > 0 else None
        entry["budget_line"] = _segment_in_box(e, (p[1], -p[0]))
        curves = []
        for n in range(2):
            u = economy.utilities[n, 0]
            own_e = economy.endowment_vector(n)
            d = demand(economy, n, p).quantities
            for what, x in (("endowment", own_e), ("demand", d)):
                level = float(u @ x)
                curves.append({"consumer": n + 1, "through": what, "level": level,
                               "segment": _indifference(u, level, n)})
        entry["indifference"] = curves
        entry["demand_consumer_1"] = demand(economy, 0, p).quantities.tolist()
        out["prices"][label] = entry
    if allocation is not None:
        out["allocation"] = np.asarray(allocation, dtype=float).reshape(2, -1)[0].tolist()
    return out


def export_edgeworth(economy: Economy, price_sets: dict, path, allocation=None) -> Path:
    path = Path(path)
    path.write_text(json.dumps(edgeworth_data(economy, price_sets, allocation), indent=2) + "\n", encoding="utf-8")
    return path
