"""Scenario files: TOML documents validated into typed objects.

A scenario describes either an explicit economy (utilities, beliefs and
endowments given directly) or a small-cell network from which the economy
is derived. Exactly one of the two tables must be present.
"""
from __future__ import annotations

import math
import re
import sys
from importlib import resources
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import tomli_w
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .market import BELIEF_TOL, Economy, EconomyError
from .tatonnement import AuctionConfig
from .wireless import NetworkScenario, TransmissionScenario, build_economy, state_space

METHODS = ("AUC", "MRP", "NSBS", "MWM", "RND", "ORACLE")
FIXTURES = ("example1", "example2", "example3", "secV_B", "random_small")

Matrix = list[list[float]]
Tensor = list[list[list[float]]]


class ScenarioError(ValueError):
    """Invalid scenario document.

    ``kind`` is ``parse``, ``schema`` or ``invariant``. Parse errors carry
    ``line``/``column``; schema and invariant errors carry the dotted
    ``path`` of the offending field.
    """

    def __init__(self, kind: str, message: str, path: str = "", line: Optional[int] = None,
                 column: Optional[int] = None):
        self.kind = kind
        self.path = path
        self.line = line
        self.column = column
        where = f" at line {line}, column {column}" if line is not None else ""
        field = f" [{path}]" if path else ""
        super().__init__(f"{kind} error{where}{field}: {message}")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _shape(value, depth: int) -> tuple:
    arr = np.asarray(value, dtype=float)
    if arr.ndim != depth:
        raise ValueError(f"expected a {depth}-D array, got ragged or {arr.ndim}-D data")
    return arr.shape


def _check_beliefs(beliefs, prefix: str) -> None:
    for n, row in enumerate(beliefs):
        if any(v < 0 for v in row):
            raise ValueError(f"{prefix}[{n}]: beliefs of consumer {n} must be nonnegative")
        total = math.fsum(row)
        if abs(total - 1.0) > BELIEF_TOL:
            raise ValueError(f"{prefix}[{n}]: beliefs of consumer {n} sum to {total!r}, not 1")


class EconomySpec(_Strict):
    """Explicit economy; tensors are indexed [consumer][state][commodity]."""

    utilities: Tensor
    beliefs: Matrix
    endowments: Tensor

    @model_validator(mode="after")
    def _consistent(self):
        N, S, M = _shape(self.utilities, 3)
        if _shape(self.beliefs, 2) != (N, S):
            raise ValueError(f"beliefs must be {N} x {S}")
        if _shape(self.endowments, 3) != (N, S, M):
            raise ValueError(f"endowments must be {N} x {S} x {M}")
        _check_beliefs(self.beliefs, "beliefs")
        return self


class StatesSpec(_Strict):
    explicit: Optional[list[list[int]]] = None
    per_cell_levels: Optional[list[list[int]]] = None

    @model_validator(mode="after")
    def _one_form(self):
        if (self.explicit is None) == (self.per_cell_levels is None):
            raise ValueError("give exactly one of 'explicit' or 'per_cell_levels'")
        return self


class NetworkSpec(_Strict):
    """Small-cell network. Matrices are N x M (SBS by user).

    With ``root_form`` the matrices hold elementwise square roots of the
    gains, each to be multiplied by ``root_scale`` before squaring.
    """

    channel_gains: Matrix
    fading: Optional[Matrix] = None
    pathloss: Optional[Matrix] = None
    root_form: bool = False
    root_scale: float = Field(1.0, gt=0)
    noise_interference: Union[float, Matrix] = 1.0
    antenna_gain: float = Field(1.0, gt=0)
    log_base: float = Field(2.0, gt=1)
    power_per_level: Optional[dict[str, float]] = None
    transmission: Literal["fixed-power", "full-power", "equal-power"] = "full-power"
    fixed_power: Optional[float] = Field(None, gt=0)
    states: StatesSpec
    beliefs: Optional[Matrix] = None

    @model_validator(mode="after")
    def _consistent(self):
        N, M = _shape(self.channel_gains, 2)
        for name in ("fading", "pathloss"):
            m = getattr(self, name)
            if m is not None and _shape(m, 2) != (N, M):
                raise ValueError(f"{name} must be {N} x {M} like channel_gains")
        if self.transmission == "fixed-power" and self.fixed_power is None:
            raise ValueError("fixed-power transmission needs 'fixed_power'")
        if self.power_per_level is not None:
            for key in self.power_per_level:
                if not re.fullmatch(r"-?\d+", key):
                    raise ValueError(f"power_per_level key {key!r} is not an integer level")
        if self.beliefs is not None:
            _check_beliefs(self.beliefs, "beliefs")
        return self

    def matrix(self, name: str) -> Optional[np.ndarray]:
        m = getattr(self, name)
        if m is None:
            return None
        m = np.asarray(m, dtype=float)
        return (m * self.root_scale) ** 2 if self.root_form else m * self.root_scale


class EndowmentSpec(_Strict):
    policy: Literal["uniform", "random", "explicit"] = "uniform"
    seed: int = 0
    matrix: Optional[Union[Matrix, Tensor]] = None


class AuctionSpec(_Strict):
    alpha: float = Field(1e-4, gt=0)
    max_iterations: int = Field(10_000_000, ge=1)
    clearing_tolerance: float = Field(1e-3, gt=0)
    initial_prices: Optional[Union[float, list[float]]] = None
    record_every: int = Field(1, ge=1)
    independent_states: bool = False

    def config(self) -> AuctionConfig:
        init = self.initial_prices
        if isinstance(init, list):
            init = tuple(init)
        return AuctionConfig(self.alpha, init, self.max_iterations, self.clearing_tolerance,
                             self.record_every, self.independent_states)


class RunSpec(_Strict):
    methods: list[Literal["AUC", "MRP", "NSBS", "MWM", "RND", "ORACLE"]] = ["AUC"]
    rnd_seed: int = 0
    mwm_mode: Literal["rounds", "single"] = "rounds"
    output_dir: Optional[str] = None


class VariantSpec(_Strict):
    """Alternative reading of an explicit economy; unset fields are inherited."""

    description: str = ""
    utilities: Optional[Tensor] = None
    beliefs: Optional[Matrix] = None
    endowments: Optional[Tensor] = None


class ScenarioFile(_Strict):
    name: str
    description: str = ""
    mode: Literal["discrete", "continuous"]
    economy: Optional[EconomySpec] = None
    network: Optional[NetworkSpec] = None
    endowment: Optional[EndowmentSpec] = None
    auction: AuctionSpec = AuctionSpec()
    run: RunSpec = RunSpec()
    variants: dict[str, VariantSpec] = {}

    @model_validator(mode="after")
    def _one_source(self):
        if (self.economy is None) == (self.network is None):
            raise ValueError("give exactly one of the 'economy' or 'network' tables")
        if self.economy is not None and self.endowment is not None:
            raise ValueError("explicit economies carry their endowments; drop the 'endowment' table")
        if self.variants and self.economy is None:
            raise ValueError("variants only apply to explicit economies")
        return self

    @property
    def divisible(self) -> bool:
        return self.mode == "continuous"

    @property
    def is_network(self) -> bool:
        return self.network is not None

    def with_variant(self, variant: Optional[str]) -> "ScenarioFile":
        """Copy with a named variant's fields folded into the economy table."""
        if variant is None:
            return self
        if variant not in self.variants:
            raise ScenarioError("schema", f"unknown variant {variant!r}; have {sorted(self.variants)}", "variants")
        v = self.variants[variant]
        econ = self.economy.model_copy(update={k: getattr(v, k) for k in ("utilities", "beliefs", "endowments")
                                               if getattr(v, k) is not None})
        data = self.model_dump()
        data["economy"] = econ.model_dump()
        data["variants"] = {}
        return ScenarioFile.model_validate(data)

    def network_scenario(self, endowment_seed: Optional[int] = None) -> NetworkScenario:
        if self.network is None:
            raise ScenarioError("schema", "scenario has no network table", "network")
        net = self.network
        end = self.endowment or EndowmentSpec()
        levels = None
        if net.power_per_level is not None:
            levels = {int(k): v for k, v in net.power_per_level.items()}
        st = net.states
        ni = net.noise_interference
        return NetworkScenario(
            channel_gains=net.matrix("channel_gains"),
            states=state_space(st.per_cell_levels, st.explicit),
            transmission=TransmissionScenario(net.transmission, net.fixed_power),
            noise_interference=np.asarray(ni, dtype=float) if isinstance(ni, list) else float(ni),
            antenna_gain=net.antenna_gain,
            power_per_level=levels,
            beliefs=None if net.beliefs is None else np.asarray(net.beliefs, dtype=float),
            endowment_policy=end.policy,
            endowment_seed=end.seed if endowment_seed is None else endowment_seed,
            endowment_matrix=None if end.matrix is None else np.asarray(end.matrix, dtype=float),
            divisible=self.divisible,
            fading=net.matrix("fading"),
            pathloss=net.matrix("pathloss"),
            log_base=net.log_base,
        )

    def build(self, endowment_seed: Optional[int] = None) -> Economy:
        if self.economy is not None:
            e = self.economy
            return Economy(e.utilities, e.beliefs, e.endowments, self.divisible)
        return build_economy(self.network_scenario(endowment_seed))


def _path_of(loc) -> str:
    out = ""
    for part in loc:
        if isinstance(part, int):
            out += f"[{part}]"
        else:
            out += ("." if out else "") + str(part)
    return out


def parse_scenario(text: str, source: str = "<string>") -> ScenarioFile:
    """Parse and fully validate a scenario document."""
    if not text.strip():
        raise ScenarioError("parse", f"{source} is empty", line=1, column=1)
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+), column (\d+)", str(exc))
        line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        raise ScenarioError("parse", str(exc).split(" (at ")[0], line=line, column=col) from None
    try:
        sc = ScenarioFile.model_validate(raw)
    except ValidationError as exc:
        err = exc.errors()[0]
        raise ScenarioError("schema", err["msg"], _path_of(err["loc"])) from None
    _check_invariants(sc)
    return sc


def _check_invariants(sc: ScenarioFile) -> None:
    # build every derived object once so later stages cannot fail on data
    try:
        sc.build()
        for name in sc.variants:
            sc.with_variant(name).build()
        if sc.is_network and sc.divisible != sc.network_scenario().divisible:
            raise EconomyError("mode disagrees with the network description")
        sc.auction.config().start_prices(sc.build().K)
    except ScenarioError:
        raise
    except (EconomyError, ValueError) as exc:
        raise ScenarioError("invariant", str(exc), "economy" if sc.economy is not None else "network") from None


def load_scenario(path) -> ScenarioFile:
    """Load a scenario from a path, or by name from the bundled fixtures."""
    p = Path(path)
    if not p.exists():
        stem = p.name[:-5] if p.name.endswith(".toml") else p.name
        if stem in FIXTURES and p.parent == Path("."):
            return parse_scenario(fixture_text(stem), f"{stem}.toml")
        raise ScenarioError("parse", f"no such scenario file: {path}")
    return parse_scenario(p.read_text(encoding="utf-8"), str(p))


def fixture_text(name: str) -> str:
    return resources.files("cellmarket").joinpath("fixtures", f"{name}.toml").read_text(encoding="utf-8")


def dumps_scenario(sc: ScenarioFile) -> str:
    return tomli_w.dumps(sc.model_dump(exclude_none=True))


def save_scenario(sc: ScenarioFile, path) -> None:
    Path(path).write_text(dumps_scenario(sc), encoding="utf-8")
