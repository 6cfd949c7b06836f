"""Environment definition: validated config objects and population sampling.

An environment is loaded from a single JSON document (see
``config.schema.json`` next to this module). Structural checks run through
the JSON schema; semantic checks (row sums, absorption, cross references to
contexts and metric names) run here and report the offending path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from typing import Any

import jsonschema
import numpy as np

from .metrics import METRIC_CATALOG

SESSION_START = "session_start"
OUT_OF_APP = "out_of_app"
NO_NUDGE = "no_nudge"

ROW_TOL = 1e-12
DEFAULT_WINDOW_DAYS = 5
DEFAULT_START_DATE = "2024-01-01"


class ConfigError(ValueError):
    """Invalid environment configuration.

    ``path`` is a dotted/indexed location inside the config document, e.g.
    ``contexts[0].baseline_matrix.rows[1]``.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


class ConfigParseError(ConfigError):
    pass


@dataclass(frozen=True)
class DecayParams:
    k_a: float = 0.2
    k_b: float = 1.0
    a0: float = 1.0
    b0: float = 1.0
    c0: float = 1.0

    def __post_init__(self):
        if not (self.k_a > 0 and self.k_b > 0):
            raise ValueError("decay rates k_a and k_b must be positive")
        if min(self.a0, self.b0, self.c0) < 0:
            raise ValueError("decay amplitudes must be nonnegative")


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic matrix over app states, ``rows[from][to]``."""

    states: tuple[str, ...]
    rows: tuple[tuple[float, ...], ...]
    initial: tuple[float, ...]

    @classmethod
    def from_lists(cls, states, rows, initial) -> TransitionMatrix:
        return cls(
            tuple(states),
            tuple(tuple(float(p) for p in row) for row in rows),
            tuple(float(p) for p in initial),
        )

    @cached_property
    def index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.states)}

    @cached_property
    def out_index(self) -> int:
        return self.index[OUT_OF_APP]

    @cached_property
    def cumulative_rows(self) -> tuple[list[float], ...]:
        # cumulative sums used by the walk sampler (bisect on u * total)
        return tuple(np.cumsum(row).tolist() for row in self.rows)

    @cached_property
    def cumulative_initial(self) -> list[float]:
        return np.cumsum(self.initial).tolist()

    def as_array(self) -> np.ndarray:
        return np.array(self.rows, dtype=float)

    def to_dict(self) -> dict:
        return {"states": list(self.states), "rows": [list(r) for r in self.rows], "initial": list(self.initial)}


def validate_matrix(m: TransitionMatrix) -> list[str]:
    """Return every violated matrix invariant; an empty list means valid."""
    report = []
    k = len(m.states)
    if len(set(m.states)) != k:
        report.append("duplicate state names")
    for name in (SESSION_START, OUT_OF_APP):
        if name not in m.states:
            report.append(f"missing required state '{name}'")
    if len(m.rows) != k:
        report.append(f"matrix has {len(m.rows)} rows for {k} states")
    for i, row in enumerate(m.rows):
        if len(row) != k:
            report.append(f"row {i} has {len(row)} entries, expected {k}")
            continue
        for j, p in enumerate(row):
            if not math.isfinite(p):
                report.append(f"non-finite entry at ({i},{j})")
            elif p < 0:
                report.append(f"negative entry at ({i},{j})")
            elif p > 1:
                report.append(f"entry > 1 at ({i},{j})")
        s = math.fsum(row)
        if not abs(s - 1.0) <= ROW_TOL:
            report.append(f"row {i}: row sum {s:.15g} ≠ 1")
    if len(m.initial) != k:
        report.append(f"initial distribution has {len(m.initial)} entries, expected {k}")
    else:
        for j, p in enumerate(m.initial):
            if not (math.isfinite(p) and 0 <= p <= 1):
                report.append(f"initial entry out of [0,1] at ({j})")
        s = math.fsum(m.initial)
        if not abs(s - 1.0) <= ROW_TOL:
            report.append(f"initial distribution sum {s:.15g} ≠ 1")
    if OUT_OF_APP in m.states and len(m.rows) == k:
        o = m.states.index(OUT_OF_APP)
        row = m.rows[o]
        if len(row) == k and any(p != (1.0 if j == o else 0.0) for j, p in enumerate(row)):
            report.append(f"out_of_app row {o} is not absorbing")
        if len(m.initial) == k and m.initial[o] != 0:
            report.append("initial distribution places mass on out_of_app")
    return report


@dataclass(frozen=True)
class WeightDistribution:
    kind: str
    params: tuple[tuple[str, float], ...]

    @classmethod
    def point_mass(cls, value: float) -> WeightDistribution:
        return cls("point_mass", (("value", float(value)),))

    @classmethod
    def uniform(cls, lo: float, hi: float) -> WeightDistribution:
        return cls("uniform", (("lo", float(lo)), ("hi", float(hi))))

    @classmethod
    def lognormal(cls, mu: float, sigma: float) -> WeightDistribution:
        return cls("lognormal", (("mu", float(mu)), ("sigma", float(sigma))))

    def sample(self, rng: np.random.Generator) -> float:
        p = dict(self.params)
        if self.kind == "point_mass":
            return p["value"]
        if self.kind == "uniform":
            return float(rng.uniform(p["lo"], p["hi"]))
        if self.kind == "lognormal":
            return float(rng.lognormal(p["mu"], p["sigma"]))
        raise ValueError(f"unknown distribution kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, **dict(self.params)}


@dataclass(frozen=True)
class ContextSpec:
    context_id: str
    baseline_matrix: TransitionMatrix
    session_rate_per_day: float
    active_hours: tuple[float, float]
    p_online: float
    decay_params: DecayParams
    weight_distributions: tuple[WeightDistribution, WeightDistribution, WeightDistribution]


@dataclass(frozen=True)
class PopulationEntry:
    context_id: str
    user_count: int
    signup_day: int = 0


@dataclass(frozen=True)
class Schedule:
    horizon_days: int
    decisions_per_day: int = 1
    nudge_window_days: int = DEFAULT_WINDOW_DAYS
    start_date: str = DEFAULT_START_DATE


@dataclass(frozen=True)
class RLSpec:
    reward_metric: str
    context_features: tuple[str, ...]
    action_set: tuple[str, ...]
    policy: dict = field(default_factory=lambda: {"name": "thompson_bernoulli"})
    compare: tuple[dict, ...] = ()


@dataclass(frozen=True)
class NudgeSpec:
    p_open_base: float = 0.3
    block_prob: float = 0.01
    count_blocked_nudges: bool = True


@dataclass(frozen=True)
class Environment:
    contexts: tuple[ContextSpec, ...]
    population: tuple[PopulationEntry, ...]
    schedule: Schedule
    rl: RLSpec
    seed: int
    nudges: NudgeSpec = NudgeSpec()

    def context(self, context_id: str) -> ContextSpec:
        for c in self.contexts:
            if c.context_id == context_id:
                return c
        raise KeyError(context_id)

    @property
    def n_users(self) -> int:
        return sum(p.user_count for p in self.population)


@dataclass(frozen=True)
class UserModel:
    user_id: str
    context_id: str
    alpha: float
    beta: float
    gamma: float
    nudge_history: tuple[tuple[int, str, bool], ...] = ()
    blocked: bool = False
    signup_day: int = 0
    index: int = 0

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError(f"{self.user_id}: weights must be nonnegative")


# --- loading -----------------------------------------------------------------

_schema_cache: dict | None = None


def config_schema() -> dict:
    global _schema_cache
    if _schema_cache is None:
        text = resources.files(__package__).joinpath("config.schema.json").read_text(encoding="utf-8")
        _schema_cache = json.loads(text)
    return _schema_cache


def _format_path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


def _parse_matrix(d: dict, path: str) -> TransitionMatrix:
    m = TransitionMatrix.from_lists(d["states"], d["rows"], d["initial"])
    report = validate_matrix(m)
    if report:
        raise ConfigError(path, "; ".join(report))
    return m


def _parse_distribution(d: dict, path: str) -> WeightDistribution:
    kind = d["kind"]
    if kind == "point_mass":
        return WeightDistribution.point_mass(d["value"])
    if kind == "uniform":
        if d["lo"] > d["hi"]:
            raise ConfigError(path, f"uniform lo {d['lo']} > hi {d['hi']}")
        return WeightDistribution.uniform(d["lo"], d["hi"])
    return WeightDistribution.lognormal(d["mu"], d["sigma"])


def environment_from_dict(doc: Any) -> Environment:
    errors = sorted(jsonschema.Draft202012Validator(config_schema()).iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(_format_path(e.absolute_path), e.message)

    contexts = []
    seen = set()
    for i, c in enumerate(doc["contexts"]):
        path = f"contexts[{i}]"
        cid = c["context_id"]
        if cid in seen:
            raise ConfigError(f"{path}.context_id", f"duplicate context_id {cid!r}")
        seen.add(cid)
        h0, h1 = c["active_hours"]
        if not h0 < h1:
            raise ConfigError(f"{path}.active_hours", f"h_start {h0} must be < h_end {h1}")
        wd = c["weight_distributions"]
        contexts.append(
            ContextSpec(
                context_id=cid,
                baseline_matrix=_parse_matrix(c["baseline_matrix"], f"{path}.baseline_matrix"),
                session_rate_per_day=float(c["session_rate_per_day"]),
                active_hours=(float(h0), float(h1)),
                p_online=float(c["p_online"]),
                decay_params=DecayParams(**{k: float(v) for k, v in c.get("decay_params", {}).items()}),
                weight_distributions=tuple(
                    _parse_distribution(wd[name], f"{path}.weight_distributions.{name}")
                    for name in ("alpha", "beta", "gamma")
                ),
            )
        )

    population = []
    for i, p in enumerate(doc["population"]):
        if p["context_id"] not in seen:
            raise ConfigError(f"population[{i}].context_id", f"unknown context_id {p['context_id']!r}")
        population.append(PopulationEntry(p["context_id"], p["user_count"], p.get("signup_day", 0)))

    s = doc["schedule"]
    schedule = Schedule(
        horizon_days=s["horizon_days"],
        decisions_per_day=s.get("decisions_per_day", 1),
        nudge_window_days=s.get("nudge_window_days", DEFAULT_WINDOW_DAYS),
        start_date=s.get("start_date", DEFAULT_START_DATE),
    )

    r = doc["rl"]
    if r["reward_metric"] not in METRIC_CATALOG:
        raise ConfigError("rl.reward_metric", f"unknown metric name {r['reward_metric']!r}")
    for i, name in enumerate(r["context_features"]):
        if name not in METRIC_CATALOG:
            raise ConfigError(f"rl.context_features[{i}]", f"unknown metric name {name!r}")
    if NO_NUDGE not in r["action_set"]:
        raise ConfigError("rl.action_set", f"action set must contain {NO_NUDGE!r}")
    rl = RLSpec(
        reward_metric=r["reward_metric"],
        context_features=tuple(r["context_features"]),
        action_set=tuple(r["action_set"]),
        policy=dict(r.get("policy", {"name": "thompson_bernoulli"})),
        compare=tuple(dict(p) for p in r.get("compare", ())),
    )

    n = doc.get("nudges", {})
    nudges = NudgeSpec(
        p_open_base=float(n.get("p_open_base", 0.3)),
        block_prob=float(n.get("block_prob", 0.01)),
        count_blocked_nudges=bool(n.get("count_blocked_nudges", True)),
    )
    return Environment(tuple(contexts), tuple(population), schedule, rl, int(doc["seed"]), nudges)


def load_environment(config_text: str) -> Environment:
    """Parse and validate a JSON config document."""
    try:
        doc = json.loads(config_text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"line {exc.lineno} column {exc.colno}", f"malformed JSON: {exc.msg}") from exc
    return environment_from_dict(doc)


def environment_to_dict(env: Environment) -> dict:
    return {
        "contexts": [
            {
                "context_id": c.context_id,
                "baseline_matrix": c.baseline_matrix.to_dict(),
                "session_rate_per_day": c.session_rate_per_day,
                "active_hours": list(c.active_hours),
                "p_online": c.p_online,
                "decay_params": {
                    "k_a": c.decay_params.k_a,
                    "k_b": c.decay_params.k_b,
                    "a0": c.decay_params.a0,
                    "b0": c.decay_params.b0,
                    "c0": c.decay_params.c0,
                },
                "weight_distributions": {
                    name: dist.to_dict() for name, dist in zip(("alpha", "beta", "gamma"), c.weight_distributions)
                },
            }
            for c in env.contexts
        ],
        "population": [
            {"context_id": p.context_id, "user_count": p.user_count, "signup_day": p.signup_day} for p in env.population
        ],
        "schedule": {
            "horizon_days": env.schedule.horizon_days,
            "decisions_per_day": env.schedule.decisions_per_day,
            "nudge_window_days": env.schedule.nudge_window_days,
            "start_date": env.schedule.start_date,
        },
        "rl": {
            "reward_metric": env.rl.reward_metric,
            "context_features": list(env.rl.context_features),
            "action_set": list(env.rl.action_set),
            "policy": env.rl.policy,
            "compare": list(env.rl.compare),
        },
        "nudges": {
            "p_open_base": env.nudges.p_open_base,
            "block_prob": env.nudges.block_prob,
            "count_blocked_nudges": env.nudges.count_blocked_nudges,
        },
        "seed": env.seed,
    }


def dump_environment(env: Environment) -> str:
    """Canonical JSON text for ``env``; ``load_environment`` inverts it."""
    return json.dumps(environment_to_dict(env), indent=2, ensure_ascii=False) + "\n"


# --- population --------------------------------------------------------------


def format_user_id(index: int) -> str:
    return f"u{index:06d}"


def sample_population(env: Environment, rng: np.random.Generator) -> list[UserModel]:
    """Draw ``sum(user_count)`` users in config order.

    Weights are sampled alpha, beta, gamma per user, in sequence, from the
    user's context distributions. Ids are ``u000001``, ``u000002``, ...
    """
    users = []
    index = 0
    for entry in env.population:
        ctx = env.context(entry.context_id)
        for _ in range(entry.user_count):
            index += 1
            a, b, g = (d.sample(rng) for d in ctx.weight_distributions)
            users.append(
                UserModel(
                    user_id=format_user_id(index),
                    context_id=ctx.context_id,
                    alpha=a,
                    beta=b,
                    gamma=g,
                    signup_day=entry.signup_day,
                    index=index,
                )
            )
    return users
