import copy
import json
import sys
from pathlib import Path

import pytest

from nudgesim.env_model import environment_from_dict

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

TWO_STATE = {"states": ["session_start", "out_of_app"], "rows": [[0.5, 0.5], [0, 1]], "initial": [1, 0]}
BROWSE = {
    "states": ["session_start", "app/browse", "out_of_app"],
    "rows": [[0.0, 0.6, 0.4], [0.0, 0.5, 0.5], [0, 0, 1]],
    "initial": [1, 0, 0],
}


def point(v):
    return {"kind": "point_mass", "value": v}


def make_config(
    users=1,
    horizon=1,
    weights=(1, 0, 0),
    matrix=None,
    rate=2.0,
    p_online=1.0,
    hours=(8, 20),
    decay=None,
    features=("actions_last_d", "nudges_last_d"),
    reward="daily_action_count",
    seed=7,
    **extra,
):
    ctx = {
        "context_id": "ctx_a",
        "baseline_matrix": copy.deepcopy(matrix or TWO_STATE),
        "session_rate_per_day": rate,
        "active_hours": list(hours),
        "p_online": p_online,
        "weight_distributions": {"alpha": point(weights[0]), "beta": point(weights[1]), "gamma": point(weights[2])},
    }
    if decay is not None:
        ctx["decay_params"] = dict(decay)
    cfg = {
        "contexts": [ctx],
        "population": [{"context_id": "ctx_a", "user_count": users}],
        "schedule": {"horizon_days": horizon},
        "rl": {"reward_metric": reward, "context_features": list(features), "action_set": ["no_nudge", "nudge"]},
        "seed": seed,
    }
    cfg.update(extra)
    return cfg


def make_env(**kw):
    return environment_from_dict(make_config(**kw))


@pytest.fixture
def minimal_config_text():
    return (CONFIGS / "minimal.json").read_text()


@pytest.fixture
def example_config():
    return json.loads((CONFIGS / "example.json").read_text())


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
