"""
Which nudging policy wins?
==========================

Runs the closed loop for a small mixed population under fixed schedules and
learning policies. Every policy sees the same per-user random streams, so
differences come from the decisions alone.
"""

from pathlib import Path

from nudgesim.env_model import load_environment
from nudgesim.harness import run_experiment

config = Path(__file__).resolve().parents[1] / "configs" / "example.json"
env = load_environment(config.read_text())

policies = [
    {"name": "never_nudge"},
    {"name": "always_nudge"},
    {"name": "every_k_days", "k": 3},
    {"name": "epsilon_greedy", "epsilon": 0.1},
    {"name": "thompson_bernoulli"},
    {"name": "lin_ucb"},
]

# %% One run per policy, same seed
results = {}
for spec in policies:
    r = run_experiment(env, spec, keep_logs=False)
    results[spec["name"]] = r.summary()

best = max(s["cumulative_reward"] for s in results.values())
print(f"{'policy':20s} {'cum. reward':>12s} {'regret':>8s} {'nudged':>7s}  outcomes")
for name, s in results.items():
    o = s["outcomes"]
    print(
        f"{name:20s} {s['cumulative_reward']:12.2f} {best - s['cumulative_reward']:8.2f} "
        f"{s['nudge_fraction']:7.1%}  opened={o['opened']} discarded={o['discarded']} "
        f"blocked={o['blocked']} undelivered={o['undelivered']}"
    )

# %% How Thompson's nudge share evolves over the horizon
days = results["thompson_bernoulli"]["days"]
print("\nthompson nudge share by week:")
for start in range(0, len(days), 7):
    week = days[start:start + 7]
    nudged = sum(d["actions"]["nudge"] for d in week)
    total = sum(d["n_users"] for d in week)
    print(f"  days {start:2d}-{start + len(week) - 1:2d}: {nudged / total:.1%}")
