"""
One user, one day, end to end
=============================

Walks a single user through a day: plan sessions, walk the Markov chain,
stamp the actions, turn them into log lines, then roll the logs up into the
day's metrics.
"""

import json
from pathlib import Path

from nudgesim.behavior import engagement_multiplier, modulate_matrix
from nudgesim.env_model import load_environment, sample_population
from nudgesim.logkit import emit_action_logs, serialize
from nudgesim.markov_engine import plan_day, simulate_day
from nudgesim.metrics import compute_daily_metrics
from nudgesim.streams import POPULATION, stream, user_day_stream

config = Path(__file__).resolve().parents[1] / "configs" / "example.json"
env = load_environment(config.read_text())
user = sample_population(env, stream(env.seed, POPULATION))[0]
ctx = env.context(user.context_id)
print(f"{user.user_id} in {ctx.context_id}: alpha={user.alpha:.3f} beta={user.beta:.3f} gamma={user.gamma:.3f}")

# %% Suppose five nudges landed in the last few days
sigma = engagement_multiplier(user, 5, ctx.decay_params).sigma
matrix = modulate_matrix(ctx.baseline_matrix, sigma)
print(f"sigma with n=5: {sigma:.3f}")
print("session_start row, baseline :", [round(p, 3) for p in ctx.baseline_matrix.rows[0]])
print("session_start row, modulated:", [round(p, 3) for p in matrix.rows[0]])

# %% Plan and simulate day 0 from the user's own random stream
rng = user_day_stream(env.seed, user.index, 0)
plan = plan_day(user, env, 0, rng, sigma)
print(f"\n{plan.session_count} sessions planned, online flags {plan.online_flags}")
events = simulate_day(user, env, matrix, 0, rng, sigma, plan)
for e in events[:8]:
    print(f"  {e.session_id:14s} {e.state_name:24s} online={e.online}")
if len(events) > 8:
    print(f"  ... {len(events) - 8} more")

# %% Logs: offline actions wait for the next online session to sync
records = emit_action_logs(events, flush_ts=None)
print("\nfirst log line:")
print(serialize(records[:1]).decode().strip() if records else "(no activity today)")

# %% Metrics for the day
for row in compute_daily_metrics(records, 0):
    print("\n" + json.dumps(row.to_dict(), indent=2))
