"""Daily activity generation.

A user's day is a Poisson number of sessions started uniformly inside the
context's active hours. Each session is a walk on the user's current
transition matrix that ends on reaching ``out_of_app``; every visited state
becomes an :class:`ActionEvent`. All times are UTC epoch milliseconds.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .clock import MS_PER_DAY, MS_PER_HOUR, date_ms
from .env_model import ContextSpec, Environment, TransitionMatrix, UserModel

DEFAULT_MAX_LEN = 1000
GAP_MEDIAN_MS = 20_000
GAP_SIGMA = 0.8
_BLOCK = 16


@dataclass(slots=True)
class ActionEvent:
    user_id: str
    day: int
    timestamp: int
    session_id: str
    state_name: str
    online: bool
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SessionPlan:
    session_count: int
    start_times: tuple[int, ...]
    online_flags: tuple[bool, ...]

    @property
    def first_online(self) -> int | None:
        for t, on in zip(self.start_times, self.online_flags):
            if on:
                return t
        return None


@lru_cache(maxsize=1024)
def state_category(state_name: str) -> str:
    """``"patient_mgmt/register"`` -> ``"patient_mgmt"``; bare names are ``"general"``."""
    head, sep, _ = state_name.partition("/")
    return head if sep else "general"


def day_window(env: Environment, ctx: ContextSpec, day: int) -> tuple[int, int]:
    """Active-hours window ``[start, end)`` of ``day`` in epoch ms."""
    midnight = date_ms(env.schedule.start_date) + day * MS_PER_DAY
    h0, h1 = ctx.active_hours
    return midnight + round(h0 * MS_PER_HOUR), midnight + round(h1 * MS_PER_HOUR)


def plan_day(user: UserModel, env: Environment, day: int, rng: np.random.Generator, sigma: float = 1.0) -> SessionPlan:
    ctx = env.context(user.context_id)
    count = int(rng.poisson(ctx.session_rate_per_day * sigma))
    if count == 0:
        return SessionPlan(0, (), ())
    lo, hi = day_window(env, ctx, day)
    starts = sorted(lo + int(u * (hi - lo)) for u in rng.random(count).tolist())
    online = tuple(bool(u < ctx.p_online) for u in rng.random(count).tolist())
    return SessionPlan(count, tuple(starts), online)


def _pick(cum: list[float], u: float) -> int:
    return bisect_right(cum, u * cum[-1])


def walk_session(matrix: TransitionMatrix, rng: np.random.Generator, max_len: int = DEFAULT_MAX_LEN) -> list[str]:
    """States visited before absorption in ``out_of_app`` (at most ``max_len``)."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    out = matrix.out_index
    cum_rows = matrix.cumulative_rows
    states = matrix.states
    uniforms = rng.random(_BLOCK).tolist()
    k = 0
    s = _pick(matrix.cumulative_initial, uniforms[k])
    walk = []
    while True:
        walk.append(states[s])
        if len(walk) >= max_len:
            return walk
        k += 1
        if k == _BLOCK:
            uniforms = rng.random(_BLOCK).tolist()
            k = 0
        s = _pick(cum_rows[s], uniforms[k])
        if s == out:
            return walk


def assign_timestamps(states: list, session_start: int, rng: np.random.Generator) -> list[int]:
    """First event at ``session_start``; then lognormal gaps (median 20 s), >= 1 ms."""
    if not states:
        raise ValueError("states must be nonempty")
    times = [session_start]
    if len(states) > 1:
        gaps = rng.lognormal(math.log(GAP_MEDIAN_MS), GAP_SIGMA, len(states) - 1)
        t = session_start
        for g in np.rint(gaps).tolist():
            t += max(1, int(g))
            times.append(t)
    return times


def simulate_day(
    user: UserModel,
    env: Environment,
    matrix: TransitionMatrix,
    day: int,
    rng: np.random.Generator,
    sigma: float = 1.0,
    plan: SessionPlan | None = None,
    max_len: int = DEFAULT_MAX_LEN,
) -> list[ActionEvent]:
    """All action events of ``user`` on ``day``, session by session.

    Events that would spill past the end of the active-hours window are
    dropped, which ends that session early.
    """
    if plan is None:
        plan = plan_day(user, env, day, rng, sigma)
    ctx = env.context(user.context_id)
    _, end = day_window(env, ctx, day)
    events = []
    for k, (start, online) in enumerate(zip(plan.start_times, plan.online_flags)):
        session_id = f"{user.user_id}-{day}-{k}"
        walk = walk_session(matrix, rng, max_len)
        for state, ts in zip(walk, assign_timestamps(walk, start, rng)):
            if ts >= end:
                break
            events.append(ActionEvent(user.user_id, day, ts, session_id, state, online, {"category": state_category(state)}))
    return events
