"""Closed-loop experiment: simulate, log, aggregate, reward, decide, repeat.

One decision point per user per day, at the end of the day. A nudge decided
at the end of day ``t`` is pending until the user's first online session
(tried on days ``t+1 .. t+d``); after that it is logged as undelivered.

When a pending nudge exists, the day is first planned under the nudged
response (``n`` including the pending nudges). If that plan has an online
session the nudges are delivered at its start and the plan stands. Otherwise
the day is re-planned from the same random stream under the un-nudged
response; nudges are then delivered at that plan's first online session, if
any, and only count toward ``n`` from the next day on. Users of a blocked
device get their nudges immediately (server side).

Rewards for decisions made at the end of day ``t`` are read from day
``t+1`` metrics. Contexts for the decision at the end of day ``t`` only read
metrics of days ``< t``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .behavior import engagement_multiplier, modulate_matrix, recent_nudge_count
from .clock import MS_PER_DAY, date_ms
from .env_model import NO_NUDGE, Environment, UserModel, sample_population
from .logkit import LogRecord, SyncTracker, order_records, resolve_nudge, session_records
from .markov_engine import day_window, plan_day, simulate_day
from .metrics import (
    COUNT_METRICS,
    DAILY_METRICS,
    WINDOW_METRICS,
    MetricStore,
    compute_daily_metrics,
    query_window,
)
from .policies import ContextVector, Decision, Policy, make_policy
from .streams import POPULATION, policy_stream, stream, user_day_stream


def metric_value(store: MetricStore, user: UserModel, day: int, name: str, d: int) -> float:
    if name in DAILY_METRICS:
        row = store.get(user.user_id, day)
        return float(getattr(row, name)) if row is not None else 0.0
    if name in WINDOW_METRICS:
        return float(query_window(store, user.user_id, day, d)[name])
    if name == "days_since_signup":
        return float(day - user.signup_day)
    raise KeyError(name)


def build_context(store: MetricStore, user: UserModel, day: int, env: Environment) -> ContextVector:
    """Features in configured order, read from metrics of days before ``day``.

    Daily metrics come from ``day - 1``; windowed ones cover
    ``(day - 1 - d, day - 1]``.
    """
    d = env.schedule.nudge_window_days
    values = []
    window = None
    for name in env.rl.context_features:
        if name in WINDOW_METRICS:
            if window is None:
                window = query_window(store, user.user_id, day - 1, d)
            values.append(float(window[name]))
        elif name == "days_since_signup":
            values.append(float(day - user.signup_day))
        else:
            values.append(metric_value(store, user, day - 1, name, d))
    return ContextVector(user.user_id, day, tuple(values))


def compute_reward(store: MetricStore, user: UserModel, day: int, env: Environment, binarize: bool = False) -> float:
    """Configured reward metric for ``(user, day)``.

    With ``binarize`` count metrics become 1.0 when >= 1 (the active flag
    for action counts); rate metrics are already in [0, 1] and pass through.
    """
    name = env.rl.reward_metric
    value = metric_value(store, user, day, name, env.schedule.nudge_window_days)
    if binarize and name in COUNT_METRICS:
        return 1.0 if value >= 1 else 0.0
    return value


@dataclass
class ExperimentResult:
    policy: dict
    seed: int
    days: list[dict]
    decisions: list[Decision]
    outcomes: dict
    users: list[UserModel]
    store: MetricStore
    logs: list[LogRecord] | None = None
    trace: list[tuple] | None = None

    @property
    def policy_name(self) -> str:
        return self.policy["name"]

    def summary(self) -> dict:
        n_dec = len(self.decisions)
        nudges = sum(1 for dec in self.decisions if dec.action != NO_NUDGE)
        return {
            "policy": self.policy,
            "seed": self.seed,
            "n_users": len(self.users),
            "n_decisions": n_dec,
            "nudge_fraction": nudges / n_dec if n_dec else 0.0,
            "cumulative_reward": self.days[-1]["cumulative_reward"] if self.days else 0.0,
            "outcomes": dict(self.outcomes),
            "days": self.days,
        }


@dataclass
class _UserState:
    user: UserModel
    pending: list = field(default_factory=list)
    next_seq: int = 0
    tracker: SyncTracker = field(default_factory=SyncTracker)


def run_experiment(
    env: Environment,
    policy_spec: dict | None = None,
    seed: int | None = None,
    *,
    store: MetricStore | None = None,
    keep_logs: bool = True,
    trace: bool = False,
) -> ExperimentResult:
    """Run the full daily loop for ``env`` under one policy.

    ``seed`` overrides ``env.seed``. Two runs with the same environment and
    seed produce identical outputs; runs with different policies share every
    per-user random stream (paired comparison).
    """
    seed = env.seed if seed is None else int(seed)
    spec = dict(policy_spec or env.rl.policy)
    policy: Policy = make_policy(spec, env.rl.action_set, len(env.rl.context_features))
    store = store if store is not None else MetricStore()
    d = env.schedule.nudge_window_days
    horizon = env.schedule.horizon_days
    start_ms = date_ms(env.schedule.start_date)
    nudge_cfg = env.nudges

    states = [_UserState(u) for u in sample_population(env, stream(seed, POPULATION))]
    contexts = {c.context_id: c for c in env.contexts}
    sigma_cache: dict = {}

    def sigma_for(user: UserModel, n: int) -> float:
        if n == 0:
            return 1.0
        key = (user.context_id, user.alpha, user.beta, user.gamma, n)
        s = sigma_cache.get(key)
        if s is None:
            s = sigma_cache[key] = engagement_multiplier(user, n, contexts[user.context_id].decay_params).sigma
        return s

    logs: list[LogRecord] | None = [] if keep_logs else None
    trace_rows: list[tuple] | None = [] if trace else None
    decisions: list[Decision] = []
    outcomes = {"opened": 0, "discarded": 0, "blocked": 0, "undelivered": 0}
    days: list[dict] = []
    cumulative = 0.0
    yesterday: list[tuple[_UserState, Decision, ContextVector]] = []

    for day in range(horizon):
        matrices: dict = {}
        day_records: list[LogRecord] = []
        for st in states:
            u = st.user
            if day < u.signup_day:
                continue
            ctx = contexts[u.context_id]
            lo, hi = day_window(env, ctx, day)
            gen = user_day_stream(seed, u.index, day)
            n0 = recent_nudge_count(u.nudge_history, day, d)
            due = st.pending
            delivering: list = []
            delivery_ts = None
            if not due:
                n = n0
                sigma = sigma_for(u, n)
                plan = plan_day(u, env, day, gen, sigma)
            else:
                counts = not u.blocked or nudge_cfg.count_blocked_nudges
                n = n0 + (len(due) if counts else 0)
                sigma = sigma_for(u, n)
                plan = plan_day(u, env, day, gen, sigma)
                if u.blocked:
                    delivering = due
                elif plan.first_online is not None:
                    delivering, delivery_ts = due, plan.first_online
                else:
                    gen = user_day_stream(seed, u.index, day)
                    n = n0
                    sigma = sigma_for(u, n)
                    plan = plan_day(u, env, day, gen, sigma)
                    if plan.first_online is not None:
                        delivering, delivery_ts = due, plan.first_online

            key = (u.context_id, sigma)
            matrix = matrices.get(key)
            if matrix is None:
                matrix = matrices[key] = modulate_matrix(ctx.baseline_matrix, sigma)
            if trace_rows is not None:
                trace_rows.append((u.user_id, day, n, sigma, matrix))

            events = simulate_day(u, env, matrix, day, gen, sigma, plan)
            records = session_records(events)

            history = list(u.nudge_history)
            blocked = u.blocked
            still_pending = []
            session_id = None
            if delivery_ts is not None:
                k = plan.start_times.index(delivery_ts)
                session_id = f"{u.user_id}-{day}-{k}"
            deliver_now = bool(delivering)
            for item in due:
                decision_day, nudge_type = item
                if deliver_now:
                    was_blocked = blocked
                    outcome, recs = resolve_nudge(
                        dataclasses.replace(u, blocked=True) if was_blocked and not u.blocked else u,
                        nudge_type,
                        day,
                        sigma,
                        gen,
                        None if was_blocked else delivery_ts,
                        server_ts=delivery_ts if delivery_ts is not None else lo,
                        decision_day=decision_day,
                        session_id=None if was_blocked else session_id,
                        p_open_base=nudge_cfg.p_open_base,
                        block_prob=nudge_cfg.block_prob,
                    )
                    counted = not was_blocked or nudge_cfg.count_blocked_nudges
                    history.append((day, nudge_type, counted))
                    if outcome.outcome == "blocked":
                        blocked = True
                elif decision_day + d <= day:
                    outcome, recs = resolve_nudge(
                        u, nudge_type, day, sigma, gen, None, server_ts=hi - 1, decision_day=decision_day
                    )
                    history.append((day, nudge_type, False))
                else:
                    still_pending.append(item)
                    continue
                outcomes[outcome.outcome] += 1
                records.extend(recs)
            if due:
                st.pending = still_pending
                st.user = u = dataclasses.replace(u, nudge_history=tuple(history), blocked=blocked)

            st.next_seq = order_records(records, st.next_seq)
            st.tracker.feed(records)
            day_records.extend(records)

        store.upsert(compute_daily_metrics(day_records, day))
        if logs is not None:
            logs.extend(day_records)

        for st, dec, cvec in yesterday:
            reward = compute_reward(store, st.user, day, env, binarize=policy.binary_reward)
            policy.update(dec, cvec, reward)

        enrolled = [st for st in states if st.user.signup_day <= day]
        rewards = [compute_reward(store, st.user, day, env) for st in enrolled]
        mean_reward = sum(rewards) / len(rewards) if rewards else 0.0
        cumulative += mean_reward

        cvecs = [build_context(store, st.user, day, env) for st in enrolled]
        todays = policy.decide(cvecs, policy_stream(seed, day))
        action_counts = {a: 0 for a in env.rl.action_set}
        for st, dec in zip(enrolled, todays):
            action_counts[dec.action] += 1
            if dec.action != NO_NUDGE:
                st.pending.append((day, dec.action))
        decisions.extend(todays)
        yesterday = list(zip(enrolled, todays, cvecs))
        days.append(
            {
                "day": day,
                "n_users": len(enrolled),
                "mean_reward": mean_reward,
                "cumulative_reward": cumulative,
                "actions": action_counts,
            }
        )

    flush_ts = start_ms + horizon * MS_PER_DAY
    for st in states:
        st.tracker.flush(flush_ts)
    store.flush()
    if logs is not None:
        logs.sort(key=lambda r: ((r.ts - start_ms) // MS_PER_DAY, r.user_id, r.event_seq))

    return ExperimentResult(
        policy=policy.spec(),
        seed=seed,
        days=days,
        decisions=decisions,
        outcomes=outcomes,
        users=[st.user for st in states],
        store=store,
        logs=logs,
        trace=trace_rows,
    )
