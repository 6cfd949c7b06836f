"""Log records in the SDK-style schema, nudge reactions, and JSONL encoding.

Wire format: one JSON object per line, UTF-8, keys in the order of
``LOG_FIELDS``, no whitespace, timestamps as ``YYYY-MM-DDTHH:MM:SS.mmmZ``.
Equal records always encode to identical bytes.

Offline activity reaches the server late: a record produced while offline
gets ``sync_ts`` equal to the start of the user's next online session, or
the end-of-horizon flush time if there is none.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import groupby

import numpy as np

from .clock import format_ms, parse_ms
from .env_model import NO_NUDGE, UserModel

EVENT_TYPES = (
    "app_action",
    "nudge_delivered",
    "nudge_opened",
    "nudge_discarded",
    "nudge_blocked",
    "nudge_undelivered",
    "session_start",
    "session_end",
)
OUTCOMES = ("opened", "discarded", "blocked", "undelivered")
LOG_FIELDS = ("event_seq", "user_id", "ts", "sync_ts", "event_type", "category", "session_id", "online", "metadata")

# tiebreak for records sharing a timestamp
_RANK = {
    "session_start": 0,
    "nudge_delivered": 1,
    "nudge_opened": 2,
    "nudge_discarded": 2,
    "nudge_blocked": 2,
    "nudge_undelivered": 2,
    "app_action": 3,
    "session_end": 4,
}


class LogParseError(ValueError):
    def __init__(self, line: int, field_name: str, message: str):
        self.line = line
        self.field = field_name
        super().__init__(f"line {line}, field {field_name!r}: {message}")


@dataclass(slots=True)
class LogRecord:
    event_seq: int
    user_id: str
    ts: int
    sync_ts: int | None
    event_type: str
    category: str
    session_id: str | None
    online: bool
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class NudgeOutcome:
    decision_day: int
    nudge_type: str
    outcome: str
    delivered: bool


# --- emission ----------------------------------------------------------------


def session_records(events) -> list[LogRecord]:
    """Bracket each session's events with session_start/session_end.

    Records come back unsequenced (``event_seq=-1``) and unsynced.
    """
    out = []
    for session_id, group in groupby(events, key=lambda e: e.session_id):
        group = list(group)
        first, last = group[0], group[-1]
        uid, online = first.user_id, first.online
        out.append(LogRecord(-1, uid, first.timestamp, None, "session_start", "session", session_id, online, {}))
        for e in group:
            meta = {"state": e.state_name}
            meta.update((k, v) for k, v in e.metadata.items() if k != "category")
            out.append(
                LogRecord(-1, uid, e.timestamp, None, "app_action", e.metadata.get("category", "general"), session_id, online, meta)
            )
        out.append(LogRecord(-1, uid, last.timestamp, None, "session_end", "session", session_id, online, {}))
    return out


def order_records(records: list[LogRecord], start_seq: int) -> int:
    """Sort one user's records by time in place and number them from ``start_seq``.

    Returns the next free sequence number.
    """
    records.sort(key=lambda r: (r.ts, _RANK[r.event_type]))
    for i, r in enumerate(records):
        r.event_seq = start_seq + i
    return start_seq + len(records)


class SyncTracker:
    """Assigns ``sync_ts`` for one user's records fed in sequence order."""

    def __init__(self):
        self.pending: list[LogRecord] = []

    def feed(self, records):
        for r in records:
            if r.online:
                r.sync_ts = r.ts
                if r.event_type == "session_start" and self.pending:
                    for p in self.pending:
                        p.sync_ts = r.ts
                    self.pending.clear()
            else:
                self.pending.append(r)

    def flush(self, ts: int):
        for p in self.pending:
            p.sync_ts = max(ts, p.ts)
        self.pending.clear()


def emit_action_logs(events, flush_ts: int | None = None) -> list[LogRecord]:
    """Log records for a batch of action events (any number of users).

    Each user's records are numbered from 0 in time order. Offline records
    with no later online session are flushed at ``flush_ts`` (default: the
    user's last record time).
    """
    by_user: dict[str, dict[str, list]] = {}
    for e in events:
        by_user.setdefault(e.user_id, {}).setdefault(e.session_id, []).append(e)
    out = []
    for uid in sorted(by_user):
        records = session_records([e for session in by_user[uid].values() for e in session])
        order_records(records, 0)
        tracker = SyncTracker()
        tracker.feed(records)
        tracker.flush(flush_ts if flush_ts is not None else records[-1].ts)
        out.extend(records)
    return out


def reaction_probabilities(sigma, p_open_base=0.3, block_prob=0.01) -> dict:
    """Probabilities of each reaction for a delivered nudge to an unblocked user."""
    p_open = min(1, p_open_base * sigma)
    return {
        "opened": p_open,
        "blocked": (1 - p_open) * block_prob,
        "discarded": (1 - p_open) * (1 - block_prob),
    }


def resolve_nudge(
    user: UserModel,
    nudge_type: str,
    day: int,
    sigma: float,
    rng: np.random.Generator,
    delivery_ts: int | None,
    *,
    server_ts: int | None = None,
    decision_day: int | None = None,
    session_id: str | None = None,
    p_open_base: float = 0.3,
    block_prob: float = 0.01,
) -> tuple[NudgeOutcome, list[LogRecord]]:
    """Outcome and log records for one nudge.

    ``delivery_ts`` is the start of the user's next online session within
    the delivery window, or None when there is none. ``server_ts`` stamps
    records that do not need the device (blocked users, undelivered nudges);
    it defaults to ``delivery_ts``.
    """
    if nudge_type == NO_NUDGE:
        raise ValueError("no_nudge is not a deliverable nudge")
    if decision_day is None:
        decision_day = day - 1
    uid = user.user_id
    meta = {"nudge_type": nudge_type, "decision_day": str(decision_day)}

    def rec(kind, ts, sid=None):
        return LogRecord(-1, uid, ts, ts, kind, "nudge", sid, True, dict(meta))

    if user.blocked:
        ts = delivery_ts if delivery_ts is not None else server_ts
        outcome = NudgeOutcome(decision_day, nudge_type, "blocked", True)
        return outcome, [rec("nudge_delivered", ts), rec("nudge_blocked", ts)]
    if delivery_ts is None:
        return NudgeOutcome(decision_day, nudge_type, "undelivered", False), [rec("nudge_undelivered", server_ts)]

    p_open = min(1.0, p_open_base * sigma)
    if rng.random() < p_open:
        reaction = "opened"
    elif rng.random() < block_prob:
        reaction = "blocked"
    else:
        reaction = "discarded"
    records = [rec("nudge_delivered", delivery_ts, session_id), rec(f"nudge_{reaction}", delivery_ts, session_id)]
    return NudgeOutcome(decision_day, nudge_type, reaction, True), records


# --- serialization -----------------------------------------------------------


def record_to_dict(r: LogRecord) -> dict:
    return {
        "event_seq": r.event_seq,
        "user_id": r.user_id,
        "ts": format_ms(r.ts),
        "sync_ts": format_ms(r.sync_ts),
        "event_type": r.event_type,
        "category": r.category,
        "session_id": r.session_id,
        "online": r.online,
        "metadata": r.metadata,
    }


def serialize_line(r: LogRecord) -> bytes:
    return json.dumps(record_to_dict(r), ensure_ascii=False, separators=(",", ":")).encode("utf-8") + b"\n"


def serialize(records) -> bytes:
    return b"".join(serialize_line(r) for r in records)


def _check(cond, line, name, message):
    if not cond:
        raise LogParseError(line, name, message)


def parse_line(text: str, line: int) -> LogRecord:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LogParseError(line, "", f"malformed JSON: {exc.msg}") from None
    _check(isinstance(d, dict), line, "", "expected an object")
    for name in LOG_FIELDS:
        _check(name in d, line, name, "missing")
    extra = set(d) - set(LOG_FIELDS)
    _check(not extra, line, sorted(extra)[0] if extra else "", "unexpected field")
    seq = d["event_seq"]
    _check(isinstance(seq, int) and not isinstance(seq, bool), line, "event_seq", "expected integer")
    _check(isinstance(d["user_id"], str), line, "user_id", "expected string")
    stamps = {}
    for name in ("ts", "sync_ts"):
        try:
            stamps[name] = parse_ms(d[name])
        except ValueError as exc:
            raise LogParseError(line, name, str(exc)) from None
    _check(d["event_type"] in EVENT_TYPES, line, "event_type", f"unknown event type {d['event_type']!r}")
    _check(isinstance(d["category"], str), line, "category", "expected string")
    _check(d["session_id"] is None or isinstance(d["session_id"], str), line, "session_id", "expected string or null")
    _check(isinstance(d["online"], bool), line, "online", "expected boolean")
    meta = d["metadata"]
    _check(isinstance(meta, dict), line, "metadata", "expected object")
    _check(all(isinstance(v, str) for v in meta.values()), line, "metadata", "values must be strings")
    return LogRecord(seq, d["user_id"], stamps["ts"], stamps["sync_ts"], d["event_type"], d["category"], d["session_id"], d["online"], meta)


def parse(data: bytes) -> list[LogRecord]:
    """Inverse of :func:`serialize`. Raises LogParseError with the 1-based line number."""
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise LogParseError(0, "", f"invalid UTF-8: {exc}") from None
    if not text:
        return []
    lines = text.split("\n")
    if lines[-1] == "":
        lines.pop()
    return [parse_line(t, i) for i, t in enumerate(lines, start=1)]
