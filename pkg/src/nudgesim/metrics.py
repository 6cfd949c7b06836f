"""Per-(user, day) metrics computed from log records, and their store.

The store is an append-only JSON Lines journal (``metrics.jsonl``). On open
the journal is replayed into an in-memory index; a later line for the same
``(user_id, day)`` replaces an earlier one.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import astuple, dataclass, fields

DAILY_METRICS = (
    "daily_action_count",
    "session_count",
    "active",
    "nudges_delivered",
    "nudges_opened",
    "open_rate",
    "online_fraction",
)
WINDOW_METRICS = ("actions_last_d", "sessions_last_d", "nudges_last_d", "open_rate_last_d")
USER_METRICS = ("days_since_signup",)
METRIC_CATALOG = DAILY_METRICS + WINDOW_METRICS + USER_METRICS
COUNT_METRICS = frozenset(
    {
        "daily_action_count",
        "session_count",
        "nudges_delivered",
        "nudges_opened",
        "actions_last_d",
        "sessions_last_d",
        "nudges_last_d",
        "days_since_signup",
    }
)

MS_PER_DAY = 86_400_000


class StoreError(OSError):
    def __init__(self, path, cause):
        self.path = path
        self.cause = cause
        super().__init__(f"{path}: {cause}")


@dataclass(frozen=True, slots=True)
class MetricRow:
    user_id: str
    day: int
    daily_action_count: int = 0
    session_count: int = 0
    active: bool = False
    nudges_delivered: int = 0
    nudges_opened: int = 0
    open_rate: float = 0.0
    online_fraction: float = 0.0

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


METRIC_COLUMNS = tuple(f.name for f in fields(MetricRow))


def compute_daily_metrics(records, day: int | None = None, start_ms: int = 0) -> list[MetricRow]:
    """One row per user appearing in ``records`` (all from the same day), sorted by user id.

    ``day`` defaults to the day index of the first record relative to
    ``start_ms`` (midnight UTC of simulation day 0).
    """
    counts: dict[str, list[int]] = {}
    for r in records:
        if day is None:
            day = (r.ts - start_ms) // MS_PER_DAY
        c = counts.get(r.user_id)
        if c is None:
            c = counts[r.user_id] = [0, 0, 0, 0, 0]
        t = r.event_type
        if t == "app_action":
            c[0] += 1
        elif t == "session_start":
            c[1] += 1
            if r.online:
                c[2] += 1
        elif t == "nudge_delivered":
            c[3] += 1
        elif t == "nudge_opened":
            c[4] += 1
    rows = []
    for uid in sorted(counts):
        actions, sessions, online, delivered, opened = counts[uid]
        rows.append(
            MetricRow(
                uid,
                day,
                actions,
                sessions,
                actions >= 1,
                delivered,
                opened,
                opened / delivered if delivered else 0.0,
                online / sessions if sessions else 0.0,
            )
        )
    return rows


def recompute_metrics(records, start_ms: int) -> list[MetricRow]:
    """Rows for every (user, day) in an arbitrary record stream, bucketed by ``ts`` date."""
    by_day: dict[int, list] = {}
    for r in records:
        by_day.setdefault((r.ts - start_ms) // MS_PER_DAY, []).append(r)
    rows = []
    for day in sorted(by_day):
        rows.extend(compute_daily_metrics(by_day[day], day))
    return sorted(rows, key=lambda r: (r.day, r.user_id))


def _row_line(row: MetricRow) -> str:
    return json.dumps(row.to_dict(), separators=(",", ":")) + "\n"


class MetricStore:
    """Last-write-wins store keyed by ``(user_id, day)``.

    With ``path=None`` the store lives in memory only.
    """

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = path
        self._index: dict[tuple[str, int], MetricRow] = {}
        self._fh = None
        if path is not None:
            try:
                if os.path.exists(path):
                    with open(path, encoding="utf-8") as fh:
                        for line in fh:
                            if line.strip():
                                row = MetricRow(**json.loads(line))
                                self._index[(row.user_id, row.day)] = row
                self._fh = open(path, "a", encoding="utf-8", newline="\n")
            except (OSError, ValueError, TypeError) as exc:
                raise StoreError(path, exc) from exc

    def upsert(self, rows):
        lines = []
        for row in rows:
            key = (row.user_id, row.day)
            if self._index.get(key) == row:
                continue
            self._index[key] = row
            if self._fh is not None:
                lines.append(_row_line(row))
        if lines:
            try:
                self._fh.write("".join(lines))
            except OSError as exc:
                raise StoreError(self.path, exc) from exc

    def get(self, user_id: str, day: int) -> MetricRow | None:
        return self._index.get((user_id, day))

    def rows(self) -> list[MetricRow]:
        return sorted(self._index.values(), key=lambda r: (r.day, r.user_id))

    def flush(self):
        if self._fh is not None:
            try:
                self._fh.flush()
            except OSError as exc:
                raise StoreError(self.path, exc) from exc

    def close(self):
        if self._fh is not None:
            self.flush()
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __len__(self):
        return len(self._index)


def upsert(store: MetricStore, rows):
    store.upsert(rows)


def query_window(store: MetricStore, user_id: str, day: int, d: int) -> dict:
    """Windowed metrics over days ``(day - d, day]``; missing days count as zero."""
    if d < 1:
        raise ValueError("window length d must be >= 1")
    actions = sessions = delivered = opened = 0
    index = store._index
    for k in range(day - d + 1, day + 1):
        row = index.get((user_id, k))
        if row is not None:
            actions += row.daily_action_count
            sessions += row.session_count
            delivered += row.nudges_delivered
            opened += row.nudges_opened
    return {
        "actions_last_d": actions,
        "sessions_last_d": sessions,
        "nudges_last_d": delivered,
        "open_rate_last_d": opened / delivered if delivered else 0.0,
    }


def write_metrics_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for row in rows:
            w.writerow(astuple(row))
