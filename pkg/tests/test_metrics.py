import random

import pytest

from nudgesim.clock import MS_PER_DAY, MS_PER_HOUR, date_ms
from nudgesim.logkit import LogRecord
from nudgesim.metrics import (
    METRIC_COLUMNS,
    MetricRow,
    MetricStore,
    StoreError,
    compute_daily_metrics,
    query_window,
    recompute_metrics,
    upsert,
    write_metrics_csv,
)

START = date_ms("2024-01-01")


def rec(event_type, ts_offset=0, uid="u000001", day=0, online=True):
    ts = START + day * MS_PER_DAY + 9 * MS_PER_HOUR + ts_offset
    return LogRecord(0, uid, ts, ts, event_type, "c", None, online, {})


def fixture_day():
    kinds = ["session_start", "nudge_delivered", "nudge_opened", "app_action", "app_action", "app_action", "session_end"]
    return [rec(k, i) for i, k in enumerate(kinds)]


def recount(records, uid):
    mine = [r for r in records if r.user_id == uid]
    return (
        sum(r.event_type == "app_action" for r in mine),
        sum(r.event_type == "session_start" for r in mine),
        sum(r.event_type == "nudge_delivered" for r in mine),
        sum(r.event_type == "nudge_opened" for r in mine),
    )


def test_no_logs_no_rows():
    assert compute_daily_metrics([], 0) == []


def test_fixture_row():
    records = fixture_day()
    (row,) = compute_daily_metrics(records, start_ms=START)
    assert row == MetricRow("u000001", 0, 3, 1, True, 1, 1, 1.0, 1.0)
    assert (row.daily_action_count, row.session_count, row.nudges_delivered, row.nudges_opened) == recount(
        records, "u000001"
    )


def test_random_days_match_recount():
    rng = random.Random(8)
    kinds = ["session_start", "session_end", "app_action", "nudge_delivered", "nudge_opened", "nudge_discarded"]
    for _ in range(200):
        records = [rec(rng.choice(kinds), i, uid=f"u{rng.randint(1, 4):06d}") for i in range(rng.randint(0, 40))]
        for row in compute_daily_metrics(records, 0):
            counts = recount(records, row.user_id)
            assert (row.daily_action_count, row.session_count, row.nudges_delivered, row.nudges_opened) == counts
            assert row.active == (counts[0] >= 1)


def test_open_rate_zero_without_deliveries():
    (row,) = compute_daily_metrics([rec("session_start"), rec("app_action", 1)], 0)
    assert row.open_rate == 0.0 and row.nudges_delivered == 0


def test_online_fraction():
    rows = compute_daily_metrics([rec("session_start"), rec("session_start", 5, online=False)], 0)
    assert rows[0].online_fraction == 0.5


def test_recompute_buckets_by_day():
    records = fixture_day() + [rec("app_action", 0, day=2), rec("app_action", 1, day=2)]
    rows = recompute_metrics(records, START)
    assert [(r.day, r.daily_action_count) for r in rows] == [(0, 3), (2, 2)]


def test_query_window_empty_store():
    assert query_window(MetricStore(), "u000001", 8, 5) == {
        "actions_last_d": 0,
        "sessions_last_d": 0,
        "nudges_last_d": 0,
        "open_rate_last_d": 0.0,
    }


def test_query_window_half_open():
    store = MetricStore()
    upsert(
        store,
        [
            MetricRow("u000001", 3, daily_action_count=100, nudges_delivered=9),
            MetricRow("u000001", 4, daily_action_count=3, session_count=1, nudges_delivered=1, nudges_opened=1),
            MetricRow("u000001", 7, daily_action_count=4, session_count=2, nudges_delivered=1),
            MetricRow("u000001", 9, daily_action_count=50),
            MetricRow("u000002", 5, daily_action_count=50),
        ],
    )
    w = query_window(store, "u000001", 8, 5)
    assert w == {"actions_last_d": 7, "sessions_last_d": 3, "nudges_last_d": 2, "open_rate_last_d": 0.5}
    with pytest.raises(ValueError):
        query_window(store, "u000001", 8, 0)


def test_upsert_idempotent_and_last_write_wins(tmp_path):
    path = tmp_path / "metrics.jsonl"
    row = MetricRow("u000001", 0, 3, 1, True)
    with MetricStore(path) as store:
        store.upsert([row])
        store.flush()
        snapshot = (store.rows(), path.read_bytes())
        store.upsert([row])
        store.flush()
        assert (store.rows(), path.read_bytes()) == snapshot
        newer = MetricRow("u000001", 0, 4, 1, True)
        store.upsert([newer])
        assert store.get("u000001", 0) == newer
        assert len(store) == 1
    with MetricStore(path) as reopened:
        assert reopened.rows() == [newer]


def test_store_error_has_path_and_cause(tmp_path):
    bad = tmp_path / "metrics.jsonl"
    bad.write_text("{not json\n")
    with pytest.raises(StoreError) as info:
        MetricStore(bad)
    assert info.value.path == bad
    assert info.value.cause is not None
    with pytest.raises(StoreError):
        MetricStore(tmp_path / "missing" / "metrics.jsonl")


def test_csv_columns(tmp_path):
    out = tmp_path / "m.csv"
    write_metrics_csv([MetricRow("u000001", 0, 3, 1, True, 1, 1, 1.0, 1.0)], out)
    lines = out.read_text().splitlines()
    assert lines[0].split(",") == list(METRIC_COLUMNS)
    assert lines[1] == "u000001,0,3,1,True,1,1,1.0,1.0"
