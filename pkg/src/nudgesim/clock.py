"""UTC millisecond timestamps and their canonical text form."""

import re
from functools import lru_cache
from datetime import date, datetime, timedelta, timezone

MS_PER_HOUR = 3_600_000
MS_PER_DAY = 86_400_000

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_ISO = re.compile(r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}\.\d{3}Z$")


@lru_cache(maxsize=64)
def date_ms(iso_date: str) -> int:
    """Milliseconds since the Unix epoch at 00:00 UTC on ``iso_date``."""
    return (date.fromisoformat(iso_date).toordinal() - date(1970, 1, 1).toordinal()) * MS_PER_DAY


def format_ms(ms: int) -> str:
    """``2024-01-01T09:30:00.000Z`` for an epoch-millisecond instant."""
    dt = _EPOCH + timedelta(milliseconds=ms)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{ms % 1000:03d}Z"


def parse_ms(text: str) -> int:
    if not isinstance(text, str) or not _ISO.match(text):
        raise ValueError(f"bad timestamp {text!r}")
    dt = datetime.fromisoformat(text[:-1]).replace(tzinfo=timezone.utc)
    return (dt - _EPOCH) // timedelta(milliseconds=1)
