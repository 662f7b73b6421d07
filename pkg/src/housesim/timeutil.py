"""Wall-clock <-> virtual-time conversions.

Virtual time is integer milliseconds since a per-run epoch. Wall-clock
datetimes appear only at persistence and wire boundaries, always as
ISO-8601 UTC with a trailing ``Z``.
"""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

UTC = timezone.utc

MS = timedelta(milliseconds=1)


def parse_iso8601(text: str) -> datetime:
    """Parse a strict ISO-8601 datetime with an explicit UTC/offset marker.

    Returns an aware datetime normalized to UTC. Raises ValueError for
    anything else (naive datetimes, date-only strings, bad fields).
    """
    if len(text) < 11 or text[10] != "T":
        raise ValueError(f"not an ISO-8601 datetime: {text!r}")
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        raise ValueError("datetime must carry an explicit UTC offset")
    return dt.astimezone(UTC)


def format_iso8601(dt: datetime) -> str:
    """Canonical ISO-8601 UTC text: seconds, plus milliseconds when nonzero."""
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=UTC)
    dt = dt.astimezone(UTC)
    base = dt.strftime("%Y-%m-%dT%H:%M:%S")
    if dt.microsecond:
        return f"{base}.{dt.microsecond // 1000:03d}Z"
    return base + "Z"


def to_virtual_ms(dt: datetime, epoch: datetime) -> int:
    """Milliseconds from ``epoch`` to ``dt`` (negative if dt precedes it)."""
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=UTC)
    return (dt - epoch) // MS


def from_virtual_ms(ms: int, epoch: datetime) -> datetime:
    return epoch + ms * MS
