"""Small shared helpers: deterministic clocks, canonical JSON, half-up rounding."""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timedelta, timezone
from decimal import ROUND_HALF_UP, Decimal


class Clock:
    """Wall-clock time source."""

    def now_iso(self) -> str:
        return datetime.now(timezone.utc).isoformat(timespec="seconds")


class LogicalClock(Clock):
    """Deterministic clock: a fixed epoch advanced by one second per call.

    Used in scripted/replay runs so that persisted records, snapshots and
    reports are byte-identical across re-runs.
    """

    EPOCH = datetime(2025, 1, 1, tzinfo=timezone.utc)

    def __init__(self) -> None:
        self._ticks = 0

    def now_iso(self) -> str:
        stamp = self.EPOCH + timedelta(seconds=self._ticks)
        self._ticks += 1
        return stamp.isoformat(timespec="seconds")


def canonical_json(obj: object) -> str:
    """Serialize with sorted keys and no whitespace variance (stable hash input)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def stable_hash(obj: object) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def round_half_up(value: float, decimals: int = 1) -> float:
    """Round with ties away from zero, e.g. 0.05 -> 0.1 (banker's rounding would give 0.0)."""
    q = Decimal(10) ** -decimals
    return float(Decimal(repr(value)).quantize(q, rounding=ROUND_HALF_UP))


def normalize_ws(text: str) -> str:
    """Collapse all whitespace runs to single spaces and strip the ends."""
    return " ".join(text.split())
