"""Sandboxed SQLite execution and execution-accuracy comparison.

Candidate and gold queries run read-only with a timeout; outputs are compared
as SETS of row tuples (duplicates collapsed, row order ignored, column order
significant), the convention used by the benchmark's reference evaluator.
"""

from __future__ import annotations

import re
import sqlite3
import time
from dataclasses import dataclass
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .corpus import DatabaseCatalog, TaskInstance

DEFAULT_TIMEOUT_MS = 30_000
DEFAULT_ROW_CAP = 100_000

# Absolute tolerance for real-valued cells. Values are quantized to this grid
# before set comparison so that matching stays a true equivalence relation.
REAL_ABS_TOL = 1e-6

_WRITE_KEYWORDS = ("INSERT", "UPDATE", "DELETE", "DROP", "ALTER", "CREATE", "ATTACH", "PRAGMA")
_STRING_LITERAL = re.compile(r"'(?:[^']|'')*'|\"(?:[^\"]|\"\")*\"")
_WRITE_SCREEN = re.compile(r"\b(" + "|".join(_WRITE_KEYWORDS) + r")\b", re.IGNORECASE)

ROWS = "Rows"
SQL_ERROR = "SqlError"
TIMEOUT = "Timeout"

MISMATCH_ARITY = "arity"
MISMATCH_VALUES = "values"
MISMATCH_ERROR = "error"
MISMATCH_TIMEOUT = "timeout"
MISMATCH_GOLD_DEFECT = "gold-defect"


class GoldDefectError(Exception):
    """The gold query itself fails to execute; the task cannot be scored."""


@dataclass
class ExecutionOutcome:
    status: str
    rows: list[tuple] | None = None
    error_text: str | None = None
    elapsed_ms: float = 0.0
    n_columns: int = 0
    truncated: bool = False

    def __post_init__(self) -> None:
        if self.status == ROWS:
            assert self.rows is not None and self.error_text is None
        else:
            assert self.rows is None


@dataclass
class TaskResult:
    task_id: str
    candidate_sql: str
    z: int | None
    outcome: ExecutionOutcome
    gold_outcome: ExecutionOutcome | None = None
    mismatch_reason: str | None = None

    @property
    def scorable(self) -> bool:
        return self.z is not None


def screen_write_statement(sql: str) -> str | None:
    """Return the offending keyword if the statement looks like a write, else None.

    String literals are stripped first so a SELECT mentioning 'CREATE' in a
    text value is not rejected. Read-only connection mode is the backstop.
    """
    stripped = _STRING_LITERAL.sub("''", sql)
    m = _WRITE_SCREEN.search(stripped)
    return m.group(1).upper() if m else None


def execute(
    catalog: DatabaseCatalog,
    sql: str,
    timeout_ms: int = DEFAULT_TIMEOUT_MS,
    row_cap: int = DEFAULT_ROW_CAP,
) -> ExecutionOutcome:
    """Run one read-only statement, capturing rows or the engine's error text."""
    if timeout_ms <= 0:
        raise ValueError("timeout_ms must be positive")
    keyword = screen_write_statement(sql)
    if keyword is not None:
        return ExecutionOutcome(
            status=SQL_ERROR,
            error_text=f"statement rejected: write keyword {keyword} is not permitted",
        )

    start = time.monotonic()
    deadline = start + timeout_ms / 1000.0
    timed_out = False

    def _progress() -> int:
        nonlocal timed_out
        if time.monotonic() > deadline:
            timed_out = True
            return 1
        return 0

    uri = f"file:{catalog.sqlite_path}?mode=ro"
    conn = sqlite3.connect(uri, uri=True)
    try:
        conn.set_progress_handler(_progress, 1000)
        conn.text_factory = lambda b: b.decode("utf-8", errors="replace")
        try:
            cursor = conn.execute(sql)
            n_columns = len(cursor.description) if cursor.description else 0
            rows: list[tuple] = []
            truncated = False
            while True:
                batch = cursor.fetchmany(1024)
                if not batch:
                    break
                rows.extend(batch)
                if len(rows) > row_cap:
                    rows = rows[:row_cap]
                    truncated = True
                    break
            elapsed = (time.monotonic() - start) * 1000.0
            return ExecutionOutcome(
                status=ROWS,
                rows=rows,
                elapsed_ms=elapsed,
                n_columns=n_columns,
                truncated=truncated,
            )
        except sqlite3.Error as exc:
            elapsed = (time.monotonic() - start) * 1000.0
            if timed_out:
                return ExecutionOutcome(status=TIMEOUT, error_text=f"timeout after {timeout_ms} ms", elapsed_ms=elapsed)
            return ExecutionOutcome(status=SQL_ERROR, error_text=str(exc), elapsed_ms=elapsed)
    finally:
        conn.close()


def _canonical_scalar(value: object) -> object:
    """Map a cell onto an exact comparison key; reals snap to a 1e-6 grid."""
    if value is None:
        return ("null",)
    if isinstance(value, int):
        return ("n", value * 1_000_000)
    if isinstance(value, float):
        if value != value:
            return ("nan",)
        if value in (float("inf"), float("-inf")):
            return ("inf", value > 0)
        try:
            return ("n", round(value / REAL_ABS_TOL))
        except OverflowError:
            return ("n-big", value)
    if isinstance(value, bytes):
        return ("b", value)
    return ("t", str(value))


def canonical_rows(rows: list[tuple]) -> frozenset[tuple]:
    return frozenset(tuple(_canonical_scalar(v) for v in row) for row in rows)


def outputs_match(a: ExecutionOutcome, b: ExecutionOutcome) -> bool:
    """True iff both executions produced rows and the row SETS are equal."""
    if a.status != ROWS or b.status != ROWS:
        return False
    return canonical_rows(a.rows or []) == canonical_rows(b.rows or [])


def _mismatch_reason(candidate: ExecutionOutcome, gold: ExecutionOutcome) -> str:
    if candidate.status == SQL_ERROR:
        return MISMATCH_ERROR
    if candidate.status == TIMEOUT:
        return MISMATCH_TIMEOUT
    if candidate.n_columns != gold.n_columns:
        return MISMATCH_ARITY
    return MISMATCH_VALUES


def score(
    catalog: DatabaseCatalog,
    task: TaskInstance,
    candidate_sql: str,
    timeout_ms: int = DEFAULT_TIMEOUT_MS,
) -> TaskResult:
    """Execute gold and candidate independently and decide binary correctness.

    A failing gold query marks the task as a corpus defect: z is undefined and
    the task is excluded from accuracy aggregates rather than counted against
    the candidate.
    """
    if not candidate_sql.strip():
        raise ValueError("candidate_sql must be non-empty")
    gold = execute(catalog, task.gold_sql, timeout_ms=timeout_ms)
    candidate = execute(catalog, candidate_sql, timeout_ms=timeout_ms)
    if gold.status != ROWS:
        return TaskResult(
            task_id=task.task_id,
            candidate_sql=candidate_sql,
            z=None,
            outcome=candidate,
            gold_outcome=gold,
            mismatch_reason=MISMATCH_GOLD_DEFECT,
        )
    if outputs_match(candidate, gold):
        return TaskResult(
            task_id=task.task_id,
            candidate_sql=candidate_sql,
            z=1,
            outcome=candidate,
            gold_outcome=gold,
        )
    return TaskResult(
        task_id=task.task_id,
        candidate_sql=candidate_sql,
        z=0,
        outcome=candidate,
        gold_outcome=gold,
        mismatch_reason=_mismatch_reason(candidate, gold),
    )
