"""Lightweight SQL structure extraction and rule-based error classification.

This is a clause inventory, not a full parser: good enough to compare two
benchmark-style SELECT statements on tables, filters, aggregates and DISTINCT.
Classification is a reconstruction from the observed error families and is
labelled as such in reports.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum


class ErrorCategory(str, Enum):
    FILTER = "Filter"
    DISTINCT = "Distinct"
    JOIN = "Join"
    AGGREGATION = "Aggregation"
    TABLE_SELECTION = "TableSelection"
    OTHER = "Other"


_AGGREGATES = {"count", "sum", "avg", "min", "max", "total", "group_concat"}

_CLAUSE_KEYWORDS = {
    "where",
    "group",
    "order",
    "having",
    "limit",
    "union",
    "intersect",
    "except",
    "on",
    "join",
    "inner",
    "left",
    "right",
    "full",
    "cross",
    "natural",
    "outer",
    "using",
}

_TOKEN_RE = re.compile(
    r"""
    '(?:[^']|'')*'          # single-quoted string
  | "(?:[^"]|"")*"          # double-quoted identifier
  | `[^`]*`                 # backtick identifier
  | \[[^\]]*\]              # bracket identifier
  | \d+\.\d+ | \.\d+ | \d+  # numbers
  | [A-Za-z_][A-Za-z0-9_]*  # words
  | <> | <= | >= | != | \|\| # multi-char operators
  | .                       # anything else, one char
    """,
    re.VERBOSE,
)

_COMMENT_RE = re.compile(r"--[^\n]*|/\*.*?\*/", re.DOTALL)


def tokenize(sql: str) -> list[str]:
    cleaned = _COMMENT_RE.sub(" ", sql)
    return [t for t in _TOKEN_RE.findall(cleaned) if t.strip()]


def _unquote(token: str) -> str:
    if len(token) >= 2 and token[0] in "\"`[" :
        return token[1:-1]
    return token


def _is_word(token: str) -> bool:
    return bool(re.match(r"^[A-Za-z_]", token)) or token[0] in "\"`["


@dataclass(frozen=True)
class ClauseInventory:
    tables: frozenset[str]
    distinct: bool
    aggregates: frozenset[str]
    filter_text: str
    literals: frozenset[str]
    select_arity: int
    parsed: bool


def _extract_tables(tokens: list[str]) -> frozenset[str]:
    tables: set[str] = set()
    i = 0
    while i < len(tokens):
        word = tokens[i].lower()
        if word in ("from", "join"):
            j = i + 1
            expecting_table = True
            while j < len(tokens):
                tok = tokens[j]
                low = tok.lower()
                if tok == "(":
                    break  # subquery; its own FROM will be scanned later
                if expecting_table:
                    if _is_word(tok) and low not in _CLAUSE_KEYWORDS and low != "select":
                        tables.add(_unquote(tok).lower())
                        expecting_table = False
                        j += 1
                        continue
                    break
                if low == "as":
                    j += 2  # skip alias
                    continue
                if _is_word(tok) and low not in _CLAUSE_KEYWORDS and low != "select":
                    j += 1  # bare alias
                    continue
                if tok == ",":
                    expecting_table = True
                    j += 1
                    continue
                break
            i = j
            continue
        i += 1
    return frozenset(tables)


def _extract_filters(tokens: list[str]) -> tuple[str, frozenset[str]]:
    """All WHERE/HAVING segments (any nesting depth), qualifier-stripped."""
    segments: list[str] = []
    literals: set[str] = set()
    i = 0
    depth = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok == "(":
            depth += 1
        elif tok == ")":
            depth -= 1
        elif tok.lower() in ("where", "having"):
            start_depth = depth
            j = i + 1
            part: list[str] = []
            while j < len(tokens):
                t = tokens[j]
                low = t.lower()
                if t == "(":
                    depth += 1
                elif t == ")":
                    if depth == start_depth:
                        break
                    depth -= 1
                elif depth == start_depth and low in ("group", "order", "limit", "having", "where", "union", "intersect", "except"):
                    break
                part.append(t)
                j += 1
            # drop alias qualifiers: x.col -> col
            stripped: list[str] = []
            k = 0
            while k < len(part):
                if k + 1 < len(part) and part[k + 1] == "." and _is_word(part[k]):
                    k += 2
                    continue
                token = part[k]
                if token.startswith("'"):
                    literals.add(token.lower())
                elif re.match(r"^\d", token):
                    literals.add(token)
                stripped.append(_unquote(token).lower() if _is_word(token) else token.lower())
                k += 1
            segments.append(" ".join(stripped))
            i = j
            continue
        i += 1
    return " | ".join(segments), frozenset(literals)


def _extract_aggregates(tokens: list[str]) -> frozenset[str]:
    found: set[str] = set()
    for i, tok in enumerate(tokens[:-1]):
        if tok.lower() in _AGGREGATES and tokens[i + 1] == "(":
            found.add(tok.lower())
    return frozenset(found)


def _select_arity(tokens: list[str]) -> int:
    """Number of top-level select-list items in the first SELECT."""
    try:
        start = next(i for i, t in enumerate(tokens) if t.lower() == "select")
    except StopIteration:
        return 0
    depth = 0
    arity = 1
    for tok in tokens[start + 1 :]:
        low = tok.lower()
        if tok == "(":
            depth += 1
        elif tok == ")":
            depth -= 1
            if depth < 0:
                break
        elif depth == 0 and low == "from":
            break
        elif depth == 0 and tok == ",":
            arity += 1
    return arity


def inventory(sql: str) -> ClauseInventory:
    tokens = tokenize(sql)
    words = {t.lower() for t in tokens}
    parsed = "select" in words
    filter_text, literals = _extract_filters(tokens)
    return ClauseInventory(
        tables=_extract_tables(tokens),
        distinct="distinct" in words,
        aggregates=_extract_aggregates(tokens),
        filter_text=filter_text,
        literals=literals,
        select_arity=_select_arity(tokens),
        parsed=parsed,
    )


def classify_error(gold_sql: str, candidate_sql: str) -> tuple[ErrorCategory, str | None]:
    """Categorize a failed candidate against the gold query.

    Pure function of the two query texts. Difference checks run in fixed
    priority order: TableSelection > Join > Aggregation > Filter > Distinct >
    Other. Returns (category, optional tag).
    """
    cand = inventory(candidate_sql)
    if not cand.parsed:
        return ErrorCategory.OTHER, "unparsed"
    gold = inventory(gold_sql)
    if not gold.parsed:
        return ErrorCategory.OTHER, "gold-unparsed"

    if gold.tables and cand.tables and not (gold.tables & cand.tables):
        return ErrorCategory.TABLE_SELECTION, None
    if gold.tables != cand.tables:
        return ErrorCategory.JOIN, None
    if gold.aggregates != cand.aggregates:
        return ErrorCategory.AGGREGATION, None
    if gold.filter_text != cand.filter_text or gold.literals != cand.literals:
        return ErrorCategory.FILTER, None
    if gold.distinct != cand.distinct:
        return ErrorCategory.DISTINCT, None
    return ErrorCategory.OTHER, None
