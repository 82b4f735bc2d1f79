"""BIRD Dev corpus ingestion: questions, gold SQL, SQLite catalogs, splits.

Expected directory layout::

    <root>/dev.json
    <root>/dev_databases/<db_id>/<db_id>.sqlite
    <root>/dev_databases/<db_id>/database_description/*.csv

Evidence is loaded with each task but is only ever consumed by the expert
proxy and the coverage metric; agents never see it.
"""

from __future__ import annotations

import csv
import json
import random
import sqlite3
from dataclasses import dataclass, field
from pathlib import Path


class CorpusError(Exception):
    """Fatal ingestion problem (missing database, malformed questions file)."""


@dataclass(frozen=True)
class TaskInstance:
    """One benchmark item: a question with its gold SQL and expert hint."""

    task_id: str
    db_id: str
    nlq: str
    gold_sql: str
    evidence: str = ""
    difficulty: str | None = None

    def __post_init__(self) -> None:
        if not self.nlq.strip():
            raise CorpusError(f"task {self.task_id}: empty question")
        if not self.gold_sql.strip():
            raise CorpusError(f"task {self.task_id}: empty gold SQL")


@dataclass(frozen=True)
class ColumnDescription:
    original_name: str
    friendly_name: str = ""
    description: str = ""
    value_description: str = ""


@dataclass
class DatabaseCatalog:
    """A single SQLite database plus its description CSVs and rendered schema."""

    db_id: str
    sqlite_path: Path
    tables: list[tuple[str, list[tuple[str, str]]]] = field(default_factory=list)
    descriptions: dict[str, list[ColumnDescription]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def schema_text(self) -> str:
        return render_schema(self)


@dataclass
class EvalSplit:
    db_id: str
    train: list[TaskInstance]
    test: list[TaskInstance]
    seed: int


@dataclass
class Corpus:
    root: Path
    tasks: list[TaskInstance]
    catalogs: dict[str, DatabaseCatalog]

    def tasks_for(self, db_id: str) -> list[TaskInstance]:
        return [t for t in self.tasks if t.db_id == db_id]

    def counts_by_db(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for t in self.tasks:
            counts[t.db_id] = counts.get(t.db_id, 0) + 1
        return counts


def _read_table_layout(sqlite_path: Path) -> list[tuple[str, list[tuple[str, str]]]]:
    """Tables and columns in SQLite declaration order."""
    uri = f"file:{sqlite_path}?mode=ro"
    conn = sqlite3.connect(uri, uri=True)
    try:
        names = [
            r[0]
            for r in conn.execute(
                "SELECT name FROM sqlite_master WHERE type='table'"
                " AND name NOT LIKE 'sqlite_%' ORDER BY rowid"
            )
        ]
        tables = []
        for name in names:
            cols = [
                (r[1], r[2] or "")
                for r in conn.execute(f'PRAGMA table_info("{name}")')
            ]
            tables.append((name, cols))
        return tables
    finally:
        conn.close()


def _read_descriptions(desc_dir: Path, warnings: list[str]) -> dict[str, list[ColumnDescription]]:
    descriptions: dict[str, list[ColumnDescription]] = {}
    if not desc_dir.is_dir():
        return descriptions
    for csv_path in sorted(desc_dir.glob("*.csv")):
        table = csv_path.stem
        rows: list[ColumnDescription] = []
        try:
            raw = csv_path.read_bytes()
            try:
                text = raw.decode("utf-8")
            except UnicodeDecodeError:
                text = raw.decode("latin-1")
            for rec in csv.DictReader(text.splitlines()):
                original = (rec.get("original_column_name") or "").strip()
                if not original:
                    continue
                rows.append(
                    ColumnDescription(
                        original_name=original,
                        friendly_name=(rec.get("column_name") or "").strip(),
                        description=(rec.get("column_description") or "").strip(),
                        value_description=(rec.get("value_description") or "").strip(),
                    )
                )
        except (OSError, csv.Error) as exc:
            warnings.append(f"description CSV {csv_path.name} unreadable: {exc}")
            continue
        descriptions[table] = rows
    return descriptions


def load_catalog(root: Path, db_id: str) -> DatabaseCatalog:
    sqlite_path = root / "dev_databases" / db_id / f"{db_id}.sqlite"
    if not sqlite_path.is_file():
        raise CorpusError(f"database '{db_id}': missing SQLite file {sqlite_path}")
    warnings: list[str] = []
    catalog = DatabaseCatalog(db_id=db_id, sqlite_path=sqlite_path, warnings=warnings)
    catalog.tables = _read_table_layout(sqlite_path)
    catalog.descriptions = _read_descriptions(
        sqlite_path.parent / "database_description", warnings
    )
    known = {name for name, _ in catalog.tables}
    for table in list(catalog.descriptions):
        if table not in known:
            warnings.append(f"description CSV for unknown table '{table}' ignored")
            del catalog.descriptions[table]
    return catalog


def load_bird(root: str | Path) -> Corpus:
    """Ingest a BIRD-style directory into tasks plus per-database catalogs.

    Every database referenced by at least one question is loaded; a missing
    SQLite file for a referenced database is fatal. Description CSV problems
    degrade to warnings recorded on the catalog.
    """
    root = Path(root)
    questions_path = root / "dev.json"
    if not questions_path.is_file():
        raise CorpusError(f"missing questions file {questions_path}")
    try:
        raw = json.loads(questions_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusError(
            f"malformed questions file {questions_path}: {exc.msg} at byte offset {exc.pos}"
        ) from exc
    if not isinstance(raw, list):
        raise CorpusError(f"questions file {questions_path}: expected a JSON array")

    tasks: list[TaskInstance] = []
    seen_ids: set[str] = set()
    for i, rec in enumerate(raw):
        task_id = str(rec.get("question_id", i))
        if task_id in seen_ids:
            raise CorpusError(f"duplicate task id '{task_id}' in {questions_path}")
        seen_ids.add(task_id)
        tasks.append(
            TaskInstance(
                task_id=task_id,
                db_id=str(rec["db_id"]),
                nlq=str(rec["question"]),
                gold_sql=str(rec["SQL"]),
                evidence=str(rec.get("evidence", "")),
                difficulty=rec.get("difficulty"),
            )
        )

    catalogs: dict[str, DatabaseCatalog] = {}
    for db_id in sorted({t.db_id for t in tasks}):
        catalogs[db_id] = load_catalog(root, db_id)
    return Corpus(root=root, tasks=tasks, catalogs=catalogs)


def render_schema(catalog: DatabaseCatalog) -> str:
    """Render CREATE-style blocks with inline column descriptions.

    Pure function of the catalog: tables and columns appear in SQLite
    declaration order, so identical catalogs render byte-identically.
    """
    blocks: list[str] = []
    for table, columns in catalog.tables:
        described = {d.original_name: d for d in catalog.descriptions.get(table, [])}
        lines = [f'CREATE TABLE "{table}" (']
        for i, (col, decl_type) in enumerate(columns):
            sep = "," if i < len(columns) - 1 else ""
            entry = f'  "{col}" {decl_type}'.rstrip() + sep
            desc = described.get(col)
            if desc is not None:
                note_parts = [p for p in (desc.friendly_name, desc.description) if p]
                if desc.value_description:
                    note_parts.append(f"values: {desc.value_description}")
                if note_parts:
                    note = " | ".join(" ".join(p.split()) for p in note_parts)
                    entry += f"  -- {note}"
            lines.append(entry)
        lines.append(");")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


def split_tasks(corpus: Corpus, db_id: str, seed: int) -> EvalSplit:
    """Deterministic shuffle then halve; train takes the extra task on odd counts."""
    if db_id not in corpus.catalogs:
        raise CorpusError(f"unknown database '{db_id}'")
    tasks = corpus.tasks_for(db_id)
    order = list(tasks)
    random.Random(seed).shuffle(order)
    n_train = (len(order) + 1) // 2
    return EvalSplit(db_id=db_id, train=order[:n_train], test=order[n_train:], seed=seed)


def save_questions(tasks: list[TaskInstance], path: str | Path) -> None:
    """Write tasks back out in the dev.json question format (round-trippable)."""
    records = [
        {
            "question_id": t.task_id,
            "db_id": t.db_id,
            "question": t.nlq,
            "evidence": t.evidence,
            "SQL": t.gold_sql,
            **({"difficulty": t.difficulty} if t.difficulty is not None else {}),
        }
        for t in tasks
    ]
    Path(path).write_text(json.dumps(records, indent=2) + "\n", encoding="utf-8")


def save_corpus_manifest(corpus: Corpus, path: str | Path) -> dict:
    manifest = {
        "root": str(corpus.root),
        "task_count": len(corpus.tasks),
        "databases": {
            db_id: {
                "tasks": count,
                "tables": [name for name, _ in corpus.catalogs[db_id].tables],
                "warnings": corpus.catalogs[db_id].warnings,
            }
            for db_id, count in sorted(corpus.counts_by_db().items())
        },
    }
    Path(path).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest
