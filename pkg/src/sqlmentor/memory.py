"""Per-database experience memory: three vector stores with level gating.

Kinds mirror the agent's tool vocabulary (similar_question, similar_subtask,
database_fact). Retrieval is brute-force thresholded top-k over cosine
distance; store files are append-only JSONL, one per (database, kind).

Level gating (cumulative): levels 0 and 1 use only the question store, level 2
adds subtasks, level 3 adds database facts. The gate is on which stores may be
written/advertised, not on the record format.
"""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from ._util import Clock
from .embedding import cosine_distance

DEFAULT_RETRIEVAL_K = 3
DEFAULT_MAX_DISTANCE = 0.28

# Delimiter between the confirmed SQL and the distilled-knowledge block in a
# similar_question record body.
KNOWLEDGE_DELIMITER = "\n\nKnowledge:\n"


class MemoryKind(str, Enum):
    SIMILAR_QUESTION = "similar_question"
    SIMILAR_SUBTASK = "similar_subtask"
    DATABASE_FACT = "database_fact"


def kinds_enabled_at(level: int) -> frozenset[MemoryKind]:
    kinds = {MemoryKind.SIMILAR_QUESTION}
    if level >= 2:
        kinds.add(MemoryKind.SIMILAR_SUBTASK)
    if level >= 3:
        kinds.add(MemoryKind.DATABASE_FACT)
    return frozenset(kinds)


@dataclass(frozen=True)
class Provenance:
    run_id: str
    task_id: str
    created_at: str


@dataclass(frozen=True)
class MemoryRecord:
    key: str
    body: str
    embedding: tuple[float, ...]
    kind: MemoryKind
    db_id: str
    provenance: Provenance

    def vector(self) -> np.ndarray:
        return np.asarray(self.embedding, dtype=np.float64)

    @property
    def sql_part(self) -> str:
        return self.body.split(KNOWLEDGE_DELIMITER, 1)[0]

    @property
    def knowledge_part(self) -> str | None:
        parts = self.body.split(KNOWLEDGE_DELIMITER, 1)
        return parts[1] if len(parts) == 2 else None


@dataclass(frozen=True)
class RetrievalHit:
    record: MemoryRecord
    distance: float


class InsertResult(str, Enum):
    INSERTED = "Inserted"
    DUPLICATE_KEY_IGNORED = "DuplicateKeyIgnored"
    KIND_DISABLED_AT_LEVEL = "KindDisabledAtLevel"


def compose_question_body(sql: str, knowledge: str | None) -> str:
    """Body text of a similar_question record: SQL plus optional knowledge block."""
    if knowledge:
        return sql + KNOWLEDGE_DELIMITER + knowledge
    return sql


class MemoryStoreSet:
    """All memory for one database at one granularity level.

    Single writer per instance; reads are safe to share. When ``directory`` is
    set, inserts append to one JSONL file per kind.
    """

    def __init__(
        self,
        db_id: str,
        level: int,
        embedder,
        directory: str | Path | None = None,
        clock: Clock | None = None,
    ):
        if not 0 <= level <= 3:
            raise ValueError(f"level must be 0..3, got {level}")
        self.db_id = db_id
        self.level = level
        self.embedder = embedder
        self.directory = Path(directory) if directory is not None else None
        self.clock = clock or Clock()
        self.stores: dict[MemoryKind, list[MemoryRecord]] = {k: [] for k in MemoryKind}
        self._key_index: dict[MemoryKind, set[str]] = {k: set() for k in MemoryKind}
        self.write_count = 0
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
            self._load_existing()

    # -- persistence ---------------------------------------------------

    def _store_path(self, kind: MemoryKind) -> Path:
        assert self.directory is not None
        return self.directory / f"{self.db_id}.{kind.value}.jsonl"

    def _load_existing(self) -> None:
        for kind in MemoryKind:
            path = self._store_path(kind)
            if not path.is_file():
                continue
            for line in path.read_text(encoding="utf-8").splitlines():
                rec = json.loads(line)
                self.stores[kind].append(
                    MemoryRecord(
                        key=rec["key"],
                        body=rec["body"],
                        embedding=tuple(rec["embedding"]),
                        kind=kind,
                        db_id=self.db_id,
                        provenance=Provenance(**rec["provenance"]),
                    )
                )
                self._key_index[kind].add(rec["key"])

    def _append_record(self, record: MemoryRecord) -> None:
        if self.directory is None:
            return
        payload = {
            "key": record.key,
            "body": record.body,
            "embedding": list(record.embedding),
            "provenance": {
                "run_id": record.provenance.run_id,
                "task_id": record.provenance.task_id,
                "created_at": record.provenance.created_at,
            },
            "created_at": record.provenance.created_at,
        }
        with self._store_path(record.kind).open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(payload, ensure_ascii=False) + "\n")

    # -- core operations -----------------------------------------------

    def size(self, kind: MemoryKind | None = None) -> int:
        if kind is not None:
            return len(self.stores[kind])
        return sum(len(v) for v in self.stores.values())

    def keys(self, kind: MemoryKind) -> set[str]:
        return set(self._key_index[kind])

    def insert(
        self,
        kind: MemoryKind,
        key: str,
        body: str,
        run_id: str = "",
        task_id: str = "",
    ) -> InsertResult:
        """Insert-if-absent by exact key; embedding is computed at insert time."""
        if kind not in kinds_enabled_at(self.level):
            return InsertResult.KIND_DISABLED_AT_LEVEL
        if key in self._key_index[kind]:
            return InsertResult.DUPLICATE_KEY_IGNORED
        vector = self.embedder.embed(key)
        record = MemoryRecord(
            key=key,
            body=body,
            embedding=tuple(float(x) for x in vector),
            kind=kind,
            db_id=self.db_id,
            provenance=Provenance(run_id=run_id, task_id=task_id, created_at=self.clock.now_iso()),
        )
        self.stores[kind].append(record)
        self._key_index[kind].add(key)
        self._append_record(record)
        self.write_count += 1
        return InsertResult.INSERTED

    def retrieve(
        self,
        kind: MemoryKind,
        query_text: str,
        k: int = DEFAULT_RETRIEVAL_K,
        max_distance: float = DEFAULT_MAX_DISTANCE,
    ) -> list[RetrievalHit]:
        """Thresholded top-k by ascending cosine distance, older records first on ties."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if not 0.0 <= max_distance <= 2.0:
            raise ValueError("max_distance must be in [0, 2]")
        records = self.stores[kind]
        if not records:
            return []
        query = self.embedder.embed(query_text)
        hits = [
            RetrievalHit(record=r, distance=cosine_distance(query, r.vector()))
            for r in records
        ]
        hits = [h for h in hits if h.distance <= max_distance]
        # stable sort preserves insertion order among equal distances
        hits.sort(key=lambda h: h.distance)
        return hits[:k]

    # -- snapshots -----------------------------------------------------

    def snapshot_records(self) -> dict[MemoryKind, tuple[MemoryRecord, ...]]:
        """Immutable deep copy of the current contents."""
        return {kind: tuple(records) for kind, records in self.stores.items()}

    def restore_records(self, snapshot: dict[MemoryKind, tuple[MemoryRecord, ...]]) -> None:
        self.stores = {kind: list(records) for kind, records in snapshot.items()}
        self._key_index = {
            kind: {r.key for r in records} for kind, records in snapshot.items()
        }

    def write_snapshot_dir(self, base: str | Path, run_id: str, count: int) -> Path:
        """Persist a snapshot as ``<base>/<run_id>/t<count>/`` (directory copy)."""
        target = Path(base) / run_id / f"t{count}"
        if target.exists():
            shutil.rmtree(target)
        target.mkdir(parents=True)
        for kind in MemoryKind:
            lines = []
            for record in self.stores[kind]:
                lines.append(
                    json.dumps(
                        {
                            "key": record.key,
                            "body": record.body,
                            "embedding": list(record.embedding),
                            "provenance": {
                                "run_id": record.provenance.run_id,
                                "task_id": record.provenance.task_id,
                                "created_at": record.provenance.created_at,
                            },
                            "created_at": record.provenance.created_at,
                        },
                        ensure_ascii=False,
                    )
                )
            path = target / f"{self.db_id}.{kind.value}.jsonl"
            path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        return target


class SnapshotRegistry:
    """In-memory labelled snapshots with restore-by-id."""

    def __init__(self) -> None:
        self._snapshots: dict[str, tuple[int, dict]] = {}
        self._counter = 0

    def take(self, storeset: MemoryStoreSet, label: str = "") -> str:
        self._counter += 1
        snapshot_id = f"snap-{self._counter:04d}" + (f"-{label}" if label else "")
        self._snapshots[snapshot_id] = (storeset.level, storeset.snapshot_records())
        return snapshot_id

    def restore(self, snapshot_id: str, storeset: MemoryStoreSet) -> MemoryStoreSet:
        if snapshot_id not in self._snapshots:
            raise KeyError(f"unknown snapshot id '{snapshot_id}'")
        _, records = self._snapshots[snapshot_id]
        storeset.restore_records(records)
        return storeset

    def sizes(self) -> dict[str, int]:
        return {
            sid: sum(len(records[k]) for k in records)
            for sid, (_, records) in self._snapshots.items()
        }
