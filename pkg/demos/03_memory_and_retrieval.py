"""Experience memory: thresholded top-k retrieval, level gating, snapshots.

Run from the repo root: python3 demos/03_memory_and_retrieval.py
"""

from sqlmentor._util import LogicalClock
from sqlmentor.embedding import HashEmbedder
from sqlmentor.memory import (
    MemoryKind,
    MemoryStoreSet,
    SnapshotRegistry,
    compose_question_body,
)

store = MemoryStoreSet(db_id="financial", level=3, embedder=HashEmbedder(), clock=LogicalClock())

store.insert(
    MemoryKind.SIMILAR_QUESTION,
    "How many male clients are there in the Brno branch?",
    compose_question_body(
        "SELECT COUNT(*) FROM client WHERE gender = 'M' AND district_id = 2",
        "Gender is stored as single characters: 'M' and 'F'.",
    ),
)
store.insert(
    MemoryKind.SIMILAR_SUBTASK,
    "filter clients by gender",
    "SELECT * FROM client WHERE gender = 'M';",
)
store.insert(
    MemoryKind.DATABASE_FACT,
    "gender representation in client table",
    "Gender is a single character: 'M' for male, 'F' for female.",
)

hits = store.retrieve(
    MemoryKind.SIMILAR_QUESTION,
    "How many male clients are in the Brno branch?",
    k=3,
    max_distance=0.28,
)
for hit in hits:
    print(f"distance={hit.distance:.3f}  key={hit.record.key}")
    print(f"  sql: {hit.record.sql_part}")
    print(f"  knowledge: {hit.record.knowledge_part}")

far = store.retrieve(MemoryKind.SIMILAR_QUESTION, "completely unrelated text about weather", k=3)
print("unrelated query retrieves nothing:", far)

duplicate = store.insert(MemoryKind.SIMILAR_SUBTASK, "filter clients by gender", "other body")
print("duplicate key:", duplicate.value)

registry = SnapshotRegistry()
snap = registry.take(store, "demo")
store.insert(MemoryKind.DATABASE_FACT, "second fact", "body")
print("size after extra insert:", store.size())
registry.restore(snap, store)
print("size after restore:", store.size())

gated = MemoryStoreSet(db_id="financial", level=1, embedder=HashEmbedder())
print("database_fact at level 1:", gated.insert(MemoryKind.DATABASE_FACT, "x", "y").value)
