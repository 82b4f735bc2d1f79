"""Corpus ingestion walkthrough: load a benchmark root, inspect schema text,
and produce deterministic train/test splits.

Run from the repo root: python3 demos/01_corpus_and_splits.py
"""

from pathlib import Path
import tempfile

from sqlmentor.corpus import load_bird, split_tasks
from sqlmentor.fixtures import build_bird_fixture, build_synthetic_db

workdir = Path(tempfile.mkdtemp(prefix="sqlmentor-demo-"))
root = build_bird_fixture(workdir / "bird_root")
build_synthetic_db(root, "toyshop", 21)

corpus = load_bird(root)
print(f"loaded {len(corpus.tasks)} tasks across {len(corpus.catalogs)} databases")
print("per-database counts:", corpus.counts_by_db())

catalog = corpus.catalogs["financial"]
print("\n--- rendered schema (first 500 chars) ---")
print(catalog.schema_text[:500])

split = split_tasks(corpus, "toyshop", seed=7)
print(f"\ntoyshop split under seed 7: train={len(split.train)}, test={len(split.test)}")
print("train gets the extra task on odd counts (21 -> 11 + 10)")
same_again = split_tasks(corpus, "toyshop", seed=7)
assert [t.task_id for t in split.train] == [t.task_id for t in same_again.train]
print("same seed reproduces the identical split")
