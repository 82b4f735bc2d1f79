"""Execution accuracy semantics: read-only runs, set comparison, scoring.

Run from the repo root: python3 demos/02_execution_accuracy.py
"""

from pathlib import Path
import tempfile

from sqlmentor.corpus import load_bird
from sqlmentor.fixtures import build_bird_fixture
from sqlmentor.sqlexec import execute, outputs_match, score

root = build_bird_fixture(Path(tempfile.mkdtemp(prefix="sqlmentor-demo-")) / "root")
corpus = load_bird(root)
catalog = corpus.catalogs["financial"]

print("rows:", execute(catalog, "SELECT A2, A15 FROM district ORDER BY A15 DESC").rows)

a = execute(catalog, "SELECT client_id FROM client WHERE district_id = 3")
b = execute(catalog, "SELECT client_id FROM client WHERE district_id = 3 ORDER BY client_id DESC")
print("row order is irrelevant:", outputs_match(a, b))

c = execute(catalog, "SELECT gender FROM client")
d = execute(catalog, "SELECT DISTINCT gender FROM client")
print("duplicates collapse (set semantics):", outputs_match(c, d))

e = execute(catalog, "SELECT client_id, gender FROM client")
f = execute(catalog, "SELECT gender, client_id FROM client")
print("column order matters:", outputs_match(e, f))

print("write statements are rejected:", execute(catalog, "DROP TABLE client").error_text)

task = corpus.tasks[1]
result = score(catalog, task, task.gold_sql)
print(f"scoring the gold query against itself: z={result.z}")
wrong = score(catalog, task, "SELECT COUNT(*) FROM client WHERE gender = 'male'")
print(f"scoring a wrong candidate: z={wrong.z}, reason={wrong.mismatch_reason}")
