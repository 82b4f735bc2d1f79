"""End-to-end three-phase evaluation with the deterministic gold-echo model,
including a learning curve with evidence coverage and report emission.

Run from the repo root: python3 demos/05_full_protocol_run.py
"""

from pathlib import Path
import tempfile

from sqlmentor.agent import AgentConfig
from sqlmentor.corpus import load_bird
from sqlmentor.fixtures import GoldEchoBackend, build_bird_fixture, build_synthetic_db
from sqlmentor.harness import HarnessOptions, run_protocol
from sqlmentor.llm import ChatGateway
from sqlmentor.report import PROTOCOL_NEW, build_report, render_text_table

workdir = Path(tempfile.mkdtemp(prefix="sqlmentor-demo-"))
root = build_bird_fixture(workdir / "root")
build_synthetic_db(root, "toyshop", 20)
corpus = load_bird(root)

config = AgentConfig.from_label("P-3")
gateway = ChatGateway(GoldEchoBackend(corpus))
options = HarnessOptions(run_id="demo", runs_dir=workdir / "runs", curve_grid=[0, 5, 10])

report = run_protocol(corpus, "toyshop", config, PROTOCOL_NEW, seed=7, gateway=gateway, options=options)
print(render_text_table([report]))
print("learning curve (online instances -> accuracy):", report.curve)
print("evidence coverage along the curve:", [(t, round(c, 2)) for t, c in report.coverage])

paths = build_report(report, workdir / "runs" / "demo")
print("\nreport files:")
for kind, path in paths.items():
    print(f"  {kind}: {path}")
print("\ntrajectory logs:", sorted(p.name for p in (workdir / "runs" / "demo" / "toyshop" / "Online").glob("*.jsonl"))[:5], "…")
