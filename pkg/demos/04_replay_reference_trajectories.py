"""Replay the four shipped trajectory cassettes and print the transcripts.

No network access: every model response comes from fixtures/cassettes/.
Run from the repo root: python3 demos/04_replay_reference_trajectories.py
"""

from pathlib import Path

from sqlmentor.corpus import load_bird
from sqlmentor.fixtures import CASSETTE_NAMES, replay_cassette, scenario
from sqlmentor.sqlexec import execute

REPO = Path(__file__).resolve().parents[1]
corpus = load_bird(REPO / "fixtures" / "bird_root")
catalog = corpus.catalogs["financial"]

for name in CASSETTE_NAMES:
    result = replay_cassette(scenario(name), corpus, REPO / "fixtures" / "cassettes" / f"{name}.jsonl")
    trajectory = result.trajectory
    print(f"\n================ {name} ================")
    for event in trajectory.events:
        tag = f" [{event.tool_name}]" if event.tool_name else ""
        phase = f" ({event.phase})" if event.phase else ""
        text = " ".join(event.content.split())[:110]
        print(f"{event.role:<12}{tag}{phase}: {text}")
    rows = execute(catalog, trajectory.final_sql).rows if trajectory.final_sql else None
    print(
        f"--> outcome={trajectory.outcome}, feedback_rounds={trajectory.feedback_rounds}, "
        f"result rows={rows}"
    )
    sizes = {k.value: result.storeset.size(k) for k in result.storeset.stores}
    print(f"--> memory sizes after run: {sizes}")
