"""Drive the human-in-the-loop HTTP service end to end with a scripted agent:
create a session, read the pending candidate, send feedback, approve, and list
the memory the session banked.

Run from the repo root: python3 demos/06_feedback_service.py
"""

import json
import time
from pathlib import Path

from fastapi.testclient import TestClient

from sqlmentor.corpus import load_bird
from sqlmentor.fixtures import D2_RIGHT_SQL, D2_WRONG_SQL
from sqlmentor.llm import ChatGateway, ScriptedBackend
from sqlmentor.service import ServiceContext, create_app

REPO = Path(__file__).resolve().parents[1]
corpus = load_bird(REPO / "fixtures" / "bird_root")


def msg(to, message, sql=""):
    return json.dumps({"to": to, "message": message, "generated_sql": sql})


script = [
    D2_WRONG_SQL,
    D2_RIGHT_SQL,
    msg("self", "I used 'male' instead of 'M' and joined tables I did not need."),
    msg("self", "Gender is stored as single characters; client joins district directly."),
    msg("self", "Rephrased as reusable facts."),
    msg("human", "Facts: gender uses 'M'/'F'; join client to district on district_id."),
]
context = ServiceContext(corpus, gateway_factory=lambda: ChatGateway(ScriptedBackend(script)))
client = TestClient(create_app(context))

session_id = client.post(
    "/sessions", json={"db_id": "financial", "task_ids": ["1"], "agent_label": "NP-0"}
).json()["session_id"]
print("created", session_id)


def wait_for(state):
    while True:
        view = client.get(f"/sessions/{session_id}").json()
        if view["state"] == state:
            return view
        time.sleep(0.05)


view = wait_for("AwaitingHuman")
pending = view["pending"]
print(f"\ncandidate #{pending['round_number']} (budget {pending['budget_remaining']}):")
print(pending["candidate_sql"])
print("preview:", pending["preview_rows"][:3], f"({pending['row_count']} rows)")

print("\nsending feedback …")
client.post(f"/sessions/{session_id}/feedback", json={"text": "Use gender = 'M' and drop the extra joins."})
view = wait_for("AwaitingHuman")
print("refined candidate:")
print(view["pending"]["candidate_sql"])

print("\napproving …")
client.post(f"/sessions/{session_id}/approve")
view = wait_for("Completed")
print("session completed; per-task results:", view["results"])

memory = client.get(f"/sessions/{session_id}/memory").json()
print("\nbanked memory keys:", {k: [r["key"][:50] for r in v] for k, v in memory.items() if v})
distill_turns = [e for e in view["transcript"] if e.get("phase") == "distill"]
print(f"distillation turns in transcript: {len(distill_turns)}")
