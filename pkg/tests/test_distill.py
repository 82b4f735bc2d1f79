from __future__ import annotations

import json

from sqlmentor._util import LogicalClock
from sqlmentor.agent import PHASE_ONLINE, SOLVED, AgentConfig, Trajectory
from sqlmentor.distill import (
    commit_question_record,
    distill_knowledge,
    distill_trajectory,
    solicit_saves,
)
from sqlmentor.embedding import HashEmbedder
from sqlmentor.llm import SELF_THOUGHT, ChatGateway, ChatTurn, ModelConfig, ScriptedBackend
from sqlmentor.memory import InsertResult, MemoryKind, MemoryStoreSet


def msg(to, message, sql=""):
    return json.dumps({"to": to, "message": message, "generated_sql": sql})


def solved_trajectory(task, rounds=1):
    t = Trajectory(task_id=task.task_id, config_label="P-3", phase=PHASE_ONLINE)
    t.outcome = SOLVED
    t.final_sql = task.gold_sql
    t.feedback_rounds = rounds
    t.add(ChatTurn(role="user", content=f"question:\n{task.nlq}\n\ndatabase name:\n{task.db_id}"))
    t.add(ChatTurn(role="assistant", content=f"final: {task.gold_sql}"))
    return t


def storeset(level=3):
    return MemoryStoreSet(db_id="financial", level=level, embedder=HashEmbedder(), clock=LogicalClock())


def three_step_script(facts="Facts: remember the schema."):
    return [
        msg("self", "step one"),
        msg("self", "step two"),
        msg("self", "step three"),
        msg("human", facts),
    ]


def test_no_feedback_variant_selected(corpus, financial):
    task = corpus.tasks[0]
    trajectory = solved_trajectory(task, rounds=0)
    config = AgentConfig.from_label("P-3")
    gateway = ChatGateway(ScriptedBackend(three_step_script()))
    knowledge = distill_knowledge(trajectory, config, financial, gateway)
    assert not knowledge.had_feedback
    instruction = next(e for e in trajectory.events if e.phase == "distill" and e.role == "user")
    assert "from generating this SQL query" in instruction.content
    assert knowledge.mistake_notes is None


def test_with_feedback_variant_selected(corpus, financial):
    task = corpus.tasks[1]
    trajectory = solved_trajectory(task, rounds=2)
    config = AgentConfig.from_label("P-3")
    gateway = ChatGateway(ScriptedBackend(three_step_script()))
    knowledge = distill_knowledge(trajectory, config, financial, gateway)
    assert knowledge.had_feedback
    instruction = next(e for e in trajectory.events if e.phase == "distill" and e.role == "user")
    assert "interacting with the Expert agent" in instruction.content
    assert knowledge.mistake_notes == "step one"
    assert knowledge.revealed_notes == "step two"


def test_exactly_three_thoughts_precede_facts(corpus, financial):
    task = corpus.tasks[1]
    trajectory = solved_trajectory(task)
    config = AgentConfig.from_label("P-3")
    gateway = ChatGateway(ScriptedBackend(three_step_script("the facts")))
    knowledge = distill_knowledge(trajectory, config, financial, gateway)
    distill_events = [e for e in trajectory.events if e.phase == "distill"]
    thoughts = [e for e in distill_events if e.role == SELF_THOUGHT]
    assert len(thoughts) == 3
    assert knowledge.facts_text == "the facts"
    assert distill_events[-1].role == "assistant"


def test_commit_levels(corpus):
    task = corpus.tasks[0]
    level0 = storeset(level=0)
    commit_question_record(task, "SELECT 1", "facts", 0, level0)
    body0 = level0.stores[MemoryKind.SIMILAR_QUESTION][0].body
    assert body0 == "SELECT 1"

    level1 = MemoryStoreSet(db_id="financial", level=1, embedder=HashEmbedder(), clock=LogicalClock())
    commit_question_record(task, "SELECT 1", "facts", 1, level1)
    body1 = level1.stores[MemoryKind.SIMILAR_QUESTION][0].body
    assert "Knowledge:" in body1 and "facts" in body1


def test_commit_key_is_verbatim_nlq_and_idempotent(corpus):
    task = corpus.tasks[0]
    s = storeset()
    first = commit_question_record(task, "SELECT 1", "", 3, s)
    again = commit_question_record(task, "SELECT 1", "", 3, s)
    assert first is InsertResult.INSERTED
    assert again is InsertResult.DUPLICATE_KEY_IGNORED
    assert s.stores[MemoryKind.SIMILAR_QUESTION][0].key == task.nlq
    assert s.size(MemoryKind.SIMILAR_QUESTION) == 1


def test_solicit_saves_noop_below_level_two(corpus, financial):
    task = corpus.tasks[1]
    trajectory = solved_trajectory(task)
    config = AgentConfig.from_label("P-1")
    backend = ScriptedBackend([])  # any call would raise ScriptExhausted
    saved = solicit_saves(
        trajectory, "facts", config, financial, ChatGateway(backend), storeset(level=1), task
    )
    assert saved == []
    assert backend.calls == 0


def test_solicit_saves_caps_at_five(corpus, financial):
    task = corpus.tasks[1]
    trajectory = solved_trajectory(task)
    config = AgentConfig.from_label("P-3")
    attempts = [
        {"tool": "save_memory", "arguments": {"query_string": f"k{i}", "knowledge_string": "b", "memory_type": "similar_subtask"}}
        for i in range(7)
    ]
    script = attempts + [msg("human", "done saving")]
    s = storeset(level=3)
    saved = solicit_saves(trajectory, "facts", config, financial, ChatGateway(ScriptedBackend(script)), s, task)
    assert len(saved) == 5
    assert s.size(MemoryKind.SIMILAR_SUBTASK) == 5
    refusals = [
        e
        for e in trajectory.events
        if e.role == "tool_result" and "exceeded the number of memories" in e.content
    ]
    assert len(refusals) == 2


def test_full_distill_pipeline(corpus, financial):
    task = corpus.tasks[1]
    trajectory = solved_trajectory(task)
    config = AgentConfig.from_label("P-3")
    script = three_step_script() + [
        {"tool": "save_memory", "arguments": {"query_string": "sub", "knowledge_string": "SELECT 1", "memory_type": "similar_subtask"}},
        {"tool": "save_memory", "arguments": {"query_string": "fact", "knowledge_string": "gender is M/F", "memory_type": "database_fact"}},
        msg("human", "saved what matters"),
    ]
    s = storeset(level=3)
    outcome = distill_trajectory(trajectory, task, config, financial, ChatGateway(ScriptedBackend(script)), s)
    assert outcome.question_insert is InsertResult.INSERTED
    assert len(outcome.saved_records) == 2
    assert s.size(MemoryKind.SIMILAR_QUESTION) == 1
    assert s.size(MemoryKind.SIMILAR_SUBTASK) == 1
    assert s.size(MemoryKind.DATABASE_FACT) == 1


def test_context_overflow_still_commits_pair(corpus, financial):
    task = corpus.tasks[1]
    trajectory = solved_trajectory(task)
    config = AgentConfig.from_label("P-3", model_config=ModelConfig(max_context_tokens=10))
    s = storeset(level=3)
    outcome = distill_trajectory(trajectory, task, config, financial, ChatGateway(ScriptedBackend([])), s)
    assert outcome.knowledge.skipped
    assert outcome.question_insert is InsertResult.INSERTED
    body = s.stores[MemoryKind.SIMILAR_QUESTION][0].body
    assert "Knowledge:" not in body  # degraded to the bare pair
    assert outcome.saved_records == []
