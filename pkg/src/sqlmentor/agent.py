"""The learning agent: templated (NP) and procedural (P) SQL generation.

NP agents run a fixed pipeline: retrieve similar questions, fill the generate
template, optionally self-refine on engine errors, and in the online setting
loop through expert feedback with the refine template.

P agents run a tool loop: the model directs itself via structured JSON
messages (to self / to the expert / to the human) and, offline, a find_memory
tool. The expert's verdict is always grounded in the execution comparator,
never in model prose.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Callable

from . import prompts
from .corpus import DatabaseCatalog, TaskInstance
from .llm import (
    ASSISTANT,
    SELF_THOUGHT,
    SYSTEM,
    TOOL_CALL,
    TOOL_RESULT,
    USER,
    ChatGateway,
    ChatTurn,
    ContextExceeded,
    GatewayError,
    ModelConfig,
)
from .memory import (
    DEFAULT_MAX_DISTANCE,
    DEFAULT_RETRIEVAL_K,
    MemoryKind,
    MemoryStoreSet,
    RetrievalHit,
    kinds_enabled_at,
)
from .sqlexec import SQL_ERROR, GoldDefectError, execute

# Configuration labels and their (procedural, memory level) pairing.
CONFIG_LABELS: dict[str, tuple[bool, int]] = {
    "NP-0": (False, 0),
    "NP-1": (False, 1),
    "P-0": (True, 0),
    "P-1": (True, 1),
    "P-2": (True, 2),
    "P-3": (True, 3),
}

# Trajectory outcomes
SOLVED = "Solved"
STEP_CAP_EXCEEDED = "StepCapExceeded"
CONTEXT_CAP_EXCEEDED = "ContextCapExceeded"
ABORTED = "Aborted"

# Phases
PHASE_INITIAL = "Initial"
PHASE_ONLINE = "Online"
PHASE_FINAL = "Final"

NP_AGENT_NAME = "SQL agent"
P_AGENT_NAME = "Learning SQL Agent"
EXPERT_NAME = "Human proxy agent"
HUMAN_NAME = "Human"

NO_MEMORIES_FOUND = "No memories found."
NOT_USING_EXAMPLES = "Not using examples"
USING_EXAMPLES = "Using examples"

SAVE_CAP_REFUSAL = (
    "You have exceeded the number of memories that you can save for this question. "
    "Do not save any more memories."
)

_SQL_FENCE = re.compile(r"```(?:sql)?\s*(.*?)```", re.DOTALL | re.IGNORECASE)


class AgentConfigError(ValueError):
    pass


class SkipRequested(Exception):
    """A human feedback source abandoned the task; treated like the step cap."""


@dataclass
class AgentConfig:
    label: str
    procedural: bool
    memory_level: int
    max_feedback_steps: int = 25
    retrieval_k: int = DEFAULT_RETRIEVAL_K
    retrieval_max_distance: float = DEFAULT_MAX_DISTANCE
    example_cap: int = 3
    save_cap: int = 5
    max_events: int = 120
    model_config: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self) -> None:
        expected = CONFIG_LABELS.get(self.label)
        if expected is None:
            raise AgentConfigError(f"unknown agent label '{self.label}'")
        if expected != (self.procedural, self.memory_level):
            raise AgentConfigError(
                f"label {self.label} requires procedural={expected[0]}, "
                f"memory_level={expected[1]}"
            )
        if not self.procedural and self.memory_level >= 2:
            raise AgentConfigError("NP labels never use memory level 2 or 3")

    @classmethod
    def from_label(cls, label: str, **overrides) -> "AgentConfig":
        try:
            procedural, level = CONFIG_LABELS[label]
        except KeyError:
            raise AgentConfigError(f"unknown agent label '{label}'") from None
        return cls(label=label, procedural=procedural, memory_level=level, **overrides)

    @property
    def agent_name(self) -> str:
        return P_AGENT_NAME if self.procedural else NP_AGENT_NAME


@dataclass
class Trajectory:
    task_id: str
    config_label: str
    phase: str
    events: list[ChatTurn] = field(default_factory=list)
    final_sql: str | None = None
    outcome: str = ABORTED
    feedback_rounds: int = 0
    expert_checks: int = 0
    last_candidate_sql: str | None = None
    abort_reason: str | None = None
    on_event: Callable[[ChatTurn], None] | None = field(
        default=None, repr=False, compare=False
    )

    def add(self, turn: ChatTurn) -> ChatTurn:
        self.events.append(turn)
        if self.on_event is not None:
            self.on_event(turn)
        return turn

    def trailer(self) -> dict:
        return {
            "final_sql": self.final_sql,
            "outcome": self.outcome,
            "feedback_rounds": self.feedback_rounds,
            "expert_checks": self.expert_checks,
        }


def save_trajectory(trajectory: Trajectory, path) -> None:
    from pathlib import Path

    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(e.to_record(), ensure_ascii=False) for e in trajectory.events]
    lines.append(json.dumps({"trailer": trajectory.trailer()}, ensure_ascii=False))
    p.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


# -- structured agent messages ------------------------------------------


@dataclass
class AgentMessage:
    to: str
    message: str
    generated_sql: str = ""


def parse_agent_message(content: str) -> AgentMessage | None:
    """Parse the structured JSON reply; None if it does not conform."""
    text = content.strip()
    fence = _SQL_FENCE.search(text)
    if fence and text.startswith("```"):
        text = fence.group(1).strip()
    try:
        payload = json.loads(text)
    except (json.JSONDecodeError, ValueError):
        return None
    if not isinstance(payload, dict) or payload.get("to") not in ("self", "expert", "human"):
        return None
    return AgentMessage(
        to=payload["to"],
        message=str(payload.get("message", "")),
        generated_sql=str(payload.get("generated_sql", "") or ""),
    )


def extract_sql(text: str) -> str:
    """Pull the SQL statement out of a raw completion (fences, labels stripped)."""
    fence = _SQL_FENCE.search(text)
    if fence:
        return fence.group(1).strip()
    cleaned = re.sub(r"^\s*SQL\s*Query\s*:\s*", "", text.strip(), flags=re.IGNORECASE)
    return cleaned.strip()


# -- tool surface --------------------------------------------------------

FIND_MEMORY_SPEC = {
    "name": "find_memory",
    "description": (
        "Tool for retrieving information from previous experiences for in-context learning. "
        "query_string is the piece of text you want to search for. This is NOT the sql query. "
        "memory_type is one of ['similar_question', 'similar_subtask', 'database_fact']. "
        "'similar_question' is helpful for seeing natural language question-sql query pairs. "
        "DO NOT CHANGE THE WORDING OF THE NATURAL LANGUAGE QUESTION FROM HOW THE HUMAN STATED IT. "
        "DO NOT PARAPHRASE. 'similar_subtask' is helpful for understanding how to perform "
        "particular operations on this database. 'database_fact' is helpful for understanding "
        "critical database information which you may have overlooked in the past."
    ),
    "parameters": {
        "type": "object",
        "properties": {
            "query_string": {"type": "string"},
            "memory_type": {
                "type": "string",
                "enum": ["similar_question", "similar_subtask", "database_fact"],
            },
        },
        "required": ["query_string", "memory_type"],
    },
}

SAVE_MEMORY_SPEC = {
    "name": "save_memory",
    "description": (
        "Tool for saving information from the current iteration for future in-context learning. "
        "When using this tool, do not use any aliases. query_string is the text used as an index "
        "in a vector db, NOT the sql query. knowledge_string is the knowledge attached to the "
        "index: a SQL query, a snippet of a SQL query, or a database fact. memory_type is one of "
        "['similar_subtask', 'database_fact']."
    ),
    "parameters": {
        "type": "object",
        "properties": {
            "query_string": {"type": "string"},
            "knowledge_string": {"type": "string"},
            "memory_type": {"type": "string", "enum": ["similar_subtask", "database_fact"]},
        },
        "required": ["query_string", "knowledge_string", "memory_type"],
    },
}


def _kind_from_name(name: str) -> MemoryKind | None:
    try:
        return MemoryKind(name)
    except ValueError:
        return None


def tool_find_memory(
    storeset: MemoryStoreSet, config: AgentConfig, query_string: str, memory_type: str
) -> str:
    """Retrieve and render memories for the procedural agent."""
    kind = _kind_from_name(memory_type)
    if kind is None or kind not in kinds_enabled_at(config.memory_level):
        allowed = ", ".join(sorted(k.value for k in kinds_enabled_at(config.memory_level)))
        return (
            f"The memory type '{memory_type}' is not available in this configuration. "
            f"Available memory types: {allowed}."
        )
    hits = storeset.retrieve(
        kind,
        query_string,
        k=config.retrieval_k,
        max_distance=config.retrieval_max_distance,
    )
    if not hits:
        return NO_MEMORIES_FOUND
    return "\n\n".join(_render_hit(h, config.memory_level) for h in hits)


def _render_hit(hit: RetrievalHit, level: int) -> str:
    record = hit.record
    if record.kind is MemoryKind.SIMILAR_QUESTION:
        text = f"Index: {record.key}\nSQL:\n{record.sql_part}"
        if level >= 1 and record.knowledge_part:
            text += f"\nKnowledge:\n{record.knowledge_part}"
        return text
    return f"Index: {record.key}\n{record.body}"


@dataclass
class SaveSession:
    """Per-distillation save counter; duplicates do not consume budget."""

    counter: int = 0
    saved: list[tuple[MemoryKind, str]] = field(default_factory=list)


def tool_save_memory(
    storeset: MemoryStoreSet,
    config: AgentConfig,
    session: SaveSession,
    query_string: str,
    knowledge_string: str,
    memory_type: str,
    run_id: str = "",
    task_id: str = "",
) -> str:
    """Save one subtask or database-fact memory, enforcing the per-question cap."""
    if session.counter >= config.save_cap:
        return SAVE_CAP_REFUSAL
    kind = _kind_from_name(memory_type)
    allowed = {
        k
        for k in (MemoryKind.SIMILAR_SUBTASK, MemoryKind.DATABASE_FACT)
        if k in kinds_enabled_at(config.memory_level)
    }
    if kind is None or kind not in allowed:
        names = ", ".join(sorted(k.value for k in allowed)) or "none"
        return (
            f"The memory type '{memory_type}' cannot be saved in this configuration. "
            f"Allowed memory types: {names}."
        )
    result = storeset.insert(kind, query_string, knowledge_string, run_id=run_id, task_id=task_id)
    if result.name == "INSERTED":
        session.counter += 1
        session.saved.append((kind, query_string))
    return "Saved."


# -- NP example selection -------------------------------------------------


def select_examples(nlq: str, storeset: MemoryStoreSet, cap: int, max_distance: float = DEFAULT_MAX_DISTANCE) -> list[RetrievalHit]:
    if cap <= 0 or storeset.size(MemoryKind.SIMILAR_QUESTION) == 0:
        return []
    return storeset.retrieve(
        MemoryKind.SIMILAR_QUESTION, nlq, k=cap, max_distance=max_distance
    )


def render_examples(hits: list[RetrievalHit], include_knowledge: bool) -> str:
    blocks = []
    for hit in hits:
        record = hit.record
        text = f"Question: {record.key}\nSQL:\n{record.sql_part}"
        if include_knowledge and record.knowledge_part:
            text += f"\nKnowledge:\n{record.knowledge_part}"
        blocks.append(text)
    return "\n\n".join(blocks)


# -- shared plumbing -------------------------------------------------------


def _task_user_message(task: TaskInstance) -> str:
    return (
        "Generate a SQL query for the following question. I have provided name of the "
        f"database that is relevant to this query.\n\nquestion:\n{task.nlq}\n\n"
        f"database name:\n{task.db_id}"
    )


def _normalized(sql: str) -> str:
    return " ".join(sql.split()).rstrip(";")


class _AbortRun(Exception):
    def __init__(self, reason: str):
        self.reason = reason


# -- NP pipeline -----------------------------------------------------------


class _NpPipeline:
    def __init__(
        self,
        task: TaskInstance,
        config: AgentConfig,
        storeset: MemoryStoreSet,
        gateway: ChatGateway,
        catalog: DatabaseCatalog,
        online: bool,
    ):
        self.task = task
        self.config = config
        self.storeset = storeset
        self.gateway = gateway
        self.catalog = catalog
        self.schema_text = catalog.schema_text
        self.system_prompt = prompts.load(
            "np_system_online" if online else "np_system_offline"
        )

    def _examples_block(self) -> tuple[str, str]:
        hits = select_examples(
            self.task.nlq,
            self.storeset,
            self.config.example_cap,
            self.config.retrieval_max_distance,
        )
        if not hits:
            return "", NOT_USING_EXAMPLES
        return render_examples(hits, include_knowledge=self.config.memory_level >= 1), USING_EXAMPLES

    def generate(self, trajectory: Trajectory) -> str:
        examples, marker = self._examples_block()
        trajectory.add(
            ChatTurn(
                role=TOOL_CALL,
                content=marker,
                tool_name="generate_sql",
                tool_arguments={"question": self.task.nlq, "database_name": self.task.db_id},
                author=self.config.agent_name,
            )
        )
        prompt = prompts.render(
            "generate_sql",
            examples=examples,
            question=self.task.nlq,
            database_schema=self.schema_text,
        )
        reply = self.gateway.chat(
            [ChatTurn(role=SYSTEM, content=self.system_prompt), ChatTurn(role=USER, content=prompt)],
            config=self.config.model_config,
        )
        sql = extract_sql(reply.content)
        trajectory.add(
            ChatTurn(
                role=TOOL_RESULT,
                content=f"SQL query generated! Generated SQL is\n{sql}",
                tool_name="generate_sql",
                author=self.config.agent_name,
            )
        )
        return sql

    def refine(self, trajectory: Trajectory, old_sql: str, feedback: str) -> str:
        examples, _ = self._examples_block()
        trajectory.add(
            ChatTurn(
                role=TOOL_CALL,
                content="",
                tool_name="refine_sql",
                tool_arguments={
                    "question": self.task.nlq,
                    "generated_sql": old_sql,
                    "feedback": feedback,
                    "database_name": self.task.db_id,
                },
                author=self.config.agent_name,
            )
        )
        prompt = prompts.render(
            "refine_sql",
            question=self.task.nlq,
            database_name=self.task.db_id,
            database_schema=self.schema_text,
            examples=examples,
            feedback=feedback,
            generated_sql=old_sql,
        )
        reply = self.gateway.chat(
            [ChatTurn(role=SYSTEM, content=self.system_prompt), ChatTurn(role=USER, content=prompt)],
            config=self.config.model_config,
        )
        sql = extract_sql(reply.content)
        trajectory.add(
            ChatTurn(
                role=TOOL_RESULT,
                content=f"SQL refined! Refined SQL is\n{sql}",
                tool_name="refine_sql",
                author=self.config.agent_name,
            )
        )
        return sql

    def self_refine_on_errors(self, trajectory: Trajectory, sql: str, attempts: int = 2) -> str:
        """Silently refine when the engine rejects the candidate, at most twice."""
        for _ in range(attempts):
            outcome = execute(self.catalog, sql)
            if outcome.status != SQL_ERROR:
                return sql
            sql = self.refine(trajectory, sql, f"SQLite error: {outcome.error_text}")
        return sql


# -- offline runs -----------------------------------------------------------


def run_offline(
    task: TaskInstance,
    config: AgentConfig,
    storeset: MemoryStoreSet,
    gateway: ChatGateway,
    catalog: DatabaseCatalog,
    phase: str = PHASE_INITIAL,
) -> Trajectory:
    """One offline attempt: no expert contact, no memory writes."""
    trajectory = Trajectory(task_id=task.task_id, config_label=config.label, phase=phase)
    trajectory.add(ChatTurn(role=USER, content=_task_user_message(task), author=HUMAN_NAME))
    writes_before = storeset.write_count
    try:
        if config.procedural:
            _run_p_offline(task, config, storeset, gateway, catalog, trajectory)
        else:
            pipeline = _NpPipeline(task, config, storeset, gateway, catalog, online=False)
            sql = pipeline.generate(trajectory)
            sql = pipeline.self_refine_on_errors(trajectory, sql)
            trajectory.add(
                ChatTurn(
                    role=ASSISTANT,
                    content=f"Here is the SQL query for your request:\n{sql}",
                    author=config.agent_name,
                )
            )
            trajectory.final_sql = sql
            trajectory.outcome = SOLVED
    except ContextExceeded:
        trajectory.outcome = CONTEXT_CAP_EXCEEDED
    except _AbortRun as abort:
        trajectory.outcome = ABORTED
        trajectory.abort_reason = abort.reason
    except GatewayError as exc:
        trajectory.outcome = ABORTED
        trajectory.abort_reason = str(exc)
    assert storeset.write_count == writes_before, "offline run must not write memory"
    return trajectory


def _p_system_turn(config: AgentConfig, catalog: DatabaseCatalog, online: bool) -> ChatTurn:
    template = "p_system_online" if online else "p_system_offline"
    text = prompts.render(template, db_schema=catalog.schema_text)
    return ChatTurn(role=SYSTEM, content=text + "\n\n" + prompts.load("comm_spec"))


def _chat_or_retry_parse(
    gateway: ChatGateway,
    turns: list[ChatTurn],
    tool_specs: list[dict],
    config: AgentConfig,
) -> tuple[ChatTurn, AgentMessage | None]:
    """One model step; a malformed structured reply gets one corrective retry."""
    reply = gateway.chat(turns, tool_specs=tool_specs, config=config.model_config)
    if reply.role == TOOL_CALL:
        return reply, None
    message = parse_agent_message(reply.content)
    if message is not None:
        return reply, message
    corrective = ChatTurn(
        role=SYSTEM,
        content=(
            "Your reply did not follow the communication specs. Reply again with a single "
            'JSON object: {"to": "self"|"expert"|"human", "message": "...", "generated_sql": "..."}'
        ),
    )
    reply = gateway.chat(turns + [corrective], tool_specs=tool_specs, config=config.model_config)
    if reply.role == TOOL_CALL:
        return reply, None
    message = parse_agent_message(reply.content)
    if message is None:
        raise _AbortRun("malformed structured reply after corrective retry")
    return reply, message


def _run_p_offline(
    task: TaskInstance,
    config: AgentConfig,
    storeset: MemoryStoreSet,
    gateway: ChatGateway,
    catalog: DatabaseCatalog,
    trajectory: Trajectory,
) -> None:
    turns: list[ChatTurn] = [
        _p_system_turn(config, catalog, online=False),
        ChatTurn(role=USER, content=_task_user_message(task), author=HUMAN_NAME),
    ]
    structure_note_sent = False
    while len(trajectory.events) < config.max_events:
        reply, message = _chat_or_retry_parse(gateway, turns, [FIND_MEMORY_SPEC], config)
        if reply.role == TOOL_CALL:
            turns.append(reply)
            trajectory.add(
                ChatTurn(
                    role=TOOL_CALL,
                    tool_name=reply.tool_name,
                    tool_arguments=reply.tool_arguments,
                    author=config.agent_name,
                )
            )
            if reply.tool_name == "find_memory":
                result = tool_find_memory(
                    storeset,
                    config,
                    str(reply.tool_arguments.get("query_string", "")),
                    str(reply.tool_arguments.get("memory_type", "")),
                )
            elif reply.tool_name == "save_memory":
                result = "Memories cannot be saved in this setting. Continue with the question."
            else:
                result = f"Unknown tool '{reply.tool_name}'."
            tool_turn = ChatTurn(role=TOOL_RESULT, content=result, tool_name=reply.tool_name)
            turns.append(tool_turn)
            trajectory.add(
                ChatTurn(
                    role=TOOL_RESULT,
                    content=result,
                    tool_name=reply.tool_name,
                    author=config.agent_name,
                )
            )
            continue

        assert message is not None
        if message.to == "self":
            turn = ChatTurn(role=SELF_THOUGHT, content=reply.content, author=config.agent_name)
            turns.append(turn)
            trajectory.add(
                ChatTurn(role=SELF_THOUGHT, content=message.message, author=config.agent_name)
            )
            continue
        if message.to == "expert":
            note = ChatTurn(
                role=SYSTEM,
                content="There is no expert agent in this setting. Verify the query yourself "
                "and share the final SQL with the human.",
            )
            turns.append(reply)
            turns.append(note)
            trajectory.add(
                ChatTurn(role=SELF_THOUGHT, content=message.message, author=config.agent_name)
            )
            continue

        # message.to == "human": enforce the think-before-sharing structure
        sql = message.generated_sql.strip()
        if sql and not _candidate_was_verified(trajectory, sql) and not structure_note_sent:
            structure_note_sent = True
            note = ChatTurn(
                role=SYSTEM,
                content=(
                    "Before sharing, you are required to pose the candidate SQL to yourself in a "
                    "thought and then verify it in a further thought. Do that now, then share."
                ),
            )
            turns.append(reply)
            turns.append(note)
            trajectory.add(ChatTurn(role=SYSTEM, content=note.content))
            continue
        trajectory.add(
            ChatTurn(
                role=ASSISTANT,
                content=message.message + (f"\n{sql}" if sql else ""),
                author=config.agent_name,
            )
        )
        trajectory.final_sql = sql or None
        trajectory.outcome = SOLVED
        return
    raise _AbortRun(f"event cap {config.max_events} reached")


def _candidate_was_verified(trajectory: Trajectory, sql: str) -> bool:
    """True iff some self-thought contains the candidate and a later thought follows it."""
    target = _normalized(sql)
    thought_indexes = [
        i for i, e in enumerate(trajectory.events) if e.role == SELF_THOUGHT
    ]
    containing = [
        i
        for i in thought_indexes
        if target and target in _normalized(trajectory.events[i].content)
    ]
    if not containing:
        return False
    first = containing[0]
    return any(i > first for i in thought_indexes)


# -- online runs -------------------------------------------------------------


def run_online(
    task: TaskInstance,
    config: AgentConfig,
    storeset: MemoryStoreSet,
    gateway: ChatGateway,
    catalog: DatabaseCatalog,
    feedback_source,
    event_sink: Callable[[ChatTurn], None] | None = None,
) -> Trajectory:
    """One online attempt: propose, submit for review, refine until confirmed or capped.

    Termination is exact: comparator-confirmed Correct (Solved), corrective
    feedback count reaching the cap (StepCapExceeded), or the gateway's
    context limit (ContextCapExceeded).
    """
    trajectory = Trajectory(
        task_id=task.task_id, config_label=config.label, phase=PHASE_ONLINE
    )
    trajectory.on_event = event_sink
    trajectory.add(ChatTurn(role=USER, content=_task_user_message(task), author=HUMAN_NAME))
    try:
        if config.procedural:
            _run_p_online(task, config, storeset, gateway, catalog, feedback_source, trajectory)
        else:
            _run_np_online(task, config, storeset, gateway, catalog, feedback_source, trajectory)
    except ContextExceeded:
        trajectory.outcome = CONTEXT_CAP_EXCEEDED
    except SkipRequested:
        trajectory.outcome = STEP_CAP_EXCEEDED
        trajectory.abort_reason = "human-skip"
    except _AbortRun as abort:
        trajectory.outcome = ABORTED
        trajectory.abort_reason = abort.reason
    except GatewayError as exc:
        trajectory.outcome = ABORTED
        trajectory.abort_reason = str(exc)
    return trajectory


def _review_candidate(
    feedback_source,
    candidate_sql: str,
    task: TaskInstance,
    trajectory: Trajectory,
    config: AgentConfig,
):
    """Submit to the feedback source and log the exchange. Returns the decision."""
    trajectory.add(
        ChatTurn(
            role=ASSISTANT,
            content=(
                "Could you please review the generated SQL query for correctness?\n"
                + candidate_sql
            ),
            author=config.agent_name,
        )
    )
    trajectory.last_candidate_sql = candidate_sql
    try:
        decision = feedback_source.review(candidate_sql, task, list(trajectory.events))
    except (GoldDefectError, ContextExceeded, SkipRequested):
        raise
    except Exception as exc:  # noqa: BLE001 - feedback source failure aborts the run
        raise _AbortRun(f"feedback source failure: {exc}") from exc
    trajectory.expert_checks += 1
    trajectory.add(
        ChatTurn(
            role=USER,
            content=decision.text,
            author=EXPERT_NAME,
        )
    )
    return decision


def _run_np_online(
    task: TaskInstance,
    config: AgentConfig,
    storeset: MemoryStoreSet,
    gateway: ChatGateway,
    catalog: DatabaseCatalog,
    feedback_source,
    trajectory: Trajectory,
) -> None:
    pipeline = _NpPipeline(task, config, storeset, gateway, catalog, online=True)
    sql = pipeline.generate(trajectory)
    while True:
        decision = _review_candidate(feedback_source, sql, task, trajectory, config)
        if decision.correct:
            trajectory.final_sql = sql
            trajectory.outcome = SOLVED
            trajectory.add(
                ChatTurn(
                    role=ASSISTANT,
                    content=(
                        "The SQL query has been successfully generated and verified. "
                        f"Here is the final query for your request:\n{sql}"
                    ),
                    author=config.agent_name,
                )
            )
            return
        trajectory.feedback_rounds += 1
        if trajectory.feedback_rounds >= config.max_feedback_steps:
            trajectory.outcome = STEP_CAP_EXCEEDED
            return
        if len(trajectory.events) >= config.max_events:
            raise _AbortRun(f"event cap {config.max_events} reached")
        sql = pipeline.refine(trajectory, sql, decision.text)


def _run_p_online(
    task: TaskInstance,
    config: AgentConfig,
    storeset: MemoryStoreSet,
    gateway: ChatGateway,
    catalog: DatabaseCatalog,
    feedback_source,
    trajectory: Trajectory,
) -> None:
    turns: list[ChatTurn] = [
        _p_system_turn(config, catalog, online=True),
        ChatTurn(role=USER, content=_task_user_message(task), author=HUMAN_NAME),
    ]
    confirmed_sql: str | None = None
    unconfirmed_note_sent = False
    while len(trajectory.events) < config.max_events:
        reply, message = _chat_or_retry_parse(gateway, turns, [], config)
        if reply.role == TOOL_CALL:
            turns.append(reply)
            result = "Tools are not available during the online conversation."
            turns.append(ChatTurn(role=TOOL_RESULT, content=result, tool_name=reply.tool_name))
            trajectory.add(
                ChatTurn(
                    role=TOOL_CALL,
                    tool_name=reply.tool_name,
                    tool_arguments=reply.tool_arguments,
                    author=config.agent_name,
                )
            )
            trajectory.add(ChatTurn(role=TOOL_RESULT, content=result, tool_name=reply.tool_name))
            continue
        assert message is not None
        if message.to == "self":
            turns.append(ChatTurn(role=SELF_THOUGHT, content=reply.content))
            trajectory.add(
                ChatTurn(role=SELF_THOUGHT, content=message.message, author=config.agent_name)
            )
            continue
        if message.to == "expert":
            candidate = message.generated_sql.strip()
            turns.append(ChatTurn(role=ASSISTANT, content=reply.content))
            if not candidate:
                turns.append(
                    ChatTurn(
                        role=SYSTEM,
                        content="Your review request must include the SQL query in generated_sql.",
                    )
                )
                continue
            decision = _review_candidate(feedback_source, candidate, task, trajectory, config)
            turns.append(ChatTurn(role=USER, content=decision.text, author=EXPERT_NAME))
            if decision.correct:
                confirmed_sql = candidate
            else:
                trajectory.feedback_rounds += 1
                if trajectory.feedback_rounds >= config.max_feedback_steps:
                    trajectory.outcome = STEP_CAP_EXCEEDED
                    return
            continue

        # to == "human"
        sql = message.generated_sql.strip()
        if confirmed_sql is None or (sql and _normalized(sql) != _normalized(confirmed_sql)):
            if unconfirmed_note_sent:
                raise _AbortRun("agent insisted on emitting an unconfirmed SQL query")
            unconfirmed_note_sent = True
            turns.append(ChatTurn(role=ASSISTANT, content=reply.content))
            note = ChatTurn(
                role=SYSTEM,
                content=(
                    "You must get confirmation from the expert that this exact SQL query is "
                    "correct before returning it to the human."
                ),
            )
            turns.append(note)
            trajectory.add(ChatTurn(role=SYSTEM, content=note.content))
            continue
        trajectory.add(
            ChatTurn(
                role=ASSISTANT,
                content=message.message + (f"\n{confirmed_sql}" if confirmed_sql else ""),
                author=config.agent_name,
            )
        )
        trajectory.final_sql = confirmed_sql
        trajectory.outcome = SOLVED
        return
    raise _AbortRun(f"event cap {config.max_events} reached")
