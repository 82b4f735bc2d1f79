"""Post-success knowledge distillation and memory commits.

After a solved online task the agent runs a guided three-step reflection
(mistakes, revealed knowledge, generalized facts), the confirmed question-SQL
pair is committed, and at levels 2+ the agent is asked to save up to five
subtask / database-fact memories through its save_memory tool.

All memory writes flow through ``commit_question_record`` and the save tool;
nothing here touches the stores directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import prompts
from .agent import (
    SAVE_MEMORY_SPEC,
    AgentConfig,
    AgentMessage,
    SaveSession,
    Trajectory,
    _p_system_turn,
    parse_agent_message,
    tool_save_memory,
)
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
)
from .memory import InsertResult, MemoryKind, MemoryStoreSet, compose_question_body

PHASE_DISTILL = "distill"

# guard against a model that never addresses the human during the dialogue
_MAX_DIALOGUE_STEPS = 12


@dataclass
class DistilledKnowledge:
    facts_text: str
    mistake_notes: str | None = None
    revealed_notes: str | None = None
    had_feedback: bool = False
    skipped: bool = False


@dataclass
class DistillOutcome:
    """Everything the distillation stage did for one solved task."""

    knowledge: DistilledKnowledge
    question_insert: InsertResult | None = None
    saved_records: list[tuple[MemoryKind, str]] = field(default_factory=list)


def _dialogue_turns(trajectory: Trajectory, config: AgentConfig, catalog: DatabaseCatalog) -> list[ChatTurn]:
    """Rebuild the conversation so the reflection sees the full interaction."""
    if config.procedural:
        turns = [_p_system_turn(config, catalog, online=True)]
    else:
        turns = [ChatTurn(role=SYSTEM, content=prompts.load("np_system_online"))]
    for event in trajectory.events:
        if event.role in (TOOL_CALL, TOOL_RESULT):
            continue  # tool traffic is framework detail; thoughts and messages carry the story
        turns.append(ChatTurn(role=event.role, content=event.content))
    return turns


def distill_knowledge(
    trajectory: Trajectory,
    config: AgentConfig,
    catalog: DatabaseCatalog,
    gateway: ChatGateway,
) -> DistilledKnowledge:
    """Run the guided reflection; on context overflow return a skipped marker."""
    if trajectory.outcome != "Solved":
        raise ValueError("distillation runs only on solved online trajectories")
    had_feedback = trajectory.feedback_rounds > 0
    template = "distill_with_feedback" if had_feedback else "distill_no_feedback"
    instruction = prompts.load(template)
    turns = _dialogue_turns(trajectory, config, catalog)
    turns.append(ChatTurn(role=USER, content=instruction))
    trajectory.add(
        ChatTurn(role=USER, content=instruction, author="Human", phase=PHASE_DISTILL)
    )

    thoughts: list[str] = []
    try:
        for _ in range(_MAX_DIALOGUE_STEPS):
            reply = gateway.chat(turns, config=config.model_config)
            message = parse_agent_message(reply.content)
            if message is None:
                message = AgentMessage(to="human", message=reply.content)
            if message.to == "self":
                turns.append(ChatTurn(role=SELF_THOUGHT, content=reply.content))
                thoughts.append(message.message)
                trajectory.add(
                    ChatTurn(
                        role=SELF_THOUGHT,
                        content=message.message,
                        author=config.agent_name,
                        phase=PHASE_DISTILL,
                    )
                )
                continue
            facts = message.message.strip()
            trajectory.add(
                ChatTurn(
                    role=ASSISTANT,
                    content=facts,
                    author=config.agent_name,
                    phase=PHASE_DISTILL,
                )
            )
            return DistilledKnowledge(
                facts_text=facts,
                mistake_notes=thoughts[0] if had_feedback and len(thoughts) >= 1 else None,
                revealed_notes=thoughts[1] if had_feedback and len(thoughts) >= 2 else None,
                had_feedback=had_feedback,
            )
        # dialogue never concluded; use the last thought as the facts
        return DistilledKnowledge(
            facts_text=thoughts[-1] if thoughts else "", had_feedback=had_feedback
        )
    except ContextExceeded:
        trajectory.add(
            ChatTurn(
                role=SYSTEM,
                content="Distillation skipped: context limit reached.",
                phase=PHASE_DISTILL,
            )
        )
        return DistilledKnowledge(facts_text="", had_feedback=had_feedback, skipped=True)


def commit_question_record(
    task: TaskInstance,
    final_sql: str,
    facts: str,
    level: int,
    storeset: MemoryStoreSet,
    run_id: str = "",
) -> InsertResult:
    """Store the confirmed pair, keyed by the verbatim question text."""
    body = compose_question_body(final_sql, facts if level >= 1 and facts else None)
    return storeset.insert(
        MemoryKind.SIMILAR_QUESTION,
        key=task.nlq,
        body=body,
        run_id=run_id,
        task_id=task.task_id,
    )


def solicit_saves(
    trajectory: Trajectory,
    facts: str,
    config: AgentConfig,
    catalog: DatabaseCatalog,
    gateway: ChatGateway,
    storeset: MemoryStoreSet,
    task: TaskInstance,
    run_id: str = "",
) -> list[tuple[MemoryKind, str]]:
    """Ask the agent to bank subtasks and database facts; capped save tool calls."""
    if config.memory_level < 2:
        return []
    instruction = prompts.load("save_memory_instruction")
    turns = _dialogue_turns(trajectory, config, catalog)
    turns.append(ChatTurn(role=USER, content=instruction))
    trajectory.add(ChatTurn(role=USER, content=instruction, author="Human", phase=PHASE_DISTILL))

    specs = [SAVE_MEMORY_SPEC]
    session = SaveSession()
    # generous iteration bound: cap worth of saves plus refusals and a closing message
    for _ in range(3 * config.save_cap + 2):
        try:
            reply = gateway.chat(turns, tool_specs=specs, config=config.model_config)
        except ContextExceeded:
            break
        if reply.role == TOOL_CALL and reply.tool_name == "save_memory":
            args = reply.tool_arguments or {}
            result = tool_save_memory(
                storeset,
                config,
                session,
                query_string=str(args.get("query_string", "")),
                knowledge_string=str(args.get("knowledge_string", "")),
                memory_type=str(args.get("memory_type", "")),
                run_id=run_id,
                task_id=task.task_id,
            )
            turns.append(reply)
            turns.append(ChatTurn(role=TOOL_RESULT, content=result, tool_name="save_memory"))
            trajectory.add(
                ChatTurn(
                    role=TOOL_CALL,
                    tool_name="save_memory",
                    tool_arguments=args,
                    author=config.agent_name,
                    phase=PHASE_DISTILL,
                )
            )
            trajectory.add(
                ChatTurn(
                    role=TOOL_RESULT,
                    content=result,
                    tool_name="save_memory",
                    phase=PHASE_DISTILL,
                )
            )
            continue
        if reply.role == TOOL_CALL:
            turns.append(reply)
            turns.append(
                ChatTurn(
                    role=TOOL_RESULT,
                    content="Only the save_memory tool is available now.",
                    tool_name=reply.tool_name,
                )
            )
            continue
        message = parse_agent_message(reply.content)
        text = message.message if message else reply.content
        trajectory.add(
            ChatTurn(
                role=ASSISTANT, content=text, author=config.agent_name, phase=PHASE_DISTILL
            )
        )
        break
    return session.saved


def distill_trajectory(
    trajectory: Trajectory,
    task: TaskInstance,
    config: AgentConfig,
    catalog: DatabaseCatalog,
    gateway: ChatGateway,
    storeset: MemoryStoreSet,
    run_id: str = "",
) -> DistillOutcome:
    """Full post-success pipeline: reflect, commit the pair, solicit extra saves.

    The pair is committed even when the reflection is skipped for context
    overflow, so retention never hinges on the distillation call.
    """
    if trajectory.final_sql is None:
        raise ValueError("solved trajectory is missing final_sql")
    knowledge = distill_knowledge(trajectory, config, catalog, gateway)
    insert_result = commit_question_record(
        task,
        trajectory.final_sql,
        knowledge.facts_text if not knowledge.skipped else "",
        config.memory_level,
        storeset,
        run_id=run_id,
    )
    saved: list[tuple[MemoryKind, str]] = []
    if not knowledge.skipped:
        saved = solicit_saves(
            trajectory, knowledge.facts_text, config, catalog, gateway, storeset, task, run_id
        )
    return DistillOutcome(knowledge=knowledge, question_insert=insert_result, saved_records=saved)
