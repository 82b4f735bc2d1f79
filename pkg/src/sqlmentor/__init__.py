"""Continual-learning text-to-SQL agents with human-in-the-loop feedback."""

from .agent import AgentConfig, Trajectory, run_offline, run_online
from .corpus import Corpus, DatabaseCatalog, EvalSplit, TaskInstance, load_bird, render_schema, split_tasks
from .embedding import CachingEmbedder, HashEmbedder, RemoteEmbedder
from .harness import evidence_coverage, learning_curve, run_protocol
from .hpa import FeedbackDecision, HumanProxyAgent
from .llm import ChatGateway, ChatTurn, LiveBackend, ModelConfig, RecordingBackend, ReplayBackend, ScriptedBackend
from .memory import MemoryKind, MemoryRecord, MemoryStoreSet, RetrievalHit
from .report import RunReport, build_report, report_from_phase_accuracies
from .sqlexec import ExecutionOutcome, TaskResult, execute, outputs_match, score

__version__ = "0.1.0"

__all__ = [
    "AgentConfig",
    "CachingEmbedder",
    "ChatGateway",
    "ChatTurn",
    "Corpus",
    "DatabaseCatalog",
    "EvalSplit",
    "ExecutionOutcome",
    "FeedbackDecision",
    "HashEmbedder",
    "HumanProxyAgent",
    "LiveBackend",
    "MemoryKind",
    "MemoryRecord",
    "MemoryStoreSet",
    "ModelConfig",
    "RecordingBackend",
    "ReplayBackend",
    "RetrievalHit",
    "RunReport",
    "ScriptedBackend",
    "TaskInstance",
    "TaskResult",
    "Trajectory",
    "build_report",
    "evidence_coverage",
    "execute",
    "learning_curve",
    "load_bird",
    "outputs_match",
    "render_schema",
    "report_from_phase_accuracies",
    "run_offline",
    "run_online",
    "run_protocol",
    "score",
    "split_tasks",
]
