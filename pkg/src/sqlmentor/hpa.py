"""Human proxy agent: comparator-grounded review with model-phrased feedback.

The verdict always comes from executing candidate and gold and comparing
outputs; the model only phrases the corrective feedback (or the confirmation),
so a lying model can never flip correctness. Outgoing feedback is sanitized so
the full gold SQL is never revealed.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import prompts
from ._util import normalize_ws
from .corpus import DatabaseCatalog, TaskInstance
from .llm import SYSTEM, USER, ChatGateway, ChatTurn, GatewayError, ModelConfig
from .sqlexec import ROWS, GoldDefectError, TaskResult, score

# Feedback below this normalized length may legitimately coincide with a short
# gold query; only leaks of at least this many characters are redacted.
LEAK_MIN_CHARS = 40

TRANSCRIPT_TAIL_TURNS = 6

SANITIZED_FALLBACK_FLAG = "sanitized-fallback"
DEFAULT_CONFIRMATION = "The SQL query is correct and produces the expected output."


@dataclass
class ReferenceSolution:
    task_id: str
    cot_text: str


@dataclass
class FeedbackDecision:
    correct: bool
    text: str
    result: TaskResult | None = None
    flags: tuple[str, ...] = ()

    @property
    def verdict(self) -> str:
        return "Correct" if self.correct else "Feedback"


def contains_gold_leak(feedback_text: str, gold_sql: str) -> bool:
    gold = normalize_ws(gold_sql).rstrip(";")
    if len(gold) < LEAK_MIN_CHARS:
        return False
    return gold.lower() in normalize_ws(feedback_text).lower()


def sanitize(feedback_text: str, gold_sql: str) -> tuple[str, bool]:
    """Redact a verbatim gold-SQL leak. Returns (text, leaked)."""
    if not contains_gold_leak(feedback_text, gold_sql):
        return feedback_text, False
    gold = normalize_ws(gold_sql).rstrip(";")
    redacted_chars = []
    normalized = normalize_ws(feedback_text)
    lowered = normalized.lower()
    target = gold.lower()
    start = 0
    while True:
        index = lowered.find(target, start)
        if index < 0:
            redacted_chars.append(normalized[start:])
            break
        redacted_chars.append(normalized[start:index])
        redacted_chars.append("[redacted]")
        start = index + len(target)
    return "".join(redacted_chars), True


def _outcome_summary(result: TaskResult) -> str:
    outcome = result.outcome
    if outcome.status == ROWS:
        preview = outcome.rows[:5] if outcome.rows else []
        return (
            f"Execution returned {len(outcome.rows or [])} row(s); the output does not "
            f"match the expected result. First rows: {preview}"
        )
    if outcome.status == "Timeout":
        return f"Execution timed out: {outcome.error_text}"
    return f"SQLite error: {outcome.error_text}"


class HumanProxyAgent:
    """Feedback source backed by gold SQL, evidence, and the comparator."""

    def __init__(
        self,
        catalog: DatabaseCatalog,
        gateway: ChatGateway,
        model_config: ModelConfig | None = None,
        timeout_ms: int | None = None,
    ):
        self.catalog = catalog
        self.gateway = gateway
        self.model_config = model_config or gateway.config
        self.timeout_ms = timeout_ms
        self._references: dict[str, ReferenceSolution] = {}
        self.reference_calls = 0

    # -- reference -----------------------------------------------------

    def prepare_reference(self, task: TaskInstance) -> ReferenceSolution:
        """Chain-of-thought reference from gold SQL + evidence; cached per task."""
        cached = self._references.get(task.task_id)
        if cached is not None:
            return cached
        prompt = prompts.render(
            "hpa_reference",
            question=task.nlq,
            evidence=task.evidence or "(none)",
            database_schema=self.catalog.schema_text,
            gold_sql=task.gold_sql,
        )
        reply = self.gateway.chat(
            [ChatTurn(role=USER, content=prompt)], config=self.model_config
        )
        self.reference_calls += 1
        reference = ReferenceSolution(task_id=task.task_id, cot_text=reply.content)
        self._references[task.task_id] = reference
        return reference

    # -- review --------------------------------------------------------

    def review(
        self,
        candidate_sql: str,
        task: TaskInstance,
        transcript: list[ChatTurn] | None = None,
    ) -> FeedbackDecision:
        kwargs = {}
        if self.timeout_ms is not None:
            kwargs["timeout_ms"] = self.timeout_ms
        result = score(self.catalog, task, candidate_sql, **kwargs)
        if result.z is None:
            raise GoldDefectError(
                f"task {task.task_id}: gold query failed to execute "
                f"({result.gold_outcome.error_text if result.gold_outcome else 'unknown'})"
            )
        if result.z == 1:
            return FeedbackDecision(
                correct=True, text=self._phrase_confirmation(candidate_sql), result=result
            )
        return self._phrase_feedback(candidate_sql, task, result, transcript or [])

    def _phrase_confirmation(self, candidate_sql: str) -> str:
        # decoration only; the verdict is already decided by the comparator
        try:
            reply = self.gateway.chat(
                [
                    ChatTurn(
                        role=USER,
                        content=prompts.render("hpa_confirm", candidate_sql=candidate_sql),
                    )
                ],
                config=self.model_config,
            )
            return reply.content or DEFAULT_CONFIRMATION
        except GatewayError:
            return DEFAULT_CONFIRMATION

    def _feedback_prompt(
        self,
        candidate_sql: str,
        task: TaskInstance,
        result: TaskResult,
        transcript: list[ChatTurn],
    ) -> str:
        tail = transcript[-TRANSCRIPT_TAIL_TURNS:]
        rendered_tail = "\n".join(
            f"[{turn.author or turn.role}] {normalize_ws(turn.content)[:500]}" for turn in tail
        )
        reference = self.prepare_reference(task)
        return prompts.render(
            "hpa_feedback",
            question=task.nlq,
            reference=reference.cot_text,
            candidate_sql=candidate_sql,
            outcome=_outcome_summary(result),
            transcript=rendered_tail or "(none)",
        )

    def _phrase_feedback(
        self,
        candidate_sql: str,
        task: TaskInstance,
        result: TaskResult,
        transcript: list[ChatTurn],
    ) -> FeedbackDecision:
        prompt = self._feedback_prompt(candidate_sql, task, result, transcript)
        reply = self.gateway.chat([ChatTurn(role=USER, content=prompt)], config=self.model_config)
        text = self._ensure_engine_error(reply.content, result)
        sanitized, leaked = sanitize(text, task.gold_sql)
        if not leaked:
            return FeedbackDecision(correct=False, text=sanitized, result=result)
        # one retry with a stronger instruction
        retry = self.gateway.chat(
            [
                ChatTurn(role=USER, content=prompt),
                ChatTurn(role=SYSTEM, content=prompts.load("hpa_leak_retry")),
            ],
            config=self.model_config,
        )
        text = self._ensure_engine_error(retry.content, result)
        sanitized, leaked = sanitize(text, task.gold_sql)
        if not leaked:
            return FeedbackDecision(correct=False, text=sanitized, result=result)
        fallback = (
            f"The query is not correct (outcome: {result.mismatch_reason}). "
            + _outcome_summary(result)
        )
        return FeedbackDecision(
            correct=False, text=fallback, result=result, flags=(SANITIZED_FALLBACK_FLAG,)
        )

    @staticmethod
    def _ensure_engine_error(text: str, result: TaskResult) -> str:
        """A candidate that failed with an engine error must see the message verbatim."""
        error = result.outcome.error_text
        if result.outcome.status != ROWS and error and error not in text:
            return text + f"\n\nSQLite error: {error}"
        return text
