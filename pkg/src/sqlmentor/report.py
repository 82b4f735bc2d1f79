"""Run reports: phase accuracies, deltas, curves, error histogram, file emission.

Accuracies are percentages rounded half-up to one decimal; the delta columns
are computed from the stored (rounded) aggregates with exact decimal
arithmetic, so ``delta_i == final - initial`` holds in every emitted report.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from decimal import Decimal
from pathlib import Path

from ._util import round_half_up

PROTOCOL_SAME = "SameQuestion"
PROTOCOL_NEW = "NewQuestion"

PHASE_ORDER = ("Initial", "Online", "Final")


@dataclass
class TaskRow:
    """One scored task in one phase."""

    db_id: str
    phase: str
    task_id: str
    z: int | None
    candidate_sql: str | None = None
    gold_sql: str | None = None
    mismatch_reason: str | None = None
    outcome: str | None = None
    feedback_rounds: int | None = None


@dataclass
class PhaseSummary:
    phase: str
    db_id: str
    rows: list[TaskRow] = field(default_factory=list)

    @property
    def excluded(self) -> list[str]:
        return [r.task_id for r in self.rows if r.z is None]

    @property
    def accuracy(self) -> float | None:
        scorable = [r.z for r in self.rows if r.z is not None]
        if not scorable:
            return None
        return round_half_up(100.0 * sum(scorable) / len(scorable), 1)


def pooled_accuracy(summaries: list[PhaseSummary]) -> float | None:
    """Question-weighted accuracy across databases."""
    zs = [r.z for s in summaries for r in s.rows if r.z is not None]
    if not zs:
        return None
    return round_half_up(100.0 * sum(zs) / len(zs), 1)


def compute_delta(minuend: float | None, subtrahend: float | None) -> float | None:
    """Exact one-decimal subtraction on stored aggregates."""
    if minuend is None or subtrahend is None:
        return None
    return float(Decimal(repr(minuend)) - Decimal(repr(subtrahend)))


@dataclass
class RunReport:
    run_id: str
    config_label: str
    protocol: str
    seed: int
    db_ids: list[str]
    initial: float | None = None
    online: float | None = None
    final: float | None = None
    delta_i: float | None = None
    delta_o: float | None = None
    phase_summaries: list[PhaseSummary] = field(default_factory=list)
    curve: list[tuple[int, float]] = field(default_factory=list)
    coverage: list[tuple[int, float]] = field(default_factory=list)
    error_histogram: dict[str, int] = field(default_factory=dict)
    excluded_tasks: list[str] = field(default_factory=list)
    incomplete: bool = False
    notes: list[str] = field(default_factory=list)

    def finalize_deltas(self) -> None:
        self.delta_i = compute_delta(self.final, self.initial)
        self.delta_o = compute_delta(self.final, self.online)

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["curve"] = [[t, a] for t, a in self.curve]
        payload["coverage"] = [[t, c] for t, c in self.coverage]
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "RunReport":
        summaries = [
            PhaseSummary(
                phase=s["phase"],
                db_id=s["db_id"],
                rows=[TaskRow(**r) for r in s["rows"]],
            )
            for s in payload.get("phase_summaries", [])
        ]
        report = cls(
            run_id=payload["run_id"],
            config_label=payload["config_label"],
            protocol=payload["protocol"],
            seed=payload["seed"],
            db_ids=payload["db_ids"],
            initial=payload.get("initial"),
            online=payload.get("online"),
            final=payload.get("final"),
            delta_i=payload.get("delta_i"),
            delta_o=payload.get("delta_o"),
            phase_summaries=summaries,
            curve=[(int(t), a) for t, a in payload.get("curve", [])],
            coverage=[(int(t), c) for t, c in payload.get("coverage", [])],
            error_histogram=payload.get("error_histogram", {}),
            excluded_tasks=payload.get("excluded_tasks", []),
            incomplete=payload.get("incomplete", False),
            notes=payload.get("notes", []),
        )
        return report


def report_from_phase_accuracies(
    label: str,
    protocol: str,
    initial: float | None,
    online: float | None,
    final: float | None,
    run_id: str = "manual",
    seed: int = 0,
) -> RunReport:
    """Build a report directly from phase accuracies (delta arithmetic entry point)."""
    report = RunReport(
        run_id=run_id,
        config_label=label,
        protocol=protocol,
        seed=seed,
        db_ids=[],
        initial=initial,
        online=online,
        final=final,
    )
    report.finalize_deltas()
    return report


def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{value:.1f}"


def render_text_table(reports: list[RunReport]) -> str:
    """Fixed-width table in the benchmark layout: label, phases, deltas."""
    header = f"{'Agent Label':<12} {'Initial':>8} {'Online':>8} {'Final':>8} {'Δi':>8} {'Δo':>8}"
    lines = [header, "-" * len(header)]
    for r in reports:
        lines.append(
            f"{r.config_label:<12} {_fmt(r.initial):>8} {_fmt(r.online):>8} "
            f"{_fmt(r.final):>8} {_fmt(r.delta_i):>8} {_fmt(r.delta_o):>8}"
        )
    return "\n".join(lines) + "\n"


def results_csv(report: RunReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(
        ["db_id", "phase", "task_id", "z", "mismatch_reason", "outcome", "feedback_rounds", "candidate_sql"]
    )
    for summary in report.phase_summaries:
        for row in summary.rows:
            writer.writerow(
                [
                    row.db_id,
                    row.phase,
                    row.task_id,
                    "" if row.z is None else row.z,
                    row.mismatch_reason or "",
                    row.outcome or "",
                    "" if row.feedback_rounds is None else row.feedback_rounds,
                    row.candidate_sql or "",
                ]
            )
    return buffer.getvalue()


def curve_csv(report: RunReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(["online_instances", "accuracy", "evidence_coverage"])
    coverage = dict(report.coverage)
    for t, accuracy in report.curve:
        cov = coverage.get(t)
        writer.writerow([t, accuracy, "" if cov is None else cov])
    return buffer.getvalue()


def build_report(report: RunReport, out_dir: str | Path) -> dict[str, Path]:
    """Emit report.json, results.csv, curve.csv and report.txt under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "json": out / "report.json",
        "results": out / "results.csv",
        "curve": out / "curve.csv",
        "text": out / "report.txt",
    }
    paths["json"].write_text(
        json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    paths["results"].write_text(results_csv(report), encoding="utf-8")
    paths["curve"].write_text(curve_csv(report), encoding="utf-8")
    body = render_text_table([report])
    if not any(s.rows for s in report.phase_summaries) and report.initial is None:
        body += "no tasks\n"
    if report.incomplete:
        body += "INCOMPLETE RUN\n"
    if report.notes:
        body += "".join(f"note: {n}\n" for n in report.notes)
    paths["text"].write_text(body, encoding="utf-8")
    return paths
