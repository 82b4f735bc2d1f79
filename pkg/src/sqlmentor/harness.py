"""Three-phase evaluation protocol, learning curves, coverage, error analysis.

Initial: offline pass with an empty store. Online: sequential feedback-driven
pass over the train split, committing memory after each solved task and
snapshotting the store. Final: offline pass with the accumulated store. The
same-question protocol evaluates Initial/Final on the train split, the
new-question protocol on the held-out test split.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._util import LogicalClock
from .agent import (
    ABORTED,
    PHASE_FINAL,
    PHASE_INITIAL,
    PHASE_ONLINE,
    SOLVED,
    AgentConfig,
    Trajectory,
    run_offline,
    run_online,
    save_trajectory,
)
from .corpus import Corpus, CorpusError, TaskInstance, split_tasks
from .distill import distill_trajectory
from .embedding import HashEmbedder, cosine_similarity
from .hpa import GoldDefectError, HumanProxyAgent
from .llm import ChatGateway
from .memory import MemoryKind, MemoryRecord, MemoryStoreSet
from .report import (
    PROTOCOL_NEW,
    PROTOCOL_SAME,
    PhaseSummary,
    RunReport,
    TaskRow,
    pooled_accuracy,
)
from .sqlexec import score
from .sqldiff import classify_error

EVIDENCE_COVERAGE_THRESHOLD = 0.9
EMPTY_EVIDENCE_MARKER = "(no evidence)"

Snapshot = dict[MemoryKind, tuple[MemoryRecord, ...]]


@dataclass
class OnlinePhase:
    summary: PhaseSummary
    trajectories: list[Trajectory] = field(default_factory=list)
    snapshots: dict[int, Snapshot] = field(default_factory=dict)


@dataclass
class HarnessOptions:
    run_id: str = "run"
    timeout_ms: int = 30_000
    runs_dir: Path | None = None
    curve_grid: list[int] | None = None
    log_trajectories: bool = True


def default_grid(train_size: int, step: int = 5) -> list[int]:
    """Every `step` instances plus both endpoints."""
    points = sorted({0, *range(step, train_size, step), train_size})
    return points


def _storeset_for(config: AgentConfig, db_id: str, embedder) -> MemoryStoreSet:
    return MemoryStoreSet(
        db_id=db_id, level=config.memory_level, embedder=embedder, clock=LogicalClock()
    )


def _offline_pass(
    corpus: Corpus,
    db_id: str,
    tasks: list[TaskInstance],
    config: AgentConfig,
    storeset: MemoryStoreSet,
    gateway: ChatGateway,
    phase: str,
    options: HarnessOptions,
) -> PhaseSummary:
    catalog = corpus.catalogs[db_id]
    summary = PhaseSummary(phase=phase, db_id=db_id)
    if phase == PHASE_INITIAL and storeset.size() != 0:
        raise RuntimeError("initial pass must start with an empty store")
    writes_before = storeset.write_count
    for task in tasks:
        trajectory = run_offline(task, config, storeset, gateway, catalog, phase=phase)
        _log_trajectory(trajectory, db_id, phase, options)
        if trajectory.final_sql:
            result = score(catalog, task, trajectory.final_sql, timeout_ms=options.timeout_ms)
            summary.rows.append(
                TaskRow(
                    db_id=db_id,
                    phase=phase,
                    task_id=task.task_id,
                    z=result.z,
                    candidate_sql=trajectory.final_sql,
                    gold_sql=task.gold_sql,
                    mismatch_reason=result.mismatch_reason,
                    outcome=trajectory.outcome,
                )
            )
        else:
            summary.rows.append(
                TaskRow(
                    db_id=db_id,
                    phase=phase,
                    task_id=task.task_id,
                    z=0,
                    candidate_sql=None,
                    gold_sql=task.gold_sql,
                    mismatch_reason="error",
                    outcome=trajectory.outcome,
                )
            )
    if storeset.write_count != writes_before:
        raise RuntimeError("offline pass wrote to the memory store")
    return summary


def _online_pass(
    corpus: Corpus,
    db_id: str,
    train: list[TaskInstance],
    config: AgentConfig,
    storeset: MemoryStoreSet,
    gateway: ChatGateway,
    hpa: HumanProxyAgent,
    options: HarnessOptions,
) -> OnlinePhase:
    catalog = corpus.catalogs[db_id]
    summary = PhaseSummary(phase=PHASE_ONLINE, db_id=db_id)
    phase = OnlinePhase(summary=summary)
    phase.snapshots[0] = storeset.snapshot_records()
    for index, task in enumerate(train, start=1):
        try:
            trajectory = run_online(task, config, storeset, gateway, catalog, hpa)
        except GoldDefectError:
            trajectory = Trajectory(
                task_id=task.task_id,
                config_label=config.label,
                phase=PHASE_ONLINE,
                outcome=ABORTED,
                abort_reason="gold-defect",
            )
        phase.trajectories.append(trajectory)
        if trajectory.outcome == SOLVED:
            distill_trajectory(
                trajectory, task, config, catalog, gateway, storeset, run_id=options.run_id
            )
        _log_trajectory(trajectory, db_id, PHASE_ONLINE, options)
        z: int | None
        if trajectory.abort_reason == "gold-defect":
            z = None
        else:
            z = 1 if trajectory.outcome == SOLVED else 0
        summary.rows.append(
            TaskRow(
                db_id=db_id,
                phase=PHASE_ONLINE,
                task_id=task.task_id,
                z=z,
                candidate_sql=trajectory.final_sql or trajectory.last_candidate_sql,
                gold_sql=task.gold_sql,
                mismatch_reason="gold-defect" if z is None else None,
                outcome=trajectory.outcome,
                feedback_rounds=trajectory.feedback_rounds,
            )
        )
        phase.snapshots[index] = storeset.snapshot_records()
        _write_snapshot(storeset, index, options)
    return phase


def _log_trajectory(trajectory: Trajectory, db_id: str, phase: str, options: HarnessOptions) -> None:
    if options.runs_dir is None or not options.log_trajectories:
        return
    path = options.runs_dir / options.run_id / db_id / phase / f"{trajectory.task_id}.jsonl"
    save_trajectory(trajectory, path)


def _write_snapshot(storeset: MemoryStoreSet, count: int, options: HarnessOptions) -> None:
    if options.runs_dir is None:
        return
    base = options.runs_dir / options.run_id / storeset.db_id / "snapshots"
    storeset.write_snapshot_dir(base, options.run_id, count)
    manifest_path = base / "snapshots.json"
    manifest = {}
    if manifest_path.is_file():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    manifest[str(count)] = storeset.size()
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def run_protocol(
    corpus: Corpus,
    db_id: str,
    config: AgentConfig,
    protocol: str,
    seed: int,
    gateway: ChatGateway,
    hpa_gateway: ChatGateway | None = None,
    embedder=None,
    options: HarnessOptions | None = None,
) -> RunReport:
    """Run Initial/Online/Final for one database and one agent configuration."""
    if protocol not in (PROTOCOL_SAME, PROTOCOL_NEW):
        raise ValueError(f"unknown protocol '{protocol}'")
    if db_id not in corpus.catalogs:
        raise CorpusError(f"unknown database '{db_id}'")
    options = options or HarnessOptions()
    embedder = embedder or HashEmbedder()
    split = split_tasks(corpus, db_id, seed)
    eval_tasks = split.train if protocol == PROTOCOL_SAME else split.test
    catalog = corpus.catalogs[db_id]
    hpa = HumanProxyAgent(catalog, hpa_gateway or gateway, timeout_ms=options.timeout_ms)

    report = RunReport(
        run_id=options.run_id,
        config_label=config.label,
        protocol=protocol,
        seed=seed,
        db_ids=[db_id],
    )
    storeset = _storeset_for(config, db_id, embedder)
    try:
        initial = _offline_pass(
            corpus, db_id, eval_tasks, config, storeset, gateway, PHASE_INITIAL, options
        )
        online = _online_pass(
            corpus, db_id, split.train, config, storeset, gateway, hpa, options
        )
        final = _offline_pass(
            corpus, db_id, eval_tasks, config, storeset, gateway, PHASE_FINAL, options
        )
    except Exception as exc:  # noqa: BLE001 - a failed phase yields a flagged partial report
        report.incomplete = True
        report.notes.append(f"phase aborted: {exc}")
        report.finalize_deltas()
        return report

    report.phase_summaries = [initial, online.summary, final]
    report.initial = initial.accuracy
    report.online = online.summary.accuracy
    report.final = final.accuracy
    report.finalize_deltas()
    report.excluded_tasks = sorted(
        {t for s in report.phase_summaries for t in s.excluded}
    )
    report.error_histogram = error_histogram(final)
    if options.curve_grid is not None:
        curve, coverage = _curve_from_snapshots(
            corpus,
            db_id,
            config,
            split.train,
            split.test,
            online.snapshots,
            gateway,
            embedder,
            options,
        )
        report.curve = curve
        report.coverage = coverage
    report.notes.append(
        "error categories are a rule-based reconstruction from parsed query structure"
    )
    return report


def _curve_from_snapshots(
    corpus: Corpus,
    db_id: str,
    config: AgentConfig,
    train: list[TaskInstance],
    test: list[TaskInstance],
    snapshots: dict[int, Snapshot],
    gateway: ChatGateway,
    embedder,
    options: HarnessOptions,
) -> tuple[list[tuple[int, float]], list[tuple[int, float]]]:
    grid = options.curve_grid or default_grid(len(train))
    curve_options = replace(options, log_trajectories=False)
    curve: list[tuple[int, float]] = []
    coverage: list[tuple[int, float]] = []
    for t in grid:
        if t not in snapshots:
            raise KeyError(f"no memory snapshot after {t} online instances")
        storeset = _storeset_for(config, db_id, embedder)
        storeset.restore_records(snapshots[t])
        phase = PHASE_INITIAL if t == 0 else PHASE_FINAL
        summary = _offline_pass(
            corpus, db_id, test, config, storeset, gateway, phase, curve_options
        )
        accuracy = summary.accuracy
        curve.append((t, accuracy if accuracy is not None else float("nan")))
        coverage.append((t, evidence_coverage(train[:t], test, embedder)))
    return curve, coverage


def learning_curve(
    corpus: Corpus,
    db_id: str,
    config: AgentConfig,
    grid: list[int],
    seed: int,
    gateway: ChatGateway,
    hpa_gateway: ChatGateway | None = None,
    embedder=None,
    options: HarnessOptions | None = None,
) -> RunReport:
    """New-question protocol with Final re-evaluated at each grid point."""
    options = options or HarnessOptions()
    options.curve_grid = sorted(set(grid))
    return run_protocol(
        corpus,
        db_id,
        config,
        PROTOCOL_NEW,
        seed,
        gateway,
        hpa_gateway=hpa_gateway,
        embedder=embedder,
        options=options,
    )


def _evidence_vector(task: TaskInstance, embedder) -> np.ndarray:
    return embedder.embed(task.evidence or EMPTY_EVIDENCE_MARKER)


def evidence_coverage(
    train_prefix_tasks: list[TaskInstance],
    test_tasks: list[TaskInstance],
    embedder,
    threshold: float = EVIDENCE_COVERAGE_THRESHOLD,
) -> float:
    """Fraction of test tasks whose evidence is near-duplicated in the train prefix.

    A test task counts as covered when some train-prefix task's evidence
    embedding has cosine similarity >= threshold (boundary inclusive).
    """
    if not test_tasks:
        return 0.0
    if not train_prefix_tasks:
        return 0.0
    train_vectors = [_evidence_vector(t, embedder) for t in train_prefix_tasks]
    covered = 0
    for test_task in test_tasks:
        v = _evidence_vector(test_task, embedder)
        if any(cosine_similarity(v, w) >= threshold for w in train_vectors):
            covered += 1
    return covered / len(test_tasks)


def error_histogram(summary: PhaseSummary) -> dict[str, int]:
    histogram: dict[str, int] = {}
    for row in summary.rows:
        if row.z != 0 or not row.candidate_sql or not row.gold_sql:
            continue
        category, _ = classify_error(row.gold_sql, row.candidate_sql)
        histogram[category.value] = histogram.get(category.value, 0) + 1
    return histogram


def aggregate_reports(reports: list[RunReport], run_id: str = "aggregate") -> RunReport:
    """Question-weighted pooling of several per-database reports."""
    if not reports:
        raise ValueError("no reports to aggregate")
    first = reports[0]
    merged = RunReport(
        run_id=run_id,
        config_label=first.config_label,
        protocol=first.protocol,
        seed=first.seed,
        db_ids=sorted({db for r in reports for db in r.db_ids}),
        incomplete=any(r.incomplete for r in reports),
    )
    merged.phase_summaries = [s for r in reports for s in r.phase_summaries]
    for phase, attr in (("Initial", "initial"), ("Online", "online"), ("Final", "final")):
        summaries = [s for s in merged.phase_summaries if s.phase == phase]
        setattr(merged, attr, pooled_accuracy(summaries))
    merged.finalize_deltas()
    merged.excluded_tasks = sorted({t for r in reports for t in r.excluded_tasks})
    for r in reports:
        for category, count in r.error_histogram.items():
            merged.error_histogram[category] = merged.error_histogram.get(category, 0) + count
    merged.notes = sorted({n for r in reports for n in r.notes})
    return merged
