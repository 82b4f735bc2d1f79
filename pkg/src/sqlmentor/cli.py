"""Command-line front door.

Exit codes: 0 success, 2 usage, 3 data error, 4 backend error. Every flag has
a config-file equivalent (TOML, ``--config``); explicit flags win over the
file, the file wins over built-in defaults.
"""

from __future__ import annotations

import functools
import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import click

from .agent import AgentConfig, CONFIG_LABELS
from .corpus import CorpusError, load_bird, save_corpus_manifest
from .embedding import HashEmbedder
from .fixtures import CASSETTE_NAMES, FINANCIAL, GoldEchoBackend, replay_cassette, scenario
from .harness import (
    HarnessOptions,
    aggregate_reports,
    default_grid,
    evidence_coverage,
    learning_curve,
    run_protocol,
)
from .llm import GatewayError, LiveBackend, ModelConfig, ReplayBackend, ScriptedBackend
from .report import (
    PROTOCOL_NEW,
    PROTOCOL_SAME,
    RunReport,
    build_report,
    render_text_table,
)
from .sqlexec import execute

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_BACKEND = 4

_PROTOCOLS = {"same": PROTOCOL_SAME, "new": PROTOCOL_NEW}


class DataError(click.ClickException):
    exit_code = EXIT_DATA


class BackendError(click.ClickException):
    exit_code = EXIT_BACKEND


def _load_config(config_path: str | None) -> dict:
    path = Path(config_path) if config_path else Path("sqlmentor.toml")
    if not path.is_file():
        if config_path:
            raise DataError(f"config file not found: {path}")
        return {}
    with path.open("rb") as fh:
        return tomllib.load(fh)


def _setting(flag_value, config: dict, section: str, key: str, default):
    if flag_value is not None:
        return flag_value
    return config.get(section, {}).get(key, default)


def _wrap_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (CorpusError, FileNotFoundError, json.JSONDecodeError) as exc:
            raise DataError(str(exc)) from exc
        except GatewayError as exc:
            raise BackendError(str(exc)) from exc

    return wrapper


def _make_backend(kind: str, config: dict, corpus=None, cassette: str | None = None):
    if kind == "live":
        base_url = config.get("backend", {}).get("base_url")
        api_key = config.get("backend", {}).get("api_key")
        return LiveBackend(base_url=base_url, api_key=api_key)
    if kind == "replay":
        cassette = cassette or config.get("backend", {}).get("cassette")
        if not cassette:
            raise BackendError("replay backend needs --cassette (or backend.cassette in config)")
        if not Path(cassette).is_file():
            raise BackendError(f"cassette not found: {cassette}")
        return ReplayBackend(cassette)
    if kind == "scripted":
        script = config.get("backend", {}).get("script")
        if script:
            replies = json.loads(Path(script).read_text(encoding="utf-8"))
            return ScriptedBackend(replies)
        if corpus is None:
            raise BackendError("scripted backend needs a corpus")
        return GoldEchoBackend(corpus)
    raise BackendError(f"unknown backend '{kind}'")


def _model_config(config: dict) -> ModelConfig:
    backend = config.get("backend", {})
    return ModelConfig(
        model_id=backend.get("model_id", "scripted"),
        temperature=float(backend.get("temperature", 0.0)),
        max_context_tokens=int(backend.get("max_context_tokens", 128_000)),
    )


@click.group()
def main() -> None:
    """Continual-learning text-to-SQL agents: ingest, evaluate, serve, replay."""


@main.command()
@click.option("--root", required=True, type=click.Path(), help="Benchmark root directory.")
@click.option("--out", default="corpus_manifest.json", show_default=True)
@_wrap_errors
def ingest(root: str, out: str) -> None:
    """Validate the corpus layout and write a manifest."""
    corpus = load_bird(root)
    manifest = save_corpus_manifest(corpus, out)
    click.echo(f"{len(manifest['databases'])} databases, {manifest['task_count']} tasks")
    for db_id, info in manifest["databases"].items():
        click.echo(f"  {db_id}: {info['tasks']} tasks, {len(info['tables'])} tables")
        for warning in info["warnings"]:
            click.echo(f"    warning: {warning}", err=True)


def _resolve_run_options(config, root, seed, out_dir, jobs):
    root = _setting(root, config, "run", "root", None)
    if root is None:
        raise DataError("--root is required (or run.root in config)")
    seed = int(_setting(seed, config, "run", "seed", 7))
    out_dir = Path(_setting(out_dir, config, "run", "out_dir", "runs"))
    jobs = int(_setting(jobs, config, "run", "jobs", 1))
    return root, seed, out_dir, jobs


@main.command()
@click.option("--agent", "label", required=True, type=click.Choice(sorted(CONFIG_LABELS)))
@click.option("--protocol", required=True, type=click.Choice(sorted(_PROTOCOLS)))
@click.option("--db", "db_id", default="all", show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--backend", "backend_kind", type=click.Choice(["live", "replay", "scripted"]), default=None)
@click.option("--cassette", type=click.Path(), default=None)
@click.option("--runs", "n_runs", type=int, default=1, show_default=True)
@click.option("--root", type=click.Path(), default=None)
@click.option("--out-dir", type=click.Path(), default=None)
@click.option("--jobs", type=int, default=None)
@click.option("--run-id", default=None)
@click.option("--config", "config_path", type=click.Path(), default=None)
@_wrap_errors
def run(
    label: str,
    protocol: str,
    db_id: str,
    seed: int | None,
    backend_kind: str | None,
    cassette: str | None,
    n_runs: int,
    root: str | None,
    out_dir: str | None,
    jobs: int | None,
    run_id: str | None,
    config_path: str | None,
) -> None:
    """Execute the three-phase protocol and write report files."""
    config = _load_config(config_path)
    root, seed, out_dir, jobs = _resolve_run_options(config, root, seed, out_dir, jobs)
    backend_kind = _setting(backend_kind, config, "backend", "kind", "scripted")
    corpus = load_bird(root)
    db_ids = sorted(corpus.catalogs) if db_id == "all" else [db_id]
    for one in db_ids:
        if one not in corpus.catalogs:
            raise DataError(f"unknown database '{one}'")
    model_config = _model_config(config)
    embedder = HashEmbedder()

    def run_one(one_db: str, one_seed: int) -> RunReport:
        backend = _make_backend(backend_kind, config, corpus=corpus, cassette=cassette)
        from .llm import ChatGateway

        gateway = ChatGateway(backend, model_config)
        agent_config = AgentConfig.from_label(label, model_config=model_config)
        options = HarnessOptions(
            run_id=f"{run_id or label}-{protocol}-s{one_seed}",
            runs_dir=None,
        )
        return run_protocol(
            corpus,
            one_db,
            agent_config,
            _PROTOCOLS[protocol],
            one_seed,
            gateway,
            embedder=embedder,
            options=options,
        )

    per_run_reports: list[RunReport] = []
    for one_seed in range(seed, seed + n_runs):
        if jobs > 1 and len(db_ids) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                db_reports = list(pool.map(lambda d: run_one(d, one_seed), db_ids))
        else:
            db_reports = [run_one(d, one_seed) for d in db_ids]
        merged = aggregate_reports(db_reports, run_id=f"seed-{one_seed}")
        merged.seed = one_seed
        per_run_reports.append(merged)

    final_run_id = run_id or f"{label}-{protocol}-s{seed}"
    target = out_dir / final_run_id
    if n_runs == 1:
        report = per_run_reports[0]
        report.run_id = final_run_id
        paths = build_report(report, target)
    else:
        mean = _mean_report(per_run_reports, final_run_id)
        paths = build_report(mean, target)
        for r in per_run_reports:
            build_report(r, target / f"run-seed-{r.seed}")
    click.echo(render_text_table([RunReport.from_dict(json.loads(paths["json"].read_text()))]))
    click.echo(f"report written to {target}")


def _mean_report(reports: list[RunReport], run_id: str) -> RunReport:
    from ._util import round_half_up

    mean = RunReport(
        run_id=run_id,
        config_label=reports[0].config_label,
        protocol=reports[0].protocol,
        seed=reports[0].seed,
        db_ids=reports[0].db_ids,
        notes=[f"mean of {len(reports)} runs (seeds {[r.seed for r in reports]})"],
    )
    for attr in ("initial", "online", "final"):
        values = [getattr(r, attr) for r in reports if getattr(r, attr) is not None]
        setattr(mean, attr, round_half_up(sum(values) / len(values), 1) if values else None)
    mean.finalize_deltas()
    for r in reports:
        for category, count in r.error_histogram.items():
            mean.error_histogram[category] = mean.error_histogram.get(category, 0) + count
    mean.incomplete = any(r.incomplete for r in reports)
    return mean


@main.command()
@click.option("--agent", "label", required=True, type=click.Choice(sorted(CONFIG_LABELS)))
@click.option("--db", "db_id", required=True)
@click.option("--grid", type=int, default=5, show_default=True, help="Grid step in online instances.")
@click.option("--seed", type=int, default=None)
@click.option("--backend", "backend_kind", type=click.Choice(["live", "replay", "scripted"]), default=None)
@click.option("--cassette", type=click.Path(), default=None)
@click.option("--root", type=click.Path(), default=None)
@click.option("--out-dir", type=click.Path(), default=None)
@click.option("--run-id", default=None)
@click.option("--config", "config_path", type=click.Path(), default=None)
@_wrap_errors
def curve(
    label: str,
    db_id: str,
    grid: int,
    seed: int | None,
    backend_kind: str | None,
    cassette: str | None,
    root: str | None,
    out_dir: str | None,
    run_id: str | None,
    config_path: str | None,
) -> None:
    """Learning curve: final accuracy as a function of online instances."""
    config = _load_config(config_path)
    root, seed, out_dir, _ = _resolve_run_options(config, root, seed, out_dir, None)
    backend_kind = _setting(backend_kind, config, "backend", "kind", "scripted")
    corpus = load_bird(root)
    if db_id not in corpus.catalogs:
        raise DataError(f"unknown database '{db_id}'")
    backend = _make_backend(backend_kind, config, corpus=corpus, cassette=cassette)
    from .llm import ChatGateway

    model_config = _model_config(config)
    gateway = ChatGateway(backend, model_config)
    agent_config = AgentConfig.from_label(label, model_config=model_config)
    train_size = (len(corpus.tasks_for(db_id)) + 1) // 2
    grid_points = default_grid(train_size, step=grid)
    final_run_id = run_id or f"{label}-curve-{db_id}-s{seed}"
    report = learning_curve(
        corpus,
        db_id,
        agent_config,
        grid_points,
        seed,
        gateway,
        options=HarnessOptions(run_id=final_run_id),
    )
    report.run_id = final_run_id
    paths = build_report(report, Path(out_dir) / final_run_id)
    for t, accuracy in report.curve:
        click.echo(f"t={t:>4}  accuracy={accuracy}")
    click.echo(f"curve written to {paths['curve']}")


@main.command()
@click.option("--db", "db_id", required=True)
@click.option("--seed", type=int, default=None)
@click.option("--root", type=click.Path(), default=None)
@click.option("--config", "config_path", type=click.Path(), default=None)
@_wrap_errors
def coverage(db_id: str, seed: int | None, root: str | None, config_path: str | None) -> None:
    """Evidence coverage of the test split by growing train prefixes."""
    config = _load_config(config_path)
    root, seed, _, _ = _resolve_run_options(config, root, seed, None, None)
    corpus = load_bird(root)
    if db_id not in corpus.catalogs:
        raise DataError(f"unknown database '{db_id}'")
    from .corpus import split_tasks

    split = split_tasks(corpus, db_id, seed)
    embedder = HashEmbedder()
    for t in default_grid(len(split.train)):
        fraction = evidence_coverage(split.train[:t], split.test, embedder)
        click.echo(f"t={t:>4}  coverage={fraction:.3f}")


@main.command()
@click.argument("run_id")
@click.option("--out-dir", type=click.Path(), default=None)
@click.option("--config", "config_path", type=click.Path(), default=None)
@_wrap_errors
def report(run_id: str, out_dir: str | None, config_path: str | None) -> None:
    """Re-render the text table for a stored run."""
    config = _load_config(config_path)
    out_dir = Path(_setting(out_dir, config, "run", "out_dir", "runs"))
    path = out_dir / run_id / "report.json"
    if not path.is_file():
        raise DataError(f"no report found at {path}")
    stored = RunReport.from_dict(json.loads(path.read_text(encoding="utf-8")))
    click.echo(render_text_table([stored]), nl=False)


@main.command()
@click.option("--port", type=int, default=8765, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--root", type=click.Path(), default=None)
@click.option("--backend", "backend_kind", type=click.Choice(["live", "replay", "scripted"]), default=None)
@click.option("--cassette", type=click.Path(), default=None)
@click.option("--memory-dir", type=click.Path(), default=None)
@click.option("--static-dir", type=click.Path(), default=None, help="Built UI assets to serve at /.")
@click.option("--config", "config_path", type=click.Path(), default=None)
@_wrap_errors
def serve(
    port: int,
    host: str,
    root: str | None,
    backend_kind: str | None,
    cassette: str | None,
    memory_dir: str | None,
    static_dir: str | None,
    config_path: str | None,
) -> None:
    """Host the human-feedback session service (and UI assets when given)."""
    import uvicorn

    from .service import ServiceContext, create_app

    config = _load_config(config_path)
    root, _, _, _ = _resolve_run_options(config, root, None, None, None)
    backend_kind = _setting(backend_kind, config, "backend", "kind", "scripted")
    static_dir = _setting(static_dir, config, "serve", "static_dir", None)
    corpus = load_bird(root)
    model_config = _model_config(config)

    def gateway_factory():
        from .llm import ChatGateway

        backend = _make_backend(backend_kind, config, corpus=corpus, cassette=cassette)
        return ChatGateway(backend, model_config)

    context = ServiceContext(corpus, gateway_factory, memory_dir=memory_dir)
    app = create_app(context, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port)


@main.command()
@click.option("--cassette", required=True, type=click.Path(exists=True))
@click.option("--root", type=click.Path(), default=None)
@click.option("--config", "config_path", type=click.Path(), default=None)
@_wrap_errors
def replay(cassette: str, root: str | None, config_path: str | None) -> None:
    """Replay a recorded trajectory cassette with no network access."""
    config = _load_config(config_path)
    root = _setting(root, config, "run", "root", "fixtures/bird_root")
    name = Path(cassette).stem
    if name not in CASSETTE_NAMES:
        raise DataError(f"cassette name must be one of {CASSETTE_NAMES}, got '{name}'")
    corpus = load_bird(root)
    result = replay_cassette(scenario(name), corpus, cassette)
    trajectory = result.trajectory
    click.echo(f"outcome: {trajectory.outcome}")
    click.echo(f"feedback rounds: {trajectory.feedback_rounds}")
    if trajectory.final_sql:
        rows = execute(corpus.catalogs[FINANCIAL], trajectory.final_sql).rows
        click.echo(f"final SQL rows: {rows}")
    sizes = {k.value: result.storeset.size(k) for k in result.storeset.stores}
    click.echo(f"memory sizes: {sizes}")


if __name__ == "__main__":
    main()
