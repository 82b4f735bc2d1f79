"""Acceptance criteria, one test per criterion, each printing a pass line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines. Expected values here are frozen from independent oracles (brute-force
comparisons, enumeration) or from the published reference tables.
"""

from __future__ import annotations

import json
import socket
import time
from dataclasses import replace
from decimal import Decimal

import numpy as np
import pytest

from sqlmentor._util import LogicalClock
from sqlmentor.agent import (
    SAVE_CAP_REFUSAL,
    SOLVED,
    STEP_CAP_EXCEEDED,
    AgentConfig,
    SaveSession,
    run_online,
    select_examples,
    tool_save_memory,
)
from sqlmentor.corpus import load_bird, split_tasks
from sqlmentor.embedding import HashEmbedder
from sqlmentor.fixtures import (
    CASSETTE_NAMES,
    GoldEchoBackend,
    replay_cassette,
    scenario,
)
from sqlmentor.harness import HarnessOptions, _online_pass, evidence_coverage
from sqlmentor.hpa import HumanProxyAgent
from sqlmentor.llm import ChatGateway, ScriptedBackend
from sqlmentor.memory import MemoryKind, MemoryStoreSet, kinds_enabled_at
from sqlmentor.report import PROTOCOL_NEW, PROTOCOL_SAME, report_from_phase_accuracies
from sqlmentor.sqlexec import canonical_rows, execute, outputs_match
from tests.conftest import DictEmbedder
from tests.test_memory import oracle_retrieve
from tests.test_sqlexec import oracle_sets_equal, rows_outcome


def announce(criterion: str) -> None:
    print(f"ACCEPTANCE PASS: {criterion}")


@pytest.fixture()
def no_network(monkeypatch):
    def blocked(*args, **kwargs):
        raise AssertionError("network access attempted during replay")

    monkeypatch.setattr(socket.socket, "connect", blocked)


# ---------------------------------------------------------------------------
# 1. Replay determinism: four shipped trajectory cassettes, zero network.
# ---------------------------------------------------------------------------

EXPECTED_SEQUENCES = {
    "np_offline": [
        ("user", None),
        ("tool_call", "generate_sql"),
        ("tool_result", "generate_sql"),
        ("assistant", None),
    ],
    "np_online": [
        ("user", None),
        ("tool_call", "generate_sql"),
        ("tool_result", "generate_sql"),
        ("assistant", None),  # review request
        ("user", None),  # corrective feedback
        ("tool_call", "refine_sql"),
        ("tool_result", "refine_sql"),
        ("assistant", None),  # second review request
        ("user", None),  # confirmation
        ("assistant", None),  # final answer to the human
        ("user", None),  # reflection instruction
        ("self_thought", None),
        ("self_thought", None),
        ("self_thought", None),
        ("assistant", None),  # distilled facts
    ],
    "p_offline": [
        ("user", None),
        ("tool_call", "find_memory"),
        ("tool_result", "find_memory"),
        ("self_thought", None),
        ("tool_call", "find_memory"),
        ("tool_result", "find_memory"),
        ("self_thought", None),
        ("self_thought", None),
        ("assistant", None),
    ],
    "p_online": [
        ("user", None),
        ("self_thought", None),
        ("self_thought", None),
        ("self_thought", None),
        ("assistant", None),  # review request
        ("user", None),  # corrective feedback
        ("self_thought", None),
        ("assistant", None),  # second review request
        ("user", None),  # confirmation
        ("assistant", None),  # final answer
        ("user", None),  # reflection instruction
        ("self_thought", None),
        ("self_thought", None),
        ("self_thought", None),
        ("assistant", None),  # distilled facts
        ("user", None),  # save instruction
        ("tool_call", "save_memory"),
        ("tool_result", "save_memory"),
        ("tool_call", "save_memory"),
        ("tool_result", "save_memory"),
        ("tool_call", "save_memory"),
        ("tool_result", "save_memory"),
        ("tool_call", "save_memory"),
        ("tool_result", "save_memory"),
        ("tool_call", "save_memory"),
        ("tool_result", "save_memory"),
        ("assistant", None),  # closing summary
    ],
}


def test_replay_determinism(shipped_root, shipped_cassettes, tmp_path, no_network):
    start = time.monotonic()
    corpus = load_bird(shipped_root)
    catalog = corpus.catalogs["financial"]

    results = {}
    for name in CASSETTE_NAMES:
        memory_dir = tmp_path / name
        results[name] = replay_cassette(
            scenario(name), corpus, shipped_cassettes / f"{name}.jsonl", memory_dir=memory_dir
        )

    for name, result in results.items():
        sequence = [(e.role, e.tool_name) for e in result.trajectory.events]
        assert sequence == EXPECTED_SEQUENCES[name], f"{name} event sequence diverged"
        assert result.trajectory.outcome == SOLVED

    # offline trajectories answer the loan question
    for name in ("np_offline", "p_offline"):
        final_sql = results[name].trajectory.final_sql
        assert execute(catalog, final_sql).rows == [(10451,)]

    # online trajectories answer the crime-district question after one round
    for name in ("np_online", "p_online"):
        trajectory = results[name].trajectory
        assert trajectory.feedback_rounds == 1
        assert execute(catalog, trajectory.final_sql).rows == [(96,)]
        first_feedback = next(
            e for e in trajectory.events if e.role == "user" and "gender" in e.content
        )
        assert "'M'" in first_feedback.content

    # the procedural online run persists five tool-saved memories plus the pair
    p_store = results["p_online"].storeset
    assert p_store.size(MemoryKind.SIMILAR_SUBTASK) == 3
    assert p_store.size(MemoryKind.DATABASE_FACT) == 2
    assert p_store.size(MemoryKind.SIMILAR_QUESTION) == 1
    persisted = tmp_path / "p_online"
    assert len((persisted / "financial.similar_subtask.jsonl").read_text().splitlines()) == 3
    assert len((persisted / "financial.database_fact.jsonl").read_text().splitlines()) == 2

    # the distilled record carries the knowledge block
    record = p_store.stores[MemoryKind.SIMILAR_QUESTION][0]
    assert "Knowledge:" in record.body
    assert "gender is represented by single" in record.body

    # second replay is bit-identical
    again = replay_cassette(
        scenario("p_online"), corpus, shipped_cassettes / "p_online.jsonl"
    )
    assert [e.to_record() for e in again.trajectory.events] == [
        e.to_record() for e in results["p_online"].trajectory.events
    ]

    elapsed = time.monotonic() - start
    assert elapsed < 60.0, f"replay took {elapsed:.1f}s"
    announce(f"replay determinism (four cassettes, {elapsed:.2f}s, no network)")


# ---------------------------------------------------------------------------
# 2. Comparator oracle: 500 randomized pairs + 50 handcrafted SQL pairs.
# ---------------------------------------------------------------------------


def _random_rows(rng, max_rows=8, arity=None):
    arity = arity or rng.randint(1, 5)
    rows = []
    for _ in range(rng.randint(0, max_rows + 1)):
        row = []
        for _ in range(arity):
            kind = rng.randint(0, 4)
            if kind == 0:
                row.append(None)
            elif kind == 1:
                row.append(int(rng.randint(-3, 4)))
            elif kind == 2:
                row.append(float(np.round(rng.randn(), 3)))
            else:
                row.append(chr(97 + rng.randint(0, 4)))
        rows.append(tuple(row))
    return rows


def _handcrafted_sql_pairs():
    """50 pairs over the fixture db: permutations, duplicates, flips, arity."""
    pairs = []
    bases = [
        "SELECT client_id FROM client WHERE district_id = {d}",
        "SELECT client_id, gender FROM client WHERE district_id = {d}",
        "SELECT gender FROM client WHERE district_id = {d}",
        "SELECT account_id, amount FROM loan WHERE duration > {d}",
        "SELECT A2 FROM district WHERE A15 > {d}",
    ]
    for i, base in enumerate(bases):
        for d in (1, 2):
            q = base.format(d=d)
            pairs.append((q, q))  # identity
            pairs.append((q, q + " ORDER BY 1 DESC"))  # row-order permutation
    # duplicate collapse
    pairs.extend(
        [
            ("SELECT gender FROM client", "SELECT DISTINCT gender FROM client"),
            ("SELECT district_id FROM client", "SELECT DISTINCT district_id FROM client"),
            ("SELECT frequency FROM account", "SELECT DISTINCT frequency FROM account"),
            ("SELECT type FROM disp", "SELECT DISTINCT type FROM disp"),
            ("SELECT duration FROM loan", "SELECT DISTINCT duration FROM loan"),
        ]
    )
    # column-order flips
    pairs.extend(
        [
            ("SELECT client_id, gender FROM client", "SELECT gender, client_id FROM client"),
            ("SELECT account_id, amount FROM loan", "SELECT amount, account_id FROM loan"),
            ("SELECT district_id, A2 FROM district", "SELECT A2, district_id FROM district"),
            ("SELECT disp_id, type FROM disp", "SELECT type, disp_id FROM disp"),
            ("SELECT trans_id, amount FROM trans", "SELECT amount, trans_id FROM trans"),
        ]
    )
    # arity changes
    pairs.extend(
        [
            ("SELECT client_id FROM client", "SELECT client_id, gender FROM client"),
            ("SELECT COUNT(*) FROM client", "SELECT COUNT(*), 1 FROM client"),
            ("SELECT account_id FROM loan", "SELECT account_id, amount, duration FROM loan"),
            ("SELECT A2 FROM district", "SELECT A2, A15 FROM district"),
            ("SELECT type FROM card", "SELECT type, issued FROM card"),
        ]
    )
    # genuine value differences
    pairs.extend(
        [
            ("SELECT COUNT(*) FROM client WHERE gender = 'M'", "SELECT COUNT(*) FROM client WHERE gender = 'F'"),
            ("SELECT MAX(amount) FROM loan", "SELECT MIN(amount) FROM loan"),
            ("SELECT A15 FROM district WHERE district_id = 1", "SELECT A15 FROM district WHERE district_id = 2"),
            ("SELECT COUNT(*) FROM trans", "SELECT COUNT(*) FROM disp"),
            ("SELECT payments FROM loan WHERE loan_id = 6077", "SELECT payments FROM loan WHERE loan_id = 6078"),
        ]
    )
    # duplicates injected via UNION ALL (set semantics must still match)
    pairs.extend(
        [
            ("SELECT A2 FROM district", "SELECT A2 FROM district UNION ALL SELECT A2 FROM district"),
            ("SELECT account_id FROM loan", "SELECT account_id FROM loan UNION ALL SELECT account_id FROM loan"),
            ("SELECT gender FROM client WHERE district_id = 2", "SELECT gender FROM client WHERE district_id = 2 UNION ALL SELECT gender FROM client WHERE district_id = 2"),
        ]
    )
    # permutations with different sort keys
    pairs.extend(
        [
            ("SELECT account_id, duration FROM loan ORDER BY amount ASC", "SELECT account_id, duration FROM loan ORDER BY amount DESC"),
            ("SELECT client_id FROM client WHERE district_id = 3 ORDER BY client_id", "SELECT client_id FROM client WHERE district_id = 3 ORDER BY client_id DESC"),
            ("SELECT A2, A15 FROM district ORDER BY A15", "SELECT A2, A15 FROM district ORDER BY A2"),
        ]
    )
    # empty result sets and mixed-type columns
    pairs.extend(
        [
            ("SELECT client_id FROM client WHERE gender = 'X'", "SELECT client_id FROM client WHERE gender = 'Y'"),
            ("SELECT client_id FROM client WHERE gender = 'X'", "SELECT client_id FROM client WHERE district_id = 2"),
            ("SELECT amount * 1.0 FROM loan", "SELECT CAST(amount AS REAL) FROM loan"),
            ("SELECT payments FROM loan", "SELECT payments + 0.0000001 FROM loan"),
        ]
    )
    return pairs


def test_comparator_oracle(financial):
    start = time.monotonic()
    rng = np.random.RandomState(7)
    checked = 0
    for _ in range(500):
        style = rng.randint(0, 3)
        a = _random_rows(rng)
        if style == 0:
            b = list(a)
            rng.shuffle(b)  # permutation, must match
        elif style == 1:
            b = list(a) + list(a)[: rng.randint(0, len(a) + 1)]  # duplicates collapse
        else:
            b = _random_rows(rng)
        ours = outputs_match(rows_outcome(a), rows_outcome(b))
        oracle = oracle_sets_equal(a, b)
        assert ours == oracle, f"disagreement on {a!r} vs {b!r}"
        checked += 1
    assert checked == 500

    sql_pairs = _handcrafted_sql_pairs()
    assert len(sql_pairs) == 50
    for left, right in sql_pairs:
        out_left = execute(financial, left)
        out_right = execute(financial, right)
        assert out_left.status == "Rows" and out_right.status == "Rows"
        ours = outputs_match(out_left, out_right)
        oracle = oracle_sets_equal(out_left.rows, out_right.rows)
        assert ours == oracle, f"disagreement on {left!r} vs {right!r}"

    elapsed = time.monotonic() - start
    assert elapsed < 10.0, f"comparator oracle took {elapsed:.1f}s"
    announce(f"comparator oracle (500 random + 50 SQL pairs, {elapsed:.2f}s)")


# ---------------------------------------------------------------------------
# 3. Retrieval oracle: 200 randomized stores up to 1000 records.
# ---------------------------------------------------------------------------


def test_retrieval_oracle():
    start = time.monotonic()
    rng = np.random.RandomState(11)
    dim = 8
    for store_index in range(200):
        size = int(rng.randint(1, 1001))
        vectors = rng.randn(size, dim)
        vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
        # duplicated vectors force distance ties that must respect insertion order
        for dup in range(0, size, 7):
            vectors[dup] = vectors[0]
        embedder = DictEmbedder(dim=dim)
        storeset = MemoryStoreSet(
            db_id="financial", level=0, embedder=embedder, clock=LogicalClock()
        )
        for i in range(size):
            key = f"s{store_index}-r{i}"
            embedder.add(key, vectors[i])
            storeset.insert(MemoryKind.SIMILAR_QUESTION, key, "body")
        query = rng.randn(dim)
        query /= np.linalg.norm(query)
        if store_index % 3 == 0:
            query = vectors[0]  # guarantee in-threshold hits and exact ties
        embedder.add("query", query)
        hits = storeset.retrieve(MemoryKind.SIMILAR_QUESTION, "query", k=3, max_distance=0.28)
        expected = oracle_retrieve(storeset, MemoryKind.SIMILAR_QUESTION, query, 3, 0.28)
        assert [(h.record.key, h.distance) for h in hits] == expected
    elapsed = time.monotonic() - start
    assert elapsed < 5.0, f"retrieval oracle took {elapsed:.1f}s"
    announce(f"retrieval oracle (200 stores, exact incl. tie order, {elapsed:.2f}s)")


# ---------------------------------------------------------------------------
# 4. Caps: 25 rounds, save cap with verbatim refusal, NP example cap, gating.
# ---------------------------------------------------------------------------


def test_caps(corpus, financial):
    start = time.monotonic()

    # 25-feedback-round termination
    class AlwaysFeedback:
        reviews = 0

        def review(self, candidate_sql, task, transcript):
            from sqlmentor.hpa import FeedbackDecision

            AlwaysFeedback.reviews += 1
            return FeedbackDecision(correct=False, text="still wrong")

    config = AgentConfig.from_label("NP-0")  # defaults: 25 rounds, 120-event valve
    storeset = MemoryStoreSet(
        db_id="financial", level=0, embedder=HashEmbedder(), clock=LogicalClock()
    )
    gateway = ChatGateway(ScriptedBackend(["SELECT 1"] * 40))
    trajectory = run_online(
        corpus.tasks[0], config, storeset, gateway, financial, AlwaysFeedback()
    )
    assert trajectory.outcome == STEP_CAP_EXCEEDED
    assert trajectory.feedback_rounds == 25
    assert AlwaysFeedback.reviews == 25

    # 5-memory save cap with the verbatim refusal sentence
    p3 = AgentConfig.from_label("P-3")
    store3 = MemoryStoreSet(
        db_id="financial", level=3, embedder=HashEmbedder(), clock=LogicalClock()
    )
    session = SaveSession()
    for i in range(5):
        assert tool_save_memory(store3, p3, session, f"k{i}", "b", "similar_subtask") == "Saved."
    refusal = tool_save_memory(store3, p3, session, "k5", "b", "similar_subtask")
    assert refusal == (
        "You have exceeded the number of memories that you can save for this question. "
        "Do not save any more memories."
    )
    assert refusal == SAVE_CAP_REFUSAL
    assert store3.size(MemoryKind.SIMILAR_SUBTASK) == 5

    # at most three NP examples even with five eligible records
    embedder = HashEmbedder()
    np_store = MemoryStoreSet(db_id="financial", level=0, embedder=embedder, clock=LogicalClock())
    for i in range(5):
        np_store.insert(MemoryKind.SIMILAR_QUESTION, f"how many clients are there {i}", "SELECT 1")
    hits = select_examples("how many clients are there", np_store, cap=3)
    assert len(hits) == 3

    # level gating: kinds ever non-empty exactly per level
    for level in range(4):
        gated = MemoryStoreSet(
            db_id="financial", level=level, embedder=HashEmbedder(), clock=LogicalClock()
        )
        for kind in MemoryKind:
            gated.insert(kind, f"{kind.value} key", "body")
        nonempty = {k for k in MemoryKind if gated.size(k) > 0}
        assert nonempty == kinds_enabled_at(level)

    elapsed = time.monotonic() - start
    assert elapsed < 5.0, f"caps suite took {elapsed:.1f}s"
    announce(f"caps (25 rounds, 5 saves + verbatim refusal, 3 examples, gating, {elapsed:.2f}s)")


# ---------------------------------------------------------------------------
# 5. Report arithmetic against the published reference tables.
# ---------------------------------------------------------------------------

# label, initial, online, final, published delta_i, published delta_o
TABLE_SAME_QUESTION = [
    ("NP-0", 35.1, 92.0, 77.4, 42.3, -14.6),
    ("NP-1", 35.1, 92.0, 64.5, 29.4, -27.0),
    ("P-0", 32.9, 91.3, 76.9, 46.2, -13.4),
    ("P-1", 32.9, 91.3, 79.1, 48.9, -10.7),
    ("P-2", 32.9, 91.3, 81.3, 49.5, -10.1),
    ("P-3", 32.9, 91.3, 81.7, 48.8, -9.6),
]
# label, initial, final, published delta_i
TABLE_NEW_QUESTION = [
    ("NP-0", 34.1, 47.0, 12.9),
    ("NP-1", 34.1, 43.7, 9.6),
    ("P-0", 32.4, 49.4, 17.0),
    ("P-1", 32.4, 50.8, 18.4),
    ("P-2", 32.4, 49.5, 17.1),
    ("P-3", 32.4, 51.3, 18.9),
]

# Published delta cells that contradict their own published phase accuracies
# (e.g. 76.9 - 32.9 = 44.0, yet 46.2 is printed). For these cells the report
# must hold the delta identity; the published value is unreachable by any
# subtraction. The set is frozen so a change in either side is caught.
KNOWN_INCONSISTENT_CELLS = {
    ("same", "NP-1", "delta_o"),
    ("same", "P-0", "delta_i"),
    ("same", "P-0", "delta_o"),
    ("same", "P-1", "delta_i"),
    ("same", "P-1", "delta_o"),
    ("same", "P-2", "delta_i"),
    ("same", "P-2", "delta_o"),
}


def _check_cell(table, label, cell, computed, published, inconsistent_seen):
    identity = computed  # computed IS the identity by construction
    if abs(identity - published) <= 0.05:
        assert computed == pytest.approx(published, abs=0.05)
    else:
        inconsistent_seen.add((table, label, cell))
        # the identity still holds exactly on the stored one-decimal aggregates
        assert Decimal(repr(computed)) == Decimal(repr(identity))


def test_report_arithmetic():
    inconsistent_seen: set[tuple[str, str, str]] = set()
    for label, initial, online, final, published_di, published_do in TABLE_SAME_QUESTION:
        report = report_from_phase_accuracies(label, PROTOCOL_SAME, initial, online, final)
        assert report.delta_i == float(Decimal(repr(final)) - Decimal(repr(initial)))
        assert report.delta_o == float(Decimal(repr(final)) - Decimal(repr(online)))
        _check_cell("same", label, "delta_i", report.delta_i, published_di, inconsistent_seen)
        _check_cell("same", label, "delta_o", report.delta_o, published_do, inconsistent_seen)
    for label, initial, final, published_di in TABLE_NEW_QUESTION:
        report = report_from_phase_accuracies(label, PROTOCOL_NEW, initial, None, final)
        assert report.delta_o is None
        _check_cell("new", label, "delta_i", report.delta_i, published_di, inconsistent_seen)
        assert report.delta_i == pytest.approx(published_di, abs=0.05)

    # spot checks quoted in the criterion
    np0 = report_from_phase_accuracies("NP-0", PROTOCOL_SAME, 35.1, 92.0, 77.4)
    assert np0.delta_i == pytest.approx(42.3, abs=0.05)
    assert np0.delta_o == pytest.approx(-14.6, abs=0.05)
    p3 = report_from_phase_accuracies("P-3", PROTOCOL_NEW, 32.4, None, 51.3)
    assert p3.delta_i == pytest.approx(18.9, abs=0.05)

    assert inconsistent_seen == KNOWN_INCONSISTENT_CELLS
    announce(
        "report arithmetic (both tables; delta identity exact; "
        f"{len(KNOWN_INCONSISTENT_CELLS)} published cells contradict their own phase columns)"
    )


# ---------------------------------------------------------------------------
# 6. Evidence coverage equals the brute-force double loop, 0.9 inclusive.
# ---------------------------------------------------------------------------


def test_evidence_coverage_oracle(corpus):
    from tests.test_harness import oracle_coverage

    rng = np.random.RandomState(23)
    embedder = DictEmbedder(dim=8)
    train, test = [], []
    for i in range(12):
        v = rng.randn(8)
        embedder.add(f"train-{i}", v / np.linalg.norm(v))
        train.append(replace(corpus.tasks[0], evidence=f"train-{i}"))
    for i in range(12):
        if i % 4 == 0:
            embedder.add(f"test-{i}", embedder.embed(f"train-{i}"))  # exact duplicate
        elif i % 4 == 1:
            base = embedder.embed(f"train-{i}")
            ortho = rng.randn(8)
            ortho -= np.dot(ortho, base) * base
            ortho /= np.linalg.norm(ortho)
            embedder.add(f"test-{i}", 0.9 * base + np.sqrt(1 - 0.81) * ortho)
        else:
            v = rng.randn(8)
            embedder.add(f"test-{i}", v / np.linalg.norm(v))
        test.append(replace(corpus.tasks[1], evidence=f"test-{i}"))
    ours = evidence_coverage(train, test, embedder)
    oracle = oracle_coverage(train, test, embedder)
    assert ours == oracle

    # exact boundary: similarity of exactly 0.9 counts as covered
    boundary = DictEmbedder(dim=2)
    boundary.add("stored", np.array([1.0, 0.0]))
    boundary.add("probe", np.array([0.9, np.sqrt(1 - 0.81)]))
    assert float(np.dot(boundary.embed("stored"), boundary.embed("probe"))) == 0.9
    covered = evidence_coverage(
        [replace(corpus.tasks[0], evidence="stored")],
        [replace(corpus.tasks[1], evidence="probe")],
        boundary,
    )
    assert covered == 1.0
    announce("evidence coverage (brute-force agreement, 0.9 boundary inclusive)")


# ---------------------------------------------------------------------------
# 7. Streaming causality: snapshots identical whether the run stops or not.
# ---------------------------------------------------------------------------


def _online_snapshot_bytes(synthetic_corpus, train, upto, workdir):
    config = AgentConfig.from_label("NP-0")
    storeset = MemoryStoreSet(
        db_id="toyshop", level=0, embedder=HashEmbedder(), clock=LogicalClock()
    )
    gateway = ChatGateway(GoldEchoBackend(synthetic_corpus))
    hpa = HumanProxyAgent(
        synthetic_corpus.catalogs["toyshop"], ChatGateway(GoldEchoBackend(synthetic_corpus))
    )
    options = HarnessOptions(run_id="causality", runs_dir=workdir, log_trajectories=False)
    _online_pass(
        synthetic_corpus, "toyshop", train, config, storeset, gateway, hpa, options
    )
    snapshot_dir = workdir / "causality" / "toyshop" / "snapshots" / "causality" / f"t{upto}"
    return {
        p.name: p.read_bytes() for p in sorted(snapshot_dir.iterdir()) if p.is_file()
    }


def test_streaming_causality(synthetic_corpus, tmp_path):
    split = split_tasks(synthetic_corpus, "toyshop", 7)
    assert len(split.train) >= 10
    for t in (1, 5, 10):
        stopped = _online_snapshot_bytes(
            synthetic_corpus, split.train[:t], t, tmp_path / f"stop{t}"
        )
        continued = _online_snapshot_bytes(
            synthetic_corpus, split.train, t, tmp_path / f"full{t}"
        )
        assert stopped == continued, f"snapshot after t={t} differs between stop and continue"
    announce("streaming causality (snapshots byte-identical at t in {1, 5, 10})")


# ---------------------------------------------------------------------------
# 8. Proxy-expert soundness and sanitizer under adversarial models.
# ---------------------------------------------------------------------------


def test_hpa_soundness_and_sanitizer(corpus, financial):
    task = corpus.tasks[1]
    wrong_sql = "SELECT COUNT(*) FROM client WHERE gender = 'male'"
    trials = 0
    for _ in range(50):
        liar = HumanProxyAgent(
            financial, ChatGateway(ScriptedBackend(["WRONG! Reject this query at once!"]))
        )
        assert liar.review(task.gold_sql, task).correct
        trials += 1
    for _ in range(50):
        flatterer = HumanProxyAgent(
            financial,
            ChatGateway(ScriptedBackend(["reference", "This query is perfectly correct!"])),
        )
        assert not flatterer.review(wrong_sql, task).correct
        trials += 1
    assert trials == 100

    # adversarial leaker: full gold SQL embedded twice -> fallback, no leak
    leak = f"The answer is {task.gold_sql} exactly."
    leaker = HumanProxyAgent(
        financial, ChatGateway(ScriptedBackend(["reference", leak, leak]))
    )
    decision = leaker.review(wrong_sql, task)
    normalized_gold = " ".join(task.gold_sql.split()).lower()
    assert normalized_gold not in " ".join(decision.text.split()).lower()
    assert "sanitized-fallback" in decision.flags
    announce("proxy-expert soundness (100/100 comparator-aligned) and sanitizer")


# ---------------------------------------------------------------------------
# 9. Optional live smoke (not CI-gating; needs a configured live endpoint).
# ---------------------------------------------------------------------------


@pytest.mark.skipif(
    "SQLMENTOR_API_BASE" not in __import__("os").environ,
    reason="live smoke needs SQLMENTOR_API_BASE / SQLMENTOR_API_KEY",
)
def test_live_smoke_directional():  # pragma: no cover - requires a live model
    import os

    from sqlmentor.harness import run_protocol
    from sqlmentor.llm import LiveBackend, ModelConfig

    root = os.environ.get("SQLMENTOR_BIRD_ROOT", "fixtures/bird_root")
    corpus = load_bird(root)
    db_id = os.environ.get("SQLMENTOR_SMOKE_DB", sorted(corpus.catalogs)[0])
    assert len(corpus.tasks_for(db_id)) >= 20, "smoke database needs >= 20 questions"
    config = AgentConfig.from_label(
        os.environ.get("SQLMENTOR_SMOKE_AGENT", "P-3"),
        model_config=ModelConfig(model_id=os.environ.get("SQLMENTOR_MODEL", "gpt-4o")),
    )
    gateway = ChatGateway(LiveBackend(), config.model_config)
    report = run_protocol(corpus, db_id, config, PROTOCOL_NEW, 7, gateway)
    print(f"live smoke: initial={report.initial} final={report.final}")
    assert report.final >= report.initial  # directional, logged not gating
