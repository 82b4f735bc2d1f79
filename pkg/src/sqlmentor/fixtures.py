"""Deterministic fixtures: a small banking database in the benchmark layout,
plus scripted scenarios that reconstruct four reference trajectories
(templated offline/online, procedural offline/online with distillation) and
record them into replayable cassettes.

Regenerate everything with ``python -m sqlmentor.fixtures <out_dir>``.
"""

from __future__ import annotations

import json
import sqlite3
from dataclasses import dataclass, field
from pathlib import Path

import re

from ._util import LogicalClock
from .agent import AgentConfig, Trajectory, run_offline, run_online
from .corpus import Corpus, load_bird
from .distill import DistillOutcome, distill_trajectory
from .embedding import HashEmbedder
from .hpa import HumanProxyAgent
from .llm import ChatGateway, RawReply, RecordingBackend, ReplayBackend, ScriptedBackend
from .memory import MemoryKind, MemoryStoreSet, compose_question_body

FINANCIAL = "financial"

# -- reference questions ---------------------------------------------------

D1_QUESTION = (
    "Among the accounts who have loan validity more than 12 months, list out the "
    "accounts that have the highest approved amount and have account opening date in 1993."
)
D1_GOLD_SQL = (
    "SELECT T2.account_id FROM loan AS T1 INNER JOIN account AS T2 "
    "ON T1.account_id = T2.account_id WHERE T1.duration > 12 "
    "AND STRFTIME('%Y', T2.date) = '1993' ORDER BY T1.amount DESC LIMIT 1"
)
D1_EVIDENCE = "loan validity more than 12 months refers to duration > 12"

D2_QUESTION = (
    "In the branch where the second-highest number of crimes were committed in 1995 "
    "occurred, how many male clients are there?"
)
D2_GOLD_SQL = (
    "SELECT COUNT(T1.client_id) FROM client AS T1 INNER JOIN district AS T2 "
    "ON T1.district_id = T2.district_id WHERE T1.gender = 'M' "
    "AND T2.A15 = (SELECT T3.A15 FROM district AS T3 ORDER BY T3.A15 DESC LIMIT 1, 1)"
)
D2_EVIDENCE = "male refers to gender = 'M'; A15 contains the number of crimes committed in 1995"

SIMILAR_NLQ = (
    "Among the accounts who have loan validity more than 24 months, list out the "
    "accounts that have the lowest approved amount and have account opening date before 1997."
)
SIMILAR_SQL = (
    "SELECT a.account_id\nFROM loan l\nJOIN account a ON l.account_id = a.account_id\n"
    "WHERE l.duration > 24 AND STRFTIME('%Y', a.date) < '1997'\nORDER BY l.amount ASC\nLIMIT 1"
)
SIMILAR_KNOWLEDGE = (
    "1. Ordering and Limiting Results: When you need to find the minimum or maximum value "
    "in a dataset, use ORDER BY to sort the results and LIMIT to restrict the output to the "
    "desired number of records.\n"
    "2. Date Filtering with STRFTIME: Use the STRFTIME function to extract specific "
    "components (like year, month, day) from date columns for accurate filtering.\n"
    "3. Schema Understanding: Familiarize yourself with the columns in each table and "
    "their data types before constructing the query."
)

D1_CANDIDATE_SQL = (
    "SELECT a.account_id\nFROM loan l\nJOIN account a ON l.account_id = a.account_id\n"
    "WHERE l.duration > 12 AND STRFTIME('%Y', a.date) = '1993'\nORDER BY l.amount DESC\nLIMIT 1;"
)

D2_WRONG_SQL = (
    "SELECT COUNT(c.client_id)\nFROM client c\nJOIN disp d ON c.client_id = d.client_id\n"
    "JOIN account a ON d.account_id = a.account_id\n"
    "JOIN district dis ON a.district_id = dis.district_id\nWHERE c.gender = 'male'\n"
    "AND dis.district_id = (\n    SELECT district_id\n    FROM district\n"
    "    ORDER BY A15 DESC\n    LIMIT 1 OFFSET 1\n);"
)
D2_RIGHT_SQL = (
    "SELECT COUNT(c.client_id)\nFROM client c\n"
    "JOIN district dis ON c.district_id = dis.district_id\nWHERE c.gender = 'M'\n"
    "AND dis.district_id = (\n    SELECT district_id\n    FROM district\n"
    "    ORDER BY A15 DESC\n    LIMIT 1 OFFSET 1\n);"
)

D4_WRONG_SQL = (
    "SELECT COUNT(*) FROM client WHERE gender = 'male' AND district_id = "
    "(SELECT district_id FROM district ORDER BY A15 DESC LIMIT 1 OFFSET 1);"
)
D4_RIGHT_SQL = (
    "SELECT COUNT(*)\nFROM client\nINNER JOIN district ON client.district_id = "
    "district.district_id\nWHERE client.gender = 'M'\nAND district.district_id = "
    "(SELECT district_id FROM district ORDER BY A15 DESC LIMIT 1 OFFSET 1);"
)

D2_REFERENCE = (
    "To answer this, order the district table by the A15 column (crimes committed in 1995) "
    "in descending order and take the second entry; A15 ordering identifies the branch. "
    "Then join client to district on district_id and count rows where gender = 'M'."
)
D2_FEEDBACK = (
    "The generated SQL query has a few issues that need to be addressed:\n\n"
    "1. Gender Filtering: The query uses `c.gender = 'male'`, but it should use "
    "`c.gender = 'M'` to match the expected format in the database.\n\n"
    "2. District Identification: The subquery should select `A15` instead of `district_id` "
    "to correctly identify the district with the second-highest number of crimes.\n\n"
    "3. Table Joins: The joins with the `disp` and `account` tables are unnecessary for "
    "this task. You can directly join the `client` table with the `district` table using "
    "`district_id`.\n\nPlease adjust the query accordingly to address these issues."
)
D2_CONFIRM = (
    "The refined SQL query is now correct and produces the expected output. "
    "Great job on making the necessary adjustments!"
)
D4_FEEDBACK = (
    "The SQL query needs some adjustments to correctly count the number of male clients "
    "in the district with the second-highest number of crimes in 1995:\n\n"
    "1. Gender Filtering: Use `gender = 'M'` instead of `gender = 'male'` to match the "
    "database schema.\n\n2. Subquery for District: Ensure the subquery returns the `A15` "
    "value for the number of crimes, not the `district_id`.\n\n3. Table Join: Implement an "
    "`INNER JOIN` between the `client` and `district` tables on `district_id`.\n\n"
    "Please revise the query with these points in mind."
)
D4_CONFIRM = (
    "The revised SQL query is now correct and accurately counts the number of male "
    "clients in the district with the second-highest number of crimes in 1995. Great job!"
)

DISTILL_FACTS = (
    "1. Gender Representation: In the client table, gender is represented by single "
    "characters ('M' for male, 'F' for female). This is crucial when filtering clients "
    "by gender in SQL queries.\n\n"
    "2. Identifying Districts by Crime Rate: To find a district based on crime rates, use "
    "the A15 column in the district table. Order the districts by this column in "
    "descending order to identify districts with the highest number of crimes.\n\n"
    "3. Joining Tables on District ID: When needing to reference district-specific data "
    "for clients, use an INNER JOIN between the client and district tables on district_id."
)

SAVED_MEMORIES = [
    (
        "similar_subtask",
        "filter clients by gender",
        "SELECT * FROM client WHERE gender = 'M';",
    ),
    (
        "similar_subtask",
        "identify district with second-highest crimes in 1995",
        "SELECT district_id FROM district ORDER BY A15 DESC LIMIT 1 OFFSET 1;",
    ),
    (
        "similar_subtask",
        "join client and district tables by district_id",
        "SELECT * FROM client INNER JOIN district ON client.district_id = district.district_id;",
    ),
    (
        "database_fact",
        "gender representation in client table",
        "In the client table, gender is represented by single characters "
        "('M' for male, 'F' for female).",
    ),
    (
        "database_fact",
        "sort districts by number of crimes in 1995",
        "To find a district based on crime rates, use the A15 column in the district "
        "table. Order the districts by this column in descending order to identify "
        "districts with the highest number of crimes.",
    ),
]

CASSETTE_NAMES = ("np_offline", "np_online", "p_offline", "p_online")

_FINANCIAL_TABLES: dict[str, tuple[str, list[tuple]]] = {
    "account": (
        "CREATE TABLE account (account_id INTEGER PRIMARY KEY, district_id INTEGER, "
        "frequency TEXT, date DATE)",
        [
            (10451, 1, "POPLATEK MESICNE", "1993-05-14"),
            (10452, 2, "POPLATEK TYDNE", "1993-08-01"),
            (10453, 3, "POPLATEK MESICNE", "1994-03-02"),
            (10454, 1, "POPLATEK MESICNE", "1993-01-20"),
            (10455, 4, "POPLATEK PO OBRATU", "1996-06-06"),
        ],
    ),
    "card": (
        "CREATE TABLE card (card_id INTEGER PRIMARY KEY, disp_id INTEGER, type TEXT, "
        "issued DATE)",
        [(1, 1, "gold", "1994-01-05"), (2, 2, "classic", "1995-07-10")],
    ),
    "client": (
        "CREATE TABLE client (client_id INTEGER PRIMARY KEY, gender TEXT, "
        "birth_date DATE, district_id INTEGER)",
        [],  # generated below
    ),
    "disp": (
        "CREATE TABLE disp (disp_id INTEGER PRIMARY KEY, client_id INTEGER, "
        "account_id INTEGER, type TEXT)",
        [(1, 1, 10451, "OWNER"), (2, 2, 10452, "OWNER"), (3, 3, 10453, "DISPONENT")],
    ),
    "district": (
        "CREATE TABLE district (district_id INTEGER PRIMARY KEY, A2 TEXT, A3 TEXT, "
        "A15 INTEGER)",
        [
            (1, "Praha", "Prague", 5000),
            (2, "Brno", "south Moravia", 4000),
            (3, "Ostrava", "north Moravia", 3000),
            (4, "Plzen", "west Bohemia", 2000),
            (5, "Liberec", "north Bohemia", 1000),
        ],
    ),
    "loan": (
        "CREATE TABLE loan (loan_id INTEGER PRIMARY KEY, account_id INTEGER, date DATE, "
        "amount INTEGER, duration INTEGER, payments REAL, status TEXT)",
        [
            (6077, 10451, "1997-07-11", 208128, 24, 8672.0, "C"),
            (6078, 10452, "1996-04-29", 150000, 36, 4166.7, "A"),
            (6079, 10453, "1997-12-08", 300000, 24, 12500.0, "C"),
            (6080, 10454, "1995-09-02", 99999, 12, 8333.3, "A"),
            (6081, 10455, "1998-10-14", 50000, 60, 833.3, "C"),
        ],
    ),
    "order": (
        'CREATE TABLE "order" (order_id INTEGER PRIMARY KEY, account_id INTEGER, '
        "bank_to TEXT, account_to INTEGER, amount REAL, k_symbol TEXT)",
        [
            (29401, 10451, "YZ", 87144583, 2452.0, "SIPO"),
            (29402, 10452, "ST", 89597016, 3372.7, "UVER"),
        ],
    ),
    "trans": (
        "CREATE TABLE trans (trans_id INTEGER PRIMARY KEY, account_id INTEGER, date DATE, "
        "type TEXT, operation TEXT, amount INTEGER, balance INTEGER)",
        [
            (1, 10451, "1993-05-14", "PRIJEM", "VKLAD", 1000, 1000),
            (2, 10452, "1993-08-01", "PRIJEM", "VKLAD", 800, 800),
            (3, 10451, "1993-06-01", "VYDAJ", "VYBER", 300, 700),
        ],
    ),
}

_DESCRIPTIONS: dict[str, list[tuple[str, str, str, str, str]]] = {
    "account": [
        ("account_id", "account id", "the id of the account", "integer", ""),
        ("district_id", "location of branch", "location of branch", "integer", ""),
        ("frequency", "frequency", "frequency of the acount", "text", ""),
        ("date", "date", "the creation date of the account", "date", "in the form YYMMDD"),
    ],
    "client": [
        ("client_id", "client id", "the unique number", "integer", ""),
        ("gender", "gender", "gender of the client", "text", "F: female; M: male"),
        ("birth_date", "birth date", "birth date", "date", ""),
        ("district_id", "location of branch", "location of branch", "integer", ""),
    ],
    "district": [
        ("district_id", "location of branch", "location of branch", "integer", ""),
        ("A2", "district name", "district name", "text", ""),
        ("A3", "region", "region", "text", ""),
        ("A15", "no. of committed crimes 1995", "number of committed crimes in 1995", "integer", ""),
    ],
    "loan": [
        ("loan_id", "loan id", "the id number identifying the loan", "integer", ""),
        ("account_id", "account id", "the id number identifying the account", "integer", ""),
        ("date", "date", "the date when the loan is approved", "date", ""),
        ("amount", "amount", "approved amount", "integer", "unit: US dollar"),
        ("duration", "duration", "loan duration", "integer", "unit: month"),
        ("payments", "payments", "monthly payments", "real", "unit: month"),
        ("status", "status", "repayment status", "text", ""),
    ],
}


def _client_rows() -> list[tuple]:
    rows = []
    client_id = 1
    for _ in range(96):  # male clients in the second-highest-crime district
        rows.append((client_id, "M", "1960-01-01", 2))
        client_id += 1
    for _ in range(41):
        rows.append((client_id, "F", "1962-03-05", 2))
        client_id += 1
    for district, males, females in ((1, 12, 9), (3, 7, 5), (4, 4, 4), (5, 3, 2)):
        for _ in range(males):
            rows.append((client_id, "M", "1958-11-20", district))
            client_id += 1
        for _ in range(females):
            rows.append((client_id, "F", "1964-06-30", district))
            client_id += 1
    return rows


def build_financial_db(sqlite_path: str | Path) -> None:
    path = Path(sqlite_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.exists():
        path.unlink()
    conn = sqlite3.connect(path)
    try:
        for table, (ddl, rows) in _FINANCIAL_TABLES.items():
            conn.execute(ddl)
            data = _client_rows() if table == "client" else rows
            if data:
                placeholders = ",".join("?" * len(data[0]))
                conn.executemany(
                    f'INSERT INTO "{table}" VALUES ({placeholders})', data
                )
        conn.commit()
    finally:
        conn.close()


def _write_descriptions(desc_dir: Path) -> None:
    desc_dir.mkdir(parents=True, exist_ok=True)
    header = "original_column_name,column_name,column_description,data_format,value_description\n"
    for table in _FINANCIAL_TABLES:
        rows = _DESCRIPTIONS.get(table, [])
        lines = [header]
        for original, friendly, description, fmt, values in rows:
            lines.append(
                ",".join(
                    '"' + cell.replace('"', '""') + '"'
                    for cell in (original, friendly, description, fmt, values)
                )
                + "\n"
            )
        (desc_dir / f"{table}.csv").write_text("".join(lines), encoding="utf-8")


def fixture_questions() -> list[dict]:
    return [
        {
            "question_id": 0,
            "db_id": FINANCIAL,
            "question": D1_QUESTION,
            "evidence": D1_EVIDENCE,
            "SQL": D1_GOLD_SQL,
            "difficulty": "moderate",
        },
        {
            "question_id": 1,
            "db_id": FINANCIAL,
            "question": D2_QUESTION,
            "evidence": D2_EVIDENCE,
            "SQL": D2_GOLD_SQL,
            "difficulty": "moderate",
        },
    ]


def build_bird_fixture(root: str | Path, extra_dbs: int = 0) -> Path:
    """BIRD-layout directory with the banking fixture plus optional stub databases."""
    root = Path(root)
    db_dir = root / "dev_databases" / FINANCIAL
    build_financial_db(db_dir / f"{FINANCIAL}.sqlite")
    _write_descriptions(db_dir / "database_description")
    questions = fixture_questions()
    for i in range(extra_dbs):
        db_id = f"stub{i:02d}"
        stub_dir = root / "dev_databases" / db_id
        stub_dir.mkdir(parents=True, exist_ok=True)
        conn = sqlite3.connect(stub_dir / f"{db_id}.sqlite")
        try:
            conn.execute("CREATE TABLE items (id INTEGER PRIMARY KEY, name TEXT)")
            conn.execute("INSERT INTO items VALUES (1, 'widget'), (2, 'gadget')")
            conn.commit()
        finally:
            conn.close()
        questions.append(
            {
                "question_id": 100 + i,
                "db_id": db_id,
                "question": f"How many items are there in catalog {i}?",
                "evidence": "",
                "SQL": "SELECT COUNT(*) FROM items",
            }
        )
    (root / "dev.json").write_text(
        json.dumps(questions, indent=2) + "\n", encoding="utf-8"
    )
    return root


# -- scripted scenarios ------------------------------------------------------


def _msg(to: str, message: str, sql: str = "") -> str:
    return json.dumps({"to": to, "message": message, "generated_sql": sql})


def _tool(name: str, **arguments) -> dict:
    return {"tool": name, "arguments": arguments}


@dataclass
class Scenario:
    name: str
    label: str
    task_index: int  # index into fixture_questions()
    agent_replies: list = field(default_factory=list)
    hpa_replies: list = field(default_factory=list)
    online: bool = False
    seed_memory: bool = False

    def build_storeset(self, embedder) -> MemoryStoreSet:
        level = AgentConfig.from_label(self.label).memory_level
        storeset = MemoryStoreSet(
            db_id=FINANCIAL, level=level, embedder=embedder, clock=LogicalClock()
        )
        if self.seed_memory:
            body = compose_question_body(
                SIMILAR_SQL, SIMILAR_KNOWLEDGE if level >= 1 else None
            )
            storeset.insert(
                MemoryKind.SIMILAR_QUESTION,
                key=SIMILAR_NLQ,
                body=body,
                run_id="seed",
                task_id="seed",
            )
        return storeset


def np_offline_scenario() -> Scenario:
    return Scenario(
        name="np_offline",
        label="NP-0",
        task_index=0,
        seed_memory=True,
        agent_replies=[D1_CANDIDATE_SQL],
    )


def np_online_scenario() -> Scenario:
    return Scenario(
        name="np_online",
        label="NP-0",
        task_index=1,
        online=True,
        agent_replies=[
            D2_WRONG_SQL,
            D2_RIGHT_SQL,
            # guided reflection (with-feedback variant)
            _msg(
                "self",
                "The mistakes I made in the initial SQL query were: 1. Gender Filtering: "
                "I used gender = 'male' instead of gender = 'M'. 2. District "
                "Identification: the subquery selected district_id without ordering by "
                "the crime count. 3. Table Joins: I joined disp and account "
                "unnecessarily.",
            ),
            _msg(
                "self",
                "The feedback revealed that the client table stores gender as a single "
                "character ('M' for male, 'F' for female), that A15 in district holds "
                "the 1995 crime counts, and that client joins district directly on "
                "district_id.",
            ),
            _msg(
                "self",
                "Facts derived from the feedback: gender filters use 'M'/'F'; order "
                "district by A15 descending to rank by crimes; join client to district "
                "on district_id.",
            ),
            _msg("human", DISTILL_FACTS),
        ],
        hpa_replies=[D2_REFERENCE, D2_FEEDBACK, D2_CONFIRM],
    )


def p_offline_scenario() -> Scenario:
    return Scenario(
        name="p_offline",
        label="P-3",
        task_index=0,
        seed_memory=True,
        agent_replies=[
            _tool(
                "find_memory",
                query_string="accounts with loan validity more than 12 months and highest approved amount",
                memory_type="similar_question",
            ),
            _msg(
                "self",
                "The similar question found involves filtering accounts based on loan "
                "duration and account opening date, but it focuses on the lowest "
                "approved amount and a different year. It shows how to join the loan "
                "and account tables, filter by duration, use STRFTIME on the opening "
                "date, order by amount and limit the results. Next, I will search for "
                "any relevant subtasks or database facts.",
            ),
            _tool(
                "find_memory",
                query_string="filter accounts by opening year and loan duration",
                memory_type="similar_subtask",
            ),
            _msg(
                "self",
                "No stored subtasks apply, so I will assemble the query from the plan. "
                "Candidate SQL:\n" + D1_CANDIDATE_SQL,
            ),
            _msg(
                "self",
                "The SQL query aligns with the information from the memories: the join "
                "between loan and account is correctly implemented, the duration filter "
                "is greater than 12 months, STRFTIME extracts the opening year 1993, "
                "and ordering by amount descending with LIMIT 1 returns the highest "
                "approved amount. I am confident this query is ready to share.",
            ),
            _msg(
                "human",
                "Here is the SQL query to find the accounts with loan validity more "
                "than 12 months, the highest approved amount, and account opening date "
                "in 1993.",
                D1_CANDIDATE_SQL,
            ),
        ],
    )


def p_online_scenario() -> Scenario:
    return Scenario(
        name="p_online",
        label="P-3",
        task_index=1,
        online=True,
        agent_replies=[
            _msg(
                "self",
                "To solve this query, I need to: 1. Identify the district with the "
                "second-highest number of crimes committed in 1995 using the A15 column "
                "of the district table. 2. Join the client table with the district "
                "table using district_id. 3. Filter the clients by gender to count only "
                "male clients. 4. Assemble the SQL query.",
            ),
            _msg(
                "self",
                "To find the district with the second-highest number of crimes in 1995 "
                "I will order districts by A15 descending and take the second entry:\n"
                "SELECT district_id FROM district ORDER BY A15 DESC LIMIT 1 OFFSET 1;\n"
                "Next, I will plan how to count the male clients in this district.",
            ),
            _msg(
                "self",
                "Counting male clients in that district:\n" + D4_WRONG_SQL + "\n"
                "I will now send this query to the database expert agent for feedback.",
            ),
            _msg(
                "expert",
                "Please review the following SQL query to ensure it correctly counts "
                "the number of male clients in the district with the second-highest "
                "number of crimes in 1995.",
                D4_WRONG_SQL,
            ),
            _msg(
                "self",
                "To revise the SQL query I need to change the gender filter to 'M', "
                "keep the subquery that ranks districts by A15, and add an INNER JOIN "
                "between client and district on district_id. The revised SQL query "
                "should look like this:\n" + D4_RIGHT_SQL,
            ),
            _msg(
                "expert",
                "Please review the revised SQL query to ensure it correctly counts the "
                "number of male clients in the district with the second-highest number "
                "of crimes in 1995.",
                D4_RIGHT_SQL,
            ),
            _msg(
                "human",
                "The SQL query has been successfully generated and verified. It counts "
                "the number of male clients in the district with the second-highest "
                "number of crimes in 1995.",
                D4_RIGHT_SQL,
            ),
            # guided reflection
            _msg(
                "self",
                "The mistakes I made were: 1. Gender Filtering: I used gender = 'male' "
                "instead of gender = 'M'. 2. Subquery for District: I assumed the "
                "subquery should return district_id without considering the A15 "
                "ordering requirement. 3. Table Join: I did not join client and "
                "district, which is necessary to reference the correct district.",
            ),
            _msg(
                "self",
                "The feedback revealed: 1. The client table stores gender as a single "
                "character ('M' for male, 'F' for female). 2. Ranking districts by "
                "crime count uses ORDER BY A15 DESC with LIMIT/OFFSET. 3. An INNER "
                "JOIN between client and district on district_id combines the tables.",
            ),
            _msg(
                "self",
                "Facts derived from the feedback: gender is stored as single "
                "characters; use A15 to rank districts by 1995 crimes; join client and "
                "district on district_id when district data is needed for clients.",
            ),
            _msg("human", DISTILL_FACTS),
            # capped saves
            _tool("save_memory", query_string=SAVED_MEMORIES[0][1], knowledge_string=SAVED_MEMORIES[0][2], memory_type=SAVED_MEMORIES[0][0]),
            _tool("save_memory", query_string=SAVED_MEMORIES[1][1], knowledge_string=SAVED_MEMORIES[1][2], memory_type=SAVED_MEMORIES[1][0]),
            _tool("save_memory", query_string=SAVED_MEMORIES[2][1], knowledge_string=SAVED_MEMORIES[2][2], memory_type=SAVED_MEMORIES[2][0]),
            _tool("save_memory", query_string=SAVED_MEMORIES[3][1], knowledge_string=SAVED_MEMORIES[3][2], memory_type=SAVED_MEMORIES[3][0]),
            _tool("save_memory", query_string=SAVED_MEMORIES[4][1], knowledge_string=SAVED_MEMORIES[4][2], memory_type=SAVED_MEMORIES[4][0]),
            _msg(
                "human",
                "I have saved the most important pieces of knowledge from our "
                "interaction for future use: how to filter clients by gender, identify "
                "districts with the second-highest crimes, join client and district "
                "tables by district_id, and key facts about gender representation and "
                "crime-rate sorting.",
            ),
        ],
        hpa_replies=[D2_REFERENCE, D4_FEEDBACK, D4_CONFIRM],
    )


def scenario(name: str) -> Scenario:
    factories = {
        "np_offline": np_offline_scenario,
        "np_online": np_online_scenario,
        "p_offline": p_offline_scenario,
        "p_online": p_online_scenario,
    }
    if name not in factories:
        raise KeyError(f"unknown scenario '{name}' (choose from {sorted(factories)})")
    return factories[name]()


@dataclass
class ScenarioResult:
    trajectory: Trajectory
    storeset: MemoryStoreSet
    distill: DistillOutcome | None = None


def run_scenario(
    scn: Scenario,
    corpus: Corpus,
    agent_backend,
    hpa_backend,
    memory_dir: str | Path | None = None,
) -> ScenarioResult:
    """Drive one scenario against the given backends (scripted or replay)."""
    config = AgentConfig.from_label(scn.label)
    catalog = corpus.catalogs[FINANCIAL]
    task = corpus.tasks[scn.task_index]
    embedder = HashEmbedder()
    storeset = scn.build_storeset(embedder)
    if memory_dir is not None:
        persistent = MemoryStoreSet(
            db_id=FINANCIAL,
            level=config.memory_level,
            embedder=embedder,
            directory=memory_dir,
            clock=LogicalClock(),
        )
        for kind in MemoryKind:
            for record in storeset.stores[kind]:
                persistent.insert(kind, record.key, record.body, "seed", "seed")
        storeset = persistent
    gateway = ChatGateway(agent_backend)
    result = ScenarioResult(trajectory=None, storeset=storeset)  # type: ignore[arg-type]
    if scn.online:
        hpa = HumanProxyAgent(catalog, ChatGateway(hpa_backend))
        trajectory = run_online(task, config, storeset, gateway, catalog, hpa)
        result.trajectory = trajectory
        if trajectory.outcome == "Solved":
            result.distill = distill_trajectory(
                trajectory, task, config, catalog, gateway, storeset, run_id=scn.name
            )
    else:
        result.trajectory = run_offline(task, config, storeset, gateway, catalog)
    return result


def record_cassette(scn: Scenario, corpus: Corpus, cassette_path: str | Path) -> ScenarioResult:
    path = Path(cassette_path)
    if path.exists():
        path.unlink()
    agent_backend = RecordingBackend(ScriptedBackend(scn.agent_replies), path)
    hpa_backend = RecordingBackend(ScriptedBackend(scn.hpa_replies), path)
    return run_scenario(scn, corpus, agent_backend, hpa_backend)


def replay_cassette(
    scn: Scenario,
    corpus: Corpus,
    cassette_path: str | Path,
    memory_dir: str | Path | None = None,
) -> ScenarioResult:
    backend = ReplayBackend(cassette_path)
    return run_scenario(scn, corpus, backend, backend, memory_dir=memory_dir)


def build_synthetic_db(root: str | Path, db_id: str, n_questions: int) -> None:
    """One-table database with n parametrized count questions (all solvable)."""
    root = Path(root)
    db_dir = root / "dev_databases" / db_id
    db_dir.mkdir(parents=True, exist_ok=True)
    db_path = db_dir / f"{db_id}.sqlite"
    if db_path.exists():
        db_path.unlink()
    conn = sqlite3.connect(db_path)
    try:
        conn.execute("CREATE TABLE items (id INTEGER PRIMARY KEY, value INTEGER, label TEXT)")
        conn.executemany(
            "INSERT INTO items VALUES (?, ?, ?)",
            [(i, i * 3 % 50, f"item-{i:02d}") for i in range(1, 41)],
        )
        conn.commit()
    finally:
        conn.close()
    questions = []
    if (root / "dev.json").is_file():
        questions = json.loads((root / "dev.json").read_text(encoding="utf-8"))
    for k in range(n_questions):
        questions.append(
            {
                "question_id": 1000 + k,
                "db_id": db_id,
                "question": f"How many items have a value of at most {k + 3}?",
                "evidence": f"value of at most {k + 3} refers to value <= {k + 3}",
                "SQL": f"SELECT COUNT(*) FROM items WHERE value <= {k + 3}",
            }
        )
    (root / "dev.json").write_text(json.dumps(questions, indent=2) + "\n", encoding="utf-8")


_NP_QUESTION_RE = re.compile(r"## Question:?\s*\n(.*?)\n\s*\n?## Database", re.DOTALL)
_TASK_QUESTION_RE = re.compile(r"question:\n(.*?)\n\ndatabase name:", re.DOTALL)


class GoldEchoBackend:
    """Deterministic model double that answers every question with its gold SQL.

    Handles the templated pipeline, the procedural message protocol, the
    expert's canned phrasing, and the distillation dialogue, so full harness
    runs work offline.
    """

    def __init__(self, corpus: Corpus):
        self.gold = {t.nlq: t.gold_sql for t in corpus.tasks}

    def _final_candidate(self, messages: list[dict]) -> str:
        for message in reversed(messages):
            if message.get("role") != "assistant" or not message.get("content"):
                continue
            try:
                payload = json.loads(message["content"])
            except (json.JSONDecodeError, TypeError):
                continue
            if payload.get("generated_sql"):
                return payload["generated_sql"]
        return ""

    def request(self, request: dict) -> RawReply:
        messages = request["messages"]
        system = messages[0]["content"] if messages and messages[0]["role"] == "system" else ""
        last = messages[-1]
        user_indexes = [i for i, m in enumerate(messages) if m["role"] == "user"]
        last_user = messages[user_indexes[-1]]["content"] if user_indexes else ""
        trailing_assistant = sum(
            1 for m in messages[user_indexes[-1] + 1 :] if m["role"] == "assistant"
        ) if user_indexes else 0

        # expert-side prompts
        if last_user.startswith("You are an expert database user. Study the question"):
            return RawReply(content="Reference: follow the annotated evidence and the gold plan.")
        if last_user.startswith("You are an expert database user reviewing"):
            return RawReply(
                content="The query does not produce the expected output; revisit the filters and joins."
            )
        if last_user.startswith("You are an expert database user. The submitted SQL"):
            return RawReply(content="The SQL query is correct.")

        # templated pipeline calls
        if last_user.startswith("You are a SQL query generation agent"):
            match = _NP_QUESTION_RE.search(last_user)
            question = match.group(1).strip() if match else ""
            return RawReply(content=self.gold.get(question, "SELECT 1"))

        # distillation dialogue: three thoughts then the facts
        if "Please summarize what you learned" in last_user:
            steps = [
                _msg("self", "Step 1: the decisive knowledge was reading the schema carefully."),
                _msg("self", "Step 2: the filter values come directly from the evidence."),
                _msg("self", "Step 3: rephrased as reusable facts."),
                _msg("human", "Facts: read the schema carefully and take filter values from the evidence."),
            ]
            return RawReply(content=steps[min(trailing_assistant, len(steps) - 1)])
        if "Now save the distilled knowledge" in last_user:
            return RawReply(content=_msg("human", "No additional memories to save."))

        # procedural flow
        question_match = _TASK_QUESTION_RE.search(last_user)
        question = question_match.group(1).strip() if question_match else None
        online = "expert agent to request feedback" in system or "message a database expert" in system
        gold = self.gold.get(question or "", "SELECT 1")
        if last["role"] == "tool":
            return RawReply(content=_msg("self", "Noted the tool result; continuing."))
        if question is not None:
            if online:
                steps = [
                    _msg("self", "Candidate SQL assembled from the question:\n" + gold),
                    _msg("expert", "Please review this SQL query.", gold),
                ]
            else:
                steps = [
                    _msg("self", "Candidate SQL assembled from the question:\n" + gold),
                    _msg("self", "Verified the candidate against the schema; it is consistent."),
                    _msg("human", "Here is the SQL query for your request.", gold),
                ]
            if trailing_assistant < len(steps):
                return RawReply(content=steps[trailing_assistant])
            return RawReply(content=_msg("human", "Here is the SQL query for your request.", gold))
        # the last user turn is an expert reply: confirmation hands the SQL to
        # the human, corrective feedback triggers a revision loop
        confirmation = "correct" in last_user[:80].lower()
        candidate = self._final_candidate(messages) or "SELECT 1"
        if confirmation:
            return RawReply(content=_msg("human", "The query was confirmed by the expert.", candidate))
        return RawReply(content=_msg("expert", "Revised after feedback; please review again.", candidate))


def generate_all(fixture_dir: str | Path) -> dict[str, Path]:
    """(Re)build the fixture corpus and record all four cassettes."""
    fixture_dir = Path(fixture_dir)
    root = build_bird_fixture(fixture_dir / "bird_root")
    corpus = load_bird(root)
    cassette_dir = fixture_dir / "cassettes"
    cassette_dir.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {"bird_root": root}
    for name in CASSETTE_NAMES:
        path = cassette_dir / f"{name}.jsonl"
        record_cassette(scenario(name), corpus, path)
        paths[name] = path
    return paths


if __name__ == "__main__":
    import sys

    target = sys.argv[1] if len(sys.argv) > 1 else "fixtures"
    written = generate_all(target)
    for key, value in written.items():
        print(f"{key}: {value}")
