from __future__ import annotations

from sqlmentor.sqldiff import ErrorCategory, classify_error, inventory


def test_distinct_only_difference():
    gold = "SELECT DISTINCT name FROM client WHERE gender = 'M'"
    cand = "SELECT name FROM client WHERE gender = 'M'"
    assert classify_error(gold, cand)[0] is ErrorCategory.DISTINCT


def test_superfluous_joins_classify_as_join():
    gold = (
        "SELECT COUNT(T1.client_id) FROM client AS T1 INNER JOIN district AS T2 "
        "ON T1.district_id = T2.district_id WHERE T1.gender = 'M'"
    )
    cand = (
        "SELECT COUNT(c.client_id) FROM client c JOIN disp d ON c.client_id = d.client_id "
        "JOIN account a ON d.account_id = a.account_id JOIN district dis "
        "ON a.district_id = dis.district_id WHERE c.gender = 'male'"
    )
    assert classify_error(gold, cand)[0] is ErrorCategory.JOIN


def test_extra_selected_column_is_other():
    gold = "SELECT name FROM client WHERE gender = 'M'"
    cand = "SELECT name, gender FROM client WHERE gender = 'M'"
    assert classify_error(gold, cand)[0] is ErrorCategory.OTHER


def test_disjoint_tables_is_table_selection():
    gold = "SELECT amount FROM loan WHERE duration > 12"
    cand = "SELECT amount FROM trans WHERE amount > 12"
    assert classify_error(gold, cand)[0] is ErrorCategory.TABLE_SELECTION


def test_aggregate_mismatch():
    gold = "SELECT COUNT(*) FROM client"
    cand = "SELECT SUM(client_id) FROM client"
    assert classify_error(gold, cand)[0] is ErrorCategory.AGGREGATION


def test_filter_literal_mismatch():
    gold = "SELECT name FROM client WHERE gender = 'M'"
    cand = "SELECT name FROM client WHERE gender = 'male'"
    assert classify_error(gold, cand)[0] is ErrorCategory.FILTER


def test_alias_qualifiers_do_not_fake_filter_differences():
    gold = "SELECT COUNT(T1.client_id) FROM client AS T1 WHERE T1.gender = 'M'"
    cand = "SELECT COUNT(c.client_id) FROM client c WHERE c.gender = 'M'"
    gold_inv, cand_inv = inventory(gold), inventory(cand)
    assert gold_inv.filter_text == cand_inv.filter_text
    assert gold_inv.tables == cand_inv.tables


def test_unparseable_candidate_tagged():
    category, tag = classify_error("SELECT 1", "this is not sql at all")
    assert category is ErrorCategory.OTHER
    assert tag == "unparsed"


def test_priority_join_beats_filter():
    gold = "SELECT a FROM t1 JOIN t2 ON t1.id = t2.id WHERE t1.x = 1"
    cand = "SELECT a FROM t1 WHERE t1.x = 2"
    assert classify_error(gold, cand)[0] is ErrorCategory.JOIN


def test_classification_is_pure():
    gold = "SELECT DISTINCT name FROM client"
    cand = "SELECT name FROM client"
    assert classify_error(gold, cand) == classify_error(gold, cand)


def test_inventory_tables_with_aliases_and_commas():
    inv = inventory('SELECT * FROM client c, district AS d JOIN "order" o ON 1=1')
    assert inv.tables == {"client", "district", "order"}


def test_inventory_subquery_tables_and_filters():
    inv = inventory(
        "SELECT COUNT(*) FROM client WHERE district_id = "
        "(SELECT district_id FROM district ORDER BY A15 DESC LIMIT 1 OFFSET 1)"
    )
    assert inv.tables == {"client", "district"}
    assert "district_id" in inv.filter_text
    assert inv.aggregates == {"count"}


def test_inventory_select_arity():
    assert inventory("SELECT a, b, COUNT(x, y) FROM t").select_arity == 3
    assert inventory("SELECT a FROM t").select_arity == 1
