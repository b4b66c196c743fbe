from __future__ import annotations

import itertools
import math
import random

import numpy as np
import pytest

from csdial.metrics import (
    MatchResult,
    ScoreReport,
    bcubed,
    bleu,
    hungarian_match,
    intent_prf,
    span_f1,
    success_rate,
    triple_f1,
)

from .oracles import brute_force_max_matching


# -- span F1 ------------------------------------------------------------------

def test_span_f1_exact_match():
    spans = [("d", 0, 1, 3, "t")]
    assert span_f1(spans, spans) == (1.0, 1.0, 1.0)


def test_span_f1_empty_prediction():
    assert span_f1([], [("d", 0, 1, 3, "t")]) == (0.0, 0.0, 0.0)


def test_span_f1_half_right():
    gold = [("d", 0, 1, 3, "t"), ("d", 1, 0, 2, "t")]
    pred = [("d", 0, 1, 3, "t"), ("d", 2, 0, 2, "t")]
    assert span_f1(pred, gold) == (0.5, 0.5, 0.5)


# -- B-cubed -------------------------------------------------------------------

def test_bcubed_hand_fixture():
    p, r, f = bcubed([["a", "b", "c"]], [["a", "b"], ["c"]])
    assert p == pytest.approx(5 / 9, abs=1e-9)
    assert r == pytest.approx(1.0, abs=1e-9)
    assert f == pytest.approx(10 / 14, abs=1e-9)


def test_bcubed_identity_on_random_partitions():
    rng = random.Random(0)
    for _ in range(100):
        n = rng.randint(1, 12)
        items = list(range(n))
        k = rng.randint(1, n)
        clusters = [[] for _ in range(k)]
        for item in items:
            clusters[rng.randrange(k)].append(item)
        clusters = [c for c in clusters if c]
        assert bcubed(clusters, clusters) == (1.0, 1.0, 1.0)


def test_bcubed_all_singletons_vs_one_cluster():
    n = 5
    gold = [list(range(n))]
    pred = [[i] for i in range(n)]
    p, r, _ = bcubed(pred, gold)
    assert p == 1.0
    assert r == pytest.approx(1 / n)


def test_bcubed_empty_universe_convention():
    assert bcubed([], []) == (1.0, 1.0, 1.0)


def test_bcubed_missing_side_treated_as_singletons():
    # "d" only exists in prediction: gold side treats it as a singleton.
    p, r, f = bcubed([["a", "d"]], [["a"]])
    assert p == pytest.approx(0.5)
    assert r == pytest.approx(1.0)


# -- Hungarian matching ---------------------------------------------------------

def _entities_from_matrix(agree):
    """Build entity triple sets realizing an agreement matrix via shared items."""
    pred = [set() for _ in agree]
    gold = [set() for _ in (agree[0] if agree else [])]
    token = 0
    for i, row in enumerate(agree):
        for j, k in enumerate(row):
            for _ in range(k):
                t = ("slot", f"v{token}")
                token += 1
                pred[i].add(t)
                gold[j].add(t)
    return pred, gold


def test_hungarian_simple_pair():
    pred = [{("价格", "38元"), ("流量", "1GB")}]
    gold = [{("价格", "38元"), ("流量", "1GB")}]
    m = hungarian_match(pred, gold)
    assert m.matched_triples == 2
    assert m.as_dict() == {0: 0}


def test_hungarian_disjoint_everywhere():
    pred = [{("a", "1")}, {("b", "2")}]
    gold = [{("c", "3")}, {("d", "4")}]
    m = hungarian_match(pred, gold)
    assert m.matched_triples == 0
    assert m.mapping == ()


def test_hungarian_matches_brute_force_random():
    rng = random.Random(1)
    for _ in range(120):
        n_pred = rng.randint(1, 5)
        n_gold = rng.randint(1, 5)
        agree = [[rng.randint(0, 4) for _ in range(n_gold)] for _ in range(n_pred)]
        pred, gold = _entities_from_matrix(agree)
        got = hungarian_match(pred, gold)
        assert got.matched_triples == brute_force_max_matching(agree)
        # mapping realizes the total and is injective both ways
        assert len({i for i, _ in got.mapping}) == len(got.mapping)
        assert len({j for _, j in got.mapping}) == len(got.mapping)
        realized = sum(agree[i][j] for i, j in got.mapping)
        assert realized == got.matched_triples


def test_hungarian_tie_prefers_smallest_gold_index():
    # Two golds equally good for pred 0: lexicographically smallest mapping wins.
    pred = [{("s", "v")}]
    gold = [{("s", "v")}, {("s", "v")}]
    assert hungarian_match(pred, gold).as_dict() == {0: 0}


def test_hungarian_relabeling_invariance():
    rng = random.Random(2)
    agree = [[rng.randint(0, 3) for _ in range(4)] for _ in range(4)]
    pred, gold = _entities_from_matrix(agree)
    base = hungarian_match(pred, gold).matched_triples
    perm = [2, 0, 3, 1]
    assert hungarian_match([pred[i] for i in perm], gold).matched_triples == base
    assert hungarian_match(pred, [gold[j] for j in perm]).matched_triples == base


# -- triple F1 -------------------------------------------------------------------

def test_triple_f1_identical():
    d = [{"e1": [("价格", "38元")], "user": [("余额", "10元")]}]
    assert triple_f1(d, d) == (1.0, 1.0, 1.0)


def test_triple_f1_empty_prediction():
    gold = [{"e1": [("价格", "38元")]}]
    assert triple_f1([{}], gold) == (0.0, 0.0, 0.0)


def test_triple_f1_hand_counts():
    pred = [{"p1": [("价格", "38元"), ("流量", "1GB"), ("通话时长", "100分钟")]}]
    gold = [{"g1": [("价格", "38元"), ("流量", "1GB"), ("月租", "8元"), ("有效期", "一个月")]}]
    p, r, f = triple_f1(pred, gold)
    assert p == pytest.approx(2 / 3)
    assert r == pytest.approx(2 / 4)
    assert f == pytest.approx(2 * (2 / 3) * (1 / 2) / ((2 / 3) + (1 / 2)))


def test_triple_f1_user_profile_bypasses_matching():
    pred = [{"user": [("余额", "10元")], "p1": [("价格", "38元")]}]
    gold = [{"user": [("余额", "10元")], "g9": [("价格", "38元")]}]
    assert triple_f1(pred, gold) == (1.0, 1.0, 1.0)


def test_triple_f1_dialogue_order_invariance():
    a = {"e": [("价格", "38元")]}
    b = {"e": [("流量", "1GB"), ("价格", "58元")]}
    ga = {"x": [("价格", "38元")]}
    gb = {"y": [("流量", "2GB"), ("价格", "58元")]}
    assert triple_f1([a, b], [ga, gb]) == triple_f1([b, a], [gb, ga])


# -- intents ---------------------------------------------------------------------

def test_intent_prf_exact():
    turns = [{"查询"}, {"办理", "问候"}]
    assert intent_prf(turns, turns) == (1.0, 1.0, 1.0)


def test_intent_prf_superset_prediction():
    gold = [{"查询"}, {"办理"}]
    pred = [{"查询", "问候"}, {"办理", "告别"}]
    p, r, _ = intent_prf(pred, gold)
    assert p == pytest.approx(0.5)
    assert r == pytest.approx(1.0)


def test_intent_prf_vacuous_case():
    assert intent_prf([set(), set()], [set(), set()]) == (1.0, 1.0, 1.0)


# -- BLEU ------------------------------------------------------------------------

def test_bleu_identical_is_100():
    sents = ["今天天气很好", "我爱北京"]
    assert bleu(sents, sents) == pytest.approx(100.0, abs=1e-9)


def test_bleu_disjoint_is_near_zero():
    cands = ["abcdefghijklmnopqrstuvwxyz" * 2] * 3
    refs = ["0123456789" * 5] * 3
    assert bleu(cands, refs) < 5.0


def test_bleu_hand_computed_fixture():
    cands = ["今天天气好", "我爱北京"]
    refs = ["今天天气很好", "我爱北京"]
    # By explicit n-gram counting over characters:
    #   p1 = 9/9, p2 = 6/7, p3 = 4/5, p4 = 2/3; c = 9, r = 10 -> BP = exp(1 - 10/9)
    expected = 100.0 * math.exp(1 - 10 / 9) * (1.0 * (6 / 7) * (4 / 5) * (2 / 3)) ** 0.25
    assert bleu(cands, refs) == pytest.approx(expected, abs=1e-9)


def test_bleu_empty_corpus_is_error():
    with pytest.raises(ValueError):
        bleu([], [])


# -- success rate -----------------------------------------------------------------

def test_success_empty_goal_is_vacuous_success():
    assert success_rate([[]], [["任意回复"]]) == 1.0


def test_success_requires_value_in_system_side():
    assert success_rate([["38元"]], [["您的套餐价格是38元哦"]]) == 1.0
    # value appearing only in the user's words does not count: the scorer only
    # ever sees system responses
    assert success_rate([["38元"]], [["抱歉没有查到"]]) == 0.0


def test_success_strips_whitespace():
    assert success_rate([["3 8元"]], [["价格是38 元"]]) == 1.0


# -- cross-cutting properties -------------------------------------------------------

def test_prf_bounds_and_f1_inequality():
    rng = random.Random(3)
    for _ in range(50):
        gold = [{f"i{rng.randint(0, 3)}"} for _ in range(4)]
        pred = [{f"i{rng.randint(0, 3)}"} for _ in range(4)]
        p, r, f = intent_prf(pred, gold)
        for v in (p, r, f):
            assert 0.0 <= v <= 1.0
        assert f <= max(p, r) + 1e-12


def test_adding_correct_prediction_never_decreases_recall():
    gold = [("d", 0, 0, 2, "t"), ("d", 1, 0, 2, "t")]
    pred = [("d", 0, 0, 2, "t")]
    _, r0, _ = span_f1(pred, gold)
    _, r1, _ = span_f1(pred + [gold[1]], gold)
    assert r1 >= r0


def test_adding_incorrect_prediction_never_increases_precision():
    gold = [("d", 0, 0, 2, "t")]
    pred = [("d", 0, 0, 2, "t")]
    p0, _, _ = span_f1(pred, gold)
    p1, _, _ = span_f1(pred + [("d", 5, 0, 2, "t")], gold)
    assert p1 <= p0


def test_score_report_renders_both_tables():
    rep = ScoreReport(ner_f1=0.5, ecr_bcubed=0.9, sr_f1=0.4, esa_acc=0.8, sf_f1=0.3,
                      user_prf=(0.6, 0.5, 0.55), sys_prf=(0.7, 0.6, 0.65), bleu=4.1, success=0.3)
    assert "F1 (SF)" in rep.render_task1()
    assert "Success" in rep.render_task2()
    assert rep.as_dict()["bleu"] == 4.1
