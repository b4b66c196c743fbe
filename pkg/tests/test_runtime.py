from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csdial.corpus import Intent
from csdial.errors import GeneratorError
from csdial.kb import KBEntity, KBQuery, KBResult, LocalKB, kb_query, query_from_intent
from csdial.runtime import (
    DialogueSession,
    SessionState,
    TurnRecord,
    evaluate_tod,
    parse_turn_context,
    parse_turn_record,
    serialize_turn_context,
    serialize_turn_record,
    step_turn,
)
from csdial.generators import OracleGenerator, RetrievalGenerator
from csdial.kb import build_local_kb
from csdial.synth import synthesize_corpus


def test_serialize_empty_history_matches_canonical_form():
    assert serialize_turn_context([], "查一下价格") == "[EH] [U] 查一下价格"


def test_serialize_two_entities_first_mention_order():
    s = serialize_turn_context(["38M套餐", "来电显示"], "它多少钱")
    names, utt = parse_turn_context(s)
    assert names == ["38M套餐", "来电显示"]
    assert utt == "它多少钱"


def test_serialize_accepts_turn_records_as_history():
    rec = TurnRecord(
        entity_name_history=("38M套餐", "来电显示"),
        user_utterance="之前的话",
        predicted_entity="来电显示",
        user_intent=Intent.make("查询"),
        kb_result=KBResult("empty"),
        system_intent=Intent.make("告知"),
        response="好的",
    )
    assert serialize_turn_context([rec], "它多少钱") == serialize_turn_context(
        ["38M套餐", "来电显示"], "它多少钱"
    )


def test_context_round_trip_with_reserved_characters():
    hostile = "边界[EH]值\\[U]文本\\n"
    s = serialize_turn_context([hostile], hostile)
    names, utt = parse_turn_context(s)
    assert names == [hostile] and utt == hostile


text_strategy = st.text(
    alphabet=st.sampled_from(list("abc[]\\ 嗯套餐元分钟[EHUV]")), max_size=12
)


@settings(max_examples=200, deadline=None)
@given(
    names=st.lists(text_strategy, max_size=3),
    utt=text_strategy,
    entity=st.one_of(st.none(), text_strategy.filter(bool)),
    response=text_strategy,
    values=st.lists(text_strategy, min_size=1, max_size=2),
)
def test_record_round_trip_property(names, utt, entity, response, values):
    rec = TurnRecord(
        entity_name_history=tuple(names),
        user_utterance=utt,
        predicted_entity=entity,
        user_intent=Intent.make("查询", entity_name=entity, attribute="价格"),
        kb_result=KBResult("found", tuple(values)),
        system_intent=Intent.make("告知"),
        response=response,
    )
    assert parse_turn_record(serialize_turn_record(rec)) == rec


@pytest.fixture()
def fixture_kb():
    return LocalKB(
        entities=(KBEntity("e0", "主套餐", "38M套餐", (("价格", "38元"), ("流量", "1GB"))),),
        user_profile=(("余额", "10元"),),
    )


class ScriptedGenerator:
    """Deterministic generator for step_turn unit tests."""

    def __init__(self, entity, intent, system_intent=None, template="答复{kb}"):
        self.entity = entity
        self.intent = intent
        self.system_intent = system_intent or Intent.make("告知")
        self.template = template

    def user_side(self, context):
        return self.entity, self.intent

    def system_side(self, context):
        # echo the kb values it was handed, proving the injection path
        values = [c for m, c in __import__("csdial.runtime", fromlist=["_scan"])._scan(context) if m == "V"]
        return self.system_intent, self.template.replace("{kb}", "、".join(values))


def test_step_turn_queries_kb_and_injects_result(fixture_kb):
    gen = ScriptedGenerator("38M套餐", Intent.make("查询", entity_name="38M套餐", attribute="价格"))
    state = SessionState()
    rec = step_turn(state, "38M套餐多少钱", fixture_kb, gen)
    assert rec.kb_result == KBResult("found", ("38元",))
    assert "38元" in rec.response
    assert rec.entity_name_history == ("38M套餐",)


def test_step_turn_no_entity_intent_empty_history_unchanged(fixture_kb):
    gen = ScriptedGenerator(None, Intent.make("问候"))
    state = SessionState()
    rec = step_turn(state, "你好", fixture_kb, gen)
    assert rec.kb_result.status == "empty"
    assert rec.entity_name_history == ()
    assert state.entity_names == []


def test_step_turn_kb_result_matches_direct_query(fixture_kb):
    gen = ScriptedGenerator("38M套餐", Intent.make("查询", entity_name="38M套餐", attribute="流量"))
    state = SessionState()
    rec = step_turn(state, "流量呢", fixture_kb, gen)
    expected = kb_query(fixture_kb, query_from_intent(rec.user_intent))
    assert rec.kb_result == expected


def test_step_turn_wraps_generator_failures(fixture_kb):
    class Exploding:
        def user_side(self, context):
            raise RuntimeError("boom")

    with pytest.raises(GeneratorError, match="user_side"):
        step_turn(SessionState(), "你好", fixture_kb, Exploding())


def test_history_grows_monotonically(fixture_kb):
    gen1 = ScriptedGenerator("38M套餐", Intent.make("查询", entity_name="38M套餐", attribute="价格"))
    session = DialogueSession(fixture_kb, gen1)
    session.step("38M套餐多少钱")
    session.step("它的流量呢")
    h0 = session.records[0].entity_name_history
    h1 = session.records[1].entity_name_history
    assert set(h0) <= set(h1)
    assert h1 == ("38M套餐",)  # deduplicated


def test_generator_sees_only_history_and_current_utterance(fixture_kb):
    seen = []

    class Capturing(ScriptedGenerator):
        def user_side(self, context):
            seen.append(context)
            return super().user_side(context)

    gen = Capturing("38M套餐", Intent.make("查询", entity_name="38M套餐", attribute="价格"))
    session = DialogueSession(fixture_kb, gen)
    session.step("第一句原始话语")
    session.step("第二句")
    # the second turn's conditioning holds the entity history and the current
    # utterance, never the first turn's raw text
    assert seen[1] == serialize_turn_context(["38M套餐"], "第二句")
    assert "第一句原始话语" not in seen[1]


def test_session_replay_deterministic(schema, fixture_kb):
    def run():
        gen = ScriptedGenerator("38M套餐", Intent.make("查询", entity_name="38M套餐", attribute="价格"))
        s = DialogueSession(fixture_kb, gen, schema)
        return [s.step("38M套餐多少钱"), s.step("它呢")]

    assert run() == run()


# -- corpus-mode evaluation ----------------------------------------------------

def test_oracle_generator_perfect_scores(schema):
    split = synthesize_corpus(51, 20, schema)
    dialogues = split.all_dialogues()
    report = evaluate_tod(dialogues, schema, lambda d, kb: OracleGenerator(d, kb))
    assert report.success == 1.0
    assert report.bleu == pytest.approx(100.0, abs=1e-9)
    assert report.user_prf == (1.0, 1.0, 1.0)
    assert report.sys_prf == (1.0, 1.0, 1.0)


def test_retrieval_generator_engages_kb(schema):
    split = synthesize_corpus(52, 60, schema)
    gen_index = RetrievalGenerator.build(list(split.train))
    report = evaluate_tod(
        list(split.dev), schema, lambda d, kb: RetrievalGenerator(gen_index.entries, gen_index.known_names)
    )
    assert report.success > 0.0
    assert 0.0 <= report.bleu <= 100.0


def test_retrieval_turn_records_kb_consistent(schema):
    split = synthesize_corpus(53, 40, schema)
    index = RetrievalGenerator.build(list(split.train))
    for d in list(split.dev):
        kb = build_local_kb(d, schema)
        gen = RetrievalGenerator(index.entries, index.known_names)
        session = DialogueSession(kb, gen, schema)
        for t in d.turns:
            if t.speaker != "user":
                continue
            rec = session.step(t.text)
            q = query_from_intent(rec.user_intent)
            expected = kb_query(kb, q, schema) if q else KBResult("empty")
            assert rec.kb_result == expected
