"""Seed-reproducible synthetic corpus with known gold annotations.

Every dialogue is assembled from exchange templates over the schema's types
and attributes, so downstream modules (extraction, KB building, dialogue
runtime, metrics) all have an exact oracle. Redundant turns of the three
spoken-transcript cases are planted at a configurable rate and recorded, so
cleaning can be scored against ground truth.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from .corpus import (
    USER_ENTITY_ID,
    CorpusSplit,
    Dialogue,
    Intent,
    Mention,
    TripleAnnotation,
    Turn,
)
from .schema import Schema

# Name pools per entity type; the last entry of each pool never appears in
# the train split, so evaluation sees some unseen surface forms.
NAME_POOLS: dict[str, list[str]] = {
    "主套餐": ["38元主套餐", "58元主套餐", "88元主套餐", "全球通主套餐", "神州行主套餐",
             "动感地带主套餐", "畅享主套餐", "商旅主套餐", "尊享主套餐"],
    "流量包": ["10元流量包", "20元流量包", "30元流量包", "50元流量包", "夜间流量包",
             "假日流量包", "校园流量包", "国际流量包"],
    "套餐": ["经济套餐", "亲情套餐", "怀旧套餐", "学生套餐"],
    "业务": ["来电显示", "呼叫转移", "国际漫游", "彩铃业务", "秘书服务"],
}

VALUE_POOLS: dict[str, list[str]] = {
    "价格": ["8元", "18元", "28元", "38元", "48元", "58元", "68元", "88元", "98元", "128元"],
    "月租": ["5元", "8元", "10元", "15元", "18元", "20元"],
    "流量": ["300MB", "500MB", "1GB", "2GB", "3GB", "5GB", "10GB", "20GB"],
    "通话时长": ["50分钟", "100分钟", "200分钟", "300分钟", "500分钟", "1000分钟"],
    "有效期": ["一个月", "三个月", "半年", "一年"],
    "资费": ["3元", "5元", "6元", "10元", "12元"],
    "办理方式": ["营业厅办理", "短信办理", "网上营业厅办理", "电话办理"],
    "余额": ["0元", "5元", "10元", "23元", "50元", "100元", "200元"],
    "话费": ["10元", "20元", "30元", "59元", "99元"],
    "欠费": ["0元", "3元", "8元", "15元"],
}

ASK_NAMED = ["请问{name}的{attr}是多少", "帮我查一下{name}的{attr}", "{name}的{attr}是多少",
             "我想知道{name}的{attr}", "查下{name}的{attr}"]
ASK_PRONOUN = ["那它的{attr}是多少", "它的{attr}呢", "那它{attr}多少"]
ANSWER_NAMED = ["{name}的{attr}是{value}", "为您查到{name}的{attr}是{value}", "{name}{attr}是{value}哦"]
ANSWER_BARE = ["{attr}是{value}", "这边{attr}是{value}哦", "查到{attr}是{value}"]
ASK_ACCOUNT = ["帮我查一下{slot}", "查下我的{slot}", "我的{slot}还有多少"]
ANSWER_ACCOUNT = ["您的{slot}是{value}", "查到您的{slot}是{value}"]
ASK_HANDLE = ["帮我办理{name}", "我要办理{name}", "给我开通{name}"]
ANSWER_HANDLE = ["好的已为您办理{name}", "已经帮您开通{name}了"]
ASK_TYPE = ["有什么{type}推荐吗", "你们有哪些{type}"]
ANSWER_TYPE = ["我们这边有{name}"]
GREET_USER = ["你好", "您好", "喂你好"]
GREET_SYSTEM = ["您好请问有什么可以帮您", "您好很高兴为您服务"]
BYE_USER = ["好的谢谢", "嗯好的谢谢", "行谢谢你"]
BYE_SYSTEM = ["感谢您的来电再见", "不客气再见"]

REPETITION_REQUESTS = ["呃呃您再说一下", "不好意思您再说一遍", "没听清您重复一下"]
CONFIRM_ACK = "对"
INTERJECTION_TEXT = "嗯"

PRONOUN = "它"


@dataclass
class TurnDraft:
    speaker: str
    text: str
    mentions: list[tuple[int, int, str, str, str]] = field(default_factory=list)  # start,end,surface,eid,etype
    triples: list[tuple[str, str, str, int, int]] = field(default_factory=list)  # eid,slot,value,start,end
    intents: list[Intent] = field(default_factory=list)
    planted: str | None = None  # redundancy case for planted turns


@dataclass(frozen=True)
class PlantRecord:
    dialogue_id: str
    case: str  # repetition | confirmation | interjection
    turn_indices: tuple[int, ...]  # indices of the planted turns in the final dialogue


def _fill(template: str, **kw: str) -> tuple[str, dict[str, tuple[int, int]]]:
    """Render a template and report each placeholder's character span."""
    spans: dict[str, tuple[int, int]] = {}
    out = ""
    rest = template
    while "{" in rest:
        pre, _, tail = rest.partition("{")
        key, _, rest = tail.partition("}")
        out += pre
        value = kw[key]
        spans[key] = (len(out), len(out) + len(value))
        out += value
    out += rest
    return out, spans


def _name_pool(etype: str, k: int) -> list[str]:
    pool = NAME_POOLS.get(etype)
    if pool is None:
        pool = [f"{etype}{i}号" for i in range(1, 9)]
    return pool


def _value_pool(attr: str) -> list[str]:
    pool = VALUE_POOLS.get(attr)
    if pool is None:
        pool = [f"{attr}{i}档" for i in range(1, 7)]
    return pool


@dataclass
class _EntitySpec:
    eid: str
    etype: str
    name: str
    attrs: dict[str, str]


class _DialogueBuilder:
    def __init__(self, rng: random.Random, schema: Schema, for_train: bool,
                 plant_rng: random.Random | None = None):
        self.rng = rng
        # Planting draws from its own stream so the base dialogue is identical
        # across redundancy rates for the same seed.
        self.plant_rng = plant_rng or rng
        self.schema = schema
        self.for_train = for_train
        self.turns: list[TurnDraft] = []

    def _pick_name(self, etype: str, used: set[str]) -> str:
        pool = _name_pool(etype, 8)
        # hold the last pool entry out of the train split
        pool = pool[:-1] if self.for_train else pool
        choices = [n for n in pool if n not in used] or pool
        return self.rng.choice(choices)

    def make_entities(self) -> list[_EntitySpec]:
        n = 1 if self.rng.random() < 0.6 else 2
        leaf_types = sorted(t.name for t in self.schema.types.values() if t.depth > 0) or sorted(
            self.schema.types
        )
        root_types = sorted(self.schema.types)
        used: set[str] = set()
        out = []
        for i in range(n):
            etype = self.rng.choice(leaf_types if self.rng.random() < 0.8 else root_types)
            name = self._pick_name(etype, used)
            used.add(name)
            attrs = {a: self.rng.choice(_value_pool(a)) for a in sorted(self.schema.attributes(etype))}
            out.append(_EntitySpec(f"e{i}", etype, name, attrs))
        return out

    def user(self, text: str, **kw) -> TurnDraft:
        t = TurnDraft("user", text, **kw)
        self.turns.append(t)
        return t

    def system(self, text: str, **kw) -> TurnDraft:
        t = TurnDraft("system", text, **kw)
        self.turns.append(t)
        return t

    def ask_attribute(self, ent: _EntitySpec, attr: str, allow_pronoun: bool) -> None:
        rng = self.rng
        value = ent.attrs[attr]
        use_pronoun = allow_pronoun and rng.random() < 0.35
        if use_pronoun:
            text, spans = _fill(rng.choice(ASK_PRONOUN), attr=attr)
            p = text.index(PRONOUN)
            mention = (p, p + 1, PRONOUN, ent.eid, ent.etype)
        else:
            text, spans = _fill(rng.choice(ASK_NAMED), name=ent.name, attr=attr)
            s, e = spans["name"]
            mention = (s, e, ent.name, ent.eid, ent.etype)
        self.user(
            text,
            mentions=[mention],
            intents=[Intent.make("查询", entity_name=ent.name, attribute=attr)],
        )
        if rng.random() < 0.75:
            text, spans = _fill(rng.choice(ANSWER_NAMED), name=ent.name, attr=attr, value=value)
            s, e = spans["name"]
            mentions = [(s, e, ent.name, ent.eid, ent.etype)]
        else:
            text, spans = _fill(rng.choice(ANSWER_BARE), attr=attr, value=value)
            mentions = []
        vs, ve = spans["value"]
        self.system(
            text,
            mentions=mentions,
            triples=[(ent.eid, attr, value, vs, ve)],
            intents=[Intent.make("告知", entity_name=ent.name, attribute=attr)],
        )

    def ask_account(self, profile: dict[str, str]) -> None:
        rng = self.rng
        slot = rng.choice(sorted(profile))
        value = profile[slot]
        text, _ = _fill(rng.choice(ASK_ACCOUNT), slot=slot)
        self.user(text, intents=[Intent.make("查询", attribute=slot)])
        text, spans = _fill(rng.choice(ANSWER_ACCOUNT), slot=slot, value=value)
        vs, ve = spans["value"]
        self.system(
            text,
            triples=[(USER_ENTITY_ID, slot, value, vs, ve)],
            intents=[Intent.make("告知", attribute=slot)],
        )

    def ask_type(self, ent: _EntitySpec) -> None:
        rng = self.rng
        text, _ = _fill(rng.choice(ASK_TYPE), type=ent.etype)
        self.user(text, intents=[Intent.make("查询", entity_type=ent.etype)])
        text, spans = _fill(rng.choice(ANSWER_TYPE), name=ent.name)
        s, e = spans["name"]
        self.system(
            text,
            mentions=[(s, e, ent.name, ent.eid, ent.etype)],
            intents=[Intent.make("告知", entity_type=ent.etype)],
        )

    def handle(self, ent: _EntitySpec) -> None:
        rng = self.rng
        text, spans = _fill(rng.choice(ASK_HANDLE), name=ent.name)
        s, e = spans["name"]
        self.user(
            text,
            mentions=[(s, e, ent.name, ent.eid, ent.etype)],
            intents=[Intent.make("办理", entity_name=ent.name)],
        )
        text, spans = _fill(rng.choice(ANSWER_HANDLE), name=ent.name)
        s, e = spans["name"]
        self.system(
            text,
            mentions=[(s, e, ent.name, ent.eid, ent.etype)],
            intents=[Intent.make("确认", entity_name=ent.name)],
        )

    def build_base(self) -> None:
        rng = self.rng
        entities = self.make_entities()
        if rng.random() < 0.5:
            self.user(rng.choice(GREET_USER), intents=[Intent.make("问候")])
            self.system(rng.choice(GREET_SYSTEM), intents=[Intent.make("问候")])
        if rng.random() < 0.2:
            self.ask_type(entities[0])
        for ent in entities:
            attrs = sorted(ent.attrs)
            n_q = rng.randint(1, min(3, len(attrs)))
            chosen = rng.sample(attrs, n_q)
            for qi, attr in enumerate(chosen):
                allow_pronoun = len(entities) == 1 and qi > 0
                self.ask_attribute(ent, attr, allow_pronoun)
        if rng.random() < 0.4:
            profile = {s: rng.choice(_value_pool(s)) for s in sorted(self.schema.user_slots)}
            picked = rng.sample(sorted(profile), 1)
            self.ask_account({k: profile[k] for k in picked})
        if rng.random() < 0.3:
            self.handle(entities[0])
        if rng.random() < 0.6:
            self.user(rng.choice(BYE_USER), intents=[Intent.make("告别")])
            self.system(rng.choice(BYE_SYSTEM), intents=[Intent.make("再见")])

    # -- redundancy planting --------------------------------------------------

    def plant(self, rate: float) -> None:
        rng = self.plant_rng
        if rate <= 0:
            return
        base = len(self.turns)
        k_star = rate * base / (2.0 * (1.0 - rate))
        k = int(k_star) + (1 if rng.random() < k_star - int(k_star) else 0)
        if k == 0:
            return

        sites: list[tuple[str, int]] = []
        for i, t in enumerate(self.turns):
            if t.speaker == "user" and len(t.text) >= 3:
                sites.append(("repetition", i))
                sites.append(("confirmation", i))
            if t.speaker == "system" and len(t.text) >= 8:
                if self._interjection_cut(t) is not None:
                    sites.append(("interjection", i))
        rng.shuffle(sites)
        chosen: list[tuple[str, int]] = []
        taken: set[int] = set()
        for case, i in sites:
            if len(chosen) == k:
                break
            if i in taken:
                continue
            taken.add(i)
            chosen.append((case, i))
        # apply right-to-left so earlier site indices stay valid
        for case, i in sorted(chosen, key=lambda x: -x[1]):
            if case == "repetition":
                self._plant_repetition(i)
            elif case == "confirmation":
                self._plant_confirmation(i)
            else:
                self._plant_interjection(i)

    def _plant_repetition(self, i: int) -> None:
        req = TurnDraft("system", self.plant_rng.choice(REPETITION_REQUESTS), planted="repetition")
        restate = TurnDraft("user", "我说" + self.turns[i].text, planted="repetition")
        self.turns[i + 1 : i + 1] = [req, restate]

    def _plant_confirmation(self, i: int) -> None:
        echo = TurnDraft("system", self.turns[i].text + "是吗", planted="confirmation")
        ack = TurnDraft("user", CONFIRM_ACK, planted="confirmation")
        self.turns[i + 1 : i + 1] = [echo, ack]

    def _interjection_cut(self, t: TurnDraft) -> int | None:
        """A cut position splitting the text without slicing any annotation."""
        spans = [(m[0], m[1]) for m in t.mentions] + [(tr[3], tr[4]) for tr in t.triples]
        for c in range(3, len(t.text) - 2):
            if all(not (s < c < e) for s, e in spans):
                return c
        return None

    def _plant_interjection(self, i: int) -> None:
        t = self.turns[i]
        c = self._interjection_cut(t)
        assert c is not None
        head = TurnDraft(
            "system",
            t.text[:c],
            mentions=[m for m in t.mentions if m[1] <= c],
            triples=[tr for tr in t.triples if tr[4] <= c],
            intents=list(t.intents),
        )
        tail = TurnDraft(
            "system",
            t.text[c:],
            mentions=[(m[0] - c, m[1] - c, m[2], m[3], m[4]) for m in t.mentions if m[0] >= c],
            triples=[(tr[0], tr[1], tr[2], tr[3] - c, tr[4] - c) for tr in t.triples if tr[3] >= c],
            planted="interjection",
        )
        interj = TurnDraft("user", INTERJECTION_TEXT, planted="interjection")
        self.turns[i : i + 1] = [head, interj, tail]

    # -- freeze ---------------------------------------------------------------

    def to_dialogue(self, d_id: str) -> tuple[Dialogue, list[PlantRecord]]:
        turns = []
        records: list[PlantRecord] = []
        run_case: str | None = None
        run_idxs: list[int] = []

        def close_run() -> None:
            nonlocal run_case, run_idxs
            if run_idxs:
                records.append(PlantRecord(d_id, run_case, tuple(run_idxs)))
            run_case, run_idxs = None, []

        for idx, t in enumerate(self.turns):
            turns.append(
                Turn(
                    index=idx,
                    speaker=t.speaker,
                    text=t.text,
                    mentions=tuple(
                        Mention(idx, s, e, surf, eid, etype) for s, e, surf, eid, etype in t.mentions
                    ),
                    triples=tuple(
                        TripleAnnotation(eid, slot, value, idx, s, e)
                        for eid, slot, value, s, e in t.triples
                    ),
                    intents=tuple(t.intents),
                )
            )
            if t.planted is None:
                close_run()
            else:
                if t.planted != run_case:
                    close_run()
                run_case = t.planted
                run_idxs.append(idx)
        close_run()
        return Dialogue(id=d_id, turns=tuple(turns)), records


def synthesize_dialogue(
    seed: int, index: int, schema: Schema, redundancy_rate: float, for_train: bool
) -> tuple[Dialogue, list[PlantRecord]]:
    rng_base = random.Random(f"{seed}:{index}:base")
    rng_plant = random.Random(f"{seed}:{index}:plant")
    b = _DialogueBuilder(rng_base, schema, for_train, plant_rng=rng_plant)
    b.build_base()
    b.plant(redundancy_rate)
    return b.to_dialogue(f"d{index:04d}")


def synthesize_corpus_with_plants(
    seed: int,
    n_dialogues: int,
    schema: Schema,
    redundancy_rate: float = 0.0,
    split_fractions: tuple[float, float] = (0.8, 0.1),
) -> tuple[CorpusSplit, list[PlantRecord]]:
    """Like synthesize_corpus but also returns the planted-turn records."""
    if n_dialogues < 1:
        raise ValueError("n_dialogues must be >= 1")
    n_train = max(1, int(n_dialogues * split_fractions[0]))
    n_dev = min(int(n_dialogues * split_fractions[1]), n_dialogues - n_train)
    dialogues: list[Dialogue] = []
    plants: list[PlantRecord] = []
    for i in range(n_dialogues):
        d, p = synthesize_dialogue(seed, i, schema, redundancy_rate, for_train=i < n_train)
        dialogues.append(d)
        plants.extend(p)
    split = CorpusSplit(
        train=tuple(dialogues[:n_train]),
        dev=tuple(dialogues[n_train : n_train + n_dev]),
        test=tuple(dialogues[n_train + n_dev :]),
    )
    return split, plants


def synthesize_corpus(
    seed: int, n_dialogues: int, schema: Schema, redundancy_rate: float = 0.0
) -> CorpusSplit:
    """Deterministic synthetic corpus; same (seed, n, schema, rate) -> same corpus."""
    return synthesize_corpus_with_plants(seed, n_dialogues, schema, redundancy_rate)[0]
