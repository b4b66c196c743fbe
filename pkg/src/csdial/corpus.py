"""Dialogue data model, JSON ingestion/validation and schema-driven type repair.

Spans are half-open character ranges [start, end) counted in Unicode scalar
values, never bytes. All corpus values are frozen; transforms return new
objects.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

from .errors import CorpusError, ValidationError
from .schema import Schema

# Reserved coreference-cluster id for the user's own account; triples under
# this id describe the user profile rather than a mentioned entity.
USER_ENTITY_ID = "user"

SPLITS = ("train", "dev", "test")


@dataclass(frozen=True)
class Mention:
    turn: int
    start: int
    end: int
    surface: str
    entity_id: str
    entity_type: str


@dataclass(frozen=True)
class TripleAnnotation:
    entity_id: str
    slot: str
    value: str
    turn: int
    start: int
    end: int


@dataclass(frozen=True)
class Intent:
    name: str
    args: tuple[tuple[str, str], ...] = ()  # sorted (key, value) pairs

    ARG_KEYS = ("entity_name", "attribute", "entity_type")

    @classmethod
    def make(cls, name: str, **args: str | None) -> "Intent":
        pairs = tuple(sorted((k, v) for k, v in args.items() if v is not None))
        return cls(name, pairs)

    def arg(self, key: str) -> str | None:
        for k, v in self.args:
            if k == key:
                return v
        return None

    @property
    def entity_name(self) -> str | None:
        return self.arg("entity_name")

    @property
    def attribute(self) -> str | None:
        return self.arg("attribute")

    @property
    def entity_type(self) -> str | None:
        return self.arg("entity_type")


@dataclass(frozen=True)
class Turn:
    index: int
    speaker: str  # "user" | "system"
    text: str
    mentions: tuple[Mention, ...] = ()
    triples: tuple[TripleAnnotation, ...] = ()
    intents: tuple[Intent, ...] = ()


@dataclass(frozen=True)
class Dialogue:
    id: str
    turns: tuple[Turn, ...]

    def user_turns(self) -> list[Turn]:
        return [t for t in self.turns if t.speaker == "user"]

    def mentions(self) -> list[Mention]:
        return [m for t in self.turns for m in t.mentions]

    def triples(self) -> list[TripleAnnotation]:
        return [tr for t in self.turns for tr in t.triples]


@dataclass(frozen=True)
class CorpusSplit:
    train: tuple[Dialogue, ...] = ()
    dev: tuple[Dialogue, ...] = ()
    test: tuple[Dialogue, ...] = ()

    def all_dialogues(self) -> list[Dialogue]:
        return list(self.train) + list(self.dev) + list(self.test)


# ---------------------------------------------------------------------------
# validation

def _check_span(d_id: str, where: str, start: int, end: int, text: str) -> None:
    if not (0 <= start < end <= len(text)):
        raise ValidationError(
            f"{where}: span out of bounds ({start},{end}) for text of length {len(text)}",
            dialogue_id=d_id,
            rule="span-bounds",
        )


def validate_dialogue(d: Dialogue, schema: Schema) -> None:
    """Raise ValidationError on the first violated invariant."""
    for i, turn in enumerate(d.turns):
        if turn.index != i:
            raise ValidationError(
                f"turn indices not contiguous: position {i} has index {turn.index}",
                dialogue_id=d.id,
                rule="turn-indices",
            )
        if turn.speaker not in ("user", "system"):
            raise ValidationError(
                f"turn {i}: bad speaker {turn.speaker!r}", dialogue_id=d.id, rule="speaker"
            )

    cluster_types: dict[str, str] = {}
    for turn in d.turns:
        for m in turn.mentions:
            if m.turn != turn.index:
                raise ValidationError(
                    f"mention {m.surface!r} carries turn {m.turn}, found in turn {turn.index}",
                    dialogue_id=d.id,
                    rule="mention-turn",
                )
            _check_span(d.id, f"turn {turn.index} mention {m.surface!r}", m.start, m.end, turn.text)
            if turn.text[m.start : m.end] != m.surface:
                raise ValidationError(
                    f"mention surface {m.surface!r} != text slice "
                    f"{turn.text[m.start:m.end]!r} at turn {turn.index}",
                    dialogue_id=d.id,
                    rule="mention-surface",
                )
            if not schema.has_type(m.entity_type):
                raise ValidationError(
                    f"mention {m.surface!r}: unknown entity type {m.entity_type!r}",
                    dialogue_id=d.id,
                    rule="mention-type",
                )
            cluster_types.setdefault(m.entity_id, m.entity_type)

    for turn in d.turns:
        for tr in turn.triples:
            if tr.turn != turn.index:
                raise ValidationError(
                    f"triple {tr.slot!r} carries turn {tr.turn}, found in turn {turn.index}",
                    dialogue_id=d.id,
                    rule="triple-turn",
                )
            _check_span(d.id, f"turn {turn.index} triple {tr.slot!r}", tr.start, tr.end, turn.text)
            if turn.text[tr.start : tr.end] != tr.value:
                raise ValidationError(
                    f"triple value {tr.value!r} != text slice at turn {turn.index}",
                    dialogue_id=d.id,
                    rule="triple-value",
                )
            if tr.entity_id == USER_ENTITY_ID:
                if tr.slot not in schema.user_slots:
                    raise ValidationError(
                        f"user-profile triple with non-user slot {tr.slot!r}",
                        dialogue_id=d.id,
                        rule="triple-slot",
                    )
            else:
                etype = cluster_types.get(tr.entity_id)
                if etype is None:
                    raise ValidationError(
                        f"triple refers to entity {tr.entity_id!r} with no mention",
                        dialogue_id=d.id,
                        rule="triple-entity",
                    )
                if tr.slot not in schema.attributes(etype):
                    raise ValidationError(
                        f"slot {tr.slot!r} illegal for type {etype!r}",
                        dialogue_id=d.id,
                        rule="triple-slot",
                    )

    for turn in d.turns:
        inventory = schema.intents_user if turn.speaker == "user" else schema.intents_system
        for it in turn.intents:
            if it.name not in inventory:
                raise ValidationError(
                    f"turn {turn.index}: intent {it.name!r} not in {turn.speaker} inventory",
                    dialogue_id=d.id,
                    rule="intent-name",
                )
            for k, _ in it.args:
                if k not in Intent.ARG_KEYS:
                    raise ValidationError(
                        f"intent {it.name!r}: unknown arg key {k!r}",
                        dialogue_id=d.id,
                        rule="intent-args",
                    )


# ---------------------------------------------------------------------------
# JSON (de)serialization

def dialogue_to_json(d: Dialogue) -> dict:
    return {
        "id": d.id,
        "turns": [
            {
                "index": t.index,
                "speaker": t.speaker,
                "text": t.text,
                "mentions": [
                    {
                        "start": m.start,
                        "end": m.end,
                        "surface": m.surface,
                        "entity_id": m.entity_id,
                        "entity_type": m.entity_type,
                    }
                    for m in t.mentions
                ],
                "triples": [
                    {
                        "entity_id": tr.entity_id,
                        "slot": tr.slot,
                        "value": tr.value,
                        "start": tr.start,
                        "end": tr.end,
                    }
                    for tr in t.triples
                ],
                "intents": [
                    {"name": it.name, "args": dict(it.args)} for it in t.intents
                ],
            }
            for t in d.turns
        ],
    }


def dialogue_from_json(raw: dict) -> Dialogue:
    turns = []
    for t in raw["turns"]:
        idx = t["index"]
        turns.append(
            Turn(
                index=idx,
                speaker=t["speaker"],
                text=t["text"],
                mentions=tuple(
                    Mention(idx, m["start"], m["end"], m["surface"], m["entity_id"], m["entity_type"])
                    for m in t.get("mentions", ())
                ),
                triples=tuple(
                    TripleAnnotation(tr["entity_id"], tr["slot"], tr["value"], idx, tr["start"], tr["end"])
                    for tr in t.get("triples", ())
                ),
                intents=tuple(
                    Intent.make(it["name"], **it.get("args", {})) for it in t.get("intents", ())
                ),
            )
        )
    return Dialogue(id=raw["id"], turns=tuple(turns))


def load_corpus(path: str | Path, schema: Schema) -> CorpusSplit:
    """Load every ``*.json`` corpus file under ``path`` into a validated split.

    Each file holds {"split": "train"|"dev"|"test", "dialogues": [...]}.
    The name ``schema.json`` is reserved for a co-located schema file and is
    skipped.
    """
    root = Path(path)
    if not root.is_dir():
        raise CorpusError(f"corpus path {root} is not a directory")
    buckets: dict[str, list[Dialogue]] = {s: [] for s in SPLITS}
    seen_ids: dict[str, str] = {}
    for file in sorted(root.glob("*.json")):
        if file.name == "schema.json":
            continue
        try:
            raw = json.loads(file.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise CorpusError(f"{file}:{e.lineno}:{e.colno}: malformed JSON: {e.msg}") from e
        split = raw.get("split")
        if split not in SPLITS:
            raise CorpusError(f"{file}: bad split tag {split!r}")
        for rd in raw.get("dialogues", ()):
            d = dialogue_from_json(rd)
            if d.id in seen_ids:
                raise ValidationError(
                    f"dialogue id also present in split {seen_ids[d.id]!r}",
                    dialogue_id=d.id,
                    rule="split-disjoint",
                )
            validate_dialogue(d, schema)
            seen_ids[d.id] = split
            buckets[split].append(d)
    return CorpusSplit(
        train=tuple(buckets["train"]), dev=tuple(buckets["dev"]), test=tuple(buckets["test"])
    )


def write_corpus(split: CorpusSplit, path: str | Path) -> None:
    """Write one JSON file per non-empty split under ``path``."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    for name in SPLITS:
        dialogues = getattr(split, name)
        doc = {"split": name, "dialogues": [dialogue_to_json(d) for d in dialogues]}
        (root / f"{name}.json").write_text(
            json.dumps(doc, ensure_ascii=False, indent=1), encoding="utf-8"
        )


# ---------------------------------------------------------------------------
# annotation repair

@dataclass(frozen=True)
class RepairDiagnostic:
    dialogue_id: str
    entity_id: str
    old_type: str
    new_type: str | None  # None when unrepairable
    observed_slots: tuple[str, ...]


def repair_entity_types(
    d: Dialogue, schema: Schema, diagnostics: list[RepairDiagnostic] | None = None
) -> Dialogue:
    """Retype every entity cluster to the most fine-grained covering type.

    The winner is the deepest type whose effective attribute inventory covers
    all slots observed for the cluster in this dialogue. Depth ties keep the
    original annotation when it qualifies, else take the lexicographically
    smallest name. Clusters no type can cover are left unchanged and reported
    through ``diagnostics``.
    """
    observed: dict[str, set[str]] = {}
    for tr in d.triples():
        if tr.entity_id != USER_ENTITY_ID:
            observed.setdefault(tr.entity_id, set()).add(tr.slot)

    current: dict[str, str] = {}
    for m in d.mentions():
        current.setdefault(m.entity_id, m.entity_type)

    retyped: dict[str, str] = {}
    for entity_id, old_type in current.items():
        slots = observed.get(entity_id, set())
        if not slots:  # no evidence, leave the annotation alone
            continue
        candidates = schema.covering_types(slots)
        if not candidates:
            if diagnostics is not None:
                diagnostics.append(
                    RepairDiagnostic(d.id, entity_id, old_type, None, tuple(sorted(slots)))
                )
            continue
        max_depth = max(schema.depth(c) for c in candidates)
        deepest = [c for c in candidates if schema.depth(c) == max_depth]
        new_type = old_type if old_type in deepest else deepest[0]
        if new_type != old_type:
            retyped[entity_id] = new_type
            if diagnostics is not None:
                diagnostics.append(
                    RepairDiagnostic(d.id, entity_id, old_type, new_type, tuple(sorted(slots)))
                )

    if not retyped:
        return d
    new_turns = tuple(
        replace(
            t,
            mentions=tuple(
                replace(m, entity_type=retyped.get(m.entity_id, m.entity_type)) for m in t.mentions
            ),
        )
        for t in d.turns
    )
    return replace(d, turns=new_turns)
