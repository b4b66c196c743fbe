"""Per-dialogue local knowledge base, user goal, and the three-mode query.

The local KB is built by folding every entity/attribute annotation of one
dialogue into a sequence of typed entities plus a user profile. The user
goal is derived from user-side query intents and drives Success scoring.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import USER_ENTITY_ID, Dialogue, Intent
from .schema import Schema

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class KBEntity:
    id: str
    type: str
    name: str
    attributes: tuple[tuple[str, str], ...]  # (slot, value) pairs, insertion order

    def get(self, slot: str) -> str | None:
        for s, v in self.attributes:
            if s == slot:
                return v
        return None


@dataclass(frozen=True)
class LocalKB:
    entities: tuple[KBEntity, ...]
    user_profile: tuple[tuple[str, str], ...] = ()

    def entity_by_id(self, eid: str) -> KBEntity | None:
        for e in self.entities:
            if e.id == eid:
                return e
        return None

    def profile_get(self, slot: str) -> str | None:
        for s, v in self.user_profile:
            if s == slot:
                return v
        return None

    def to_json(self) -> dict:
        return {
            "entities": [
                {"id": e.id, "type": e.type, "name": e.name, "attributes": dict(e.attributes)}
                for e in self.entities
            ],
            "user_profile": dict(self.user_profile),
        }

    @classmethod
    def from_json(cls, raw: dict) -> "LocalKB":
        return cls(
            entities=tuple(
                KBEntity(e["id"], e["type"], e["name"], tuple(e["attributes"].items()))
                for e in raw["entities"]
            ),
            user_profile=tuple(raw.get("user_profile", {}).items()),
        )


@dataclass(frozen=True)
class GoalTarget:
    entity: str  # entity name, or the reserved user id for profile slots
    attribute: str
    expected_value: str


@dataclass(frozen=True)
class UserGoal:
    requested: tuple[GoalTarget, ...]
    intents: tuple[str, ...]  # user intent names in order of first occurrence

    def expected_values(self) -> list[str]:
        return [t.expected_value for t in self.requested]

    def to_json(self) -> dict:
        return {
            "requested": [
                {"entity": t.entity, "attribute": t.attribute, "expected_value": t.expected_value}
                for t in self.requested
            ],
            "intents": list(self.intents),
        }

    @classmethod
    def from_json(cls, raw: dict) -> "UserGoal":
        return cls(
            requested=tuple(
                GoalTarget(t["entity"], t["attribute"], t["expected_value"])
                for t in raw.get("requested", ())
            ),
            intents=tuple(raw.get("intents", ())),
        )


@dataclass(frozen=True)
class KBQuery:
    mode: str  # attribute_of_entity | entities_of_type | user_attribute
    entity_name: str | None = None
    attribute: str | None = None
    entity_type: str | None = None

    def __post_init__(self):
        if self.mode == "attribute_of_entity":
            ok = self.entity_name is not None and self.attribute is not None
        elif self.mode == "entities_of_type":
            ok = self.entity_type is not None
        elif self.mode == "user_attribute":
            ok = self.attribute is not None
        else:
            ok = False
        if not ok:
            raise ValueError(f"malformed query for mode {self.mode!r}")


@dataclass(frozen=True)
class KBResult:
    status: str  # found | no_entity | no_attribute | empty
    values: tuple[str, ...] = ()

    def __post_init__(self):
        if (self.status == "found") != bool(self.values):
            raise ValueError("status 'found' iff values non-empty")

    def to_json(self) -> dict:
        return {"status": self.status, "values": list(self.values)}

    @classmethod
    def from_json(cls, raw: dict) -> "KBResult":
        return cls(raw["status"], tuple(raw.get("values", ())))


# ---------------------------------------------------------------------------

def build_local_kb(d: Dialogue, schema: Schema) -> LocalKB:
    """Fold a (repaired) dialogue's annotations into its local KB.

    Entity name is the most frequent mention surface (ties break to the
    earliest occurrence); repeated slots keep the latest value, with the
    conflict logged. User-account triples populate the user profile.
    """
    # mention surface frequencies per cluster, in document order
    counts: dict[str, dict[str, int]] = {}
    first_seen: dict[tuple[str, str], int] = {}
    etypes: dict[str, str] = {}
    order: list[str] = []
    pos = 0
    for turn in d.turns:
        for m in turn.mentions:
            c = counts.setdefault(m.entity_id, {})
            c[m.surface] = c.get(m.surface, 0) + 1
            first_seen.setdefault((m.entity_id, m.surface), pos)
            if m.entity_id not in etypes:
                etypes[m.entity_id] = m.entity_type
                order.append(m.entity_id)
            pos += 1

    attributes: dict[str, dict[str, str]] = {eid: {} for eid in order}
    profile: dict[str, str] = {}
    for turn in d.turns:
        for tr in turn.triples:
            target = profile if tr.entity_id == USER_ENTITY_ID else attributes.get(tr.entity_id)
            if target is None:
                log.warning("dialogue %s: triple for unmentioned entity %s dropped from KB",
                            d.id, tr.entity_id)
                continue
            if tr.slot in target and target[tr.slot] != tr.value:
                log.info("dialogue %s: slot %s of %s overwritten: %r -> %r",
                         d.id, tr.slot, tr.entity_id, target[tr.slot], tr.value)
            target[tr.slot] = tr.value

    entities = []
    for eid in order:
        surfaces = counts[eid]
        name = min(surfaces, key=lambda s: (-surfaces[s], first_seen[(eid, s)]))
        entities.append(
            KBEntity(id=eid, type=etypes[eid], name=name, attributes=tuple(attributes[eid].items()))
        )
    return LocalKB(entities=tuple(entities), user_profile=tuple(profile.items()))


def query_from_intent(intent: Intent) -> KBQuery | None:
    """Convert a query intent's args to a KBQuery; None when args don't form one."""
    name, attr, etype = intent.entity_name, intent.attribute, intent.entity_type
    if name and attr:
        return KBQuery("attribute_of_entity", entity_name=name, attribute=attr)
    if etype:
        return KBQuery("entities_of_type", entity_type=etype)
    if attr:
        return KBQuery("user_attribute", attribute=attr)
    return None


def build_user_goal(d: Dialogue, kb: LocalKB) -> tuple[UserGoal, list[str]]:
    """Derive the evaluation goal from user-side intents.

    Returns the goal plus diagnostics for targets whose values could not be
    resolved in the KB (those are excluded from the goal).
    """
    targets: list[GoalTarget] = []
    intent_names: list[str] = []
    diagnostics: list[str] = []
    by_name = {e.name: e for e in kb.entities}
    for turn in d.user_turns():
        for it in turn.intents:
            if it.name not in intent_names:
                intent_names.append(it.name)
            q = query_from_intent(it)
            if q is None:
                continue
            if q.mode == "attribute_of_entity":
                ent = by_name.get(q.entity_name)
                value = ent.get(q.attribute) if ent else None
                if value is None:
                    diagnostics.append(
                        f"turn {turn.index}: no KB value for ({q.entity_name}, {q.attribute})"
                    )
                    continue
                target = GoalTarget(q.entity_name, q.attribute, value)
                if target not in targets:
                    targets.append(target)
            elif q.mode == "user_attribute":
                value = kb.profile_get(q.attribute)
                if value is None:
                    diagnostics.append(f"turn {turn.index}: no profile value for {q.attribute}")
                    continue
                target = GoalTarget(USER_ENTITY_ID, q.attribute, value)
                if target not in targets:
                    targets.append(target)
            # entities_of_type queries carry no expected value
    return UserGoal(requested=tuple(targets), intents=tuple(intent_names)), diagnostics


def kb_query(kb: LocalKB, q: KBQuery, schema: Schema | None = None) -> KBResult:
    """Execute one query against an immutable LocalKB.

    Entity lookup tries exact name match first, then a unique-substring
    match. entities_of_type honors schema inheritance when a schema is given.
    """
    if q.mode == "attribute_of_entity":
        ent = _find_entity(kb, q.entity_name)
        if ent is None:
            return KBResult("no_entity")
        value = ent.get(q.attribute)
        if value is None:
            return KBResult("no_attribute")
        return KBResult("found", (value,))

    if q.mode == "entities_of_type":
        names = []
        for e in kb.entities:
            if e.type == q.entity_type or (
                schema is not None
                and schema.has_type(e.type)
                and schema.has_type(q.entity_type)
                and schema.is_same_or_descendant(e.type, q.entity_type)
            ):
                names.append(e.name)
        if not names:
            return KBResult("empty")
        return KBResult("found", tuple(names))

    if q.mode == "user_attribute":
        value = kb.profile_get(q.attribute)
        if value is None:
            return KBResult("empty")
        return KBResult("found", (value,))

    raise ValueError(f"unknown query mode {q.mode!r}")


def _find_entity(kb: LocalKB, name: str) -> KBEntity | None:
    for e in kb.entities:
        if e.name == name:
            return e
    # unique-substring fallback: the query names part of exactly one entity
    hits = [e for e in kb.entities if name in e.name or e.name in name]
    if len(hits) == 1:
        return hits[0]
    return None


def write_local_kbs(dialogues: list[Dialogue], schema: Schema, out_dir: str | Path) -> list[Path]:
    """Emit one local-KB JSON per dialogue; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for d in dialogues:
        kb = build_local_kb(d, schema)
        path = out / f"{d.id}.json"
        path.write_text(json.dumps(kb.to_json(), ensure_ascii=False, indent=1), encoding="utf-8")
        written.append(path)
    return written
