"""Entity-type schema: an inheritance forest with per-type attribute inventories.

The schema drives annotation repair, local-KB typing and slot legality.
Attribute inventories are *effective* sets: a type always carries every
attribute of its ancestors.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError


@dataclass(frozen=True)
class EntityTypeDef:
    name: str
    parent: str | None
    own_attributes: frozenset[str]
    attributes: frozenset[str]  # own plus everything inherited
    depth: int  # root types have depth 0


@dataclass(frozen=True)
class Schema:
    types: dict[str, EntityTypeDef]
    user_slots: frozenset[str]
    intents_user: frozenset[str]
    intents_system: frozenset[str]

    def has_type(self, name: str) -> bool:
        return name in self.types

    def attributes(self, type_name: str) -> frozenset[str]:
        return self.types[type_name].attributes

    def depth(self, type_name: str) -> int:
        return self.types[type_name].depth

    def ancestors(self, type_name: str) -> list[str]:
        """Ancestor chain from parent up to the root, nearest first."""
        out = []
        cur = self.types[type_name].parent
        while cur is not None:
            out.append(cur)
            cur = self.types[cur].parent
        return out

    def is_same_or_descendant(self, type_name: str, ancestor: str) -> bool:
        return type_name == ancestor or ancestor in self.ancestors(type_name)

    def covering_types(self, slots: set[str] | frozenset[str]) -> list[str]:
        """Type names whose effective inventory covers ``slots``, sorted by name."""
        return sorted(n for n, t in self.types.items() if slots <= t.attributes)

    def all_attributes(self) -> list[str]:
        """Every entity attribute plus every user slot, sorted."""
        out: set[str] = set(self.user_slots)
        for t in self.types.values():
            out |= t.attributes
        return sorted(out)

    def root_types(self) -> list[str]:
        return sorted(n for n, t in self.types.items() if t.parent is None)


def build_schema(
    type_rows: list[dict],
    user_slots: list[str] | None = None,
    user_intents: list[str] | None = None,
    system_intents: list[str] | None = None,
) -> Schema:
    """Assemble a Schema from raw rows, resolving inheritance.

    Each row: {"name": str, "parent": str|None, "attributes": [str, ...]}.
    Raises ValidationError on duplicate names, unknown parents or cycles.
    """
    by_name: dict[str, dict] = {}
    for row in type_rows:
        name = row["name"]
        if name in by_name:
            raise ValidationError(f"duplicate type name {name!r}", rule="schema.unique-names")
        by_name[name] = row

    for row in type_rows:
        parent = row.get("parent")
        if parent is not None and parent not in by_name:
            raise ValidationError(
                f"type {row['name']!r} names unknown parent {parent!r}", rule="schema.parent-exists"
            )

    # Walk each parent chain; a revisit inside one walk means a cycle.
    resolved: dict[str, EntityTypeDef] = {}

    def resolve(name: str, trail: tuple[str, ...]) -> EntityTypeDef:
        if name in resolved:
            return resolved[name]
        if name in trail:
            raise ValidationError(f"type inheritance cycle through {name!r}", rule="schema.acyclic")
        row = by_name[name]
        own = frozenset(row.get("attributes", ()))
        parent = row.get("parent")
        if parent is None:
            t = EntityTypeDef(name, None, own, own, depth=0)
        else:
            p = resolve(parent, trail + (name,))
            t = EntityTypeDef(name, parent, own, own | p.attributes, depth=p.depth + 1)
        resolved[name] = t
        return t

    for name in by_name:
        resolve(name, ())

    return Schema(
        types=resolved,
        user_slots=frozenset(user_slots or ()),
        intents_user=frozenset(user_intents or ()),
        intents_system=frozenset(system_intents or ()),
    )


def load_schema(path: str | Path) -> Schema:
    """Load a schema file: {"types": [...], "user_slots": [...], "user_intents": [...], "system_intents": [...]}."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return build_schema(
        raw["types"],
        user_slots=raw.get("user_slots"),
        user_intents=raw.get("user_intents"),
        system_intents=raw.get("system_intents"),
    )


def write_schema(schema: Schema, path: str | Path) -> None:
    rows = [
        {"name": t.name, "parent": t.parent, "attributes": sorted(t.own_attributes)}
        for t in sorted(schema.types.values(), key=lambda t: (t.depth, t.name))
    ]
    doc = {
        "types": rows,
        "user_slots": sorted(schema.user_slots),
        "user_intents": sorted(schema.intents_user),
        "system_intents": sorted(schema.intents_system),
    }
    Path(path).write_text(json.dumps(doc, ensure_ascii=False, indent=2), encoding="utf-8")


def example_schema() -> Schema:
    """The mobile customer-service schema shipped for demos and synthesis.

    Illustrative only; real deployments supply their own schema file.
    """
    return build_schema(
        [
            {"name": "套餐", "parent": None, "attributes": ["价格", "流量", "通话时长"]},
            {"name": "主套餐", "parent": "套餐", "attributes": ["月租"]},
            {"name": "流量包", "parent": "套餐", "attributes": ["有效期"]},
            {"name": "业务", "parent": None, "attributes": ["资费", "办理方式"]},
        ],
        user_slots=["余额", "话费", "欠费"],
        user_intents=["问候", "查询", "办理", "告别"],
        system_intents=["问候", "告知", "确认", "抱歉", "再见"],
    )
