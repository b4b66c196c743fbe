"""Per-turn dialogue loop: entity tracking, intent prediction, KB query,
system intent, response.

The conditioning context is a flat string: the entity-name history plus the
current user utterance replace the full dialogue history. Serialization uses
bracketed segment markers; "[" and "\\" in content are escaped, so parsing
is exact and round-trips losslessly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .corpus import Dialogue, Intent, Turn
from .errors import GeneratorError
from .kb import KBResult, LocalKB, UserGoal, build_local_kb, build_user_goal, kb_query, query_from_intent
from .metrics import ScoreReport, bleu, intent_prf, success_rate
from .schema import Schema

SEGMENTS = ("EH", "E", "U", "EN", "UI", "KB", "SI", "R", "A", "V")


def _esc(s: str) -> str:
    return s.replace("\\", "\\\\").replace("[", "\\[")


def _unesc(s: str) -> str:
    out = []
    i = 0
    while i < len(s):
        if s[i] == "\\" and i + 1 < len(s):
            out.append(s[i + 1])
            i += 2
        else:
            out.append(s[i])
            i += 1
    return "".join(out)


def _emit(segments: list[tuple[str, str]]) -> str:
    return "".join(f"[{m}] {_esc(c)}" for m, c in segments)


def _scan(s: str) -> list[tuple[str, str]]:
    """Inverse of _emit: split into (marker, unescaped content) pairs."""
    out: list[tuple[str, str]] = []
    i = 0
    marker = None
    content: list[str] = []
    while i < len(s):
        ch = s[i]
        if ch == "\\" and i + 1 < len(s):
            content.append(s[i + 1])
            i += 2
            continue
        if ch == "[":
            close = s.index("]", i)
            if marker is not None:
                out.append((marker, "".join(content)))
            marker = s[i + 1 : close]
            if marker not in SEGMENTS:
                raise ValueError(f"unknown segment marker {marker!r}")
            content = []
            i = close + 1
            if i < len(s) and s[i] == " ":
                i += 1  # single separator space after the marker
            continue
        content.append(ch)
        i += 1
    if marker is not None:
        out.append((marker, "".join(content)))
    return out


def serialize_turn_context(history, utterance: str) -> str:
    """Flat conditioning string from the entity-name history plus utterance.

    ``history`` is either the name list itself or a sequence of TurnRecords
    (whose last element already carries the accumulated name history).
    """
    names = list(history)
    if names and hasattr(names[-1], "entity_name_history"):
        names = list(names[-1].entity_name_history)
    segments = [("EH", "")]
    segments += [("E", n) for n in names]
    segments.append(("U", utterance))
    return _emit(segments)


def parse_turn_context(s: str) -> tuple[list[str], str]:
    names, utterance = [], ""
    for marker, content in _scan(s):
        if marker == "E":
            names.append(content)
        elif marker == "U":
            utterance = content
    return names, utterance


def _intent_segments(tag: str, intent: Intent) -> list[tuple[str, str]]:
    out = [(tag, intent.name)]
    out += [("A", f"{k} {v}") for k, v in intent.args]
    return out


def _parse_intent(name: str, args: list[str]) -> Intent:
    kwargs = {}
    for a in args:
        k, _, v = a.partition(" ")
        kwargs[k] = v
    return Intent.make(name, **kwargs)


@dataclass(frozen=True)
class TurnRecord:
    entity_name_history: tuple[str, ...]
    user_utterance: str
    predicted_entity: str | None
    user_intent: Intent
    kb_result: KBResult
    system_intent: Intent
    response: str


def serialize_turn_record(rec: TurnRecord) -> str:
    segments = [("EH", "")]
    segments += [("E", n) for n in rec.entity_name_history]
    segments.append(("U", rec.user_utterance))
    segments.append(("EN", rec.predicted_entity or ""))
    segments += _intent_segments("UI", rec.user_intent)
    segments.append(("KB", rec.kb_result.status))
    segments += [("V", v) for v in rec.kb_result.values]
    segments += _intent_segments("SI", rec.system_intent)
    segments.append(("R", rec.response))
    return _emit(segments)


def parse_turn_record(s: str) -> TurnRecord:
    names: list[str] = []
    fields: dict[str, str] = {}
    ui_args: list[str] = []
    si_args: list[str] = []
    kb_values: list[str] = []
    current_intent = None
    for marker, content in _scan(s):
        if marker == "E":
            names.append(content)
        elif marker == "V":
            kb_values.append(content)
        elif marker == "A":
            (ui_args if current_intent == "UI" else si_args).append(content)
        elif marker in ("UI", "SI"):
            current_intent = marker
            fields[marker] = content
        else:
            fields[marker] = content
    return TurnRecord(
        entity_name_history=tuple(names),
        user_utterance=fields.get("U", ""),
        predicted_entity=fields.get("EN") or None,
        user_intent=_parse_intent(fields.get("UI", ""), ui_args),
        kb_result=KBResult(fields.get("KB", "empty"), tuple(kb_values)),
        system_intent=_parse_intent(fields.get("SI", ""), si_args),
        response=fields.get("R", ""),
    )


# ---------------------------------------------------------------------------
# the turn loop

@dataclass
class SessionState:
    entity_names: list[str] = field(default_factory=list)
    records: list[TurnRecord] = field(default_factory=list)


def step_turn(state: SessionState, utterance: str, kb: LocalKB, generator,
              schema: Schema | None = None) -> TurnRecord:
    """Run the five per-turn steps in order and append the record to state.

    The generator only ever sees the flat context string and the KB result
    injected between the user-intent and system-intent stages; it never
    touches the LocalKB itself.
    """
    context = serialize_turn_context(state.entity_names, utterance)
    try:
        predicted_entity, user_intent = generator.user_side(context)
    except GeneratorError:
        raise
    except Exception as e:  # noqa: BLE001
        raise GeneratorError("user_side", str(e)) from e

    query = query_from_intent(user_intent)
    if query is None:
        kb_result = KBResult("empty")
    else:
        kb_result = kb_query(kb, query, schema)

    partial = (
        context
        + _emit([("EN", predicted_entity or "")])
        + _emit(_intent_segments("UI", user_intent))
        + _emit([("KB", kb_result.status)] + [("V", v) for v in kb_result.values])
    )
    try:
        system_intent, response = generator.system_side(partial)
    except GeneratorError:
        raise
    except Exception as e:  # noqa: BLE001
        raise GeneratorError("system_side", str(e)) from e

    if predicted_entity and predicted_entity not in state.entity_names:
        state.entity_names.append(predicted_entity)
    record = TurnRecord(
        entity_name_history=tuple(state.entity_names),
        user_utterance=utterance,
        predicted_entity=predicted_entity,
        user_intent=user_intent,
        kb_result=kb_result,
        system_intent=system_intent,
        response=response,
    )
    state.records.append(record)
    return record


class DialogueSession:
    """One live dialogue against a fixed LocalKB and generator."""

    def __init__(self, kb: LocalKB, generator, schema: Schema | None = None):
        self.kb = kb
        self.generator = generator
        self.schema = schema
        self.state = SessionState()

    @property
    def records(self) -> list[TurnRecord]:
        return self.state.records

    def step(self, utterance: str) -> TurnRecord:
        return step_turn(self.state, utterance, self.kb, self.generator, self.schema)


# ---------------------------------------------------------------------------
# corpus-mode evaluation: oracle user side replayed, system side generated

def evaluate_tod(
    dialogues: list[Dialogue],
    schema: Schema,
    generator_factory,
    notes: dict | None = None,
) -> ScoreReport:
    """Replay each dialogue's user side and score the generated system side.

    ``generator_factory(dialogue, kb)`` returns the generator for one
    dialogue session (oracle generators need the gold dialogue; retrieval
    generators ignore it).
    """
    user_pred, user_gold = [], []
    sys_pred, sys_gold = [], []
    responses, references = [], []
    goal_values, dialogue_responses = [], []

    for d in dialogues:
        kb = build_local_kb(d, schema)
        goal, _ = build_user_goal(d, kb)
        gen = generator_factory(d, kb)
        session = DialogueSession(kb, gen, schema)
        generated: list[str] = []
        for turn in d.turns:
            if turn.speaker != "user":
                continue
            ref = d.turns[turn.index + 1] if turn.index + 1 < len(d.turns) else None
            if ref is not None and ref.speaker != "system":
                ref = None
            rec = session.step(turn.text)
            generated.append(rec.response)
            user_pred.append({rec.user_intent.name} if rec.user_intent.name else set())
            user_gold.append({it.name for it in turn.intents})
            if ref is not None:
                sys_pred.append({rec.system_intent.name} if rec.system_intent.name else set())
                sys_gold.append({it.name for it in ref.intents})
                responses.append(rec.response)
                references.append(ref.text)
        goal_values.append(goal.expected_values())
        dialogue_responses.append(generated)

    return ScoreReport(
        user_prf=intent_prf(user_pred, user_gold),
        sys_prf=intent_prf(sys_pred, sys_gold),
        bleu=bleu(responses, references) if responses else 0.0,
        success=success_rate(goal_values, dialogue_responses),
        notes=notes or {},
    )
