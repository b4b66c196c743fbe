"""Response generators behind the runtime's two-stage interface.

Every generator implements ``user_side(context) -> (predicted_entity,
user_intent)`` and ``system_side(context) -> (system_intent, response)``
over the flat serialized context; the KB result arrives inside the
system-side context. The retrieval/template generator is the offline
desk-scale baseline; an external sequence model can be plugged in over the
same line-delimited JSON socket protocol as the external encoder.
"""
from __future__ import annotations

import json
import socket
from dataclasses import dataclass
from pathlib import Path

from .cleaning import char_bigram_dice
from .corpus import Dialogue, Intent
from .errors import GeneratorError
from .runtime import _parse_intent, _scan, parse_turn_context

APOLOGY = "抱歉这边没有查询到相关的信息"


class OracleGenerator:
    """Replays one gold dialogue's annotations; used for oracle evaluation."""

    def __init__(self, dialogue: Dialogue, kb):
        self._user_turns = [t for t in dialogue.turns if t.speaker == "user"]
        self._turns = dialogue.turns
        self._names = {e.id: e.name for e in kb.entities}
        self._i = 0

    def user_side(self, context: str) -> tuple[str | None, Intent]:
        turn = self._user_turns[self._i]
        entity = None
        if turn.mentions:
            entity = self._names.get(turn.mentions[0].entity_id, turn.mentions[0].surface)
        intent = turn.intents[0] if turn.intents else Intent.make("")
        return entity, intent

    def system_side(self, context: str) -> tuple[Intent, str]:
        turn = self._user_turns[self._i]
        self._i += 1
        nxt = self._turns[turn.index + 1] if turn.index + 1 < len(self._turns) else None
        if nxt is None or nxt.speaker != "system":
            return Intent.make(""), ""
        intent = nxt.intents[0] if nxt.intents else Intent.make("")
        return intent, nxt.text


@dataclass(frozen=True)
class IndexEntry:
    utterance: str
    user_intent: Intent
    system_intent: Intent
    response: str
    template: str  # response with answer-slot values replaced by {slot}
    answer_slot: str | None

    def to_json(self) -> dict:
        return {
            "utterance": self.utterance,
            "user_intent": {"name": self.user_intent.name, "args": dict(self.user_intent.args)},
            "system_intent": {"name": self.system_intent.name, "args": dict(self.system_intent.args)},
            "response": self.response,
            "template": self.template,
            "answer_slot": self.answer_slot,
        }

    @classmethod
    def from_json(cls, raw: dict) -> "IndexEntry":
        return cls(
            utterance=raw["utterance"],
            user_intent=Intent.make(raw["user_intent"]["name"], **raw["user_intent"]["args"]),
            system_intent=Intent.make(raw["system_intent"]["name"], **raw["system_intent"]["args"]),
            response=raw["response"],
            template=raw["template"],
            answer_slot=raw["answer_slot"],
        )


class RetrievalGenerator:
    """Nearest-neighbor intent lookup plus slot-template response filling.

    The index holds every (user turn, following system turn) pair from the
    training split. At serve time the user intent comes from the closest
    training utterance by character-bigram similarity with its entity
    argument rebound to the predicted entity; the response is the neighbor's
    system side with the answer slot filled from the KB result.
    """

    def __init__(self, entries: list[IndexEntry], known_names: list[str]):
        if not entries:
            raise GeneratorError("index", "empty retrieval index")
        self.entries = entries
        self.known_names = sorted(set(known_names), key=lambda n: (-len(n), n))
        self._pending: IndexEntry | None = None

    # -- construction -----------------------------------------------------------

    @classmethod
    def build(cls, dialogues: list[Dialogue]) -> "RetrievalGenerator":
        entries: list[IndexEntry] = []
        names: set[str] = set()
        for d in dialogues:
            for t in d.turns:
                for m in t.mentions:
                    if len(m.surface) >= 2:  # pronouns are not usable entity names
                        names.add(m.surface)
            for t in d.turns:
                if t.speaker != "user" or t.index + 1 >= len(d.turns):
                    continue
                nxt = d.turns[t.index + 1]
                if nxt.speaker != "system":
                    continue
                user_intent = t.intents[0] if t.intents else Intent.make("")
                sys_intent = nxt.intents[0] if nxt.intents else Intent.make("")
                answer_slot = user_intent.attribute
                template = nxt.text
                if answer_slot:
                    for tr in sorted(nxt.triples, key=lambda tr: -tr.start):
                        if tr.slot == answer_slot:
                            template = template[: tr.start] + "{" + tr.slot + "}" + template[tr.end :]
                entries.append(
                    IndexEntry(t.text, user_intent, sys_intent, nxt.text, template, answer_slot)
                )
        return cls(entries, sorted(names))

    def save(self, path: str | Path) -> None:
        doc = {"entries": [e.to_json() for e in self.entries], "known_names": self.known_names}
        Path(path).write_text(json.dumps(doc, ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "RetrievalGenerator":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls([IndexEntry.from_json(e) for e in raw["entries"]], raw["known_names"])

    # -- the two generation stages ------------------------------------------------

    def _nearest(self, utterance: str) -> IndexEntry:
        best, best_score = self.entries[0], -1.0
        for e in self.entries:
            score = char_bigram_dice(utterance, e.utterance)
            if score > best_score:
                best, best_score = e, score
        return best

    def _predict_entity(self, history: list[str], utterance: str) -> str | None:
        for name in self.known_names:
            if name in utterance:
                return name
        for name in reversed(history):
            if name in utterance:
                return name
        for name in reversed(history):
            if self._unique_fragment(name, utterance, history):
                return name
        if history:
            return history[-1]
        return None

    @staticmethod
    def _unique_fragment(name: str, utterance: str, history: list[str]) -> bool:
        for length in range(len(name) - 1, 1, -1):
            for start in range(0, len(name) - length + 1):
                frag = name[start : start + length]
                if frag in utterance and sum(frag in h for h in history) == 1:
                    return True
        return False

    def user_side(self, context: str) -> tuple[str | None, Intent]:
        history, utterance = parse_turn_context(context)
        entry = self._nearest(utterance)
        self._pending = entry
        predicted = self._predict_entity(history, utterance)
        kwargs: dict[str, str | None] = {}
        if entry.user_intent.attribute:
            kwargs["attribute"] = entry.user_intent.attribute
        if entry.user_intent.entity_type:
            kwargs["entity_type"] = entry.user_intent.entity_type
        if entry.user_intent.entity_name and predicted:
            kwargs["entity_name"] = predicted
        return predicted, Intent.make(entry.user_intent.name, **kwargs)


    def system_side(self, context: str) -> tuple[Intent, str]:
        entry = self._pending or self._nearest(parse_turn_context(context)[1])
        self._pending = None
        status = "empty"
        values: list[str] = []
        predicted = None
        for marker, content in _scan(context):
            if marker == "KB":
                status = content
            elif marker == "V":
                values.append(content)
            elif marker == "EN":
                predicted = content or None
        kwargs: dict[str, str | None] = {}
        if entry.system_intent.attribute:
            kwargs["attribute"] = entry.system_intent.attribute
        if entry.system_intent.entity_type:
            kwargs["entity_type"] = entry.system_intent.entity_type
        if entry.system_intent.entity_name and predicted:
            kwargs["entity_name"] = predicted
        intent = Intent.make(entry.system_intent.name, **kwargs)

        if "{" not in entry.template:
            return intent, entry.response
        if status == "found" and entry.answer_slot:
            filled = entry.template.replace("{" + entry.answer_slot + "}", "、".join(values))
            return intent, filled
        return Intent.make("抱歉"), APOLOGY

    def reset(self) -> None:
        self._pending = None


class ExternalGeneratorClient:
    """Generator proxied over the line-delimited JSON socket protocol.

    user stage:   {"stage": "user", "context": "..."} ->
                  {"predicted_entity": str|null, "intent": {"name":..., "args": {...}}}
    system stage: {"stage": "system", "context": "..."} ->
                  {"intent": {...}, "response": "..."}
    """

    def __init__(self, host: str, port: int, timeout: float = 30.0):
        self.host = host
        self.port = port
        self.timeout = timeout

    def _call(self, payload: dict) -> dict:
        data = json.dumps(payload, ensure_ascii=False) + "\n"
        try:
            with socket.create_connection((self.host, self.port), timeout=self.timeout) as sock:
                sock.sendall(data.encode("utf-8"))
                buf = b""
                while not buf.endswith(b"\n"):
                    chunk = sock.recv(65536)
                    if not chunk:
                        break
                    buf += chunk
        except OSError as e:
            raise GeneratorError("transport", str(e)) from e
        return json.loads(buf.decode("utf-8"))

    def user_side(self, context: str) -> tuple[str | None, Intent]:
        raw = self._call({"stage": "user", "context": context})
        intent = Intent.make(raw["intent"]["name"], **raw["intent"].get("args", {}))
        return raw.get("predicted_entity"), intent

    def system_side(self, context: str) -> tuple[Intent, str]:
        raw = self._call({"stage": "system", "context": context})
        intent = Intent.make(raw["intent"]["name"], **raw["intent"].get("args", {}))
        return intent, raw["response"]
