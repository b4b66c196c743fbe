"""Redundant-turn detection and removal for spoken-transcript dialogues.

Three cases are handled: a speaker asks for repetition and the other restates
(repetition), a speaker echoes information and the other passively acks
(confirmation), and a bare user interjection splitting a continued system
utterance (interjection). Repetition and confirmation delete the whole
two-turn exchange; interjection deletes the user turn and folds the following
system utterance onto the previous one, remapping annotation spans.

Detection is lexicon-plus-overlap heuristics; every knob lives in
CleaningConfig and nothing here is normative beyond the defaults working on
the reference transcript fixtures.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .corpus import Dialogue, Turn
from .errors import CleaningError

REPETITION_LEXICON = ("再说一下", "再说一遍", "再讲一遍", "重复一下", "没听清", "再说下")
# Ack and interjection lexicons are disjoint on purpose: an exact-match token
# can only ever fire one rule, which keeps the case precedence meaningful.
ACK_LEXICON = ("对", "对的", "对对", "是的", "是", "没错", "好的")
INTERJECTION_LEXICON = ("嗯", "哦", "啊", "呃", "嗯嗯", "哦哦", "呃呃")


@dataclass(frozen=True)
class CleaningConfig:
    overlap_threshold: float = 0.5
    ack_len: int = 4
    interjection_len: int = 2
    echo_window: int = 1  # how many turns before i-1 may be the echo source
    repetition_lexicon: tuple[str, ...] = REPETITION_LEXICON
    ack_lexicon: tuple[str, ...] = ACK_LEXICON
    interjection_lexicon: tuple[str, ...] = INTERJECTION_LEXICON

    @classmethod
    def from_json(cls, path: str | Path) -> "CleaningConfig":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()}
        return cls(**kwargs)


@dataclass(frozen=True)
class RedundancyVerdict:
    case: str  # repetition | confirmation | interjection | none
    turn_index: int
    evidence: str  # rule that fired; empty iff case == "none"


@dataclass
class CleaningStats:
    original_turns: int = 0
    final_turns: int = 0
    turns_removed: int = 0
    turns_merged: int = 0
    repetition: int = 0
    confirmation: int = 0
    interjection: int = 0

    @property
    def percent_removed(self) -> float:
        if self.original_turns == 0:
            return 0.0
        return (self.original_turns - self.final_turns) / self.original_turns

    def add(self, other: "CleaningStats") -> None:
        for name in ("original_turns", "final_turns", "turns_removed", "turns_merged",
                     "repetition", "confirmation", "interjection"):
            setattr(self, name, getattr(self, name) + getattr(other, name))


def char_bigram_dice(a: str, b: str) -> float:
    """Dice coefficient over the sets of character bigrams of a and b."""
    ba = {a[i : i + 2] for i in range(len(a) - 1)}
    bb = {b[i : i + 2] for i in range(len(b) - 1)}
    if not ba or not bb:
        return 1.0 if a == b and a else 0.0
    return 2 * len(ba & bb) / (len(ba) + len(bb))


def _classify(turns: list[Turn], i: int, cfg: CleaningConfig) -> RedundancyVerdict:
    turn = turns[i]
    prev = turns[i - 1]

    if i >= 2:
        hit = next((p for p in cfg.repetition_lexicon if p in prev.text), None)
        if hit is not None and char_bigram_dice(turn.text, turns[i - 2].text) > cfg.overlap_threshold:
            return RedundancyVerdict("repetition", i, f"request {hit!r} + restatement of turn -2")

    if len(turn.text) <= cfg.ack_len and turn.text in cfg.ack_lexicon:
        lo = max(0, i - 1 - cfg.echo_window)
        for j in range(i - 2, lo - 1, -1):
            if turns[j].speaker == prev.speaker:
                continue
            if char_bigram_dice(prev.text, turns[j].text) >= cfg.overlap_threshold:
                return RedundancyVerdict("confirmation", i, f"echo of turn {j} + ack {turn.text!r}")

    if (
        turn.speaker == "user"
        and len(turn.text) <= cfg.interjection_len
        and turn.text in cfg.interjection_lexicon
    ):
        return RedundancyVerdict("interjection", i, f"interjection {turn.text!r}")

    return RedundancyVerdict("none", i, "")


def classify_redundant_turn(d: Dialogue, i: int, cfg: CleaningConfig | None = None) -> RedundancyVerdict:
    """Classify turn i of a dialogue; requires 1 <= i < len(turns)."""
    if not 1 <= i < len(d.turns):
        raise ValueError(f"turn index {i} out of range for classification")
    return _classify(list(d.turns), i, cfg or CleaningConfig())


def _assert_deletable(d_id: str, turn: Turn, case: str) -> None:
    if turn.mentions or turn.triples or turn.intents:
        first = (list(turn.mentions) + list(turn.triples) + list(turn.intents))[0]
        raise CleaningError(
            f"dialogue {d_id!r}: {case} removal of turn {turn.index} would drop "
            f"gold annotation {first!r}"
        )


def _merge_system_turns(prev: Turn, nxt: Turn) -> Turn:
    offset = len(prev.text)
    shifted_mentions = tuple(
        replace(m, start=m.start + offset, end=m.end + offset) for m in nxt.mentions
    )
    shifted_triples = tuple(
        replace(tr, start=tr.start + offset, end=tr.end + offset) for tr in nxt.triples
    )
    return Turn(
        index=prev.index,
        speaker=prev.speaker,
        text=prev.text + nxt.text,
        mentions=prev.mentions + shifted_mentions,
        triples=prev.triples + shifted_triples,
        intents=prev.intents + nxt.intents,
    )


def _reindex(d_id: str, turns: list[Turn]) -> Dialogue:
    out = []
    for idx, t in enumerate(turns):
        out.append(
            Turn(
                index=idx,
                speaker=t.speaker,
                text=t.text,
                mentions=tuple(replace(m, turn=idx) for m in t.mentions),
                triples=tuple(replace(tr, turn=idx) for tr in t.triples),
                intents=t.intents,
            )
        )
    return Dialogue(id=d_id, turns=tuple(out))


def clean_dialogue(d: Dialogue, cfg: CleaningConfig | None = None) -> tuple[Dialogue, CleaningStats]:
    """Remove/merge redundant turns, remapping annotations; never drops gold.

    Scans left to right against the current (already edited) turn list and
    re-examines the seam after each edit, so the result is stable under a
    second pass.
    """
    cfg = cfg or CleaningConfig()
    turns = list(d.turns)
    stats = CleaningStats(original_turns=len(turns))
    i = 1
    while i < len(turns):
        verdict = _classify(turns, i, cfg)
        if verdict.case in ("repetition", "confirmation"):
            _assert_deletable(d.id, turns[i - 1], verdict.case)
            _assert_deletable(d.id, turns[i], verdict.case)
            del turns[i - 1 : i + 1]
            stats.turns_removed += 2
            setattr(stats, verdict.case, getattr(stats, verdict.case) + 1)
            i = max(1, i - 1)
        elif verdict.case == "interjection":
            _assert_deletable(d.id, turns[i], verdict.case)
            mergeable = (
                i + 1 < len(turns)
                and turns[i - 1].speaker == "system"
                and turns[i + 1].speaker == "system"
            )
            if mergeable:
                turns[i - 1] = _merge_system_turns(turns[i - 1], turns[i + 1])
                del turns[i : i + 2]
                stats.turns_removed += 1
                stats.turns_merged += 1
            else:
                del turns[i]
                stats.turns_removed += 1
            stats.interjection += 1
            i = max(1, i - 1)
        else:
            i += 1
    stats.final_turns = len(turns)
    return _reindex(d.id, turns), stats


def clean_corpus(dialogues: list[Dialogue], cfg: CleaningConfig | None = None) -> tuple[list[Dialogue], CleaningStats]:
    cfg = cfg or CleaningConfig()
    total = CleaningStats()
    out = []
    for d in dialogues:
        cleaned, stats = clean_dialogue(d, cfg)
        out.append(cleaned)
        total.add(stats)
    return out, total
