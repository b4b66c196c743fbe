"""Automatic metrics for both tasks.

Task 1: span-level F1, B-cubed for coreference, triple-level F1 behind an
optimal entity matching. Task 2: per-side intent P/R/F1, corpus BLEU over
characters, and goal Success rate. Everything is micro-averaged and pure.

BLEU variant (frozen, recorded in report headers): corpus-level BLEU-4 over
character tokens, add-one smoothing applied only to zero clipped counts,
standard brevity penalty, single reference per candidate.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, asdict
from typing import Hashable, Iterable, Mapping, Sequence

BLEU_VARIANT = "corpus BLEU-4, character tokens, add-one smoothing on zero counts, standard BP"


def prf(tp: int, n_pred: int, n_gold: int) -> tuple[float, float, float]:
    """Micro precision/recall/F1 with the 0-denominator convention P=R=F1=0."""
    p = tp / n_pred if n_pred else 0.0
    r = tp / n_gold if n_gold else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


# ---------------------------------------------------------------------------
# Task 1

def span_f1(
    pred_spans: Iterable[Hashable], gold_spans: Iterable[Hashable]
) -> tuple[float, float, float]:
    """Exact-match F1 over typed spans.

    Elements must be fully qualified hashables, e.g.
    (dialogue_id, turn, start, end, label); a prediction counts iff it equals
    a gold span on both boundary and type.
    """
    pred, gold = set(pred_spans), set(gold_spans)
    return prf(len(pred & gold), len(pred), len(gold))


def bcubed(
    predicted: Iterable[Iterable[Hashable]],
    gold: Iterable[Iterable[Hashable]],
) -> tuple[float, float, float]:
    """Per-mention B-cubed precision/recall/F1 over two clusterings.

    Mentions present on only one side are treated as singletons on the other.
    An empty mention universe scores (1, 1, 1) by convention.
    """
    pred_of: dict[Hashable, frozenset] = {}
    for cluster in predicted:
        c = frozenset(cluster)
        for m in c:
            pred_of[m] = c
    gold_of: dict[Hashable, frozenset] = {}
    for cluster in gold:
        c = frozenset(cluster)
        for m in c:
            gold_of[m] = c

    universe = set(pred_of) | set(gold_of)
    if not universe:
        return 1.0, 1.0, 1.0

    p_sum = r_sum = 0.0
    for m in universe:
        pc = pred_of.get(m, frozenset([m]))
        gc = gold_of.get(m, frozenset([m]))
        inter = len(pc & gc)
        p_sum += inter / len(pc)
        r_sum += inter / len(gc)
    p = p_sum / len(universe)
    r = r_sum / len(universe)
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


# -- optimal entity matching ------------------------------------------------

Triple = tuple[str, str]  # (slot, value)


def _max_assignment_total(weights: Sequence[Sequence[int]]) -> int:
    """Maximum-total assignment value via the Hungarian algorithm.

    ``weights`` is rectangular non-negative; rows/columns may stay unassigned
    at zero benefit (the matrix is padded square internally).
    """
    n_rows = len(weights)
    n_cols = len(weights[0]) if n_rows else 0
    if n_rows == 0 or n_cols == 0:
        return 0
    n = max(n_rows, n_cols)
    big = max(w for row in weights for w in row)
    # Minimization form on a padded square matrix: cost = big - weight.
    cost = [[big] * n for _ in range(n)]
    for i, row in enumerate(weights):
        for j, w in enumerate(row):
            cost[i][j] = big - w

    INF = float("inf")
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    col_row = [0] * (n + 1)  # 1-based: column j currently matched to this row
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        col_row[0] = i
        j0 = 0
        minv = [INF] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = col_row[j0]
            delta = INF
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1][j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[col_row[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if col_row[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            col_row[j0] = col_row[j1]
            j0 = j1
    total = 0
    for j in range(1, n_cols + 1):
        i = col_row[j]
        if 1 <= i <= n_rows:
            total += weights[i - 1][j - 1]
    return total


@dataclass(frozen=True)
class MatchResult:
    """Optimal predicted-to-gold entity mapping and its triple agreement."""

    mapping: tuple[tuple[int, int], ...]  # (pred index, gold index) pairs
    matched_triples: int

    def as_dict(self) -> dict[int, int]:
        return dict(self.mapping)


def hungarian_match(
    pred_entities: Sequence[Iterable[Triple]],
    gold_entities: Sequence[Iterable[Triple]],
) -> MatchResult:
    """Best injective entity matching by exact (slot, value) agreement count.

    Only pairs contributing positive agreement enter the mapping; among
    optimal mappings the lexicographically smallest by predicted index is
    returned (each predicted index greedily takes the smallest workable gold
    index).
    """
    pred_sets = [set(p) for p in pred_entities]
    gold_sets = [set(g) for g in gold_entities]
    n_pred, n_gold = len(pred_sets), len(gold_sets)
    if n_pred == 0 or n_gold == 0:
        return MatchResult((), 0)

    agree = [[len(p & g) for g in gold_sets] for p in pred_sets]
    best = _max_assignment_total(agree)

    mapping: list[tuple[int, int]] = []
    free_gold = list(range(n_gold))
    remaining = best
    for i in range(n_pred):
        later_rows = range(i + 1, n_pred)
        for j in free_gold:
            if agree[i][j] <= 0:
                continue
            sub = [[agree[r][c] for c in free_gold if c != j] for r in later_rows]
            if agree[i][j] + _max_assignment_total(sub) == remaining:
                mapping.append((i, j))
                free_gold.remove(j)
                remaining -= agree[i][j]
                break
    return MatchResult(tuple(mapping), best)


def triple_f1(
    pred_dialogues: Sequence[Mapping[str, Iterable[Triple]]],
    gold_dialogues: Sequence[Mapping[str, Iterable[Triple]]],
    user_entity_id: str = "user",
) -> tuple[float, float, float]:
    """Micro triple-level F1 across dialogues.

    Each dialogue maps entity id -> iterable of (slot, value) triples. A
    predicted triple is correct iff its entity maps to a gold entity under
    the per-dialogue optimal matching and slot and value agree exactly.
    User-profile triples (the reserved id) bypass matching and compare
    directly.
    """
    if len(pred_dialogues) != len(gold_dialogues):
        raise ValueError("prediction/gold dialogue counts differ")
    tp = n_pred = n_gold = 0
    for pred, gold in zip(pred_dialogues, gold_dialogues):
        pred_user = set(pred.get(user_entity_id, ()))
        gold_user = set(gold.get(user_entity_id, ()))
        pred_ids = sorted(k for k in pred if k != user_entity_id)
        gold_ids = sorted(k for k in gold if k != user_entity_id)
        pred_sets = [set(pred[k]) for k in pred_ids]
        gold_sets = [set(gold[k]) for k in gold_ids]
        match = hungarian_match(pred_sets, gold_sets)
        tp += match.matched_triples + len(pred_user & gold_user)
        n_pred += sum(len(s) for s in pred_sets) + len(pred_user)
        n_gold += sum(len(s) for s in gold_sets) + len(gold_user)
    return prf(tp, n_pred, n_gold)


# ---------------------------------------------------------------------------
# Task 2

def intent_prf(
    pred_turns: Sequence[Iterable[str]],
    gold_turns: Sequence[Iterable[str]],
) -> tuple[float, float, float]:
    """Micro P/R/F1 over per-turn intent-name sets for one speaker side.

    When neither side carries any intent at all the score is (1, 1, 1); the
    caller is expected to flag that vacuous case.
    """
    if len(pred_turns) != len(gold_turns):
        raise ValueError("prediction/gold turn counts differ")
    tp = n_pred = n_gold = 0
    for p, g in zip(pred_turns, gold_turns):
        ps, gs = set(p), set(g)
        tp += len(ps & gs)
        n_pred += len(ps)
        n_gold += len(gs)
    if n_pred == 0 and n_gold == 0:
        return 1.0, 1.0, 1.0
    return prf(tp, n_pred, n_gold)


def _ngram_counts(chars: Sequence[str], n: int) -> Counter:
    return Counter(tuple(chars[i : i + n]) for i in range(len(chars) - n + 1))


def bleu(candidates: Sequence[str], references: Sequence[str]) -> float:
    """Corpus BLEU-4 over character tokens, in [0, 100]. See BLEU_VARIANT."""
    if len(candidates) != len(references):
        raise ValueError("candidate/reference counts differ")
    if not candidates:
        raise ValueError("empty corpus")
    clipped = [0] * 4
    totals = [0] * 4
    cand_len = ref_len = 0
    for cand, ref in zip(candidates, references):
        c, r = list(cand), list(ref)
        cand_len += len(c)
        ref_len += len(r)
        for n in range(1, 5):
            counts = _ngram_counts(c, n)
            ref_counts = _ngram_counts(r, n)
            totals[n - 1] += sum(counts.values())
            clipped[n - 1] += sum(min(v, ref_counts[k]) for k, v in counts.items())
    log_sum = 0.0
    for n in range(4):
        if totals[n] == 0:
            continue  # vacuous order, contributes nothing
        p = clipped[n] / totals[n] if clipped[n] > 0 else 1.0 / (totals[n] + 1)
        log_sum += 0.25 * math.log(p)
    bp = 1.0 if cand_len > ref_len else math.exp(1 - ref_len / cand_len) if cand_len else 0.0
    return 100.0 * bp * math.exp(log_sum)


def _strip_ws(s: str) -> str:
    return "".join(s.split())


def success_rate(
    goals: Sequence[Iterable[str]], system_responses: Sequence[Iterable[str]]
) -> float:
    """Fraction of dialogues whose system responses contain every goal value.

    ``goals[i]`` holds the expected value strings for dialogue i; containment
    is substring match after stripping whitespace from both sides. An empty
    goal succeeds vacuously.
    """
    if len(goals) != len(system_responses):
        raise ValueError("goal/response dialogue counts differ")
    if not goals:
        return 0.0
    wins = 0
    for values, responses in zip(goals, system_responses):
        blob = _strip_ws("".join(responses))
        if all(_strip_ws(v) in blob for v in values):
            wins += 1
    return wins / len(goals)


# ---------------------------------------------------------------------------
# reports

@dataclass
class ScoreReport:
    """Container for the metric panel of either task; unused fields stay None."""

    ner_f1: float | None = None
    ecr_bcubed: float | None = None
    sr_f1: float | None = None
    esa_acc: float | None = None
    sf_f1: float | None = None
    user_prf: tuple[float, float, float] | None = None
    sys_prf: tuple[float, float, float] | None = None
    bleu: float | None = None
    success: float | None = None
    notes: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)

    def render_task1(self) -> str:
        rows = [
            ("F1 (NER)", self.ner_f1),
            ("B3 (ECR)", self.ecr_bcubed),
            ("F1 (SR)", self.sr_f1),
            ("Acc (ESA)", self.esa_acc),
            ("F1 (SF)", self.sf_f1),
        ]
        width = max(len(k) for k, _ in rows)
        lines = ["Task 1 extraction metrics"]
        lines += [f"  {k.ljust(width)}  {v:.4f}" if v is not None else f"  {k.ljust(width)}  -" for k, v in rows]
        return "\n".join(lines)

    def render_task2(self) -> str:
        def fmt_prf(t: tuple[float, float, float] | None) -> str:
            return "/".join(f"{x:.3f}" for x in t) if t else "-"

        lines = [
            f"Task 2 dialogue metrics ({BLEU_VARIANT})",
            f"  U-P/R/F1  {fmt_prf(self.user_prf)}",
            f"  S-P/R/F1  {fmt_prf(self.sys_prf)}",
            f"  BLEU      {self.bleu:.2f}" if self.bleu is not None else "  BLEU      -",
            f"  Success   {self.success:.3f}" if self.success is not None else "  Success   -",
        ]
        return "\n".join(lines)
