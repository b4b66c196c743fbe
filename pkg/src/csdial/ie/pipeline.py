"""Four-stage extraction pipeline and its training/evaluation drivers.

Stage order: entity recognition -> coreference -> slot recognition ->
entity-slot alignment. Each stage consumes the previous stage's predictions;
any subset of stages can instead be fed gold labels ("golden" mode) to
measure error propagation.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from ..corpus import USER_ENTITY_ID, Dialogue
from ..errors import PipelineError
from ..metrics import ScoreReport, bcubed, span_f1, triple_f1
from ..schema import Schema
from .encoder import CharVocab
from .pairs import AlignmentScorer, MentionPairScorer, cluster_mentions
from .tagger import CrfTagger, TrainingConfig

STAGES = ("mentions", "coref", "slots", "alignment")

MentionKey = tuple[int, int, int]  # (turn, start, end)


@dataclass(frozen=True)
class PredMention:
    turn: int
    start: int
    end: int
    surface: str
    entity_type: str
    entity_id: str  # cluster id, filled by the coref stage


@dataclass(frozen=True)
class PredTriple:
    entity_id: str
    slot: str
    value: str
    turn: int
    start: int
    end: int


@dataclass
class PipelinePrediction:
    mentions: list[PredMention] = field(default_factory=list)
    slots: list[tuple[int, int, int, str]] = field(default_factory=list)  # (turn, start, end, kind)
    triples: list[PredTriple] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)

    def triples_by_entity(self) -> dict[str, set[tuple[str, str]]]:
        out: dict[str, set[tuple[str, str]]] = {}
        for tr in self.triples:
            out.setdefault(tr.entity_id, set()).add((tr.slot, tr.value))
        return out


@dataclass
class ModelBundle:
    vocab: CharVocab
    ner: CrfTagger
    coref: MentionPairScorer
    slots: CrfTagger
    align: AlignmentScorer
    schema: Schema
    window: int = 3
    coref_threshold: float = 0.5

    def save(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.ner.save(out / "ner.npz")
        self.slots.save(out / "slots.npz")
        self.coref.save(out / "coref.npz")
        self.align.save(out / "align.npz")
        (out / "bundle.json").write_text(
            json.dumps({"window": self.window, "coref_threshold": self.coref_threshold}),
            encoding="utf-8",
        )

    @classmethod
    def load(cls, in_dir: str | Path, schema: Schema) -> "ModelBundle":
        path = Path(in_dir)
        meta = json.loads((path / "bundle.json").read_text(encoding="utf-8"))
        ner = CrfTagger.load(path / "ner.npz")
        return cls(
            vocab=ner.vocab,
            ner=ner,
            coref=MentionPairScorer.load(path / "coref.npz"),
            slots=CrfTagger.load(path / "slots.npz"),
            align=AlignmentScorer.load(path / "align.npz"),
            schema=schema,
            window=meta["window"],
            coref_threshold=meta["coref_threshold"],
        )


# ---------------------------------------------------------------------------
# gold extraction helpers

def gold_mention_spans(d: Dialogue) -> list[tuple[int, int, int, str]]:
    return [(m.turn, m.start, m.end, m.entity_type) for t in d.turns for m in t.mentions]


def gold_slot_spans(d: Dialogue) -> list[tuple[int, int, int, str]]:
    return [(tr.turn, tr.start, tr.end, tr.slot) for t in d.turns for tr in t.triples]


def gold_triples_by_entity(d: Dialogue) -> dict[str, set[tuple[str, str]]]:
    out: dict[str, set[tuple[str, str]]] = {}
    for tr in d.triples():
        out.setdefault(tr.entity_id, set()).add((tr.slot, tr.value))
    return out


# ---------------------------------------------------------------------------
# training

def training_examples(dialogues: list[Dialogue], schema: Schema):
    """Build per-stage training sets from gold dialogues."""
    ner, slots, coref, align = [], [], [], []
    for d in dialogues:
        texts = [t.text for t in d.turns]
        for t in d.turns:
            ner.append((t.text, [(m.start, m.end, m.entity_type) for m in t.mentions]))
            slots.append((t.text, [(tr.start, tr.end, tr.slot) for tr in t.triples]))
        mentions = [((m.turn, m.start, m.end), m.entity_id) for t in d.turns for m in t.mentions]
        if len(mentions) >= 2:
            coref.append((texts, mentions))
        align.extend(_alignment_examples(d, schema))
    return ner, slots, coref, align


def _cluster_views(d: Dialogue) -> dict[str, list[MentionKey]]:
    clusters: dict[str, list[MentionKey]] = {}
    for t in d.turns:
        for m in t.mentions:
            clusters.setdefault(m.entity_id, []).append((m.turn, m.start, m.end))
    return clusters


def _alignment_examples(d: Dialogue, schema: Schema, window: int = 3):
    texts = [t.text for t in d.turns]
    clusters = _cluster_views(d)
    types = {eid: next(m.entity_type for t in d.turns for m in t.mentions if m.entity_id == eid)
             for eid in clusters}
    out = []
    for t in d.turns:
        for tr in t.triples:
            slot_ref = (tr.turn, tr.start, tr.end)
            for eid, refs in sorted(clusters.items()):
                if tr.slot not in schema.attributes(types[eid]):
                    continue
                mention = _latest_mention_in_window(refs, tr.turn, window)
                if mention is None:
                    continue
                if mention[0] == slot_ref[0] and not (
                    mention[2] <= slot_ref[1] or slot_ref[2] <= mention[1]
                ):
                    continue
                out.append((texts, mention, slot_ref, 1.0 if eid == tr.entity_id else 0.0))
    return out


def _latest_mention_in_window(refs: list[MentionKey], slot_turn: int, window: int) -> MentionKey | None:
    before = [r for r in refs if r[0] <= slot_turn]
    if not before:
        return None
    latest = max(before, key=lambda r: (r[0], r[1]))
    if slot_turn - latest[0] > window:
        return None
    return latest


def train_models(
    dialogues: list[Dialogue],
    schema: Schema,
    config: TrainingConfig | None = None,
    seed: int = 0,
    dims: tuple[int, int] = (24, 32),
    verbose: bool = False,
) -> ModelBundle:
    """Train the four stage models on gold dialogues."""
    config = config or TrainingConfig()
    vocab = CharVocab.from_texts([t.text for d in dialogues for t in d.turns])
    ner_x, slot_x, coref_x, align_x = training_examples(dialogues, schema)
    de, dh = dims

    ner = CrfTagger(vocab, sorted(schema.types), dim_embed=de, dim_hidden=dh, seed=seed)
    slots = CrfTagger(vocab, schema.all_attributes(), dim_embed=de, dim_hidden=dh, seed=seed + 1)
    coref = MentionPairScorer(vocab, dim_embed=de, dim_hidden=dh, seed=seed + 2)
    align = AlignmentScorer(vocab, dim_embed=de, dim_hidden=dh, seed=seed + 3)

    if verbose:
        print(f"training on {len(dialogues)} dialogues: {len(ner_x)} turns, "
              f"{len(coref_x)} coref dialogues, {len(align_x)} alignment candidates")
    ner.fit(ner_x, config)
    slots.fit(slot_x, config)
    coref.fit(coref_x, config)
    align.fit(align_x, config)
    return ModelBundle(vocab=vocab, ner=ner, coref=coref, slots=slots, align=align, schema=schema)


# ---------------------------------------------------------------------------
# inference

def run_pipeline(bundle: ModelBundle, d: Dialogue, golden: frozenset[str] | set[str] = frozenset()) -> PipelinePrediction:
    """Run the staged pipeline; stages named in ``golden`` take gold inputs."""
    unknown = set(golden) - set(STAGES)
    if unknown:
        raise PipelineError("config", f"unknown golden stages {sorted(unknown)}")
    texts = [t.text for t in d.turns]
    pred = PipelinePrediction()

    # stage 1: entity mentions
    try:
        if "mentions" in golden:
            raw_mentions = gold_mention_spans(d)
        else:
            raw_mentions = []
            for t in d.turns:
                for start, end, kind in bundle.ner.tag_utterance(t.text):
                    raw_mentions.append((t.index, start, end, kind))
    except Exception as e:  # noqa: BLE001 - stage failures must carry the stage name
        raise PipelineError("mentions", str(e)) from e

    # stage 2: coreference
    try:
        if "coref" in golden:
            gold_ids = {(m.turn, m.start, m.end): m.entity_id for t in d.turns for m in t.mentions}
            cluster_ids = [gold_ids[(tu, s, e)] for tu, s, e, _ in raw_mentions]
        else:
            prob = bundle.coref.dialogue_prob_fn(texts)
            refs = [(tu, s, e) for tu, s, e, _ in raw_mentions]
            raw_ids = cluster_mentions(
                len(refs), lambda i, j: prob(refs[i], refs[j]), bundle.coref_threshold
            )
            cluster_ids = [f"p{c}" for c in raw_ids]
    except Exception as e:
        raise PipelineError("coref", str(e)) from e

    pred.mentions = [
        PredMention(tu, s, e, texts[tu][s:e], kind, cid)
        for (tu, s, e, kind), cid in zip(raw_mentions, cluster_ids)
    ]

    # stage 3: slot recognition
    try:
        if "slots" in golden:
            pred.slots = gold_slot_spans(d)
        else:
            pred.slots = []
            for t in d.turns:
                for start, end, kind in bundle.slots.tag_utterance(t.text):
                    pred.slots.append((t.index, start, end, kind))
    except Exception as e:
        raise PipelineError("slots", str(e)) from e

    # stage 4: alignment
    try:
        if "alignment" in golden:
            pred.triples = [
                PredTriple(tr.entity_id, tr.slot, tr.value, tr.turn, tr.start, tr.end)
                for t in d.turns
                for tr in t.triples
            ]
        else:
            pred.triples = _align_slots(bundle, texts, pred)
    except Exception as e:
        raise PipelineError("alignment", str(e)) from e
    return pred


def _cluster_type(mentions: list[PredMention]) -> str:
    counts = Counter(m.entity_type for m in mentions)
    return min(counts, key=lambda k: (-counts[k], k))


def _align_slots(bundle: ModelBundle, texts: list[str], pred: PipelinePrediction) -> list[PredTriple]:
    clusters: dict[str, list[PredMention]] = {}
    for m in pred.mentions:
        clusters.setdefault(m.entity_id, []).append(m)
    ctypes = {cid: _cluster_type(ms) for cid, ms in clusters.items()}

    triples: list[PredTriple] = []
    for turn, start, end, kind in pred.slots:
        value = texts[turn][start:end]
        slot_ref = (turn, start, end)
        candidates = []
        for cid in sorted(clusters):
            if kind not in bundle.schema.attributes(ctypes[cid]):
                continue
            refs = [(m.turn, m.start, m.end) for m in clusters[cid]]
            mention = _latest_mention_in_window(refs, turn, bundle.window)
            if mention is None:
                continue
            if mention[0] == turn and not (mention[2] <= start or end <= mention[1]):
                continue  # overlapping spans are malformed candidates
            p = bundle.align.probability(texts, mention, slot_ref)
            distance = (turn - mention[0], abs(start - mention[2]))
            candidates.append((p, distance, cid))
        accepted = [c for c in candidates if c[0] >= 0.5]
        if accepted:
            accepted.sort(key=lambda c: (-c[0], c[1], c[2]))
            _, _, cid = accepted[0]
            triples.append(PredTriple(cid, kind, value, turn, start, end))
        elif kind in bundle.schema.user_slots:
            triples.append(PredTriple(USER_ENTITY_ID, kind, value, turn, start, end))
        else:
            pred.diagnostics.append(
                f"slot ({turn},{start},{end},{kind}) has no accepted entity; dropped"
            )
    return triples


# ---------------------------------------------------------------------------
# evaluation

def evaluate_ie(
    bundle: ModelBundle,
    dialogues: list[Dialogue],
    golden_sf: bool = False,
) -> ScoreReport:
    """Score the pipeline on gold dialogues, one row per stage metric.

    NER and slot recognition are always scored on raw predictions; B-cubed
    and alignment accuracy use golden prerequisites; the slot-filling F1 uses
    golden prerequisites when ``golden_sf`` else full pipeline predictions.
    """
    ner_pred, ner_gold = [], []
    sr_pred, sr_gold = [], []
    pred_clusterings, gold_clusterings = [], []
    esa_correct = esa_total = 0
    sf_pred, sf_gold = [], []

    for d in dialogues:
        pipeline_pred = run_pipeline(bundle, d)
        ner_pred += [(d.id, m.turn, m.start, m.end, m.entity_type) for m in pipeline_pred.mentions]
        ner_gold += [(d.id, *span) for span in gold_mention_spans(d)]
        sr_pred += [(d.id, *s) for s in pipeline_pred.slots]
        sr_gold += [(d.id, *span) for span in gold_slot_spans(d)]

        golden_prereq = run_pipeline(bundle, d, golden={"mentions", "slots"})
        clusters: dict[str, list] = {}
        for m in golden_prereq.mentions:
            clusters.setdefault(m.entity_id, []).append((d.id, m.turn, m.start, m.end))
        pred_clusterings += list(clusters.values())
        gold_by_id: dict[str, list] = {}
        for t in d.turns:
            for m in t.mentions:
                gold_by_id.setdefault(m.entity_id, []).append((d.id, m.turn, m.start, m.end))
        gold_clusterings += list(gold_by_id.values())

        gold_entity_of_slot = {(tr.turn, tr.start, tr.end): tr.entity_id for tr in d.triples()}
        fully_golden = run_pipeline(bundle, d, golden={"mentions", "coref", "slots"})
        assigned = {(tr.turn, tr.start, tr.end): tr.entity_id for tr in fully_golden.triples}
        for key, gold_eid in sorted(gold_entity_of_slot.items()):
            esa_total += 1
            if assigned.get(key) == gold_eid:
                esa_correct += 1

        sf = fully_golden if golden_sf else pipeline_pred
        sf_pred.append(sf.triples_by_entity())
        sf_gold.append(gold_triples_by_entity(d))

    _, _, ner_f1 = span_f1(ner_pred, ner_gold)
    _, _, sr_f1 = span_f1(sr_pred, sr_gold)
    _, _, ecr = bcubed(pred_clusterings, gold_clusterings)
    _, _, sf_f1 = triple_f1(sf_pred, sf_gold, user_entity_id=USER_ENTITY_ID)
    return ScoreReport(
        ner_f1=ner_f1,
        ecr_bcubed=ecr,
        sr_f1=sr_f1,
        esa_acc=esa_correct / esa_total if esa_total else 1.0,
        sf_f1=sf_f1,
        notes={"sf_mode": "golden" if golden_sf else "pipeline"},
    )
