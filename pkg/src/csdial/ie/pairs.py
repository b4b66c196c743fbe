"""Pair classifiers: mention-pair coreference and entity-slot alignment.

Coreference scores a mention pair as the dot product of the two mention
vectors (mean pooling of token vectors); linking is greedy nearest-antecedent.
Alignment wraps the entity and the slot in single-character markers, encodes
the marked text, and classifies from the encoder states at the two opening
markers.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .encoder import (
    CharVocab,
    ENT_CLOSE,
    ENT_OPEN,
    SLOT_CLOSE,
    SLOT_OPEN,
    TURN_SEP,
    SequenceEncoder,
)
from .nn import Layer, Linear, bce_loss_and_grad, make_optimizer, sigmoid
from .tagger import TrainingConfig

MentionRef = tuple[int, int, int]  # (turn, start, end)


class MentionPairScorer:
    """Dot-product coreference scorer over mean-pooled mention vectors."""

    def __init__(self, vocab: CharVocab, dim_embed: int = 24, dim_hidden: int = 32, seed: int = 0):
        self.vocab = vocab
        rng = np.random.default_rng(seed)
        self.encoder = SequenceEncoder(len(vocab), dim_embed, dim_hidden, rng)

    @property
    def layers(self) -> list[Layer]:
        return self.encoder.layers

    def _turn_states(self, turn_texts: list[str], turns: set[int]) -> dict[int, tuple[np.ndarray, dict]]:
        out = {}
        for t in sorted(turns):
            ids = self.vocab.encode(turn_texts[t])
            out[t] = self.encoder.encode_ids(ids)
        return out

    def mention_vector(self, states: dict, m: MentionRef) -> np.ndarray:
        hs, _ = states[m[0]]
        return hs[m[1] : m[2]].mean(axis=0)

    def pair_score(self, turn_texts: list[str], a: MentionRef, b: MentionRef) -> float:
        states = self._turn_states(turn_texts, {a[0], b[0]})
        return float(self.mention_vector(states, a) @ self.mention_vector(states, b))

    def pair_prob(self, turn_texts: list[str], a: MentionRef, b: MentionRef) -> float:
        return float(sigmoid(self.pair_score(turn_texts, a, b)))

    def dialogue_prob_fn(self, turn_texts: list[str]):
        """Probability function with per-turn encoding memoized for one dialogue."""
        memo: dict[int, np.ndarray] = {}

        def vec(m: MentionRef) -> np.ndarray:
            t = m[0]
            if t not in memo:
                hs, _ = self.encoder.encode_ids(self.vocab.encode(turn_texts[t]))
                memo[t] = hs
            return memo[t][m[1] : m[2]].mean(axis=0)

        def prob(a: MentionRef, b: MentionRef) -> float:
            return float(sigmoid(float(vec(a) @ vec(b))))

        return prob

    def _dialogue_loss(self, turn_texts: list[str],
                       mentions: list[tuple[MentionRef, str]], max_pairs: int) -> tuple[float, int]:
        pairs = []
        for j in range(1, len(mentions)):
            for i in range(j):
                pairs.append((j - i, i, j))
        pairs.sort()
        pairs = pairs[:max_pairs]
        if not pairs:
            return 0.0, 0
        states = self._turn_states(turn_texts, {m[0][0] for m in mentions})
        vecs = [self.mention_vector(states, m[0]) for m in mentions]
        d_vecs = [np.zeros_like(v) for v in vecs]
        total = 0.0
        for _, i, j in pairs:
            target = 1.0 if mentions[i][1] == mentions[j][1] else 0.0
            logit = float(vecs[i] @ vecs[j])
            loss, d_logit = bce_loss_and_grad(logit, target)
            total += loss
            d_vecs[i] += d_logit * vecs[j]
            d_vecs[j] += d_logit * vecs[i]
        d_hs: dict[int, np.ndarray] = {}
        for (m, _), dv in zip(mentions, d_vecs):
            t, s, e = m
            if t not in d_hs:
                d_hs[t] = np.zeros_like(states[t][0])
            d_hs[t][s:e] += dv / (e - s)
        for t, grad in sorted(d_hs.items()):
            self.encoder.backward(states[t][1], grad)
        return total, len(pairs)

    def fit(self, dialogues: list[tuple[list[str], list[tuple[MentionRef, str]]]],
            config: TrainingConfig | None = None, max_pairs: int = 200) -> list[float]:
        """dialogues: (turn texts, [(mention ref, cluster id), ...]) per dialogue."""
        config = config or TrainingConfig()
        opt = make_optimizer(config.optimizer, self.layers, config.learning_rate)
        rng = np.random.default_rng(config.seed)
        history = []
        usable = [d for d in dialogues if len(d[1]) >= 2]
        for _ in range(config.epochs):
            order = rng.permutation(len(usable))
            total = pair_count = 0.0
            for lo in range(0, len(order), config.batch_size):
                batch = order[lo : lo + config.batch_size]
                n_pairs = 0
                for idx in batch:
                    texts, mentions = usable[idx]
                    loss, n = self._dialogue_loss(texts, mentions, max_pairs)
                    total += loss
                    n_pairs += n
                if n_pairs == 0:
                    continue
                for layer in self.layers:
                    for k in layer.grads:
                        layer.grads[k] /= n_pairs
                opt.step()
                pair_count += n_pairs
            history.append(total / max(1.0, pair_count))
        return history

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        meta = {"vocab": self.vocab.to_json(), "dim_embed": self.encoder.dim_embed,
                "dim_hidden": self.encoder.dim_hidden}
        arrays = {"meta": np.frombuffer(json.dumps(meta, ensure_ascii=False).encode("utf-8"), dtype=np.uint8)}
        for k, v in self.encoder.state().items():
            arrays[f"enc::{k}"] = v
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "MentionPairScorer":
        data = np.load(path, allow_pickle=False)
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        model = cls(CharVocab.from_json(meta["vocab"]), meta["dim_embed"], meta["dim_hidden"])
        model.encoder.load_state({k.split("::", 1)[1]: data[k] for k in data.files if k.startswith("enc::")})
        return model


def cluster_mentions(n_mentions: int, prob, threshold: float = 0.5) -> list[int]:
    """Greedy left-to-right linking; returns a cluster index per mention.

    ``prob(i, j)`` scores mention positions i < j. Each mention joins the
    cluster of its nearest preceding mention with probability >= threshold,
    else starts a new cluster. The result is a partition.
    """
    cluster_of: list[int] = []
    next_cluster = 0
    for j in range(n_mentions):
        linked = None
        for i in range(j - 1, -1, -1):
            if prob(i, j) >= threshold:
                linked = cluster_of[i]
                break
        if linked is None:
            linked = next_cluster
            next_cluster += 1
        cluster_of.append(linked)
    return cluster_of


# ---------------------------------------------------------------------------
# entity-slot alignment

class AlignmentScorer:
    """Marker-based pair classifier deciding whether a slot belongs to an entity."""

    def __init__(self, vocab: CharVocab, dim_embed: int = 24, dim_hidden: int = 32, seed: int = 0):
        self.vocab = vocab
        rng = np.random.default_rng(seed)
        self.encoder = SequenceEncoder(len(vocab), dim_embed, dim_hidden, rng)
        self.head = Linear(2 * self.encoder.dim, 1, rng)

    @property
    def layers(self) -> list[Layer]:
        return self.encoder.layers + [self.head]

    @staticmethod
    def _mark(turn_texts: list[str], ent: MentionRef, slot: MentionRef) -> tuple[str, int, int]:
        """Marked context string plus positions of the two opening markers."""
        et, es, ee = ent
        st, ss, se = slot
        if et > st:
            raise ValueError("entity mention must not come after the slot turn")
        if et == st and not (ee <= ss or se <= es):
            raise ValueError("overlapping entity/slot spans form a malformed candidate")
        pieces = []
        pos_e = pos_s = -1
        offset = 0
        for t in range(et, st + 1):
            text = turn_texts[t]
            inserts = []
            if t == et:
                inserts.append((es, ENT_OPEN, "e"))
                inserts.append((ee, ENT_CLOSE, ""))
            if t == st:
                inserts.append((ss, SLOT_OPEN, "s"))
                inserts.append((se, SLOT_CLOSE, ""))
            # spans never interleave (overlap is rejected), so ordering by
            # position with closers first handles adjacent spans correctly
            inserts.sort(key=lambda x: (x[0], 0 if x[1] in (ENT_CLOSE, SLOT_CLOSE) else 1))
            built = ""
            prev = 0
            for pos, marker, tag in inserts:
                built += text[prev:pos]
                if tag == "e":
                    pos_e = offset + len(built)
                elif tag == "s":
                    pos_s = offset + len(built)
                built += marker
                prev = pos
            built += text[prev:]
            pieces.append(built)
            offset += len(built) + len(TURN_SEP)
        return TURN_SEP.join(pieces), pos_e, pos_s

    def _logit(self, turn_texts: list[str], ent: MentionRef, slot: MentionRef):
        marked, pos_e, pos_s = self._mark(turn_texts, ent, slot)
        ids = self.vocab.encode(marked)
        hs, cache = self.encoder.encode_ids(ids)
        feat = np.concatenate([hs[pos_e], hs[pos_s]])
        logit = float(self.head.forward(feat)[0])
        return logit, (hs, cache, feat, pos_e, pos_s)

    def probability(self, turn_texts: list[str], ent: MentionRef, slot: MentionRef) -> float:
        logit, _ = self._logit(turn_texts, ent, slot)
        return float(sigmoid(logit))

    def example_loss(self, turn_texts: list[str], ent: MentionRef, slot: MentionRef,
                     target: float) -> float:
        logit, (hs, cache, feat, pos_e, pos_s) = self._logit(turn_texts, ent, slot)
        loss, d_logit = bce_loss_and_grad(logit, target)
        d_feat = self.head.backward(feat, np.array([d_logit]))
        d_hs = np.zeros_like(hs)
        dim = self.encoder.dim
        d_hs[pos_e] += d_feat[:dim]
        d_hs[pos_s] += d_feat[dim:]
        self.encoder.backward(cache, d_hs)
        return loss

    def fit(self, examples: list[tuple[list[str], MentionRef, MentionRef, float]],
            config: TrainingConfig | None = None) -> list[float]:
        config = config or TrainingConfig()
        opt = make_optimizer(config.optimizer, self.layers, config.learning_rate)
        rng = np.random.default_rng(config.seed)
        history = []
        for _ in range(config.epochs):
            order = rng.permutation(len(examples))
            total = 0.0
            for lo in range(0, len(order), config.batch_size):
                batch = order[lo : lo + config.batch_size]
                for idx in batch:
                    texts, ent, slot, target = examples[idx]
                    total += self.example_loss(texts, ent, slot, target)
                for layer in self.layers:
                    for k in layer.grads:
                        layer.grads[k] /= len(batch)
                opt.step()
            history.append(total / max(1, len(examples)))
        return history

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        meta = {"vocab": self.vocab.to_json(), "dim_embed": self.encoder.dim_embed,
                "dim_hidden": self.encoder.dim_hidden}
        arrays = {"meta": np.frombuffer(json.dumps(meta, ensure_ascii=False).encode("utf-8"), dtype=np.uint8)}
        for k, v in self.encoder.state().items():
            arrays[f"enc::{k}"] = v
        for k, v in self.head.params.items():
            arrays[f"head::{k}"] = v
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "AlignmentScorer":
        data = np.load(path, allow_pickle=False)
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        model = cls(CharVocab.from_json(meta["vocab"]), meta["dim_embed"], meta["dim_hidden"])
        model.encoder.load_state({k.split("::", 1)[1]: data[k] for k in data.files if k.startswith("enc::")})
        model.head.load_state({"W": data["head::W"], "b": data["head::b"]})
        return model


def align_entity_slot(model: AlignmentScorer, context: str | list[str],
                      entity_span: tuple[int, int] | MentionRef,
                      slot_span: tuple[int, int] | MentionRef) -> float:
    """Probability that the slot belongs to the entity, in [0, 1].

    ``context`` may be a single utterance (spans are (start, end)) or a list
    of turn texts (spans are (turn, start, end)). Overlapping spans raise
    ValueError as malformed candidates.
    """
    if isinstance(context, str):
        texts = [context]
        ent = (0, *entity_span)
        slot = (0, *slot_span)
    else:
        texts = context
        ent = entity_span  # type: ignore[assignment]
        slot = slot_span  # type: ignore[assignment]
    return model.probability(texts, ent, slot)
