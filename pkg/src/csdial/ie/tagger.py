"""CRF sequence tagger used for both entity and slot recognition."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .crf import (
    bio_labels,
    bio_start_mask,
    bio_to_spans,
    bio_transition_mask,
    crf_nll,
    spans_to_bio,
    viterbi_decode,
)
from .encoder import CharVocab, SequenceEncoder
from .nn import Layer, Linear, make_optimizer

Span = tuple[int, int, str]  # (start, end, kind)


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 20
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.epochs <= 0:
            raise ValueError("learning_rate, batch_size and epochs must all be positive")

    @classmethod
    def from_json(cls, raw: dict) -> "TrainingConfig":
        return cls(**raw)


class _Transitions(Layer):
    def __init__(self, n_labels: int, rng: np.random.Generator):
        super().__init__()
        self.params["A"] = rng.uniform(-0.1, 0.1, size=(n_labels, n_labels))
        self.zero_grads()


class CrfTagger:
    """Encoder + emission projection + CRF transitions over BIO labels."""

    def __init__(self, vocab: CharVocab, kinds: list[str], dim_embed: int = 24,
                 dim_hidden: int = 32, seed: int = 0):
        self.vocab = vocab
        self.kinds = list(kinds)
        self.labels = bio_labels(self.kinds)
        rng = np.random.default_rng(seed)
        self.encoder = SequenceEncoder(len(vocab), dim_embed, dim_hidden, rng)
        self.projection = Linear(self.encoder.dim, len(self.labels), rng)
        self.transitions = _Transitions(len(self.labels), rng)
        self._start_mask = bio_start_mask(self.labels)
        self._trans_mask = bio_transition_mask(self.labels)

    @property
    def layers(self) -> list[Layer]:
        return self.encoder.layers + [self.projection, self.transitions]

    def emissions(self, text: str) -> tuple[np.ndarray, dict]:
        ids = self.vocab.encode(text)
        hs, cache = self.encoder.encode_ids(ids)
        return self.projection.forward(hs), {"hs": hs, "enc": cache}

    def tag_utterance(self, text: str) -> list[Span]:
        """Decode typed spans; empty text gives an empty list."""
        if not text:
            return []
        e, _ = self.emissions(text)
        path = viterbi_decode(e, self.transitions.params["A"],
                              allowed_start=self._start_mask, allowed=self._trans_mask)
        return bio_to_spans(path, self.labels)

    def example_loss(self, text: str, spans: list[Span], accumulate: bool = True) -> float:
        gold = np.array(spans_to_bio(spans, len(text), self.labels), dtype=int)
        e, cache = self.emissions(text)
        loss, grad_e, grad_t = crf_nll(e, self.transitions.params["A"], gold)
        if accumulate:
            self.transitions.grads["A"] += grad_t
            d_hs = self.projection.backward(cache["hs"], grad_e)
            self.encoder.backward(cache["enc"], d_hs)
        return loss

    def fit(self, examples: list[tuple[str, list[Span]]], config: TrainingConfig | None = None,
            log_every: int = 0) -> list[float]:
        """Mini-batch training; returns mean loss per epoch."""
        config = config or TrainingConfig()
        usable = [(t, s) for t, s in examples if t]
        opt = make_optimizer(config.optimizer, self.layers, config.learning_rate)
        rng = np.random.default_rng(config.seed)
        history = []
        for epoch in range(config.epochs):
            order = rng.permutation(len(usable))
            total = 0.0
            for lo in range(0, len(order), config.batch_size):
                batch = order[lo : lo + config.batch_size]
                for idx in batch:
                    text, spans = usable[idx]
                    total += self.example_loss(text, spans)
                for layer in self.layers:
                    for k in layer.grads:
                        layer.grads[k] /= len(batch)
                opt.step()
            history.append(total / max(1, len(usable)))
            if log_every and (epoch + 1) % log_every == 0:
                print(f"  epoch {epoch + 1}/{config.epochs} loss {history[-1]:.4f}")
        return history

    # -- persistence ----------------------------------------------------------

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        meta = {
            "kinds": self.kinds,
            "vocab": self.vocab.to_json(),
            "dim_embed": self.encoder.dim_embed,
            "dim_hidden": self.encoder.dim_hidden,
        }
        arrays = {"meta": np.frombuffer(json.dumps(meta, ensure_ascii=False).encode("utf-8"), dtype=np.uint8)}
        for k, v in self.encoder.state().items():
            arrays[f"enc::{k}"] = v
        for k, v in self.projection.params.items():
            arrays[f"proj::{k}"] = v
        arrays["trans::A"] = self.transitions.params["A"]
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "CrfTagger":
        data = np.load(path, allow_pickle=False)
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        model = cls(CharVocab.from_json(meta["vocab"]), meta["kinds"],
                    dim_embed=meta["dim_embed"], dim_hidden=meta["dim_hidden"])
        model.encoder.load_state({k.split("::", 1)[1]: data[k] for k in data.files if k.startswith("enc::")})
        model.projection.load_state({"W": data["proj::W"], "b": data["proj::b"]})
        model.transitions.load_state({"A": data["trans::A"]})
        return model
