"""Linear-chain CRF in log space: partition function, NLL with analytic
gradients, and Viterbi decoding with optional BIO transition masking.

Conventions: ``emissions`` is a (T, L) float array, ``transitions`` an
(L, L) array where transitions[i, j] scores label i followed by label j.
A path's score is the sum of its emissions plus the sum of its transitions;
there are no separate start/end scores.
"""
from __future__ import annotations

import numpy as np

NEG_INF = -1e30  # used instead of -inf so masked arithmetic stays NaN-free


def _logsumexp(x: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return (m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))).squeeze(axis)


def forward_log_partition(emissions: np.ndarray, transitions: np.ndarray) -> float:
    """log Z over all |L|^T label paths, by the forward algorithm."""
    alpha = emissions[0].astype(float).copy()
    for t in range(1, emissions.shape[0]):
        alpha = emissions[t] + _logsumexp(alpha[:, None] + transitions, axis=0)
    return float(_logsumexp(alpha, axis=0))


def path_score(emissions: np.ndarray, transitions: np.ndarray, labels: np.ndarray) -> float:
    labels = np.asarray(labels)
    s = float(emissions[np.arange(len(labels)), labels].sum())
    if len(labels) > 1:
        s += float(transitions[labels[:-1], labels[1:]].sum())
    return s


def crf_nll(
    emissions: np.ndarray, transitions: np.ndarray, gold: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Negative log likelihood of ``gold`` and its gradients.

    Returns (loss, d_loss/d_emissions, d_loss/d_transitions) where
    loss = log Z - score(gold). Gradients are posterior marginals minus the
    gold indicator counts, computed by forward-backward in log space.
    """
    gold = np.asarray(gold, dtype=int)
    T, L = emissions.shape
    emissions = emissions.astype(float)

    alpha = np.empty((T, L))
    alpha[0] = emissions[0]
    for t in range(1, T):
        alpha[t] = emissions[t] + _logsumexp(alpha[t - 1][:, None] + transitions, axis=0)
    log_z = float(_logsumexp(alpha[T - 1], axis=0))

    beta = np.empty((T, L))
    beta[T - 1] = 0.0
    for t in range(T - 2, -1, -1):
        beta[t] = _logsumexp(transitions + (emissions[t + 1] + beta[t + 1])[None, :], axis=1)

    grad_e = np.exp(alpha + beta - log_z)
    grad_e[np.arange(T), gold] -= 1.0

    grad_t = np.zeros_like(transitions, dtype=float)
    for t in range(1, T):
        pair = alpha[t - 1][:, None] + transitions + (emissions[t] + beta[t])[None, :]
        grad_t += np.exp(pair - log_z)
        grad_t[gold[t - 1], gold[t]] -= 1.0

    loss = log_z - path_score(emissions, transitions, gold)
    return loss, grad_e, grad_t


def viterbi_decode(
    emissions: np.ndarray,
    transitions: np.ndarray,
    allowed_start: np.ndarray | None = None,
    allowed: np.ndarray | None = None,
) -> list[int]:
    """Argmax-scoring label path.

    ``allowed_start`` (L,) and ``allowed`` (L, L) are boolean masks; forbidden
    entries are treated as -inf so the decoded path always honors them. Score
    ties resolve to the smallest label index at the latest differing position
    (argmax takes the first maximizer at every backtrace step).
    """
    T, L = emissions.shape
    trans = transitions.astype(float).copy()
    if allowed is not None:
        trans = np.where(allowed, trans, NEG_INF)
    delta = emissions[0].astype(float).copy()
    if allowed_start is not None:
        delta = np.where(allowed_start, delta, NEG_INF)
    back = np.zeros((T, L), dtype=int)
    for t in range(1, T):
        scores = delta[:, None] + trans
        back[t] = np.argmax(scores, axis=0)
        delta = emissions[t] + np.max(scores, axis=0)
    best = int(np.argmax(delta))
    path = [best]
    for t in range(T - 1, 0, -1):
        best = int(back[t][best])
        path.append(best)
    path.reverse()
    return path


# ---------------------------------------------------------------------------
# BIO label bookkeeping

O_LABEL = "O"


def bio_labels(kinds: list[str]) -> list[str]:
    """Label inventory [O, B-k1, I-k1, B-k2, ...] for the given span kinds."""
    out = [O_LABEL]
    for k in kinds:
        out += [f"B-{k}", f"I-{k}"]
    return out


def bio_start_mask(labels: list[str]) -> np.ndarray:
    """True where a sequence may start: anything but I-x."""
    return np.array([not lab.startswith("I-") for lab in labels], dtype=bool)


def bio_transition_mask(labels: list[str]) -> np.ndarray:
    """allowed[i, j]: I-x may only follow B-x or I-x; all else is allowed."""
    L = len(labels)
    allowed = np.ones((L, L), dtype=bool)
    for j, lab_j in enumerate(labels):
        if not lab_j.startswith("I-"):
            continue
        kind = lab_j[2:]
        for i, lab_i in enumerate(labels):
            if lab_i not in (f"B-{kind}", f"I-{kind}"):
                allowed[i, j] = False
    return allowed


def spans_to_bio(spans: list[tuple[int, int, str]], length: int, labels: list[str]) -> list[int]:
    """Encode disjoint (start, end, kind) spans as BIO label indices."""
    index = {lab: i for i, lab in enumerate(labels)}
    out = [index[O_LABEL]] * length
    for start, end, kind in spans:
        out[start] = index[f"B-{kind}"]
        for pos in range(start + 1, end):
            out[pos] = index[f"I-{kind}"]
    return out


def bio_to_spans(label_ids: list[int], labels: list[str]) -> list[tuple[int, int, str]]:
    """Decode BIO label indices into (start, end, kind) spans.

    Tolerates dangling I-x (treated as a span start) so gold conversions
    never crash, though masked decoding cannot produce one.
    """
    spans = []
    start, kind = None, None
    for pos, li in enumerate(label_ids):
        lab = labels[li]
        if lab.startswith("B-"):
            if start is not None:
                spans.append((start, pos, kind))
            start, kind = pos, lab[2:]
        elif lab.startswith("I-"):
            if start is None or kind != lab[2:]:
                if start is not None:
                    spans.append((start, pos, kind))
                start, kind = pos, lab[2:]
        else:
            if start is not None:
                spans.append((start, pos, kind))
                start, kind = None, None
    if start is not None:
        spans.append((start, len(label_ids), kind))
    return spans
