"""Tiny numpy layers with hand-written backward passes, plus Adam/SGD.

Everything is float64 and per-sequence (no padding, no batch dimension);
mini-batching happens by accumulating gradients across sequences before an
optimizer step. Forward passes return a cache consumed by the matching
backward pass; gradients accumulate into the layer's ``grads`` dict.
"""
from __future__ import annotations

import numpy as np


class Layer:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def zero_grads(self) -> None:
        for k, p in self.params.items():
            self.grads[k] = np.zeros_like(p)

    def state(self) -> dict[str, np.ndarray]:
        return dict(self.params)

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for k in self.params:
            self.params[k] = np.asarray(state[k], dtype=float)


class Embedding(Layer):
    def __init__(self, vocab_size: int, dim: int, rng: np.random.Generator):
        super().__init__()
        self.params["W"] = rng.normal(0.0, 0.1, size=(vocab_size, dim))
        self.zero_grads()

    def forward(self, ids: np.ndarray) -> np.ndarray:
        return self.params["W"][ids]

    def backward(self, ids: np.ndarray, d_out: np.ndarray) -> None:
        np.add.at(self.grads["W"], ids, d_out)


class Linear(Layer):
    def __init__(self, dim_in: int, dim_out: int, rng: np.random.Generator):
        super().__init__()
        scale = 1.0 / np.sqrt(dim_in)
        self.params["W"] = rng.uniform(-scale, scale, size=(dim_in, dim_out))
        self.params["b"] = np.zeros(dim_out)
        self.zero_grads()

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x @ self.params["W"] + self.params["b"]

    def backward(self, x: np.ndarray, d_out: np.ndarray) -> np.ndarray:
        if x.ndim == 1:
            self.grads["W"] += np.outer(x, d_out)
            self.grads["b"] += d_out
        else:
            self.grads["W"] += x.T @ d_out
            self.grads["b"] += d_out.sum(axis=0)
        return d_out @ self.params["W"].T


class BiRecurrent(Layer):
    """Bidirectional tanh RNN; output at t is [h_fwd_t ; h_bwd_t], shape (T, 2H)."""

    def __init__(self, dim_in: int, dim_hidden: int, rng: np.random.Generator):
        super().__init__()
        self.dim_hidden = dim_hidden
        scale_x = 1.0 / np.sqrt(dim_in)
        scale_h = 1.0 / np.sqrt(dim_hidden)
        for d in ("f", "b"):
            self.params[f"Wx_{d}"] = rng.uniform(-scale_x, scale_x, size=(dim_in, dim_hidden))
            self.params[f"Wh_{d}"] = rng.uniform(-scale_h, scale_h, size=(dim_hidden, dim_hidden))
            self.params[f"b_{d}"] = np.zeros(dim_hidden)
        self.zero_grads()

    def _run(self, xs: np.ndarray, d: str) -> np.ndarray:
        Wx, Wh, b = self.params[f"Wx_{d}"], self.params[f"Wh_{d}"], self.params[f"b_{d}"]
        T = xs.shape[0]
        hs = np.zeros((T, self.dim_hidden))
        h = np.zeros(self.dim_hidden)
        for t in range(T):
            h = np.tanh(xs[t] @ Wx + h @ Wh + b)
            hs[t] = h
        return hs

    def forward(self, xs: np.ndarray) -> tuple[np.ndarray, dict]:
        hf = self._run(xs, "f")
        hb = self._run(xs[::-1], "b")[::-1]
        cache = {"xs": xs, "hf": hf, "hb": hb}
        return np.concatenate([hf, hb], axis=1), cache

    def _back(self, xs: np.ndarray, hs: np.ndarray, d_hs: np.ndarray, d: str) -> np.ndarray:
        Wx, Wh = self.params[f"Wx_{d}"], self.params[f"Wh_{d}"]
        gWx, gWh, gb = self.grads[f"Wx_{d}"], self.grads[f"Wh_{d}"], self.grads[f"b_{d}"]
        T = xs.shape[0]
        d_xs = np.zeros_like(xs)
        carry = np.zeros(self.dim_hidden)
        for t in range(T - 1, -1, -1):
            dh = d_hs[t] + carry
            da = dh * (1.0 - hs[t] ** 2)
            gWx += np.outer(xs[t], da)
            h_prev = hs[t - 1] if t > 0 else np.zeros(self.dim_hidden)
            gWh += np.outer(h_prev, da)
            gb += da
            d_xs[t] = da @ Wx.T
            carry = da @ Wh.T
        return d_xs

    def backward(self, cache: dict, d_out: np.ndarray) -> np.ndarray:
        H = self.dim_hidden
        xs = cache["xs"]
        d_xs = self._back(xs, cache["hf"], d_out[:, :H], "f")
        d_xs += self._back(xs[::-1], cache["hb"][::-1], d_out[::-1, H:], "b")[::-1]
        return d_xs


class Adam:
    def __init__(self, layers: list[Layer], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.layers = layers
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [{k: np.zeros_like(p) for k, p in l.params.items()} for l in layers]
        self.v = [{k: np.zeros_like(p) for k, p in l.params.items()} for l in layers]

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for li, layer in enumerate(self.layers):
            for k, p in layer.params.items():
                g = layer.grads[k]
                self.m[li][k] = b1 * self.m[li][k] + (1 - b1) * g
                self.v[li][k] = b2 * self.v[li][k] + (1 - b2) * g * g
                m_hat = self.m[li][k] / (1 - b1 ** self.t)
                v_hat = self.v[li][k] / (1 - b2 ** self.t)
                p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            layer.zero_grads()


class Sgd:
    def __init__(self, layers: list[Layer], lr: float = 1e-3):
        self.layers = layers
        self.lr = lr

    def step(self) -> None:
        for layer in self.layers:
            for k, p in layer.params.items():
                p -= self.lr * layer.grads[k]
            layer.zero_grads()


def make_optimizer(name: str, layers: list[Layer], lr: float):
    if name == "adam":
        return Adam(layers, lr=lr)
    if name == "sgd":
        return Sgd(layers, lr=lr)
    raise ValueError(f"unknown optimizer {name!r}")


def sigmoid(x: float | np.ndarray):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60.0, 60.0)))


def bce_loss_and_grad(logit: float, target: float) -> tuple[float, float]:
    """Binary cross entropy on a logit; returns (loss, d_loss/d_logit)."""
    p = float(sigmoid(logit))
    eps = 1e-12
    loss = -(target * np.log(p + eps) + (1 - target) * np.log(1 - p + eps))
    return float(loss), p - target
