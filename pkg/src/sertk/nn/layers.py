"""Layers with explicit forward/backward passes.

Activations are batched as ``[batch, time, channels]`` for the sequence
layers and ``[batch, features]`` for :class:`Dense`. Each layer caches what
its backward pass needs during ``forward`` and writes parameter gradients
into ``self.grads`` (same keys as ``self.params``) during ``backward``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from sertk.errors import BadRate, DimensionMismatch


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x):
    return np.maximum(x, 0.0)


def softmax(logits, axis=-1):
    z = np.asarray(logits, dtype=np.float64)
    with np.errstate(over="ignore"):
        z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


PROB_FLOOR = 1e-12


def cross_entropy(probs, target) -> float:
    """Mean of ``-ln p[target]``; ``target`` holds class indices."""
    p = np.atleast_2d(probs)
    t = np.atleast_1d(np.asarray(target, dtype=np.int64))
    picked = p[np.arange(len(t)), t]
    return float(np.mean(-np.log(np.maximum(picked, PROB_FLOOR))))


def softmax_cross_entropy(logits, target):
    """Fused loss and gradient w.r.t. the logits: (probs - onehot) / batch."""
    z = np.atleast_2d(logits)
    t = np.atleast_1d(np.asarray(target, dtype=np.int64))
    probs = softmax(z)
    grad = probs.copy()
    grad[np.arange(len(t)), t] -= 1.0
    return cross_entropy(probs, t), grad / len(t)


class Layer:
    params: dict
    grads: dict

    def __init__(self):
        self.params = {}
        self.grads = {}

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def _check(self, x, ndim, width, what):
        if x.ndim != ndim or x.shape[-1] != width:
            raise DimensionMismatch(f"{type(self).__name__}: expected {what} with last "
                                    f"dimension {width}, got shape {x.shape}")


class Conv1D(Layer):
    """Stride-1 convolution along time with symmetric zero ("same") padding.

    ``W`` has shape ``[c_out, kernel, c_in]``;
    ``y[t, o] = b[o] + sum_{k,c} W[o, k, c] * x_pad[t + k, c]``.
    """

    def __init__(self, c_in, c_out, kernel, rng=None):
        super().__init__()
        if kernel % 2 != 1:
            raise DimensionMismatch(f"kernel must be odd for same padding, got {kernel}")
        self.c_in, self.c_out, self.kernel = c_in, c_out, kernel
        rng = rng or np.random.default_rng(0)
        self.params["W"] = glorot_uniform(rng, (c_out, kernel, c_in), kernel * c_in, kernel * c_out)
        self.params["b"] = np.zeros(c_out)

    def forward(self, x, train=False, rng=None):
        self._check(x, 3, self.c_in, "[batch, time, channels]")
        B, T, C = x.shape
        pad = (self.kernel - 1) // 2
        xp = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
        # windows: [B, T, C, K] -> [B, T, K, C] to match W's layout
        cols = sliding_window_view(xp, self.kernel, axis=1).transpose(0, 1, 3, 2)
        cols = cols.reshape(B * T, self.kernel * C)
        self._cache = (cols, x.shape)
        W = self.params["W"].reshape(self.c_out, -1)
        return (cols @ W.T + self.params["b"]).reshape(B, T, self.c_out)

    def backward(self, dy):
        cols, (B, T, C) = self._cache
        dy2 = dy.reshape(B * T, self.c_out)
        self.grads["W"] = (dy2.T @ cols).reshape(self.params["W"].shape)
        self.grads["b"] = dy2.sum(axis=0)
        dcols = (dy2 @ self.params["W"].reshape(self.c_out, -1)).reshape(B, T, self.kernel, C)
        pad = (self.kernel - 1) // 2
        dxp = np.zeros((B, T + self.kernel - 1, C))
        for k in range(self.kernel):
            dxp[:, k:k + T] += dcols[:, :, k]
        return dxp[:, pad:pad + T]


class ReLU(Layer):
    def forward(self, x, train=False, rng=None):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy):
        return np.where(self._mask, dy, 0.0)


class Dropout(Layer):
    """Inverted dropout: identity in eval mode."""

    def __init__(self, rate):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise BadRate(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            self._scale = None
            return x
        if rng is None:
            raise ValueError("train-mode dropout needs a random generator")
        keep = rng.random(x.shape) >= self.rate
        self._scale = keep / (1.0 - self.rate)
        return x * self._scale

    def backward(self, dy):
        return dy if self._scale is None else dy * self._scale


class MaxPool1D(Layer):
    """Width-2, stride-2 max pooling over time; an odd tail forms a singleton window."""

    def forward(self, x, train=False, rng=None):
        B, T, C = x.shape
        T2 = -(-T // 2)
        xp = np.full((B, 2 * T2, C), -np.inf)
        xp[:, :T] = x
        win = xp.reshape(B, T2, 2, C)
        arg = win.argmax(axis=2)
        self._cache = (arg, T)
        return np.take_along_axis(win, arg[:, :, None, :], axis=2)[:, :, 0, :]

    def backward(self, dy):
        arg, T = self._cache
        B, T2, C = dy.shape
        dwin = np.zeros((B, T2, 2, C))
        np.put_along_axis(dwin, arg[:, :, None, :], dy[:, :, None, :], axis=2)
        return dwin.reshape(B, 2 * T2, C)[:, :T]


class Dense(Layer):
    """``y = x @ W.T + b`` with ``W`` of shape ``[out, in]``."""

    def __init__(self, d_in, d_out, rng=None):
        super().__init__()
        self.d_in, self.d_out = d_in, d_out
        rng = rng or np.random.default_rng(0)
        self.params["W"] = glorot_uniform(rng, (d_out, d_in), d_in, d_out)
        self.params["b"] = np.zeros(d_out)

    def forward(self, x, train=False, rng=None):
        self._check(x, 2, self.d_in, "[batch, features]")
        self._x = x
        return x @ self.params["W"].T + self.params["b"]

    def backward(self, dy):
        self.grads["W"] = dy.T @ self._x
        self.grads["b"] = dy.sum(axis=0)
        return dy @ self.params["W"]


class LSTM(Layer):
    """Sequence-to-sequence LSTM with zero initial state.

    Gate pre-activations are packed as ``[i | f | o | g]`` along the last axis
    of ``W`` (``[c_in, 4H]``), ``U`` (``[H, 4H]``) and ``b`` (``[4H]``).
    """

    def __init__(self, c_in, hidden, rng=None, forget_bias=1.0):
        super().__init__()
        self.c_in, self.hidden = c_in, hidden
        rng = rng or np.random.default_rng(0)
        H = hidden
        self.params["W"] = glorot_uniform(rng, (c_in, 4 * H), c_in, 4 * H)
        self.params["U"] = glorot_uniform(rng, (H, 4 * H), H, 4 * H)
        b = np.zeros(4 * H)
        b[H:2 * H] = forget_bias
        self.params["b"] = b

    def forward(self, x, train=False, rng=None):
        self._check(x, 3, self.c_in, "[batch, time, channels]")
        B, T, _ = x.shape
        H = self.hidden
        W, U, b = self.params["W"], self.params["U"], self.params["b"]
        xw = x @ W + b
        gates = np.empty((B, T, 4 * H))
        c = np.zeros((B, T + 1, H))
        h = np.zeros((B, T + 1, H))
        tanh_c = np.empty((B, T, H))
        for t in range(T):
            a = xw[:, t] + h[:, t] @ U
            g = gates[:, t]
            g[:, :3 * H] = sigmoid(a[:, :3 * H])
            g[:, 3 * H:] = np.tanh(a[:, 3 * H:])
            c[:, t + 1] = g[:, H:2 * H] * c[:, t] + g[:, :H] * g[:, 3 * H:]
            tanh_c[:, t] = np.tanh(c[:, t + 1])
            h[:, t + 1] = g[:, 2 * H:3 * H] * tanh_c[:, t]
        self._cache = (x, gates, c, h, tanh_c)
        return h[:, 1:].copy()

    def backward(self, dy):
        x, gates, c, h, tanh_c = self._cache
        B, T, _ = x.shape
        H = self.hidden
        U = self.params["U"]
        da = np.empty((B, T, 4 * H))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in reversed(range(T)):
            g = gates[:, t]
            i, f, o, gg = g[:, :H], g[:, H:2 * H], g[:, 2 * H:3 * H], g[:, 3 * H:]
            dh = dy[:, t] + dh_next
            dc = dc_next + dh * o * (1.0 - tanh_c[:, t] ** 2)
            d = da[:, t]
            d[:, :H] = dc * gg * i * (1.0 - i)
            d[:, H:2 * H] = dc * c[:, t] * f * (1.0 - f)
            d[:, 2 * H:3 * H] = dh * tanh_c[:, t] * o * (1.0 - o)
            d[:, 3 * H:] = dc * i * (1.0 - gg ** 2)
            dh_next = d @ U.T
            dc_next = dc * f
        da2 = da.reshape(B * T, 4 * H)
        self.grads["W"] = x.reshape(B * T, -1).T @ da2
        self.grads["U"] = h[:, :-1].reshape(B * T, H).T @ da2
        self.grads["b"] = da2.sum(axis=0)
        return da @ self.params["W"].T
