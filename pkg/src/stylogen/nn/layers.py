"""Layers with explicit forward/backward passes on dense numpy arrays.

Activations default to 32-bit floats; the gradient-check harness builds
float64 models through the same code. Each layer exposes ``params`` and
``grads`` as parallel lists of arrays; ``backward`` overwrites the grads for
the most recent forward batch and returns the gradient w.r.t. its input.
"""

from __future__ import annotations

import numpy as np

from . import kernels as K


class NumericsError(RuntimeError):
    """Raised when a forward/backward pass produces NaN or Inf."""


def _glorot(rng, fan_in, fan_out, shape, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: list[np.ndarray] = []
        self.grads: list[np.ndarray] = []

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError


class Embedding(Layer):
    kind = "embedding"

    def __init__(self, vocab_size, dim, rng, dtype):
        super().__init__()
        self.dim = dim
        self.w = _glorot(rng, vocab_size, dim, (vocab_size, dim), dtype)
        self.dw = np.zeros_like(self.w)
        self.params = [self.w]
        self.grads = [self.dw]

    def forward(self, ids, train=False, rng=None):
        self._ids = ids
        return self.w[ids]

    def backward(self, dy):
        self.dw[:] = 0
        np.add.at(self.dw, self._ids.reshape(-1), dy.reshape(-1, self.dim))
        return None  # ids carry no gradient


class DilatedCausalConv(Layer):
    """Causal 1-d convolution with dilated taps; linear output."""

    kind = "conv"

    def __init__(self, in_channels, filters, kernel, dilation, rng, dtype):
        super().__init__()
        if dilation < 1:
            raise ValueError("dilation must be >= 1")
        self.kernel = kernel
        self.dilation = dilation
        fan_in = kernel * in_channels
        fan_out = kernel * filters
        self.w = _glorot(rng, fan_in, fan_out, (kernel, in_channels, filters), dtype)
        self.b = np.zeros(filters, dtype=dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self.params = [self.w, self.b]
        self.grads = [self.dw, self.db]

    def forward(self, x, train=False, rng=None):
        if self.dilation * (self.kernel - 1) >= x.shape[1]:
            raise ValueError("receptive field exceeds window")
        self._x = np.ascontiguousarray(x)
        return K.conv1d_fwd(self._x, self.w, self.b, self.dilation)

    def backward(self, dy):
        dx, dw, db = K.conv1d_bwd(self._x, self.w, np.ascontiguousarray(dy), self.dilation)
        self.dw[:] = dw
        self.db[:] = db
        return dx


class Recurrent(Layer):
    """GRU or LSTM over the whole window, emitting the final hidden state."""

    kind = "recurrent"

    def __init__(self, in_dim, units, cell, rng, dtype):
        super().__init__()
        if cell not in ("gru", "lstm"):
            raise ValueError(f"unknown recurrent cell {cell!r}")
        self.cell = cell
        self.units = units
        gates = 3 if cell == "gru" else 4
        sx = 1.0 / np.sqrt(in_dim)
        sh = 1.0 / np.sqrt(units)
        self.wx = rng.uniform(-sx, sx, size=(in_dim, gates * units)).astype(dtype)
        self.wh = rng.uniform(-sh, sh, size=(units, gates * units)).astype(dtype)
        self.b = np.zeros(gates * units, dtype=dtype)
        self.dwx = np.zeros_like(self.wx)
        self.dwh = np.zeros_like(self.wh)
        self.db = np.zeros_like(self.b)
        self.params = [self.wx, self.wh, self.b]
        self.grads = [self.dwx, self.dwh, self.db]

    def forward(self, x, train=False, rng=None):
        x = np.ascontiguousarray(x)
        self._x = x
        zeros = np.zeros((x.shape[0], self.units), dtype=x.dtype)
        if self.cell == "gru":
            self._hs, self._cache = K.gru_fwd(x, self.wx, self.wh, self.b, zeros)
        else:
            self._hs, self._cs, self._cache = K.lstm_fwd(x, self.wx, self.wh, self.b, zeros, zeros)
        return np.asarray(self._hs)[:, -1].copy()

    def backward(self, dy):
        dy = np.ascontiguousarray(dy)
        if self.cell == "gru":
            dx, dwx, dwh, db, _ = K.gru_bwd(self._x, self.wx, self.wh, self._hs, self._cache, dy)
        else:
            dx, dwx, dwh, db, _ = K.lstm_bwd(
                self._x, self.wx, self.wh, self._hs, self._cs, self._cache, dy
            )
        self.dwx[:] = dwx
        self.dwh[:] = dwh
        self.db[:] = db
        return np.asarray(dx)


class MaxPool(Layer):
    """Non-overlapping max pool along time; a trailing remainder is dropped."""

    kind = "max_pool"

    def __init__(self, width):
        super().__init__()
        if width < 1:
            raise ValueError("pool width must be >= 1")
        self.width = width

    def forward(self, x, train=False, rng=None):
        b, t, c = x.shape
        t2 = t // self.width
        if t2 == 0:
            raise ValueError(f"pool width {self.width} exceeds sequence length {t}")
        blocks = x[:, : t2 * self.width].reshape(b, t2, self.width, c)
        self._argmax = blocks.argmax(axis=2)
        self._in_shape = x.shape
        return blocks.max(axis=2)

    def backward(self, dy):
        b, t, c = self._in_shape
        t2 = t // self.width
        dblocks = np.zeros((b, t2, self.width, c), dtype=dy.dtype)
        np.put_along_axis(dblocks, self._argmax[:, :, None, :], dy[:, :, None, :], axis=2)
        dx = np.zeros(self._in_shape, dtype=dy.dtype)
        dx[:, : t2 * self.width] = dblocks.reshape(b, t2 * self.width, c)
        return dx


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, train=False, rng=None):
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._in_shape)


class Dense(Layer):
    kind = "dense"

    ACTIVATIONS = ("linear", "relu", "tanh")

    def __init__(self, in_dim, units, activation, rng, dtype):
        super().__init__()
        if activation not in self.ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.activation = activation
        self.w = _glorot(rng, in_dim, units, (in_dim, units), dtype)
        self.b = np.zeros(units, dtype=dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self.params = [self.w, self.b]
        self.grads = [self.dw, self.db]

    def forward(self, x, train=False, rng=None):
        self._x = x
        z = x @ self.w + self.b
        if self.activation == "relu":
            self._mask = z > 0
            return np.where(self._mask, z, 0)
        if self.activation == "tanh":
            self._out = np.tanh(z)
            return self._out
        return z

    def backward(self, dy):
        if self.activation == "relu":
            dz = np.where(self._mask, dy, 0)
        elif self.activation == "tanh":
            dz = dy * (1.0 - self._out * self._out)
        else:
            dz = dy
        self.dw[:] = self._x.T @ dz
        self.db[:] = dz.sum(axis=0)
        return dz @ self.w.T


class Dropout(Layer):
    """Inverted dropout: active only in training, inference needs no rescale."""

    kind = "dropout"

    def __init__(self, rate):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        keep = 1.0 - self.rate
        self._mask = (rng.random(x.shape) >= self.rate).astype(x.dtype) / keep
        return x * self._mask

    def backward(self, dy):
        if self._mask is None:
            return dy
        return dy * self._mask


class SoftmaxOutput(Layer):
    """Projection to vocabulary logits plus softmax.

    The projection starts at zero so an untrained model is exactly uniform;
    the training loop may tilt the bias toward target frequencies. Backward
    expects the gradient w.r.t. the logits (cross-entropy is fused upstream).
    """

    kind = "softmax_output"

    def __init__(self, in_dim, vocab_size, dtype):
        super().__init__()
        self.w = np.zeros((in_dim, vocab_size), dtype=dtype)
        self.b = np.zeros(vocab_size, dtype=dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self.params = [self.w, self.b]
        self.grads = [self.dw, self.db]

    def forward(self, x, train=False, rng=None):
        self._x = x
        logits = x @ self.w + self.b
        self.logits = logits
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)

    def backward(self, dlogits):
        self.dw[:] = self._x.T @ dlogits
        self.db[:] = dlogits.sum(axis=0)
        return dlogits @ self.w.T
