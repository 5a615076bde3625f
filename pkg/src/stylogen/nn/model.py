"""Model specification and the network container.

A ModelSpec is an ordered list of layer descriptors, JSON-serializable for
checkpointing: it must start with an embedding and end with softmax_output,
and the shapes must chain. The Network builds concrete layers from a spec,
runs forward/backward and exposes the flat weight vector used by checkpoints
and the gradient-check harness.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..corpus import Vocabulary
from . import layers as L

ALLOWED_DILATIONS = (1, 2, 4, 8, 16, 32)


@dataclass
class ModelSpec:
    window: int
    vocab_size: int
    layers: list[dict] = field(default_factory=list)
    dtype: str = "float32"

    def validate(self) -> None:
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        if not self.layers:
            raise ValueError("empty layer list")
        if self.layers[0]["kind"] != "embedding":
            raise ValueError("first layer must be embedding")
        if self.layers[-1]["kind"] != "softmax_output":
            raise ValueError("last layer must be softmax_output")
        self.shapes()  # raises on incompatible chains

    def shapes(self) -> list[tuple]:
        """Propagate the per-example shape through the layer chain."""
        shape: tuple = (self.window,)
        out = [shape]
        for i, spec in enumerate(self.layers):
            kind = spec["kind"]
            if kind == "embedding":
                if i != 0:
                    raise ValueError("embedding only allowed as first layer")
                shape = (self.window, spec["dim"])
            elif kind == "conv":
                if len(shape) != 2:
                    raise ValueError("conv expects a (time, channels) input")
                if spec["dilation"] not in ALLOWED_DILATIONS:
                    raise ValueError(f"dilation must be one of {ALLOWED_DILATIONS}")
                if spec["dilation"] * (spec["kernel"] - 1) >= shape[0]:
                    raise ValueError("receptive field exceeds window")
                shape = (shape[0], spec["filters"])
            elif kind == "recurrent":
                if len(shape) != 2:
                    raise ValueError("recurrent expects a (time, channels) input")
                shape = (spec["units"],)
            elif kind == "max_pool":
                if len(shape) != 2:
                    raise ValueError("max_pool expects a (time, channels) input")
                if shape[0] // spec["width"] == 0:
                    raise ValueError("pool width exceeds sequence length")
                shape = (shape[0] // spec["width"], shape[1])
            elif kind == "flatten":
                shape = (int(np.prod(shape)),)
            elif kind == "dense":
                if len(shape) != 1:
                    raise ValueError("dense expects a flat input")
                shape = (spec["units"],)
            elif kind == "dropout":
                pass
            elif kind == "softmax_output":
                if i != len(self.layers) - 1:
                    raise ValueError("softmax_output only allowed as last layer")
                if len(shape) != 1:
                    raise ValueError("softmax_output expects a flat input")
                shape = (self.vocab_size,)
            else:
                raise ValueError(f"unknown layer kind {kind!r}")
            out.append(shape)
        return out

    def param_count(self) -> int:
        total = 0
        shapes = self.shapes()
        for spec, shape_in in zip(self.layers, shapes):
            kind = spec["kind"]
            if kind == "embedding":
                total += self.vocab_size * spec["dim"]
            elif kind == "conv":
                total += spec["kernel"] * shape_in[1] * spec["filters"] + spec["filters"]
            elif kind == "recurrent":
                gates = 3 if spec.get("cell", "gru") == "gru" else 4
                u = spec["units"]
                total += (shape_in[1] + u + 1) * gates * u
            elif kind == "dense":
                total += shape_in[0] * spec["units"] + spec["units"]
            elif kind == "softmax_output":
                total += shape_in[0] * self.vocab_size + self.vocab_size
        return total

    def to_json(self) -> dict:
        return {
            "window": self.window,
            "vocab_size": self.vocab_size,
            "dtype": self.dtype,
            "layers": self.layers,
        }

    @classmethod
    def from_json(cls, blob: dict) -> "ModelSpec":
        spec = cls(blob["window"], blob["vocab_size"], blob["layers"], blob.get("dtype", "float32"))
        spec.validate()
        return spec


def conv_spec(vocab_size, window=30, emb_dim=32, filters=32, kernel=3,
              dilations=(1, 2), pool=2, dense_units=64, dropout=0.2) -> ModelSpec:
    """Default convolutional model: two dilated causal conv layers with
    dropout, pooling and flattening, then two dense layers."""
    layers = [{"kind": "embedding", "dim": emb_dim}]
    for i, d in enumerate(dilations):
        layers.append({"kind": "conv", "filters": filters, "kernel": kernel, "dilation": d})
        if i == 0 and dropout:
            layers.append({"kind": "dropout", "rate": dropout})
    layers += [
        {"kind": "max_pool", "width": pool},
        {"kind": "flatten"},
        {"kind": "dense", "units": dense_units, "activation": "relu"},
    ]
    if dropout:
        layers.append({"kind": "dropout", "rate": dropout})
    layers.append({"kind": "softmax_output"})
    spec = ModelSpec(window, vocab_size, layers)
    spec.validate()
    return spec


def recurrent_spec(vocab_size, window=30, emb_dim=32, units=64, cell="gru") -> ModelSpec:
    """Default recurrent model: embedding into a single gated cell."""
    spec = ModelSpec(window, vocab_size, [
        {"kind": "embedding", "dim": emb_dim},
        {"kind": "recurrent", "units": units, "cell": cell},
        {"kind": "softmax_output"},
    ])
    spec.validate()
    return spec


class Network:
    """Concrete layers built from a spec, with fused softmax/cross-entropy."""

    def __init__(self, spec: ModelSpec, vocab: Vocabulary | None = None, init_seed: int = 0):
        spec.validate()
        if vocab is not None and vocab.size != spec.vocab_size:
            raise ValueError("vocabulary size does not match spec")
        self.spec = spec
        self.vocab = vocab
        self.window = spec.window
        self.dtype = np.dtype(spec.dtype)
        self.checkpoint_id = ""
        rng = np.random.default_rng(init_seed)
        shapes = spec.shapes()
        self.layers: list[L.Layer] = []
        for ls, shape_in in zip(spec.layers, shapes):
            kind = ls["kind"]
            if kind == "embedding":
                layer = L.Embedding(spec.vocab_size, ls["dim"], rng, self.dtype)
            elif kind == "conv":
                layer = L.DilatedCausalConv(
                    shape_in[1], ls["filters"], ls["kernel"], ls["dilation"], rng, self.dtype
                )
            elif kind == "recurrent":
                layer = L.Recurrent(shape_in[1], ls["units"], ls.get("cell", "gru"), rng, self.dtype)
            elif kind == "max_pool":
                layer = L.MaxPool(ls["width"])
            elif kind == "flatten":
                layer = L.Flatten()
            elif kind == "dense":
                layer = L.Dense(shape_in[0], ls["units"], ls.get("activation", "linear"), rng, self.dtype)
            elif kind == "dropout":
                layer = L.Dropout(ls["rate"])
            elif kind == "softmax_output":
                layer = L.SoftmaxOutput(shape_in[0], spec.vocab_size, self.dtype)
            self.layers.append(layer)

    # -- forward / backward ------------------------------------------------

    def forward(self, contexts, train=False, rng=None) -> np.ndarray:
        """Probabilities [batch, vocab] for int contexts [batch, window]."""
        contexts = np.asarray(contexts)
        if contexts.ndim != 2 or contexts.shape[1] != self.window:
            raise ValueError(f"contexts must be [batch, {self.window}]")
        x = contexts
        for i, layer in enumerate(self.layers):
            x = layer.forward(x, train=train, rng=rng)
            if not np.all(np.isfinite(x)):
                raise L.NumericsError(f"non-finite values in layer {i} ({layer.kind})")
        return x

    def next_distribution(self, context) -> np.ndarray:
        """Inference-mode distribution over the vocabulary for one context."""
        context = np.asarray(context, dtype=np.int64)
        if context.ndim != 1 or context.shape[0] != self.window:
            raise ValueError(f"context length must be {self.window}")
        return self.forward(context[None, :])[0]

    def loss_and_gradients(self, contexts, targets, rng=None):
        """Mean cross-entropy over the batch and the flat gradient vector."""
        targets = np.asarray(targets)
        if len(targets) == 0:
            raise ValueError("empty batch")
        probs = self.forward(contexts, train=True, rng=rng)
        logits = self.layers[-1].logits
        shifted = logits - logits.max(axis=1, keepdims=True)
        logprobs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        loss = float(-logprobs[np.arange(len(targets)), targets].mean())
        if not np.isfinite(loss):
            raise L.NumericsError("non-finite loss")
        dlogits = probs.astype(self.dtype, copy=True)
        dlogits[np.arange(len(targets)), targets] -= 1.0
        dlogits /= len(targets)
        grad = dlogits
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return loss, self.get_gradients()

    def evaluate(self, contexts, targets, batch_size=512):
        """Inference-mode mean loss and argmax accuracy."""
        losses, hits, n = [], 0, len(targets)
        for lo in range(0, n, batch_size):
            ctx = contexts[lo:lo + batch_size]
            tgt = targets[lo:lo + batch_size]
            probs = self.forward(ctx)
            logits = self.layers[-1].logits
            shifted = logits - logits.max(axis=1, keepdims=True)
            logprobs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
            losses.append(-logprobs[np.arange(len(tgt)), tgt].sum())
            hits += int((probs.argmax(axis=1) == tgt).sum())
        return float(sum(losses) / n), hits / n

    # -- weights -----------------------------------------------------------

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    def gradient_arrays(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads]

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def get_weights(self) -> np.ndarray:
        if not self.parameters():
            return np.empty(0, dtype=self.dtype)
        return np.concatenate([p.ravel() for p in self.parameters()])

    def get_gradients(self) -> np.ndarray:
        return np.concatenate([g.ravel() for g in self.gradient_arrays()])

    def set_weights(self, flat) -> None:
        flat = np.asarray(flat, dtype=self.dtype)
        if flat.size != self.param_count():
            raise ValueError(f"expected {self.param_count()} weights, got {flat.size}")
        at = 0
        for p in self.parameters():
            p[...] = flat[at:at + p.size].reshape(p.shape)
            at += p.size
