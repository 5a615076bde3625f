"""Training loop, Adam optimizer and checkpoint persistence.

Checkpoints capture the model spec, the vocabulary, the flat float32 weight
vector and training metadata, and are emitted on a fixed epoch schedule: one
before any update (epoch 0), one every ``checkpoint_every`` epochs and one
after the final epoch. Runs are deterministic given the rng seed.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..corpus import Vocabulary, Windows
from .layers import NumericsError, SoftmaxOutput
from .model import ModelSpec, Network

MAGIC = b"SGCK"
FORMAT_VERSION = 1


@dataclass
class Hyperparams:
    epochs: int = 3
    batch_size: int = 64
    lr: float = 1e-3
    test_fraction: float = 0.1
    checkpoint_every: int = 1
    rng_seed: int = 0
    # Small frequency tilt on the output bias: the untrained model then
    # predicts the most frequent token (argmax) while its loss stays within
    # a fraction of a percent of ln(V).
    output_bias_tilt: float = 0.05
    eval_cap: int = 20000


@dataclass
class Checkpoint:
    spec: ModelSpec
    vocab: Vocabulary
    weights: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def checkpoint_id(self) -> str:
        return self.meta.get("checkpoint_id", "")


class Adam:
    """Adam with bias correction; updates parameter arrays in place."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        scale = self.lr * np.sqrt(1.0 - b2 ** self.t) / (1.0 - b1 ** self.t)
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m += (1.0 - b1) * (g - m)
            v += (1.0 - b2) * (g * g - v)
            p -= scale * m / (np.sqrt(v) + self.eps)


def split_windows(windows: Windows, test_fraction: float, rng_seed: int):
    """Deterministic train/test split by permuting window indices."""
    n = len(windows)
    perm = np.random.default_rng([rng_seed, 0]).permutation(n)
    n_test = int(round(n * test_fraction))
    if test_fraction > 0:
        n_test = min(max(n_test, 1), n - 1)
    return perm[n_test:], perm[:n_test]


def _tilt_output_bias(net: Network, targets, tilt: float) -> None:
    counts = np.bincount(targets, minlength=net.spec.vocab_size).astype(np.float64)
    logf = np.log(counts + 1.0)
    out = net.layers[-1]
    assert isinstance(out, SoftmaxOutput)
    out.b[:] = (tilt * (logf - logf.mean())).astype(net.dtype)


def train(spec: ModelSpec, windows: Windows, vocab: Vocabulary, hp: Hyperparams) -> list[Checkpoint]:
    """Train a network and return its checkpoint trail.

    A non-finite loss aborts the run with a warning, returning the
    checkpoints recorded so far (at least the initial one).
    """
    if len(windows) < 2:
        raise ValueError("need at least two training windows")
    if windows.n != spec.window:
        raise ValueError(f"window length {windows.n} does not match spec window {spec.window}")
    train_idx, test_idx = split_windows(windows, hp.test_fraction, hp.rng_seed)
    net = Network(spec, vocab, init_seed=[hp.rng_seed, 1])
    if hp.output_bias_tilt:
        _tilt_output_bias(net, windows.targets[train_idx], hp.output_bias_tilt)
    adam = Adam(net.parameters(), lr=hp.lr)
    checkpoints: list[Checkpoint] = []
    windows_seen = 0

    def snapshot(epoch, train_loss):
        test_loss, test_acc = (float("nan"), float("nan"))
        if len(test_idx):
            test_loss, test_acc = net.evaluate(
                windows.contexts[test_idx], windows.targets[test_idx]
            )
        meta = {
            "checkpoint_id": f"epoch{epoch:04d}",
            "epoch": epoch,
            "windows_seen": windows_seen,
            "train_loss": float(train_loss),
            "test_loss": test_loss,
            "test_accuracy": test_acc,
        }
        checkpoints.append(Checkpoint(spec, vocab, net.get_weights().copy(), meta))

    eval_train = train_idx[: hp.eval_cap]
    snapshot(0, net.evaluate(windows.contexts[eval_train], windows.targets[eval_train])[0])

    for epoch in range(1, hp.epochs + 1):
        order = np.random.default_rng([hp.rng_seed, 2, epoch]).permutation(train_idx)
        drop_rng = np.random.default_rng([hp.rng_seed, 3, epoch])
        batch_losses = []
        try:
            for lo in range(0, len(order), hp.batch_size):
                idx = order[lo:lo + hp.batch_size]
                loss, _ = net.loss_and_gradients(
                    windows.contexts[idx], windows.targets[idx], rng=drop_rng
                )
                adam.step(net.gradient_arrays())
                batch_losses.append(loss)
                windows_seen += len(idx)
        except NumericsError as exc:
            warnings.warn(f"training diverged at epoch {epoch} ({exc}); stopping early")
            break
        if epoch % hp.checkpoint_every == 0 or epoch == hp.epochs:
            snapshot(epoch, np.mean(batch_losses))
    return checkpoints


# -- persistence -----------------------------------------------------------


def _canonical_json(blob: dict) -> bytes:
    return json.dumps(blob, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Binary layout: magic, u32 version, u32 JSON length, JSON blob
    (spec + vocab + meta), little-endian float32 weights."""
    blob = {
        "format_version": FORMAT_VERSION,
        "spec": ckpt.spec.to_json(),
        "vocab": ckpt.vocab.to_json(),
        "meta": ckpt.meta,
    }
    payload = _canonical_json(blob)
    weights = np.ascontiguousarray(ckpt.weights, dtype="<f4")
    if weights.size != ckpt.spec.param_count():
        raise ValueError("weight count does not match spec")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(payload)))
        fh.write(payload)
        fh.write(weights.tobytes())


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError("not a checkpoint file (bad magic)")
    version, jlen = struct.unpack("<II", raw[4:12])
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    blob = json.loads(raw[12:12 + jlen].decode("utf-8"))
    spec = ModelSpec.from_json(blob["spec"])
    weights = np.frombuffer(raw[12 + jlen:], dtype="<f4")
    if weights.size != spec.param_count():
        raise ValueError("weight payload does not match spec parameter count")
    return Checkpoint(spec, Vocabulary.from_json(blob["vocab"]), weights.copy(), blob["meta"])


def restore_network(ckpt: Checkpoint) -> Network:
    net = Network(ckpt.spec, ckpt.vocab)
    net.set_weights(ckpt.weights)
    net.checkpoint_id = ckpt.checkpoint_id
    return net
