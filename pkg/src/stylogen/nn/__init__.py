"""Minimal dense-tensor numerics with backpropagation for the two model
families (gated recurrent and dilated causal convolutional), training loop
and checkpointing."""

from .kernels import BACKEND
from .layers import NumericsError
from .model import ModelSpec, Network, conv_spec, recurrent_spec
from .training import (
    Adam,
    Checkpoint,
    Hyperparams,
    load_checkpoint,
    restore_network,
    save_checkpoint,
    split_windows,
    train,
)

__all__ = [
    "BACKEND",
    "NumericsError",
    "ModelSpec",
    "Network",
    "conv_spec",
    "recurrent_spec",
    "Adam",
    "Checkpoint",
    "Hyperparams",
    "load_checkpoint",
    "restore_network",
    "save_checkpoint",
    "split_windows",
    "train",
]
