"""Dense-tensor layer graph with reverse-mode gradients, losses, Adam,
and bit-exact checkpoint serialization."""

from .graph import ModelGraph, Node, count_params
from .losses import sigmoid, sigmoid_mse, softmax_ce
from .optim import AdamConfig, AdamState, adam_step
from .checkpoint import MAGIC, load_checkpoint, save_checkpoint

__all__ = [
    "ModelGraph",
    "Node",
    "count_params",
    "sigmoid",
    "sigmoid_mse",
    "softmax_ce",
    "AdamConfig",
    "AdamState",
    "adam_step",
    "MAGIC",
    "save_checkpoint",
    "load_checkpoint",
]
