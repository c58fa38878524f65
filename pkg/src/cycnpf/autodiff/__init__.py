"""Minimal reverse-mode autodiff over numpy, with Adam and gradient checking."""

from . import ops
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import grad_check, numeric_grad
from .init import orthogonal, scaled_uniform
from .optim import Adam, adam_step, init_adam_state
from .tensor import Graph, ShapeError, Tensor, as_tensor, backward

__all__ = [
    "Adam", "Graph", "ShapeError", "Tensor", "adam_step", "as_tensor", "backward", "grad_check",
    "init_adam_state", "load_checkpoint", "numeric_grad", "ops", "orthogonal", "save_checkpoint",
    "scaled_uniform",
]
