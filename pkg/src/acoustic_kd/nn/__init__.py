"""Minimal reverse-mode autodiff on numpy with the layers the models need."""
from . import functional
from .layers import BatchNorm, Conv1d, Conv2d, Dense, InputNorm, Module
from .optim import Adam
from .tensor import Tensor, as_tensor, backward, parameter, topological_order

__all__ = [
    "Adam", "BatchNorm", "Conv1d", "Conv2d", "Dense", "InputNorm", "Module",
    "Tensor", "as_tensor", "backward", "functional", "parameter", "topological_order",
]
