"""Minimal reverse-mode autodiff on numpy arrays."""

from . import ops
from .optim import Adam, adam_step, cosine_lr
from .tensor import Tape, Tensor, as_tensor, backward, grad_enabled, no_grad

__all__ = ["Adam", "Tape", "Tensor", "adam_step", "as_tensor", "backward", "cosine_lr", "grad_enabled",
           "no_grad", "ops"]
