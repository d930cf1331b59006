"""Minimal float64 array engine with tape-based reverse-mode differentiation."""

from . import ops
from .gradcheck import grad_check
from .params import (
    ParameterSet,
    ema_update,
    load_checkpoint,
    optimizer_step,
    save_checkpoint,
)
from .rng import stream, substream
from .tensor import Gradients, ShapeError, Tape, Tensor, backward

__all__ = [
    "Gradients",
    "ParameterSet",
    "ShapeError",
    "Tape",
    "Tensor",
    "backward",
    "ema_update",
    "grad_check",
    "load_checkpoint",
    "ops",
    "optimizer_step",
    "save_checkpoint",
    "stream",
    "substream",
]
