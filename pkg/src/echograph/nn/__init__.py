"""Dense float64 math, small fixed-architecture networks, and the optimizer."""

from . import autodiff
from .autodiff import ShapeError, Var, no_grad
from .network import (
    Activation,
    CrossAttention,
    Dense,
    LayerNorm,
    Network,
    TapeError,
    gradient_check,
    segment_attention_mask,
)
from .optim import OptimizerState, optimizer_step
from .tensor import tensor

__all__ = [
    "autodiff",
    "ShapeError",
    "Var",
    "no_grad",
    "Dense",
    "Activation",
    "LayerNorm",
    "CrossAttention",
    "Network",
    "TapeError",
    "gradient_check",
    "segment_attention_mask",
    "OptimizerState",
    "optimizer_step",
    "tensor",
]
