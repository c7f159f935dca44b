"""Adaptive-moment optimizer with decoupled multiplicative weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

__all__ = ["OptimizerState", "optimizer_step"]


@dataclass
class OptimizerState:
    """Per-parameter moment buffers plus hyperparameters.

    Moments are allocated lazily on the first step so the state can be built
    before the parameter set is known.
    """

    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


def optimizer_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: OptimizerState,
) -> dict[str, np.ndarray]:
    """One bias-corrected update; returns fresh parameter arrays.

    Weight decay is decoupled: parameters are scaled by (1 - lr * decay)
    independently of the gradient-driven update.
    """
    if state.learning_rate <= 0.0:
        raise ValueError("optimizer_step: learning rate must be positive")
    state.step_count += 1
    t = state.step_count
    lr, b1, b2 = state.learning_rate, state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t

    updated: dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"optimizer_step: {name}: grad shape {g.shape} != {p.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"optimizer_step: non-finite gradient for {name}")
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
            state.first_moment[name] = m
            state.second_moment[name] = v
        # in-place moment updates; parameters get fresh arrays
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        denom = np.sqrt(v / bc2)
        denom += state.eps
        new = p * (1.0 - lr * state.weight_decay)
        new -= (lr / bc1) * m / denom
        updated[name] = new
    return updated
