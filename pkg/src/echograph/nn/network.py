"""Small fixed-architecture networks over the autodiff engine.

A :class:`Network` is an ordered list of layer records applied to a main
stream tensor. Supported layers: dense affine maps, pointwise activations,
row-wise layer normalization, and a single-head cross-attention block whose
queries come from the stream and whose keys/values come from a named side
input. Parameters are seeded deterministically: identical spec + seed gives
bit-identical parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .. import rng
from . import autodiff as ad
from .autodiff import ShapeError, Var

__all__ = [
    "Dense",
    "Activation",
    "LayerNorm",
    "CrossAttention",
    "Layer",
    "Network",
    "TapeError",
    "gradient_check",
    "segment_attention_mask",
]

_ACTIVATIONS = {"tanh": ad.tanh, "relu": ad.relu, "silu": ad.silu}


class TapeError(RuntimeError):
    """backward() was called without a recorded forward pass."""


@dataclass(frozen=True)
class Dense:
    in_dim: int
    out_dim: int
    bias: bool = True


@dataclass(frozen=True)
class Activation:
    kind: str  # tanh | relu | silu


@dataclass(frozen=True)
class LayerNorm:
    dim: int


@dataclass(frozen=True)
class CrossAttention:
    """Single-head attention: stream queries a side feature set.

    Keys/values come from ``inputs[context_name]`` (m, context_dim); an
    additive mask ``inputs[mask_name]`` (n, m) with 0 / -1e30 entries limits
    which rows may attend to which context entries. Output is residual.
    """

    query_dim: int
    context_dim: int
    attn_dim: int
    context_name: str = "context"
    mask_name: str = "attn_mask"


Layer = Union[Dense, Activation, LayerNorm, CrossAttention]

MASK_OFF = -1e30


def segment_attention_mask(
    query_segments: np.ndarray, context_segments: np.ndarray
) -> np.ndarray:
    """Additive mask allowing attention only within equal segment ids."""
    q = np.asarray(query_segments)[:, None]
    c = np.asarray(context_segments)[None, :]
    return np.where(q == c, 0.0, MASK_OFF)


def _uniform_init(gen: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / math.sqrt(max(fan_in, 1))
    return gen.uniform(-bound, bound, size=shape)


class Network:
    """An ordered layer stack with named parameters and a backward tape."""

    def __init__(self, name: str, layers: list[Layer], rng_seed: int):
        self.name = name
        self.layers = list(layers)
        self.rng_seed = int(rng_seed)
        self.params: dict[str, Var] = {}
        self._tape_output: Var | None = None
        self._init_params()

    def _init_params(self) -> None:
        for i, layer in enumerate(self.layers):
            prefix = f"layer{i}"
            if isinstance(layer, Dense):
                self._add_param(
                    f"{prefix}.W", (layer.in_dim, layer.out_dim), layer.in_dim
                )
                if layer.bias:
                    self.params[f"{prefix}.b"] = ad.param(np.zeros(layer.out_dim))
            elif isinstance(layer, LayerNorm):
                self.params[f"{prefix}.gain"] = ad.param(np.ones(layer.dim))
                self.params[f"{prefix}.bias"] = ad.param(np.zeros(layer.dim))
            elif isinstance(layer, CrossAttention):
                self._add_param(
                    f"{prefix}.Wq", (layer.query_dim, layer.attn_dim), layer.query_dim
                )
                self._add_param(
                    f"{prefix}.Wk",
                    (layer.context_dim, layer.attn_dim),
                    layer.context_dim,
                )
                self._add_param(
                    f"{prefix}.Wv",
                    (layer.context_dim, layer.attn_dim),
                    layer.context_dim,
                )
                self._add_param(
                    f"{prefix}.Wo", (layer.attn_dim, layer.query_dim), layer.attn_dim
                )
            elif isinstance(layer, Activation):
                if layer.kind not in _ACTIVATIONS:
                    raise ValueError(f"{self.name}: unknown activation {layer.kind!r}")
            else:
                raise TypeError(f"{self.name}: unknown layer record {layer!r}")

    def _add_param(self, name: str, shape, fan_in: int) -> None:
        gen = rng.stream("net-init", self.rng_seed, self.name, name)
        self.params[name] = ad.param(_uniform_init(gen, fan_in, shape))

    def out_dim(self) -> int:
        for layer in reversed(self.layers):
            if isinstance(layer, Dense):
                return layer.out_dim
            if isinstance(layer, (LayerNorm,)):
                return layer.dim
            if isinstance(layer, CrossAttention):
                return layer.query_dim
        raise ValueError(f"{self.name}: no sized layer")

    def forward(self, inputs: Union[Var, np.ndarray, Mapping[str, object]]) -> Var:
        """Run the stack; the returned Var doubles as the backward tape."""
        if isinstance(inputs, Mapping):
            named = {k: (v if isinstance(v, Var) else ad.const(v)) for k, v in inputs.items()}
            if "x" not in named:
                raise ShapeError(f"{self.name}: inputs must provide 'x'")
            x = named["x"]
        else:
            x = inputs if isinstance(inputs, Var) else ad.const(inputs)
            named = {"x": x}

        squeeze = x.value.ndim == 1
        if squeeze:
            x = _promote_row(x)

        h = x
        for i, layer in enumerate(self.layers):
            h = self._apply_layer(i, layer, h, named)

        if squeeze:
            h = _squeeze_row(h)
        self._tape_output = h
        return h

    def _apply_layer(
        self, i: int, layer: Layer, h: Var, named: Mapping[str, Var]
    ) -> Var:
        prefix = f"layer{i}"
        where = f"{self.name}.{prefix}"
        if isinstance(layer, Dense):
            if h.value.ndim != 2 or h.value.shape[1] != layer.in_dim:
                raise ShapeError(
                    f"{where} (dense): expected (*, {layer.in_dim}), got {h.value.shape}"
                )
            y = ad.matmul(h, self.params[f"{prefix}.W"])
            if layer.bias:
                y = ad.add_bias(y, self.params[f"{prefix}.b"])
            return y
        if isinstance(layer, Activation):
            return _ACTIVATIONS[layer.kind](h)
        if isinstance(layer, LayerNorm):
            if h.value.shape[1] != layer.dim:
                raise ShapeError(
                    f"{where} (layer_norm): expected (*, {layer.dim}), got {h.value.shape}"
                )
            return ad.layer_norm(
                h, self.params[f"{prefix}.gain"], self.params[f"{prefix}.bias"]
            )
        if isinstance(layer, CrossAttention):
            if layer.context_name not in named:
                raise ShapeError(f"{where} (attention): missing input '{layer.context_name}'")
            ctx = named[layer.context_name]
            if h.value.shape[1] != layer.query_dim:
                raise ShapeError(
                    f"{where} (attention): query width {h.value.shape[1]} != {layer.query_dim}"
                )
            if ctx.value.ndim != 2 or ctx.value.shape[1] != layer.context_dim:
                raise ShapeError(
                    f"{where} (attention): context width mismatch {ctx.value.shape}"
                )
            q = ad.matmul(h, self.params[f"{prefix}.Wq"])
            k = ad.matmul(ctx, self.params[f"{prefix}.Wk"])
            v = ad.matmul(ctx, self.params[f"{prefix}.Wv"])
            scores = ad.scale(
                ad.matmul(q, _transpose(k)), 1.0 / math.sqrt(layer.attn_dim)
            )
            if layer.mask_name in named:
                mask = named[layer.mask_name]
                if mask.value.shape != scores.value.shape:
                    raise ShapeError(
                        f"{where} (attention): mask shape {mask.value.shape} "
                        f"!= scores {scores.value.shape}"
                    )
                scores = ad.add(scores, mask)
            attn = ad.softmax_rows(scores)
            gathered = ad.matmul(attn, v)
            return ad.add(h, ad.matmul(gathered, self.params[f"{prefix}.Wo"]))
        raise TypeError(f"{where}: unknown layer record")

    def backward(self, output_gradient: Union[np.ndarray, float]) -> dict[str, np.ndarray]:
        """Gradients of (output . output_gradient) w.r.t. every parameter."""
        if self._tape_output is None:
            raise TapeError(f"{self.name}: backward() before forward()")
        for p in self.params.values():
            p.grad = None
        self._tape_output.backward(output_gradient)
        grads: dict[str, np.ndarray] = {}
        for name, p in self.params.items():
            grads[name] = (
                p.grad.copy() if p.grad is not None else np.zeros_like(p.value)
            )
            if not np.all(np.isfinite(grads[name])):
                raise FloatingPointError(f"{self.name}.{name}: non-finite gradient")
        return grads

    def parameter_values(self) -> dict[str, np.ndarray]:
        return {k: v.value.copy() for k, v in self.params.items()}

    def load_parameter_values(self, values: Mapping[str, np.ndarray]) -> None:
        for k, p in self.params.items():
            arr = np.ascontiguousarray(values[k], dtype=np.float64)
            if arr.shape != p.value.shape:
                raise ShapeError(f"{self.name}.{k}: checkpoint shape {arr.shape}")
            p.value = arr

    def n_params(self) -> int:
        return sum(p.value.size for p in self.params.values())


def _transpose(x: Var) -> Var:
    out = Var(x.value.T, (x,))

    def backward(g: np.ndarray) -> None:
        x.accumulate(g.T)

    if ad.grad_enabled() and out.needs_grad:
        out._backward = backward
    return out


def _promote_row(x: Var) -> Var:
    out = Var(x.value[None, :], (x,))

    def backward(g: np.ndarray) -> None:
        x.accumulate(g[0])

    if ad.grad_enabled() and out.needs_grad:
        out._backward = backward
    return out


def _squeeze_row(x: Var) -> Var:
    out = Var(x.value[0], (x,))

    def backward(g: np.ndarray) -> None:
        x.accumulate(g[None, :])

    if ad.grad_enabled() and out.needs_grad:
        out._backward = backward
    return out


def gradient_check(
    net: Network,
    inputs: Union[np.ndarray, Mapping[str, np.ndarray]],
    fd_step: float = 1e-5,
) -> float:
    """Worst relative error between analytic gradients and central differences.

    The probe loss is the sum of all outputs. Central differences perturb one
    parameter entry at a time, so the net is capped at 10^4 parameters.
    """
    if net.n_params() >= 10_000:
        raise ValueError(f"{net.name}: too many parameters for gradient_check")

    def loss() -> float:
        out = net.forward(inputs)
        val = float(out.value.sum())
        if not math.isfinite(val):
            raise FloatingPointError(f"{net.name}: non-finite loss in gradient_check")
        return val

    loss()
    analytic = net.backward(np.ones(net._tape_output.value.shape))

    worst = 0.0
    for name, p in net.params.items():
        flat = p.value.ravel()
        ana = analytic[name].ravel()
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + fd_step
            hi = loss()
            flat[j] = orig - fd_step
            lo = loss()
            flat[j] = orig
            fd = (hi - lo) / (2.0 * fd_step)
            denom = max(abs(ana[j]), abs(fd), 1e-6)
            worst = max(worst, abs(ana[j] - fd) / denom)
    return worst
