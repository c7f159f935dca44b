"""Reverse-mode automatic differentiation over dense float64 arrays.

Every value is a :class:`Var` wrapping a C-contiguous ``float64`` ndarray.
Operations build a computation graph (the tape); ``Var.backward`` walks it in
reverse topological order and accumulates gradients into ``Var.grad``.
Constants created with :func:`const` carry ``needs_grad=False`` and their
subgraphs are skipped entirely during the backward pass.

The op set is deliberately small: dense algebra, a few activations, row-wise
layer normalization and softmax, column/row concatenation and slicing, row
gather, and segment mean. There is no implicit broadcasting; the only
broadcast op is the explicit ``add_bias``. Shape mismatches raise
:class:`ShapeError` instead of being coerced.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "Var",
    "no_grad",
    "grad_enabled",
    "const",
    "param",
    "matmul",
    "add",
    "add_bias",
    "sub",
    "neg",
    "mul",
    "scale",
    "concat_cols",
    "concat_rows",
    "slice_cols",
    "slice_rows",
    "gather_rows",
    "segment_mean",
    "tanh",
    "relu",
    "silu",
    "layer_norm",
    "softmax_rows",
    "square",
    "sum_all",
    "mean_all",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible. Carries no coercion."""


_STATE = threading.local()


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (inference fast path).

    The flag is thread-local so concurrent inference threads cannot switch
    each other's mode.
    """
    prev = grad_enabled()
    _STATE.grad_enabled = False
    try:
        yield
    finally:
        _STATE.grad_enabled = prev


def grad_enabled() -> bool:
    return getattr(_STATE, "grad_enabled", True)


def _as_array(value) -> np.ndarray:
    return np.ascontiguousarray(value, dtype=np.float64)


class Var:
    """A node in the computation graph: a float64 array plus gradient slot."""

    __slots__ = ("value", "grad", "_parents", "_backward", "needs_grad")

    def __init__(
        self,
        value,
        parents: Sequence["Var"] = (),
        backward: Callable[[np.ndarray], None] | None = None,
        needs_grad: bool | None = None,
    ):
        self.value = _as_array(value)
        self.grad: np.ndarray | None = None
        if grad_enabled():
            self._parents = tuple(parents)
            self._backward = backward
            if needs_grad is None:
                needs_grad = any(p.needs_grad for p in self._parents)
            self.needs_grad = needs_grad
        else:
            self._parents = ()
            self._backward = None
            self.needs_grad = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def accumulate_owned(self, g: np.ndarray) -> None:
        """Accumulate an array the caller just allocated (no defensive copy)."""
        if self.grad is None:
            self.grad = g
        else:
            self.grad += g

    def backward(self, seed: np.ndarray | float = 1.0) -> None:
        """Accumulate d(self)/d(leaf) into every grad-requiring Var's ``grad``."""
        seed_arr = np.broadcast_to(_as_array(seed), self.value.shape).copy()
        order = _topo_order(self)
        self.accumulate(seed_arr)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def detach(self) -> "Var":
        return Var(self.value)

    def item(self) -> float:
        if self.value.size != 1:
            raise ShapeError(f"item() on non-scalar Var of shape {self.value.shape}")
        return float(self.value.reshape(-1)[0])

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Var(shape={self.value.shape})"


def _topo_order(root: Var) -> list[Var]:
    # Iterative DFS; graphs from long sampling loops would overflow recursion.
    # Subgraphs that require no gradient are never entered.
    order: list[Var] = []
    visited: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.needs_grad and id(p) not in visited:
                stack.append((p, False))
    return order


def const(value) -> Var:
    return Var(value, needs_grad=False)


def param(value) -> Var:
    return Var(value, needs_grad=True)


def _wrap(x) -> Var:
    return x if isinstance(x, Var) else Var(x, needs_grad=False)


def _finish(out: Var, backward: Callable[[np.ndarray], None]) -> Var:
    if out._backward is None and out.needs_grad:
        out._backward = backward
    return out


def _check_same_shape(a: Var, b: Var, op: str) -> None:
    if a.value.shape != b.value.shape:
        raise ShapeError(f"{op}: shape mismatch {a.value.shape} vs {b.value.shape}")


def matmul(a: Var, b: Var) -> Var:
    a, b = _wrap(a), _wrap(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(
            f"matmul: incompatible shapes {a.value.shape} @ {b.value.shape}"
        )
    out = Var(a.value @ b.value, (a, b))

    def backward(g: np.ndarray) -> None:
        if a.needs_grad:
            a.accumulate_owned(g @ b.value.T)
        if b.needs_grad:
            b.accumulate_owned(a.value.T @ g)

    return _finish(out, backward)


def add(a: Var, b: Var) -> Var:
    a, b = _wrap(a), _wrap(b)
    _check_same_shape(a, b, "add")
    out = Var(a.value + b.value, (a, b))

    def backward(g: np.ndarray) -> None:
        if a.needs_grad:
            a.accumulate(g)
        if b.needs_grad:
            b.accumulate(g)

    return _finish(out, backward)


def add_bias(x: Var, b: Var) -> Var:
    """Row-broadcast add: x (n, d) + b (d,). The only sanctioned broadcast."""
    x, b = _wrap(x), _wrap(b)
    if x.value.ndim != 2 or b.value.ndim != 1 or x.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"add_bias: {x.value.shape} + {b.value.shape}")
    out = Var(x.value + b.value[None, :], (x, b))

    def backward(g: np.ndarray) -> None:
        if x.needs_grad:
            x.accumulate(g)
        if b.needs_grad:
            b.accumulate_owned(g.sum(axis=0))

    return _finish(out, backward)


def sub(a: Var, b: Var) -> Var:
    a, b = _wrap(a), _wrap(b)
    _check_same_shape(a, b, "sub")
    out = Var(a.value - b.value, (a, b))

    def backward(g: np.ndarray) -> None:
        if a.needs_grad:
            a.accumulate(g)
        if b.needs_grad:
            b.accumulate_owned(-g)

    return _finish(out, backward)


def neg(a: Var) -> Var:
    return scale(a, -1.0)


def mul(a: Var, b: Var) -> Var:
    a, b = _wrap(a), _wrap(b)
    _check_same_shape(a, b, "mul")
    out = Var(a.value * b.value, (a, b))

    def backward(g: np.ndarray) -> None:
        if a.needs_grad:
            a.accumulate_owned(g * b.value)
        if b.needs_grad:
            b.accumulate_owned(g * a.value)

    return _finish(out, backward)


def scale(a: Var, s: float) -> Var:
    a = _wrap(a)
    s = float(s)
    out = Var(a.value * s, (a,))

    def backward(g: np.ndarray) -> None:
        a.accumulate_owned(g * s)

    return _finish(out, backward)


def concat_cols(parts: Iterable[Var]) -> Var:
    parts = [_wrap(p) for p in parts]
    if not parts:
        raise ShapeError("concat_cols: empty input")
    rows = parts[0].value.shape[0]
    for p in parts:
        if p.value.ndim != 2 or p.value.shape[0] != rows:
            raise ShapeError("concat_cols: row counts differ")
    out = Var(np.concatenate([p.value for p in parts], axis=1), tuple(parts))
    widths = [p.value.shape[1] for p in parts]

    def backward(g: np.ndarray) -> None:
        start = 0
        for p, w in zip(parts, widths):
            if p.needs_grad:
                p.accumulate(g[:, start : start + w])
            start += w

    return _finish(out, backward)


def concat_rows(parts: Iterable[Var]) -> Var:
    parts = [_wrap(p) for p in parts]
    if not parts:
        raise ShapeError("concat_rows: empty input")
    cols = parts[0].value.shape[1]
    for p in parts:
        if p.value.ndim != 2 or p.value.shape[1] != cols:
            raise ShapeError("concat_rows: column counts differ")
    out = Var(np.concatenate([p.value for p in parts], axis=0), tuple(parts))
    heights = [p.value.shape[0] for p in parts]

    def backward(g: np.ndarray) -> None:
        start = 0
        for p, h in zip(parts, heights):
            if p.needs_grad:
                p.accumulate(g[start : start + h, :])
            start += h

    return _finish(out, backward)


def slice_cols(x: Var, start: int, stop: int) -> Var:
    x = _wrap(x)
    if x.value.ndim != 2 or not (0 <= start <= stop <= x.value.shape[1]):
        raise ShapeError(f"slice_cols: [{start}:{stop}] of {x.value.shape}")
    out = Var(x.value[:, start:stop].copy(), (x,))

    def backward(g: np.ndarray) -> None:
        full = np.zeros_like(x.value)
        full[:, start:stop] = g
        x.accumulate_owned(full)

    return _finish(out, backward)


def slice_rows(x: Var, start: int, stop: int) -> Var:
    x = _wrap(x)
    if x.value.ndim != 2 or not (0 <= start <= stop <= x.value.shape[0]):
        raise ShapeError(f"slice_rows: [{start}:{stop}] of {x.value.shape}")
    out = Var(x.value[start:stop, :].copy(), (x,))

    def backward(g: np.ndarray) -> None:
        full = np.zeros_like(x.value)
        full[start:stop, :] = g
        x.accumulate_owned(full)

    return _finish(out, backward)


def gather_rows(x: Var, idx: np.ndarray) -> Var:
    x = _wrap(x)
    idx = np.asarray(idx, dtype=np.intp)
    if x.value.ndim != 2:
        raise ShapeError("gather_rows: expects a 2-D source")
    out = Var(x.value[idx], (x,))

    def backward(g: np.ndarray) -> None:
        full = np.zeros_like(x.value)
        np.add.at(full, idx, g)
        x.accumulate_owned(full)

    return _finish(out, backward)


def segment_mean(x: Var, segments: np.ndarray, n_segments: int) -> Var:
    """Mean of the rows of ``x`` grouped by segment id. Empty segments yield 0."""
    x = _wrap(x)
    segments = np.asarray(segments, dtype=np.intp)
    if x.value.ndim != 2 or segments.shape != (x.value.shape[0],):
        raise ShapeError("segment_mean: segments must index rows of x")
    counts = np.bincount(segments, minlength=n_segments).astype(np.float64)
    safe = np.maximum(counts, 1.0)
    sums = np.zeros((n_segments, x.value.shape[1]))
    np.add.at(sums, segments, x.value)
    out = Var(sums / safe[:, None], (x,))

    def backward(g: np.ndarray) -> None:
        x.accumulate_owned(g[segments] / safe[segments, None])

    return _finish(out, backward)


def tanh(x: Var) -> Var:
    x = _wrap(x)
    y = np.tanh(x.value)
    out = Var(y, (x,))

    def backward(g: np.ndarray) -> None:
        x.accumulate_owned(g * (1.0 - y * y))

    return _finish(out, backward)


def relu(x: Var) -> Var:
    x = _wrap(x)
    out = Var(np.maximum(x.value, 0.0), (x,))

    def backward(g: np.ndarray) -> None:
        x.accumulate_owned(g * (x.value > 0.0))

    return _finish(out, backward)


def silu(x: Var) -> Var:
    x = _wrap(x)
    sig = 1.0 / (1.0 + np.exp(-x.value))
    out = Var(x.value * sig, (x,))

    def backward(g: np.ndarray) -> None:
        x.accumulate_owned(g * sig * (1.0 + x.value * (1.0 - sig)))

    return _finish(out, backward)


def layer_norm(x: Var, gain: Var, bias: Var, eps: float = 1e-5) -> Var:
    x, gain, bias = _wrap(x), _wrap(gain), _wrap(bias)
    if x.value.ndim != 2:
        raise ShapeError("layer_norm: expects a 2-D input")
    d = x.value.shape[1]
    if gain.value.shape != (d,) or bias.value.shape != (d,):
        raise ShapeError("layer_norm: gain/bias must match feature width")
    mu = x.value.mean(axis=1, keepdims=True)
    centered = x.value - mu
    var = (centered * centered).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = Var(xhat * gain.value[None, :] + bias.value[None, :], (x, gain, bias))

    def backward(g: np.ndarray) -> None:
        if gain.needs_grad:
            gain.accumulate_owned((g * xhat).sum(axis=0))
        if bias.needs_grad:
            bias.accumulate_owned(g.sum(axis=0))
        if x.needs_grad:
            gx = g * gain.value[None, :]
            # d/dx of (x - mu) * inv with mu, var both functions of x
            term = gx - gx.mean(axis=1, keepdims=True) - xhat * (gx * xhat).mean(
                axis=1, keepdims=True
            )
            x.accumulate_owned(term * inv)

    return _finish(out, backward)


def softmax_rows(x: Var) -> Var:
    x = _wrap(x)
    if x.value.ndim != 2:
        raise ShapeError("softmax_rows: expects a 2-D input")
    shifted = x.value - x.value.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)
    out = Var(s, (x,))

    def backward(g: np.ndarray) -> None:
        dot = (g * s).sum(axis=1, keepdims=True)
        x.accumulate_owned(s * (g - dot))

    return _finish(out, backward)


def square(x: Var) -> Var:
    x = _wrap(x)
    out = Var(x.value * x.value, (x,))

    def backward(g: np.ndarray) -> None:
        x.accumulate_owned(g * 2.0 * x.value)

    return _finish(out, backward)


def sum_all(x: Var) -> Var:
    x = _wrap(x)
    out = Var(np.asarray(x.value.sum()), (x,))

    def backward(g: np.ndarray) -> None:
        x.accumulate_owned(np.full_like(x.value, g.reshape(-1)[0]))

    return _finish(out, backward)


def mean_all(x: Var) -> Var:
    x = _wrap(x)
    n = x.value.size
    out = Var(np.asarray(x.value.mean()), (x,))

    def backward(g: np.ndarray) -> None:
        x.accumulate_owned(np.full_like(x.value, g.reshape(-1)[0] / n))

    return _finish(out, backward)
