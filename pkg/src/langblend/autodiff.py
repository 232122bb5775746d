"""Minimal reverse-mode automatic differentiation on dense numpy arrays.

Each op builds a fresh node in a dynamically recorded graph; `backward` walks
the graph once in reverse topological order. There is no implicit
broadcasting: every op states the shapes it accepts and rejects anything
else, so shape bugs surface at the call site instead of as silently wrong
gradients. Ops preserve the dtype of their inputs (the model runs float32;
tests may build float64 graphs), while scalar reductions accumulate and
store in float64.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import IllegalStateError, InvalidArgumentError

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph recording within the block (inference paths)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _as_float_array(data) -> np.ndarray:
    arr = np.asarray(data)
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float32)
    return arr


def _require_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{what} contains NaN or Inf")


class Tensor:
    """A graph node: float array plus optional backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_float_array(data)
        _require_finite(self.data, "tensor data")
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """A persistent trainable tensor; gradients accumulate until zeroed."""

    __slots__ = ()

    def __init__(self, data, trainable: bool = True):
        super().__init__(data, requires_grad=trainable)

    @property
    def trainable(self) -> bool:
        return self.requires_grad

    @trainable.setter
    def trainable(self, value: bool) -> None:
        self.requires_grad = bool(value)


def zero_grads(params: Iterable[Parameter]) -> None:
    """Reset gradients to zero buffers so the next backward starts clean."""
    for p in params:
        p.grad = np.zeros_like(p.data)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    _require_finite(data, "op result")
    needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = needs
    out._parents = parents if needs else ()
    out._backward = backward if needs else None
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    g = g.astype(t.data.dtype, copy=False)
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise InvalidArgumentError(f"add: shape mismatch {a.data.shape} vs {b.data.shape}")

    def bw(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _node(a.data + b.data, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise InvalidArgumentError(f"sub: shape mismatch {a.data.shape} vs {b.data.shape}")

    def bw(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return _node(a.data - b.data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise InvalidArgumentError(f"mul: shape mismatch {a.data.shape} vs {b.data.shape}")

    def bw(g):
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    return _node(a.data * b.data, (a, b), bw)


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)

    def bw(g):
        _accumulate(a, g * s)

    return _node(a.data * s, (a,), bw)


def add_rows(mat: Tensor, vec: Tensor) -> Tensor:
    """Add a vector to every row of a matrix (the one sanctioned row-broadcast)."""
    if mat.data.ndim != 2 or vec.data.ndim != 1 or mat.data.shape[1] != vec.data.shape[0]:
        raise InvalidArgumentError(
            f"add_rows: need (m,n) and (n,), got {mat.data.shape} and {vec.data.shape}"
        )

    def bw(g):
        _accumulate(mat, g)
        _accumulate(vec, g.sum(axis=0))

    return _node(mat.data + vec.data[None, :], (mat, vec), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    an, bn = a.data.ndim, b.data.ndim
    if an not in (1, 2) or bn not in (1, 2):
        raise InvalidArgumentError("matmul: operands must be 1-D or 2-D")
    if a.data.shape[-1] != b.data.shape[0]:
        raise InvalidArgumentError(
            f"matmul: inner dims differ, {a.data.shape} vs {b.data.shape}"
        )
    out = a.data @ b.data

    def bw(g):
        if an == 2 and bn == 2:
            _accumulate(a, g @ b.data.T)
            _accumulate(b, a.data.T @ g)
        elif an == 2 and bn == 1:
            _accumulate(a, np.outer(g, b.data))
            _accumulate(b, a.data.T @ g)
        elif an == 1 and bn == 2:
            _accumulate(a, b.data @ g)
            _accumulate(b, np.outer(a.data, g))
        else:
            _accumulate(a, g * b.data)
            _accumulate(b, g * a.data)

    return _node(out, (a, b), bw)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise InvalidArgumentError("transpose: 2-D only")

    def bw(g):
        _accumulate(a, g.T)

    return _node(np.ascontiguousarray(a.data.T), (a,), bw)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def bw(g):
        _accumulate(a, g * (1.0 - out * out))

    return _node(out, (a,), bw)


_GELU_C = float(np.sqrt(2.0 / np.pi))
_GELU_A = 0.044715


def gelu(a: Tensor) -> Tensor:
    """Smooth gate x*Phi(x), tanh approximation."""
    x = a.data
    u = _GELU_C * (x + _GELU_A * x**3)
    t = np.tanh(u)
    out = 0.5 * x * (1.0 + t)

    def bw(g):
        du = _GELU_C * (1.0 + 3.0 * _GELU_A * x**2)
        _accumulate(a, g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du))

    return _node(out, (a,), bw)


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0.0)

    def bw(g):
        _accumulate(a, g * (a.data > 0.0))

    return _node(out, (a,), bw)


def row_softmax(a: Tensor) -> Tensor:
    """Softmax along the last axis of a 2-D tensor, numerically shifted."""
    if a.data.ndim != 2:
        raise InvalidArgumentError("row_softmax: 2-D only")
    z = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)

    def bw(g):
        dot = (g * p).sum(axis=1, keepdims=True)
        _accumulate(a, p * (g - dot))

    return _node(p, (a,), bw)


def gather(t: Tensor, indices) -> Tensor:
    """Fancy-index rows/elements; backward scatter-adds into the source."""
    idx = np.asarray(indices)
    if not np.issubdtype(idx.dtype, np.integer):
        raise InvalidArgumentError("gather: indices must be integers")
    if idx.size and (idx.min() < 0 or idx.max() >= t.data.shape[0]):
        raise InvalidArgumentError("gather: index out of range")

    def bw(g):
        if t.requires_grad:
            buf = np.zeros_like(t.data)
            np.add.at(buf, idx, g)
            _accumulate(t, buf)

    return _node(t.data[idx], (t,), bw)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    """Stack 1-D vectors and 2-D blocks (equal widths) into one matrix."""
    if not parts:
        raise InvalidArgumentError("concat_rows: empty input")
    blocks = []
    for p in parts:
        if p.data.ndim == 1:
            blocks.append(p.data[None, :])
        elif p.data.ndim == 2:
            blocks.append(p.data)
        else:
            raise InvalidArgumentError("concat_rows: parts must be 1-D or 2-D")
    width = blocks[0].shape[1]
    if any(b.shape[1] != width for b in blocks):
        raise InvalidArgumentError("concat_rows: width mismatch")
    out = np.concatenate(blocks, axis=0)

    def bw(g):
        off = 0
        for p, b in zip(parts, blocks):
            piece = g[off : off + b.shape[0]]
            _accumulate(p, piece[0] if p.data.ndim == 1 else piece)
            off += b.shape[0]

    return _node(out, tuple(parts), bw)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    if a.data.ndim != 2:
        raise InvalidArgumentError("slice_rows: 2-D only")
    if not (0 <= start <= stop <= a.data.shape[0]):
        raise InvalidArgumentError(f"slice_rows: bad range [{start}, {stop})")

    def bw(g):
        if a.requires_grad:
            buf = np.zeros_like(a.data)
            buf[start:stop] += g
            _accumulate(a, buf)

    return _node(a.data[start:stop].copy(), (a,), bw)


def dropout(a: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when rate == 0."""
    if not 0.0 <= rate < 1.0:
        raise InvalidArgumentError("dropout: rate must be in [0, 1)")
    if rate == 0.0:
        return a
    keep = (rng.random(a.data.shape) >= rate).astype(a.data.dtype)
    scale_ = 1.0 / (1.0 - rate)

    def bw(g):
        _accumulate(a, g * keep * scale_)

    return _node(a.data * keep * scale_, (a,), bw)


def sum_all(a: Tensor) -> Tensor:
    out = np.float64(a.data.sum(dtype=np.float64))

    def bw(g):
        _accumulate(a, np.full_like(a.data, float(g)))

    return _node(np.asarray(out), (a,), bw)


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared error over all elements; float64 scalar."""
    if pred.data.shape != target.data.shape:
        raise InvalidArgumentError(
            f"mse_loss: shape mismatch {pred.data.shape} vs {target.data.shape}"
        )
    diff = pred.data.astype(np.float64) - target.data.astype(np.float64)
    n = diff.size
    out = np.asarray((diff * diff).sum() / n)

    def bw(g):
        d = float(g) * 2.0 * diff / n
        _accumulate(pred, d)
        _accumulate(target, -d)

    return _node(out, (pred, target), bw)


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean softmax cross-entropy of (T, V) logits against T integer targets.

    log-sum-exp and the mean run in float64; the gradient (softmax - onehot)/T
    is cast back to the logits dtype.
    """
    if logits.data.ndim != 2:
        raise InvalidArgumentError("cross_entropy: logits must be 2-D (T, V)")
    tgt = np.asarray(targets)
    if tgt.ndim != 1 or tgt.shape[0] != logits.data.shape[0]:
        raise InvalidArgumentError("cross_entropy: need one target per row")
    if not np.issubdtype(tgt.dtype, np.integer):
        raise InvalidArgumentError("cross_entropy: targets must be integers")
    v = logits.data.shape[1]
    if tgt.size and (tgt.min() < 0 or tgt.max() >= v):
        raise InvalidArgumentError("cross_entropy: target index out of range")

    z = logits.data.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(tgt.shape[0])
    nll = lse - z[rows, tgt]
    out = np.asarray(nll.mean())

    def bw(g):
        p = np.exp(z - lse[:, None])
        p[rows, tgt] -= 1.0
        _accumulate(logits, float(g) * p / tgt.shape[0])

    return _node(out, (logits,), bw)


def softmax(values) -> np.ndarray:
    """Plain (non-graph) softmax of a finite 1-D vector, float64 output."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise InvalidArgumentError("softmax: need a non-empty 1-D vector")
    _require_finite(v, "softmax input")
    e = np.exp(v - v.max())
    return e / e.sum()


def backward(loss: Tensor) -> None:
    """Populate gradients of every reachable requires-grad tensor."""
    if loss.data.shape != ():
        raise InvalidArgumentError("backward: loss must be a scalar")
    if not loss.requires_grad:
        raise IllegalStateError("backward: loss does not depend on any trainable tensor")

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    loss.grad = np.ones((), dtype=loss.data.dtype)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
