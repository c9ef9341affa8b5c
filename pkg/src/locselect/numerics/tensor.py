"""Reverse-mode autodiff over dense float64 arrays.

A ``Tensor`` wraps a numpy array plus an optional gradient and a backward
closure. Graphs are built eagerly by the ops below and torn down by normal
garbage collection after ``backward``. The engine is deliberately small: only
the ops the networks in this package need, all with broadcasting-aware
backward rules, all checkable against finite differences.

Gradient accumulation is copy-on-write: a parent may initially alias the
child's gradient buffer and is copied the first time a second path writes
into it. This keeps long recurrent graphs (hundreds of timesteps) cheap.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit

_GRAD_ENABLED = True
_CHECK_FINITE = False


def set_debug_checks(enabled: bool) -> None:
    """Toggle NaN/Inf detection after every op (debug mode; slow)."""
    global _CHECK_FINITE
    _CHECK_FINITE = bool(enabled)


@contextmanager
def no_grad():
    """Disable graph construction inside the block (pure inference)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class ShapeError(ValueError):
    pass


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce gradient g back to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


class Tensor:
    """Array value with shape/data plus gradient bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bw", "_own")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._bw = None
        self._own = False
        if _CHECK_FINITE and not np.all(np.isfinite(self.data)):
            raise FloatingPointError("non-finite values in tensor")

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # -- gradient plumbing --------------------------------------------------

    def alloc_grad(self) -> None:
        """Install a persistent zero gradient slot (used by ParamStore)."""
        self.grad = np.zeros_like(self.data)
        self._own = True

    def zero_grad(self) -> None:
        if self.grad is None or not self._own:
            self.alloc_grad()
        else:
            self.grad.fill(0.0)

    def _acc(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g  # may alias upstream buffer; copied on next write
            self._own = False
        elif self._own:
            self.grad += g
        else:
            self.grad = self.grad + g
            self._own = True

    def _acc_at(self, index, g: np.ndarray) -> None:
        if self.grad is None:
            self.alloc_grad()
        elif not self._own:
            self.grad = self.grad.copy()
            self._own = True
        self.grad[index] += g

    def backward(self, seed: np.ndarray | None = None) -> None:
        """Accumulate gradients of this value into every reachable leaf."""
        if seed is None:
            if self.data.size != 1:
                raise ValueError("backward() without seed requires a scalar")
            seed = np.ones_like(self.data)
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self._acc(np.asarray(seed, dtype=np.float64))
        for node in reversed(order):
            if node._bw is not None and node.grad is not None:
                node._bw(node.grad)

    # -- op helpers -----------------------------------------------------------

    @staticmethod
    def _result(data: np.ndarray, parents: tuple["Tensor", ...], bw) -> "Tensor":
        out = Tensor(data)
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(p for p in parents if p.requires_grad)
            out._bw = bw
        return out

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)

        def bw(g):
            if self.requires_grad:
                self._acc(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._acc(_unbroadcast(g, other.data.shape))

        return Tensor._result(self.data + other.data, (self, other), bw)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        def bw(g):
            self._acc(-g)

        return Tensor._result(-self.data, (self,), bw)

    def __sub__(self, other) -> "Tensor":
        other = as_tensor(other)

        def bw(g):
            if self.requires_grad:
                self._acc(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._acc(_unbroadcast(-g, other.data.shape))

        return Tensor._result(self.data - other.data, (self, other), bw)

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other).__sub__(self)

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)

        def bw(g):
            if self.requires_grad:
                self._acc(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._acc(_unbroadcast(g * self.data, other.data.shape))

        return Tensor._result(self.data * other.data, (self, other), bw)

    __rmul__ = __mul__

    def __truediv__(self, scalar: float) -> "Tensor":
        return self * (1.0 / float(scalar))

    def __pow__(self, exponent: float) -> "Tensor":
        p = float(exponent)

        def bw(g):
            self._acc(g * p * self.data ** (p - 1.0))

        return Tensor._result(self.data**p, (self,), bw)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        other = as_tensor(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ShapeError(
                f"matmul needs 2-D operands, got {self.data.shape} @ {other.data.shape}"
            )
        if self.data.shape[1] != other.data.shape[0]:
            raise ShapeError(
                f"matmul inner dimensions disagree: {self.data.shape} @ {other.data.shape}"
            )

        def bw(g):
            if self.requires_grad:
                self._acc(g @ other.data.T)
            if other.requires_grad:
                other._acc(self.data.T @ g)

        return Tensor._result(self.data @ other.data, (self, other), bw)

    # -- elementwise nonlinearities --------------------------------------------

    def exp(self) -> "Tensor":
        out_data = np.exp(self.data)

        def bw(g):
            self._acc(g * out_data)

        return Tensor._result(out_data, (self,), bw)

    def relu(self) -> "Tensor":
        mask = self.data > 0

        def bw(g):
            self._acc(g * mask)

        return Tensor._result(np.where(mask, self.data, 0.0), (self,), bw)

    def sigmoid(self) -> "Tensor":
        out_data = expit(self.data)

        def bw(g):
            self._acc(g * out_data * (1.0 - out_data))

        return Tensor._result(out_data, (self,), bw)

    def tanh(self) -> "Tensor":
        out_data = np.tanh(self.data)

        def bw(g):
            self._acc(g * (1.0 - out_data * out_data))

        return Tensor._result(out_data, (self,), bw)

    # -- reductions and reshaping ----------------------------------------------

    def sum(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        def bw(g):
            if axis is None:
                self._acc(np.broadcast_to(g, self.data.shape))
            else:
                ge = g if keepdims else np.expand_dims(g, axis)
                self._acc(np.broadcast_to(ge, self.data.shape))

        return Tensor._result(self.data.sum(axis=axis, keepdims=keepdims), (self,), bw)

    def mean(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / n

    def reshape(self, *shape: int) -> "Tensor":
        old = self.data.shape

        def bw(g):
            self._acc(g.reshape(old))

        return Tensor._result(self.data.reshape(*shape), (self,), bw)

    def transpose(self) -> "Tensor":
        if self.data.ndim != 2:
            raise ShapeError(f"transpose expects a 2-D tensor, got {self.data.shape}")

        def bw(g):
            self._acc(g.T)

        return Tensor._result(self.data.T.copy(), (self,), bw)

    def narrow(self, axis: int, start: int, length: int) -> "Tensor":
        """Contiguous slice [start, start+length) along ``axis``."""
        index = [slice(None)] * self.data.ndim
        index[axis] = slice(start, start + length)
        index = tuple(index)

        def bw(g):
            self._acc_at(index, g)

        return Tensor._result(self.data[index], (self,), bw)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate along ``axis``; backward splits the gradient."""
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat of an empty sequence")
    sizes = [t.data.shape[axis] for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)

    def bw(g):
        offset = 0
        for t, size in zip(tensors, sizes):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(offset, offset + size)
                t._acc(g[tuple(index)])
            offset += size

    return Tensor._result(data, tuple(tensors), bw)
