"""Tape-based reverse-mode differentiation over dense 2-D float64 arrays.

Values are numpy arrays of shape ``(rows, cols)``. Every intermediate lives
on a :class:`Tape` and is referred to by an integer node id. Only eight
primitives are recorded; everything else (subtraction, means, dot products
against constants) is composed from them.
"""
from __future__ import annotations

import numpy as np

PRIMITIVES = ("matmul", "add", "scale", "tanh", "sigmoid", "log", "sum", "square")


class ShapeError(ValueError):
    """Raised when a primitive receives inputs of incompatible shapes."""


def as_tensor(value) -> np.ndarray:
    """Coerce external input to a finite float64 2-D array."""
    arr = np.array(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise ShapeError(f"tensors are 2-D, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains NaN or Inf")
    return arr


def _broadcastable(src: tuple, dst: tuple) -> bool:
    return all(s == d or s == 1 for s, d in zip(src, dst))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    return grad.sum(axis=axes, keepdims=True)


class Tape:
    """Linear record of primitive operations.

    Nodes are appended in evaluation order, so the record is topologically
    sorted by construction and :meth:`backward` simply walks it in reverse.
    """

    def __init__(self):
        self.values: list[np.ndarray] = []
        self.ops: list[tuple[str, tuple[int, ...], dict]] = []
        self.leaves: list[int] = []

    def __len__(self):
        return len(self.values)

    def _push(self, value, op, inputs=(), attrs=None) -> int:
        self.values.append(value)
        self.ops.append((op, tuple(inputs), attrs or {}))
        return len(self.values) - 1

    def leaf(self, value) -> int:
        """Register a differentiable input (a parameter or data tensor)."""
        node = self._push(as_tensor(value), "leaf")
        self.leaves.append(node)
        return node

    def constant(self, value) -> int:
        """Register a non-differentiable input; it gets no adjoint."""
        return self._push(as_tensor(value), "const")

    def value(self, node: int) -> np.ndarray:
        return self.values[node]

    def shape(self, node: int) -> tuple[int, int]:
        return self.values[node].shape

    def record(self, op: str, *inputs: int, **attrs) -> int:
        if op not in PRIMITIVES:
            raise ValueError(f"unknown primitive {op!r}")
        for i in inputs:
            if not 0 <= i < len(self.values):
                raise KeyError(f"{op}: node {i} is not on the tape")
        vals = [self.values[i] for i in inputs]

        if op == "matmul":
            a, b = vals
            if a.shape[1] != b.shape[0]:
                raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
            out = a @ b
        elif op == "add":
            a, b = vals
            if _broadcastable(b.shape, a.shape):
                out = a + b
            elif _broadcastable(a.shape, b.shape):
                out = a + b
            else:
                raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not conform")
        elif op == "scale":
            out = attrs["c"] * vals[0]
        elif op == "tanh":
            out = np.tanh(vals[0])
        elif op == "sigmoid":
            out = _sigmoid(vals[0])
        elif op == "log":
            out = np.log(np.maximum(vals[0], attrs.get("floor", 0.0)))
        elif op == "sum":
            out = np.array([[vals[0].sum()]])
        else:  # square
            out = vals[0] * vals[0]
        return self._push(out, op, inputs, attrs)

    # convenience wrappers, one per primitive
    def matmul(self, a, b):
        return self.record("matmul", a, b)

    def add(self, a, b):
        return self.record("add", a, b)

    def scale(self, a, c: float):
        return self.record("scale", a, c=float(c))

    def tanh(self, a):
        return self.record("tanh", a)

    def sigmoid(self, a):
        return self.record("sigmoid", a)

    def log(self, a, floor: float = 0.0):
        return self.record("log", a, floor=float(floor))

    def sum(self, a):
        return self.record("sum", a)

    def square(self, a):
        return self.record("square", a)

    def sub(self, a, b):
        return self.add(a, self.scale(b, -1.0))

    def backward(self, loss: int) -> dict[int, np.ndarray]:
        """Adjoints of every leaf with respect to the scalar node ``loss``."""
        if self.values[loss].shape != (1, 1):
            raise ShapeError(f"backward needs a 1x1 loss, got {self.values[loss].shape}")
        adj: dict[int, np.ndarray] = {loss: np.ones((1, 1))}
        for node in range(loss, -1, -1):
            g = adj.get(node)
            op, inputs, attrs = self.ops[node]
            if g is None or op in ("leaf", "const"):
                continue
            for i, gi in zip(inputs, self._vjp(node, op, inputs, attrs, g)):
                gi = _unbroadcast(gi, self.values[i].shape)
                if i in adj:
                    adj[i] = adj[i] + gi
                else:
                    adj[i] = gi
        return {
            i: adj[i] if i in adj else np.zeros_like(self.values[i])
            for i in self.leaves
        }

    def _vjp(self, node, op, inputs, attrs, g):
        out = self.values[node]
        if op == "matmul":
            a, b = (self.values[i] for i in inputs)
            return g @ b.T, a.T @ g
        if op == "add":
            return g, g
        if op == "scale":
            return (attrs["c"] * g,)
        if op == "tanh":
            return (g * (1.0 - out * out),)
        if op == "sigmoid":
            return (g * out * (1.0 - out),)
        if op == "log":
            x = self.values[inputs[0]]
            live = x > attrs.get("floor", 0.0)
            return (np.where(live, g / np.where(live, x, 1.0), 0.0),)
        if op == "sum":
            return (np.full(self.values[inputs[0]].shape, g[0, 0]),)
        x = self.values[inputs[0]]
        return (2.0 * x * g,)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


sigmoid = _sigmoid
