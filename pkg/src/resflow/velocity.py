"""Velocity fields realized as two-layer tanh residual units.

A field maps a point ``x`` to ``W2 @ tanh(W1 @ x + b1)``: each hidden unit is
one basis function and the columns of ``W2`` hold its weighting coefficients.
Points are rows, so batched input has shape ``(N, D)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class VelocityField:
    W1: np.ndarray  # (H, D)
    b1: np.ndarray  # (H,)
    W2: np.ndarray  # (D, H)
    use_bias: bool = True

    def __post_init__(self):
        W1 = np.array(self.W1, dtype=np.float64)
        W2 = np.array(self.W2, dtype=np.float64)
        b1 = np.array(self.b1, dtype=np.float64).reshape(-1)
        if W1.ndim != 2 or W2.ndim != 2:
            raise ValueError("W1 and W2 must be matrices")
        H, D = W1.shape
        if H < 1 or D < 1:
            raise ValueError(f"need H >= 1 and D >= 1, got H={H}, D={D}")
        if W2.shape != (D, H):
            raise ValueError(f"W2 must be {(D, H)}, got {W2.shape}")
        if b1.shape != (H,):
            raise ValueError(f"b1 must have length {H}, got {b1.shape}")
        for name, arr in (("W1", W1), ("b1", b1), ("W2", W2)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def zeros(cls, dim: int = 2, hidden: int = 10, use_bias: bool = True) -> VelocityField:
        return cls(np.zeros((hidden, dim)), np.zeros(hidden), np.zeros((dim, hidden)), use_bias)

    @property
    def dim(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim or x.ndim not in (1, 2):
            raise ValueError(f"expected points of dimension {self.dim}, got shape {x.shape}")
        return x

    def preactivation(self, x):
        z = x @ self.W1.T
        return z + self.b1 if self.use_bias else z

    def __call__(self, x) -> np.ndarray:
        """Velocity at ``x`` (shape ``(D,)`` or ``(N, D)``)."""
        x = self._check(x)
        return np.tanh(self.preactivation(x)) @ self.W2.T

    eval = __call__

    def spatial_jacobian(self, x) -> np.ndarray:
        """dV/dx = W2 diag(1 - tanh^2) W1; shape ``(D, D)`` or ``(N, D, D)``."""
        x = self._check(x)
        s = 1.0 - np.tanh(self.preactivation(x)) ** 2
        if x.ndim == 1:
            return (self.W2 * s) @ self.W1
        return np.einsum("dh,nh,he->nde", self.W2, s, self.W1)

    def lipschitz_bound(self) -> float:
        return float(np.linalg.norm(self.W2, 2) * np.linalg.norm(self.W1, 2))

    def parameters(self) -> list[np.ndarray]:
        return [self.W1, self.b1, self.W2]

    def with_parameters(self, W1, b1, W2) -> VelocityField:
        return VelocityField(W1, b1, W2, self.use_bias)
