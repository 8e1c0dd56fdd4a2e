"""Explicit integration of velocity-field flows: the residual mapping block.

``forward`` applies ``L`` residual steps, ``backward_flow`` runs the same
fields negated and in reverse layer order. Both work on numpy arrays; the
``*_on_tape`` variants build the identical computation on a
:class:`~resflow.diffeng.Tape` for training.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .diffeng import Tape
from .velocity import VelocityField

SCHEMES = ("euler", "rk4")
STEP_MODES = ("normalized", "absorbed")
DIVERGENCE_NORM = 1e6


class IntegrationDivergence(FloatingPointError):
    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"integration diverged at step {step}")


@dataclass(frozen=True, eq=False)
class FlowModel:
    fields: Sequence[VelocityField]
    n_steps: int
    shared: bool = True
    scheme: str = "euler"
    step_mode: str = "normalized"

    def __post_init__(self):
        fields = tuple(self.fields)
        object.__setattr__(self, "fields", fields)
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.step_mode not in STEP_MODES:
            raise ValueError(f"step_mode must be one of {STEP_MODES}")
        expected = 1 if self.shared else self.n_steps
        if len(fields) != expected:
            raise ValueError(f"expected {expected} field(s), got {len(fields)}")
        if len({(f.dim, f.hidden) for f in fields}) != 1:
            raise ValueError("all fields must share D and H")

    @property
    def h(self) -> float:
        return 1.0 / self.n_steps if self.step_mode == "normalized" else 1.0

    @property
    def dim(self) -> int:
        return self.fields[0].dim

    @property
    def hidden(self) -> int:
        return self.fields[0].hidden

    def field_at(self, step: int) -> VelocityField:
        return self.fields[0] if self.shared else self.fields[step]

    def parameters(self) -> list[np.ndarray]:
        return [p for f in self.fields for p in f.parameters()]

    def with_parameters(self, params: Sequence[np.ndarray]) -> FlowModel:
        new = [f.with_parameters(*params[3 * i:3 * i + 3]) for i, f in enumerate(self.fields)]
        return FlowModel(new, self.n_steps, self.shared, self.scheme, self.step_mode)


def _step(v: Callable, x, h: float, scheme: str, add: Callable, scale: Callable):
    """One explicit step written against abstract add/scale so that the numpy
    and tape paths perform the same floating-point operations."""
    if scheme == "euler":
        return add(x, scale(v(x), h))
    k1 = v(x)
    k2 = v(add(x, scale(k1, h / 2)))
    k3 = v(add(x, scale(k2, h / 2)))
    k4 = v(add(x, scale(k3, h)))
    incr = add(add(k1, scale(k2, 2.0)), add(scale(k3, 2.0), k4))
    return add(x, scale(incr, h / 6))


def _np_scale(a, c):
    return c * a


def _guard(x: np.ndarray, step: int):
    if not np.all(np.isfinite(x)) or np.max(np.abs(x), initial=0.0) > DIVERGENCE_NORM:
        raise IntegrationDivergence(step)


def integrate(model: FlowModel, x, steps: Sequence[int], sign: float = 1.0, check: bool = True):
    """Apply the given layer indices in order with step ``sign * h``.

    Returns ``(final, trajectory)`` with trajectory of shape
    ``(len(steps) + 1, *x.shape)``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.dim:
        raise ValueError(f"expected points of dimension {model.dim}, got shape {x.shape}")
    h = sign * model.h
    traj = [x]
    for n, l in enumerate(steps):
        x = _step(model.field_at(l), x, h, model.scheme, np.add, _np_scale)
        if check:
            _guard(x, l)
        traj.append(x)
    return x, np.stack(traj)


def forward(model: FlowModel, x, check: bool = True):
    """Map ``x`` through all ``L`` residual steps: ``phi(1)(x)``."""
    return integrate(model, x, range(model.n_steps), 1.0, check)


def backward_flow(model: FlowModel, y, check: bool = True):
    """Approximate inverse map ``phi(-1)(y)``: negated fields, reversed layers."""
    return integrate(model, y, range(model.n_steps - 1, -1, -1), -1.0, check)


def flow_to(model: FlowModel, x, n: int):
    """First ``n`` steps of a shared model (the map ``phi(n h)``)."""
    return integrate(model, x, range(n))[0]


def _steps_for(model: FlowModel, frac: float, name: str) -> int:
    n = frac * model.n_steps
    if not 0.0 <= frac <= 1.0 or abs(n - round(n)) > 1e-9:
        raise ValueError(f"{name}={frac} does not give an integral step count in [0, {model.n_steps}]")
    return int(round(n))


def compose_check(model: FlowModel, x, s: float, t: float) -> float:
    """Deviation from the one-parameter subgroup law phi(s) o phi(t) = phi(s+t).

    Only meaningful for shared (stationary) fields; ``s*L`` and ``t*L`` must
    be whole step counts.
    """
    if not model.shared:
        raise ValueError("compose_check requires a shared-weight model")
    ns, nt = _steps_for(model, s, "s"), _steps_for(model, t, "t")
    _steps_for(model, s + t, "s+t")
    x = np.asarray(x, dtype=np.float64)
    lhs = flow_to(model, flow_to(model, x, nt), ns)
    rhs = flow_to(model, x, ns + nt)
    return float(np.max(np.linalg.norm(np.atleast_2d(lhs - rhs), axis=1)))


# tape path: points are columns, shape (D, N)

def register(tape: Tape, model: FlowModel) -> list[tuple[int, int, int]]:
    """Put each distinct field's parameters on the tape as leaves."""
    return [
        (tape.leaf(f.W1), tape.leaf(f.b1.reshape(-1, 1)), tape.leaf(f.W2))
        for f in model.fields
    ]


def _tape_field(tape: Tape, nodes, use_bias: bool):
    W1, b1, W2 = nodes

    def v(x):
        z = tape.matmul(W1, x)
        if use_bias:
            z = tape.add(z, b1)
        return tape.matmul(W2, tape.tanh(z))
    return v


def integrate_on_tape(tape: Tape, model: FlowModel, field_nodes, x: int, steps, sign: float = 1.0):
    h = sign * model.h
    fns = [_tape_field(tape, nodes, f.use_bias) for f, nodes in zip(model.fields, field_nodes)]
    traj = [x]
    for l in steps:
        v = fns[0] if model.shared else fns[l]
        x = _step(v, x, h, model.scheme, tape.add, tape.scale)
        _guard(tape.value(x), l)
        traj.append(x)
    return x, traj


def forward_on_tape(tape: Tape, model: FlowModel, field_nodes, x: int):
    return integrate_on_tape(tape, model, field_nodes, x, range(model.n_steps), 1.0)


def backward_flow_on_tape(tape: Tape, model: FlowModel, field_nodes, y: int):
    return integrate_on_tape(tape, model, field_nodes, y, range(model.n_steps - 1, -1, -1), -1.0)
