"""Classifier head and the composite training objective.

The objective is mean binary cross-entropy, plus an explicit L2 penalty on
every weight matrix (biases exempt), plus an optional inverse-consistency
penalty: the mean squared round-trip error ``|X - phi(-1)(phi(1)(X))|^2``
evaluated either on the batch (``ic_mode="data"``) or on fresh uniform
samples of a box (``ic_mode="domain"``).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import flow
from .data import check_box, sample_domain
from .diffeng import Tape, sigmoid

EPS = 1e-12
IC_MODES = ("none", "data", "domain")


@dataclass(frozen=True, eq=False)
class ClassifierHead:
    w: np.ndarray  # (D,)
    b: float = 0.0

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64).reshape(-1)
        if not (np.all(np.isfinite(w)) and np.isfinite(self.b)):
            raise ValueError("head parameters must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", float(self.b))

    def logits(self, x):
        return np.asarray(x) @ self.w + self.b

    def __call__(self, x):
        z = np.asarray(self.logits(x), dtype=np.float64)
        return sigmoid(z.reshape(1, -1)).reshape(z.shape)

    def parameters(self) -> list[np.ndarray]:
        return [self.w, np.array([self.b])]

    def with_parameters(self, w, b) -> ClassifierHead:
        return ClassifierHead(w, float(np.asarray(b).reshape(-1)[0]))


@dataclass(frozen=True)
class LossConfig:
    weight_decay: float = 1e-4
    ic_mode: str = "none"
    ic_weight: float = 0.0
    domain_samples_per_batch: int = 300
    domain_box: tuple = (-6.0, 6.0, -6.0, 6.0)

    def __post_init__(self):
        if self.weight_decay < 0 or self.ic_weight < 0:
            raise ValueError("weight_decay and ic_weight must be >= 0")
        if self.ic_mode not in IC_MODES:
            raise ValueError(f"ic_mode must be one of {IC_MODES}")
        if self.ic_mode == "domain":
            if self.domain_samples_per_batch < 1:
                raise ValueError("domain mode needs domain_samples_per_batch >= 1")
            check_box(self.domain_box)


def bce(p, y):
    """Binary cross-entropy with p clamped to [1e-12, 1 - 1e-12]."""
    p = np.clip(np.asarray(p, dtype=np.float64), EPS, 1.0 - EPS)
    y = np.asarray(y, dtype=np.float64)
    return -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))


class LossNodes(NamedTuple):
    total: int
    bce: int
    wd: int
    ic: int
    field_nodes: list
    head_nodes: tuple


def predict(model: flow.FlowModel, head: ClassifierHead, x, check: bool = True) -> np.ndarray:
    """Class-1 probability for each row of ``x``."""
    final, _ = flow.forward(model, x, check=check)
    return sigmoid(np.atleast_2d(head.logits(final)).reshape(1, -1)).reshape(-1)


def accuracy(model, head, points, labels) -> float:
    return float(np.mean((predict(model, head, points) > 0.5) == (np.asarray(labels) == 1)))


def round_trip_error(model: flow.FlowModel, x, check: bool = True) -> np.ndarray:
    """Per-point ``|x - phi(-1)(phi(1)(x))|``."""
    y, _ = flow.forward(model, x, check)
    back, _ = flow.backward_flow(model, y, check)
    return np.linalg.norm(np.atleast_2d(back - np.asarray(x)), axis=1)


def _round_trip_penalty(tape: Tape, model, field_nodes, pts: np.ndarray) -> int:
    x0 = tape.constant(pts.T)
    fwd, _ = flow.forward_on_tape(tape, model, field_nodes, x0)
    back, _ = flow.backward_flow_on_tape(tape, model, field_nodes, fwd)
    sq = tape.sum(tape.square(tape.sub(back, x0)))
    return tape.scale(sq, 1.0 / len(pts))


def total_loss(tape: Tape, model: flow.FlowModel, head: ClassifierHead, points, labels,
               cfg: LossConfig, rng: np.random.Generator | None = None) -> LossNodes:
    """Record the full objective for one batch on ``tape``."""
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64).reshape(-1, 1)
    n = len(points)
    if n == 0:
        raise ValueError("empty batch")

    field_nodes = flow.register(tape, model)
    w = tape.leaf(head.w.reshape(1, -1))
    b = tape.leaf([[head.b]])

    x0 = tape.constant(points.T)
    final, _ = flow.forward_on_tape(tape, model, field_nodes, x0)
    p = tape.sigmoid(tape.add(tape.matmul(w, final), b))
    one_minus_p = tape.add(tape.scale(p, -1.0), tape.constant([[1.0]]))
    ll = tape.add(
        tape.matmul(tape.log(p, EPS), tape.constant(labels)),
        tape.matmul(tape.log(one_minus_p, EPS), tape.constant(1.0 - labels)),
    )
    bce_node = tape.scale(ll, -1.0 / n)

    wd = tape.constant([[0.0]])
    for W1, _, W2 in field_nodes:
        wd = tape.add(wd, tape.add(tape.sum(tape.square(W1)), tape.sum(tape.square(W2))))
    wd = tape.scale(tape.add(wd, tape.sum(tape.square(w))), cfg.weight_decay)

    if cfg.ic_mode == "data":
        ic = _round_trip_penalty(tape, model, field_nodes, points)
    elif cfg.ic_mode == "domain":
        if rng is None:
            raise ValueError("domain mode needs an rng")
        pts = sample_domain(cfg.domain_box, cfg.domain_samples_per_batch, rng)
        ic = _round_trip_penalty(tape, model, field_nodes, pts)
    else:
        ic = tape.constant([[0.0]])
    ic = tape.scale(ic, cfg.ic_weight)

    total = tape.add(tape.add(bce_node, wd), ic)
    return LossNodes(total, bce_node, wd, ic, field_nodes, (w, b))


def loss_and_grads(model, head, points, labels, cfg: LossConfig, rng=None):
    """Loss breakdown and gradients in ``model.parameters() + head.parameters()`` order."""
    tape = Tape()
    nodes = total_loss(tape, model, head, points, labels, cfg, rng)
    adj = tape.backward(nodes.total)
    grads = []
    for (W1, b1, W2), f in zip(nodes.field_nodes, model.fields):
        grads += [adj[W1], adj[b1].reshape(-1) if f.use_bias else np.zeros(f.hidden), adj[W2]]
    grads += [adj[nodes.head_nodes[0]].reshape(-1), adj[nodes.head_nodes[1]].reshape(-1)]
    breakdown = {k: float(tape.value(getattr(nodes, k))[0, 0]) for k in ("bce", "wd", "ic", "total")}
    return breakdown, grads
