"""Initialization and Adam training of flow classifiers."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .data import LabeledSet
from .flow import FlowModel, IntegrationDivergence
from .losses import ClassifierHead, LossConfig, accuracy, loss_and_grads
from .velocity import VelocityField

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "bce", "wd_term", "ic_term", "total", "train_accuracy")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 300
    epochs: int = 1000
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def fresh(cls, params) -> AdamState:
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def glorot_init(shape, rng: np.random.Generator) -> np.ndarray:
    """Uniform on [-a, a] with a = sqrt(6 / (fan_in + fan_out)); shape is (fan_out, fan_in)."""
    fan_out, fan_in = shape
    if fan_out < 1 or fan_in < 1:
        raise ValueError(f"glorot_init needs positive dims, got {shape}")
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def init_model(n_steps: int = 20, hidden: int = 10, dim: int = 2, shared: bool = True,
               scheme: str = "euler", step_mode: str = "normalized", use_bias: bool = True,
               rng: np.random.Generator | None = None) -> tuple[FlowModel, ClassifierHead]:
    """Glorot weights, zero biases; the head is drawn last."""
    rng = rng if rng is not None else np.random.default_rng(0)
    fields = [
        VelocityField(glorot_init((hidden, dim), rng), np.zeros(hidden),
                      glorot_init((dim, hidden), rng), use_bias)
        for _ in range(1 if shared else n_steps)
    ]
    model = FlowModel(fields, n_steps, shared, scheme, step_mode)
    head = ClassifierHead(glorot_init((1, dim), rng).reshape(-1), 0.0)
    return model, head


def adam_step(params, grads, state: AdamState, cfg: TrainConfig):
    """Bias-corrected Adam update. Returns ``(new_params, state)``; state is updated in place."""
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise ValueError("params and grads must match in count and shape")
    state.t += 1
    c1 = 1.0 - cfg.beta1 ** state.t
    c2 = 1.0 - cfg.beta2 ** state.t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g
        out.append(p - cfg.lr * (state.m[i] / c1) / (np.sqrt(state.v[i] / c2) + cfg.adam_eps))
    return out, state


def split_params(model: FlowModel, head: ClassifierHead, params):
    k = len(model.parameters())
    return model.with_parameters(params[:k]), head.with_parameters(*params[k:])


class TrainingDiverged(RuntimeError):
    """Integration blew up mid-training; ``model``/``head`` hold the last good parameters."""

    def __init__(self, step_error: IntegrationDivergence, model, head, history):
        super().__init__(f"training diverged: {step_error}")
        self.model, self.head, self.history = model, head, history


@dataclass
class TrainResult:
    model: FlowModel
    head: ClassifierHead
    history: list[dict] = field(default_factory=list)

    @property
    def final_accuracy(self) -> float:
        return self.history[-1]["train_accuracy"] if self.history else float("nan")


def train(data: LabeledSet, model: FlowModel, head: ClassifierHead,
          loss_cfg: LossConfig, cfg: TrainConfig, progress=None) -> TrainResult:
    """Minibatch Adam on the composite objective for a fixed number of epochs.

    Shuffling and domain sampling draw from independent streams spawned from
    ``cfg.seed``, so a run is fully determined by (data, initial params, configs).
    """
    if len(data) == 0:
        raise ValueError("empty dataset")
    shuffle_ss, domain_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    domain_rng = np.random.default_rng(domain_ss)

    params = model.parameters() + head.parameters()
    state = AdamState.fresh(params)
    n = len(data)
    n_batches = math.ceil(n / cfg.batch_size)
    history: list[dict] = []

    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n) if cfg.shuffle else np.arange(n)
        sums = dict.fromkeys(("bce", "wd", "ic", "total"), 0.0)
        for k in range(n_batches):
            idx = order[k * cfg.batch_size:(k + 1) * cfg.batch_size]
            try:
                parts, grads = loss_and_grads(model, head, data.points[idx], data.labels[idx],
                                              loss_cfg, domain_rng)
            except IntegrationDivergence as err:
                raise TrainingDiverged(err, model, head, history) from err
            for key in sums:
                sums[key] += parts[key] / n_batches
            params, state = adam_step(params, grads, state, cfg)
            model, head = split_params(model, head, params)
        try:
            acc = accuracy(model, head, data.points, data.labels)
        except IntegrationDivergence as err:
            raise TrainingDiverged(err, model, head, history) from err
        row = {"epoch": epoch, "bce": sums["bce"], "wd_term": sums["wd"],
               "ic_term": sums["ic"], "total": sums["total"], "train_accuracy": acc}
        if not math.isfinite(row["total"]):
            raise TrainingDiverged(IntegrationDivergence(-1, "non-finite loss"), model, head, history)
        history.append(row)
        if progress is not None:
            progress(row)
        if epoch % 100 == 0:
            log.info("epoch %d total=%.5f acc=%.4f", epoch, row["total"], acc)
    return TrainResult(model, head, history)
