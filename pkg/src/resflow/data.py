"""Two-arm spiral data and uniform domain sampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TAU_MIN = 0.05


@dataclass(frozen=True)
class SpiralConfig:
    n_per_class: int = 1000
    turns: float = 1.0
    radius_scale: float = 4.0
    noise_sigma: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.n_per_class < 1:
            raise ValueError("n_per_class must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass(frozen=True, eq=False)
class LabeledSet:
    points: np.ndarray  # (N, 2)
    labels: np.ndarray  # (N,) in {0, 1}

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if points.ndim != 2 or len(points) != len(labels):
            raise ValueError("points must be (N, D) with one label per row")
        if not np.all(np.isin(labels, (0, 1))):
            raise ValueError("labels must be 0 or 1")
        if not np.all(np.isfinite(points)):
            raise ValueError("points must be finite")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.labels)

    def split(self, frac: float, seed: int = 0) -> tuple[LabeledSet, LabeledSet]:
        """Seeded random split into (first, second) with ``frac`` in the first."""
        idx = np.random.default_rng(seed).permutation(len(self))
        k = int(round(frac * len(self)))
        a, b = idx[:k], idx[k:]
        return LabeledSet(self.points[a], self.labels[a]), LabeledSet(self.points[b], self.labels[b])


def spiral_arm(tau, turns: float, radius_scale: float, phase: float = 0.0) -> np.ndarray:
    tau = np.asarray(tau, dtype=np.float64)
    r = radius_scale * tau
    theta = 2.0 * np.pi * turns * tau + phase
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)


def make_spiral(cfg: SpiralConfig = SpiralConfig()) -> LabeledSet:
    """Archimedean two-spiral set; class 1 is class 0 rotated by pi."""
    tau = np.linspace(TAU_MIN, 1.0, cfg.n_per_class)
    arm0 = spiral_arm(tau, cfg.turns, cfg.radius_scale)
    arm1 = spiral_arm(tau, cfg.turns, cfg.radius_scale, np.pi)
    points = np.concatenate([arm0, arm1])
    rng = np.random.default_rng(cfg.seed)
    if cfg.noise_sigma > 0:
        points = points + rng.normal(0.0, cfg.noise_sigma, size=points.shape)
    labels = np.repeat([0, 1], cfg.n_per_class)
    return LabeledSet(points, labels)


def check_box(box) -> tuple[float, float, float, float]:
    x0, x1, y0, y1 = (float(v) for v in box)
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate box {box}")
    return x0, x1, y0, y1


def sample_domain(box, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` i.i.d. uniform points in ``box = (x0, x1, y0, y1)``."""
    x0, x1, y0, y1 = check_box(box)
    if n < 1:
        raise ValueError("n must be >= 1")
    u = rng.uniform(size=(n, 2))
    return np.column_stack([x0 + (x1 - x0) * u[:, 0], y0 + (y1 - y0) * u[:, 1]])
