"""Jacobian-determinant maps, decision-boundary rasters and trajectories."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import flow
from .data import check_box
from .flow import DIVERGENCE_NORM, FlowModel
from .losses import ClassifierHead
from .diffeng import sigmoid

FD_STEP = 1e-4
DEFAULT_BOX = (-6.0, 6.0, -6.0, 6.0)
DEFAULT_RESOLUTION = (200, 200)


@dataclass(eq=False)
class AnalysisGrid:
    """Values sampled at cell centres; ``values[i, j]`` sits at ``(xs[i], ys[j])``.

    Divergent cells hold NaN and are set in ``divergent``.
    """
    box: tuple
    resolution: tuple
    values: np.ndarray
    divergent: np.ndarray

    @property
    def xs(self):
        return cell_centres(self.box[0], self.box[1], self.resolution[0])

    @property
    def ys(self):
        return cell_centres(self.box[2], self.box[3], self.resolution[1])

    def points(self) -> np.ndarray:
        return grid_points(self.box, self.resolution)

    @property
    def finite_values(self) -> np.ndarray:
        return self.values[~self.divergent]

    def extrema(self) -> tuple[float, float]:
        v = self.finite_values
        return (float(v.min()), float(v.max())) if v.size else (float("nan"), float("nan"))

    def negative_fraction(self) -> float:
        """Fraction of all cells with a negative value (divergent cells excluded from the count)."""
        return float(np.sum(self.finite_values < 0) / self.values.size)


def cell_centres(lo: float, hi: float, n: int) -> np.ndarray:
    return lo + (np.arange(n) + 0.5) * (hi - lo) / n


def grid_points(box, resolution) -> np.ndarray:
    """Cell centres as ``(nx * ny, 2)``, x index varying slowest."""
    x0, x1, y0, y1 = check_box(box)
    nx, ny = resolution
    if nx < 2 or ny < 2:
        raise ValueError("resolution must be at least 2x2")
    gx, gy = np.meshgrid(cell_centres(x0, x1, nx), cell_centres(y0, y1, ny), indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def _diverged(traj: np.ndarray) -> np.ndarray:
    bad = ~np.isfinite(traj) | (np.abs(traj) > DIVERGENCE_NORM)
    return bad.any(axis=(0, 2))


def _step_jacobians(model: FlowModel, traj: np.ndarray, sign: float = 1.0):
    """Per-step Jacobians of the discrete map along a forward trajectory, ``(L, N, D, D)``."""
    h = sign * model.h
    n, d = traj.shape[1], traj.shape[2]
    eye = np.broadcast_to(np.eye(d), (n, d, d))
    out = []
    for l in range(model.n_steps):
        f = model.field_at(l)
        x = traj[l]
        if model.scheme == "euler":
            out.append(eye + h * f.spatial_jacobian(x))
            continue
        # differentiate each RK4 stage through its argument
        k1 = f(x)
        d1 = f.spatial_jacobian(x)
        x2 = x + (h / 2) * k1
        k2 = f(x2)
        d2 = f.spatial_jacobian(x2) @ (eye + (h / 2) * d1)
        x3 = x + (h / 2) * k2
        k3 = f(x3)
        d3 = f.spatial_jacobian(x3) @ (eye + (h / 2) * d2)
        d4 = f.spatial_jacobian(x + h * k3) @ (eye + h * d3)
        out.append(eye + (h / 6) * ((d1 + 2.0 * d2) + (2.0 * d3 + d4)))
    return np.stack(out) if out else np.empty((0, n, d, d))


def flow_jacobian(model: FlowModel, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Analytic Jacobian matrices of ``phi(1)`` at rows of ``x``.

    Returns ``(jac, step_dets, diverged)`` where ``jac`` is ``(N, D, D)`` and
    ``step_dets`` is ``(L, N)``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    with np.errstate(all="ignore"):
        _, traj = flow.forward(model, x, check=False)
        steps = _step_jacobians(model, traj)
        jac = np.broadcast_to(np.eye(model.dim), (len(x), model.dim, model.dim)).copy()
        for s in steps:
            jac = s @ jac
        dets = np.linalg.det(steps) if len(steps) else np.ones((0, len(x)))
    bad = _diverged(traj) | ~np.all(np.isfinite(jac), axis=(1, 2))
    return jac, dets, bad


def fd_flow_jacobian(model: FlowModel, x, step: float = FD_STEP) -> np.ndarray:
    """Fourth-order central differences of ``forward``; depends on nothing but the forward map.

    The two-point stencil's O(step^2) error reaches 1e-4 on trained models at
    step 1e-4, so the five-point stencil is used.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    cols = []

    def phi(z):
        return flow.forward(model, z, check=False)[0]

    with np.errstate(all="ignore"):
        for j in range(model.dim):
            e = np.zeros(model.dim)
            e[j] = step
            cols.append((phi(x - 2 * e) - 8 * phi(x - e) + 8 * phi(x + e) - phi(x + 2 * e)) / (12 * step))
    return np.stack(cols, axis=-1)


def flow_jacobian_det(model: FlowModel, x, mode: str = "analytic") -> np.ndarray:
    """Determinant of the Jacobian of the full flow at rows of ``x``; NaN where divergent."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if mode == "analytic":
        jac, _, bad = flow_jacobian(model, x)
    elif mode == "fd":
        jac = fd_flow_jacobian(model, x)
        _, bad = _forward_masked(model, np.atleast_2d(x))
        bad = bad | ~np.all(np.isfinite(jac), axis=(1, 2))
    else:
        raise ValueError("mode must be 'analytic' or 'fd'")
    det = np.full(len(jac), np.nan)
    det[~bad] = np.linalg.det(jac[~bad])
    return det[0] if single else det


def _forward_masked(model, x):
    with np.errstate(all="ignore"):
        final, traj = flow.forward(model, x, check=False)
    return final, _diverged(traj)


def _to_grid(values, bad, box, resolution) -> AnalysisGrid:
    values = np.where(bad, np.nan, values)
    shape = tuple(resolution)
    return AnalysisGrid(tuple(float(v) for v in box), shape, values.reshape(shape), bad.reshape(shape))


def jacobian_map(model: FlowModel, box=DEFAULT_BOX, resolution=DEFAULT_RESOLUTION,
                 mode: str = "analytic") -> AnalysisGrid:
    pts = grid_points(box, resolution)
    det = flow_jacobian_det(model, pts, mode)
    return _to_grid(det, np.isnan(det), box, resolution)


def decision_boundary(model: FlowModel, head: ClassifierHead, box=DEFAULT_BOX,
                      resolution=DEFAULT_RESOLUTION) -> AnalysisGrid:
    """Class-1 probability at each cell centre; the boundary is the 0.5 level set."""
    pts = grid_points(box, resolution)
    final, bad = _forward_masked(model, pts)
    with np.errstate(all="ignore"):
        z = np.where(bad, 0.0, final @ head.w + head.b)
    return _to_grid(sigmoid(z), bad, box, resolution)


def boundary_edge_count(grid: AnalysisGrid, level: float = 0.5) -> int:
    """Number of adjacent cell pairs on opposite sides of ``level``; a boundary-length proxy."""
    side = grid.values > level
    return int(np.sum(side[1:, :] != side[:-1, :]) + np.sum(side[:, 1:] != side[:, :-1]))


def trajectories(model: FlowModel, points) -> np.ndarray:
    """States of each point after every residual step, ``(L + 1, N, D)``."""
    _, traj = flow.forward(model, np.atleast_2d(points), check=False)
    return traj
