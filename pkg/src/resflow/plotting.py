"""Matplotlib renderings of analysis products, written straight to files."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import JACOBIAN_CMAP, JACOBIAN_WINDOW  # noqa: E402

LABEL_COLOURS = ("tab:blue", "tab:orange")

plt.rcParams.update({
    "font.size": 9,
    "axes.titlesize": 9,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
})


def _extent(grid):
    return grid.box


def _show(ax, grid, **kw):
    return ax.imshow(grid.values.T, origin="lower", extent=_extent(grid), **kw)


def _scatter(ax, points, labels, s=2):
    labels = np.asarray(labels)
    for k in (0, 1):
        p = points[labels == k]
        ax.scatter(p[:, 0], p[:, 1], s=s, c=LABEL_COLOURS[k], linewidths=0)


def jacobian_figure(grid, path, title=None, ax=None):
    own = ax is None
    if own:
        fig, ax = plt.subplots(figsize=(4, 3.6))
    im = _show(ax, grid, cmap=JACOBIAN_CMAP, vmin=JACOBIAN_WINDOW[0], vmax=JACOBIAN_WINDOW[1])
    jmin, jmax = grid.extrema()
    ax.set_title(title or f"$J_{{min}}={jmin:.2f}$, $J_{{max}}={jmax:.2f}$")
    ax.set_xlabel("$x_1$")
    ax.set_ylabel("$x_2$")
    if own:
        fig.colorbar(im, ax=ax, shrink=0.85)
        fig.savefig(path)
        plt.close(fig)
    return im


def boundary_figure(grid, path, data=None, ax=None, title="decision boundary"):
    own = ax is None
    if own:
        fig, ax = plt.subplots(figsize=(4, 3.6))
    _show(ax, grid, cmap="coolwarm", vmin=0.0, vmax=1.0, alpha=0.6)
    ax.contour(grid.xs, grid.ys, grid.values.T, levels=[0.5], colors="k", linewidths=0.8)
    if data is not None:
        _scatter(ax, data.points, data.labels)
    ax.set_xlim(grid.box[0], grid.box[1])
    ax.set_ylim(grid.box[2], grid.box[3])
    ax.set_title(title)
    if own:
        fig.savefig(path)
        plt.close(fig)


def trajectory_figure(traj, labels, path, n_panels=6):
    """Snapshots of the point cloud at evenly spaced layers."""
    steps = np.unique(np.linspace(0, len(traj) - 1, n_panels).round().astype(int))
    fig, axes = plt.subplots(1, len(steps), figsize=(2.2 * len(steps), 2.3))
    for ax, l in zip(np.atleast_1d(axes), steps):
        _scatter(ax, traj[l], labels, s=1)
        ax.set_title(f"layer {l}")
        ax.set_aspect("equal", adjustable="datalim")
        ax.set_xticks([])
        ax.set_yticks([])
    fig.savefig(path)
    plt.close(fig)


def comparison_figure(names, jac_grids, boundary_grids, path, data=None):
    """Jacobian maps (top row) and decision boundaries (bottom row) side by side."""
    n = len(names)
    fig, axes = plt.subplots(2, n, figsize=(3.2 * n, 6.2), squeeze=False)
    im = None
    for k, name in enumerate(names):
        jmin, jmax = jac_grids[k].extrema()
        im = jacobian_figure(jac_grids[k], None, f"{name}\n$J_{{min}}={jmin:.2f}$, $J_{{max}}={jmax:.2f}$",
                             ax=axes[0, k])
        boundary_figure(boundary_grids[k], None, data, ax=axes[1, k], title=name)
    fig.colorbar(im, ax=axes[0].tolist(), shrink=0.8)
    fig.savefig(path)
    plt.close(fig)
