"""Matplotlib rendering of kernels, boundaries, and trajectories to files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.colors import to_rgba

from .grid import CellSet, Grid


def render_kernels(
    path: str,
    grid: Grid,
    layers: list[tuple[str, CellSet, str]],
    boundary: np.ndarray | None = None,
    equilibria: np.ndarray | None = None,
    trajectory: np.ndarray | None = None,
    title: str | None = None,
) -> None:
    """Overlay cell-set layers at native grid resolution, no smoothing."""
    l_axis, p_axis = grid.axes
    extent = (
        l_axis.lo - l_axis.spacing / 2, l_axis.hi + l_axis.spacing / 2,
        p_axis.lo - p_axis.spacing / 2, p_axis.hi + p_axis.spacing / 2,
    )
    fig, ax = plt.subplots(figsize=(7.0, 5.2))
    for name, cells, color in layers:
        rgba = np.zeros(grid.shape + (4,))
        rgba[cells.mask] = to_rgba(color, alpha=0.35)
        ax.imshow(
            np.transpose(rgba, (1, 0, 2)), origin="lower", extent=extent,
            interpolation="nearest", aspect="auto",
        )
        ax.plot([], [], color=color, alpha=0.6, linewidth=6, label=name)
    if equilibria is not None and len(equilibria):
        ax.plot(equilibria[:, 0], equilibria[:, 1], "k--", linewidth=1.0,
                label="equilibria")
    if boundary is not None and len(boundary):
        ax.plot(boundary[:, 0], boundary[:, 1], "k-", linewidth=1.2,
                label="analytic boundary")
    if trajectory is not None and len(trajectory):
        ax.plot(trajectory[:, 0], trajectory[:, 1], color="#cc3311",
                linewidth=1.4, label="trajectory")
        ax.plot(trajectory[0, 0], trajectory[0, 1], "o", color="#cc3311",
                markersize=4)
    ax.set_xlim(l_axis.lo, l_axis.hi)
    ax.set_ylim(p_axis.lo, p_axis.hi)
    ax.set_xlabel("phosphorus inflow L")
    ax.set_ylabel("in-lake concentration P")
    if title:
        ax.set_title(title)
    ax.legend(loc="upper right", fontsize=8)
    fig.savefig(path, dpi=140, bbox_inches="tight")
    plt.close(fig)
