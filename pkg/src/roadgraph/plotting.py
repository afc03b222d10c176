"""Report figures: graph overlays, speed histograms and stage timings.

Everything renders off-screen with the Agg backend and goes straight to a
file; nothing here opens a window.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.collections import LineCollection  # noqa: E402

from .graph import RoadGraph  # noqa: E402
from .speed import MAX_SPEED_MPH  # noqa: E402


def _save(fig, path) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)) or ".", exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return str(path)


def _segments(graph: RoadGraph):
    return [e.geometry for e in graph.edges]


def plot_graph(graph: RoadGraph, path, truth: RoadGraph | None = None, title: str = "") -> str:
    """Edges colored by speed (gray when unknown), optionally over a truth graph."""
    fig, ax = plt.subplots(figsize=(7, 7))
    if truth is not None and truth.edges:
        ax.add_collection(LineCollection(_segments(truth), colors="0.8", linewidths=4, zorder=1, label="truth"))
    if graph.edges:
        speeds = np.array([np.nan if e.speed_mph is None else e.speed_mph for e in graph.edges])
        lc = LineCollection(_segments(graph), linewidths=1.2, zorder=2, cmap="viridis")
        if np.isfinite(speeds).any():
            lc.set_array(np.nan_to_num(speeds, nan=0.0))
            lc.set_clim(0, MAX_SPEED_MPH)
            fig.colorbar(lc, ax=ax, shrink=0.7, label="speed (mph)")
        else:
            lc.set_color("k")
        ax.add_collection(lc)
        xy = graph.node_array()[1]
        ax.plot(xy[:, 0], xy[:, 1], ".", color="crimson", ms=3, zorder=3)
    ax.autoscale()
    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_speed_histogram(graph: RoadGraph, path, truth: RoadGraph | None = None) -> str:
    """Length-weighted speed distribution of the edges."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    bins = np.arange(0, 75, 5)
    for g, label, color in ((truth, "truth", "0.6"), (graph, "inferred", "tab:blue")):
        if g is None:
            continue
        s = [e.speed_mph for e in g.edges if e.speed_mph is not None]
        w = [e.length_m / 1000 for e in g.edges if e.speed_mph is not None]
        if s:
            ax.hist(s, bins=bins, weights=w, alpha=0.6, color=color, label=label)
    ax.set_xlabel("speed (mph)")
    ax.set_ylabel("road length (km)")
    ax.legend(frameon=False)
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)
    return _save(fig, path)


def plot_timings(timings: dict, path) -> str:
    fig, ax = plt.subplots(figsize=(6, 3))
    names = list(timings)
    ax.barh(names, [timings[k] for k in names], color="tab:orange")
    ax.invert_yaxis()
    ax.set_xlabel("seconds")
    return _save(fig, path)


def plot_mask(band: np.ndarray, path, title: str = "") -> str:
    """Single raster band, downsampled to at most ~1500 px per side."""
    step = max(1, int(np.ceil(max(band.shape) / 1500)))
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.imshow(band[::step, ::step], cmap="gray", vmin=0, vmax=1, interpolation="nearest")
    ax.set_axis_off()
    if title:
        ax.set_title(title)
    return _save(fig, path)
