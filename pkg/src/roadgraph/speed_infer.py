"""Per-edge speed estimation from prediction masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import cumulative_lengths
from .graph import GeoTransform, RoadEdge, RoadGraph
from .masks import N_SPEED_BINS, RasterMask
from .speed import MAX_SPEED_MPH, channel_to_speed


@dataclass(frozen=True)
class SpeedConfig:
    mode: str = "multiclass"
    patch_size: int = 8
    background_filter: float = 0.3
    fallback_mph: float = 20.0
    junction_guard_m: float = 6.0

    def __post_init__(self):
        if self.mode not in ("multiclass", "continuous"):
            raise ValueError(f"mode must be 'multiclass' or 'continuous', got {self.mode!r}")
        if not self.fallback_mph > 0:
            raise ValueError(f"fallback_mph must be > 0, got {self.fallback_mph}")


def _patch_bounds(center, size, shape):
    col, row = center
    r0 = int(np.floor(row + 0.5)) - size // 2
    c0 = int(np.floor(col + 0.5)) - size // 2
    h, w = shape
    return max(r0, 0), min(r0 + size, h), max(c0, 0), min(c0 + size, w)


def patch_speed(
    mask: RasterMask,
    center_px,
    patch_size: int = 8,
    mode: str = "multiclass",
    background_filter: float = 0.3,
) -> float | None:
    """Speed read from a ``patch_size`` square around ``center_px = (col, row)``.

    Multi-class: the speed band with the most pixels at or above the filter
    wins (ties go to the slower band) and its bin center is returned.
    Continuous: mean of the retained pixels scaled to 65 mph. ``None`` when no
    pixel passes the filter.
    """
    r0, r1, c0, c1 = _patch_bounds(center_px, patch_size, mask.shape)
    if r0 >= r1 or c0 >= c1:
        return None
    if mode == "multiclass":
        patch = mask.data[:N_SPEED_BINS, r0:r1, c0:c1]
        counts = (patch >= background_filter).sum(axis=(1, 2))
        if counts.max() == 0:
            return None
        return channel_to_speed(int(np.argmax(counts)))
    if mode == "continuous":
        vals = mask.data[0, r0:r1, c0:c1]
        keep = vals[vals >= background_filter]
        if keep.size == 0:
            return None
        return float(keep.astype(np.float64).mean() * MAX_SPEED_MPH)
    raise ValueError(f"unknown mode {mode!r}")


def edge_speed(
    mask: RasterMask,
    edge: RoadEdge,
    transform: GeoTransform | None = None,
    mode: str = "multiclass",
    patch_size: int = 8,
    background_filter: float = 0.3,
    junction_guard_m: float = 0.0,
) -> float | None:
    """Mean of the patch speeds at each segment midpoint of the edge.

    Midpoints within ``junction_guard_m`` of either end (measured along the
    edge) are ignored when at least one reading lies outside that zone, since
    patches there also see the crossing road.
    """
    transform = transform or mask.transform
    geom = edge.geometry
    mids = 0.5 * (geom[:-1] + geom[1:])
    cum = cumulative_lengths(geom)
    arc = 0.5 * (cum[:-1] + cum[1:])
    inner = (arc >= junction_guard_m) & (arc <= cum[-1] - junction_guard_m)
    cols, rows = transform.world_to_pixel(mids[:, 0], mids[:, 1])
    h, w = mask.shape
    speeds, guarded = [], []
    for c, r, ok in zip(cols, rows, inner):
        if not (-0.5 <= c < w - 0.5 and -0.5 <= r < h - 0.5):
            continue
        s = patch_speed(mask, (c, r), patch_size, mode, background_filter)
        if s is not None:
            (speeds if ok else guarded).append(s)
    if not speeds:
        speeds = guarded
    if not speeds:
        return None
    return float(np.mean(speeds))


def infer_speeds(
    graph: RoadGraph,
    mask: RasterMask,
    transform: GeoTransform | None = None,
    config: SpeedConfig = SpeedConfig(),
) -> RoadGraph:
    """Attach inferred speed and travel time to every edge.

    Edges without any mask signal get ``config.fallback_mph``.
    """
    edges = []
    for e in graph.edges:
        s = edge_speed(
            mask, e, transform, config.mode, config.patch_size, config.background_filter, config.junction_guard_m
        )
        if s is None:
            s = config.fallback_mph
        edges.append(e.with_speed(min(max(s, 1.0), MAX_SPEED_MPH)))
    return RoadGraph(graph.nodes, tuple(edges), graph.transform)
