"""Planar polyline helpers shared by the graph, cleaning and metric code.

Polylines are ``(n, 2)`` float64 arrays of ``(x, y)`` meters.
"""

from __future__ import annotations

import math

import numpy as np


def as_polyline(points) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
        raise ValueError(f"polyline must be an (n>=2, 2) array, got shape {arr.shape}")
    return arr


def segment_lengths(line: np.ndarray) -> np.ndarray:
    d = np.diff(line, axis=0)
    return np.hypot(d[:, 0], d[:, 1])


def polyline_length(line: np.ndarray) -> float:
    return float(segment_lengths(line).sum())


def cumulative_lengths(line: np.ndarray) -> np.ndarray:
    out = np.zeros(len(line))
    np.cumsum(segment_lengths(line), out=out[1:])
    return out


def interpolate(line: np.ndarray, s: float) -> np.ndarray:
    """Point at arc length ``s`` (clamped to the polyline)."""
    cum = cumulative_lengths(line)
    s = min(max(s, 0.0), cum[-1])
    i = int(np.searchsorted(cum, s, side="right")) - 1
    i = min(max(i, 0), len(line) - 2)
    seg = cum[i + 1] - cum[i]
    t = 0.0 if seg == 0 else (s - cum[i]) / seg
    return line[i] + t * (line[i + 1] - line[i])


def substring(line: np.ndarray, s0: float, s1: float) -> np.ndarray:
    """Portion of the polyline between arc positions ``s0 <= s1``."""
    cum = cumulative_lengths(line)
    s0 = min(max(s0, 0.0), cum[-1])
    s1 = min(max(s1, s0), cum[-1])
    inner = line[(cum > s0) & (cum < s1)]
    return np.vstack([interpolate(line, s0), inner, interpolate(line, s1)])


def split_at(line: np.ndarray, positions) -> list[np.ndarray]:
    """Cut a polyline at the sorted interior arc positions."""
    pieces = []
    prev = 0.0
    total = polyline_length(line)
    for s in positions:
        pieces.append(substring(line, prev, s))
        prev = s
    pieces.append(substring(line, prev, total))
    return pieces


def project_points(points: np.ndarray, line: np.ndarray):
    """Nearest location on ``line`` for each point.

    Returns ``(distance, arc_position, nearest_xy)`` arrays.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    a = line[:-1]
    b = line[1:]
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    denom = np.where(denom == 0, 1.0, denom)
    # (n_points, n_segments)
    ap = pts[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("ijk,jk->ij", ap, ab) / denom, 0.0, 1.0)
    proj = a[None, :, :] + t[..., None] * ab[None, :, :]
    dist = np.hypot(pts[:, None, 0] - proj[..., 0], pts[:, None, 1] - proj[..., 1])
    best = np.argmin(dist, axis=1)
    rows = np.arange(len(pts))
    cum = cumulative_lengths(line)
    seg_len = np.sqrt(np.einsum("ij,ij->i", ab, ab))
    arc = cum[best] + t[rows, best] * seg_len[best]
    return dist[rows, best], arc, proj[rows, best]


def simplify(line: np.ndarray, tolerance: float) -> np.ndarray:
    """Ramer-Douglas-Peucker simplification keeping both endpoints."""
    if len(line) <= 2 or tolerance <= 0:
        return line.copy()
    keep = np.zeros(len(line), dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, len(line) - 1)]
    while stack:
        i, j = stack.pop()
        if j <= i + 1:
            continue
        a, b = line[i], line[j]
        seg = line[i + 1 : j]
        ab = b - a
        norm = math.hypot(ab[0], ab[1])
        if norm == 0:
            d = np.hypot(seg[:, 0] - a[0], seg[:, 1] - a[1])
        else:
            d = np.abs(ab[0] * (seg[:, 1] - a[1]) - ab[1] * (seg[:, 0] - a[0])) / norm
        k = int(np.argmax(d))
        if d[k] > tolerance:
            m = i + 1 + k
            keep[m] = True
            stack.append((i, m))
            stack.append((m, j))
    return line[keep]


def terminal_heading(line: np.ndarray, at_end: bool, span: float) -> np.ndarray:
    """Unit direction pointing out of the polyline at one of its ends.

    The direction is taken over the last ``span`` meters of arc (or the whole
    line when shorter). Returns a zero vector for degenerate lines.
    """
    total = polyline_length(line)
    if at_end:
        tip = line[-1]
        base = interpolate(line, max(total - span, 0.0))
    else:
        tip = line[0]
        base = interpolate(line, min(span, total))
    v = tip - base
    n = math.hypot(v[0], v[1])
    if n == 0:
        return np.zeros(2)
    return v / n


def segments_intersect(p1, p2, q1, q2) -> bool:
    """Proper or touching intersection test for two closed segments."""

    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if abs(v) < 1e-12 else (1 if v > 0 else -1)

    def on_seg(a, b, c):
        return min(a[0], b[0]) - 1e-12 <= c[0] <= max(a[0], b[0]) + 1e-12 and min(
            a[1], b[1]
        ) - 1e-12 <= c[1] <= max(a[1], b[1]) + 1e-12

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_seg(p1, p2, q1):
        return True
    if o2 == 0 and on_seg(p1, p2, q2):
        return True
    if o3 == 0 and on_seg(q1, q2, p1):
        return True
    if o4 == 0 and on_seg(q1, q2, p2):
        return True
    return False
