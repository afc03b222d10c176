"""Average Path Length Similarity between a reference and a proposal road graph.

For pairs of control nodes in the reference graph, the optimal path length
is compared with the optimal path between their snapped counterparts in the
proposal. Each pair scores ``1 - min(1, |L - L'| / L)``; pairs that cannot be
snapped or routed in the proposal score 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..graph import RoadGraph, RoadNode
from .common import EdgeIndex, path_lengths, piece_edge, split_edges, weight_matrix
from ..geometry import split_at


class AplsDomainError(ValueError):
    pass


@dataclass(frozen=True)
class AplsConfig:
    buffer_m: float = 4.0
    weight: str = "length"
    large_mode: bool = False
    max_control_nodes: int = 500
    midpoint_spacing_m: float = 50.0
    seed: int = 0
    symmetrize: str = "mean"

    def __post_init__(self):
        if not self.buffer_m > 0:
            raise ValueError(f"buffer_m must be > 0, got {self.buffer_m}")
        if self.max_control_nodes < 2:
            raise ValueError("max_control_nodes must be >= 2")
        if self.weight not in ("length", "time"):
            raise ValueError(f"weight must be 'length' or 'time', got {self.weight!r}")
        if self.symmetrize not in ("mean", "harmonic"):
            raise ValueError(f"symmetrize must be 'mean' or 'harmonic', got {self.symmetrize!r}")
        if not self.midpoint_spacing_m > 0:
            raise ValueError("midpoint_spacing_m must be > 0")


@dataclass
class AplsDetail:
    score: float | None
    n_control: int
    n_matched: int
    n_pairs: int
    n_pairs_missing: int


def inject_midpoints(graph: RoadGraph, spacing_m: float) -> RoadGraph:
    """Split every edge longer than ``spacing_m`` into equal pieces no longer than it."""
    if not spacing_m > 0:
        raise ValueError(f"spacing_m must be > 0, got {spacing_m}")
    nodes = dict(graph.nodes)
    next_id = max(nodes, default=-1) + 1
    edges = []
    for e in graph.edges:
        n = int(math.ceil(e.length_m / spacing_m - 1e-12))
        if n <= 1:
            edges.append(e)
            continue
        cuts = [e.length_m * k / n for k in range(1, n)]
        pieces = split_at(e.geometry, cuts)
        chain = [e.u]
        for p in pieces[:-1]:
            nodes[next_id] = RoadNode(next_id, float(p[-1, 0]), float(p[-1, 1]))
            chain.append(next_id)
            next_id += 1
        chain.append(e.v)
        for k, geom in enumerate(pieces):
            edges.append(piece_edge(e, chain[k], chain[k + 1], geom))
    return RoadGraph(nodes, tuple(edges), graph.transform)


def snap_control_nodes(points: dict[int, np.ndarray], target: RoadGraph, buffer_m: float):
    """Map each control point to the nearest location on ``target`` within ``buffer_m``.

    Snapped locations are inserted into the target as nodes, splitting the
    edge they fall on. Returns ``(mapping, augmented_target)`` where mapping
    values are target node ids or ``None`` for points beyond the buffer.
    """
    keys = sorted(points)
    mapping: dict[int, int | None] = {k: None for k in keys}
    if not keys:
        return mapping, target
    xy = np.array([points[k] for k in keys], dtype=np.float64)
    edge, arc, _, _ = EdgeIndex(target).nearest(xy, buffer_m)
    cuts: dict[int, list[float]] = {}
    for e, s in zip(edge, arc):
        if e >= 0:
            cuts.setdefault(int(e), []).append(float(s))
    aug, where = split_edges(target, cuts)
    cursor = {e: 0 for e in where}
    for k, e in zip(keys, edge):
        if e < 0:
            continue
        e = int(e)
        mapping[k] = where[e][cursor[e]][1]
        cursor[e] += 1
    return mapping, aug


def control_nodes(graph: RoadGraph, cfg: AplsConfig) -> tuple[RoadGraph, list[int]]:
    """Graph with control nodes prepared and the sorted ids chosen as controls."""
    g = graph if cfg.large_mode else inject_midpoints(graph, cfg.midpoint_spacing_m)
    ids = sorted(g.nodes)
    if len(ids) > cfg.max_control_nodes:
        rng = np.random.default_rng(cfg.seed)
        pick = rng.choice(len(ids), size=cfg.max_control_nodes, replace=False)
        ids = sorted(ids[i] for i in pick)
    return g, ids


def _check_times(*graphs: RoadGraph) -> None:
    for g in graphs:
        for i, e in enumerate(g.edges):
            if e.travel_time_s is None:
                raise AplsDomainError(f"weight=time but edge {i} ({e.u}-{e.v}) has no travel time")


def apls_directional_detail(G: RoadGraph, Gp: RoadGraph, cfg: AplsConfig = AplsConfig()) -> AplsDetail:
    if cfg.weight == "time":
        _check_times(G, Gp)
    src, ctrl = control_nodes(G, cfg)
    if len(ctrl) < 2:
        return AplsDetail(None, len(ctrl), 0, 0, 0)
    mapping, aug = snap_control_nodes({n: src.xy(n) for n in ctrl}, Gp, cfg.buffer_m)

    mat, _, index_of = weight_matrix(src, cfg.weight)
    cidx = [index_of[n] for n in ctrl]
    dg = path_lengths(mat, cidx)[:, cidx]

    matched = sorted({m for m in mapping.values() if m is not None})
    dp = None
    if matched:
        pmat, _, pindex = weight_matrix(aug, cfg.weight)
        pidx = [pindex[m] for m in matched]
        dp = path_lengths(pmat, pidx)[:, pidx]
    slot = {m: k for k, m in enumerate(matched)}

    total = 0.0
    n_pairs = 0
    missing = 0
    k = len(ctrl)
    for i in range(k):
        mi = mapping[ctrl[i]]
        for j in range(i + 1, k):
            lg = dg[i, j]
            if not np.isfinite(lg):
                continue
            n_pairs += 1
            mj = mapping[ctrl[j]]
            if mi is None or mj is None:
                missing += 1
                continue
            lp = dp[slot[mi], slot[mj]]
            if not np.isfinite(lp):
                missing += 1
                continue
            diff = abs(lg - lp)
            if lg > 0:
                total += 1.0 - min(1.0, diff / lg)
            else:
                total += 1.0 if diff == 0 else 0.0
    score = total / n_pairs if n_pairs else None
    return AplsDetail(score, k, sum(m is not None for m in mapping.values()), n_pairs, missing)


def apls_directional(G: RoadGraph, Gp: RoadGraph, cfg: AplsConfig = AplsConfig()) -> float | None:
    """One-sided score with control nodes taken from ``G``.

    ``None`` when ``G`` offers no connected pair of control nodes.
    """
    return apls_directional_detail(G, Gp, cfg).score


def combine(a: float | None, b: float | None, how: str = "mean") -> float | None:
    if a is None and b is None:
        return None
    a = 0.0 if a is None else a
    b = 0.0 if b is None else b
    if how == "harmonic":
        return 0.0 if a + b == 0 else 2 * a * b / (a + b)
    return 0.5 * (a + b)


def apls(G: RoadGraph, Gp: RoadGraph, cfg: AplsConfig = AplsConfig()) -> float | None:
    """Symmetric APLS: both directional scores combined per ``cfg.symmetrize``.

    An undefined direction counts as 0 unless both are undefined, in which
    case the result is ``None``.
    """
    return combine(apls_directional(G, Gp, cfg), apls_directional(Gp, G, cfg), cfg.symmetrize)
