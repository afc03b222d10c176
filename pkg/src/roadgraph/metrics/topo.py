"""TOPO: local reachability precision/recall around seed locations.

Both graphs are sampled every ``hole_m`` along their edges. For each seed
location on the reference graph, samples reachable within ``radius_m`` along
the network are collected in both graphs and matched one-to-one within
``hole_m``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..geometry import cumulative_lengths, interpolate
from ..graph import RoadGraph
from .common import EdgeIndex, path_lengths, weight_matrix


@dataclass(frozen=True)
class TopoConfig:
    hole_m: float = 4.0
    radius_m: float = 300.0
    n_seeds: int = 100
    seed: int = 0

    def __post_init__(self):
        if not self.hole_m > 0:
            raise ValueError(f"hole_m must be > 0, got {self.hole_m}")
        if not self.radius_m > self.hole_m:
            raise ValueError("radius_m must exceed hole_m")
        if self.n_seeds < 1:
            raise ValueError(f"n_seeds must be >= 1, got {self.n_seeds}")


@dataclass
class TopoResult:
    precision: float
    recall: float
    f1: float
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def as_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "tp": self.tp, "fp": self.fp, "fn": self.fn}


class _Samples:
    """Node samples plus interior edge samples spaced ``step`` apart."""

    def __init__(self, graph: RoadGraph, step: float):
        self.graph = graph
        self.mat, self.ids, self.index_of = weight_matrix(graph, "length")
        _, node_xy = graph.node_array()
        edge, arc, xy = [], [], []
        for i, e in enumerate(graph.edges):
            L = e.length_m
            m = int(np.ceil(L / step)) - 1
            if m <= 0:
                continue
            s = np.arange(1, m + 1) * step
            s = s[s < L]
            cum = cumulative_lengths(e.geometry)
            pts = np.column_stack([np.interp(s, cum, e.geometry[:, 0]), np.interp(s, cum, e.geometry[:, 1])])
            edge.append(np.full(len(s), i))
            arc.append(s)
            xy.append(pts)
        self.edge = np.concatenate(edge) if edge else np.zeros(0, dtype=np.int64)
        self.arc = np.concatenate(arc) if arc else np.zeros(0)
        self.edge_xy = np.vstack(xy) if xy else np.zeros((0, 2))
        self.node_xy = node_xy
        eu = np.array([self.index_of[e.u] for e in graph.edges], dtype=np.int64)
        ev = np.array([self.index_of[e.v] for e in graph.edges], dtype=np.int64)
        elen = np.array([e.length_m for e in graph.edges])
        self.su = eu[self.edge] if len(self.edge) else np.zeros(0, dtype=np.int64)
        self.sv = ev[self.edge] if len(self.edge) else np.zeros(0, dtype=np.int64)
        self.slen = elen[self.edge] if len(self.edge) else np.zeros(0)
        self.eu, self.ev, self.elen = eu, ev, elen

    def reachable(self, edge: int, arc: float, radius: float) -> np.ndarray:
        """Coordinates of samples within ``radius`` of a point on ``edge`` (seed included)."""
        e = self.graph.edges[edge]
        seed_xy = interpolate(e.geometry, arc)
        u, v, L = self.eu[edge], self.ev[edge], self.elen[edge]
        d = path_lengths(self.mat, [u, v], limit=radius)
        dist_node = np.minimum(d[0] + arc, d[1] + (L - arc))
        dist_edge = np.minimum(dist_node[self.su] + self.arc, dist_node[self.sv] + (self.slen - self.arc))
        on_seed = self.edge == edge
        dist_edge[on_seed] = np.minimum(dist_edge[on_seed], np.abs(self.arc[on_seed] - arc))
        if e.is_loop:
            # a loop edge can also be left through its far side
            dist_edge[on_seed] = np.minimum(dist_edge[on_seed], L - np.abs(self.arc[on_seed] - arc))
        pts = [seed_xy[None, :], self.node_xy[dist_node <= radius], self.edge_xy[dist_edge <= radius]]
        return np.vstack(pts)


def _greedy_match(a: np.ndarray, b: np.ndarray, tol: float) -> int:
    """Size of a greedy one-to-one matching between point sets, closest pairs first."""
    if len(a) == 0 or len(b) == 0:
        return 0
    sdm = cKDTree(a).sparse_distance_matrix(cKDTree(b), tol, output_type="ndarray")
    if len(sdm) == 0:
        return 0
    order = np.lexsort((sdm["j"], sdm["i"], sdm["v"]))
    used_a = np.zeros(len(a), dtype=bool)
    used_b = np.zeros(len(b), dtype=bool)
    n = 0
    for k in order:
        i, j = sdm["i"][k], sdm["j"][k]
        if not used_a[i] and not used_b[j]:
            used_a[i] = used_b[j] = True
            n += 1
    return n


def seed_locations(graph: RoadGraph, n_seeds: int, seed: int = 0) -> list[tuple[int, float]]:
    """``n_seeds`` (edge, arc) locations drawn uniformly along the total length."""
    lengths = np.array([e.length_m for e in graph.edges])
    total = lengths.sum() if len(lengths) else 0.0
    if total <= 0:
        return []
    rng = np.random.default_rng(seed)
    s = np.sort(rng.uniform(0.0, total, size=n_seeds))
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(lengths) - 1)
    return [(int(i), float(min(x - cum[i], lengths[i]))) for i, x in zip(idx, s)]


def topo(G: RoadGraph, Gp: RoadGraph, cfg: TopoConfig = TopoConfig(), seeds=None) -> TopoResult:
    """Precision, recall and F1 aggregated over all seeds.

    ``seeds`` may give explicit ``(x, y)`` seed points on ``G``; otherwise
    ``cfg.n_seeds`` locations are drawn along ``G`` with ``cfg.seed``.
    """
    if seeds is None:
        locs = seed_locations(G, cfg.n_seeds, cfg.seed)
    else:
        pts = np.asarray(seeds, dtype=np.float64).reshape(-1, 2)
        e, s, _, _ = EdgeIndex(G).nearest(pts, cfg.hole_m)
        locs = [(int(a), float(b)) for a, b in zip(e, s) if a >= 0]
    if not locs:
        return TopoResult(0.0, 0.0, 0.0)
    gs = _Samples(G, cfg.hole_m)
    ps = _Samples(Gp, cfg.hole_m)
    pidx = EdgeIndex(Gp)
    seed_xy = np.array([interpolate(G.edges[e].geometry, s) for e, s in locs])
    pe, parc, _, _ = pidx.nearest(seed_xy, cfg.hole_m)
    tp = fp = fn = 0
    for (e, s), qe, qs in zip(locs, pe, parc):
        truth = gs.reachable(e, s, cfg.radius_m)
        if qe < 0:
            fn += len(truth)
            continue
        prop = ps.reachable(int(qe), float(qs), cfg.radius_m)
        m = _greedy_match(truth, prop, cfg.hole_m)
        tp += m
        fn += len(truth) - m
        fp += len(prop) - m
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return TopoResult(precision, recall, f1, tp, fp, fn)
