"""Shared helpers for the graph metrics: spatial edge index, edge splitting, shortest paths."""

from __future__ import annotations

import math

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from ..geometry import cumulative_lengths, split_at
from ..graph import RoadEdge, RoadGraph, RoadNode

SPLIT_TOL_M = 1e-9
TIE_TOL_M = 1e-9


class EdgeIndex:
    """Nearest-point queries against every edge polyline of a graph.

    Segments are cut into pieces of at most ``piece_m`` whose midpoints go
    into a KD-tree; candidates are then projected exactly.
    """

    def __init__(self, graph: RoadGraph, piece_m: float = 10.0):
        self.graph = graph
        self.piece_m = piece_m
        a, b, edge_of, arc0 = [], [], [], []
        for i, e in enumerate(graph.edges):
            g = e.geometry
            a.append(g[:-1])
            b.append(g[1:])
            edge_of.append(np.full(len(g) - 1, i, dtype=np.int64))
            arc0.append(cumulative_lengths(g)[:-1])
        if a:
            self.a = np.vstack(a)
            self.b = np.vstack(b)
            self.edge_of = np.concatenate(edge_of)
            self.arc0 = np.concatenate(arc0)
        else:
            self.a = self.b = np.zeros((0, 2))
            self.edge_of = np.zeros(0, dtype=np.int64)
            self.arc0 = np.zeros(0)
        d = self.b - self.a
        self.seg_len = np.hypot(d[:, 0], d[:, 1])
        n_piece = np.maximum(1, np.ceil(self.seg_len / piece_m)).astype(np.int64)
        seg_of_piece = np.repeat(np.arange(len(self.a)), n_piece)
        first = np.cumsum(n_piece) - n_piece
        k = np.arange(len(seg_of_piece)) - np.repeat(first, n_piece)
        t = (k + 0.5) / np.repeat(n_piece, n_piece)
        mids = self.a[seg_of_piece] + t[:, None] * d[seg_of_piece]
        self.seg_of_piece = seg_of_piece
        self.tree = cKDTree(mids) if len(mids) else None
        self.reach = float((self.seg_len / n_piece).max() / 2) if len(mids) else 0.0

    def nearest(self, points, max_dist: float):
        """Closest edge location within ``max_dist`` of each point.

        Returns ``(edge, arc, dist, xy)``; ``edge`` is -1 where nothing is in
        range. Distances within ``TIE_TOL_M`` count as ties, which go to the lowest
        edge index, then the lowest arc position.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64)).reshape(-1, 2)
        n = len(pts)
        edge = np.full(n, -1, dtype=np.int64)
        arc = np.zeros(n)
        dist = np.full(n, np.inf)
        xy = np.full((n, 2), np.nan)
        if self.tree is None or n == 0:
            return edge, arc, dist, xy
        hits = self.tree.query_ball_point(pts, max_dist + self.reach + 1e-9)
        for i, cand in enumerate(hits):
            if not cand:
                continue
            segs = np.unique(self.seg_of_piece[cand])
            a, b = self.a[segs], self.b[segs]
            ab = b - a
            den = np.einsum("ij,ij->i", ab, ab)
            t = np.where(den > 0, np.einsum("ij,ij->i", pts[i] - a, ab) / np.where(den > 0, den, 1.0), 0.0)
            t = np.clip(t, 0.0, 1.0)
            proj = a + t[:, None] * ab
            dd = np.hypot(proj[:, 0] - pts[i, 0], proj[:, 1] - pts[i, 1])
            s = self.arc0[segs] + t * self.seg_len[segs]
            # distances within TIE_TOL_M are ties (parallel duplicate edges differ only by rounding)
            near = np.flatnonzero(dd <= dd.min() + TIE_TOL_M)
            j = near[np.lexsort((s[near], self.edge_of[segs][near]))[0]]
            if dd[j] <= max_dist:
                edge[i] = self.edge_of[segs[j]]
                arc[i] = s[j]
                dist[i] = dd[j]
                xy[i] = proj[j]
        return edge, arc, dist, xy


def piece_edge(edge: RoadEdge, u: int, v: int, geom: np.ndarray) -> RoadEdge:
    """Sub-edge of ``edge`` carrying its metadata, speed and a pro-rata travel time."""
    new = RoadEdge.from_geometry(u, v, geom, metadata=edge.metadata)
    if edge.speed_mph is not None:
        return new.with_speed(edge.speed_mph)
    if edge.travel_time_s is not None:
        frac = new.length_m / edge.length_m if edge.length_m > 0 else 0.0
        return RoadEdge(u, v, new.geometry, new.length_m, None, edge.travel_time_s * frac, edge.metadata)
    return new


def split_edges(graph: RoadGraph, cuts: dict[int, list[float]]):
    """Insert nodes at arc positions along edges.

    ``cuts`` maps edge index to arc positions. Positions within
    ``SPLIT_TOL_M`` of an end resolve to the existing end node. Returns the
    new graph and, per edge, a list of ``(arc, node_id)`` for every requested
    position.
    """
    nodes = dict(graph.nodes)
    next_id = max(nodes, default=-1) + 1
    edges: list[RoadEdge] = []
    where: dict[int, list[tuple[float, int]]] = {}
    for i, e in enumerate(graph.edges):
        pos = cuts.get(i)
        if not pos:
            edges.append(e)
            continue
        L = e.length_m
        interior: list[float] = []
        for s in sorted(pos):
            if s > SPLIT_TOL_M and s < L - SPLIT_TOL_M:
                if not interior or s - interior[-1] > SPLIT_TOL_M:
                    interior.append(s)
        ids = []
        pieces = split_at(e.geometry, interior) if interior else [e.geometry]
        for k in range(len(interior)):
            p = pieces[k][-1]
            nodes[next_id] = RoadNode(next_id, float(p[0]), float(p[1]))
            ids.append(next_id)
            next_id += 1
        chain = [e.u] + ids + [e.v]
        for k, geom in enumerate(pieces):
            edges.append(piece_edge(e, chain[k], chain[k + 1], geom))
        res = []
        for s in pos:
            if s <= SPLIT_TOL_M:
                res.append((s, e.u))
            elif s >= L - SPLIT_TOL_M:
                res.append((s, e.v))
            else:
                k = int(np.argmin([abs(s - c) for c in interior]))
                res.append((s, ids[k]))
        where[i] = res
    return RoadGraph(nodes, tuple(edges), graph.transform), where


def weight_matrix(graph: RoadGraph, weight: str = "length"):
    """Sparse symmetric adjacency keeping the lightest of parallel edges.

    Returns ``(matrix, node_ids, index_of)``. Self-loops never shorten a path
    and are dropped.
    """
    ids = sorted(graph.nodes)
    index_of = {n: k for k, n in enumerate(ids)}
    rows, cols, w = [], [], []
    for e in graph.edges:
        if e.is_loop:
            continue
        val = e.length_m if weight == "length" else e.travel_time_s
        if val is None:
            continue
        # csgraph drops stored zeros, so keep coincident nodes connected
        val = max(float(val), 1e-300)
        a, b = index_of[e.u], index_of[e.v]
        rows += [a, b]
        cols += [b, a]
        w += [val, val]
    n = len(ids)
    if not rows:
        return csr_matrix((n, n)), ids, index_of
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    w = np.asarray(w)
    order = np.lexsort((w, cols, rows))
    rows, cols, w = rows[order], cols[order], w[order]
    first = np.ones(len(rows), dtype=bool)
    first[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
    mat = csr_matrix((w[first], (rows[first], cols[first])), shape=(n, n))
    return mat, ids, index_of


def path_lengths(mat, sources, limit: float = math.inf) -> np.ndarray:
    if len(sources) == 0:
        return np.zeros((0, mat.shape[0]))
    return dijkstra(mat, directed=False, indices=np.asarray(sources, dtype=np.int64), limit=limit)
