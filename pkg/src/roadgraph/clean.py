"""Graph curation: subgraph pruning, spur removal and gap closing."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import simplify, terminal_heading
from .graph import EditableGraph, RoadEdge, RoadGraph

CHIP_MIN_SUBGRAPH_M = 6.0
CITY_MIN_SUBGRAPH_M = 80.0


@dataclass(frozen=True)
class CleanConfig:
    min_subgraph_m: float = CHIP_MIN_SUBGRAPH_M
    max_spur_m: float = 3.0
    max_terminal_gap_m: float = 6.0
    exclude_component: bool = False
    directional_gap_m: float = 25.0
    directional_angle_deg: float = 30.0
    heading_span_m: float = 5.0
    simplify_tolerance_px: float = 1.0
    dissolve_after_connect: bool = True

    @classmethod
    def for_mode(cls, city_scale: bool, **kw) -> "CleanConfig":
        kw.setdefault("min_subgraph_m", CITY_MIN_SUBGRAPH_M if city_scale else CHIP_MIN_SUBGRAPH_M)
        return cls(**kw)


def prune_subgraphs(graph: RoadGraph, min_total_length_m: float) -> RoadGraph:
    """Remove connected components whose summed edge length is below the threshold."""
    if min_total_length_m < 0:
        raise ValueError("min_total_length_m must be >= 0")
    keep = []
    for nodes, edges in graph.components():
        total = sum(graph.edges[i].length_m for i in edges)
        if not total < min_total_length_m:
            keep.extend(nodes)
    if len(keep) == len(graph.nodes):
        return graph
    return graph.subgraph(keep)


def _merge_pair(e1: RoadEdge, e2: RoadEdge, at: int) -> RoadEdge:
    g1 = e1.geometry if e1.v == at else e1.geometry[::-1]
    g2 = e2.geometry if e2.u == at else e2.geometry[::-1]
    u = e1.other(at)
    v = e2.other(at)
    geom = np.vstack([g1, g2[1:]])
    meta = e1.metadata if e1.metadata == e2.metadata else None
    merged = RoadEdge.from_geometry(u, v, geom, metadata=meta)
    if e1.speed_mph is not None and e1.speed_mph == e2.speed_mph:
        merged = merged.with_speed(e1.speed_mph)
    return merged


def _dissolve_degree2(work: EditableGraph) -> None:
    for n in sorted(work.nodes):
        handles = list(work.adj.get(n, ()))
        if len(handles) != 2:
            continue
        e1, e2 = work.edges[handles[0]], work.edges[handles[1]]
        if e1.is_loop or e2.is_loop:
            continue
        handles.sort()
        e1, e2 = work.edges[handles[0]], work.edges[handles[1]]
        merged = _merge_pair(e1, e2, n)
        work.remove_edge(handles[0])
        work.remove_edge(handles[1])
        work.add_edge(merged)
        del work.adj[n]
        del work.nodes[n]


def dissolve_degree2(graph: RoadGraph) -> RoadGraph:
    """Merge the two edges of every degree-2 node into one edge."""
    work = EditableGraph(graph)
    _dissolve_degree2(work)
    return work.freeze()


def remove_spurs(graph: RoadGraph, max_spur_m: float = 3.0) -> RoadGraph:
    """Iteratively drop terminal edges shorter than ``max_spur_m``, then dissolve degree-2 nodes."""
    work = EditableGraph(graph)
    changed = True
    while changed:
        changed = False
        for n in sorted(work.nodes):
            if n not in work.nodes or work.degree(n) != 1:
                continue
            (k,) = work.adj[n]
            e = work.edges[k]
            if not e.length_m < max_spur_m:
                continue
            other = e.other(n)
            work.remove_node(n)
            if other in work.nodes and work.degree(other) == 0:
                work.remove_node(other)
            changed = True
    _dissolve_degree2(work)
    return work.freeze()


def _straight_edge(work: EditableGraph, a: int, b: int) -> RoadEdge:
    return RoadEdge.from_geometry(a, b, np.vstack([work.nodes[a], work.nodes[b]]))


def _component_labels(work: EditableGraph) -> dict[int, int]:
    label: dict[int, int] = {}
    for start in sorted(work.nodes):
        if start in label:
            continue
        label[start] = start
        stack = [start]
        while stack:
            x = stack.pop()
            for y in work.neighbors(x):
                if y not in label:
                    label[y] = start
                    stack.append(y)
    return label


def connect_terminals(graph: RoadGraph, max_gap_m: float = 6.0, exclude_component: bool = False) -> RoadGraph:
    """Link each degree-1 node to its nearest eligible node closer than ``max_gap_m``.

    Eligible nodes exclude the terminal itself, isolated nodes and its direct
    neighbours (or its whole component with ``exclude_component``). Candidates are applied
    in ascending distance; a terminal that gained an edge earlier in the pass
    no longer initiates one.
    """
    work = EditableGraph(graph)
    ids = sorted(work.nodes)
    if len(ids) < 2:
        return graph
    xy = np.array([work.nodes[i] for i in ids])
    tree = cKDTree(xy)
    comp = _component_labels(work) if exclude_component else None
    cands = []
    for t in ids:
        if work.degree(t) != 1:
            continue
        nbrs = work.neighbors(t)
        best = None
        for j in tree.query_ball_point(work.nodes[t], max_gap_m):
            n = ids[j]
            if n == t or n in nbrs or work.degree(n) == 0 or (comp is not None and comp[n] == comp[t]):
                continue
            d = float(np.hypot(*(work.nodes[n] - work.nodes[t])))
            if d < max_gap_m and (best is None or (d, n) < best):
                best = (d, n)
        if best is not None:
            cands.append((best[0], t, best[1]))
    for d, t, n in sorted(cands):
        if work.degree(t) != 1 or n in work.neighbors(t):
            continue
        work.add_edge(_straight_edge(work, t, n))
    return work.freeze()


def close_gaps_directional(
    graph: RoadGraph,
    max_gap_m: float = 25.0,
    max_angle_deg: float = 30.0,
    heading_span_m: float = 5.0,
) -> RoadGraph:
    """Join pairs of dead ends that face each other across a gap.

    Each terminal's heading is the outward direction of the last
    ``heading_span_m`` of its edge. A pair qualifies when the gap is shorter
    than ``max_gap_m`` and both headings point at the other terminal within
    ``max_angle_deg``. Pairs are joined greedily by ascending gap.
    """
    if max_gap_m < 0 or not 0 <= max_angle_deg <= 90:
        raise ValueError("invalid directional gap parameters")
    work = EditableGraph(graph)
    terms = [n for n in sorted(work.nodes) if work.degree(n) == 1]
    if len(terms) < 2:
        return graph
    heading = {}
    for t in terms:
        (k,) = work.adj[t]
        e = work.edges[k]
        heading[t] = terminal_heading(e.geometry, at_end=(e.v == t), span=heading_span_m)
    xy = np.array([work.nodes[t] for t in terms])
    cos_lim = math.cos(math.radians(max_angle_deg)) - 1e-12
    pairs = []
    for i, j in cKDTree(xy).query_pairs(max_gap_m):
        a, b = terms[i], terms[j]
        v = work.nodes[b] - work.nodes[a]
        d = float(np.hypot(v[0], v[1]))
        if d == 0 or not d < max_gap_m or b in work.neighbors(a):
            continue
        u = v / d
        if float(heading[a] @ u) >= cos_lim and float(heading[b] @ -u) >= cos_lim:
            pairs.append((d, min(a, b), max(a, b)))
    used: set[int] = set()
    for d, a, b in sorted(pairs):
        if a in used or b in used:
            continue
        used.update((a, b))
        work.add_edge(_straight_edge(work, a, b))
    return work.freeze()


def simplify_edges(graph: RoadGraph, tolerance_m: float) -> RoadGraph:
    if tolerance_m <= 0:
        return graph
    edges = []
    for e in graph.edges:
        geom = simplify(e.geometry, tolerance_m)
        if len(geom) == len(e.geometry):
            edges.append(e)
            continue
        new = RoadEdge.from_geometry(e.u, e.v, geom, metadata=e.metadata)
        edges.append(new.with_speed(e.speed_mph) if e.speed_mph is not None else new)
    return RoadGraph(graph.nodes, tuple(edges), graph.transform)


def clean_graph(graph: RoadGraph, config: CleanConfig = CleanConfig()) -> RoadGraph:
    """Full curation sequence applied to a freshly extracted skeleton graph."""
    g = prune_subgraphs(graph, config.min_subgraph_m)
    g = remove_spurs(g, config.max_spur_m)
    g = connect_terminals(g, config.max_terminal_gap_m, config.exclude_component)
    if config.directional_gap_m > 0:
        g = close_gaps_directional(
            g, config.directional_gap_m, config.directional_angle_deg, config.heading_span_m
        )
    g = prune_subgraphs(g, config.min_subgraph_m)
    if config.dissolve_after_connect:
        g = dissolve_degree2(g)
    if g.transform is not None and config.simplify_tolerance_px > 0:
        g = simplify_edges(g, config.simplify_tolerance_px * g.transform.pixel_size)
    return g
