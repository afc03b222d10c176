"""Shortest routes by length or travel time, and graph summaries."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .graph import RoadGraph


class NodeNotFoundError(KeyError):
    pass


@dataclass
class Route:
    nodes: list[int]
    edges: list[int]
    total: float
    length_m: float
    travel_time_s: float | None
    weight: str
    skipped_untimed_edges: int = 0

    def geometry(self, graph: RoadGraph) -> np.ndarray:
        if not self.edges:
            return np.array([graph.xy(self.nodes[0])])
        parts = []
        for a, k in zip(self.nodes, self.edges):
            g = graph.edges[k].geometry
            parts.append(g if graph.edges[k].u == a else g[::-1])
        return np.vstack([parts[0]] + [p[1:] for p in parts[1:]])


@dataclass
class NoPath:
    src: int
    dst: int
    weight: str
    skipped_untimed_edges: int = 0
    flags: list[str] = field(default_factory=list)


def _edge_weight(edge, weight: str):
    if weight == "length":
        return edge.length_m
    return edge.travel_time_s


def shortest_route(graph: RoadGraph, src: int, dst: int, weight: str = "length") -> Route | NoPath:
    """Minimum-weight route from ``src`` to ``dst``.

    Ties are broken by the lexicographically smallest node-id sequence. With
    ``weight="time"`` edges lacking a travel time are impassable; the number
    of such edges met during the search is reported on the result.
    """
    if weight not in ("length", "time"):
        raise ValueError(f"weight must be 'length' or 'time', got {weight!r}")
    for n in (src, dst):
        if n not in graph.nodes:
            raise NodeNotFoundError(f"node {n} not in graph")

    # best parallel edge per (node, neighbor) pair
    adj: dict[int, dict[int, tuple[float, int]]] = {n: {} for n in graph.nodes}
    untimed = 0
    for k, e in enumerate(graph.edges):
        w = _edge_weight(e, weight)
        if w is None:
            untimed += 1
            continue
        for a, b in ((e.u, e.v), (e.v, e.u)):
            cur = adj[a].get(b)
            if cur is None or (w, k) < cur:
                adj[a][b] = (w, k)

    if src == dst:
        return Route([src], [], 0.0, 0.0, 0.0, weight, untimed)

    heap: list[tuple[float, tuple[int, ...]]] = [(0.0, (src,))]
    settled: set[int] = set()
    while heap:
        d, path = heapq.heappop(heap)
        node = path[-1]
        if node in settled:
            continue
        settled.add(node)
        if node == dst:
            edges = [adj[a][b][1] for a, b in zip(path, path[1:])]
            length = sum(graph.edges[k].length_m for k in edges)
            times = [graph.edges[k].travel_time_s for k in edges]
            tt = None if any(t is None for t in times) else float(sum(times))
            return Route(list(path), edges, float(d), float(length), tt, weight, untimed)
        for nb, (w, _) in adj[node].items():
            if nb not in settled:
                heapq.heappush(heap, (d + w, path + (nb,)))
    flags = ["untimed edges treated as impassable"] if untimed and weight == "time" else []
    return NoPath(src, dst, weight, untimed, flags)


@dataclass(frozen=True)
class GraphStats:
    n_nodes: int
    n_edges: int
    total_length_km: float
    n_components: int

    def as_dict(self) -> dict:
        return {
            "n_nodes": self.n_nodes,
            "n_edges": self.n_edges,
            "total_length_km": self.total_length_km,
            "n_components": self.n_components,
        }


def graph_stats(graph: RoadGraph) -> GraphStats:
    return GraphStats(
        len(graph.nodes),
        len(graph.edges),
        graph.total_length() / 1000.0,
        len(graph.components()),
    )
