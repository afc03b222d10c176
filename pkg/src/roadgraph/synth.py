"""Seeded synthetic road networks used as ground truth for round-trip tests.

Streets follow a jittered lattice: a random spanning tree of the lattice plus
a share of the remaining links, each with a bent midpoint, and a few dead-end
stubs. Chains through degree-2 lattice nodes are merged so every output node
is a junction or a dead end.
"""

from __future__ import annotations

import numpy as np

from .graph import GeoTransform, RoadEdge, RoadGraph, RoadMetadata, RoadNode, RoadType
from .speed import assign_speed

# share of edges per road type; urban classes dominate
ROAD_TYPE_WEIGHTS = {
    RoadType.MOTORWAY: 0.08,
    RoadType.PRIMARY: 0.14,
    RoadType.SECONDARY: 0.20,
    RoadType.TERTIARY: 0.08,
    RoadType.RESIDENTIAL: 0.44,
    RoadType.UNCLASSIFIED: 0.03,
    RoadType.CART_TRACK: 0.03,
}
# probabilities of 1, 2 and 3+ lanes per road type
LANE_WEIGHTS = {
    RoadType.MOTORWAY: (0.2, 0.4, 0.4),
    RoadType.PRIMARY: (0.3, 0.4, 0.3),
    RoadType.SECONDARY: (0.3, 0.4, 0.3),
    RoadType.TERTIARY: (0.05, 0.1, 0.85),
    RoadType.RESIDENTIAL: (0.5, 0.47, 0.03),
    RoadType.UNCLASSIFIED: (0.6, 0.3, 0.1),
    RoadType.CART_TRACK: (0.8, 0.15, 0.05),
}
PAVED_PROB = {RoadType.CART_TRACK: 0.5}
DEFAULT_PAVED_PROB = 0.99
BRIDGE_PROB = 0.02


def random_metadata(rng: np.random.Generator) -> RoadMetadata:
    types = list(ROAD_TYPE_WEIGHTS)
    p = np.array([ROAD_TYPE_WEIGHTS[t] for t in types])
    rt = types[rng.choice(len(types), p=p / p.sum())]
    bucket = int(rng.choice(3, p=LANE_WEIGHTS[rt]))
    lanes = bucket + 1 if bucket < 2 else int(rng.integers(3, 5))
    paved = bool(rng.random() < PAVED_PROB.get(rt, DEFAULT_PAVED_PROB))
    bridge = bool(rng.random() < BRIDGE_PROB)
    return RoadMetadata(rt, lanes, paved, bridge)


def scene_transform(extent_m: float, pixel_size: float = 0.3) -> GeoTransform:
    """Raster frame covering ``[0, extent_m]^2``."""
    return GeoTransform.covering(0.0, 0.0, extent_m, extent_m, pixel_size)


def _minimal_city(extent_m: float, rng) -> RoadGraph:
    y = extent_m / 2
    a, b = 0.1 * extent_m, 0.9 * extent_m
    meta = random_metadata(rng)
    e = RoadEdge.from_geometry(0, 1, [[a, y], [b, y]], metadata=meta).with_speed(assign_speed(meta))
    return RoadGraph({0: RoadNode(0, a, y), 1: RoadNode(1, b, y)}, (e,))


def gen_synthetic_city(
    extent_m: float = 2000.0,
    density: float = 5.0,
    seed: int = 0,
    extra_edge_prob: float = 0.6,
    stub_prob: float = 0.25,
    jitter: float = 0.12,
    bend: float = 0.06,
) -> RoadGraph:
    """Random connected planar street network with metadata and speeds.

    Parameters
    ----------
    extent_m : side of the square scene in meters.
    density : lattice lines per kilometer; block spacing is ``1000 / density`` m.
    seed : RNG seed; equal seeds give identical graphs.
    extra_edge_prob : chance of keeping each lattice link outside the spanning tree.
    stub_prob : chance of a dead-end stub into each unused lattice link.
    jitter, bend : node jitter and midpoint bend as fractions of the spacing.
    """
    if not extent_m > 0:
        raise ValueError(f"extent_m must be > 0, got {extent_m}")
    if density < 0:
        raise ValueError(f"density must be >= 0, got {density}")
    rng = np.random.default_rng(seed)
    if density == 0:
        return _minimal_city(extent_m, rng)
    spacing = 1000.0 / density
    margin = max(0.05 * extent_m, 0.25 * spacing)
    span = extent_m - 2 * margin
    n = int(np.floor(span / spacing)) + 1
    if n < 2:
        return _minimal_city(extent_m, rng)
    step = span / (n - 1)
    gy, gx = np.mgrid[0:n, 0:n]
    pos = np.column_stack([margin + gx.ravel() * step, margin + gy.ravel() * step])
    pos = pos + rng.uniform(-jitter, jitter, size=pos.shape) * step

    links = []
    for r in range(n):
        for c in range(n):
            k = r * n + c
            if c + 1 < n:
                links.append((k, k + 1))
            if r + 1 < n:
                links.append((k, k + n))
    order = rng.permutation(len(links))
    parent = list(range(n * n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    used = np.zeros(len(links), dtype=bool)
    for i in order:
        a, b = links[i]
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            used[i] = True
    extra = rng.random(len(links)) < extra_edge_prob
    used |= extra

    # polyline per lattice link, with a bent midpoint
    lines: list[tuple[int, int, np.ndarray]] = []
    for i, (a, b) in enumerate(links):
        if not used[i]:
            continue
        pa, pb = pos[a], pos[b]
        d = pb - pa
        normal = np.array([-d[1], d[0]]) / np.hypot(*d)
        mid = 0.5 * (pa + pb) + normal * rng.uniform(-bend, bend) * step
        lines.append((a, b, np.vstack([pa, mid, pb])))

    node_xy = {k: pos[k] for k in range(n * n)}
    next_id = n * n
    for i, (a, b) in enumerate(links):
        if used[i] or rng.random() >= stub_prob:
            continue
        if rng.random() < 0.5:
            a, b = b, a
        frac = rng.uniform(0.2, 0.4)
        tip = pos[a] + frac * (pos[b] - pos[a])
        node_xy[next_id] = tip
        lines.append((a, next_id, np.vstack([pos[a], tip])))
        next_id += 1

    lines = _merge_chains(lines)
    nodes = {}
    edges = []
    present = sorted({k for a, b, _ in lines for k in (a, b)})
    relabel = {k: i for i, k in enumerate(present)}
    for k in present:
        x, y = node_xy[k]
        nodes[relabel[k]] = RoadNode(relabel[k], float(x), float(y))
    for a, b, geom in lines:
        meta = random_metadata(rng)
        e = RoadEdge.from_geometry(relabel[a], relabel[b], geom, metadata=meta)
        edges.append(e.with_speed(assign_speed(meta)))
    return RoadGraph(nodes, tuple(edges))


def _merge_chains(lines):
    """Join polylines through nodes of degree 2; a pure cycle keeps its lowest node."""
    adj: dict[int, list[int]] = {}
    for i, (a, b, _) in enumerate(lines):
        adj.setdefault(a, []).append(i)
        adj.setdefault(b, []).append(i)
    keep = {k for k, inc in adj.items() if len(inc) != 2}
    done = np.zeros(len(lines), dtype=bool)
    out = []

    def walk(start, first):
        geom = []
        node = start
        i = first
        while True:
            a, b, g = lines[i]
            done[i] = True
            g = g if a == node else g[::-1]
            node = b if a == node else a
            geom.append(g if not geom else g[1:])
            if node in keep:
                return node, np.vstack(geom)
            nxt = [j for j in adj[node] if j != i]
            i = nxt[0]

    for start in sorted(keep):
        for i in adj[start]:
            if not done[i]:
                end, geom = walk(start, i)
                out.append((start, end, geom))
    for i in range(len(lines)):
        if not done[i]:
            start = min(lines[i][0], lines[i][1])
            keep.add(start)
            end, geom = walk(start, i)
            out.append((start, end, geom))
    return out
