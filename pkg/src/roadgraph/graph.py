"""Road graph data model.

A :class:`RoadGraph` is an undirected planar multigraph whose nodes carry
metric coordinates and whose edges carry polyline geometry, length and
optional speed / travel time. Graphs are treated as immutable: every
pipeline stage returns a new graph.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import numpy as np

from .geometry import as_polyline, polyline_length

#: Exact miles-per-hour to meters-per-second factor.
MPH_TO_MPS = 0.44704

ENDPOINT_TOL_M = 1e-6


class GraphError(ValueError):
    """Raised when a graph violates its structural invariants."""


class RoadType(str, enum.Enum):
    MOTORWAY = "motorway"
    PRIMARY = "primary"
    SECONDARY = "secondary"
    TERTIARY = "tertiary"
    RESIDENTIAL = "residential"
    UNCLASSIFIED = "unclassified"
    CART_TRACK = "cart_track"

    @classmethod
    def parse(cls, value) -> "RoadType":
        if isinstance(value, RoadType):
            return value
        key = str(value).strip().lower().replace(" ", "_").replace("-", "_")
        return cls(key)


@dataclass(frozen=True)
class GeoTransform:
    """North-up raster georeference.

    ``origin_x``/``origin_y`` locate the top-left corner of pixel (0, 0);
    pixel centers sit at half-pixel offsets.
    """

    origin_x: float
    origin_y: float
    pixel_size: float
    width: int
    height: int
    crs_tag: str = "local-metric"

    def __post_init__(self):
        if not (self.pixel_size > 0 and math.isfinite(self.pixel_size)):
            raise ValueError(f"pixel_size must be > 0, got {self.pixel_size}")
        if int(self.width) < 1 or int(self.height) < 1:
            raise ValueError(f"raster must be at least 1x1, got {self.width}x{self.height}")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @classmethod
    def covering(cls, xmin, ymin, xmax, ymax, pixel_size, crs_tag="local-metric"):
        width = max(1, int(math.ceil((xmax - xmin) / pixel_size)))
        height = max(1, int(math.ceil((ymax - ymin) / pixel_size)))
        return cls(xmin, ymax, pixel_size, width, height, crs_tag)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """``(xmin, ymin, xmax, ymax)`` of the raster footprint."""
        return (
            self.origin_x,
            self.origin_y - self.height * self.pixel_size,
            self.origin_x + self.width * self.pixel_size,
            self.origin_y,
        )

    def pixel_to_world(self, col, row):
        """World coordinates of pixel centers."""
        col = np.asarray(col, dtype=np.float64)
        row = np.asarray(row, dtype=np.float64)
        x = self.origin_x + (col + 0.5) * self.pixel_size
        y = self.origin_y - (row + 0.5) * self.pixel_size
        return x, y

    def world_to_pixel(self, x, y):
        """Fractional ``(col, row)``; integers land on pixel centers."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        col = (x - self.origin_x) / self.pixel_size - 0.5
        row = (self.origin_y - y) / self.pixel_size - 0.5
        return col, row

    def world_to_index(self, x, y):
        """Integer ``(col, row)`` of the pixel containing each point."""
        col, row = self.world_to_pixel(x, y)
        return np.floor(col + 0.5).astype(np.int64), np.floor(row + 0.5).astype(np.int64)

    def window(self, col_off: int, row_off: int, width: int, height: int) -> "GeoTransform":
        return GeoTransform(
            self.origin_x + col_off * self.pixel_size,
            self.origin_y - row_off * self.pixel_size,
            self.pixel_size,
            width,
            height,
            self.crs_tag,
        )

    def to_dict(self) -> dict:
        return {
            "origin_x": self.origin_x,
            "origin_y": self.origin_y,
            "pixel_size": self.pixel_size,
            "width": self.width,
            "height": self.height,
            "crs_tag": self.crs_tag,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "GeoTransform":
        return cls(
            float(d["origin_x"]),
            float(d["origin_y"]),
            float(d["pixel_size"]),
            int(d["width"]),
            int(d["height"]),
            str(d.get("crs_tag", "local-metric")),
        )


@dataclass(frozen=True)
class RoadMetadata:
    road_type: RoadType
    lanes: int = 1
    paved: bool = True
    bridge: bool = False

    def __post_init__(self):
        object.__setattr__(self, "road_type", RoadType.parse(self.road_type))
        if int(self.lanes) < 1:
            raise ValueError(f"lanes must be >= 1, got {self.lanes}")
        object.__setattr__(self, "lanes", int(self.lanes))


@dataclass(frozen=True)
class RoadNode:
    id: int
    x: float
    y: float

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True, eq=False)
class RoadEdge:
    """Undirected edge between nodes ``u`` and ``v``.

    ``geometry`` runs from ``u`` to ``v``. Build edges with
    :meth:`from_geometry` unless the length is already known.
    """

    u: int
    v: int
    geometry: np.ndarray
    length_m: float
    speed_mph: float | None = None
    travel_time_s: float | None = None
    metadata: RoadMetadata | None = None

    def __post_init__(self):
        geom = as_polyline(self.geometry)
        if geom is self.geometry:
            geom = geom.copy()
        geom.setflags(write=False)
        object.__setattr__(self, "geometry", geom)
        object.__setattr__(self, "length_m", float(self.length_m))
        if self.speed_mph is not None:
            s = float(self.speed_mph)
            if not 1.0 <= s <= 65.0:
                raise GraphError(f"edge ({self.u},{self.v}) speed {s} mph outside [1, 65]")
            object.__setattr__(self, "speed_mph", s)
        if self.travel_time_s is not None:
            object.__setattr__(self, "travel_time_s", float(self.travel_time_s))
            if self.speed_mph is not None and self.length_m > 0:
                expect = self.length_m / (self.speed_mph * MPH_TO_MPS)
                if not math.isclose(self.travel_time_s, expect, rel_tol=1e-6, abs_tol=1e-9):
                    raise GraphError(
                        f"edge ({self.u},{self.v}) travel time {self.travel_time_s} "
                        f"inconsistent with length/speed ({expect})"
                    )

    @classmethod
    def from_geometry(cls, u, v, geometry, **kw) -> "RoadEdge":
        geom = as_polyline(geometry)
        return cls(u, v, geom, polyline_length(geom), **kw)

    def with_speed(self, speed_mph: float | None) -> "RoadEdge":
        if speed_mph is None:
            return replace(self, speed_mph=None, travel_time_s=None)
        t = self.length_m / (speed_mph * MPH_TO_MPS)
        return replace(self, speed_mph=speed_mph, travel_time_s=t)

    def reversed(self) -> "RoadEdge":
        return replace(self, u=self.v, v=self.u, geometry=self.geometry[::-1].copy())

    def other(self, node: int) -> int:
        return self.v if node == self.u else self.u

    @property
    def is_loop(self) -> bool:
        return self.u == self.v


@dataclass(frozen=True, eq=False)
class RoadGraph:
    nodes: Mapping[int, RoadNode] = field(default_factory=dict)
    edges: tuple[RoadEdge, ...] = ()
    transform: GeoTransform | None = None

    def __post_init__(self):
        object.__setattr__(self, "nodes", dict(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))

    @classmethod
    def build(cls, nodes: Iterable[RoadNode], edges: Iterable[RoadEdge], transform=None, check=True):
        g = cls({n.id: n for n in nodes}, tuple(edges), transform)
        if check:
            g.validate()
        return g

    @classmethod
    def empty(cls, transform=None) -> "RoadGraph":
        return cls({}, (), transform)

    def validate(self) -> None:
        for n in self.nodes.values():
            if not (math.isfinite(n.x) and math.isfinite(n.y)):
                raise GraphError(f"node {n.id} has non-finite coordinates")
        for i, e in enumerate(self.edges):
            for end, pt in ((e.u, e.geometry[0]), (e.v, e.geometry[-1])):
                node = self.nodes.get(end)
                if node is None:
                    raise GraphError(f"edge {i} references missing node {end}")
                if math.hypot(node.x - pt[0], node.y - pt[1]) > ENDPOINT_TOL_M:
                    raise GraphError(f"edge {i} geometry does not end at node {end}")
            arc = polyline_length(e.geometry)
            if not math.isclose(arc, e.length_m, rel_tol=1e-6, abs_tol=1e-9):
                raise GraphError(f"edge {i} length {e.length_m} != arc length {arc}")

    def __len__(self) -> int:
        return len(self.nodes)

    def __repr__(self) -> str:
        return f"RoadGraph(nodes={len(self.nodes)}, edges={len(self.edges)})"

    @property
    def is_empty(self) -> bool:
        return not self.nodes

    def xy(self, node: int) -> np.ndarray:
        n = self.nodes[node]
        return np.array([n.x, n.y])

    def node_array(self) -> tuple[np.ndarray, np.ndarray]:
        """Sorted node ids and matching ``(n, 2)`` coordinates."""
        ids = np.array(sorted(self.nodes), dtype=np.int64)
        xy = np.array([[self.nodes[i].x, self.nodes[i].y] for i in ids], dtype=np.float64)
        return ids, xy.reshape(-1, 2)

    def incidence(self) -> dict[int, list[int]]:
        """Edge indices incident to each node (self-loops listed twice)."""
        inc: dict[int, list[int]] = {n: [] for n in self.nodes}
        for i, e in enumerate(self.edges):
            inc[e.u].append(i)
            inc[e.v].append(i)
        return inc

    def degree(self) -> dict[int, int]:
        return {n: len(v) for n, v in self.incidence().items()}

    def total_length(self) -> float:
        return float(sum(e.length_m for e in self.edges))

    def components(self) -> list[tuple[list[int], list[int]]]:
        """Connected components as ``(node ids, edge indices)``, ordered by smallest node id."""
        parent = {n: n for n in self.nodes}

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for e in self.edges:
            ra, rb = find(e.u), find(e.v)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        groups: dict[int, tuple[list[int], list[int]]] = {}
        for n in sorted(self.nodes):
            groups.setdefault(find(n), ([], []))[0].append(n)
        for i, e in enumerate(self.edges):
            groups[find(e.u)][1].append(i)
        return [groups[k] for k in sorted(groups)]

    def has_times(self) -> bool:
        return all(e.travel_time_s is not None for e in self.edges)

    def subgraph(self, node_ids) -> "RoadGraph":
        keep = set(node_ids)
        edges = [e for e in self.edges if e.u in keep and e.v in keep]
        return RoadGraph({n: self.nodes[n] for n in keep}, tuple(edges), self.transform)

    def relabeled(self) -> "RoadGraph":
        """Copy with node ids renumbered 0..n-1 in sorted order."""
        mapping = {old: new for new, old in enumerate(sorted(self.nodes))}
        nodes = {mapping[n.id]: RoadNode(mapping[n.id], n.x, n.y) for n in self.nodes.values()}
        edges = tuple(replace(e, u=mapping[e.u], v=mapping[e.v]) for e in self.edges)
        return RoadGraph(nodes, edges, self.transform)

    def bbox(self) -> tuple[float, float, float, float] | None:
        if not self.nodes:
            return None
        pts = np.vstack([e.geometry for e in self.edges] + [self.node_array()[1]])
        return (pts[:, 0].min(), pts[:, 1].min(), pts[:, 0].max(), pts[:, 1].max())


class EditableGraph:
    """Mutable scratch graph used inside pipeline stages.

    Edges are keyed by integer handles so parallel edges and self-loops stay
    distinct. Call :meth:`freeze` to obtain an immutable :class:`RoadGraph`.
    """

    def __init__(self, graph: RoadGraph | None = None):
        self.nodes: dict[int, np.ndarray] = {}
        self.edges: dict[int, RoadEdge] = {}
        self.adj: dict[int, set[int]] = {}
        self.transform = None
        self._next_edge = 0
        self._next_node = 0
        if graph is not None:
            self.transform = graph.transform
            for n in graph.nodes.values():
                self.add_node(n.x, n.y, node_id=n.id)
            for e in graph.edges:
                self.add_edge(e)

    def add_node(self, x: float, y: float, node_id: int | None = None) -> int:
        if node_id is None:
            node_id = self._next_node
        self.nodes[node_id] = np.array([x, y], dtype=np.float64)
        self.adj.setdefault(node_id, set())
        self._next_node = max(self._next_node, node_id + 1)
        return node_id

    def add_edge(self, edge: RoadEdge) -> int:
        k = self._next_edge
        self._next_edge += 1
        self.edges[k] = edge
        self.adj[edge.u].add(k)
        self.adj[edge.v].add(k)
        return k

    def remove_edge(self, k: int) -> RoadEdge:
        e = self.edges.pop(k)
        self.adj[e.u].discard(k)
        self.adj[e.v].discard(k)
        return e

    def remove_node(self, n: int) -> None:
        for k in list(self.adj[n]):
            self.remove_edge(k)
        del self.adj[n]
        del self.nodes[n]

    def degree(self, n: int) -> int:
        return sum(2 if self.edges[k].is_loop else 1 for k in self.adj[n])

    def neighbors(self, n: int) -> set[int]:
        return {self.edges[k].other(n) for k in self.adj[n]}

    def freeze(self) -> RoadGraph:
        nodes = {n: RoadNode(n, float(p[0]), float(p[1])) for n, p in sorted(self.nodes.items())}
        edges = tuple(self.edges[k] for k in sorted(self.edges))
        return RoadGraph(nodes, edges, self.transform)
