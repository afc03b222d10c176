"""GeoJSON reading and writing for road graphs.

Coordinates are planar meters unless the collection declares a geographic
frame, either with a ``"frame": {"type": "lonlat"}`` member or a legacy
``crs`` naming EPSG:4326 / CRS84. Geographic input is projected with a local
equirectangular projection about the coordinate centroid, or with explicit
``meters_per_degree_lon`` / ``meters_per_degree_lat`` scales from the frame.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .graph import ENDPOINT_TOL_M, GeoTransform, RoadEdge, RoadGraph, RoadMetadata, RoadNode
from .geometry import polyline_length

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_008.8
# integer road_type codes used by some label exports
_ROAD_TYPE_CODES = {
    1: "motorway",
    2: "primary",
    3: "secondary",
    4: "tertiary",
    5: "residential",
    6: "unclassified",
    7: "cart_track",
}


class GeoJSONError(ValueError):
    pass


@dataclass
class LoadSummary:
    features: int = 0
    edges: int = 0
    skipped_geometries: int = 0
    unknown_road_types: int = 0
    frame: str = "metric"
    warnings: list[str] = field(default_factory=list)

    @property
    def warning_count(self) -> int:
        return self.skipped_geometries + self.unknown_road_types


def _is_geographic(doc: dict) -> bool:
    frame = doc.get("frame")
    if isinstance(frame, dict):
        return str(frame.get("type", "metric")).lower() in ("lonlat", "geographic", "wgs84")
    crs = doc.get("crs")
    if isinstance(crs, dict):
        name = str(crs.get("properties", {}).get("name", "")).upper()
        return "4326" in name or "CRS84" in name
    return False


def _projector(doc: dict, coords: list[np.ndarray]):
    frame = doc.get("frame") if isinstance(doc.get("frame"), dict) else {}
    allpts = np.vstack(coords) if coords else np.zeros((1, 2))
    lon0 = float(frame.get("lon0", allpts[:, 0].mean()))
    lat0 = float(frame.get("lat0", allpts[:, 1].mean()))
    deg = math.pi / 180.0
    kx = float(frame.get("meters_per_degree_lon", EARTH_RADIUS_M * deg * math.cos(lat0 * deg)))
    ky = float(frame.get("meters_per_degree_lat", EARTH_RADIUS_M * deg))

    def project(pts: np.ndarray) -> np.ndarray:
        return np.column_stack([(pts[:, 0] - lon0) * kx, (pts[:, 1] - lat0) * ky])

    return project


def _parse_bool(value) -> bool | None:
    if value is None:
        return None
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)):
        # SpaceNet style codes: 1 = yes, 2 = no, 3 = unknown
        return {1: True, 2: False}.get(int(value), True) if value not in (0,) else False
    s = str(value).strip().lower()
    if s in ("true", "yes", "paved", "1"):
        return True
    if s in ("false", "no", "unpaved", "0"):
        return False
    return None


def _parse_metadata(props: dict, summary: LoadSummary, idx: int) -> RoadMetadata | None:
    rt = props.get("road_type")
    if rt is None:
        return None
    if isinstance(rt, (int, float)) and not isinstance(rt, bool):
        rt = _ROAD_TYPE_CODES.get(int(rt), rt)
    try:
        lanes = int(props.get("lanes", props.get("lane_number", 1)) or 1)
        paved = _parse_bool(props.get("paved"))
        bridge = _parse_bool(props.get("bridge", props.get("bridge_type")))
        return RoadMetadata(rt, max(lanes, 1), True if paved is None else paved, bool(bridge))
    except ValueError:
        summary.unknown_road_types += 1
        summary.warnings.append(f"feature {idx}: unknown road_type {rt!r}, metadata omitted")
        return None


def read_geojson(path) -> tuple[RoadGraph, LoadSummary]:
    """Load a LineString FeatureCollection into a graph plus a load summary."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GeoJSONError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return graph_from_geojson(doc)


def load_geojson(path) -> RoadGraph:
    graph, summary = read_geojson(path)
    for w in summary.warnings:
        logger.warning(w)
    return graph


def graph_from_geojson(doc: dict) -> tuple[RoadGraph, LoadSummary]:
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise GeoJSONError("top-level object must be a FeatureCollection")
    summary = LoadSummary()
    raw: list[tuple[np.ndarray, dict]] = []
    for idx, feat in enumerate(doc.get("features", [])):
        summary.features += 1
        geom = (feat or {}).get("geometry") or {}
        if geom.get("type") != "LineString":
            summary.skipped_geometries += 1
            summary.warnings.append(f"feature {idx}: skipped {geom.get('type')!r} geometry")
            continue
        pts = np.asarray(geom.get("coordinates", []), dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] < 2:
            summary.skipped_geometries += 1
            summary.warnings.append(f"feature {idx}: degenerate LineString skipped")
            continue
        raw.append((pts[:, :2].copy(), feat.get("properties") or {}, idx))

    if _is_geographic(doc):
        summary.frame = "lonlat"
        project = _projector(doc, [r[0] for r in raw])
        raw = [(project(p), props, idx) for p, props, idx in raw]

    transform = None
    if isinstance(doc.get("transform"), dict):
        transform = GeoTransform.from_dict(doc["transform"])

    use_ids = bool(raw) and all(
        isinstance(props.get("u"), int) and isinstance(props.get("v"), int) for _, props, _ in raw
    )
    nodes: dict[int, RoadNode] = {}
    ends: list[tuple[int, int]] = []
    if use_ids:
        for pts, props, _ in raw:
            for nid, pt in ((props["u"], pts[0]), (props["v"], pts[-1])):
                prev = nodes.get(nid)
                if prev is None:
                    nodes[nid] = RoadNode(nid, float(pt[0]), float(pt[1]))
                elif math.hypot(prev.x - pt[0], prev.y - pt[1]) > ENDPOINT_TOL_M:
                    use_ids = False
                    break
            if not use_ids:
                break
            ends.append((props["u"], props["v"]))
    if not use_ids:
        nodes, ends = _merge_endpoints([r[0] for r in raw])

    edges = []
    for (pts, props, idx), (u, v) in zip(raw, ends):
        pts = pts.copy()
        pts[0] = (nodes[u].x, nodes[u].y)
        pts[-1] = (nodes[v].x, nodes[v].y)
        meta = _parse_metadata(props, summary, idx)
        speed = props.get("inferred_speed_mph")
        tt = props.get("travel_time_s")
        length = polyline_length(pts)
        if speed is not None and tt is None:
            tt = length / (float(speed) * 0.44704)
        edges.append(
            RoadEdge(
                u,
                v,
                pts,
                length,
                speed_mph=None if speed is None else float(speed),
                travel_time_s=None if tt is None else float(tt),
                metadata=meta,
            )
        )
    summary.edges = len(edges)
    graph = RoadGraph(nodes, tuple(edges), transform)
    return graph, summary


def _merge_endpoints(lines: list[np.ndarray]):
    if not lines:
        return {}, []
    pts = np.array([p for line in lines for p in (line[0], line[-1])], dtype=np.float64)
    parent = list(range(len(pts)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in sorted(cKDTree(pts).query_pairs(ENDPOINT_TOL_M)):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    ids: dict[int, int] = {}
    nodes: dict[int, RoadNode] = {}
    for i in range(len(pts)):
        r = find(i)
        if r not in ids:
            ids[r] = len(ids)
            nodes[ids[r]] = RoadNode(ids[r], float(pts[r, 0]), float(pts[r, 1]))
    ends = [(ids[find(2 * k)], ids[find(2 * k + 1)]) for k in range(len(lines))]
    return nodes, ends


def graph_to_geojson(graph: RoadGraph) -> dict:
    features = []
    for e in graph.edges:
        props: dict = {"u": int(e.u), "v": int(e.v), "length_m": e.length_m}
        if e.metadata is not None:
            props.update(
                road_type=e.metadata.road_type.value,
                lanes=e.metadata.lanes,
                paved=e.metadata.paved,
                bridge=e.metadata.bridge,
            )
        if e.speed_mph is not None:
            props["inferred_speed_mph"] = e.speed_mph
        if e.travel_time_s is not None:
            props["travel_time_s"] = e.travel_time_s
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "LineString", "coordinates": e.geometry.tolist()},
                "properties": props,
            }
        )
    doc = {"type": "FeatureCollection", "frame": {"type": "metric"}, "features": features}
    if graph.transform is not None:
        doc["frame"]["crs_tag"] = graph.transform.crs_tag
        doc["transform"] = graph.transform.to_dict()
    return doc


def save_geojson(graph: RoadGraph, path) -> None:
    doc = graph_to_geojson(graph)
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
