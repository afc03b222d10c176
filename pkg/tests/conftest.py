import numpy as np
import pytest

from roadgraph.graph import GeoTransform, RoadEdge, RoadGraph, RoadMetadata, RoadNode

ACCEPTANCE_LINES: dict[int, str] = {}


def make_graph(points, edges, speeds=None, transform=None, metadata=None):
    """Graph from node coordinates and ``(u, v)`` or ``(u, v, [interior pts])`` tuples."""
    nodes = {i: RoadNode(i, float(x), float(y)) for i, (x, y) in enumerate(points)}
    out = []
    for k, spec in enumerate(edges):
        u, v = spec[0], spec[1]
        mid = spec[2] if len(spec) > 2 else []
        geom = [points[u], *mid, points[v]]
        e = RoadEdge.from_geometry(u, v, geom, metadata=None if metadata is None else metadata[k])
        if speeds is not None:
            e = e.with_speed(speeds[k])
        out.append(e)
    return RoadGraph(nodes, tuple(out), transform)


@pytest.fixture
def transform_100m():
    return GeoTransform.covering(0.0, 0.0, 100.0, 100.0, 0.3)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
