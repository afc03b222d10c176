import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_graph
from oracles import apls_oracle
from roadgraph.graph import RoadEdge, RoadGraph
from roadgraph.metrics import (
    AplsConfig,
    AplsDomainError,
    TopoConfig,
    apls,
    apls_directional,
    inject_midpoints,
    snap_control_nodes,
    topo,
)
from roadgraph.metrics.apls import apls_directional_detail, combine
from roadgraph.synth import gen_synthetic_city

LARGE = AplsConfig(large_mode=True)


def abc():
    G = make_graph([(0, 0), (100, 0), (200, 0)], [(0, 1), (1, 2)])
    Gp = make_graph([(0, 0), (100, 0)], [(0, 1)])
    return G, Gp


def with_uniform_speed(g, s):
    return RoadGraph(g.nodes, tuple(e.with_speed(s) for e in g.edges), g.transform)


# --- midpoints and snapping --------------------------------------------------------


def test_inject_halves_100m():
    g = inject_midpoints(make_graph([(0, 0), (100, 0)], [(0, 1)]), 50.0)
    assert len(g.nodes) == 3 and [e.length_m for e in g.edges] == pytest.approx([50, 50])


def test_inject_leaves_short_edge():
    g = make_graph([(0, 0), (49, 0)], [(0, 1)])
    assert inject_midpoints(g, 50.0).edges == g.edges


def test_inject_conserves_length_and_time():
    g = with_uniform_speed(gen_synthetic_city(600, 8, seed=1), 30.0)
    out = inject_midpoints(g, 50.0)
    assert out.total_length() == pytest.approx(g.total_length(), abs=1e-9)
    assert sum(e.travel_time_s for e in out.edges) == pytest.approx(sum(e.travel_time_s for e in g.edges), abs=1e-9)
    assert max(e.length_m for e in out.edges) <= 50.0 + 1e-9


def test_inject_rejects_bad_spacing():
    with pytest.raises(ValueError):
        inject_midpoints(RoadGraph.empty(), 0.0)


def test_snap_buffer_boundary():
    target = make_graph([(0, 0), (100, 0)], [(0, 1)])
    mapping, aug = snap_control_nodes({1: np.array([40.0, 3.9]), 2: np.array([60.0, 4.1])}, target, 4.0)
    assert mapping[2] is None
    assert mapping[1] is not None
    assert tuple(aug.xy(mapping[1])) == pytest.approx((40.0, 0.0))
    assert len(aug.edges) == 2


def test_snap_identical_maps_to_self():
    g = gen_synthetic_city(500, 8, seed=3)
    mapping, aug = snap_control_nodes({n: g.xy(n) for n in g.nodes}, g, 4.0)
    assert len(aug.edges) == len(g.edges)
    for n, m in mapping.items():
        assert m == n


def test_snap_shared_edge_points_are_distinct_nodes():
    target = make_graph([(0, 0), (100, 0)], [(0, 1)])
    mapping, aug = snap_control_nodes({0: np.array([30.0, 1.0]), 1: np.array([70.0, -1.0])}, target, 4.0)
    assert mapping[0] != mapping[1]
    assert sorted(e.length_m for e in aug.edges) == pytest.approx([30, 30, 40])


# --- APLS --------------------------------------------------------------------------------


def test_apls_identity_and_empty():
    g = gen_synthetic_city(600, 8, seed=2)
    assert apls(g, g) == 1.0
    assert apls(g, RoadGraph.empty()) == 0.0
    assert apls(RoadGraph.empty(), g) == 0.0
    assert apls(RoadGraph.empty(), RoadGraph.empty()) is None


def test_apls_abc():
    G, Gp = abc()
    assert apls_directional(G, Gp, LARGE) == pytest.approx(1 / 3)
    assert apls_directional(Gp, G, LARGE) == pytest.approx(1.0)
    assert apls(G, Gp, LARGE) == pytest.approx(2 / 3)
    assert apls(G, Gp, LARGE) == pytest.approx(0.5 * (apls_oracle(G, Gp) + apls_oracle(Gp, G)), abs=1e-12)


def test_apls_detail_counts():
    G, Gp = abc()
    d = apls_directional_detail(G, Gp, LARGE)
    assert (d.n_control, d.n_matched, d.n_pairs, d.n_pairs_missing) == (3, 2, 3, 2)


def test_apls_detour_term():
    G = make_graph([(0, 0), (100, 0)], [(0, 1)])
    Gp = make_graph([(0, 0), (100, 0)], [(0, 1, [(50, 25)])])
    expect = 1 - (2 * math.hypot(50, 25) - 100) / 100
    assert apls_directional(G, Gp, LARGE) == pytest.approx(expect)


def test_apls_long_detour_clamped():
    G = make_graph([(0, 0), (10, 0)], [(0, 1)])
    Gp = make_graph([(0, 0), (10, 0)], [(0, 1, [(5, 40)])])
    assert apls_directional(G, Gp, LARGE) == 0.0


def test_apls_undefined_with_single_control():
    G = make_graph([(0, 0), (10, 0)], [(0, 1)])
    cfg = AplsConfig(large_mode=True, max_control_nodes=2)
    assert apls_directional(RoadGraph({0: G.nodes[0]}, ()), G, cfg) is None


def test_combine():
    assert combine(None, None) is None
    assert combine(0.5, None) == 0.25
    assert combine(0.5, 1.0, "harmonic") == pytest.approx(2 / 3)
    assert combine(0.0, 0.0, "harmonic") == 0.0


def test_config_validation():
    with pytest.raises(ValueError):
        AplsConfig(buffer_m=0)
    with pytest.raises(ValueError):
        AplsConfig(max_control_nodes=1)
    with pytest.raises(ValueError):
        AplsConfig(weight="speed")
    with pytest.raises(ValueError):
        AplsConfig(symmetrize="median")


def test_time_weight_requires_times():
    G, Gp = abc()
    with pytest.raises(AplsDomainError):
        apls(G, Gp, AplsConfig(weight="time"))
    with pytest.raises(AplsDomainError):
        apls(with_uniform_speed(G, 30), Gp, AplsConfig(weight="time"))


def test_time_equals_length_under_uniform_speed():
    G = with_uniform_speed(gen_synthetic_city(800, 8, seed=5), 35.0)
    Gp = with_uniform_speed(gen_synthetic_city(800, 8, seed=6), 35.0)
    for large in (True, False):
        a = apls(G, Gp, AplsConfig(large_mode=large, weight="length"))
        b = apls(G, Gp, AplsConfig(large_mode=large, weight="time"))
        assert a == pytest.approx(b, abs=1e-12)


def test_time_weight_sees_speed_difference():
    G = make_graph([(0, 0), (100, 0)], [(0, 1)], speeds=[60.0])
    Gp = make_graph([(0, 0), (100, 0)], [(0, 1)], speeds=[30.0])
    assert apls(G, Gp, AplsConfig(large_mode=True, weight="time")) == pytest.approx(0.5 * (0 + 0.5))
    assert apls(G, Gp, AplsConfig(large_mode=True)) == 1.0


def test_control_subsampling_deterministic():
    G = gen_synthetic_city(800, 8, seed=7)
    Gp = gen_synthetic_city(800, 8, seed=8)
    cfg = AplsConfig(max_control_nodes=20, seed=3)
    assert apls(G, Gp, cfg) == apls(G, Gp, cfg)
    assert apls_directional_detail(G, Gp, cfg).n_control == 20


@st.composite
def graph_pairs(draw):
    n = draw(st.integers(2, 7))
    pts = [(draw(st.floats(0, 150)), draw(st.floats(0, 150))) for _ in range(n)]
    pairs = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), min_size=1, max_size=12))
    edges = sorted({(min(a, b), max(a, b)) for a, b in pairs if a != b and pts[a] != pts[b]})
    if not edges:
        pts[1] = (pts[0][0] + 30.0, pts[0][1])
        edges = [(0, 1)]
    G = make_graph(pts, edges)
    jit = [(x + draw(st.floats(-2.5, 2.5)), y + draw(st.floats(-2.5, 2.5))) for x, y in pts]
    keep = [e for e in edges if draw(st.booleans()) or len(edges) == 1]
    Gp = make_graph(jit, keep)
    return G, Gp


@settings(max_examples=60, deadline=None)
@given(graph_pairs())
def test_apls_matches_oracle(pair):
    G, Gp = pair
    for a, b in ((G, Gp), (Gp, G)):
        ours = apls_directional(a, b, LARGE)
        ref = apls_oracle(a, b)
        if ref is None:
            assert ours is None
        else:
            assert ours == pytest.approx(ref, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(graph_pairs())
def test_apls_symmetric_and_bounded(pair):
    G, Gp = pair
    for cfg in (LARGE, AplsConfig()):
        s = apls(G, Gp, cfg)
        assert s == apls(Gp, G, cfg)
        assert s is None or 0.0 <= s <= 1.0


@settings(max_examples=60, deadline=None)
@given(graph_pairs(), st.data())
def test_apls_edge_deletion_never_helps(pair, data):
    G, Gp = pair
    mapping, aug = snap_control_nodes({n: G.xy(n) for n in G.nodes}, Gp, 4.0)
    if not aug.edges:
        return
    k = data.draw(st.integers(0, len(aug.edges) - 1))
    reduced = RoadGraph(aug.nodes, aug.edges[:k] + aug.edges[k + 1 :])
    # only meaningful when the deletion leaves every snapped location in place
    snapped = {m for m in mapping.values() if m is not None}
    touched = {n for e in reduced.edges for n in (e.u, e.v)}
    if not snapped <= touched:
        return
    m2, _ = snap_control_nodes({n: G.xy(n) for n in G.nodes}, reduced, 4.0)
    if m2 != mapping:
        return
    before = apls_directional(G, aug, LARGE)
    after = apls_directional(G, reduced, LARGE)
    assert before == pytest.approx(apls_directional(G, Gp, LARGE), abs=1e-12)
    assert after <= before + 1e-12


# --- TOPO ------------------------------------------------------------------------------------


def test_topo_identity():
    g = gen_synthetic_city(600, 8, seed=9)
    r = topo(g, g, TopoConfig(n_seeds=20))
    assert r.precision == 1.0 and r.recall == 1.0 and r.f1 == 1.0


def test_topo_empty_proposal():
    g = gen_synthetic_city(600, 8, seed=9)
    r = topo(g, RoadGraph.empty(), TopoConfig(n_seeds=10))
    assert r.recall == 0.0 and r.fn > 0


def test_topo_truncated_road():
    G = make_graph([(0, 0), (300, 0)], [(0, 1)])
    Gp = make_graph([(0, 0), (150, 0)], [(0, 1)])
    r = topo(G, Gp, TopoConfig(hole_m=4.0, radius_m=300.0), seeds=[(0.0, 0.0)])
    n_truth = r.tp + r.fn
    assert r.recall == pytest.approx(0.5, abs=1.5 / n_truth)
    assert r.precision == 1.0


def test_topo_offset_within_hole():
    G = make_graph([(0, 0), (300, 0)], [(0, 1)])
    Gp = make_graph([(0, 2.0), (300, 2.0)], [(0, 1)])
    r = topo(G, Gp, TopoConfig(n_seeds=5))
    assert r.recall > 0.95 and r.precision > 0.95


def test_topo_bounds_and_determinism():
    G = gen_synthetic_city(600, 8, seed=10)
    Gp = gen_synthetic_city(600, 8, seed=11)
    a = topo(G, Gp, TopoConfig(n_seeds=15, seed=2))
    b = topo(G, Gp, TopoConfig(n_seeds=15, seed=2))
    assert a == b
    for v in (a.precision, a.recall, a.f1):
        assert 0.0 <= v <= 1.0


def test_topo_config_validation():
    with pytest.raises(ValueError):
        TopoConfig(n_seeds=0)
    with pytest.raises(ValueError):
        TopoConfig(hole_m=0)
    with pytest.raises(ValueError):
        TopoConfig(hole_m=10, radius_m=5)
