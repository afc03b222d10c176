import math

import numpy as np
import pytest

from conftest import make_graph
from roadgraph.geometry import interpolate
from roadgraph.graph import GeoTransform, RoadGraph
from roadgraph.masks import (
    MaskError,
    MaskPreconditionError,
    OracleNoise,
    RasterMask,
    bce_loss,
    combined_loss_continuous,
    combined_loss_multiclass,
    dice_loss,
    dropout_intervals,
    focal_loss,
    load_mask,
    oracle_predict,
    render_binary_mask,
    render_continuous_mask,
    render_multiclass_mask,
    save_mask,
)

T = GeoTransform.covering(0.0, 0.0, 120.0, 60.0, 0.3)


def horizontal(y=30.1, speed=35.0):
    return make_graph([(10.0, y), (110.0, y)], [(0, 1)], speeds=[speed])


def crossing(s1=25.0, s2=45.0):
    return make_graph([(10, 30), (110, 30), (60, 5), (60, 55)], [(0, 1), (2, 3)], speeds=[s1, s2])


# --- rendering ----------------------------------------------------------------


def test_binary_empty_graph():
    m = render_binary_mask(RoadGraph.empty(), T)
    assert m.bands == 1 and m.data.sum() == 0


def test_binary_band_width_matches_center_count():
    y = 30.1
    m = render_binary_mask(horizontal(y), T)
    col = T.world_to_index(60.0, y)[0]
    rows = np.arange(T.height)
    _, yc = T.pixel_to_world(np.zeros_like(rows), rows)
    expect = int(np.sum(np.abs(yc - y) <= 2.0))
    assert m.data[0, :, col].sum() == expect
    assert expect in (13, 14)


@pytest.mark.parametrize("y", [30.0, 30.05, 30.15, 30.27])
def test_binary_band_width_range(y):
    m = render_binary_mask(horizontal(y), T)
    col = T.world_to_index(60.0, y)[0]
    assert m.data[0, :, col].sum() in (13, 14)


def test_binary_halfwidth_validation():
    with pytest.raises(ValueError):
        render_binary_mask(horizontal(), T, halfwidth_m=0)


def test_binary_crossing_union():
    g = crossing()
    m = render_binary_mask(g, T).data[0]
    a = render_binary_mask(RoadGraph(g.nodes, g.edges[:1]), T).data[0]
    b = render_binary_mask(RoadGraph(g.nodes, g.edges[1:]), T).data[0]
    assert m.max() == 1.0
    np.testing.assert_array_equal(m, np.maximum(a, b))


def test_binary_pixel_center_rule_brute_force():
    g = make_graph([(3.0, 4.0), (9.7, 11.2)], [(0, 1)], speeds=[25.0])
    t = GeoTransform.covering(0, 0, 15, 15, 0.3)
    m = render_binary_mask(g, t).data[0]
    a, b = np.array([3.0, 4.0]), np.array([9.7, 11.2])
    for r in range(t.height):
        for c in range(t.width):
            p = np.array(t.pixel_to_world(c, r), dtype=float)
            s = np.clip(np.dot(p - a, b - a) / np.dot(b - a, b - a), 0, 1)
            d = np.linalg.norm(p - (a + s * (b - a)))
            assert m[r, c] == (1.0 if d <= 2.0 else 0.0), (r, c, d)


def test_continuous_values():
    assert render_continuous_mask(horizontal(speed=65.0), T).data.max() == 1.0
    m = render_continuous_mask(horizontal(speed=32.5), T).data
    assert set(np.unique(m)) == {0.0, 0.5}


def test_continuous_crossing_takes_max():
    g = crossing(25.0, 45.0)
    m = render_continuous_mask(g, T).data[0]
    a = render_continuous_mask(RoadGraph(g.nodes, g.edges[:1]), T).data[0]
    b = render_continuous_mask(RoadGraph(g.nodes, g.edges[1:]), T).data[0]
    np.testing.assert_array_equal(m, np.maximum(a, b))
    c, r = T.world_to_index(60.0, 30.0)
    assert m[r, c] == pytest.approx(45 / 65)


def test_continuous_requires_speed():
    g = make_graph([(10, 30), (110, 30)], [(0, 1)])
    with pytest.raises(MaskPreconditionError, match="edge 0"):
        render_continuous_mask(g, T)
    with pytest.raises(MaskPreconditionError):
        render_multiclass_mask(g, T)


def test_multiclass_single_channel():
    m = render_multiclass_mask(horizontal(speed=35.0), T).data
    assert m.shape[0] == 8
    nonzero = [k for k in range(7) if m[k].any()]
    assert nonzero == [3]
    np.testing.assert_array_equal(m[7], 1.0 - m[3])


@pytest.mark.parametrize("speed, ch", [(25.0, 2), (30.0, 2), (35.0, 3), (45.0, 4), (50.0, 4)])
def test_multiclass_channel_convention(speed, ch):
    m = render_multiclass_mask(horizontal(speed=speed), T).data
    assert [k for k in range(7) if m[k].any()] == [ch]


def test_multiclass_empty_graph():
    m = render_multiclass_mask(RoadGraph.empty(), T).data
    assert (m[7] == 1).all() and (m[:7] == 0).all()


def test_multiclass_crossing_channels_overlap():
    m = render_multiclass_mask(crossing(25.0, 45.0), T).data
    c, r = T.world_to_index(60.0, 30.0)
    assert m[2, r, c] == 1 and m[4, r, c] == 1 and m[7, r, c] == 0


def test_flatten_equals_binary():
    g = crossing(25.0, 45.0)
    np.testing.assert_array_equal(render_multiclass_mask(g, T).flatten(), render_binary_mask(g, T).data[0])


def test_continuous_matches_speed_over_65():
    for s in (15.0, 25.0, 65.0):
        m = render_continuous_mask(horizontal(speed=s), T).data
        assert m.max() == pytest.approx(s / 65)


# --- oracle -------------------------------------------------------------------


def test_oracle_zero_noise_identity():
    g = crossing()
    np.testing.assert_array_equal(oracle_predict(g, T).data, render_multiclass_mask(g, T).data)


def test_oracle_deterministic():
    g = crossing()
    n = OracleNoise(0.1, 0.5, 8.0, seed=4)
    a = oracle_predict(g, T, n).data
    b = oracle_predict(g, T, n).data
    assert a.tobytes() == b.tobytes()
    assert a.min() >= 0 and a.max() <= 1
    c = oracle_predict(g, T, OracleNoise(0.1, 0.5, 8.0, seed=5)).data
    assert not np.array_equal(a, c)


def _zero_runs(mask, t, geom, step=0.05):
    L = float(np.sum(np.hypot(*np.diff(geom, axis=0).T)))
    s = np.arange(0, L + 1e-9, step)
    pts = np.array([interpolate(geom, x) for x in s])
    c, r = t.world_to_index(pts[:, 0], pts[:, 1])
    on = mask.flatten()[r, c] >= 0.5
    runs, cur = [], 0.0
    for v in on:
        if not v:
            cur += step
        elif cur:
            runs.append(cur)
            cur = 0.0
    if cur:
        runs.append(cur)
    return runs


def test_oracle_dropout_one_gap_per_edge():
    g = make_graph([(10, 15), (110, 15), (10, 45), (110, 45)], [(0, 1), (2, 3)], speeds=[25.0, 45.0])
    n = OracleNoise(0.0, 1.0, 5.0, seed=0)
    m = oracle_predict(g, T, n)
    assert len(dropout_intervals(g, n)) == 2
    for e in g.edges:
        runs = _zero_runs(m, T, e.geometry)
        assert len(runs) == 1 and runs[0] >= 5.0


def test_oracle_noise_validation():
    with pytest.raises(ValueError):
        OracleNoise(gaussian_sigma=-0.1)
    with pytest.raises(ValueError):
        OracleNoise(dropout_prob=1.5)


# --- losses -----------------------------------------------------------------------


def _random_truth(rng, bands=8, h=16, w=16):
    return (rng.random((bands, h, w)) < 0.3).astype(np.float64)


def test_losses_near_zero_on_perfect_prediction():
    rng = np.random.default_rng(0)
    t = _random_truth(rng)
    p = np.clip(t, 1e-6, 1 - 1e-6)
    assert 0 <= combined_loss_multiclass(p, t) <= 1e-4
    t1 = t[:1]
    assert 0 <= combined_loss_continuous(np.clip(t1, 1e-6, 1 - 1e-6), t1) <= 1e-4


def test_losses_perfect_with_empty_band():
    t = np.zeros((8, 4, 4))
    t[3, 1:3, :] = 1
    t[7] = 1 - t[3]
    p = np.clip(t, 1e-6, 1 - 1e-6)
    assert combined_loss_multiclass(p, t) <= 1e-4


def test_dice_total_mismatch():
    rng = np.random.default_rng(1)
    t = _random_truth(rng)
    assert dice_loss(1 - t, t) == pytest.approx(1.0, abs=1e-6)


def test_loss_shape_mismatch():
    with pytest.raises(MaskError):
        combined_loss_multiclass(np.zeros((2, 4, 4)), np.zeros((2, 4, 5)))


P44 = [
    [[0.9, 0.2, 0.1, 0.6], [0.3, 0.8, 0.5, 0.05], [0.7, 0.4, 0.95, 0.15], [0.25, 0.65, 0.35, 0.85]],
    [[0.1, 0.75, 0.2, 0.45], [0.6, 0.15, 0.55, 0.9], [0.05, 0.5, 0.3, 0.8], [0.4, 0.2, 0.7, 0.1]],
]
T44 = [
    [[1, 0, 0, 1], [0, 1, 1, 0], [1, 0, 1, 0], [0, 1, 0, 1]],
    [[0, 1, 0, 0], [1, 0, 1, 1], [0, 1, 0, 1], [0, 0, 1, 0]],
]


def _hand_losses(P, Tm, alpha=0.75, gamma=2.0, eps=1e-6):
    focal = ce = 0.0
    n = 0
    dices = []
    for pb, tb in zip(P, Tm):
        inter = ps = ts = 0.0
        for prow, trow in zip(pb, tb):
            for p, t in zip(prow, trow):
                n += 1
                focal += -(t * (1 - p) ** gamma * math.log(p) + (1 - t) * p**gamma * math.log(1 - p))
                ce += -(t * math.log(p) + (1 - t) * math.log(1 - p))
                inter += p * t
                ps += p
                ts += t
        dices.append((2 * inter + eps) / (ps + ts + eps))
    dice_term = 1 - sum(dices) / len(dices)
    return alpha * focal / n + (1 - alpha) * dice_term, alpha * ce / n + (1 - alpha) * dice_term


def test_losses_match_hand_oracle():
    mc, cont = _hand_losses(P44, T44)
    assert combined_loss_multiclass(np.array(P44), np.array(T44)) == pytest.approx(mc, abs=1e-9)
    assert combined_loss_continuous(np.array(P44), np.array(T44)) == pytest.approx(cont, abs=1e-9)
    mc1, cont1 = _hand_losses(P44[:1], T44[:1])
    assert combined_loss_continuous(np.array(P44[0]), np.array(T44[0])) == pytest.approx(cont1, abs=1e-9)


def test_alpha_one_is_cross_entropy():
    p, t = np.array(P44), np.array(T44, dtype=float)
    assert combined_loss_continuous(p, t, alpha=1.0) == pytest.approx(bce_loss(p, t), abs=1e-15)
    assert combined_loss_multiclass(p, t, alpha=1.0) == pytest.approx(focal_loss(p, t), abs=1e-15)


def test_losses_monotone_along_interpolation():
    rng = np.random.default_rng(2)
    t = _random_truth(rng, bands=3)
    prev_m = prev_c = math.inf
    for lam in np.linspace(0.0, 1.0, 21):
        p = np.clip((1 - lam) * (1 - t) + lam * t, 1e-6, 1 - 1e-6)
        lm = combined_loss_multiclass(p, t)
        lc = combined_loss_continuous(p, t)
        assert lm >= 0 and lc >= 0
        assert lm < prev_m and lc < prev_c
        prev_m, prev_c = lm, lc


def test_losses_nonnegative_random():
    rng = np.random.default_rng(3)
    for _ in range(50):
        p = rng.random((3, 5, 5))
        t = rng.random((3, 5, 5))
        assert combined_loss_multiclass(p, t) >= 0
        assert combined_loss_continuous(p, t) >= 0


# --- container ------------------------------------------------------------------


def test_save_load_bit_exact(tmp_path):
    m = oracle_predict(crossing(), T, OracleNoise(0.2, 0.0, 0.0, seed=1))
    save_mask(m, tmp_path / "m.npy")
    back = load_mask(tmp_path / "m.npy")
    assert back.data.dtype == np.float32
    assert back.data.tobytes() == m.data.tobytes()
    assert back.transform == m.transform


def test_raster_mask_shape_check():
    with pytest.raises(MaskError):
        RasterMask(np.zeros((1, 5, 5), dtype=np.float32), T)
