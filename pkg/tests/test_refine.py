import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq
from scipy.special import erf

from conftest import make_graph
from roadgraph.graph import GeoTransform
from roadgraph.masks import RasterMask, render_binary_mask, render_multiclass_mask
from roadgraph.refine import (
    RefineConfig,
    binarize,
    disk,
    gaussian_smooth,
    morph_refine,
    refine_pipeline,
    remove_small,
    sigma_pixels,
)


def grid(h=120, w=120, ps=0.3):
    return GeoTransform(0.0, h * ps, ps, w, h)


def mask_of(arr, ps=0.3):
    arr = np.asarray(arr, dtype=np.float32)
    return RasterMask(arr[None], grid(arr.shape[0], arr.shape[1], ps))


# --- smoothing ---------------------------------------------------------------


def test_sigma_pixels():
    assert sigma_pixels(2.0, 0.3) == pytest.approx(6.6667, abs=1e-4)


def test_blur_constant_is_constant():
    out = gaussian_smooth(mask_of(np.full((60, 80), 0.4))).data[0]
    np.testing.assert_allclose(out, 0.4, atol=1e-6)


def test_blur_impulse_matches_gaussian():
    a = np.zeros((121, 121))
    a[60, 60] = 1.0
    out = gaussian_smooth(mask_of(a)).data[0].astype(np.float64)
    s = 2.0 / 0.3
    assert out.sum() == pytest.approx(1.0, abs=1e-4)
    # separable discrete kernel: the peak is the squared center tap of the 1-D kernel
    r = math.ceil(4 * s)
    k = np.exp(-(np.arange(-r, r + 1) ** 2) / (2 * s * s))
    k /= k.sum()
    assert out[60, 60] == pytest.approx(k[r] ** 2, rel=1e-4)
    assert out[60, 60 + 7] == pytest.approx(k[r] * k[r + 7], rel=1e-4)
    np.testing.assert_allclose(out, out.T, atol=1e-9)


def test_blur_rejects_bad_kernel():
    with pytest.raises(ValueError):
        gaussian_smooth(mask_of(np.zeros((4, 4))), 0.0)


def test_blur_per_band():
    t = grid(40, 40)
    data = np.zeros((8, 40, 40), dtype=np.float32)
    data[3, 20, 20] = 1
    out = gaussian_smooth(RasterMask(data, t)).data
    assert out[3].sum() > 0.99 and out[[0, 1, 2, 4, 5, 6, 7]].sum() == 0


# --- threshold ----------------------------------------------------------------------


def test_binarize_boundary():
    m = mask_of([[0.3, 0.2999, 0.0, 1.0]])
    assert binarize(m, 0.3).data[0].tolist() == [[1, 0, 0, 1]]


def test_binarize_multiclass_flattens():
    g = make_graph([(5, 18), (30, 18)], [(0, 1)], speeds=[45.0])
    t = grid()
    m = render_multiclass_mask(g, t)
    np.testing.assert_array_equal(binarize(m).data[0], (m.data[4] >= 0.3).astype(np.uint8))


# --- morphology ----------------------------------------------------------------------


def test_disk_shape():
    d = disk(2.0 / 0.3)
    assert d.shape == (13, 13) and d[6, 6] == 1 and d[0, 0] == 0
    assert d.sum() == sum(1 for y in range(-6, 7) for x in range(-6, 7) if x * x + y * y <= (2 / 0.3) ** 2)


def test_morph_keeps_wide_band():
    a = np.zeros((120, 120), np.uint8)
    a[30:90, :] = 1
    out = morph_refine(mask_of(a)).data[0]
    np.testing.assert_array_equal(out, a)


def test_morph_rectangle_changes_only_at_corners():
    a = np.zeros((120, 120), np.uint8)
    a[30:90, 20:100] = 1
    out = morph_refine(mask_of(a)).data[0]
    diff = np.argwhere(out != a)
    assert len(diff) > 0 and (a[tuple(diff.T)] == 1).all()
    for r, c in diff:
        assert min(r - 30, 89 - r) < 7 and min(c - 20, 99 - c) < 7


def test_morph_removes_speckle():
    a = np.zeros((120, 120), np.uint8)
    a[30:90, 20:100] = 1
    a[10, 10] = 1
    a[5:8, 110:113] = 1
    out = morph_refine(mask_of(a)).data[0]
    assert out[10, 10] == 0 and out[5:8, 110:113].sum() == 0


def test_morph_fills_crack():
    a = np.zeros((120, 120), np.uint8)
    a[30:90, :] = 1
    a[30:90, 60] = 0  # 1-px crack
    a[50, 1:119] = 0
    out = morph_refine(mask_of(a)).data[0]
    assert out[30:90, :].all()


def test_morph_border_not_eroded():
    a = np.ones((60, 60), np.uint8)
    np.testing.assert_array_equal(morph_refine(mask_of(a)).data[0], a)


# --- small objects ---------------------------------------------------------------------


def test_remove_small_threshold():
    # 30 m^2 at 0.3 m pixels is 333.3 px
    a = np.zeros((120, 120), np.uint8)
    a[5:35, 5:15] = 1  # 300 px
    a[50:51 + 0, 5:5] = 0
    blob = np.zeros((120, 120), np.uint8)
    blob[60:78, 60:78] = 1  # 324 px
    blob[78, 60:70] = 1  # 334 px
    a |= blob
    out = remove_small(mask_of(a)).data[0]
    assert out[5:35, 5:15].sum() == 0
    assert out[60:79, 60:78].sum() == 334


def test_remove_small_fills_hole():
    a = np.zeros((120, 120), np.uint8)
    a[20:100, 20:100] = 1
    a[50:52, 50:55] = 0  # 10-px hole
    a[70:90, 70:90] = 0  # 400-px hole stays
    out = remove_small(mask_of(a)).data[0]
    assert out[50:52, 50:55].all()
    assert out[70:90, 70:90].sum() == 0


def test_remove_small_diagonal_is_one_blob():
    a = np.zeros((60, 60), np.uint8)
    for i in range(0, 40):
        a[i, i] = 1
    a[40:50, 0:30] = 1  # separate 300 px
    a2 = a.copy()
    out = remove_small(mask_of(a), min_area_m2=40 * 0.09 - 1e-6).data[0]
    assert out[:40, :40].trace() == 40
    assert (out[40:50, :30] == a2[40:50, :30]).all()


# --- full pipeline ------------------------------------------------------------------------


def _analytic_halfwidth(hw=2.0, sigma=2.0, thr=0.3):
    s = sigma * math.sqrt(2)
    f = lambda d: 0.5 * (erf((hw - d) / s) + erf((hw + d) / s)) - thr
    return brentq(f, 0.0, hw + 5 * sigma)


def test_pipeline_band_matches_erf_profile():
    t = GeoTransform.covering(0, 0, 90, 60, 0.3)
    g = make_graph([(-20.0, 30.05), (110.0, 30.05)], [(0, 1)], speeds=[35.0])
    out = refine_pipeline(render_multiclass_mask(g, t)).data[0]
    d = _analytic_halfwidth()
    expect = 2 * d / 0.3
    cols = out[:, 60:240].sum(axis=0)
    assert np.all(np.abs(cols - expect) <= 2.0), (cols.min(), cols.max(), expect)
    # the band is wider than the painted one by the smoothing
    assert cols.min() > 14


def test_pipeline_noise_only_is_removed():
    rng = np.random.default_rng(0)
    t = grid(300, 300)
    a = (rng.random((300, 300)) < 0.05).astype(np.float32)
    out = refine_pipeline(RasterMask(a[None], t)).data[0]
    assert out.sum() * 0.09 < 30.0


def test_pipeline_empty_and_full_idempotent():
    t = grid(80, 80)
    for v in (0.0, 1.0):
        m = RasterMask(np.full((1, 80, 80), v, np.float32), t)
        once = refine_pipeline(m)
        twice = refine_pipeline(RasterMask(once.data.astype(np.float32), t))
        np.testing.assert_array_equal(once.data, twice.data)
        assert once.data.min() == once.data.max() == v


def test_pipeline_output_binary_uint8():
    t = grid(80, 80)
    g = make_graph([(2, 12), (22, 12)], [(0, 1)], speeds=[25.0])
    out = refine_pipeline(render_multiclass_mask(g, t)).data
    assert out.dtype == np.uint8 and set(np.unique(out)) <= {0, 1}


@settings(max_examples=15, deadline=None)
@given(dx=st.integers(-20, 20), dy=st.integers(-20, 20))
def test_pipeline_translation_equivariant(dx, dy):
    t = grid(200, 200)
    base = make_graph([(15, 20), (45, 40), (40, 15)], [(0, 1), (1, 2)], speeds=[35.0, 35.0])
    shifted = make_graph(
        [(15 + dx * 0.3, 20 - dy * 0.3), (45 + dx * 0.3, 40 - dy * 0.3), (40 + dx * 0.3, 15 - dy * 0.3)],
        [(0, 1), (1, 2)],
        speeds=[35.0, 35.0],
    )
    a = refine_pipeline(render_binary_mask(base, t)).data[0]
    b = refine_pipeline(render_binary_mask(shifted, t)).data[0]
    core = (slice(40, 160), slice(40, 160))
    np.testing.assert_array_equal(np.roll(a, (dy, dx), axis=(0, 1))[core], b[core])


def test_pipeline_contains_centerline():
    t = grid(200, 200)
    g = make_graph([(5, 5), (30, 50), (55, 10)], [(0, 1), (1, 2)], speeds=[25.0, 55.0])
    out = refine_pipeline(render_multiclass_mask(g, t)).data[0]
    for e in g.edges:
        for s in np.linspace(0, 1, 200):
            p = e.geometry[0] + s * (e.geometry[-1] - e.geometry[0])
            c, r = t.world_to_index(p[0], p[1])
            assert out[r, c] == 1


def test_refine_config_defaults():
    c = RefineConfig()
    assert (c.smooth_sigma_m, c.threshold, c.morph_kernel_m, c.min_area_m2) == (2.0, 0.3, 2.0, 30.0)
