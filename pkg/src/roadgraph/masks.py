"""Training / prediction mask rendering, the oracle segmenter and reference losses.

Masks are :class:`RasterMask` objects holding a ``(bands, height, width)``
float32 grid in [0, 1]. The multi-class layout has one band per 10 mph speed
bin followed by a background band.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numba
import numpy as np

from .graph import GeoTransform, RoadGraph
from .speed import MAX_SPEED_MPH, N_SPEED_BINS, speed_to_channel

DEFAULT_HALFWIDTH_M = 2.0
BACKGROUND_BAND = N_SPEED_BINS
N_MULTICLASS_BANDS = N_SPEED_BINS + 1


class MaskError(ValueError):
    pass


class MaskPreconditionError(MaskError):
    pass


@dataclass(eq=False)
class RasterMask:
    data: np.ndarray
    transform: GeoTransform

    def __post_init__(self):
        if self.data.ndim == 2:
            self.data = self.data[None]
        if self.data.ndim != 3:
            raise MaskError(f"mask data must be (bands, h, w), got {self.data.shape}")
        if self.data.shape[1:] != self.transform.shape:
            raise MaskError(
                f"mask shape {self.data.shape[1:]} does not match transform {self.transform.shape}"
            )

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[1:]

    def validate(self) -> None:
        if not np.all(np.isfinite(self.data)):
            raise MaskError("mask contains non-finite values")
        if self.data.size and (self.data.min() < 0 or self.data.max() > 1):
            raise MaskError("mask values outside [0, 1]")

    def flatten(self) -> np.ndarray:
        """Single road-likelihood band: max over the speed bands."""
        if self.bands == N_MULTICLASS_BANDS:
            return self.data[:N_SPEED_BINS].max(axis=0)
        if self.bands == 1:
            return self.data[0]
        return self.data.max(axis=0)


@numba.njit(cache=True, nogil=True)
def _paint_segments(out, segs, values, ox, oy, ps, radius):
    """Max-assign ``values[k]`` to pixels whose centers lie within ``radius`` of segment k."""
    h, w = out.shape
    r2 = radius * radius
    for k in range(segs.shape[0]):
        x0, y0, x1, y1 = segs[k, 0], segs[k, 1], segs[k, 2], segs[k, 3]
        val = values[k]
        c_lo = max(int(math.floor((min(x0, x1) - radius - ox) / ps - 0.5)), 0)
        c_hi = min(int(math.ceil((max(x0, x1) + radius - ox) / ps - 0.5)), w - 1)
        r_lo = max(int(math.floor((oy - max(y0, y1) - radius) / ps - 0.5)), 0)
        r_hi = min(int(math.ceil((oy - min(y0, y1) + radius) / ps - 0.5)), h - 1)
        dx = x1 - x0
        dy = y1 - y0
        dd = dx * dx + dy * dy
        for r in range(r_lo, r_hi + 1):
            py = oy - (r + 0.5) * ps
            for c in range(c_lo, c_hi + 1):
                px = ox + (c + 0.5) * ps
                if dd > 0.0:
                    t = ((px - x0) * dx + (py - y0) * dy) / dd
                    if t < 0.0:
                        t = 0.0
                    elif t > 1.0:
                        t = 1.0
                else:
                    t = 0.0
                qx = x0 + t * dx - px
                qy = y0 + t * dy - py
                if qx * qx + qy * qy <= r2 and out[r, c] < val:
                    out[r, c] = val


@numba.njit(cache=True, nogil=True)
def _clear_segments(out, segs, ox, oy, ps, radius, n_speed):
    """Turn road pixels near the segments into background (all speed bands 0)."""
    _, h, w = out.shape
    r2 = radius * radius
    for k in range(segs.shape[0]):
        x0, y0, x1, y1 = segs[k, 0], segs[k, 1], segs[k, 2], segs[k, 3]
        c_lo = max(int(math.floor((min(x0, x1) - radius - ox) / ps - 0.5)), 0)
        c_hi = min(int(math.ceil((max(x0, x1) + radius - ox) / ps - 0.5)), w - 1)
        r_lo = max(int(math.floor((oy - max(y0, y1) - radius) / ps - 0.5)), 0)
        r_hi = min(int(math.ceil((oy - min(y0, y1) + radius) / ps - 0.5)), h - 1)
        dx = x1 - x0
        dy = y1 - y0
        dd = dx * dx + dy * dy
        for r in range(r_lo, r_hi + 1):
            py = oy - (r + 0.5) * ps
            for c in range(c_lo, c_hi + 1):
                px = ox + (c + 0.5) * ps
                t = 0.0
                if dd > 0.0:
                    t = min(max(((px - x0) * dx + (py - y0) * dy) / dd, 0.0), 1.0)
                qx = x0 + t * dx - px
                qy = y0 + t * dy - py
                if qx * qx + qy * qy <= r2:
                    for b in range(n_speed):
                        out[b, r, c] = 0.0
                    out[n_speed, r, c] = 1.0


def _segments(lines) -> np.ndarray:
    segs = [np.hstack([g[:-1], g[1:]]) for g in lines]
    if not segs:
        return np.zeros((0, 4))
    return np.ascontiguousarray(np.vstack(segs), dtype=np.float64)


def _paint(out2d, lines, values, transform: GeoTransform, radius: float) -> None:
    segs = _segments(lines)
    if len(segs) == 0:
        return
    vals = np.repeat(np.asarray(values, dtype=out2d.dtype), [len(g) - 1 for g in lines])
    _paint_segments(
        out2d, segs, vals, transform.origin_x, transform.origin_y, transform.pixel_size, radius
    )


def _check_halfwidth(halfwidth_m: float) -> None:
    if not halfwidth_m > 0:
        raise MaskError(f"halfwidth must be > 0, got {halfwidth_m}")


def _edge_speeds(graph: RoadGraph) -> list[float]:
    speeds = []
    for i, e in enumerate(graph.edges):
        if e.speed_mph is None:
            raise MaskPreconditionError(f"edge {i} ({e.u}-{e.v}) has no speed")
        speeds.append(e.speed_mph)
    return speeds


def render_binary_mask(graph: RoadGraph, transform: GeoTransform, halfwidth_m=DEFAULT_HALFWIDTH_M) -> RasterMask:
    """1 where the pixel center lies within ``halfwidth_m`` of any edge."""
    _check_halfwidth(halfwidth_m)
    out = np.zeros(transform.shape, dtype=np.float32)
    lines = [e.geometry for e in graph.edges]
    _paint(out, lines, np.ones(len(lines)), transform, halfwidth_m)
    return RasterMask(out[None], transform)


def render_continuous_mask(
    graph: RoadGraph,
    transform: GeoTransform,
    halfwidth_m=DEFAULT_HALFWIDTH_M,
    max_speed=MAX_SPEED_MPH,
) -> RasterMask:
    """Road pixels scaled linearly by speed / ``max_speed``; overlaps take the max."""
    _check_halfwidth(halfwidth_m)
    speeds = _edge_speeds(graph)
    out = np.zeros(transform.shape, dtype=np.float32)
    values = np.minimum(np.asarray(speeds, dtype=np.float64) / max_speed, 1.0)
    _paint(out, [e.geometry for e in graph.edges], values, transform, halfwidth_m)
    return RasterMask(out[None], transform)


def render_multiclass_mask(graph: RoadGraph, transform: GeoTransform, halfwidth_m=DEFAULT_HALFWIDTH_M) -> RasterMask:
    """Seven speed-bin bands plus a background band."""
    _check_halfwidth(halfwidth_m)
    speeds = _edge_speeds(graph)
    out = np.zeros((N_MULTICLASS_BANDS,) + transform.shape, dtype=np.float32)
    by_channel: dict[int, list[np.ndarray]] = {}
    for e, s in zip(graph.edges, speeds):
        by_channel.setdefault(speed_to_channel(s), []).append(e.geometry)
    for ch, lines in sorted(by_channel.items()):
        _paint(out[ch], lines, np.ones(len(lines)), transform, halfwidth_m)
    np.max(out[:N_SPEED_BINS], axis=0, out=out[BACKGROUND_BAND])
    np.subtract(1.0, out[BACKGROUND_BAND], out=out[BACKGROUND_BAND])
    return RasterMask(out, transform)


@dataclass(frozen=True)
class OracleNoise:
    gaussian_sigma: float = 0.0
    dropout_prob: float = 0.0
    dropout_len_m: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gaussian_sigma <= 1.0:
            raise ValueError(f"gaussian_sigma must be in [0, 1], got {self.gaussian_sigma}")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ValueError(f"dropout_prob must be in [0, 1], got {self.dropout_prob}")
        if self.dropout_len_m < 0:
            raise ValueError(f"dropout_len_m must be >= 0, got {self.dropout_len_m}")

    @property
    def is_null(self) -> bool:
        return self.gaussian_sigma == 0 and (self.dropout_prob == 0 or self.dropout_len_m == 0)


def dropout_intervals(graph: RoadGraph, noise: OracleNoise, halfwidth_m=DEFAULT_HALFWIDTH_M):
    """Arc intervals ``(edge index, s0, s1)`` removed by the oracle's dropout.

    Gaps stay clear of edge ends by twice the halfwidth when the edge is long
    enough, so a gap never spills into a neighbouring road's junction.
    """
    rng = np.random.default_rng([noise.seed, 1])
    out = []
    for i, e in enumerate(graph.edges):
        draw = rng.random()
        pos = rng.random()
        if noise.dropout_len_m <= 0 or draw >= noise.dropout_prob:
            continue
        length = e.length_m
        gap = min(noise.dropout_len_m, length)
        margin = 2.0 * halfwidth_m
        room = length - gap - 2 * margin
        if room > 0:
            s0 = margin + pos * room
        else:
            s0 = max((length - gap) / 2.0, 0.0)
        out.append((i, s0, s0 + gap))
    return out


def oracle_predict(
    graph: RoadGraph,
    transform: GeoTransform,
    noise: OracleNoise = OracleNoise(),
    halfwidth_m=DEFAULT_HALFWIDTH_M,
) -> RasterMask:
    """Synthetic stand-in for a trained multi-class segmenter.

    Renders the multi-class mask, punches one gap into each edge selected
    with probability ``dropout_prob`` and adds clipped Gaussian noise to every
    band. The output depends only on the inputs and ``noise.seed``.
    """
    from .geometry import substring

    mask = render_multiclass_mask(graph, transform, halfwidth_m)
    if noise.dropout_prob > 0 and noise.dropout_len_m > 0:
        lines = [substring(graph.edges[i].geometry, s0, s1) for i, s0, s1 in dropout_intervals(graph, noise, halfwidth_m)]
        segs = _segments(lines)
        if len(segs):
            _clear_segments(
                mask.data,
                segs,
                transform.origin_x,
                transform.origin_y,
                transform.pixel_size,
                halfwidth_m + 0.5 * transform.pixel_size,
                N_SPEED_BINS,
            )
    if noise.gaussian_sigma > 0:
        rng = np.random.default_rng([noise.seed, 2])
        buf = np.empty(transform.shape, dtype=np.float32)
        for band in mask.data:
            rng.standard_normal(out=buf, dtype=np.float32)
            buf *= np.float32(noise.gaussian_sigma)
            band += buf
            np.clip(band, 0.0, 1.0, out=band)
    return mask


# ---------------------------------------------------------------------------
# reference losses
# ---------------------------------------------------------------------------

_LOG_CLIP = 1e-7


def _as_arrays(pred, truth):
    p = pred.data if isinstance(pred, RasterMask) else np.asarray(pred)
    t = truth.data if isinstance(truth, RasterMask) else np.asarray(truth)
    p = np.asarray(p, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if p.ndim == 2:
        p = p[None]
    if t.ndim == 2:
        t = t[None]
    if p.shape != t.shape:
        raise MaskError(f"shape mismatch: pred {p.shape} vs truth {t.shape}")
    return p, t


def dice_loss(p: np.ndarray, t: np.ndarray, eps: float = 1e-6) -> float:
    """``1 - mean Dice`` over bands whose truth is non-empty.

    Bands with an empty truth carry no overlap to score and are skipped; if
    every band is empty the Dice is pooled over all bands.
    """
    inter = (p * t).sum(axis=(1, 2))
    psum = p.sum(axis=(1, 2))
    tsum = t.sum(axis=(1, 2))
    present = tsum > 0
    if present.any():
        dice = (2 * inter[present] + eps) / (psum[present] + tsum[present] + eps)
        return float(1.0 - dice.mean())
    dice = (2 * inter.sum() + eps) / (psum.sum() + tsum.sum() + eps)
    return float(1.0 - dice)


def focal_loss(p: np.ndarray, t: np.ndarray, gamma: float = 2.0) -> float:
    pc = np.clip(p, _LOG_CLIP, 1 - _LOG_CLIP)
    loss = -(t * (1 - pc) ** gamma * np.log(pc) + (1 - t) * pc**gamma * np.log(1 - pc))
    return float(loss.mean())


def bce_loss(p: np.ndarray, t: np.ndarray) -> float:
    pc = np.clip(p, _LOG_CLIP, 1 - _LOG_CLIP)
    return float(-(t * np.log(pc) + (1 - t) * np.log(1 - pc)).mean())


def combined_loss_multiclass(pred, truth, alpha: float = 0.75, focal_gamma: float = 2.0, eps: float = 1e-6) -> float:
    """``alpha * focal + (1 - alpha) * dice`` for multi-class masks."""
    p, t = _as_arrays(pred, truth)
    return alpha * focal_loss(p, t, focal_gamma) + (1 - alpha) * dice_loss(p, t, eps)


def combined_loss_continuous(pred, truth, alpha: float = 0.75, eps: float = 1e-6) -> float:
    """``alpha * cross-entropy + (1 - alpha) * dice`` for continuous masks."""
    p, t = _as_arrays(pred, truth)
    return alpha * bce_loss(p, t) + (1 - alpha) * dice_loss(p, t, eps)


# ---------------------------------------------------------------------------
# raster container: <name>.npy (float32 bands) + <name>.json (transform)
# ---------------------------------------------------------------------------


def _sidecar(path) -> str:
    root, _ = os.path.splitext(str(path))
    return root + ".json"


def save_mask(mask: RasterMask, path) -> None:
    path = str(path)
    if not path.endswith(".npy"):
        path += ".npy"
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    np.save(path, np.ascontiguousarray(mask.data, dtype=np.float32))
    with open(_sidecar(path), "w") as fh:
        json.dump({"bands": mask.bands, "transform": mask.transform.to_dict()}, fh, indent=1)


def load_mask(path, validate: bool = True) -> RasterMask:
    path = str(path)
    if not path.endswith(".npy"):
        path += ".npy"
    data = np.load(path)
    with open(_sidecar(path)) as fh:
        meta = json.load(fh)
    try:
        transform = GeoTransform.from_dict(meta["transform"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MaskError(f"{_sidecar(path)}: bad or missing transform ({exc})") from exc
    mask = RasterMask(data.astype(np.float32, copy=False), transform)
    if validate:
        mask.validate()
    return mask


def export_png_bands(mask: RasterMask, prefix) -> list[str]:
    """Write each band as an 8-bit PNG, ``<prefix>_b<k>.png``."""
    import cv2

    paths = []
    for k, band in enumerate(mask.data):
        p = f"{prefix}_b{k}.png"
        os.makedirs(os.path.dirname(os.path.abspath(p)), exist_ok=True)
        cv2.imwrite(p, np.round(np.clip(band, 0, 1) * 255).astype(np.uint8))
        paths.append(p)
    return paths
