"""Prediction-mask refinement: smoothing, thresholding, morphology, small-object removal."""

from __future__ import annotations

import math
from dataclasses import dataclass

import cv2
import numpy as np

from .masks import RasterMask


@dataclass(frozen=True)
class RefineConfig:
    smooth_sigma_m: float = 2.0
    threshold: float = 0.3
    morph_kernel_m: float = 2.0
    min_area_m2: float = 30.0


def sigma_pixels(kernel_m: float, pixel_size: float) -> float:
    return kernel_m / pixel_size


def gaussian_smooth(mask: RasterMask, kernel_m: float = 2.0) -> RasterMask:
    """Per-band Gaussian blur with sigma ``kernel_m`` meters, truncated at 4 sigma.

    Borders use reflect padding (``dcba|abcd``).
    """
    if not kernel_m > 0:
        raise ValueError(f"kernel_m must be > 0, got {kernel_m}")
    sigma = sigma_pixels(kernel_m, mask.transform.pixel_size)
    ksize = 2 * int(math.ceil(4.0 * sigma)) + 1
    out = np.empty(mask.data.shape, dtype=np.float32)
    for b in range(mask.bands):
        src = np.ascontiguousarray(mask.data[b], dtype=np.float32)
        cv2.GaussianBlur(src, (ksize, ksize), sigma, dst=out[b], sigmaY=sigma, borderType=cv2.BORDER_REFLECT)
        np.clip(out[b], 0.0, 1.0, out=out[b])
    return RasterMask(out, mask.transform)


def binarize(mask: RasterMask, threshold: float = 0.3) -> RasterMask:
    """1 where the (flattened) value is at least ``threshold``."""
    band = mask.flatten()
    return RasterMask((band >= threshold).astype(np.uint8)[None], mask.transform)


def disk(radius_px: float) -> np.ndarray:
    r = int(math.floor(radius_px))
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return (xx * xx + yy * yy <= radius_px * radius_px).astype(np.uint8)


def morph_refine(binary: RasterMask, kernel_m: float = 2.0) -> RasterMask:
    """Closing then opening with a disk of radius ``kernel_m`` meters.

    Pixels outside the raster never influence the result.
    """
    se = disk(kernel_m / binary.transform.pixel_size)
    img = np.ascontiguousarray(binary.data[0], dtype=np.uint8)
    img = cv2.morphologyEx(img, cv2.MORPH_CLOSE, se)
    img = cv2.morphologyEx(img, cv2.MORPH_OPEN, se)
    return RasterMask(img[None], binary.transform)


def remove_small(binary: RasterMask, min_area_m2: float = 30.0) -> RasterMask:
    """Drop foreground blobs (8-connected) and fill holes (4-connected) under ``min_area_m2``."""
    px_area = binary.transform.pixel_size ** 2
    img = np.ascontiguousarray(binary.data[0] > 0, dtype=np.uint8)

    def small_labels(src, connectivity):
        n, labels, stats, _ = cv2.connectedComponentsWithStats(src, connectivity=connectivity)
        area = stats[:, cv2.CC_STAT_AREA].astype(np.float64) * px_area
        small = area < min_area_m2 - 1e-9
        small[0] = False
        return labels, small

    labels, small = small_labels(img, 8)
    if small.any():
        img[small[labels]] = 0
    labels, small = small_labels(1 - img, 4)
    if small.any():
        img[small[labels]] = 1
    return RasterMask(img[None], binary.transform)


def refine_pipeline(mask: RasterMask, config: RefineConfig = RefineConfig()) -> RasterMask:
    """Flatten, smooth, threshold, close/open and clean a prediction mask."""
    flat = RasterMask(mask.flatten()[None], mask.transform)
    smoothed = gaussian_smooth(flat, config.smooth_sigma_m)
    del flat
    binary = binarize(smoothed, config.threshold)
    del smoothed
    binary = morph_refine(binary, config.morph_kernel_m)
    return remove_small(binary, config.min_area_m2)
