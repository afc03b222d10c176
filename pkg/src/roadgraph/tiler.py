"""Large-image inference: window splitting, fold merging, stitching and extraction.

``run_city_scale`` executes the whole chain over a scene: split into
overlapping windows, predict each window (optionally with several fold
models), stitch the normalized mask, then refine, skeletonize, build and clean
the graph and infer speeds.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .clean import CleanConfig, clean_graph
from .graph import GeoTransform, RoadGraph
from .masks import DEFAULT_HALFWIDTH_M, N_MULTICLASS_BANDS, OracleNoise, RasterMask, load_mask, oracle_predict
from .refine import RefineConfig, refine_pipeline
from .skeleton import skeleton_to_graph, skeletonize
from .speed_infer import SpeedConfig, infer_speeds

log = logging.getLogger(__name__)

DEFAULT_WINDOW_PX = 2000
DEFAULT_OVERLAP_PX = 500


class TilingError(ValueError):
    pass


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class WindowSpec:
    col_off: int
    row_off: int
    width: int
    height: int
    overlap: int = 0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise TilingError(f"window size must be positive, got {self.width}x{self.height}")
        if self.overlap < 0:
            raise TilingError(f"overlap must be >= 0, got {self.overlap}")

    @property
    def slices(self) -> tuple[slice, slice]:
        return slice(self.row_off, self.row_off + self.height), slice(self.col_off, self.col_off + self.width)

    @property
    def name(self) -> str:
        return f"mask_r{self.row_off}_c{self.col_off}"


def _offsets(extent: int, window: int, stride: int) -> list[int]:
    if extent <= window:
        return [0]
    offs = list(range(0, extent - window, stride))
    if offs[-1] != extent - window:
        offs.append(extent - window)
    return offs


def split(width: int, height: int, window_px: int = DEFAULT_WINDOW_PX, overlap_px: int = DEFAULT_OVERLAP_PX) -> list[WindowSpec]:
    """Regular grid of windows covering a ``width x height`` raster.

    Stride is ``window_px - overlap_px``; the last row and column are shifted
    inward so no window leaves the raster, and windows larger than the raster
    are clamped to it. Windows are ordered row-major.
    """
    if window_px <= 0:
        raise TilingError(f"window_px must be > 0, got {window_px}")
    if overlap_px < 0 or overlap_px >= window_px:
        raise TilingError(f"overlap_px must be in [0, window_px), got {overlap_px} for window {window_px}")
    if width <= 0 or height <= 0:
        raise TilingError(f"extent must be positive, got {width}x{height}")
    stride = window_px - overlap_px
    ww, wh = min(window_px, width), min(window_px, height)
    return [
        WindowSpec(c, r, ww, wh, overlap_px)
        for r in _offsets(height, window_px, stride)
        for c in _offsets(width, window_px, stride)
    ]


def merge_fold_predictions(masks: list[RasterMask]) -> RasterMask:
    """Per-pixel, per-band mean of several predictions of the same window."""
    if not masks:
        raise TilingError("no masks to merge")
    first = masks[0]
    for m in masks[1:]:
        if m.data.shape != first.data.shape or m.transform != first.transform:
            raise TilingError(f"fold shape mismatch: {m.data.shape} vs {first.data.shape}")
    if len(masks) == 1:
        return first
    acc = np.zeros(first.data.shape, dtype=np.float64)
    for m in masks:
        acc += m.data
    acc /= len(masks)
    return RasterMask(acc.astype(np.float32), first.transform)


@dataclass
class Coverage:
    pixels: int
    covered: int
    max_count: int

    @property
    def uncovered(self) -> int:
        return self.pixels - self.covered

    def as_dict(self) -> dict:
        return {"pixels": self.pixels, "covered": self.covered, "uncovered": self.uncovered, "max_count": self.max_count}


class Stitcher:
    """Accumulates window masks into a normalized full-extent mask.

    Keeps a running per-pixel mean and a coverage count, so memory is one
    float32 raster plus two bytes per pixel. For each pixel the result equals
    the mean of the windows covering it; uncovered pixels stay 0.
    """

    def __init__(self, width: int, height: int, bands: int, transform: GeoTransform):
        self.width, self.height = width, height
        self.transform = transform
        self.mean = np.zeros((bands, height, width), dtype=np.float32)
        self.count = np.zeros((height, width), dtype=np.uint16)

    def add(self, spec: WindowSpec, mask: RasterMask) -> None:
        if spec.col_off < 0 or spec.row_off < 0 or spec.col_off + spec.width > self.width or spec.row_off + spec.height > self.height:
            raise TilingError(f"window {spec} outside extent {self.width}x{self.height}")
        if mask.data.shape != (self.mean.shape[0], spec.height, spec.width):
            raise TilingError(f"window {spec.name} mask shape {mask.data.shape} does not match its spec")
        rs, cs = spec.slices
        cnt = self.count[rs, cs]
        if cnt.max() == np.iinfo(cnt.dtype).max:
            raise TilingError(f"more than {np.iinfo(cnt.dtype).max} windows overlap one pixel")
        cnt += 1
        inv = (1.0 / cnt).astype(np.float32)
        for b in range(self.mean.shape[0]):
            cur = self.mean[b, rs, cs]
            delta = mask.data[b].astype(np.float32, copy=False) - cur
            # running mean: identical contributions leave the value untouched
            delta *= inv
            cur += delta

    def result(self) -> tuple[RasterMask, Coverage]:
        covered = int(np.count_nonzero(self.count))
        cov = Coverage(self.count.size, covered, int(self.count.max()) if self.count.size else 0)
        return RasterMask(self.mean, self.transform), cov


def stitch(windows, width: int, height: int, transform: GeoTransform) -> tuple[RasterMask, Coverage]:
    """Mosaic ``(WindowSpec, RasterMask)`` pairs, averaging where windows overlap."""
    windows = list(windows)
    if not windows:
        return RasterMask(np.zeros((1, height, width), dtype=np.float32), transform), Coverage(width * height, 0, 0)
    st = Stitcher(width, height, windows[0][1].bands, transform)
    for spec, mask in windows:
        st.add(spec, mask)
    return st.result()


# ---------------------------------------------------------------------------
# segmentation backends
# ---------------------------------------------------------------------------


class OracleSource:
    """Oracle segmenter over a ground-truth graph; fold ``k`` uses noise seed ``seed + k``."""

    bands = N_MULTICLASS_BANDS

    def __init__(self, graph: RoadGraph, transform: GeoTransform, noise: OracleNoise = OracleNoise(), halfwidth_m: float = DEFAULT_HALFWIDTH_M):
        self.graph = graph
        self.transform = transform
        self.noise = noise
        self.halfwidth_m = halfwidth_m

    def predict(self, spec: WindowSpec, fold: int = 0) -> RasterMask:
        t = self.transform.window(spec.col_off, spec.row_off, spec.width, spec.height)
        noise = replace(self.noise, seed=self.noise.seed + fold)
        return oracle_predict(self.graph, t, noise, self.halfwidth_m)


class MaskDirectorySource:
    """External backend: one ``mask_r{row}_c{col}.npy`` file per window (fold suffix ``_f{k}`` optional)."""

    def __init__(self, directory, transform: GeoTransform, bands: int = N_MULTICLASS_BANDS):
        self.directory = str(directory)
        self.transform = transform
        self.bands = bands

    def predict(self, spec: WindowSpec, fold: int = 0) -> RasterMask:
        base = os.path.join(self.directory, spec.name)
        path = f"{base}_f{fold}.npy" if fold and os.path.exists(f"{base}_f{fold}.npy") else base + ".npy"
        if not os.path.exists(path):
            raise FileNotFoundError(f"missing window mask {path}")
        return load_mask(path)


# ---------------------------------------------------------------------------
# full chain
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CityScaleConfig:
    window_px: int = DEFAULT_WINDOW_PX
    overlap_px: int = DEFAULT_OVERLAP_PX
    folds: int = 1
    threads: int = 1
    refine: RefineConfig = RefineConfig()
    clean: CleanConfig = field(default_factory=lambda: CleanConfig.for_mode(True))
    speed: SpeedConfig = SpeedConfig()
    infer_speed: bool = True
    keep_mask: bool = False

    def __post_init__(self):
        if self.folds < 1:
            raise ValueError(f"folds must be >= 1, got {self.folds}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")


@dataclass
class CityScaleResult:
    graph: RoadGraph
    timings: dict[str, float]
    coverage: Coverage
    n_windows: int
    mask: RasterMask | None = None
    refined: RasterMask | None = None


class _Timer:
    def __init__(self, timings: dict, stage: str):
        self.timings, self.stage = timings, stage

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.timings[self.stage] = self.timings.get(self.stage, 0.0) + time.perf_counter() - self.t0
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.stage, exc) from exc
        return False


def extract_graph(mask: RasterMask, refine: RefineConfig, clean: CleanConfig, timings: dict | None = None):
    """Refine, skeletonize, convert and clean; returns ``(graph, refined_mask)``."""
    timings = {} if timings is None else timings
    with _Timer(timings, "refine"):
        refined = refine_pipeline(mask, refine)
    with _Timer(timings, "skeleton"):
        skel = skeletonize(refined)
    with _Timer(timings, "graph"):
        raw = skeleton_to_graph(skel)
    del skel
    with _Timer(timings, "clean"):
        graph = clean_graph(raw, clean)
    return graph, refined


def run_city_scale(source, config: CityScaleConfig = CityScaleConfig()) -> CityScaleResult:
    """Split, predict, fold-merge, stitch, then extract a graph with speeds.

    Any failure is re-raised as :class:`StageError` naming the stage.
    """
    timings: dict[str, float] = {}
    transform = source.transform
    height, width = transform.shape
    with _Timer(timings, "split"):
        specs = split(width, height, config.window_px, config.overlap_px)

    def predict(spec):
        return merge_fold_predictions([source.predict(spec, k) for k in range(config.folds)])

    with _Timer(timings, "predict+stitch"):
        st = Stitcher(width, height, source.bands, transform)
        batch = max(1, config.threads)
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            for i in range(0, len(specs), batch):
                chunk = specs[i : i + batch]
                # stitch in window order so the result does not depend on scheduling
                for spec, m in zip(chunk, pool.map(predict, chunk)):
                    st.add(spec, m)
                    del m
        mask, cov = st.result()
        del st
    log.info("stitched %d windows, %d uncovered pixels", len(specs), cov.uncovered)

    graph, refined = extract_graph(mask, config.refine, config.clean, timings)
    if config.infer_speed and graph.edges:
        with _Timer(timings, "speed"):
            graph = infer_speeds(graph, mask, config=config.speed)
    return CityScaleResult(
        graph,
        timings,
        cov,
        len(specs),
        mask if config.keep_mask else None,
        refined if config.keep_mask else None,
    )
