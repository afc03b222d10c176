"""Layered TOML configuration: packaged defaults overlaid with a user file."""

from __future__ import annotations

import copy
import sys
from importlib import resources

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .clean import CleanConfig
from .masks import OracleNoise
from .metrics.apls import AplsConfig
from .metrics.topo import TopoConfig
from .refine import RefineConfig
from .speed import SpeedTable
from .speed_infer import SpeedConfig
from .tiler import CityScaleConfig


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def default_config() -> dict:
    text = resources.files("roadgraph").joinpath("default_config.toml").read_text()
    return tomllib.loads(text)


def _merge(base: dict, over: dict, prefix: str = "") -> None:
    for key, value in over.items():
        path = f"{prefix}{key}"
        if prefix == "speeds.":
            base[key] = value
            continue
        if key not in base:
            raise ConfigError(path, "unknown key")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(path, "expected a table")
            _merge(base[key], value, path + ".")
            continue
        expect = type(base[key])
        if expect is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if (expect is int and isinstance(value, bool)) or not isinstance(value, expect):
            raise ConfigError(path, f"expected {expect.__name__}, got {type(value).__name__}")
        base[key] = value


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults overlaid with the TOML file at ``path`` and then ``overrides``."""
    cfg = default_config()
    if path:
        try:
            with open(path, "rb") as fh:
                user = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(str(path), f"invalid TOML: {exc}") from exc
        _merge(cfg, user)
    if overrides:
        _merge(cfg, overrides)
    validate(cfg)
    return cfg


def _build(path, factory, **kw):
    try:
        return factory(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from exc


def refine_config(cfg: dict) -> RefineConfig:
    return _build("refine", RefineConfig, **cfg["refine"])


def clean_config(cfg: dict, city_scale: bool) -> CleanConfig:
    c = dict(cfg["clean"])
    chip = c.pop("min_subgraph_chip_m")
    city = c.pop("min_subgraph_city_m")
    return _build("clean", CleanConfig, min_subgraph_m=city if city_scale else chip, **c)


def speed_config(cfg: dict) -> SpeedConfig:
    return _build("speed_infer", SpeedConfig, **cfg["speed_infer"])


def speed_table(cfg: dict) -> SpeedTable:
    try:
        return SpeedTable.from_mapping(cfg["speeds"])
    except ValueError as exc:
        raise ConfigError("speeds", str(exc)) from exc


def oracle_noise(cfg: dict) -> OracleNoise:
    return _build("oracle", OracleNoise, **cfg["oracle"])


def apls_config(cfg: dict, weight: str = "length") -> AplsConfig:
    return _build("apls", AplsConfig, weight=weight, **cfg["apls"])


def topo_config(cfg: dict) -> TopoConfig:
    return _build("topo", TopoConfig, **cfg["topo"])


def city_config(cfg: dict, city_scale: bool = True, infer_speed: bool = True, keep_mask: bool = False) -> CityScaleConfig:
    t = cfg["tiler"]
    return _build(
        "tiler",
        CityScaleConfig,
        window_px=t["window_px"],
        overlap_px=t["overlap_px"],
        folds=t["folds"],
        threads=t["threads"],
        refine=refine_config(cfg),
        clean=clean_config(cfg, city_scale),
        speed=speed_config(cfg),
        infer_speed=infer_speed,
        keep_mask=keep_mask,
    )


def validate(cfg: dict) -> None:
    """Build every typed config once so errors surface with their field path."""
    refine_config(cfg)
    clean_config(cfg, True)
    speed_config(cfg)
    speed_table(cfg)
    oracle_noise(cfg)
    apls_config(cfg)
    topo_config(cfg)
    city_config(cfg)
    r = cfg["render"]
    if not r["halfwidth_m"] > 0:
        raise ConfigError("render.halfwidth_m", "must be > 0")
    if not r["pixel_size"] > 0:
        raise ConfigError("render.pixel_size", "must be > 0")
    t = cfg["tiler"]
    if not 0 <= t["overlap_px"] < t["window_px"]:
        raise ConfigError("tiler.overlap_px", "must be in [0, window_px)")
    s = cfg["scene"]
    if not s["extent_m"] > 0:
        raise ConfigError("scene.extent_m", "must be > 0")
    if s["density"] < 0:
        raise ConfigError("scene.density", "must be >= 0")


def resolved(cfg: dict) -> dict:
    """Deep copy suitable for echoing into a run report."""
    return copy.deepcopy(cfg)
