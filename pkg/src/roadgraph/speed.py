"""Road speed assignment, speed binning and travel time."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from .graph import MPH_TO_MPS, RoadMetadata, RoadType

N_SPEED_BINS = 7
BIN_WIDTH_MPH = 10.0
MAX_SPEED_MPH = 65.0

# mph by road type for the 1-lane, 2-lane and 3+-lane columns
DEFAULT_SPEED_TABLE: dict[RoadType, tuple[float, float, float]] = {
    RoadType.MOTORWAY: (55.0, 55.0, 65.0),
    RoadType.PRIMARY: (45.0, 45.0, 55.0),
    RoadType.SECONDARY: (35.0, 35.0, 45.0),
    RoadType.TERTIARY: (30.0, 30.0, 35.0),
    RoadType.RESIDENTIAL: (25.0, 25.0, 30.0),
    RoadType.UNCLASSIFIED: (20.0, 20.0, 20.0),
    RoadType.CART_TRACK: (20.0, 20.0, 20.0),
}
DEFAULT_UNPAVED_MULTIPLIER = 0.75


class SpeedDomainError(ValueError):
    pass


def lane_bucket(lanes: int) -> int:
    """Column index for a lane count: 0 for 1 lane, 1 for 2, 2 for 3 or more."""
    return min(max(int(lanes), 1), 3) - 1


@dataclass(frozen=True)
class SpeedTable:
    table: Mapping[RoadType, tuple[float, float, float]] = field(
        default_factory=lambda: dict(DEFAULT_SPEED_TABLE)
    )
    unpaved_multiplier: float = DEFAULT_UNPAVED_MULTIPLIER

    def speed(self, meta: RoadMetadata) -> float:
        base = self.table[RoadType.parse(meta.road_type)][lane_bucket(meta.lanes)]
        return base if meta.paved else base * self.unpaved_multiplier

    @classmethod
    def from_mapping(cls, cfg: Mapping) -> "SpeedTable":
        """Override defaults from a config section.

        Keys look like ``"motorway.3+" = 65`` or ``"residential.1" = 25``; an
        ``unpaved_multiplier`` key replaces the 0.75 factor.
        """
        table = {k: list(v) for k, v in DEFAULT_SPEED_TABLE.items()}
        mult = DEFAULT_UNPAVED_MULTIPLIER
        for key, value in cfg.items():
            if key == "unpaved_multiplier":
                mult = float(value)
                continue
            try:
                rt, bucket = key.rsplit(".", 1)
                col = {"1": 0, "2": 1, "3": 2, "3+": 2}[bucket]
                table[RoadType.parse(rt)][col] = float(value)
            except (ValueError, KeyError) as exc:
                raise ValueError(f"speeds.{key}: unrecognized speed table key") from exc
        return cls({k: tuple(v) for k, v in table.items()}, mult)


DEFAULT_TABLE = SpeedTable()


def assign_speed(meta: RoadMetadata, table: SpeedTable = DEFAULT_TABLE) -> float:
    """Safe traversal speed (mph) for a labeled road."""
    return table.speed(meta)


def speed_to_channel(speed_mph: float) -> int:
    """Mask channel for a speed; bins are ``(10 i, 10 (i + 1)]`` mph."""
    s = float(speed_mph)
    if not (0.0 < s <= N_SPEED_BINS * BIN_WIDTH_MPH):
        raise SpeedDomainError(f"speed {s} mph outside (0, 70]")
    return int(math.ceil(s / BIN_WIDTH_MPH)) - 1


def channel_to_speed(channel: int) -> float:
    c = int(channel)
    if c != channel or not 0 <= c < N_SPEED_BINS:
        raise SpeedDomainError(f"channel {channel} outside 0..{N_SPEED_BINS - 1}")
    return BIN_WIDTH_MPH * c + BIN_WIDTH_MPH / 2


def bin_center(speed_mph: float) -> float:
    return channel_to_speed(speed_to_channel(speed_mph))


def travel_time(length_m: float, speed_mph: float) -> float:
    """Seconds to traverse ``length_m`` at ``speed_mph``."""
    if not speed_mph > 0:
        raise SpeedDomainError(f"speed must be > 0, got {speed_mph}")
    if length_m < 0:
        raise SpeedDomainError(f"length must be >= 0, got {length_m}")
    return length_m / (speed_mph * MPH_TO_MPS)


def label_speeds(graph, table: SpeedTable = DEFAULT_TABLE, overwrite: bool = False):
    """Copy of ``graph`` with speeds assigned from edge metadata.

    Edges that already carry a speed keep it unless ``overwrite``; edges with
    neither speed nor metadata are left untouched.
    """
    from .graph import RoadGraph

    edges = []
    for e in graph.edges:
        if e.metadata is not None and (overwrite or e.speed_mph is None):
            e = e.with_speed(assign_speed(e.metadata, table))
        edges.append(e)
    return RoadGraph(graph.nodes, tuple(edges), graph.transform)
