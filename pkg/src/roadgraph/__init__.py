"""Road-graph extraction from segmentation masks, with speed inference and graph metrics."""

from .graph import GeoTransform, RoadEdge, RoadGraph, RoadMetadata, RoadNode, RoadType
from .speed import assign_speed, bin_center, channel_to_speed, speed_to_channel, travel_time

__version__ = "0.1.0"

__all__ = [
    "GeoTransform",
    "RoadEdge",
    "RoadGraph",
    "RoadMetadata",
    "RoadNode",
    "RoadType",
    "assign_speed",
    "bin_center",
    "channel_to_speed",
    "speed_to_channel",
    "travel_time",
]
