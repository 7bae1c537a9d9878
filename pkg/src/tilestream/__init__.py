"""Trace-driven simulation of priority-tiled 360-degree video streaming."""

from tilestream.errors import ConfigError, InvalidInput, TraceFormatError, TrainingError
from tilestream.media import (
    BitrateLadder,
    Box,
    ChunkTimeline,
    GazePoint,
    TileGrid,
    ViewportRect,
    box_tiles,
    gaze_from_quaternion,
    viewport_tiles,
)

__version__ = "0.1.0"

__all__ = [
    "BitrateLadder",
    "Box",
    "ChunkTimeline",
    "ConfigError",
    "GazePoint",
    "InvalidInput",
    "TileGrid",
    "TraceFormatError",
    "TrainingError",
    "ViewportRect",
    "box_tiles",
    "gaze_from_quaternion",
    "viewport_tiles",
]
