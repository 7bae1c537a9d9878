"""Tiles, chunks, the bitrate ladder and gaze/viewport geometry on the ERP plane.

Angular conventions
-------------------
Yaw is longitude in ``[-pi, pi)``, increasing counter-clockwise seen from above
(toward +y). Pitch is latitude in ``[-pi/2, pi/2]``, positive up (toward +z).
The equirectangular frame maps yaw ``-pi`` to the left edge (x = 0) and pitch
``+pi/2`` to the top edge (y = 0). Tiles are numbered row-major from the top
left: ``index = row * cols + col``.

Head orientation quaternions ``(w, x, y, z)`` rotate the forward axis +x; the
gaze is the direction of the rotated forward axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from tilestream.errors import InvalidInput

TileSet = frozenset
TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi

DEFAULT_FOV_YAW = math.radians(110.0)
DEFAULT_FOV_PITCH = math.radians(90.0)
DEFAULT_LADDER = (0.0, 1.0, 5.0, 8.0, 16.0, 35.0)

# overlaps thinner than this fraction of a tile are treated as touching only
_EDGE_EPS = 1e-9


def wrap_yaw(yaw: float) -> float:
    """Map an angle onto ``[-pi, pi)``."""
    w = (yaw + math.pi) % TWO_PI - math.pi
    if w >= math.pi:
        w -= TWO_PI
    return w


def clamp_pitch(pitch: float) -> float:
    return min(HALF_PI, max(-HALF_PI, pitch))


def angle_diff(a: float, b: float) -> float:
    """Signed smallest difference ``a - b`` in ``[-pi, pi)``."""
    return wrap_yaw(a - b)


@dataclass(frozen=True)
class TileGrid:
    rows: int = 8
    cols: int = 8
    frame_width_px: int = 3840
    frame_height_px: int = 1920

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise InvalidInput(f"grid needs rows, cols >= 1, got {self.rows}x{self.cols}")
        if self.frame_width_px < self.cols or self.frame_height_px < self.rows:
            raise InvalidInput("frame must be at least one pixel per tile")

    @property
    def n_tiles(self) -> int:
        return self.rows * self.cols

    def index(self, row: int, col: int) -> int:
        return row * self.cols + col

    def row_col(self, index: int) -> tuple[int, int]:
        return divmod(index, self.cols)

    def contains(self, index: int) -> bool:
        return 0 <= index < self.n_tiles

    def all_tiles(self) -> frozenset:
        return frozenset(range(self.n_tiles))

    def tile_of_pixel(self, px: int, py: int) -> int:
        col = px * self.cols // self.frame_width_px
        row = py * self.rows // self.frame_height_px
        return self.index(row, col)

    def tile_pixel_rect(self, index: int) -> tuple[int, int, int, int]:
        """Half-open pixel bounds ``(x0, y0, x1, y1)`` of a tile."""
        row, col = self.row_col(index)
        x0 = -(-col * self.frame_width_px // self.cols)
        x1 = -(-(col + 1) * self.frame_width_px // self.cols)
        y0 = -(-row * self.frame_height_px // self.rows)
        y1 = -(-(row + 1) * self.frame_height_px // self.rows)
        return x0, y0, x1, y1

    def tile_of_angle(self, yaw: float, pitch: float) -> int:
        u = (wrap_yaw(yaw) + math.pi) / TWO_PI
        v = (HALF_PI - clamp_pitch(pitch)) / math.pi
        col = min(int(u * self.cols), self.cols - 1)
        row = min(int(v * self.rows), self.rows - 1)
        return self.index(row, col)


@dataclass(frozen=True)
class ChunkTimeline:
    chunk_duration_s: float = 1.0
    chunk_count: int = 60
    frames_per_chunk: int = 30

    def __post_init__(self):
        if not self.chunk_duration_s > 0:
            raise InvalidInput("chunk_duration_s must be > 0")
        if self.chunk_count < 1:
            raise InvalidInput("chunk_count must be >= 1")
        if self.frames_per_chunk < 1:
            raise InvalidInput("frames_per_chunk must be >= 1")

    @property
    def frame_interval_s(self) -> float:
        return self.chunk_duration_s / self.frames_per_chunk

    @property
    def total_frames(self) -> int:
        return self.chunk_count * self.frames_per_chunk

    @property
    def duration_s(self) -> float:
        return self.chunk_count * self.chunk_duration_s

    def frame_times(self, chunk: int | None = None) -> np.ndarray:
        """Start times of every frame, or of one chunk's frames."""
        if chunk is None:
            idx = np.arange(self.total_frames)
        else:
            if not 0 <= chunk < self.chunk_count:
                raise InvalidInput(f"chunk {chunk} outside [0, {self.chunk_count})")
            idx = chunk * self.frames_per_chunk + np.arange(self.frames_per_chunk)
        return idx * self.frame_interval_s

    def chunk_frames(self, chunk: int) -> range:
        start = chunk * self.frames_per_chunk
        return range(start, start + self.frames_per_chunk)


@dataclass(frozen=True)
class BitrateLadder:
    """Selectable full-frame rates in Mbps; level 0 is "not downloaded"."""

    levels: tuple = DEFAULT_LADDER

    def __post_init__(self):
        levels = tuple(float(v) for v in self.levels)
        object.__setattr__(self, "levels", levels)
        if len(levels) < 2:
            raise InvalidInput("ladder needs at least two levels")
        if levels[0] != 0.0:
            raise InvalidInput("ladder level 0 must be 0 Mbps")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise InvalidInput("ladder must be strictly increasing")

    def __len__(self) -> int:
        return len(self.levels)

    def mbps(self, level: int) -> float:
        return self.levels[level]

    @property
    def top(self) -> float:
        return self.levels[-1]

    def tile_megabits(self, level: int, chunk_duration_s: float, n_tiles: int) -> float:
        """Size of one tile of one chunk; a level's rate covers the whole frame."""
        return self.levels[level] * chunk_duration_s / n_tiles


@dataclass(frozen=True)
class GazePoint:
    yaw: float = 0.0
    pitch: float = 0.0

    def __post_init__(self):
        if not (-math.pi <= self.yaw < math.pi):
            raise InvalidInput(f"yaw {self.yaw} outside [-pi, pi)")
        if not (-HALF_PI <= self.pitch <= HALF_PI):
            raise InvalidInput(f"pitch {self.pitch} outside [-pi/2, pi/2]")

    @classmethod
    def normalized(cls, yaw: float, pitch: float) -> GazePoint:
        """Build from unconstrained angles: wrap yaw, clamp pitch."""
        return cls(wrap_yaw(float(yaw)), clamp_pitch(float(pitch)))

    def unit_vector(self) -> np.ndarray:
        cp = math.cos(self.pitch)
        return np.array([cp * math.cos(self.yaw), cp * math.sin(self.yaw), math.sin(self.pitch)])

    def angular_distance(self, other: GazePoint) -> float:
        """Great-circle angle between two gaze directions."""
        dot = float(np.clip(self.unit_vector() @ other.unit_vector(), -1.0, 1.0))
        return math.acos(dot)


@dataclass(frozen=True)
class ViewportRect:
    center: GazePoint = field(default_factory=GazePoint)
    fov_yaw: float = DEFAULT_FOV_YAW
    fov_pitch: float = DEFAULT_FOV_PITCH

    def __post_init__(self):
        if not 0 < self.fov_yaw <= TWO_PI + 1e-12:
            raise InvalidInput("fov_yaw must be in (0, 2*pi]")
        if not 0 < self.fov_pitch <= math.pi + 1e-12:
            raise InvalidInput("fov_pitch must be in (0, pi]")


@dataclass(frozen=True)
class Box:
    """Object box in normalized ERP coordinates; may wrap past the right edge."""

    x: float
    y: float
    w: float
    h: float


def gaze_from_quaternion(q) -> GazePoint:
    """Gaze direction of a head orientation quaternion ``(w, x, y, z)``.

    Non-unit quaternions are normalized; a zero quaternion is rejected.
    """
    w, x, y, z = (float(c) for c in q)
    norm = math.sqrt(w * w + x * x + y * y + z * z)
    if not norm > 1e-12 or not math.isfinite(norm):
        raise InvalidInput("quaternion must be non-zero and finite")
    if abs(norm - 1.0) > 1e-6:
        w, x, y, z = w / norm, x / norm, y / norm, z / norm
    # first column of the rotation matrix: image of the forward axis
    fx = 1.0 - 2.0 * (y * y + z * z)
    fy = 2.0 * (x * y + w * z)
    fz = 2.0 * (x * z - w * y)
    yaw = math.atan2(fy, fx)
    pitch = math.atan2(fz, math.hypot(fx, fy))
    return GazePoint.normalized(yaw, pitch)


def _covered_cells(a: float, b: float, n: int) -> range:
    """Cells of a unit interval split in ``n`` that overlap ``[a, b]`` with positive length."""
    lo = math.floor(a * n + _EDGE_EPS)
    hi = math.ceil(b * n - _EDGE_EPS) - 1
    return range(max(lo, 0), min(hi, n - 1) + 1)


def _wrapped_cells(start: float, width: float, n: int) -> set[int]:
    """Cells overlapping a horizontally wrapping interval given in [0, 1) units."""
    if width >= 1.0 - _EDGE_EPS:
        return set(range(n))
    start = start % 1.0
    end = start + width
    cells = set(_covered_cells(start, min(end, 1.0), n))
    if end > 1.0:
        cells.update(_covered_cells(0.0, end - 1.0, n))
    return cells


def viewport_tiles(v: ViewportRect, g: TileGrid) -> frozenset:
    """Tiles whose angular rectangle overlaps the viewport rectangle."""
    u_start = (v.center.yaw - 0.5 * v.fov_yaw + math.pi) / TWO_PI
    cols = _wrapped_cells(u_start, v.fov_yaw / TWO_PI, g.cols)

    top = clamp_pitch(v.center.pitch + 0.5 * v.fov_pitch)
    bottom = clamp_pitch(v.center.pitch - 0.5 * v.fov_pitch)
    rows = _covered_cells((HALF_PI - top) / math.pi, (HALF_PI - bottom) / math.pi, g.rows)
    if len(rows) == 0:
        # sub-epsilon sliver against a pole still sees the polar row
        center_row = g.tile_of_angle(0.0, v.center.pitch) // g.cols
        rows = range(center_row, center_row + 1)
    return frozenset(g.index(r, c) for r in rows for c in cols)


def _pixel_span(a: float, b: float, size: int) -> tuple[int, int]:
    """Inclusive pixel range overlapping ``[a, b)`` (normalized) with positive area."""
    return math.floor(a * size), math.ceil(b * size) - 1


def box_tiles(box: Box, g: TileGrid) -> frozenset:
    """Tiles whose pixel rectangle shares positive area with ``box``.

    Boxes wrap horizontally across the seam; vertically they must fit the frame.
    """
    if box.w <= 0 or box.h <= 0:
        return frozenset()
    if box.x < 0 or box.y < 0 or box.x > 1 or box.w > 1 or box.y + box.h > 1 + 1e-12:
        raise InvalidInput(f"box {box} outside the normalized frame")
    W, H = g.frame_width_px, g.frame_height_px

    y0, y1 = _pixel_span(box.y, min(box.y + box.h, 1.0), H)
    if y1 < y0:
        return frozenset()
    rows = range(y0 * g.rows // H, y1 * g.rows // H + 1)

    segments = [(box.x, min(box.x + box.w, 1.0))]
    if box.x + box.w > 1.0:
        segments.append((0.0, box.x + box.w - 1.0))
    cols: set[int] = set()
    for a, b in segments:
        x0, x1 = _pixel_span(a, b, W)
        if x1 >= x0:
            cols.update(range(x0 * g.cols // W, x1 * g.cols // W + 1))
    return frozenset(g.index(r, c) for r in rows for c in cols)


@dataclass(frozen=True)
class GazeSeries:
    """Timestamped gaze samples (seconds, radians), time-ordered."""

    times: np.ndarray
    yaw: np.ndarray
    pitch: np.ndarray

    def __post_init__(self):
        for name in ("times", "yaw", "pitch"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.times.shape == self.yaw.shape == self.pitch.shape) or self.times.ndim != 1:
            raise InvalidInput("gaze series arrays must be 1-D and equally long")

    @classmethod
    def from_points(cls, times, points) -> GazeSeries:
        points = list(points)
        return cls(
            np.asarray(times, dtype=float),
            np.array([p.yaw for p in points], dtype=float),
            np.array([p.pitch for p in points], dtype=float),
        )

    def __len__(self) -> int:
        return len(self.times)

    def point(self, i: int) -> GazePoint:
        return GazePoint(float(self.yaw[i]), float(self.pitch[i]))

    def points(self) -> list[GazePoint]:
        return [self.point(i) for i in range(len(self))]

    def upto(self, time_s: float) -> GazeSeries:
        """Samples with ``times <= time_s``."""
        k = int(np.searchsorted(self.times, time_s, side="right"))
        return GazeSeries(self.times[:k], self.yaw[:k], self.pitch[:k])

    def between(self, start: float, stop: float) -> GazeSeries:
        """Samples with ``start <= times < stop``."""
        i = int(np.searchsorted(self.times, start, side="left"))
        k = int(np.searchsorted(self.times, stop, side="left"))
        return GazeSeries(self.times[i:k], self.yaw[i:k], self.pitch[i:k])
