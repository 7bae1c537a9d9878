"""Loading, validation, scaling and persistence of the simulator's input traces.

File formats
------------
bandwidth CSV
    header ``time_s,throughput_mbps``; one sample per line. Throughput holds from
    its timestamp until the next one. The final timestamp closes the trace and
    playback past it loops back to the first sample.
head trace CSV
    header ``time_s,qw,qx,qy,qz``; quaternions in the convention documented in
    :mod:`tilestream.media` (forward +x, up +z). Rows are normalized on load.
object tracks (JSON lines)
    ``{"frame": <int>, "boxes": [{"id": <int>, "x": .., "y": .., "w": .., "h": ..}]}``
    with coordinates normalized to the ERP frame.
saliency CSV
    one ``rows x cols`` block per frame, comma separated, blocks separated by a
    blank line. Values must lie in ``[0, 1]``.
saliency binary
    16-byte little-endian header ``<4sHHHHI`` = (magic ``b"SALG"``, version 1,
    rows, cols, reserved 0, frames) followed by ``frames*rows*cols`` float64
    values in frame, row, column order.
results CSV
    one row per chunk with :data:`RESULT_COLUMNS`.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from tilestream.errors import InvalidInput, TraceFormatError
from tilestream.media import (
    Box,
    ChunkTimeline,
    GazeSeries,
    TileGrid,
    gaze_from_quaternion,
)

BANDWIDTH_HEADER = ["time_s", "throughput_mbps"]
HEAD_HEADER = ["time_s", "qw", "qx", "qy", "qz"]
RESULT_COLUMNS = [
    "chunk",
    "level_top",
    "level_topmid",
    "level_midlow",
    "level_low",
    "qoe1",
    "qoe2",
    "qoe3",
    "qoe4",
    "qoe",
    "rebuffer_s",
    "buffer_s",
    "util_e",
]
SALIENCY_MAGIC = b"SALG"
SALIENCY_VERSION = 1
_SALIENCY_HEADER = struct.Struct("<4sHHHHI")


def _fmt(value: float) -> str:
    return repr(float(value))


@dataclass(frozen=True)
class BandwidthTrace:
    times: np.ndarray
    mbps: np.ndarray
    name: str = ""

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        mbps = np.asarray(self.mbps, dtype=float)
        if times.ndim != 1 or times.shape != mbps.shape:
            raise InvalidInput("bandwidth trace arrays must be 1-D and equally long")
        if len(times) < 2:
            raise InvalidInput("bandwidth trace needs at least 2 samples")
        if not np.all(np.isfinite(times)) or not np.all(np.isfinite(mbps)):
            raise InvalidInput("bandwidth trace contains non-finite values")
        if np.any(np.diff(times) <= 0):
            raise InvalidInput("bandwidth trace times must be strictly increasing")
        if np.any(mbps < 0):
            raise InvalidInput("bandwidth trace throughput must be >= 0")
        times.setflags(write=False)
        mbps.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "mbps", mbps)
        object.__setattr__(self, "_per_period", float(np.dot(mbps[:-1], np.diff(times))))

    def __len__(self) -> int:
        return len(self.times)

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def period(self) -> float:
        """Length of one loop of the trace."""
        return float(self.times[-1] - self.times[0])

    @property
    def megabits_per_period(self) -> float:
        return self._per_period

    def _locate(self, time_s: float) -> tuple[int, float]:
        """Split ``time_s`` into (completed loops, offset within the loop)."""
        if time_s < self.start:
            raise InvalidInput(f"time {time_s} precedes trace start {self.start}")
        elapsed = time_s - self.start
        loops = math.floor(elapsed / self.period)
        offset = elapsed - loops * self.period
        if offset >= self.period:  # rounding at an exact loop boundary
            loops, offset = loops + 1, 0.0
        return loops, offset

    def _segment(self, offset: float) -> int:
        return int(np.searchsorted(self.times, self.start + offset, side="right")) - 1


def throughput_at(t: BandwidthTrace, time_s: float) -> float:
    """Left-hold throughput at ``time_s``; the trace repeats past its end."""
    _, offset = t._locate(time_s)
    return float(t.mbps[t._segment(offset)])


def scale_trace(t: BandwidthTrace, factor: float) -> BandwidthTrace:
    if not factor > 0:
        raise InvalidInput(f"scale factor must be > 0, got {factor}")
    return BandwidthTrace(t.times.copy(), t.mbps * factor, t.name)


def offset_trace(t: BandwidthTrace, extra_mbps: float) -> BandwidthTrace:
    """Add a constant rate to every sample (the "+1 Mbps" style conditions)."""
    if extra_mbps < 0:
        raise InvalidInput("extra bandwidth must be >= 0")
    return BandwidthTrace(t.times.copy(), t.mbps + extra_mbps, t.name)


def download_duration(t: BandwidthTrace, start_s: float, megabits: float) -> float:
    """Seconds needed to receive ``megabits`` starting at ``start_s``.

    Integrates the left-hold throughput across segment and loop boundaries.
    """
    if megabits < 0:
        raise InvalidInput("download size must be >= 0")
    if megabits == 0:
        return 0.0
    per_loop = t.megabits_per_period
    if per_loop <= 0:
        raise InvalidInput("bandwidth trace delivers no data")
    loops, offset = t._locate(start_s)
    remaining = megabits
    elapsed = 0.0
    # skip whole loops without walking segments
    whole = math.floor(remaining / per_loop)
    if whole > 1:
        remaining -= (whole - 1) * per_loop
        elapsed += (whole - 1) * t.period
    i = t._segment(offset)
    n = len(t.times)
    while True:
        seg_end = float(t.times[i + 1] - t.start)
        span = seg_end - offset
        rate = float(t.mbps[i])
        if rate > 0 and rate * span >= remaining:
            return elapsed + remaining / rate
        remaining -= rate * span
        elapsed += span
        i += 1
        offset = seg_end
        if i == n - 1:
            i, offset = 0, 0.0


def delivered_megabits(t: BandwidthTrace, start_s: float, stop_s: float) -> float:
    """Integral of throughput over ``[start_s, stop_s]``."""
    if stop_s < start_s:
        raise InvalidInput("interval end precedes its start")

    def cumulative(time_s):
        loops, offset = t._locate(time_s)
        i = t._segment(offset)
        partial = float(np.dot(t.mbps[:i], np.diff(t.times[: i + 1])))
        partial += float(t.mbps[i]) * (offset - float(t.times[i] - t.start))
        return loops * t.megabits_per_period + partial

    return cumulative(stop_s) - cumulative(start_s)


def _read_csv_rows(path, header):
    path = Path(path)
    if not path.exists():
        raise TraceFormatError("file not found", path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise TraceFormatError("empty file", path, 1) from None
        if [c.strip() for c in first] != header:
            raise TraceFormatError(f"expected header {','.join(header)}", path, 1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise TraceFormatError(f"expected {len(header)} fields, got {len(row)}", path, lineno)
            try:
                values = [float(c) for c in row]
            except ValueError:
                raise TraceFormatError(f"non-numeric field in {row!r}", path, lineno) from None
            if not all(math.isfinite(v) for v in values):
                raise TraceFormatError("non-finite value", path, lineno)
            yield lineno, values


def _check_monotone(times, lines, path):
    for k in range(1, len(times)):
        if times[k] <= times[k - 1]:
            raise TraceFormatError("time is not strictly increasing", path, lines[k])


def load_bandwidth_trace(path) -> BandwidthTrace:
    rows = list(_read_csv_rows(path, BANDWIDTH_HEADER))
    lines = [r[0] for r in rows]
    times = [r[1][0] for r in rows]
    mbps = [r[1][1] for r in rows]
    _check_monotone(times, lines, path)
    for v, line in zip(mbps, lines):
        if v < 0:
            raise TraceFormatError("negative throughput", path, line)
    if len(times) < 2:
        raise TraceFormatError("bandwidth trace needs at least 2 samples", path)
    return BandwidthTrace(np.array(times), np.array(mbps), Path(path).stem)


def write_bandwidth_trace(path, t: BandwidthTrace) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(BANDWIDTH_HEADER) + "\n")
        for time_s, v in zip(t.times, t.mbps):
            fh.write(f"{_fmt(time_s)},{_fmt(v)}\n")


@dataclass(frozen=True)
class HeadTrace:
    times: np.ndarray
    quaternions: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        quats = np.asarray(self.quaternions, dtype=float)
        if times.ndim != 1 or quats.shape != (len(times), 4):
            raise InvalidInput("head trace needs times (N,) and quaternions (N, 4)")
        if len(times) == 0:
            raise InvalidInput("head trace is empty")
        if np.any(np.diff(times) <= 0):
            raise InvalidInput("head trace times must be strictly increasing")
        norms = np.linalg.norm(quats, axis=1)
        if np.any(norms < 1e-12) or not np.all(np.isfinite(norms)):
            raise InvalidInput("head trace contains a zero or non-finite quaternion")
        quats = quats / norms[:, None]
        times.setflags(write=False)
        quats.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "quaternions", quats)

    def __len__(self) -> int:
        return len(self.times)

    def gaze_series(self) -> GazeSeries:
        points = [gaze_from_quaternion(q) for q in self.quaternions]
        return GazeSeries.from_points(self.times, points)


def load_head_trace(path) -> HeadTrace:
    rows = list(_read_csv_rows(path, HEAD_HEADER))
    if not rows:
        raise TraceFormatError("head trace is empty", path)
    lines = [r[0] for r in rows]
    times = [r[1][0] for r in rows]
    _check_monotone(times, lines, path)
    quats = np.array([r[1][1:] for r in rows])
    for q, line in zip(quats, lines):
        if np.linalg.norm(q) < 1e-12:
            raise TraceFormatError("zero quaternion", path, line)
    return HeadTrace(np.array(times), quats)


def write_head_trace(path, h: HeadTrace) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(HEAD_HEADER) + "\n")
        for time_s, q in zip(h.times, h.quaternions):
            fh.write(",".join(_fmt(v) for v in (time_s, *q)) + "\n")


def gaze_track(h: HeadTrace, timeline: ChunkTimeline) -> GazeSeries:
    """One gaze sample per frame, taken from the temporally nearest head sample.

    Frame times are offsets from the first head sample; a trace shorter than
    the video is looped. Ties pick the earlier sample.
    """
    if len(h) == 0:
        raise InvalidInput("head trace is empty")
    frame_times = timeline.frame_times()
    span = float(h.times[-1] - h.times[0])
    if span > 0:
        rel = np.where(frame_times <= span, frame_times, np.mod(frame_times, span))
    else:
        rel = np.zeros_like(frame_times)
    query = h.times[0] + rel
    right = np.searchsorted(h.times, query, side="left")
    right = np.clip(right, 0, len(h) - 1)
    left = np.clip(right - 1, 0, len(h) - 1)
    pick_left = np.abs(query - h.times[left]) <= np.abs(h.times[right] - query)
    nearest = np.where(pick_left, left, right)
    gaze = h.gaze_series()
    return GazeSeries(frame_times, gaze.yaw[nearest], gaze.pitch[nearest])


def check_box(box: Box) -> None:
    """Raise unless ``box`` satisfies the box-to-tile mapping preconditions."""
    values = (box.x, box.y, box.w, box.h)
    if not all(math.isfinite(v) for v in values):
        raise InvalidInput("box has non-finite coordinates")
    if box.x < 0 or box.x > 1 or box.y < 0 or box.w > 1 or box.y + box.h > 1 + 1e-12:
        raise InvalidInput(f"box {values} outside the normalized frame")


@dataclass(frozen=True)
class ObjectTrackSet:
    """Per-frame object boxes: ``frames[frame] = ((object_id, Box), ...)``."""

    frames: dict = field(default_factory=dict)

    def boxes(self, frame: int) -> tuple:
        return self.frames.get(frame, ())

    def boxes_in(self, frames) -> list:
        """``(frame, object_id, Box)`` for every box in the given frames."""
        out = []
        for f in frames:
            out.extend((f, oid, box) for oid, box in self.boxes(f))
        return out

    @property
    def frame_count(self) -> int:
        return max(self.frames, default=-1) + 1


def load_object_tracks(path, total_frames: int | None = None) -> ObjectTrackSet:
    path = Path(path)
    if not path.exists():
        raise TraceFormatError("file not found", path)
    frames: dict = {}
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                frame = rec["frame"]
                boxes = rec["boxes"]
                if not isinstance(frame, int) or isinstance(frame, bool):
                    raise TypeError("frame must be an integer")
                parsed = tuple(
                    (int(b["id"]), Box(float(b["x"]), float(b["y"]), float(b["w"]), float(b["h"])))
                    for b in boxes
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise TraceFormatError(f"bad track record: {exc}", path, lineno) from None
            if frame < 0 or (total_frames is not None and frame >= total_frames):
                raise TraceFormatError(f"frame {frame} outside the video", path, lineno)
            if frame in frames:
                raise TraceFormatError(f"duplicate record for frame {frame}", path, lineno)
            for _, box in parsed:
                try:
                    check_box(box)
                except InvalidInput as exc:
                    raise TraceFormatError(str(exc), path, lineno) from None
            frames[frame] = parsed
    return ObjectTrackSet(frames)


def write_object_tracks(path, tracks: ObjectTrackSet) -> None:
    with open(path, "w") as fh:
        for frame in sorted(tracks.frames):
            boxes = [
                {"id": oid, "x": b.x, "y": b.y, "w": b.w, "h": b.h} for oid, b in tracks.frames[frame]
            ]
            fh.write(json.dumps({"frame": frame, "boxes": boxes}) + "\n")


@dataclass(frozen=True)
class SaliencyGrid:
    """Tile-resolution saliency, shape ``(frames, rows, cols)``, values in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or 0 in v.shape:
            raise InvalidInput("saliency must have shape (frames, rows, cols)")
        if not np.all(np.isfinite(v)) or v.min() < 0 or v.max() > 1:
            raise InvalidInput("saliency values must lie in [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape[1], self.values.shape[2]

    def check_grid(self, g: TileGrid) -> None:
        if self.shape != (g.rows, g.cols):
            raise InvalidInput(f"saliency is {self.shape}, grid is {(g.rows, g.cols)}")

    def chunk_feature(self, timeline: ChunkTimeline, chunk: int) -> np.ndarray:
        """Saliency averaged over a chunk's frames, flattened row-major."""
        idx = np.array(timeline.chunk_frames(chunk)) % self.frames
        return self.values[idx].mean(axis=0).ravel()


def load_saliency(path, grid: TileGrid | None = None) -> SaliencyGrid:
    """Read either saliency format, detected by the binary magic."""
    path = Path(path)
    if not path.exists():
        raise TraceFormatError("file not found", path)
    raw = path.read_bytes()
    if raw[:4] == SALIENCY_MAGIC:
        sal = _parse_saliency_binary(raw, path)
    else:
        sal = _parse_saliency_csv(raw.decode(), path)
    if grid is not None:
        try:
            sal.check_grid(grid)
        except InvalidInput as exc:
            raise TraceFormatError(str(exc), path) from None
    return sal


def _parse_saliency_binary(raw: bytes, path) -> SaliencyGrid:
    if len(raw) < _SALIENCY_HEADER.size:
        raise TraceFormatError("truncated saliency header", path)
    magic, version, rows, cols, _, frames = _SALIENCY_HEADER.unpack_from(raw)
    if version != SALIENCY_VERSION:
        raise TraceFormatError(f"unsupported saliency version {version}", path)
    expected = _SALIENCY_HEADER.size + 8 * frames * rows * cols
    if len(raw) != expected:
        raise TraceFormatError(f"expected {expected} bytes, found {len(raw)}", path)
    values = np.frombuffer(raw, dtype="<f8", offset=_SALIENCY_HEADER.size).reshape(frames, rows, cols)
    try:
        return SaliencyGrid(values.astype(float))
    except InvalidInput as exc:
        raise TraceFormatError(str(exc), path) from None


def _parse_saliency_csv(text: str, path) -> SaliencyGrid:
    blocks: list[list[list[float]]] = [[]]
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            if blocks[-1]:
                blocks.append([])
            continue
        try:
            row = [float(c) for c in line.split(",")]
        except ValueError:
            raise TraceFormatError("non-numeric saliency value", path, lineno) from None
        if any(not (0.0 <= v <= 1.0) for v in row):
            raise TraceFormatError("saliency value outside [0, 1]", path, lineno)
        if blocks[-1] and len(row) != len(blocks[-1][0]):
            raise TraceFormatError("ragged saliency row", path, lineno)
        blocks[-1].append(row)
    if not blocks[-1]:
        blocks.pop()
    if not blocks:
        raise TraceFormatError("empty saliency file", path)
    if len({(len(b), len(b[0])) for b in blocks}) != 1:
        raise TraceFormatError("saliency frames differ in shape", path)
    return SaliencyGrid(np.array(blocks))


def write_saliency_csv(path, sal: SaliencyGrid) -> None:
    with open(path, "w") as fh:
        for k, frame in enumerate(sal.values):
            if k:
                fh.write("\n")
            for row in frame:
                fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_saliency_binary(path, sal: SaliencyGrid) -> None:
    frames, rows, cols = sal.values.shape
    header = _SALIENCY_HEADER.pack(SALIENCY_MAGIC, SALIENCY_VERSION, rows, cols, 0, frames)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(sal.values, dtype="<f8").tobytes())


def write_results(path, rows) -> None:
    """Write per-chunk result rows (mappings keyed by :data:`RESULT_COLUMNS`)."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(RESULT_COLUMNS) + "\n")
        for row in rows:
            cells = []
            for col in RESULT_COLUMNS:
                v = row[col]
                cells.append(str(int(v)) if col == "chunk" or col.startswith("level_") else _fmt(v))
            fh.write(",".join(cells) + "\n")


def read_results(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RESULT_COLUMNS:
            raise TraceFormatError("unexpected results header", path, 1)
        out = []
        for row in reader:
            out.append(
                {
                    k: int(v) if k == "chunk" or k.startswith("level_") else float(v)
                    for k, v in row.items()
                }
            )
        return out


# ---- conversion of third-party formats -------------------------------------

def convert_hsdpa_log(lines) -> BandwidthTrace:
    """Parse a raw HSDPA throughput log.

    Each line holds ``unix_ts ms_since_start lat lon bytes ms_since_previous``;
    the sample time is ``ms_since_start / 1000`` and the rate is the bytes
    received over the elapsed interval.
    """
    times, mbps = [], []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) < 6:
            raise TraceFormatError("expected 6 whitespace-separated fields", line=lineno)
        try:
            elapsed_ms = float(parts[1])
            n_bytes = float(parts[4])
            interval_ms = float(parts[5])
        except ValueError:
            raise TraceFormatError("non-numeric field", line=lineno) from None
        if interval_ms <= 0:
            raise TraceFormatError("non-positive measurement interval", line=lineno)
        times.append(elapsed_ms / 1000.0)
        mbps.append(n_bytes * 8.0 / interval_ms / 1000.0)
    try:
        return BandwidthTrace(np.array(times), np.array(mbps))
    except InvalidInput as exc:
        raise TraceFormatError(str(exc)) from None


def convert_cooked_log(lines) -> BandwidthTrace:
    """Parse ``time_s throughput_mbps`` pairs separated by whitespace or commas."""
    times, mbps = [], []
    for lineno, line in enumerate(lines, start=1):
        parts = line.replace(",", " ").split()
        if not parts:
            continue
        try:
            times.append(float(parts[0]))
            mbps.append(float(parts[1]))
        except (ValueError, IndexError):
            raise TraceFormatError("expected two numeric fields", line=lineno) from None
    try:
        return BandwidthTrace(np.array(times), np.array(mbps))
    except InvalidInput as exc:
        raise TraceFormatError(str(exc)) from None


# Basis change from a y-up, -z-forward, +x-right frame (OpenGL style) into
# the native forward +x, left +y, up +z frame.
_YUP_TO_NATIVE = np.array([[0.0, 0.0, -1.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
HEAD_CONVENTIONS = ("native", "yup")


def _quat_mul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def _matrix_to_quat(m) -> np.ndarray:
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    return np.array(q)


def convert_head_rows(rows, order: str = "wxyz", convention: str = "native", time_scale: float = 1.0) -> HeadTrace:
    """Normalize foreign head-log rows ``(time, q0, q1, q2, q3)``.

    ``order`` names the component order of the input quaternion and
    ``convention`` its axis frame; output is always native ``(w, x, y, z)``.
    """
    if order not in ("wxyz", "xyzw"):
        raise InvalidInput(f"unknown quaternion order {order!r}")
    if convention not in HEAD_CONVENTIONS:
        raise InvalidInput(f"unknown axis convention {convention!r}")
    basis = _matrix_to_quat(_YUP_TO_NATIVE) if convention == "yup" else None
    times, quats = [], []
    for row in rows:
        t, a, b, c, d = (float(v) for v in row)
        q = np.array([a, b, c, d]) if order == "wxyz" else np.array([d, a, b, c])
        if basis is not None:
            conj = basis * np.array([1.0, -1.0, -1.0, -1.0])
            q = _quat_mul(_quat_mul(basis, q), conj)
        times.append(t * time_scale)
        quats.append(q)
    return HeadTrace(np.array(times), np.array(quats))
