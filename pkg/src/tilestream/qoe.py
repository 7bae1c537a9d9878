"""Per-chunk QoE components, the weighted scalar QoE and bitrate utilization.

The viewport-quality term divides the bitrate landing in the viewport by the
bitrate of all delivered tiles, per frame, then scales by ``1/n`` (``n`` the tile
count). It is used exactly in that form; :func:`viewport_quality_normalized`
is a separate, clearly named sanity metric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tilestream.errors import InvalidInput
from tilestream.priority import WeightMatrix


@dataclass(frozen=True)
class ChunkPlayback:
    """What was delivered and watched for one chunk.

    ``bitrate`` is B (Mbps per tile), ``viewed`` is O (frames x tiles, 0/1) and
    ``rebuffer`` is d (stall seconds charged to each tile).
    """

    bitrate: np.ndarray
    viewed: np.ndarray
    rebuffer: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bitrate, dtype=float)
        o = np.asarray(self.viewed, dtype=float)
        d = np.asarray(self.rebuffer, dtype=float)
        if b.ndim != 1 or d.shape != b.shape or o.ndim != 2 or o.shape[1] != b.shape[0]:
            raise InvalidInput("playback needs B (n,), O (f, n) and d (n,)")
        if o.shape[0] < 1:
            raise InvalidInput("playback needs at least one frame")
        if np.any(b < 0) or np.any(d < 0):
            raise InvalidInput("bitrates and rebuffer times must be >= 0")
        if not np.all((o == 0) | (o == 1)):
            raise InvalidInput("viewport indicator must be binary")
        for name, arr in (("bitrate", b), ("viewed", o), ("rebuffer", d)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_tiles(self) -> int:
        return self.bitrate.shape[0]

    @property
    def n_frames(self) -> int:
        return self.viewed.shape[0]


@dataclass(frozen=True)
class QoEWeights:
    quality: float = 1.0
    rebuffer: float = 1.0
    intra_smoothness: float = 1.0
    inter_smoothness: float = 1.0

    def __post_init__(self):
        if any(w < 0 for w in self):
            raise InvalidInput("QoE weights must be >= 0")

    def __iter__(self):
        return iter((self.quality, self.rebuffer, self.intra_smoothness, self.inter_smoothness))


PRESET_WEIGHTS = {
    "default": QoEWeights(1, 1, 1, 1),
    "rebuffer-averse": QoEWeights(1, 4, 1, 1),
    "smoothness-averse": QoEWeights(1, 1, 4, 4),
}


@dataclass(frozen=True)
class QoEReport:
    qoe1: float
    qoe2: float
    qoe3: float
    qoe4: float
    qoe: float
    e: float = 0.0


def frame_ratios(p: ChunkPlayback) -> np.ndarray:
    """Per-frame share of delivered bitrate that falls inside the viewport."""
    total = p.bitrate.sum()
    if total <= 0:
        return np.zeros(p.n_frames)
    return (p.viewed @ p.bitrate) / total


def viewport_quality(p: ChunkPlayback) -> float:
    return float(frame_ratios(p).sum() / p.n_tiles)


def viewport_quality_normalized(p: ChunkPlayback) -> float:
    """Mean bitrate of viewed tiles, averaged over frames (Mbps)."""
    per_frame = []
    for row in p.viewed:
        k = row.sum()
        per_frame.append(float(row @ p.bitrate / k) if k else 0.0)
    return float(np.mean(per_frame))


def rebuffer_time(p: ChunkPlayback) -> float:
    return float(p.rebuffer.sum())


def intra_chunk_smoothness(p: ChunkPlayback) -> float:
    # population deviation: a single-frame chunk has zero variation
    return float(np.std(frame_ratios(p)) / p.n_tiles)


def inter_chunk_smoothness(p: ChunkPlayback, prev: ChunkPlayback | None) -> float:
    if prev is None:
        return 0.0
    return float(abs(frame_ratios(p).sum() - frame_ratios(prev).sum()) / p.n_tiles)


def qoe(p: ChunkPlayback, prev: ChunkPlayback | None, w: QoEWeights = QoEWeights(), e: float = 0.0) -> QoEReport:
    q1 = viewport_quality(p)
    q2 = rebuffer_time(p)
    q3 = intra_chunk_smoothness(p)
    q4 = inter_chunk_smoothness(p, prev)
    total = w.quality * q1 - w.rebuffer * q2 - w.intra_smoothness * q3 - w.inter_smoothness * q4
    return QoEReport(q1, q2, q3, q4, total, e)


def frame_utilization(weights: WeightMatrix, class_mbps) -> float:
    """Share of bitrate spent on the Top and Top-Mid classes."""
    w = np.asarray(weights, dtype=float)
    b = np.asarray(class_mbps, dtype=float)
    if w.shape != (4,) or b.shape != (4,):
        raise InvalidInput("utilization needs four class counts and four class rates")
    total = float(w @ b)
    if total <= 0:
        return 0.0
    return float((w[0] * b[0] + w[1] * b[1]) / total)


def session_utilization(e_values) -> float:
    """Mean of per-frame utilizations over every frame of every chunk."""
    e = np.asarray(e_values, dtype=float)
    if e.size == 0:
        raise InvalidInput("session utilization needs at least one frame")
    return float(e.mean())
