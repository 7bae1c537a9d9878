"""Trace-driven streaming session: one bitrate decision per priority class.

Each chunk takes four decisions, Top first. A decision assigns one ladder
level to every tile of the deciding class, and those tiles download back to
back in priority order over the bandwidth trace. The playback buffer drains in
real time once playback has started. Stall time is charged to the tile in
flight. A chunk enters the buffer when its Low class has finished.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from tilestream.errors import ConfigError, InvalidInput
from tilestream.media import (
    DEFAULT_FOV_PITCH,
    DEFAULT_FOV_YAW,
    DEFAULT_LADDER,
    BitrateLadder,
    ChunkTimeline,
    GazeSeries,
    TileGrid,
)
from tilestream.prediction import AveragePredictor, PredictedViewport, gaze_tiles, prediction_accuracy, refine_viewport
from tilestream.priority import CLASS_ORDER, Priority, PriorityMap, WeightMatrix, classify_tiles, priority_order, uniform_top
from tilestream.qoe import ChunkPlayback, QoEReport, QoEWeights, frame_utilization, qoe, session_utilization
from tilestream.traces import BandwidthTrace, ObjectTrackSet, download_duration


@dataclass(frozen=True)
class EnvConfig:
    grid: TileGrid = field(default_factory=TileGrid)
    ladder: BitrateLadder = field(default_factory=lambda: BitrateLadder(DEFAULT_LADDER))
    timeline: ChunkTimeline = field(default_factory=ChunkTimeline)
    buffer_capacity_s: float = 5.0
    startup_s: float = 1.0
    history: int = 8
    decay: float = 0.5  # view-probability factor per priority step below Top
    fov_yaw: float = DEFAULT_FOV_YAW
    fov_pitch: float = DEFAULT_FOV_PITCH
    priority: bool = True  # False forces every tile into Top
    refine: bool = True  # False skips object-box refinement
    global_overlap: bool = False
    random_start: bool = False  # seed picks the starting offset into the trace
    qoe_weights: QoEWeights = field(default_factory=QoEWeights)

    def __post_init__(self):
        if self.buffer_capacity_s < self.timeline.chunk_duration_s:
            raise ConfigError("buffer capacity must hold at least one chunk")
        if not self.startup_s > 0:
            raise ConfigError("startup threshold must be > 0")
        if self.history < 1:
            raise ConfigError("throughput history length must be >= 1")
        if not 0 <= self.decay <= 1:
            raise ConfigError("view-probability decay must lie in [0, 1]")


@dataclass(frozen=True)
class SessionState:
    h: np.ndarray  # throughput of the last x tile downloads (Mbps)
    sigma: np.ndarray  # their download times (s)
    p: np.ndarray  # per-tile view probability
    q: np.ndarray  # selectable ladder rates (Mbps)
    l: np.ndarray  # last level index chosen per class, Top first
    w: np.ndarray  # tile count per class, Top first
    alpha: np.ndarray  # tiles not yet downloaded per class, Top first
    b: float  # buffer occupancy (s)
    deciding: Priority
    chunk: int


@dataclass(frozen=True)
class DownloadRecord:
    chunk: int
    tile: int
    priority: Priority
    level: int
    megabits: float
    start_s: float
    duration_s: float
    stall_s: float


@dataclass(frozen=True)
class WaitRecord:
    chunk: int
    start_s: float
    duration_s: float


@dataclass(frozen=True)
class StepOutcome:
    state: SessionState
    reward: float
    playback: ChunkPlayback | None = None
    report: QoEReport | None = None
    done: bool = False


@dataclass(frozen=True)
class ChunkPlan:
    """Everything about a chunk that does not depend on the agent's actions."""

    viewport: PredictedViewport
    priority_map: PriorityMap
    weights: WeightMatrix
    order: tuple  # download order of all tiles
    class_tiles: tuple  # per class, Top first: its tiles in download order
    view_probability: np.ndarray
    viewed: np.ndarray  # actual (frames, tiles) indicator
    accuracy: float


def view_probability(classes: PriorityMap, decay: float = 0.5) -> np.ndarray:
    """1 for Top tiles, ``decay`` for Top-Mid, ``decay**2`` for Mid-Low, 0 for Low."""
    table = {Priority.TOP: 1.0, Priority.TOP_MID: decay, Priority.MID_LOW: decay**2, Priority.LOW: 0.0}
    return np.array([table[classes[t]] for t in range(classes.grid.n_tiles)])


def build_plan(config: EnvConfig, gaze: GazeSeries, tracks: ObjectTrackSet | None, predictor) -> list[ChunkPlan]:
    tl, g = config.timeline, config.grid
    if len(gaze) != tl.total_frames:
        raise ConfigError(f"gaze track has {len(gaze)} frames, timeline has {tl.total_frames}")
    plan = []
    for m in range(tl.chunk_count):
        if m == 0:
            history = GazeSeries(gaze.times[:1], gaze.yaw[:1], gaze.pitch[:1])
        else:
            history = gaze.upto(float(gaze.times[tl.chunk_frames(m - 1)[-1]]))
        gazes = predictor.predict_chunk(history, m, tl)
        base = gaze_tiles(gazes, g, config.fov_yaw, config.fov_pitch)
        pv = refine_viewport(
            base, tracks if config.refine else None, m, g, tl, config.global_overlap, gaze=gazes[-1]
        )
        classes, _ = classify_tiles(pv.base, pv.near_objects, pv.far_objects, g)
        pm, weights = (classes, classes.weights()) if config.priority else uniform_top(g)
        frames = tl.chunk_frames(m)
        viewed = np.zeros((len(frames), g.n_tiles))
        actual = set()
        for i, f in enumerate(frames):
            tiles = gaze_tiles([gaze.point(f)], g, config.fov_yaw, config.fov_pitch)
            viewed[i, sorted(tiles)] = 1.0
            actual |= tiles
        plan.append(
            ChunkPlan(
                pv,
                pm,
                weights,
                tuple(priority_order(pm)),
                tuple(tuple(t for t in priority_order(pm) if pm[t] == c) for c in CLASS_ORDER),
                view_probability(classes, config.decay),
                viewed,
                prediction_accuracy(pv.refined, actual),
            )
        )
    return plan


class StreamingEnv:
    """A replayable streaming session over fixed traces.

    The per-chunk plan (prediction, classification, actual viewport) is
    computed once and shared by every episode.
    """

    def __init__(
        self,
        config: EnvConfig,
        bandwidth: BandwidthTrace,
        gaze: GazeSeries,
        tracks: ObjectTrackSet | None = None,
        predictor=None,
    ):
        self.config = config
        self.bandwidth = bandwidth
        self.plan = build_plan(config, gaze, tracks, predictor or AveragePredictor())
        self._state: SessionState | None = None
        self.done = True

    @property
    def n_actions(self) -> int:
        return len(self.config.ladder)

    @property
    def state(self) -> SessionState:
        if self._state is None:
            raise InvalidInput("call reset() before using the environment")
        return self._state

    def reset(self, seed: int = 0) -> SessionState:
        cfg = self.config
        offset = 0.0
        if cfg.random_start:
            offset = float(np.random.default_rng(seed).uniform(0.0, self.bandwidth.period))
        self.clock = self.bandwidth.start + offset
        self.start_clock = self.clock
        self.buffer = 0.0
        self.playing = False
        self.chunk = 0
        self.cls = 0
        self.h = np.zeros(cfg.history)
        self.sigma = np.zeros(cfg.history)
        self.levels = np.zeros(4, dtype=int)
        self.tile_level = np.zeros(cfg.grid.n_tiles, dtype=int)
        self.tile_stall = np.zeros(cfg.grid.n_tiles)
        self.prev_playback: ChunkPlayback | None = None
        self.downloads: list[DownloadRecord] = []
        self.waits: list[WaitRecord] = []
        self.buffer_trace: list[float] = [0.0]
        self.chunk_rows: list[dict] = []
        self.reports: list[QoEReport] = []
        self.done = False
        self._state = self._observe()
        return self._state

    def _observe(self) -> SessionState:
        cfg = self.config
        plan = self.plan[self.chunk]
        w = np.array(plan.weights, dtype=int)
        alpha = w.copy()
        alpha[: self.cls] = 0
        return SessionState(
            h=self.h.copy(),
            sigma=self.sigma.copy(),
            p=plan.view_probability.copy(),
            q=np.array(cfg.ladder.levels, dtype=float),
            l=self.levels.copy(),
            w=w,
            alpha=alpha,
            b=self.buffer,
            deciding=CLASS_ORDER[self.cls],
            chunk=self.chunk,
        )

    def _download(self, tile: int, priority: Priority, level: int) -> None:
        cfg = self.config
        size = cfg.ladder.tile_megabits(level, cfg.timeline.chunk_duration_s, cfg.grid.n_tiles)
        duration = download_duration(self.bandwidth, self.clock, size)
        stall = 0.0
        if self.playing:
            stall = max(0.0, duration - self.buffer)
            self.buffer = max(0.0, self.buffer - duration)
        self.downloads.append(DownloadRecord(self.chunk, tile, priority, level, size, self.clock, duration, stall))
        self.clock += duration
        self.tile_level[tile] = level
        self.tile_stall[tile] = stall
        if size > 0:
            self.h[:-1] = self.h[1:]
            self.sigma[:-1] = self.sigma[1:]
            self.h[-1] = size / duration
            self.sigma[-1] = duration

    def _wait_for_room(self) -> None:
        cfg = self.config
        dur = cfg.timeline.chunk_duration_s
        if not self.playing and self.buffer + dur > cfg.buffer_capacity_s:
            self.playing = True  # the buffer is as full as it can get
        excess = self.buffer + dur - cfg.buffer_capacity_s
        if self.playing and excess > 0:
            self.waits.append(WaitRecord(self.chunk, self.clock, excess))
            self.clock += excess
            self.buffer = cfg.buffer_capacity_s - dur

    def step(self, action: int) -> StepOutcome:
        if self.done:
            raise InvalidInput("session is finished; call reset()")
        action = int(action)
        if not 0 <= action < self.n_actions:
            raise InvalidInput(f"action {action} outside 0..{self.n_actions - 1}")
        cfg = self.config
        plan = self.plan[self.chunk]
        priority = CLASS_ORDER[self.cls]
        if self.cls == 0:
            self._wait_for_room()
            self.tile_level[:] = 0
            self.tile_stall[:] = 0.0
        self.levels[self.cls] = action
        for tile in plan.class_tiles[self.cls]:
            self._download(tile, priority, action)
        self.buffer_trace.append(self.buffer)

        if self.cls < 3:
            self.cls += 1
            self._state = self._observe()
            return StepOutcome(self._state, 0.0)

        # the whole chunk has arrived; min() absorbs rounding after a wait to exactly cap - dur
        self.buffer = min(self.buffer + cfg.timeline.chunk_duration_s, cfg.buffer_capacity_s)
        if not self.playing and self.buffer >= cfg.startup_s:
            self.playing = True
        self.buffer_trace.append(self.buffer)
        bitrate = np.array([cfg.ladder.mbps(int(k)) for k in self.tile_level])
        playback = ChunkPlayback(bitrate, plan.viewed, self.tile_stall.copy())
        class_mbps = [cfg.ladder.mbps(int(k)) for k in self.levels]
        e = frame_utilization(plan.weights, class_mbps)
        report = qoe(playback, self.prev_playback, cfg.qoe_weights, e)
        self.prev_playback = playback
        self.reports.append(report)
        self.chunk_rows.append(
            {
                "chunk": self.chunk,
                "level_top": self.levels[0],
                "level_topmid": self.levels[1],
                "level_midlow": self.levels[2],
                "level_low": self.levels[3],
                "qoe1": report.qoe1,
                "qoe2": report.qoe2,
                "qoe3": report.qoe3,
                "qoe4": report.qoe4,
                "qoe": report.qoe,
                "rebuffer_s": report.qoe2,
                "buffer_s": self.buffer,
                "util_e": e,
            }
        )
        self.cls = 0
        if self.chunk + 1 == cfg.timeline.chunk_count:
            self.done = True
        else:
            self.chunk += 1
            self._state = self._observe()
        return StepOutcome(self._state, report.qoe, playback, report, self.done)

    # ---- session summaries ----------------------------------------------

    def session_qoe(self) -> float:
        return float(sum(r.qoe for r in self.reports))

    def session_utilization(self) -> float:
        f = self.config.timeline.frames_per_chunk
        return session_utilization(np.repeat([r.e for r in self.reports], f))

    def mean_accuracy(self) -> float:
        return float(np.mean([p.accuracy for p in self.plan]))


# ---- fixed policies ---------------------------------------------------------

class FixedLevelPolicy:
    """The same ladder level for every class of every chunk."""

    def __init__(self, level: int):
        self.level = int(level)
        self.name = f"fixed-level-{self.level}"

    def __call__(self, state: SessionState) -> int:
        return self.level


class GreedyBufferPolicy:
    """Highest level whose estimated class download fits a share of the buffer.

    Throughput is estimated as the mean of the nonzero history entries; with
    no history the lowest nonzero level is taken for Top and nothing else.
    """

    name = "greedy-buffer"
    shares = (0.6, 0.2, 0.1, 0.1)

    def __init__(self, chunk_duration_s: float = 1.0):
        self.chunk_duration_s = chunk_duration_s

    def __call__(self, state: SessionState) -> int:
        slot = state.deciding.slot
        seen = state.h[state.h > 0]
        if seen.size == 0:
            return 1 if slot == 0 else 0
        rate = float(seen.mean())
        budget = max(state.b, self.chunk_duration_s) * self.shares[slot]
        tiles = int(state.alpha[slot])
        n = len(state.p)
        best = 0
        for level, mbps in enumerate(state.q):
            if tiles * mbps * self.chunk_duration_s / n / rate <= budget:
                best = level
        return best


def run_policy(env: StreamingEnv, policy, seed: int = 0) -> float:
    """Play one session with ``policy`` and return the summed chunk QoE."""
    state = env.reset(seed)
    total = 0.0
    while True:
        out = env.step(policy(state))
        total += out.reward
        if out.done:
            return total
        state = out.state


def parse_fixed_policy(name: str, ladder: BitrateLadder, chunk_duration_s: float = 1.0):
    if name == "greedy-buffer":
        return GreedyBufferPolicy(chunk_duration_s)
    if name.startswith("fixed-level-"):
        try:
            level = int(name[len("fixed-level-") :])
        except ValueError:
            level = -1
        if not 0 <= level < len(ladder):
            raise ConfigError(f"policy {name!r}: level must be in 0..{len(ladder) - 1}")
        return FixedLevelPolicy(level)
    raise ConfigError(f"unknown policy {name!r}")
