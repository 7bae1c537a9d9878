"""Viewport prediction: baselines, a small LSTM predictor and object-box refinement."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from tilestream.errors import ConfigError, InvalidInput, TrainingError
from tilestream.media import (
    DEFAULT_FOV_PITCH,
    DEFAULT_FOV_YAW,
    ChunkTimeline,
    GazePoint,
    GazeSeries,
    TileGrid,
    ViewportRect,
    box_tiles,
    viewport_tiles,
)
from tilestream.traces import ObjectTrackSet, SaliencyGrid


# ---- baselines --------------------------------------------------------------

def _window(history: GazeSeries, window_s: float) -> GazeSeries:
    if len(history) == 0:
        raise InvalidInput("gaze history is empty")
    t_last = float(history.times[-1])
    return history.between(t_last - window_s, math.inf)


def predict_average(history: GazeSeries, window_s: float = 2.0) -> GazePoint:
    """Circular mean of yaw and arithmetic mean of pitch over the last ``window_s``."""
    win = _window(history, window_s)
    if len(win) == 0:
        raise InvalidInput("no gaze samples inside the averaging window")
    yaw = math.atan2(float(np.sin(win.yaw).sum()), float(np.cos(win.yaw).sum()))
    return GazePoint.normalized(yaw, float(win.pitch.mean()))


@dataclass(frozen=True)
class LinearForecast:
    gaze: GazePoint
    fallback: bool = False  # True when the fit was degenerate and the mean was used


def predict_linear(history: GazeSeries, window_s: float = 2.0, horizon_s: float = 1.0) -> LinearForecast:
    """Least-squares line per angle over the window, extrapolated ``horizon_s`` past the last sample."""
    win = _window(history, window_s)
    t = win.times
    spread = float(((t - t.mean()) ** 2).sum()) if len(t) else 0.0
    if len(t) < 2 or spread == 0.0:
        return LinearForecast(predict_average(history, window_s), fallback=True)
    yaw = np.unwrap(win.yaw)
    t_target = float(t[-1]) + horizon_s
    tc = t - t.mean()

    def extrapolate(y):
        slope = float((tc * (y - y.mean())).sum()) / spread
        return float(y.mean()) + slope * (t_target - float(t.mean()))

    return LinearForecast(GazePoint.normalized(extrapolate(yaw), extrapolate(win.pitch)))


# ---- recurrent predictor ----------------------------------------------------

def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class PredictorParameters:
    """Stacked LSTM weights plus a linear head to (yaw, pitch).

    Layer ``k`` owns ``Wx{k}`` (4H x in), ``Wh{k}`` (4H x H) and ``b{k}`` (4H,)
    with gates ordered input, forget, candidate, output.
    """

    arrays: dict = field(default_factory=dict)

    @property
    def n_layers(self) -> int:
        return sum(1 for k in self.arrays if k.startswith("Wx"))

    @property
    def input_size(self) -> int:
        return self.arrays["Wx0"].shape[1]

    @classmethod
    def initialize(cls, input_size: int, hidden=(8, 8), scale: float = 0.1, seed: int = 0) -> PredictorParameters:
        rng = np.random.default_rng(seed)
        arrays = {}
        prev = input_size
        for k, h in enumerate(hidden):
            arrays[f"Wx{k}"] = rng.uniform(-scale, scale, (4 * h, prev))
            arrays[f"Wh{k}"] = rng.uniform(-scale, scale, (4 * h, h))
            arrays[f"b{k}"] = rng.uniform(-scale, scale, 4 * h)
            prev = h
        arrays["W_out"] = rng.uniform(-scale, scale, (2, prev))
        arrays["b_out"] = rng.uniform(-scale, scale, 2)
        return cls(arrays)

    @classmethod
    def zeros_like(cls, other: PredictorParameters) -> PredictorParameters:
        return cls({k: np.zeros_like(v) for k, v in other.arrays.items()})

    def copy(self) -> PredictorParameters:
        return PredictorParameters({k: v.copy() for k, v in self.arrays.items()})

    def validate(self) -> None:
        layers = self.n_layers
        if layers < 1:
            raise InvalidInput("predictor needs at least one recurrent layer")
        prev = self.input_size
        for k in range(layers):
            four_h = self.arrays[f"Wx{k}"].shape[0]
            h = four_h // 4
            if (
                four_h % 4
                or self.arrays[f"Wx{k}"].shape != (four_h, prev)
                or self.arrays[f"Wh{k}"].shape != (four_h, h)
                or self.arrays[f"b{k}"].shape != (four_h,)
            ):
                raise InvalidInput(f"inconsistent shapes in recurrent layer {k}")
            prev = h
        if self.arrays["W_out"].shape != (2, prev) or self.arrays["b_out"].shape != (2,):
            raise InvalidInput("inconsistent output head shape")
        if not all(np.all(np.isfinite(v)) for v in self.arrays.values()):
            raise InvalidInput("predictor parameters must be finite")


@dataclass(frozen=True)
class PredictorInput:
    """Gaze history (one sample per step) and the matching saliency features.

    Step ``k`` pairs gaze sample ``k`` with the saliency of the chunk after it,
    so the last step carries the target chunk's saliency.
    """

    gaze: GazeSeries
    saliency: np.ndarray  # (steps, rows*cols)

    def __post_init__(self):
        s = np.asarray(self.saliency, dtype=float)
        if len(self.gaze) == 0:
            raise InvalidInput("predictor history is empty")
        if s.ndim != 2 or s.shape[0] != len(self.gaze):
            raise InvalidInput("saliency features must have one row per history step")
        object.__setattr__(self, "saliency", s)

    def features(self) -> np.ndarray:
        g = self.gaze
        return np.column_stack([np.sin(g.yaw), np.cos(g.yaw), g.pitch, self.saliency])


def _lstm_forward(params: PredictorParameters, x: np.ndarray):
    caches = []
    seq = x
    for k in range(params.n_layers):
        Wx, Wh, b = params.arrays[f"Wx{k}"], params.arrays[f"Wh{k}"], params.arrays[f"b{k}"]
        H = Wh.shape[1]
        h = np.zeros(H)
        c = np.zeros(H)
        out = np.empty((len(seq), H))
        steps = []
        for t, xt in enumerate(seq):
            z = Wx @ xt + Wh @ h + b
            i, f, g, o = _sigmoid(z[:H]), _sigmoid(z[H : 2 * H]), np.tanh(z[2 * H : 3 * H]), _sigmoid(z[3 * H :])
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            h_new = o * tc
            steps.append((xt, h, c, i, f, g, o, tc))
            h, c = h_new, c_new
            out[t] = h
        caches.append(steps)
        seq = out
    y = params.arrays["W_out"] @ seq[-1] + params.arrays["b_out"]
    return y, seq[-1], caches


def _lstm_backward(params: PredictorParameters, dy: np.ndarray, h_top: np.ndarray, caches) -> dict:
    grads = {k: np.zeros_like(v) for k, v in params.arrays.items()}
    grads["W_out"] = np.outer(dy, h_top)
    grads["b_out"] = dy.copy()
    n_steps = len(caches[0])
    d_out = np.zeros((n_steps, params.arrays["W_out"].shape[1]))
    d_out[-1] = params.arrays["W_out"].T @ dy
    for k in reversed(range(params.n_layers)):
        Wx, Wh = params.arrays[f"Wx{k}"], params.arrays[f"Wh{k}"]
        H = Wh.shape[1]
        dh_next = np.zeros(H)
        dc_next = np.zeros(H)
        d_in = np.zeros((n_steps, Wx.shape[1]))
        for t in reversed(range(n_steps)):
            xt, h_prev, c_prev, i, f, g, o, tc = caches[k][t]
            dh = d_out[t] + dh_next
            do = dh * tc
            dc = dc_next + dh * o * (1.0 - tc**2)
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dz = np.concatenate([di * i * (1 - i), df * f * (1 - f), dg * (1 - g**2), do * o * (1 - o)])
            grads[f"Wx{k}"] += np.outer(dz, xt)
            grads[f"Wh{k}"] += np.outer(dz, h_prev)
            grads[f"b{k}"] += dz
            d_in[t] = Wx.T @ dz
            dh_next = Wh.T @ dz
            dc_next = dc * f
        d_out = d_in
    return grads


def recurrent_raw(inp: PredictorInput, params: PredictorParameters) -> np.ndarray:
    """Unconstrained (yaw, pitch) output of the network."""
    x = inp.features()
    if x.shape[1] != params.input_size:
        raise ConfigError(f"input has {x.shape[1]} features, network expects {params.input_size}")
    y, _, _ = _lstm_forward(params, x)
    return y


def predict_recurrent(inp: PredictorInput, params: PredictorParameters) -> GazePoint:
    y = recurrent_raw(inp, params)
    if not np.all(np.isfinite(y)):
        raise InvalidInput("recurrent predictor produced a non-finite output")
    return GazePoint.normalized(y[0], y[1])


def _direction(yaw, pitch):
    cp = np.cos(pitch)
    return np.array([cp * np.cos(yaw), cp * np.sin(yaw), np.sin(pitch)])


def gaze_loss(y: np.ndarray, target: GazePoint) -> tuple[float, np.ndarray]:
    """Squared chord between predicted and true directions, ``2 - 2 cos(angle)``.

    Monotone in the angular error and smooth across the yaw seam. Returns the
    loss and its gradient w.r.t. the raw (yaw, pitch) output.
    """
    yaw, pitch = float(y[0]), float(y[1])
    u_true = target.unit_vector()
    u = _direction(yaw, pitch)
    du_dyaw = np.array([-np.cos(pitch) * np.sin(yaw), np.cos(pitch) * np.cos(yaw), 0.0])
    du_dpitch = np.array([-np.sin(pitch) * np.cos(yaw), -np.sin(pitch) * np.sin(yaw), np.cos(pitch)])
    loss = 2.0 - 2.0 * float(u @ u_true)
    return loss, np.array([-2.0 * float(du_dyaw @ u_true), -2.0 * float(du_dpitch @ u_true)])


def dataset_loss_and_grad(params: PredictorParameters, dataset) -> tuple[float, dict]:
    total = 0.0
    grads = {k: np.zeros_like(v) for k, v in params.arrays.items()}
    for inp, target in dataset:
        y, h_top, caches = _lstm_forward(params, inp.features())
        loss, dy = gaze_loss(y, target)
        total += loss
        for k, g in _lstm_backward(params, dy, h_top, caches).items():
            grads[k] += g
    n = len(dataset)
    return total / n, {k: g / n for k, g in grads.items()}


@dataclass(frozen=True)
class RecurrentTrainingConfig:
    epochs: int = 200
    learning_rate: float = 0.5
    hidden: tuple = (8, 8)
    init_scale: float = 0.1
    seed: int = 0


@dataclass
class RecurrentFit:
    params: PredictorParameters
    losses: list  # mean training loss before each epoch, then after the last


def train_recurrent(dataset, config: RecurrentTrainingConfig = RecurrentTrainingConfig(), init=None) -> RecurrentFit:
    """Full-batch gradient descent on the mean squared-chord gaze loss."""
    dataset = list(dataset)
    if not dataset:
        raise InvalidInput("training set is empty")
    input_size = dataset[0][0].features().shape[1]
    params = (
        init.copy()
        if init is not None
        else PredictorParameters.initialize(input_size, config.hidden, config.init_scale, config.seed)
    )
    params.validate()
    losses = []
    for epoch in range(config.epochs + 1):
        with np.errstate(all="ignore"):  # divergence is reported below
            loss, grads = dataset_loss_and_grad(params, dataset)
        if not math.isfinite(loss):
            raise TrainingError(f"recurrent predictor loss became {loss} at epoch {epoch}")
        losses.append(loss)
        if epoch == config.epochs:
            break
        with np.errstate(all="ignore"):
            for k, g in grads.items():
                params.arrays[k] -= config.learning_rate * g
    return RecurrentFit(params, losses)


def chunk_gaze_samples(track: GazeSeries, timeline: ChunkTimeline) -> GazeSeries:
    """One gaze sample per chunk: the chunk's last frame."""
    idx = [timeline.chunk_frames(m)[-1] for m in range(timeline.chunk_count)]
    return GazeSeries(track.times[idx], track.yaw[idx], track.pitch[idx])


def recurrent_input(
    per_chunk: GazeSeries, saliency: np.ndarray, chunk: int, history_chunks: int
) -> PredictorInput:
    """History for predicting ``chunk`` from the chunks before it.

    ``saliency`` holds one feature row per chunk.
    """
    lo = max(0, chunk - history_chunks)
    hi = max(chunk, 1)  # chunk 0 sees only its own first sample
    steps = range(lo, hi)
    gaze = GazeSeries(per_chunk.times[lo:hi], per_chunk.yaw[lo:hi], per_chunk.pitch[lo:hi])
    sal = np.array([saliency[min(k + 1, len(saliency) - 1)] for k in steps])
    return PredictorInput(gaze, sal)


def recurrent_dataset(
    track: GazeSeries,
    saliency: SaliencyGrid | None,
    timeline: ChunkTimeline,
    grid: TileGrid,
    history_chunks: int = 5,
) -> list:
    """(input, target) pairs; the target is the middle-frame gaze of each chunk."""
    features = saliency_features(saliency, timeline, grid)
    per_chunk = chunk_gaze_samples(track, timeline)
    pairs = []
    for m in range(1, timeline.chunk_count):
        mid = timeline.chunk_frames(m)[timeline.frames_per_chunk // 2]
        target = GazePoint(float(track.yaw[mid]), float(track.pitch[mid]))
        pairs.append((recurrent_input(per_chunk, features, m, history_chunks), target))
    return pairs


def saliency_features(saliency: SaliencyGrid | None, timeline: ChunkTimeline, grid: TileGrid) -> np.ndarray:
    """Per-chunk saliency feature rows; zeros when no saliency is supplied."""
    if saliency is None:
        return np.zeros((timeline.chunk_count, grid.n_tiles))
    saliency.check_grid(grid)
    return np.array([saliency.chunk_feature(timeline, m) for m in range(timeline.chunk_count)])


# ---- predictor front-ends used by the simulator -----------------------------

class AveragePredictor:
    name = "average"

    def __init__(self, window_s: float = 2.0):
        self.window_s = window_s

    def predict_chunk(self, history: GazeSeries, chunk: int, timeline: ChunkTimeline) -> list[GazePoint]:
        return [predict_average(history, self.window_s)]


class LinearPredictor:
    """Extrapolates the fitted line to every frame of the target chunk."""

    name = "linear"

    def __init__(self, window_s: float = 2.0):
        self.window_s = window_s

    def predict_chunk(self, history: GazeSeries, chunk: int, timeline: ChunkTimeline) -> list[GazePoint]:
        t_last = float(history.times[-1])
        return [
            predict_linear(history, self.window_s, float(t) - t_last).gaze for t in timeline.frame_times(chunk)
        ]


class RecurrentPredictor:
    name = "recurrent"

    def __init__(self, params: PredictorParameters, saliency_rows: np.ndarray, history_chunks: int = 5):
        params.validate()
        self.params = params
        self.saliency_rows = saliency_rows
        self.history_chunks = history_chunks

    def predict_chunk(self, history: GazeSeries, chunk: int, timeline: ChunkTimeline) -> list[GazePoint]:
        # history is per-frame; the network consumes the last frame of each chunk
        idx = np.array([timeline.chunk_frames(m)[-1] for m in range(chunk)] or [0])
        per_chunk = GazeSeries(history.times[idx], history.yaw[idx], history.pitch[idx])
        inp = recurrent_input(per_chunk, self.saliency_rows, chunk, self.history_chunks)
        return [predict_recurrent(inp, self.params)]


# ---- refinement with object boxes ------------------------------------------

@dataclass(frozen=True)
class PredictedViewport:
    base: frozenset  # tiles of the predicted viewport before refinement
    refined: frozenset  # base plus tiles of object boxes merged into it
    objects: frozenset  # tiles of every object box in the chunk
    near_objects: frozenset  # tiles of merged boxes
    far_objects: frozenset  # tiles of boxes that never touch the viewport
    gaze: GazePoint | None = None


def refine_viewport(
    base,
    tracks: ObjectTrackSet | None,
    chunk: int,
    grid: TileGrid,
    timeline: ChunkTimeline,
    global_overlap: bool = False,
    gaze: GazePoint | None = None,
) -> PredictedViewport:
    """Merge object boxes touching the predicted viewport into it.

    Boxes are tested one by one and merging repeats until no further box
    touches the grown viewport, so the result is a fixed point. With
    ``global_overlap`` the union of all boxes is merged whenever any box
    touches the viewport.
    """
    base = frozenset(base)
    if not base:
        raise InvalidInput("predicted viewport is empty")
    boxes = []
    if tracks is not None:
        for _, _, box in tracks.boxes_in(timeline.chunk_frames(chunk)):
            tiles = box_tiles(box, grid)
            if tiles:
                boxes.append(tiles)
    objects = frozenset().union(*boxes)

    if global_overlap:
        if objects & base:
            return PredictedViewport(base, base | objects, objects, objects, frozenset(), gaze)
        return PredictedViewport(base, base, objects, frozenset(), objects, gaze)

    refined = set(base)
    merged = [False] * len(boxes)
    changed = True
    while changed:
        changed = False
        for k, tiles in enumerate(boxes):
            if not merged[k] and not refined.isdisjoint(tiles):
                refined |= tiles
                merged[k] = True
                changed = True
    near = frozenset().union(*(b for b, m in zip(boxes, merged) if m))
    far = frozenset().union(*(b for b, m in zip(boxes, merged) if not m))
    return PredictedViewport(base, frozenset(refined), objects, near, far, gaze)


def prediction_accuracy(predicted, actual) -> float:
    """Share of the actually viewed tiles that were predicted (recall)."""
    actual = frozenset(actual)
    if not actual:
        raise InvalidInput("actual viewport is empty")
    return len(actual & frozenset(predicted)) / len(actual)


def gaze_tiles(gazes, grid: TileGrid, fov_yaw: float = DEFAULT_FOV_YAW, fov_pitch: float = DEFAULT_FOV_PITCH) -> frozenset:
    """Union of the viewport tiles of several gaze directions."""
    out = set()
    for g in gazes:
        out |= viewport_tiles(ViewportRect(g, fov_yaw, fov_pitch), grid)
    return frozenset(out)
