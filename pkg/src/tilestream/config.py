"""JSON run configuration and the session objects built from it.

Relative paths are resolved against the directory of the config file.
Unknown keys are rejected so typos do not silently fall back to defaults.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from tilestream.a3c import TrainingConfig
from tilestream.env import EnvConfig
from tilestream.errors import ConfigError, InvalidInput
from tilestream.media import DEFAULT_LADDER, BitrateLadder, ChunkTimeline, TileGrid
from tilestream.qoe import PRESET_WEIGHTS, QoEWeights

PREDICTORS = ("average", "linear", "recurrent")
ABLATIONS = {
    # name: (object refinement, priority classes)
    "full": (True, True),
    "VP-s+ABR": (True, False),
    "VP+ABR": (False, False),
}


@dataclass(frozen=True)
class BandwidthCondition:
    name: str = "base"
    scale: float = 1.0
    offset_mbps: float = 0.0


@dataclass(frozen=True)
class PredictorConfig:
    kind: str = "average"
    window_s: float = 2.0
    checkpoint: Path | None = None
    history_chunks: int = 5
    epochs: int = 200
    learning_rate: float = 0.5
    seed: int = 0


@dataclass(frozen=True)
class EvaluateConfig:
    policies: tuple = ("greedy-buffer",)
    weights: dict = field(default_factory=lambda: dict(PRESET_WEIGHTS))
    bandwidth: tuple = (BandwidthCondition(),)
    ablations: tuple = ("full",)


@dataclass(frozen=True)
class RunConfig:
    bandwidth_traces: tuple
    head_trace: Path
    objects: Path | None
    saliency: Path | None
    env: EnvConfig
    training: TrainingConfig
    predictor: PredictorConfig
    policy: str = "greedy-buffer"
    checkpoint: Path | None = None
    bandwidth_scale: float = 1.0
    seed: int = 0
    out: Path = Path("out")
    evaluate: EvaluateConfig = field(default_factory=EvaluateConfig)


def _section(raw, name: str, allowed) -> dict:
    value = raw.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"'{name}' must be an object")
    extra = set(value) - set(allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in '{name}': {', '.join(sorted(extra))}")
    return value


def _path(base: Path, value, what: str, required: bool = True) -> Path | None:
    if value is None:
        if required:
            raise ConfigError(f"missing path for {what}")
        return None
    p = Path(value)
    p = p if p.is_absolute() else base / p
    if not p.exists():
        raise ConfigError(f"{what} not found: {p}")
    return p


def _weights(value) -> QoEWeights:
    if isinstance(value, str):
        if value not in PRESET_WEIGHTS:
            raise ConfigError(f"unknown QoE weight preset {value!r}")
        return PRESET_WEIGHTS[value]
    try:
        return QoEWeights(*(float(v) for v in value))
    except (TypeError, InvalidInput) as exc:
        raise ConfigError(f"bad QoE weights {value!r}: {exc}") from None


def _build(cls, kwargs, what):
    try:
        return cls(**kwargs)
    except (TypeError, InvalidInput) as exc:
        raise ConfigError(f"bad '{what}' settings: {exc}") from None


TOP_KEYS = {
    "traces", "grid", "ladder", "timeline", "env", "training", "qoe_weights", "predictor",
    "policy", "checkpoint", "bandwidth_scale", "seed", "out", "evaluate",
}


def parse_config(raw: dict, base_dir: Path, check_checkpoint: bool = False) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    extra = set(raw) - TOP_KEYS
    if extra:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(extra))}")

    traces = _section(raw, "traces", ("bandwidth", "head", "objects", "saliency"))
    bw = traces.get("bandwidth", [])
    if isinstance(bw, str):
        bw = [bw]
    if not bw:
        raise ConfigError("traces.bandwidth must name at least one trace")
    bandwidth = tuple(_path(base_dir, p, "bandwidth trace") for p in bw)
    head = _path(base_dir, traces.get("head"), "head trace")
    objects = _path(base_dir, traces.get("objects"), "object tracks", required=False)
    saliency = _path(base_dir, traces.get("saliency"), "saliency", required=False)

    grid = _build(TileGrid, _section(raw, "grid", [f.name for f in fields(TileGrid)]), "grid")
    ladder = _build(BitrateLadder, {"levels": tuple(raw.get("ladder", DEFAULT_LADDER))}, "ladder")
    timeline = _build(ChunkTimeline, _section(raw, "timeline", [f.name for f in fields(ChunkTimeline)]), "timeline")

    env_keys = (
        "buffer_capacity_s", "startup_s", "history", "decay", "fov_yaw_deg", "fov_pitch_deg",
        "priority", "refine", "global_overlap", "random_start",
    )
    env_raw = dict(_section(raw, "env", env_keys))
    for deg in ("fov_yaw_deg", "fov_pitch_deg"):
        if deg in env_raw:
            env_raw[deg[: -len("_deg")]] = math.radians(float(env_raw.pop(deg)))
    weights = _weights(raw.get("qoe_weights", [1, 1, 1, 1]))
    env = _build(
        EnvConfig, dict(grid=grid, ladder=ladder, timeline=timeline, qoe_weights=weights, **env_raw), "env"
    )

    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    train_raw = dict(_section(raw, "training", [f.name for f in fields(TrainingConfig)]))
    train_raw.setdefault("seed", seed)
    training = _build(TrainingConfig, train_raw, "training")

    pred_raw = dict(_section(raw, "predictor", [f.name for f in fields(PredictorConfig)]))
    pred_raw["checkpoint"] = _path(base_dir, pred_raw.get("checkpoint"), "predictor checkpoint", required=False)
    predictor = _build(PredictorConfig, pred_raw, "predictor")
    if predictor.kind not in PREDICTORS:
        raise ConfigError(f"predictor kind must be one of {PREDICTORS}, got {predictor.kind!r}")

    policy = raw.get("policy", "greedy-buffer")
    ckpt = raw.get("checkpoint")
    checkpoint = None
    if ckpt is not None:
        checkpoint = Path(ckpt) if Path(ckpt).is_absolute() else base_dir / ckpt
        if check_checkpoint and not checkpoint.exists():
            raise ConfigError(f"policy checkpoint not found: {checkpoint}")
    if policy == "checkpoint" and check_checkpoint and checkpoint is None:
        raise ConfigError("policy 'checkpoint' needs a 'checkpoint' path")

    scale = float(raw.get("bandwidth_scale", 1.0))
    if not scale > 0:
        raise ConfigError("bandwidth_scale must be > 0")

    ev = _section(raw, "evaluate", ("policies", "weights", "bandwidth", "ablations"))
    ev_weights = {k: _weights(v) for k, v in ev.get("weights", {"default": [1, 1, 1, 1]}).items()}
    conds = tuple(
        _build(BandwidthCondition, c, "evaluate.bandwidth") for c in ev.get("bandwidth", [{"name": "base"}])
    )
    ablations = tuple(ev.get("ablations", ["full"]))
    for a in ablations:
        if a not in ABLATIONS:
            raise ConfigError(f"unknown ablation {a!r}; choose from {sorted(ABLATIONS)}")
    evaluate = EvaluateConfig(tuple(ev.get("policies", [policy])), ev_weights, conds, ablations)

    out = Path(raw.get("out", "out"))
    return RunConfig(
        bandwidth_traces=bandwidth,
        head_trace=head,
        objects=objects,
        saliency=saliency,
        env=env,
        training=training,
        predictor=predictor,
        policy=policy,
        checkpoint=checkpoint,
        bandwidth_scale=scale,
        seed=seed,
        out=out if out.is_absolute() else base_dir / out,
        evaluate=evaluate,
    )


def load_config(path, check_checkpoint: bool = False) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    return parse_config(raw, path.resolve().parent, check_checkpoint)
