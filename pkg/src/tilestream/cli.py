"""Command-line entry point: ``tilestream <command> --config run.json``.

Exit status is 0 on success, 2 for invalid input or configuration and 1 for
runtime failures such as diverged training.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from tilestream import __version__
from tilestream.a3c import PolicyParameters, act, train
from tilestream.checkpoint import load_checkpoint, save_checkpoint
from tilestream.config import ABLATIONS, RunConfig, load_config
from tilestream.env import EnvConfig, StreamingEnv, build_plan, parse_fixed_policy
from tilestream.errors import ConfigError
from tilestream.media import GazeSeries
from tilestream.prediction import (
    AveragePredictor,
    LinearPredictor,
    PredictorParameters,
    RecurrentPredictor,
    RecurrentTrainingConfig,
    recurrent_dataset,
    saliency_features,
    train_recurrent,
)
from tilestream.traces import (
    convert_cooked_log,
    convert_head_rows,
    convert_hsdpa_log,
    gaze_track,
    load_bandwidth_trace,
    load_head_trace,
    load_object_tracks,
    load_saliency,
    offset_trace,
    scale_trace,
    write_bandwidth_trace,
    write_head_trace,
    write_results,
)

PREDICTOR_KIND = "predictor"


@dataclass
class Scenario:
    gaze: GazeSeries
    tracks: object
    saliency: object
    traces: list  # (name, BandwidthTrace)


def load_scenario(cfg: RunConfig) -> Scenario:
    tl = cfg.env.timeline
    gaze = gaze_track(load_head_trace(cfg.head_trace), tl)
    tracks = load_object_tracks(cfg.objects, tl.total_frames) if cfg.objects else None
    saliency = load_saliency(cfg.saliency, cfg.env.grid) if cfg.saliency else None
    traces = []
    for i, path in enumerate(cfg.bandwidth_traces):
        t = load_bandwidth_trace(path)
        if cfg.bandwidth_scale != 1.0:
            t = scale_trace(t, cfg.bandwidth_scale)
        traces.append((f"{i:02d}_{path.stem}", t))
    return Scenario(gaze, tracks, saliency, traces)


def make_predictor(cfg: RunConfig, sc: Scenario, params: PredictorParameters | None = None):
    pc = cfg.predictor
    if pc.kind == "average":
        return AveragePredictor(pc.window_s)
    if pc.kind == "linear":
        return LinearPredictor(pc.window_s)
    if params is None:
        if pc.checkpoint is None:
            raise ConfigError("the recurrent predictor needs 'predictor.checkpoint' (or run 'predict --fit')")
        params = PredictorParameters(load_checkpoint(pc.checkpoint, PREDICTOR_KIND))
    params.validate()
    g = cfg.env.grid
    if params.input_size != 3 + g.n_tiles:
        raise ConfigError(f"predictor expects {params.input_size - 3} saliency features, grid has {g.n_tiles} tiles")
    return RecurrentPredictor(params, saliency_features(sc.saliency, cfg.env.timeline, g), pc.history_chunks)


def make_policy(cfg: RunConfig, name: str, env: StreamingEnv, params: PolicyParameters | None = None):
    if name == "checkpoint":
        if params is None:
            params = load_policy(cfg)
        if params.spec.n_actions != env.n_actions:
            raise ConfigError(f"checkpoint has {params.spec.n_actions} actions, ladder has {env.n_actions}")
        return lambda s: act(params, s, "greedy")
    return parse_fixed_policy(name, cfg.env.ladder, cfg.env.timeline.chunk_duration_s)


def load_policy(cfg: RunConfig) -> PolicyParameters:
    if cfg.checkpoint is None or not cfg.checkpoint.exists():
        raise ConfigError(f"policy checkpoint not found: {cfg.checkpoint}")
    return PolicyParameters.load(cfg.checkpoint)


def run_session(env: StreamingEnv, policy, seed: int) -> dict:
    state = env.reset(seed)
    while True:
        out = env.step(policy(state))
        if out.done:
            break
        state = out.state
    rows = env.chunk_rows
    return {
        "chunks": len(rows),
        "qoe": env.session_qoe(),
        "qoe1": float(sum(r["qoe1"] for r in rows)),
        "qoe2": float(sum(r["qoe2"] for r in rows)),
        "qoe3": float(sum(r["qoe3"] for r in rows)),
        "qoe4": float(sum(r["qoe4"] for r in rows)),
        "E": env.session_utilization(),
        "accuracy": env.mean_accuracy(),
    }


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _out_dir(cfg: RunConfig) -> Path:
    cfg.out.mkdir(parents=True, exist_ok=True)
    return cfg.out


# ---- commands ---------------------------------------------------------------

def cmd_simulate(cfg: RunConfig, args) -> None:
    policy_name = args.policy or cfg.policy
    sc = load_scenario(cfg)
    predictor = make_predictor(cfg, sc)
    out = _out_dir(cfg)
    sessions = []
    for name, trace in sc.traces:
        env = StreamingEnv(cfg.env, trace, sc.gaze, sc.tracks, predictor)
        summary = run_session(env, make_policy(cfg, policy_name, env), cfg.seed)
        write_results(out / f"results_{name}.csv", env.chunk_rows)
        sessions.append({"trace": name, **summary})
    report = {
        "policy": policy_name,
        "predictor": cfg.predictor.kind,
        "seed": cfg.seed,
        "sessions": sessions,
        "mean_qoe": float(np.mean([s["qoe"] for s in sessions])),
        "mean_E": float(np.mean([s["E"] for s in sessions])),
        "mean_accuracy": float(np.mean([s["accuracy"] for s in sessions])),
    }
    _write_json(out / "summary.json", report)
    print(f"{policy_name}: mean session QoE {report['mean_qoe']:.4f} over {len(sessions)} trace(s)")


class RoundRobinEnv:
    """Cycles through one environment per bandwidth trace, keyed by episode seed."""

    def __init__(self, envs, base_seed: int):
        self.envs = envs
        self.base_seed = base_seed
        self.current = envs[0]
        self.n_actions = envs[0].n_actions

    def reset(self, seed: int = 0):
        self.current = self.envs[(seed - self.base_seed) % len(self.envs)]
        return self.current.reset(seed)

    def step(self, action: int):
        return self.current.step(action)


def cmd_train(cfg: RunConfig, args) -> None:
    training = cfg.training
    if args.episodes is not None:
        training = replace(training, episodes=args.episodes)
    if args.workers is not None:
        training = replace(training, workers=args.workers)
    sc = load_scenario(cfg)
    predictor = make_predictor(cfg, sc)

    def factory(worker):
        envs = [StreamingEnv(cfg.env, t, sc.gaze, sc.tracks, predictor) for _, t in sc.traces]
        return RoundRobinEnv(envs, training.seed)

    result = train(training, factory)
    out = _out_dir(cfg)
    result.params.save(out / "policy.ckpt")
    result.write_log(out / "training_log.csv")
    tail = result.log[-1].ret if result.log else float("nan")
    print(f"trained {training.episodes} episodes; last return {tail:.4f}; gradient clips {result.clip_events}")


EVAL_COLUMNS = ["ablation", "policy", "bandwidth", "weights", "mean_qoe", "mean_E", "mean_accuracy", "runs"]


def cmd_evaluate(cfg: RunConfig, args) -> None:
    ev = cfg.evaluate
    sc = load_scenario(cfg)
    predictor = make_predictor(cfg, sc)
    params = load_policy(cfg) if "checkpoint" in ev.policies else None
    out = _out_dir(cfg)
    runs_dir = out / "runs"
    runs_dir.mkdir(exist_ok=True)
    table = []
    for ablation in ev.ablations:
        refine, priority = ABLATIONS[ablation]
        for cond in ev.bandwidth:
            for wname, weights in ev.weights.items():
                env_cfg: EnvConfig = replace(cfg.env, refine=refine, priority=priority, qoe_weights=weights)
                for pname in ev.policies:
                    sums = []
                    for tname, trace in sc.traces:
                        t = scale_trace(trace, cond.scale) if cond.scale != 1.0 else trace
                        t = offset_trace(t, cond.offset_mbps) if cond.offset_mbps else t
                        env = StreamingEnv(env_cfg, t, sc.gaze, sc.tracks, predictor)
                        summary = run_session(env, make_policy(cfg, pname, env, params), cfg.seed)
                        stem = f"{ablation}__{pname}__{cond.name}__{wname}__{tname}"
                        write_results(runs_dir / f"{stem}.csv", env.chunk_rows)
                        sums.append(summary)
                    table.append(
                        {
                            "ablation": ablation,
                            "policy": pname,
                            "bandwidth": cond.name,
                            "weights": wname,
                            "mean_qoe": repr(float(np.mean([s["qoe"] for s in sums]))),
                            "mean_E": repr(float(np.mean([s["E"] for s in sums]))),
                            "mean_accuracy": repr(float(np.mean([s["accuracy"] for s in sums]))),
                            "runs": len(sums),
                        }
                    )
    with open(out / "evaluation.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, EVAL_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(table)
    print(f"wrote {len(table)} evaluation row(s) to {out / 'evaluation.csv'}")


def _tiles(ts) -> str:
    return " ".join(str(t) for t in sorted(ts))


def cmd_predict(cfg: RunConfig, args) -> None:
    sc = load_scenario(cfg)
    out = _out_dir(cfg)
    params = None
    if args.fit:
        pc = cfg.predictor
        data = recurrent_dataset(sc.gaze, sc.saliency, cfg.env.timeline, cfg.env.grid, pc.history_chunks)
        fit = train_recurrent(
            data, RecurrentTrainingConfig(epochs=pc.epochs, learning_rate=pc.learning_rate, seed=pc.seed)
        )
        params = fit.params
        save_checkpoint(out / "predictor.ckpt", PREDICTOR_KIND, params.arrays)
        with open(out / "predictor_loss.csv", "w") as fh:
            fh.write("epoch,loss\n")
            fh.writelines(f"{k},{v!r}\n" for k, v in enumerate(fit.losses))
        cfg = replace(cfg, predictor=replace(cfg.predictor, kind="recurrent"))
    plan = build_plan(cfg.env, sc.gaze, sc.tracks, make_predictor(cfg, sc, params))
    with open(out / "predictions.csv", "w") as fh:
        fh.write("chunk,yaw,pitch,accuracy,base_tiles,refined_tiles\n")
        for m, p in enumerate(plan):
            g = p.viewport.gaze
            fh.write(f"{m},{g.yaw!r},{g.pitch!r},{p.accuracy!r},{_tiles(p.viewport.base)},{_tiles(p.viewport.refined)}\n")
    print(f"mean prediction accuracy {np.mean([p.accuracy for p in plan]):.4f} over {len(plan)} chunk(s)")


def cmd_classify(cfg: RunConfig, args) -> None:
    sc = load_scenario(cfg)
    plan = build_plan(cfg.env, sc.gaze, sc.tracks, make_predictor(cfg, sc))
    out = _out_dir(cfg)
    with open(out / "weights.csv", "w") as fh:
        fh.write("chunk,w_top,w_topmid,w_midlow,w_low\n")
        for m, p in enumerate(plan):
            fh.write(f"{m},{','.join(str(w) for w in p.weights)}\n")
    with open(out / "priority_maps.txt", "w") as fh:
        for m, p in enumerate(plan):
            fh.write(f"chunk {m}\n{p.priority_map.render()}\n\n")
    print(f"classified {len(plan)} chunk(s)")


def _numeric_rows(lines):
    """Rows of floats from comma or whitespace separated text; a header line is skipped."""
    rows = []
    for k, line in enumerate(lines):
        parts = line.replace(",", " ").split()
        if not parts:
            continue
        try:
            rows.append([float(v) for v in parts])
        except ValueError:
            if k == 0:
                continue
            raise ConfigError(f"line {k + 1}: non-numeric field") from None
    return rows


def cmd_convert(args) -> None:
    src = Path(args.input)
    try:
        lines = src.read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read {src}: {exc.strerror}") from None
    if args.kind == "hsdpa":
        write_bandwidth_trace(args.output, convert_hsdpa_log(lines))
    elif args.kind == "cooked":
        write_bandwidth_trace(args.output, convert_cooked_log(lines))
    else:
        rows = _numeric_rows(lines)
        if any(len(r) != 5 for r in rows):
            raise ConfigError("head rows need five fields: time and four quaternion components")
        h = convert_head_rows(rows, args.order, args.convention, args.time_scale)
        write_head_trace(args.output, h)
    print(f"wrote {args.output}")


# ---- argument parsing -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tilestream", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="override the output directory")
        return p

    p = with_config("simulate", "replay sessions with a policy and write per-chunk results")
    p.add_argument("--policy", help="checkpoint, greedy-buffer or fixed-level-K")
    p = with_config("train", "train the actor-critic agent")
    p.add_argument("--episodes", type=int)
    p.add_argument("--workers", type=int)
    with_config("evaluate", "compare policies across bandwidth, QoE weights and ablations")
    p = with_config("predict", "write per-chunk viewport predictions")
    p.add_argument("--fit", action="store_true", help="fit the recurrent predictor on the head trace first")
    with_config("classify", "write per-chunk priority counts and maps")

    p = sub.add_parser("convert-trace", help="convert third-party trace formats")
    p.add_argument("--kind", choices=("hsdpa", "cooked", "head"), required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--order", choices=("wxyz", "xyzw"), default="wxyz", help="quaternion component order")
    p.add_argument("--convention", choices=("native", "yup"), default="native", help="input axis frame")
    p.add_argument("--time-scale", type=float, default=1.0, help="multiplier turning input times into seconds")
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "classify": cmd_classify,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "convert-trace":
            cmd_convert(args)
            return 0
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed, training=replace(cfg.training, seed=args.seed))
        if args.out is not None:
            cfg = replace(cfg, out=Path(args.out))
        COMMANDS[args.command](cfg, args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
