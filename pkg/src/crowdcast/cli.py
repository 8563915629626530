"""Command-line front end: predict, evaluate, groups, and bench.

The CLI is the composition root. Flags mirror the PredictorConfig
field names; CROWDCAST_SEED supplies the seed when --seed is absent.
Exit codes: 0 success, 1 runtime or I/O failure, 2 usage error.
Angles cross this boundary in degrees; everything inside is radians.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .core import ObservationWindow, ParamSet, PredictorConfig, desired_speed
from .dataset import load_obstacles, load_trajectories, window_stream
from .energy import (Heading, LegacyParamSet, build_context,
                     collision_energy_new, collision_energy_original,
                     total_energy)
from .errors import CrowdcastError, EmptyEvaluation
from .grouping import GroupTable
from .heading import heading_candidates
from .metrics import evaluate_records
from .optimizer import ssa_gd_minimize
from .pipeline import (FALLBACK_PARAMS, PredictionRecord, issue_windows,
                       linear_baseline, predict_scene, scene_groups,
                       stage_rng)

_PARAM_KEYS = ("lambda0", "lambda1", "lambda2", "lambda3", "lambda4",
               "w", "d", "alpha")


class UsageError(Exception):
    pass


def _resolve_seed(flag: Optional[int]) -> int:
    if flag is not None:
        return flag
    env = os.environ.get("CROWDCAST_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError("CROWDCAST_SEED must be an integer, got %r"
                             % env) from None
    return 0


def _add_data_flags(p: argparse.ArgumentParser, required: bool = True):
    p.add_argument("--data", required=required, help="trajectory file")
    p.add_argument("--format", choices=("tsv", "obsmat"), default="tsv",
                   help="input layout (default tsv)")
    p.add_argument("--frame-stride", type=int, default=1,
                   help="raw frames per resampled frame (default 1)")
    p.add_argument("--obstacles", default=None,
                   help="optional obstacle file, one 'x y' per line")


def _add_config_flags(p: argparse.ArgumentParser):
    d = PredictorConfig()
    p.add_argument("--obs-len", type=int, default=d.obs_len)
    p.add_argument("--pred-len", type=int, default=d.pred_len)
    p.add_argument("--dt", type=float, default=d.dt)
    p.add_argument("--min-obs", type=int, default=d.min_obs)
    p.add_argument("--frechet-threshold", type=float,
                   default=d.frechet_threshold)
    p.add_argument("--n-salps", type=int, default=d.n_salps)
    p.add_argument("--n-iters", type=int, default=d.n_iters)
    p.add_argument("--n-v-salps", type=int, default=d.n_v_salps)
    p.add_argument("--n-v-iters", type=int, default=d.n_v_iters)
    p.add_argument("--n-headings", type=int, default=d.n_headings)
    p.add_argument("--heading-step", type=float, default=d.heading_step,
                   help="fan spacing in radians")
    p.add_argument("--eta", type=float, default=d.eta)
    p.add_argument("--v-bound", type=float, default=d.v_bound)
    p.add_argument("--speed-weights", default=None,
                   help="comma-separated desired-speed weights")
    p.add_argument("--stride", type=int, default=None,
                   help="issue-frame spacing (default: obs-len)")
    p.add_argument("--seed", type=int, default=None,
                   help="RNG seed (default: $CROWDCAST_SEED or 0)")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads for per-agent fitting")


def _config_from_args(args) -> PredictorConfig:
    kwargs = dict(
        obs_len=args.obs_len, pred_len=args.pred_len, dt=args.dt,
        min_obs=args.min_obs, frechet_threshold=args.frechet_threshold,
        n_salps=args.n_salps, n_iters=args.n_iters,
        n_v_salps=args.n_v_salps, n_v_iters=args.n_v_iters,
        n_headings=args.n_headings, heading_step=args.heading_step,
        eta=args.eta, v_bound=args.v_bound, stride=args.stride,
        rng_seed=_resolve_seed(args.seed))
    if args.speed_weights:
        try:
            kwargs["speed_weights"] = tuple(
                float(x) for x in args.speed_weights.split(","))
        except ValueError:
            raise UsageError("--speed-weights must be comma-separated "
                             "numbers") from None
    try:
        return PredictorConfig(**kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load_table(args):
    table = load_trajectories(args.data, args.format, args.frame_stride)
    obstacles = (load_obstacles(args.obstacles)
                 if args.obstacles is not None else None)
    return table, obstacles


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _record_json(rec: PredictionRecord) -> str:
    obj = {
        "t": rec.issue_frame,
        "agent_id": rec.agent_id,
        "group": rec.group_id,
        "obs": [[float(x), float(y)] for x, y in rec.observed],
        "pred": [[float(x), float(y)] for x, y in rec.predicted],
        "heading_deg": math.degrees(rec.theta_star),
        "params": {k: getattr(rec.params, k) for k in _PARAM_KEYS},
    }
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _record_from_json(line: str, dt: float) -> PredictionRecord:
    obj = json.loads(line)
    obs = np.array(obj["obs"], dtype=np.float64).reshape(-1, 2)
    t = int(obj["t"])
    frames = tuple(range(t - len(obs) + 1, t + 1))
    window = ObservationWindow(int(obj["agent_id"]), frames, obs, dt)
    params = ParamSet(*(float(obj["params"][k]) for k in _PARAM_KEYS))
    return PredictionRecord(
        agent_id=int(obj["agent_id"]), issue_frame=t, window=window,
        params=params, theta_star=math.radians(float(obj["heading_deg"])),
        predicted=np.array(obj["pred"], dtype=np.float64).reshape(-1, 2),
        group_id=obj["group"])


def _load_records(path, dt: float) -> List[PredictionRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(_record_from_json(line, dt))
    return records


def _config_dict(cfg: PredictorConfig) -> dict:
    out = asdict(cfg)
    for key in ("speed_weights", "theta_lo", "theta_hi"):
        if out[key] is not None:
            out[key] = list(out[key])
    return out


# ---------------------------------------------------------------- predict

def _dump_heading_rows(writer, records, hist, cfg: PredictorConfig,
                       groups: GroupTable):
    from .errors import HeadingUndefined
    for rec in records:
        rng = stage_rng(cfg.rng_seed, "heading", rec.agent_id,
                        rec.issue_frame)
        try:
            cands = heading_candidates(rec.window, rec.params, hist, cfg,
                                       rng, groups=groups)
        except HeadingUndefined:
            continue
        for c in cands:
            writer.writerow([
                rec.issue_frame, rec.agent_id, c.theta,
                math.degrees(c.theta), c.cost, c.frechet_part,
                c.euclid_part, int(c.theta == rec.theta_star)])


def _dump_energy_grid(path, records, hist, cfg: PredictorConfig,
                      groups: GroupTable):
    """Energy over a velocity grid for the lowest-id agent of a scene."""
    recs = sorted(records, key=lambda r: r.agent_id)
    focus, rest = recs[0], recs[1:]
    t = focus.issue_frame

    def end_state(r):
        w = r.window
        return w.last_position, (w.positions[-1] - w.positions[-2]) / w.dt

    pos0, vel0 = end_state(focus)
    g = groups.group_of(focus.agent_id)
    members = [] if g is None or g.avg_speed is None else [
        r for r in rest if r.agent_id in g.members]
    scene = hist.frame(t)
    standing = ([] if scene is None else
                [st[0] for a, st in sorted(scene.agents.items())
                 if a not in {r.agent_id for r in recs}])
    obstacles = hist.obstacles
    if standing:
        extra = np.array(standing)
        obstacles = (extra if obstacles is None or len(obstacles) == 0
                     else np.vstack([obstacles, extra]))
    ctx = build_context(
        pos0, vel0, desired_speed(focus.window, cfg.speed_weights),
        Heading(focus.theta_star), focus.params,
        member_positions=[end_state(r)[0] for r in members],
        member_velocities=[end_state(r)[1] for r in members],
        group_speed=None if g is None else g.avg_speed,
        neighbor_positions=[end_state(r)[0] for r in rest],
        neighbor_velocities=[end_state(r)[1] for r in rest],
        obstacles=obstacles)
    legacy = LegacyParamSet()
    axis = np.linspace(-cfg.v_bound, cfg.v_bound, 41)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["vx", "vy", "collision_new", "collision_legacy",
                         "total"])
        for vx in axis:
            for vy in axis:
                v = np.array([vx, vy])
                writer.writerow([
                    vx, vy, collision_energy_new(v, ctx),
                    collision_energy_original(v, ctx, legacy),
                    total_energy(v, ctx).total])


def cmd_predict(args) -> int:
    cfg = _config_from_args(args)
    t_start = time.perf_counter()
    table, obstacles = _load_table(args)
    t_loaded = time.perf_counter()

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    records_path = outdir / "records.jsonl"

    heading_fh = None
    heading_writer = None
    if args.dump_headings:
        heading_fh = open(outdir / "headings.csv", "w", newline="",
                          encoding="utf-8")
        heading_writer = csv.writer(heading_fh)
        heading_writer.writerow([
            "t", "agent_id", "theta_rad", "theta_deg", "cost",
            "frechet_part", "euclid_part", "selected"])

    n_records = 0
    n_scenes = 0
    digest = hashlib.sha256()
    try:
        with open(records_path, "w", encoding="utf-8", newline="\n") as fh:
            for t, windows, hist in window_stream(table, cfg, obstacles):
                if args.max_frame is not None and t > args.max_frame:
                    break
                records = predict_scene(hist, cfg, issue_frame=t,
                                        windows=windows,
                                        threads=args.threads)
                if records and (heading_writer or
                                (args.dump_energy_grid and n_scenes == 0)):
                    groups = scene_groups(windows, cfg)
                    if heading_writer:
                        _dump_heading_rows(heading_writer, records, hist,
                                           cfg, groups)
                    if args.dump_energy_grid and n_scenes == 0:
                        _dump_energy_grid(outdir / "energy_grid.csv",
                                          records, hist, cfg, groups)
                for rec in records:
                    line = _record_json(rec) + "\n"
                    fh.write(line)
                    digest.update(line.encode("utf-8"))
                    n_records += 1
                if records:
                    n_scenes += 1
    finally:
        if heading_fh is not None:
            heading_fh.close()
    t_done = time.perf_counter()

    manifest = {
        "version": __version__,
        "config": _config_dict(cfg),
        "seed": cfg.rng_seed,
        "threads": args.threads,
        "data": {
            "path": str(args.data),
            "format": args.format,
            "frame_stride": args.frame_stride,
            "sha256": _sha256(args.data),
        },
        "obstacles": (None if args.obstacles is None else {
            "path": str(args.obstacles),
            "sha256": _sha256(args.obstacles),
        }),
        "records": {
            "file": records_path.name,
            "count": n_records,
            "scenes": n_scenes,
            "sha256": digest.hexdigest(),
        },
        "timings": {
            "load_s": t_loaded - t_start,
            "predict_s": t_done - t_loaded,
            "total_s": t_done - t_start,
        },
    }
    with open(outdir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print("wrote %d records over %d issue frames to %s"
          % (n_records, n_scenes, records_path))
    return 0


# --------------------------------------------------------------- evaluate

def _baseline_records(records) -> List[PredictionRecord]:
    out = []
    for rec in records:
        if len(rec.window) < 2:
            continue
        out.append(replace(rec, params=FALLBACK_PARAMS, theta_star=0.0,
                           predicted=linear_baseline(rec.window,
                                                     len(rec.predicted)),
                           group_id=None))
    return out


def _report_dict(report) -> dict:
    return {
        "ade": report.ade, "fde": report.fde,
        "ade2": report.ade2, "fde2": report.fde2,
        "n_eva": report.n_eva, "n_full": report.n_full,
    }


def _print_report(tag: str, report, min_obs: int):
    full = ("ADE  = %.4f  FDE  = %.4f  (%d full-horizon forecasts)"
            % (report.ade, report.fde, report.n_full)
            if report.ade is not None else
            "ADE  =    n/a  FDE  =    n/a  (no full-horizon forecast)")
    print("%s:" % tag)
    print("  " + full)
    print("  ADE2 = %.4f  FDE2 = %.4f  (%d agents, min_obs %d)"
          % (report.ade2, report.fde2, report.n_eva, min_obs))


def cmd_evaluate(args) -> int:
    cfg = _config_from_args(args)
    table, obstacles = _load_table(args)

    if args.records is not None:
        records = _load_records(args.records, cfg.dt)
        bad = [r for r in records if len(r.predicted) != cfg.pred_len]
        if bad:
            raise CrowdcastError(
                "record horizon %d does not match --pred-len %d"
                % (len(bad[0].predicted), cfg.pred_len))
    else:
        records = []
        for t, windows, hist in window_stream(table, cfg, obstacles):
            if args.max_frame is not None and t > args.max_frame:
                break
            records.extend(predict_scene(hist, cfg, issue_frame=t,
                                         windows=windows,
                                         threads=args.threads))

    report = evaluate_records(records, table.lookup, cfg.min_obs)
    _print_report("proposed", report, cfg.min_obs)
    out = {"config": _config_dict(cfg), "n_records": len(records),
           "proposed": _report_dict(report), "baseline": None}

    if args.baseline == "linear":
        base = evaluate_records(_baseline_records(records), table.lookup,
                                cfg.min_obs)
        _print_report("linear baseline", base, cfg.min_obs)
        print("  delta ADE2 = %+.4f  delta FDE2 = %+.4f"
              % (report.ade2 - base.ade2, report.fde2 - base.fde2))
        out["baseline"] = _report_dict(base)

    if args.out is not None:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(out, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


# ----------------------------------------------------------------- groups

def cmd_groups(args) -> int:
    cfg = _config_from_args(args)
    table, obstacles = _load_table(args)
    lo, hi = table.frame_range
    t = args.frame if args.frame is not None else lo + cfg.obs_len - 1
    if not lo <= t <= hi:
        raise CrowdcastError("frame %d outside data range [%d, %d]"
                             % (t, lo, hi))
    hist = table.to_history(cfg.dt, obstacles).up_to(t)
    windows = issue_windows(hist, t, cfg)
    groups = scene_groups(windows, cfg)
    payload = [{"group_id": g.group_id, "members": list(g.members),
                "avg_speed": g.avg_speed} for g in groups.groups]
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out is not None:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


# ------------------------------------------------------------------ bench

def _synthetic_history(n_agents: int, cfg: PredictorConfig, seed: int):
    """Agents on a ring walking inward, with mild seeded jitter."""
    from .core import SceneHistory
    rng = np.random.default_rng([seed, 1720, n_agents])
    radius = 6.0
    tracks = {}
    frames = list(range(cfg.obs_len))
    for a in range(1, n_agents + 1):
        angle = 2.0 * math.pi * (a - 1) / n_agents
        start = radius * np.array([math.cos(angle), math.sin(angle)])
        speed = 1.0 + 0.4 * rng.random()
        bearing = angle + math.pi + 0.2 * (rng.random() - 0.5)
        vel = speed * np.array([math.cos(bearing), math.sin(bearing)])
        steps = np.arange(cfg.obs_len)[:, None] * vel * cfg.dt
        noise = 0.02 * rng.standard_normal((cfg.obs_len, 2))
        tracks[a] = (frames, start + steps + noise)
    return SceneHistory.from_tracks(tracks, cfg.dt)


def _bench_crowd(args, cfg: PredictorConfig, outdir: Path) -> float:
    # Warm the compiled kernels outside the timed region.
    warm = _synthetic_history(1, cfg, cfg.rng_seed)
    predict_scene(warm, cfg, issue_frame=cfg.obs_len - 1)

    rows = []
    last_mean = 0.0
    for n in range(1, args.max_agents + 1):
        hist = _synthetic_history(n, cfg, cfg.rng_seed)
        times = []
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            predict_scene(hist, cfg, issue_frame=cfg.obs_len - 1,
                          threads=args.threads)
            times.append(time.perf_counter() - t0)
        mean = float(np.mean(times))
        rows.append([n, mean, float(np.std(times)), float(np.min(times)),
                     args.repeats])
        last_mean = mean
    path = outdir / "bench_crowd.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_agents", "seconds", "std", "best", "repeats"])
        writer.writerows(rows)
    print("crowd: %d agents -> %.3f s mean over %d runs (%s)"
          % (args.max_agents, last_mean, args.repeats, path))
    return last_mean


def _bench_optimizer(args, cfg: PredictorConfig, outdir: Path):
    def sphere_at(target):
        return lambda x: float(np.sum((x - target) ** 2))

    def rosenbrock(x):
        return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2
                            + (1.0 - x[:-1]) ** 2))

    dim = 8
    path = outdir / "bench_optimizer.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["objective", "seed", "iteration", "cost"])
        for s in range(args.opt_seeds):
            rng = np.random.default_rng([cfg.rng_seed, 1721, s])
            target = -5.0 + 10.0 * rng.random(dim)
            for name, fn, lo, hi in (
                    ("sphere", sphere_at(target), -5.0, 5.0),
                    ("rosenbrock", rosenbrock, -2.048, 2.048)):
                trace: list = []
                ssa_gd_minimize(fn, np.full(dim, lo), np.full(dim, hi),
                                cfg.n_salps, cfg.n_iters,
                                np.random.default_rng([cfg.rng_seed, 1722,
                                                       s]),
                                trace=trace)
                for it, cost in enumerate(trace, start=1):
                    writer.writerow([name, s, it, cost])
    print("optimizer: %d seeds x {sphere, rosenbrock} -> %s"
          % (args.opt_seeds, path))


def cmd_bench(args) -> int:
    cfg = _config_from_args(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    if args.suite in ("crowd", "both"):
        _bench_crowd(args, cfg, outdir)
    if args.suite in ("optimizer", "both"):
        _bench_optimizer(args, cfg, outdir)
    return 0


# ------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crowdcast",
        description="Energy-based multi-agent trajectory prediction.")
    parser.add_argument("--version", action="version",
                        version="crowdcast " + __version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("predict", help="forecast and write JSONL records")
    _add_data_flags(p)
    _add_config_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--max-frame", type=int, default=None,
                   help="stop after this resampled frame")
    p.add_argument("--dump-headings", action="store_true",
                   help="write per-candidate heading costs to headings.csv")
    p.add_argument("--dump-energy-grid", action="store_true",
                   help="write a velocity-grid energy CSV for the first "
                        "scene's lowest-id agent")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score forecasts against the data")
    _add_data_flags(p)
    _add_config_flags(p)
    p.add_argument("--records", default=None,
                   help="score an existing records.jsonl instead of "
                        "running the predictor")
    p.add_argument("--baseline", choices=("linear",), default=None,
                   help="also score a baseline on the same windows")
    p.add_argument("--max-frame", type=int, default=None)
    p.add_argument("--out", default=None, help="write a JSON report here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("groups", help="print the group table at one frame")
    _add_data_flags(p)
    _add_config_flags(p)
    p.add_argument("--frame", type=int, default=None,
                   help="issue frame (default: first full window)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_groups)

    p = sub.add_parser("bench", help="time synthetic scenes, probe the "
                                     "optimizer on test objectives")
    _add_config_flags(p)
    p.add_argument("--suite", choices=("crowd", "optimizer", "both"),
                   default="crowd")
    p.add_argument("--max-agents", type=int, default=20)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--opt-seeds", type=int, default=20)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print("%s: error: %s" % (parser.prog, exc), file=sys.stderr)
        return 2
    except (CrowdcastError, OSError) as exc:
        print("%s: %s" % (parser.prog, exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
