"""End-to-end prediction: group, fit, aim, then roll the scene forward.

Per issue frame the stages run in a fixed order. Groups and per-agent
weights are frozen before any motion is simulated, then all agents
advance jointly: step k of every agent is computed from the step k-1
state of every other agent, never from a mixture of old and new
positions. Agents observed fewer than two frames cannot be fitted or
rolled out; they still participate as standing collision neighbors.

Randomness is drawn from per-agent, per-stage generators seeded by
(seed, stage, agent id, issue frame), so adding or removing one agent
from a scene never perturbs the noise any other agent consumes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .core import (ObservationWindow, ParamSet, PredictorConfig,
                   SceneHistory, desired_speed)
from .energy import Heading, build_context
from .errors import HeadingUndefined, WindowTooShort
from .grouping import GroupTable, binary_matrix, divide_groups, group_speeds, similarity_matrix
from .heading import estimate_target_heading
from .optimizer import estimate_parameters, estimate_velocity

# Stage tags keeping the per-agent generator streams disjoint.
_TAG_FIT = 1
_TAG_HEADING = 2
_TAG_ROLLOUT = 3

# Weights for agents whose window is too short to fit: pure damping,
# which continues the last observed velocity unchanged.
FALLBACK_PARAMS = ParamSet(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0)


@dataclass(frozen=True)
class PredictionRecord:
    """One agent's forecast issued at one frame."""

    agent_id: int
    issue_frame: int
    window: ObservationWindow
    params: ParamSet
    theta_star: float
    predicted: np.ndarray  # (pred_len, 2)
    group_id: Optional[int]

    @property
    def observed(self) -> np.ndarray:
        return self.window.positions


def _agent_rng(seed: int, tag: int, agent_id: int,
               frame: int) -> np.random.Generator:
    return np.random.default_rng(
        [seed, tag, agent_id & 0xFFFFFFFF, frame & 0xFFFFFFFF])


_STAGES = {"fit": _TAG_FIT, "heading": _TAG_HEADING, "rollout": _TAG_ROLLOUT}


def stage_rng(seed: int, stage: str, agent_id: int,
              frame: int) -> np.random.Generator:
    """The generator one agent consumes in one stage at one frame.

    Exposed so tools can replay a stage (say, re-enumerate heading
    candidates) with exactly the noise the pipeline used.
    """
    return _agent_rng(seed, _STAGES[stage], agent_id, frame)


def issue_windows(history: SceneHistory, t: int,
                  cfg: PredictorConfig) -> List[ObservationWindow]:
    """Observation windows for every agent present at frame t."""
    return [history.window_of(a, t, cfg.obs_len)
            for a in history.agents_at(t)]


def scene_groups(windows: Sequence[ObservationWindow],
                 cfg: PredictorConfig) -> GroupTable:
    sim = similarity_matrix(windows)
    b = binary_matrix(sim, cfg.frechet_threshold)
    table = divide_groups(b, ids=[w.agent_id for w in windows])
    return group_speeds(table, windows, cfg.speed_weights)


def linear_baseline(window: ObservationWindow, pred_len: int) -> np.ndarray:
    """Constant-velocity extrapolation of the last observed step."""
    if len(window) < 2:
        raise WindowTooShort("need two frames to extrapolate")
    v = (window.positions[-1] - window.positions[-2]) / window.dt
    steps = np.arange(1, pred_len + 1, dtype=np.float64)
    return window.last_position + steps[:, None] * (v * window.dt)


def rollout(windows: Sequence[ObservationWindow],
            params: Dict[int, ParamSet],
            headings: Dict[int, float],
            groups: GroupTable,
            history: SceneHistory,
            cfg: PredictorConfig,
            issue_frame: int) -> Dict[int, np.ndarray]:
    """Jointly advance all windowed agents pred_len steps.

    Every step minimises each agent's energy against the previous
    step's scene, then all agents move at once. Agents present in the
    history at the issue frame but absent from `windows` are held at
    their last position as standing neighbors.
    """
    ids = sorted(w.agent_id for w in windows)
    by_id = {w.agent_id: w for w in windows}
    pos = {a: by_id[a].last_position.copy() for a in ids}
    vel = {}
    speed = {}
    for a in ids:
        w = by_id[a]
        vel[a] = (w.positions[-1] - w.positions[-2]) / w.dt
        speed[a] = desired_speed(w, cfg.speed_weights)

    companions = {}
    group_speed = {}
    group_of = {}
    for a in ids:
        g = groups.group_of(a)
        group_of[a] = g
        if g is not None and g.avg_speed is not None:
            companions[a] = [m for m in g.members if m != a and m in by_id]
            group_speed[a] = g.avg_speed
        else:
            companions[a] = []
            group_speed[a] = None

    scene = history.frame(issue_frame)
    standing = ([] if scene is None else
                [st[0] for a, st in sorted(scene.agents.items())
                 if a not in by_id])
    obstacles = history.obstacles
    if standing:
        extra = np.array(standing, dtype=np.float64)
        obstacles = (extra if obstacles is None or len(obstacles) == 0
                     else np.vstack([obstacles, extra]))

    rngs = {a: _agent_rng(cfg.rng_seed, _TAG_ROLLOUT, a, issue_frame)
            for a in ids}
    paths = {a: np.empty((cfg.pred_len, 2)) for a in ids}

    for k in range(cfg.pred_len):
        new_vel = {}
        for a in ids:
            others = [b for b in ids if b != a]
            ctx = build_context(
                pos[a], vel[a], speed[a], Heading(headings[a]), params[a],
                member_positions=[pos[m] for m in companions[a]],
                member_velocities=[vel[m] for m in companions[a]],
                group_speed=group_speed[a],
                neighbor_positions=[pos[b] for b in others],
                neighbor_velocities=[vel[b] for b in others],
                obstacles=obstacles)
            new_vel[a] = estimate_velocity(vel[a], params[a], ctx, cfg,
                                           rngs[a])
        for a in ids:
            vel[a] = new_vel[a]
            pos[a] = pos[a] + vel[a] * cfg.dt
            paths[a][k] = pos[a]
    return paths


def _fit_one(w: ObservationWindow, hist: SceneHistory, groups: GroupTable,
             cfg: PredictorConfig, t: int):
    a = w.agent_id
    if len(w) >= 3:
        fit = estimate_parameters(
            w, hist, groups, cfg, _agent_rng(cfg.rng_seed, _TAG_FIT, a, t))
        params = fit.params
    else:
        params = FALLBACK_PARAMS
    try:
        theta = estimate_target_heading(
            w, params, hist, cfg,
            _agent_rng(cfg.rng_seed, _TAG_HEADING, a, t), groups=groups)
    except HeadingUndefined:
        # Stationary window: the aim term cannot move the agent, so any
        # heading serves.
        theta = 0.0
    return a, params, theta


def predict_scene(history: SceneHistory, cfg: PredictorConfig,
                  issue_frame: Optional[int] = None,
                  windows: Optional[Sequence[ObservationWindow]] = None,
                  threads: int = 1) -> List[PredictionRecord]:
    """Forecast every predictable agent in the scene at one frame.

    threads > 1 fans the per-agent fitting and aiming over a thread
    pool; each agent owns its generators, so the output is identical
    to the serial run.
    """
    t = issue_frame if issue_frame is not None else max(history.frame_ids)
    hist = history.up_to(t)
    if windows is None:
        windows = issue_windows(hist, t, cfg)
    groups = scene_groups(windows, cfg)

    targets = [w for w in windows if len(w) >= 2]
    if threads > 1 and len(targets) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            fitted = list(pool.map(
                lambda w: _fit_one(w, hist, groups, cfg, t), targets))
    else:
        fitted = [_fit_one(w, hist, groups, cfg, t) for w in targets]
    params = {a: p for a, p, _ in fitted}
    headings = {a: th for a, _, th in fitted}

    paths = rollout(targets, params, headings, groups, hist, cfg, t)
    records = []
    for w in sorted(targets, key=lambda w: w.agent_id):
        a = w.agent_id
        g = groups.group_of(a)
        records.append(PredictionRecord(
            agent_id=a, issue_frame=t, window=w, params=params[a],
            theta_star=headings[a], predicted=paths[a],
            group_id=g.group_id if g is not None else None))
    return records


def predict_stream(table, cfg: PredictorConfig, obstacles=None,
                   threads: int = 1) -> Iterable[PredictionRecord]:
    """Run the full pipeline over a trajectory table."""
    from .dataset import window_stream
    for t, windows, hist in window_stream(table, cfg, obstacles):
        yield from predict_scene(hist, cfg, issue_frame=t, windows=windows,
                                 threads=threads)
