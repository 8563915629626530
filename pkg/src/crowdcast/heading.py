"""Target heading estimation by similarity-based resampling.

The observed window is replayed under a fan of candidate headings
centered on the average observed heading. Each candidate drives the
energy optimizer forward from the window's first position against the
recorded states of the other agents; the candidate whose resampled
path best matches the observation (a blend of Frechet distance and
pointwise error) wins. Ties go to the candidate closest to the
average heading.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from . import _kernels
from ._kernels import vel_noise_count
from .core import (EPS, ObservationWindow, PredictorConfig, ParamSet,
                   SceneHistory, desired_speed, wrap_angle)
from .errors import HeadingUndefined, PathLengthMismatch, WindowTooShort
from .grouping import GroupTable, discrete_frechet
from .optimizer import DEFAULT_GD


def average_heading(window: ObservationWindow) -> float:
    """Circular mean of the observed step headings, in (-pi, pi].

    Zero-length steps carry no heading and are skipped; a window with
    no moving step has no average heading.
    """
    if len(window) < 2:
        raise HeadingUndefined("need at least two frames for a heading")
    diffs = np.diff(window.positions, axis=0)
    lens = np.hypot(diffs[:, 0], diffs[:, 1])
    ok = lens > EPS
    if not np.any(ok):
        raise HeadingUndefined("window shows no movement")
    angles = np.arctan2(diffs[ok, 1], diffs[ok, 0])
    return wrap_angle(math.atan2(float(np.mean(np.sin(angles))),
                                 float(np.mean(np.cos(angles)))))


def sample_headings(theta_a: float, n: int, step: float) -> np.ndarray:
    """Odd-sized fan of candidate headings centered on theta_a."""
    if n < 1 or n % 2 == 0:
        raise ValueError("candidate count must be odd and >= 1")
    half = (n - 1) // 2
    return np.array([wrap_angle(theta_a + m * step)
                     for m in range(-half, half + 1)])


def heading_cost_parts(observed, resampled):
    """(Frechet distance, summed pointwise distance) between paths."""
    obs = np.asarray(observed, dtype=np.float64).reshape(-1, 2)
    res = np.asarray(resampled, dtype=np.float64).reshape(-1, 2)
    if obs.shape[0] != res.shape[0]:
        raise PathLengthMismatch(
            "observed has %d nodes, resampled %d" % (obs.shape[0],
                                                     res.shape[0]))
    fre = discrete_frechet(obs, res)
    euc = float(np.sum(np.hypot(obs[:, 0] - res[:, 0],
                                obs[:, 1] - res[:, 1])))
    return fre, euc


def heading_cost(observed, resampled, eta: float) -> float:
    """Blend eta*Frechet + (1-eta)*pointwise of two equal-length paths."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    fre, euc = heading_cost_parts(observed, resampled)
    return eta * fre + (1.0 - eta) * euc


@dataclass(frozen=True)
class HeadingCandidate:
    """One evaluated fan member."""

    theta: float
    resampled_path: np.ndarray
    cost: float
    frechet_part: float
    euclid_part: float


@dataclass(frozen=True)
class _ResampleGeometry:
    start: np.ndarray
    v0: np.ndarray
    u_i: float
    has_group: bool
    u_l: float
    dt: float
    mem_pos: np.ndarray    # (S, maxM, 2)
    mem_vel: np.ndarray
    mem_count: np.ndarray  # (S,)
    nb_pos: np.ndarray     # (S, maxN, 2)
    nb_vel: np.ndarray
    nb_count: np.ndarray


def _resample_geometry(window: ObservationWindow, history: SceneHistory,
                       groups: Optional[GroupTable],
                       cfg: PredictorConfig) -> _ResampleGeometry:
    n = len(window)
    if n < 2:
        raise WindowTooShort("resampling needs >= 2 frames, got %d" % n)
    agent = window.agent_id
    u_i = desired_speed(window, cfg.speed_weights)
    group = groups.group_of(agent) if groups is not None else None
    has_group = group is not None and group.avg_speed is not None
    u_l = float(group.avg_speed) if has_group else 0.0
    companions = [m for m in group.members if m != agent] if group else []

    # Velocity state at the window's first frame: true backward
    # difference when the agent was already visible one frame earlier,
    # otherwise the first observed step as a warm start.
    first = window.frames[0]
    prior = history.state_of(agent, first - 1)
    if prior is not None:
        v0 = (window.positions[0] - prior[0]) / window.dt
    else:
        v0 = (window.positions[1] - window.positions[0]) / window.dt

    steps = n - 1
    mrows = []
    nrows = []
    for s in range(steps):
        frame = window.frames[s]
        scene = history.frame(frame)
        mpos, mvel, npos, nvel = [], [], [], []
        if scene is not None:
            for aid in sorted(scene.agents):
                if aid == agent:
                    continue
                p, v = scene.agents[aid]
                npos.append(p)
                nvel.append(v)
                if aid in companions:
                    mpos.append(p)
                    mvel.append(v)
        for p in history.obstacles:
            npos.append(p)
            nvel.append(np.zeros(2))
        mrows.append((mpos, mvel))
        nrows.append((npos, nvel))

    max_m = max((len(r[0]) for r in mrows), default=0)
    max_n = max((len(r[0]) for r in nrows), default=0)
    mem_pos = np.zeros((steps, max_m, 2))
    mem_vel = np.zeros((steps, max_m, 2))
    mem_count = np.zeros(steps, dtype=np.int64)
    nb_pos = np.zeros((steps, max_n, 2))
    nb_vel = np.zeros((steps, max_n, 2))
    nb_count = np.zeros(steps, dtype=np.int64)
    for s in range(steps):
        mpos, mvel = mrows[s]
        k = len(mpos)
        mem_count[s] = k
        if k:
            mem_pos[s, :k] = np.asarray(mpos)
            mem_vel[s, :k] = np.asarray(mvel)
        npos, nvel = nrows[s]
        k = len(npos)
        nb_count[s] = k
        if k:
            nb_pos[s, :k] = np.asarray(npos)
            nb_vel[s, :k] = np.asarray(nvel)

    return _ResampleGeometry(window.positions[0].copy(), v0, u_i, has_group,
                             u_l, window.dt, mem_pos, mem_vel, mem_count,
                             nb_pos, nb_vel, nb_count)


def _run_resample(geom: _ResampleGeometry, params: ParamSet, theta_g: float,
                  cfg: PredictorConfig, noise: np.ndarray) -> np.ndarray:
    g = DEFAULT_GD
    return _kernels.guided_rollout(
        params.as_vector(), float(theta_g),
        float(geom.start[0]), float(geom.start[1]),
        float(geom.v0[0]), float(geom.v0[1]),
        geom.u_i, geom.has_group, geom.u_l,
        geom.mem_pos, geom.mem_vel, geom.mem_count,
        geom.nb_pos, geom.nb_vel, geom.nb_count,
        geom.dt, noise, -cfg.v_bound, cfg.v_bound,
        cfg.n_v_salps, cfg.n_v_iters,
        g.max_steps, g.step_size, g.shrink, g.tol, g.h)


def resample_path(window: ObservationWindow, params: ParamSet,
                  theta_g: float, history: SceneHistory,
                  cfg: PredictorConfig, rng: np.random.Generator,
                  groups: Optional[GroupTable] = None) -> np.ndarray:
    """Replay the window under a fixed heading goal.

    Starts at the window's first position and rolls one optimized step
    per observed step against the recorded states of the other agents,
    returning len(window) - 1 positions aligned with positions[1:].
    """
    geom = _resample_geometry(window, history, groups, cfg)
    steps = len(window) - 1
    noise = rng.random((steps, vel_noise_count(cfg.n_v_salps,
                                               cfg.n_v_iters)))
    return _run_resample(geom, params, theta_g, cfg, noise)


def heading_candidates(window: ObservationWindow, params: ParamSet,
                       history: SceneHistory, cfg: PredictorConfig,
                       rng: np.random.Generator,
                       groups: Optional[GroupTable] = None
                       ) -> List[HeadingCandidate]:
    """Evaluate the whole candidate fan. Noise is drawn up front, one
    row per candidate, so the fan members are order-independent."""
    theta_a = average_heading(window)
    thetas = sample_headings(theta_a, cfg.n_headings, cfg.heading_step)
    geom = _resample_geometry(window, history, groups, cfg)
    steps = len(window) - 1
    noise = rng.random((len(thetas), steps,
                        vel_noise_count(cfg.n_v_salps, cfg.n_v_iters)))
    observed = window.positions[1:]
    out = []
    for i, theta in enumerate(thetas):
        path = _run_resample(geom, params, float(theta), cfg, noise[i])
        fre, euc = heading_cost_parts(observed, path)
        cost = cfg.eta * fre + (1.0 - cfg.eta) * euc
        out.append(HeadingCandidate(float(theta), path, cost, fre, euc))
    return out


def estimate_target_heading(window: ObservationWindow, params: ParamSet,
                            history: SceneHistory, cfg: PredictorConfig,
                            rng: np.random.Generator,
                            groups: Optional[GroupTable] = None) -> float:
    """Best candidate heading; ties break toward the average heading."""
    theta_a = average_heading(window)
    cands = heading_candidates(window, params, history, cfg, rng,
                               groups=groups)
    best = min(
        enumerate(cands),
        key=lambda p: (p[1].cost, abs(wrap_angle(p[1].theta - theta_a)), p[0]))
    return best[1].theta
