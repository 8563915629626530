"""Salp-swarm and gradient-descent machinery plus the two estimators.

estimate_velocity picks one agent's next velocity by swarm search with
descent refinement over the energy surface. estimate_parameters fits
the agent's energy weights to its observed window by replaying each
observed step against the recorded scene: the fit objective for a
parameter sample is the summed squared gap between observed velocities
and the velocities the optimizer would have chosen under that sample.

Reproducibility note: every routine consumes uniform draws from the
supplied generator in one documented burst, so results depend only on
the generator state at entry, never on evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from ._kernels import vel_noise_count
from .core import (EPS, ObservationWindow, ParamSet, PredictorConfig,
                   SceneHistory, desired_speed)
from .energy import EnergyContext, ReducedEnergy
from .errors import WindowTooShort
from .grouping import GroupTable


@dataclass(frozen=True)
class GdSettings:
    """Gradient descent knobs: central differences with backtracking."""

    max_steps: int = 50
    step_size: float = 0.1
    shrink: float = 0.5
    tol: float = 1e-5
    h: float = 1e-6


DEFAULT_GD = GdSettings()


def c1_weight(k: int, max_iters: int) -> float:
    """Exploration weight 2*exp(-(4k/L)^2), decaying over iterations."""
    return 2.0 * math.exp(-((4.0 * k / max_iters) ** 2))


def ssa_step(states: np.ndarray, food: np.ndarray, lo, hi,
             c1: float, c2: np.ndarray, c3: np.ndarray) -> np.ndarray:
    """One swarm move: leader jumps around the food, followers average.

    The leader offsets the food by sign(c3)*c1*((hi-lo)*c2 + lo) per
    dimension; follower i becomes the midpoint of its own previous
    state and the already-updated predecessor. Everything is clamped
    to the box.
    """
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    out = np.empty_like(states)
    sign = np.where(np.asarray(c3) >= 0.0, 1.0, -1.0)
    out[0] = np.clip(food + sign * c1 * ((hi - lo) * c2 + lo), lo, hi)
    for i in range(1, states.shape[0]):
        out[i] = np.clip(0.5 * (states[i] + out[i - 1]), lo, hi)
    return out


@dataclass
class Swarm:
    """Swarm state between updates; food is the best-known sample."""

    states: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    food: np.ndarray
    food_cost: float
    max_iters: int
    iteration: int = 0


def ssa_update(swarm: Swarm, rng: np.random.Generator) -> Swarm:
    """Advance the swarm one iteration. Draws 2*dim uniforms."""
    k = swarm.iteration + 1
    c1 = c1_weight(k, swarm.max_iters)
    dim = swarm.states.shape[1]
    c2 = rng.random(dim)
    c3 = 2.0 * rng.random(dim) - 1.0
    states = ssa_step(swarm.states, swarm.food, swarm.lo, swarm.hi,
                      c1, c2, c3)
    return Swarm(states, swarm.lo, swarm.hi, swarm.food, swarm.food_cost,
                 swarm.max_iters, k)


def gradient_descent(objective: Callable[[np.ndarray], float],
                     start, lo, hi,
                     settings: GdSettings = DEFAULT_GD) -> np.ndarray:
    """Minimize a callable over a box from start; returns best visited.

    Numerical central-difference gradients; backtracking halts a step
    when it stops improving, a non-finite value aborts the run.
    """
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    x = np.clip(np.asarray(start, dtype=np.float64), lo, hi)
    fx = float(objective(x))
    best = x.copy()
    best_f = fx
    h = settings.h
    for _ in range(settings.max_steps):
        g = np.empty_like(x)
        for i in range(x.size):
            up = x.copy()
            dn = x.copy()
            up[i] += h
            dn[i] -= h
            g[i] = (float(objective(up)) - float(objective(dn))) / (2.0 * h)
        if not np.all(np.isfinite(g)):
            break
        gn = float(np.linalg.norm(g))
        if gn == 0.0:
            break
        t = settings.step_size
        accepted = False
        cand = x
        fc = fx
        while t * gn >= 1e-12:
            cand = np.clip(x - t * g, lo, hi)
            fc = float(objective(cand))
            if math.isfinite(fc) and fc < fx:
                accepted = True
                break
            t *= settings.shrink
        if not accepted:
            break
        delta = float(np.linalg.norm(cand - x))
        x, fx = cand, fc
        if fx < best_f:
            best = x.copy()
            best_f = fx
        if delta < settings.tol:
            break
    return best


def ssa_gd_minimize(objective: Callable[[np.ndarray], float], lo, hi,
                    n_salps: int, n_iters: int, rng: np.random.Generator,
                    seed_point=None, settings: GdSettings = DEFAULT_GD,
                    trace: Optional[list] = None) -> Tuple[np.ndarray, float]:
    """Swarm search refined by descent whenever the swarm improves.

    seed_point, when given, occupies the first swarm slot (clamped);
    the rest start uniform in the box. Draw order: all initial samples
    row-major, then per iteration c2 followed by the raw sign draws.
    When trace is a list, the incumbent cost is appended after every
    iteration.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=np.float64))
    hi = np.atleast_1d(np.asarray(hi, dtype=np.float64))
    dim = lo.size
    n_seed = 0 if seed_point is None else 1
    n_init = n_salps - n_seed
    noise = rng.random(n_init * dim + n_iters * 2 * dim)
    states = np.empty((n_salps, dim))
    if seed_point is not None:
        states[0] = np.clip(np.asarray(seed_point, dtype=np.float64), lo, hi)
    states[n_seed:] = lo + (hi - lo) * noise[:n_init * dim].reshape(n_init, dim)
    idx = n_init * dim
    best = states[0].copy()
    best_cost = np.inf
    for it in range(n_iters):
        costs = [float(objective(s)) for s in states]
        m = int(np.argmin(costs))
        if costs[m] <= best_cost:
            best = gradient_descent(objective, states[m], lo, hi, settings)
            best_cost = float(objective(best))
        if trace is not None:
            trace.append(best_cost)
        c1 = c1_weight(it + 1, n_iters)
        c2 = noise[idx:idx + dim]
        c3 = 2.0 * noise[idx + dim:idx + 2 * dim] - 1.0
        idx += 2 * dim
        states = ssa_step(states, best, lo, hi, c1, c2, c3)
    return best, best_cost


def estimate_velocity(prev_vel, params: ParamSet, ctx: EnergyContext,
                      cfg: PredictorConfig,
                      rng: np.random.Generator) -> np.ndarray:
    """Next velocity for one agent: argmin of the context energy.

    The previous velocity seeds the search, so the returned energy
    never exceeds the incumbent's (after clamping to the box).
    """
    if ctx.params is not params:
        ctx = ctx.with_params(params)
    red = ctx.reduced()
    noise = rng.random(vel_noise_count(cfg.n_v_salps, cfg.n_v_iters))
    return _argmin_reduced(prev_vel, red, cfg, noise)


def _argmin_reduced(prev_vel, red: ReducedEnergy, cfg: PredictorConfig,
                    noise: np.ndarray) -> np.ndarray:
    g = DEFAULT_GD
    vx, vy = _kernels.argmin_velocity(
        float(prev_vel[0]), float(prev_vel[1]),
        red.quad, red.lin[0], red.lin[1], red.rad, red.unit[0], red.unit[1],
        red.const, -cfg.v_bound, cfg.v_bound, noise,
        cfg.n_v_salps, cfg.n_v_iters,
        g.max_steps, g.step_size, g.shrink, g.tol, g.h)
    return np.array([vx, vy])


@dataclass(frozen=True)
class ParamFit:
    """Fitted parameters and the fit objective value they achieved."""

    params: ParamSet
    cost: float


@dataclass(frozen=True)
class FitGeometry:
    """Per-step static arrays for the decoupled fit of one agent."""

    self_pos: np.ndarray    # (S, 2)
    prev_vel: np.ndarray    # (S, 2)
    target_vel: np.ndarray  # (S, 2)
    z: np.ndarray           # (2,) goal point, the last observed position
    u_i: float
    has_group: bool
    u_l: float
    att_dir: np.ndarray     # (S, 2)
    nb_dist: np.ndarray     # (S, maxN)
    nb_unit: np.ndarray     # (S, maxN, 2)
    nb_vdot: np.ndarray     # (S, maxN)
    nb_count: np.ndarray    # (S,) int64


def _scene_rows(history: SceneHistory, frame: int, skip_agent: int):
    """Positions and velocities of every other agent at a frame,
    with the obstacles appended as static rows."""
    scene = history.frame(frame)
    pos = []
    vel = []
    if scene is not None:
        for aid in sorted(scene.agents):
            if aid == skip_agent:
                continue
            p, v = scene.agents[aid]
            pos.append(p)
            vel.append(v)
    obs = history.obstacles
    pos = np.array(pos).reshape(-1, 2) if pos else np.zeros((0, 2))
    vel = np.array(vel).reshape(-1, 2) if vel else np.zeros((0, 2))
    pos = np.vstack([pos, obs])
    vel = np.vstack([vel, np.zeros_like(obs)])
    return pos, vel


def _member_rows(history: SceneHistory, frame: int, companions):
    scene = history.frame(frame)
    pos = []
    vel = []
    if scene is not None:
        for aid in companions:
            state = scene.agents.get(aid)
            if state is not None:
                pos.append(state[0])
                vel.append(state[1])
    pos = np.array(pos).reshape(-1, 2) if pos else np.zeros((0, 2))
    vel = np.array(vel).reshape(-1, 2) if vel else np.zeros((0, 2))
    return pos, vel


def _attraction_direction(self_pos, prev_vel, mem_pos, mem_vel) -> np.ndarray:
    """Sum of alignment-gated unit pulls, the theta-free attraction part."""
    out = np.zeros(2)
    pvn = np.linalg.norm(prev_vel)
    if pvn <= EPS or mem_pos.shape[0] == 0:
        return out
    dp = self_pos[None, :] - mem_pos
    dpn = np.hypot(dp[:, 0], dp[:, 1])
    mvn = np.hypot(mem_vel[:, 0], mem_vel[:, 1])
    ok = (dpn > EPS) & (mvn > EPS)
    if not np.any(ok):
        return out
    align = (mem_vel[ok] @ prev_vel) / (mvn[ok] * pvn)
    return np.sum((align / dpn[ok])[:, None] * dp[ok], axis=0)


def fit_geometry(window: ObservationWindow, history: SceneHistory,
                 groups: Optional[GroupTable],
                 cfg: PredictorConfig) -> FitGeometry:
    """Extract the per-step arrays the fit objective replays.

    Step s targets the observed velocity into window index s+2 and
    scores candidates against the recorded scene one frame earlier.
    """
    n = len(window)
    if n < 3:
        raise WindowTooShort(
            "parameter fitting needs >= 3 frames, got %d" % n)
    agent = window.agent_id
    u_i = desired_speed(window, cfg.speed_weights)
    group = groups.group_of(agent) if groups is not None else None
    has_group = group is not None and group.avg_speed is not None
    u_l = float(group.avg_speed) if has_group else 0.0
    companions = [m for m in group.members if m != agent] if group else []

    steps = n - 2
    self_pos = np.empty((steps, 2))
    prev_vel = np.empty((steps, 2))
    target_vel = np.empty((steps, 2))
    att_dir = np.zeros((steps, 2))
    rows = []
    for s in range(steps):
        j = s + 2
        frame = window.frames[j - 1]
        self_pos[s] = window.positions[j - 1]
        prev_vel[s] = (window.positions[j - 1] - window.positions[j - 2]) / window.dt
        target_vel[s] = (window.positions[j] - window.positions[j - 1]) / window.dt
        npos, nvel = _scene_rows(history, frame, agent)
        dp = self_pos[s][None, :] - npos
        dist = np.hypot(dp[:, 0], dp[:, 1])
        keep = dist > EPS
        dist = dist[keep]
        unit = dp[keep] / dist[:, None]
        vdot = np.sum(unit * nvel[keep], axis=1)
        rows.append((dist, unit, vdot))
        if has_group:
            mpos, mvel = _member_rows(history, frame, companions)
            att_dir[s] = _attraction_direction(self_pos[s], prev_vel[s],
                                               mpos, mvel)

    max_n = max((r[0].size for r in rows), default=0)
    nb_dist = np.zeros((steps, max_n))
    nb_unit = np.zeros((steps, max_n, 2))
    nb_vdot = np.zeros((steps, max_n))
    nb_count = np.zeros(steps, dtype=np.int64)
    for s, (dist, unit, vdot) in enumerate(rows):
        k = dist.size
        nb_count[s] = k
        nb_dist[s, :k] = dist
        nb_unit[s, :k] = unit
        nb_vdot[s, :k] = vdot

    return FitGeometry(self_pos, prev_vel, target_vel,
                       window.positions[-1].copy(), u_i, has_group, u_l,
                       att_dir, nb_dist, nb_unit, nb_vdot, nb_count)


def fit_sample_cost(theta_vec, geom: FitGeometry, cfg: PredictorConfig,
                    vel_noise: np.ndarray) -> float:
    """Fit objective for one raw parameter vector.

    vel_noise has one row of vel_noise_count(...) uniforms per step;
    permuting steps together with their noise rows leaves the total
    unchanged up to float addition order.
    """
    g = DEFAULT_GD
    return float(_kernels.fit_cost(
        np.asarray(theta_vec, dtype=np.float64),
        geom.self_pos, geom.prev_vel, geom.target_vel, geom.z,
        geom.u_i, geom.has_group, geom.u_l, geom.att_dir,
        geom.nb_dist, geom.nb_unit, geom.nb_vdot, geom.nb_count,
        vel_noise, -cfg.v_bound, cfg.v_bound,
        cfg.n_v_salps, cfg.n_v_iters,
        g.max_steps, g.step_size, g.shrink, g.tol, g.h))


def estimate_parameters(window: ObservationWindow, history: SceneHistory,
                        groups: Optional[GroupTable], cfg: PredictorConfig,
                        rng: np.random.Generator) -> ParamFit:
    """Fit one agent's energy weights to its observed window.

    Swarm search over the parameter box; no descent refinement here,
    the food simply tracks the best sampled cost. Draw order: initial
    samples (n_salps, 8), then c2 (n_iters, 8), then the sign draws
    (n_iters, 8), then velocity noise (n_iters, n_salps, steps, F).
    """
    geom = fit_geometry(window, history, groups, cfg)
    steps = geom.self_pos.shape[0]
    lo = np.asarray(cfg.theta_lo, dtype=np.float64)
    hi = np.asarray(cfg.theta_hi, dtype=np.float64)
    nf = vel_noise_count(cfg.n_v_salps, cfg.n_v_iters)

    init = rng.random((cfg.n_salps, 8))
    c2 = rng.random((cfg.n_iters, 8))
    raw3 = rng.random((cfg.n_iters, 8))
    vel_noise = rng.random((cfg.n_iters, cfg.n_salps, steps, nf))

    states = lo + (hi - lo) * init
    best = states[0].copy()
    best_cost = np.inf
    for it in range(cfg.n_iters):
        costs = [fit_sample_cost(states[n], geom, cfg, vel_noise[it, n])
                 for n in range(cfg.n_salps)]
        m = int(np.argmin(costs))
        if costs[m] <= best_cost:
            best = states[m].copy()
            best_cost = float(costs[m])
        c1 = c1_weight(it + 1, cfg.n_iters)
        states = ssa_step(states, best, lo, hi, c1, c2[it],
                          2.0 * raw3[it] - 1.0)
    return ParamFit(ParamSet.from_vector(best), best_cost)
