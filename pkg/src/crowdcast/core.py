"""Core domain types shared by every stage of the predictor.

Positions and velocities are plain numpy arrays of shape (2,) in metres
and metres per second. Frame indices are integers in resampled units,
i.e. consecutive frames are exactly ``dt`` seconds apart. Angles are
radians in (-pi, pi] everywhere inside the library; degrees appear only
at the CLI boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidWeights, WindowTooShort

#: Norm threshold below which a unit vector is treated as undefined.
EPS = 1e-9

#: Weight-sum tolerance for desired-speed averaging.
WEIGHT_TOL = 1e-9


def as_point(p) -> np.ndarray:
    """Coerce a 2-vector into a float64 array of shape (2,)."""
    a = np.asarray(p, dtype=np.float64)
    if a.shape != (2,):
        raise ValueError("expected a 2-vector, got shape %r" % (a.shape,))
    return a


def wrap_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    w = math.atan2(math.sin(theta), math.cos(theta))
    if w <= -math.pi:
        w = math.pi
    return w


@dataclass(frozen=True)
class ParamSet:
    """Per-agent energy weights.

    lambda0..lambda4 scale the damping, speed, direction, attraction and
    group-speed terms. w, d and alpha shape the interaction gain:
    w is the interaction strength, d the interaction distance in metres
    and alpha the corner-smoothing constant, constrained to 0 <= alpha < d.
    """

    lambda0: float
    lambda1: float
    lambda2: float
    lambda3: float
    lambda4: float
    w: float
    d: float
    alpha: float

    def __post_init__(self):
        for name in ("lambda0", "lambda1", "lambda2", "lambda3", "lambda4", "w"):
            if getattr(self, name) < 0.0:
                raise ValueError("%s must be nonnegative" % name)
        if self.d <= 0.0:
            raise ValueError("d must be positive")
        if not 0.0 <= self.alpha < self.d:
            raise ValueError("alpha must satisfy 0 <= alpha < d")

    @classmethod
    def from_vector(cls, vec: Sequence[float]) -> "ParamSet":
        """Build from a raw 8-vector, clamping alpha just below d.

        Swarm samples move inside a fixed box, so alpha can land at or
        above d; the clamp keeps the gain formula well defined without
        biasing the rest of the sample.
        """
        v = [float(x) for x in vec]
        if len(v) != 8:
            raise ValueError("expected 8 parameters, got %d" % len(v))
        d = v[6]
        alpha = min(v[7], d * (1.0 - 1e-9))
        if alpha < 0.0:
            alpha = 0.0
        return cls(v[0], v[1], v[2], v[3], v[4], v[5], d, alpha)

    def as_vector(self) -> np.ndarray:
        return np.array(
            [self.lambda0, self.lambda1, self.lambda2, self.lambda3,
             self.lambda4, self.w, self.d, self.alpha],
            dtype=np.float64,
        )


#: Default sampling box for ParamSet vectors, one (lo, hi) pair per entry.
THETA_LO = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1, 0.0)
THETA_HI = (10.0, 10.0, 10.0, 10.0, 10.0, 5.0, 10.0, 10.0)


@dataclass(frozen=True)
class PredictorConfig:
    """Resolved knobs for one prediction run.

    obs_len is the observation window length N, pred_len the rollout
    horizon, min_obs the shortest observation accepted by the stream
    metrics, and frechet_threshold the grouping distance cutoff in
    metres. The remaining fields size the two swarm optimizers and the
    heading fan.
    """

    obs_len: int = 8
    pred_len: int = 12
    dt: float = 0.4
    min_obs: int = 7
    frechet_threshold: float = 1.8
    n_salps: int = 12
    n_iters: int = 10
    n_v_salps: int = 10
    n_v_iters: int = 5
    n_headings: int = 31
    heading_step: float = math.pi / 30.0
    eta: float = 0.5
    v_bound: float = 2.5
    speed_weights: Optional[Tuple[float, ...]] = None
    theta_lo: Tuple[float, ...] = THETA_LO
    theta_hi: Tuple[float, ...] = THETA_HI
    stride: Optional[int] = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.obs_len < 2:
            raise ValueError("obs_len must be >= 2")
        if self.pred_len < 1:
            raise ValueError("pred_len must be >= 1")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.min_obs < 1:
            raise ValueError("min_obs must be >= 1")
        if self.frechet_threshold < 0.0:
            raise ValueError("frechet_threshold must be nonnegative")
        for name in ("n_salps", "n_iters", "n_v_salps", "n_v_iters"):
            if getattr(self, name) < 1:
                raise ValueError("%s must be >= 1" % name)
        if self.n_headings < 1 or self.n_headings % 2 == 0:
            raise ValueError("n_headings must be odd and >= 1")
        if self.heading_step <= 0.0:
            raise ValueError("heading_step must be positive")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if self.v_bound <= 0.0:
            raise ValueError("v_bound must be positive")
        if len(self.theta_lo) != 8 or len(self.theta_hi) != 8:
            raise ValueError("theta bounds must have 8 entries")
        if any(l > h for l, h in zip(self.theta_lo, self.theta_hi)):
            raise ValueError("theta_lo must not exceed theta_hi")
        if self.theta_lo[6] <= 0.0:
            raise ValueError("lower bound for d must be positive")
        if self.stride is not None and self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.rng_seed < 0:
            raise ValueError("rng_seed must be nonnegative")
        if self.speed_weights is not None:
            if any(w <= 0.0 for w in self.speed_weights):
                raise ValueError("speed_weights must be positive")

    @property
    def issue_stride(self) -> int:
        """Frames between consecutive prediction issue times."""
        return self.stride if self.stride is not None else self.obs_len


@dataclass(frozen=True)
class ObservationWindow:
    """Most recent observed positions of one agent.

    frames are contiguous resampled indices and positions[i] is the
    agent's location at frames[i]. The last frame is the issue time.
    """

    agent_id: int
    frames: Tuple[int, ...]
    positions: np.ndarray
    dt: float

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ValueError("positions must have shape (n, 2)")
        if pos.shape[0] != len(self.frames):
            raise ValueError("positions and frames disagree in length")
        if len(self.frames) == 0:
            raise ValueError("window must contain at least one frame")
        for a, b in zip(self.frames, self.frames[1:]):
            if b != a + 1:
                raise ValueError("window frames must be contiguous")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "positions", pos)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def issue_frame(self) -> int:
        return self.frames[-1]

    @property
    def last_position(self) -> np.ndarray:
        return self.positions[-1]


def finite_velocity(window: ObservationWindow, k: int) -> np.ndarray:
    """Backward-difference velocity (p_k - p_{k-1}) / dt at window index k."""
    n = len(window)
    if n < 2:
        raise WindowTooShort("need at least two frames for a velocity")
    if not 1 <= k < n:
        raise WindowTooShort("velocity index %d outside [1, %d)" % (k, n))
    return (window.positions[k] - window.positions[k - 1]) / window.dt


def step_speeds(window: ObservationWindow) -> np.ndarray:
    """Speeds of the n-1 observed steps, oldest first."""
    if len(window) < 2:
        raise WindowTooShort("need at least two frames for step speeds")
    diffs = np.diff(window.positions, axis=0) / window.dt
    return np.hypot(diffs[:, 0], diffs[:, 1])


def desired_speed(window: ObservationWindow, weights=None) -> float:
    """Weighted average of observed step speeds.

    weights must have one entry per step and sum to 1 within 1e-9;
    None means a uniform average.
    """
    speeds = step_speeds(window)
    if weights is None:
        return float(np.mean(speeds))
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != speeds.shape:
        raise InvalidWeights(
            "expected %d weights, got %d" % (speeds.size, w.size))
    if abs(float(np.sum(w)) - 1.0) > WEIGHT_TOL:
        raise InvalidWeights("weights must sum to 1 within %g" % WEIGHT_TOL)
    if np.any(w <= 0.0):
        raise InvalidWeights("weights must be positive")
    return float(np.dot(w, speeds))


@dataclass(frozen=True)
class SceneFrame:
    """All agents observed at one frame, plus the static obstacles."""

    frame: int
    agents: Mapping[int, Tuple[np.ndarray, np.ndarray]]
    obstacles: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))


class SceneHistory:
    """Per-frame scene states up to some time, with static obstacles.

    Velocities stored per agent are backward differences against the
    previous frame; an agent's first appearance carries zero velocity.
    """

    def __init__(self, frames: Iterable[SceneFrame], dt: float,
                 obstacles=None):
        ordered = sorted(frames, key=lambda f: f.frame)
        self._frames: Dict[int, SceneFrame] = {f.frame: f for f in ordered}
        if len(self._frames) != len(ordered):
            raise ValueError("duplicate frame index in history")
        self.dt = float(dt)
        if obstacles is None:
            obstacles = ordered[0].obstacles if ordered else np.zeros((0, 2))
        self.obstacles = np.asarray(obstacles, dtype=np.float64).reshape(-1, 2)

    @classmethod
    def from_tracks(cls, tracks: Mapping[int, Tuple[Sequence[int], np.ndarray]],
                    dt: float, obstacles=None) -> "SceneHistory":
        """Build from per-agent (frames, positions) tracks.

        Velocity at a frame is the backward difference when the agent
        was present at the previous frame, zero otherwise.
        """
        per_frame: Dict[int, Dict[int, Tuple[np.ndarray, np.ndarray]]] = {}
        for agent_id, (frames, positions) in tracks.items():
            frames = [int(f) for f in frames]
            pos = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
            if len(frames) != pos.shape[0]:
                raise ValueError("track length mismatch for agent %r" % agent_id)
            index = {f: i for i, f in enumerate(frames)}
            for i, f in enumerate(frames):
                if f - 1 in index:
                    vel = (pos[i] - pos[index[f - 1]]) / dt
                else:
                    vel = np.zeros(2)
                per_frame.setdefault(f, {})[int(agent_id)] = (pos[i], vel)
        obs = np.zeros((0, 2)) if obstacles is None else obstacles
        obs = np.asarray(obs, dtype=np.float64).reshape(-1, 2)
        frames = [SceneFrame(f, agents, obs) for f, agents in per_frame.items()]
        return cls(frames, dt, obs)

    @property
    def frame_ids(self):
        return sorted(self._frames)

    def frame(self, t: int) -> Optional[SceneFrame]:
        return self._frames.get(t)

    def up_to(self, t: int) -> "SceneHistory":
        """History restricted to frames <= t. Shares frame objects."""
        kept = [f for idx, f in self._frames.items() if idx <= t]
        return SceneHistory(kept, self.dt, self.obstacles)

    def agents_at(self, t: int):
        frame = self._frames.get(t)
        return sorted(frame.agents) if frame else []

    def state_of(self, agent_id: int, t: int):
        """(position, velocity) of an agent at frame t, or None."""
        frame = self._frames.get(t)
        if frame is None:
            return None
        return frame.agents.get(agent_id)

    def window_of(self, agent_id: int, t: int,
                  max_len: int) -> Optional[ObservationWindow]:
        """Contiguous observation suffix of length <= max_len ending at t."""
        if self.state_of(agent_id, t) is None:
            return None
        frames = [t]
        f = t - 1
        while len(frames) < max_len and self.state_of(agent_id, f) is not None:
            frames.append(f)
            f -= 1
        frames.reverse()
        positions = np.array([self.state_of(agent_id, f)[0] for f in frames])
        return ObservationWindow(agent_id, tuple(frames), positions, self.dt)
