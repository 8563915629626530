"""Per-step energy function over candidate velocities.

The cost of a candidate velocity v for one agent combines damping,
preferred speed, goal direction, group attraction, group speed and an
interaction (collision) term over every other agent and obstacle:

    E(v) = l0*||v - v_prev||^2 + l1*(||v|| - u_i)^2 - l2*(g_hat . v_hat)
         + l3*sum_j (vp_hat . vj_hat)(dp_hat . v_hat)
         + l4*(||v|| - u_l)^2 + E_inter(v)

with dp = p_self - p_j. Whenever a unit vector in a term is undefined
(norm <= EPS) that term contributes zero rather than raising.

Two interaction variants exist. The default one is affine in v:

    E_inter(v) = sum_j D(dp_j) * (dp_hat_j . (v_j - v))
    D(dp)      = w/(2d) * (d - ||dp|| + sqrt((d - ||dp||)^2 + alpha))

The older Gaussian variant (kept for comparison plots) uses separate
sigma_d / sigma_w / beta parameters and a closest-approach distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple, Union

import numpy as np

from .core import EPS, ParamSet, as_point


@dataclass(frozen=True)
class Destination:
    """Steer toward a fixed point z."""

    point: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "point", as_point(self.point))


@dataclass(frozen=True)
class Heading:
    """Steer along a fixed direction theta (radians)."""

    theta: float


Goal = Union[Destination, Heading]


@dataclass(frozen=True)
class LegacyParamSet:
    """Parameters of the Gaussian interaction variant."""

    sigma_d: float = 1.0
    sigma_w: float = 2.0
    beta: float = 1.0

    def __post_init__(self):
        if self.sigma_d <= 0.0 or self.sigma_w <= 0.0:
            raise ValueError("sigma_d and sigma_w must be positive")
        if self.beta < 0.0:
            raise ValueError("beta must be nonnegative")


def interaction_gain(dp, params: ParamSet) -> float:
    """Distance-dependent interaction strength D(dp).

    Decays to zero as ||dp|| grows past d; alpha rounds the corner at
    ||dp|| = d (exactly zero beyond d when alpha is 0).
    """
    r = float(np.linalg.norm(as_point(dp)))
    return _gains(np.array([r]), params)[0]


def _gains(dists: np.ndarray, params: ParamSet) -> np.ndarray:
    gap = params.d - dists
    return params.w / (2.0 * params.d) * (gap + np.sqrt(gap * gap + params.alpha))


@dataclass(frozen=True, eq=False)
class EnergyContext:
    """Static quantities for scoring one agent's candidate velocities.

    Neighbor rows cover every other agent plus the obstacles (with zero
    velocity); rows closer than EPS are dropped at build time since
    their unit vectors are undefined and their terms contribute zero.
    """

    self_pos: np.ndarray
    prev_vel: np.ndarray
    desired_speed: float
    goal: Goal
    params: ParamSet
    member_dp: np.ndarray       # (m, 2) self - member
    member_vel: np.ndarray      # (m, 2)
    group_speed: Optional[float]
    neighbor_dp: np.ndarray     # (n, 2) self - neighbor
    neighbor_dist: np.ndarray   # (n,)
    neighbor_unit: np.ndarray   # (n, 2)
    neighbor_vel: np.ndarray    # (n, 2)
    gains: np.ndarray           # (n,) D(dp) under params

    def with_params(self, params: ParamSet) -> "EnergyContext":
        """Same geometry under a different parameter set."""
        return replace(self, params=params,
                       gains=_gains(self.neighbor_dist, params))

    def reduced(self) -> "ReducedEnergy":
        return reduce_context(self)


def build_context(self_pos, prev_vel, desired_speed, goal: Goal,
                  params: ParamSet, *,
                  member_positions=None, member_velocities=None,
                  group_speed=None,
                  neighbor_positions=None, neighbor_velocities=None,
                  obstacles=None) -> EnergyContext:
    """Assemble an EnergyContext from raw scene state.

    Obstacles join the neighbor rows as static points. group_speed of
    None marks an ungrouped agent: the attraction and group-speed terms
    are then forced to zero regardless of member rows.
    """
    self_pos = as_point(self_pos)
    prev_vel = as_point(prev_vel)

    mpos = _rows(member_positions)
    mvel = _rows(member_velocities)
    if mpos.shape != mvel.shape:
        raise ValueError("member positions and velocities disagree")
    member_dp = self_pos[None, :] - mpos

    npos = _rows(neighbor_positions)
    nvel = _rows(neighbor_velocities)
    if npos.shape != nvel.shape:
        raise ValueError("neighbor positions and velocities disagree")
    obs = _rows(obstacles)
    allpos = np.vstack([npos, obs])
    allvel = np.vstack([nvel, np.zeros_like(obs)])

    dp = self_pos[None, :] - allpos
    dist = np.hypot(dp[:, 0], dp[:, 1])
    keep = dist > EPS
    dp, dist, allvel = dp[keep], dist[keep], allvel[keep]
    unit = dp / dist[:, None]

    return EnergyContext(
        self_pos=self_pos, prev_vel=prev_vel,
        desired_speed=float(desired_speed), goal=goal, params=params,
        member_dp=member_dp, member_vel=mvel,
        group_speed=None if group_speed is None else float(group_speed),
        neighbor_dp=dp, neighbor_dist=dist, neighbor_unit=unit,
        neighbor_vel=allvel, gains=_gains(dist, params))


def _rows(arr) -> np.ndarray:
    if arr is None:
        return np.zeros((0, 2))
    out = np.asarray(arr, dtype=np.float64)
    if out.size == 0:
        return np.zeros((0, 2))
    return out.reshape(-1, 2)


def damp_energy(v, prev_vel) -> float:
    d = as_point(v) - as_point(prev_vel)
    return float(d @ d)


def speed_energy(v, u: float) -> float:
    return float((np.linalg.norm(as_point(v)) - u) ** 2)


def direction_energy(v, self_pos, dest) -> float:
    """Negative cosine between the to-destination direction and v."""
    g = as_point(dest) - as_point(self_pos)
    gn = np.linalg.norm(g)
    v = as_point(v)
    vn = np.linalg.norm(v)
    if gn <= EPS or vn <= EPS:
        return 0.0
    return float(-(g @ v) / (gn * vn))


def heading_direction_energy(v, theta: float) -> float:
    """Negative cosine between the heading direction and v."""
    v = as_point(v)
    vn = np.linalg.norm(v)
    if vn <= EPS:
        return 0.0
    return float(-(math.cos(theta) * v[0] + math.sin(theta) * v[1]) / vn)


def attraction_energy(v, ctx: EnergyContext) -> float:
    """Group cohesion term.

    For each companion j, the previous-velocity alignment gates a pull
    along the j-to-self direction; moving away from aligned companions
    costs energy, moving toward them is rewarded.
    """
    if ctx.member_dp.shape[0] == 0:
        return 0.0
    v = as_point(v)
    vn = np.linalg.norm(v)
    pvn = np.linalg.norm(ctx.prev_vel)
    if vn <= EPS or pvn <= EPS:
        return 0.0
    mvn = np.hypot(ctx.member_vel[:, 0], ctx.member_vel[:, 1])
    dpn = np.hypot(ctx.member_dp[:, 0], ctx.member_dp[:, 1])
    ok = (mvn > EPS) & (dpn > EPS)
    if not np.any(ok):
        return 0.0
    align = (ctx.member_vel[ok] @ ctx.prev_vel) / (mvn[ok] * pvn)
    pull = (ctx.member_dp[ok] @ v) / (dpn[ok] * vn)
    return float(np.sum(align * pull))


def group_speed_energy(v, u_l: float) -> float:
    return float((np.linalg.norm(as_point(v)) - u_l) ** 2)


def collision_energy_new(v, ctx: EnergyContext) -> float:
    """Affine interaction term sum_j D_j * (dp_hat_j . (v_j - v))."""
    if ctx.gains.size == 0:
        return 0.0
    v = as_point(v)
    rel = ctx.neighbor_vel - v[None, :]
    return float(np.sum(ctx.gains * np.sum(ctx.neighbor_unit * rel, axis=1)))


def collision_energy_original(v, ctx: EnergyContext,
                              legacy: LegacyParamSet,
                              approach: str = "orthogonal") -> float:
    """Gaussian interaction term with a closest-approach distance.

    approach selects how the distance d to the relative-motion line is
    measured: "orthogonal" projects dp onto the unit relative velocity
    (the geometric point-to-line distance), "printed" scales the
    projection by the relative speed instead. Both collapse to d=||dp||
    when the relative velocity vanishes.
    """
    if approach not in ("orthogonal", "printed"):
        raise ValueError("approach must be 'orthogonal' or 'printed'")
    if ctx.neighbor_dp.shape[0] == 0:
        return 0.0
    v = as_point(v)
    vn = np.linalg.norm(v)
    if vn <= EPS:
        return 0.0
    total = 0.0
    for dp, dist, nvel in zip(ctx.neighbor_dp, ctx.neighbor_dist,
                              ctx.neighbor_vel):
        rel = v - nvel
        reln = np.linalg.norm(rel)
        if reln <= EPS:
            d = dist
        else:
            coeff = float(dp @ rel) / reln
            if approach == "orthogonal":
                d = np.linalg.norm(dp - (coeff / reln) * rel)
            else:
                d = np.linalg.norm(dp - coeff * rel)
        cosang = float(dp @ v) / (dist * vn)
        w = math.exp(-dist * dist / (2.0 * legacy.sigma_w ** 2))
        w *= (0.5 * max(0.0, 1.0 - cosang)) ** legacy.beta
        total += w * math.exp(-d * d / (2.0 * legacy.sigma_d ** 2))
    return float(total)


@dataclass(frozen=True)
class EnergyBreakdown:
    """Unweighted term values plus the weighted total."""

    damp: float
    speed: float
    direction: float
    attraction: float
    group: float
    collision: float
    total: float


def total_energy(v, ctx: EnergyContext, collision_variant: str = "new",
                 legacy: Optional[LegacyParamSet] = None) -> EnergyBreakdown:
    """Score one candidate velocity, term by term."""
    p = ctx.params
    damp = damp_energy(v, ctx.prev_vel)
    speed = speed_energy(v, ctx.desired_speed)
    if isinstance(ctx.goal, Heading):
        direction = heading_direction_energy(v, ctx.goal.theta)
    else:
        direction = direction_energy(v, ctx.self_pos, ctx.goal.point)
    if ctx.group_speed is None:
        attraction = 0.0
        group = 0.0
    else:
        attraction = attraction_energy(v, ctx)
        group = group_speed_energy(v, ctx.group_speed)
    if collision_variant == "new":
        collision = collision_energy_new(v, ctx)
    elif collision_variant == "original":
        if legacy is None:
            raise ValueError("original collision variant needs legacy params")
        collision = collision_energy_original(v, ctx, legacy)
    else:
        raise ValueError("unknown collision variant %r" % collision_variant)
    total = (p.lambda0 * damp + p.lambda1 * speed + p.lambda2 * direction
             + p.lambda3 * attraction + p.lambda4 * group + collision)
    return EnergyBreakdown(damp, speed, direction, attraction, group,
                           collision, total)


@dataclass(frozen=True)
class ReducedEnergy:
    """Collapsed coefficients of the default energy in v.

    E(v) = quad*||v||^2 + lin.v + rad*||v|| + unit.(v/||v||) + const,
    the unit term skipped when ||v|| <= EPS. Exactly equal to the
    weighted breakdown total for the "new" collision variant.
    """

    quad: float
    lin: Tuple[float, float]
    rad: float
    unit: Tuple[float, float]
    const: float

    def __call__(self, v) -> float:
        vx, vy = float(v[0]), float(v[1])
        s2 = vx * vx + vy * vy
        s = math.sqrt(s2)
        e = (self.quad * s2 + self.lin[0] * vx + self.lin[1] * vy
             + self.rad * s + self.const)
        if s > EPS:
            e += (self.unit[0] * vx + self.unit[1] * vy) / s
        return e


def reduce_context(ctx: EnergyContext) -> ReducedEnergy:
    """Fold an EnergyContext into ReducedEnergy coefficients."""
    p = ctx.params
    grouped = ctx.group_speed is not None
    l4 = p.lambda4 if grouped else 0.0
    u_l = ctx.group_speed if grouped else 0.0

    quad = p.lambda0 + p.lambda1 + l4
    lin = -2.0 * p.lambda0 * ctx.prev_vel
    rad = -2.0 * (p.lambda1 * ctx.desired_speed + l4 * u_l)
    const = (p.lambda0 * float(ctx.prev_vel @ ctx.prev_vel)
             + p.lambda1 * ctx.desired_speed ** 2 + l4 * u_l ** 2)

    unit = np.zeros(2)
    if isinstance(ctx.goal, Heading):
        unit -= p.lambda2 * np.array([math.cos(ctx.goal.theta),
                                      math.sin(ctx.goal.theta)])
    else:
        g = ctx.goal.point - ctx.self_pos
        gn = np.linalg.norm(g)
        if gn > EPS:
            unit -= (p.lambda2 / gn) * g
    if grouped and ctx.member_dp.shape[0]:
        pvn = np.linalg.norm(ctx.prev_vel)
        if pvn > EPS:
            mvn = np.hypot(ctx.member_vel[:, 0], ctx.member_vel[:, 1])
            dpn = np.hypot(ctx.member_dp[:, 0], ctx.member_dp[:, 1])
            ok = (mvn > EPS) & (dpn > EPS)
            if np.any(ok):
                align = (ctx.member_vel[ok] @ ctx.prev_vel) / (mvn[ok] * pvn)
                unit += p.lambda3 * np.sum(
                    (align / dpn[ok])[:, None] * ctx.member_dp[ok], axis=0)

    if ctx.gains.size:
        lin = lin - np.sum(ctx.gains[:, None] * ctx.neighbor_unit, axis=0)
        const += float(np.sum(
            ctx.gains * np.sum(ctx.neighbor_unit * ctx.neighbor_vel, axis=1)))

    return ReducedEnergy(float(quad), (float(lin[0]), float(lin[1])),
                         float(rad), (float(unit[0]), float(unit[1])),
                         float(const))
