import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crowdcast import (Destination, Heading, LegacyParamSet, ParamSet,
                       build_context, interaction_gain, reduce_context,
                       total_energy)
from crowdcast.core import EPS
from crowdcast.energy import (attraction_energy, collision_energy_new,
                              collision_energy_original, damp_energy,
                              direction_energy, group_speed_energy,
                              heading_direction_energy, speed_energy)


def random_params(rng):
    d = rng.uniform(0.5, 5.0)
    return ParamSet(lambda0=rng.uniform(0.1, 3.0),
                    lambda1=rng.uniform(0.1, 3.0),
                    lambda2=rng.uniform(0.1, 3.0),
                    lambda3=rng.uniform(0.1, 3.0),
                    lambda4=rng.uniform(0.1, 3.0),
                    w=rng.uniform(0.1, 4.0),
                    d=d,
                    alpha=rng.uniform(0.0, 0.9 * d))


def random_scene(rng, grouped=True, heading=False):
    """Raw build_context keyword arguments for a small random scene."""
    self_pos = rng.uniform(-5.0, 5.0, 2)
    if heading:
        goal = Heading(rng.uniform(-math.pi, math.pi))
    else:
        goal = Destination(self_pos + rng.uniform(-6.0, 6.0, 2))
    # Neighbors at radii straddling the interaction distance.
    ang = rng.uniform(-math.pi, math.pi, 4)
    rad = rng.uniform(0.3, 6.0, 4)
    npos = self_pos + rad[:, None] * np.c_[np.cos(ang), np.sin(ang)]
    return dict(
        self_pos=self_pos,
        prev_vel=rng.uniform(-1.5, 1.5, 2),
        desired_speed=rng.uniform(0.3, 2.0),
        goal=goal,
        params=random_params(rng),
        member_positions=self_pos + rng.uniform(-2.0, 2.0, (2, 2)),
        member_velocities=rng.uniform(-1.5, 1.5, (2, 2)),
        group_speed=rng.uniform(0.3, 2.0) if grouped else None,
        neighbor_positions=npos,
        neighbor_velocities=rng.uniform(-1.5, 1.5, (4, 2)),
        obstacles=self_pos + rng.uniform(-4.0, 4.0, (2, 2)),
    )


def random_context(rng, **kw):
    return build_context(**random_scene(rng, **kw))


# ----------------------------------------------------------- single terms

def test_damp_energy():
    assert damp_energy((1.0, 2.0), (0.0, 0.0)) == 5.0
    assert damp_energy((0.3, -0.4), (0.3, -0.4)) == 0.0


def test_speed_terms():
    assert speed_energy((3.0, 4.0), 2.0) == 9.0
    assert speed_energy((0.0, 0.0), 1.5) == 2.25
    assert group_speed_energy((0.0, 1.0), 1.0) == 0.0


def test_direction_energy_cosine():
    # Aligned with the goal direction scores -1, opposed +1, orthogonal 0.
    assert direction_energy((2.0, 0.0), (0.0, 0.0), (5.0, 0.0)) == -1.0
    assert direction_energy((-2.0, 0.0), (0.0, 0.0), (5.0, 0.0)) == 1.0
    assert direction_energy((0.0, 3.0), (0.0, 0.0), (5.0, 0.0)) == 0.0


def test_direction_energy_gates():
    assert direction_energy((0.0, 0.0), (0.0, 0.0), (5.0, 0.0)) == 0.0
    assert direction_energy((1.0, 0.0), (2.0, 2.0), (2.0, 2.0)) == 0.0


def test_heading_direction_energy():
    assert heading_direction_energy((0.0, 2.0), math.pi / 2) == pytest.approx(-1.0)
    assert heading_direction_energy((1.0, 0.0), math.pi) == pytest.approx(1.0)
    assert heading_direction_energy((0.0, 0.0), 0.3) == 0.0


def test_attraction_sign():
    # One companion below the agent, both walking +x. Moving away from it
    # (up, along self-minus-member) costs energy; moving toward it pays.
    ctx = build_context((0.0, 0.0), (1.0, 0.0), 1.0, Destination((5.0, 0.0)),
                        ParamSet(1, 1, 1, 1, 1, 0, 1, 0),
                        member_positions=[(0.0, -1.0)],
                        member_velocities=[(1.0, 0.0)],
                        group_speed=1.0)
    assert attraction_energy((0.0, 1.0), ctx) == pytest.approx(1.0)
    assert attraction_energy((0.0, -1.0), ctx) == pytest.approx(-1.0)
    # Companion walking the other way flips the alignment gate.
    flipped = build_context((0.0, 0.0), (1.0, 0.0), 1.0,
                            Destination((5.0, 0.0)),
                            ParamSet(1, 1, 1, 1, 1, 0, 1, 0),
                            member_positions=[(0.0, -1.0)],
                            member_velocities=[(-1.0, 0.0)],
                            group_speed=1.0)
    assert attraction_energy((0.0, 1.0), flipped) == pytest.approx(-1.0)


def test_attraction_gates():
    ctx = build_context((0.0, 0.0), (0.0, 0.0), 1.0, Destination((5.0, 0.0)),
                        ParamSet(1, 1, 1, 1, 1, 0, 1, 0),
                        member_positions=[(0.0, -1.0)],
                        member_velocities=[(1.0, 0.0)],
                        group_speed=1.0)
    assert attraction_energy((0.0, 1.0), ctx) == 0.0  # standing agent
    still = build_context((0.0, 0.0), (1.0, 0.0), 1.0, Destination((5.0, 0.0)),
                          ParamSet(1, 1, 1, 1, 1, 0, 1, 0),
                          member_positions=[(0.0, -1.0)],
                          member_velocities=[(0.0, 0.0)],
                          group_speed=1.0)
    assert attraction_energy((0.0, 1.0), still) == 0.0  # standing companion


# ------------------------------------------------------- interaction gain

def test_gain_at_contact_and_cutoff():
    p = ParamSet(1, 1, 1, 1, 1, w=2.0, d=3.0, alpha=0.0)
    assert interaction_gain((0.0, 0.0), p) == pytest.approx(2.0)
    assert interaction_gain((3.0, 0.0), p) == 0.0
    assert interaction_gain((3.0001, 0.0), p) == 0.0
    assert interaction_gain((50.0, 0.0), p) == 0.0


def test_gain_monotone_and_linear_in_w():
    p = ParamSet(1, 1, 1, 1, 1, w=1.7, d=4.0, alpha=0.5)
    r = np.linspace(0.0, 8.0, 33)
    g = np.array([interaction_gain((x, 0.0), p) for x in r])
    assert np.all(np.diff(g) <= 1e-15)
    assert np.all(g >= 0.0)
    p2 = ParamSet(1, 1, 1, 1, 1, w=3.4, d=4.0, alpha=0.5)
    g2 = np.array([interaction_gain((x, 0.0), p2) for x in r])
    np.testing.assert_allclose(g2, 2.0 * g, rtol=1e-12)


def test_gain_alpha_rounds_the_corner():
    sharp = ParamSet(1, 1, 1, 1, 1, w=1.0, d=2.0, alpha=0.0)
    soft = ParamSet(1, 1, 1, 1, 1, w=1.0, d=2.0, alpha=1.0)
    assert interaction_gain((2.0, 0.0), sharp) == 0.0
    assert interaction_gain((2.0, 0.0), soft) == pytest.approx(0.25)
    assert interaction_gain((2.5, 0.0), soft) > 0.0


# ------------------------------------------------------- collision terms

def test_collision_new_single_neighbor():
    # Neighbor ahead on +x, standing still; unit = dp_hat = (-1, 0), so
    # the term is D * (unit . -v) = D * vx.
    p = ParamSet(1, 1, 1, 1, 1, w=2.0, d=4.0, alpha=0.0)
    ctx = build_context((0.0, 0.0), (1.0, 0.0), 1.0, Destination((5.0, 0.0)),
                        p, neighbor_positions=[(2.0, 0.0)],
                        neighbor_velocities=[(0.0, 0.0)])
    gain = interaction_gain((2.0, 0.0), p)
    assert collision_energy_new((1.0, 0.0), ctx) == pytest.approx(gain)
    assert collision_energy_new((-1.0, 0.0), ctx) == pytest.approx(-gain)
    assert collision_energy_new((0.0, 3.0), ctx) == pytest.approx(0.0)


def test_collision_new_is_affine():
    rng = np.random.default_rng(11)
    for _ in range(40):
        ctx = random_context(rng)
        a = rng.uniform(-2.5, 2.5, 2)
        b = rng.uniform(-2.5, 2.5, 2)
        mid = 0.5 * (a + b)
        second = (collision_energy_new(a, ctx)
                  - 2.0 * collision_energy_new(mid, ctx)
                  + collision_energy_new(b, ctx))
        assert abs(second) < 1e-10


def legacy_oracle(v, ctx, legacy, approach):
    """Line-by-line restatement of the Gaussian interaction term."""
    v = np.asarray(v, dtype=np.float64)
    vn = np.linalg.norm(v)
    if vn <= EPS or ctx.neighbor_dp.shape[0] == 0:
        return 0.0
    total = 0.0
    for dp, dist, nvel in zip(ctx.neighbor_dp, ctx.neighbor_dist,
                              ctx.neighbor_vel):
        rel = v - nvel
        reln = np.linalg.norm(rel)
        if reln <= EPS:
            d = dist
        elif approach == "orthogonal":
            d = np.linalg.norm(dp - (float(dp @ rel) / reln ** 2) * rel)
        else:
            d = np.linalg.norm(dp - (float(dp @ rel) / reln) * rel)
        wgt = math.exp(-dist * dist / (2.0 * legacy.sigma_w ** 2))
        cosang = float(dp @ v) / (dist * vn)
        wgt *= (0.5 * max(0.0, 1.0 - cosang)) ** legacy.beta
        total += wgt * math.exp(-d * d / (2.0 * legacy.sigma_d ** 2))
    return total


def test_collision_original_matches_oracle():
    rng = np.random.default_rng(12)
    legacy = LegacyParamSet(sigma_d=0.8, sigma_w=2.5, beta=1.4)
    for _ in range(25):
        ctx = random_context(rng)
        v = rng.uniform(-2.0, 2.0, 2)
        for approach in ("orthogonal", "printed"):
            got = collision_energy_original(v, ctx, legacy, approach)
            want = legacy_oracle(v, ctx, legacy, approach)
            assert got == pytest.approx(want, rel=1e-12, abs=1e-15)


def test_collision_original_approaches_differ():
    # With |v - v_j| = 2 the printed form doubles the subtracted
    # projection, so the two distance readings disagree.
    ctx = build_context((0.0, 0.0), (1.0, 0.0), 1.0, Destination((5.0, 0.0)),
                        ParamSet(1, 1, 1, 1, 1, 1, 2, 0),
                        neighbor_positions=[(2.0, 1.0)],
                        neighbor_velocities=[(-1.0, 0.0)])
    legacy = LegacyParamSet()
    v = (1.0, 0.0)
    ortho = collision_energy_original(v, ctx, legacy, "orthogonal")
    printed = collision_energy_original(v, ctx, legacy, "printed")
    assert abs(ortho - printed) > 1e-6
    with pytest.raises(ValueError):
        collision_energy_original(v, ctx, legacy, "diagonal")


def test_collision_original_gates():
    rng = np.random.default_rng(13)
    ctx = random_context(rng)
    legacy = LegacyParamSet()
    assert collision_energy_original((0.0, 0.0), ctx, legacy) == 0.0
    # Matching velocities hit the reln <= EPS branch: d falls back to
    # the current separation.
    ctx2 = build_context((0.0, 0.0), (1.0, 0.0), 1.0, Destination((5.0, 0.0)),
                         ParamSet(1, 1, 1, 1, 1, 1, 2, 0),
                         neighbor_positions=[(0.0, 2.0)],
                         neighbor_velocities=[(1.0, 0.0)])
    got = collision_energy_original((1.0, 0.0), ctx2, legacy)
    want = legacy_oracle((1.0, 0.0), ctx2, legacy, "orthogonal")
    assert got == pytest.approx(want, rel=1e-12)


def test_legacy_params_validation():
    with pytest.raises(ValueError):
        LegacyParamSet(sigma_d=0.0)
    with pytest.raises(ValueError):
        LegacyParamSet(sigma_w=-1.0)
    with pytest.raises(ValueError):
        LegacyParamSet(beta=-0.1)


# ------------------------------------------------------- context assembly

def test_build_context_merges_obstacles_as_static():
    ctx = build_context((0.0, 0.0), (1.0, 0.0), 1.0, Destination((5.0, 0.0)),
                        ParamSet(1, 1, 1, 1, 1, 1, 2, 0),
                        neighbor_positions=[(1.0, 0.0)],
                        neighbor_velocities=[(0.5, 0.5)],
                        obstacles=[(0.0, 3.0)])
    assert ctx.neighbor_dp.shape == (2, 2)
    np.testing.assert_allclose(ctx.neighbor_vel[1], [0.0, 0.0])
    np.testing.assert_allclose(ctx.neighbor_dist, [1.0, 3.0])
    np.testing.assert_allclose(ctx.neighbor_unit[0], [-1.0, 0.0])


def test_build_context_drops_coincident_rows():
    ctx = build_context((1.0, 1.0), (0.0, 0.0), 1.0, Destination((5.0, 0.0)),
                        ParamSet(1, 1, 1, 1, 1, 1, 2, 0),
                        neighbor_positions=[(1.0, 1.0), (2.0, 1.0)],
                        neighbor_velocities=[(1.0, 0.0), (0.0, 1.0)],
                        obstacles=[(1.0, 1.0)])
    assert ctx.neighbor_dp.shape == (1, 2)
    np.testing.assert_allclose(ctx.neighbor_vel[0], [0.0, 1.0])


def test_build_context_shape_mismatch():
    with pytest.raises(ValueError):
        build_context((0, 0), (0, 0), 1.0, Destination((1.0, 0.0)),
                      ParamSet(1, 1, 1, 1, 1, 1, 2, 0),
                      member_positions=[(1.0, 0.0)],
                      member_velocities=[(1.0, 0.0), (0.0, 1.0)],
                      group_speed=1.0)
    with pytest.raises(ValueError):
        build_context((0, 0), (0, 0), 1.0, Destination((1.0, 0.0)),
                      ParamSet(1, 1, 1, 1, 1, 1, 2, 0),
                      neighbor_positions=[(1.0, 0.0), (2.0, 0.0)],
                      neighbor_velocities=[(1.0, 0.0)])


def test_with_params_recomputes_gains():
    rng = np.random.default_rng(14)
    ctx = random_context(rng)
    p2 = random_params(rng)
    ctx2 = ctx.with_params(p2)
    want = [interaction_gain(dp, p2) for dp in ctx.neighbor_dp]
    np.testing.assert_allclose(ctx2.gains, want, rtol=1e-12)
    assert ctx2.neighbor_dp is ctx.neighbor_dp
    assert ctx2.prev_vel is ctx.prev_vel


# ------------------------------------------------- total and reduced form

def test_total_recomposes_from_terms():
    rng = np.random.default_rng(15)
    for grouped in (True, False):
        for _ in range(15):
            ctx = random_context(rng, grouped=grouped)
            v = rng.uniform(-2.5, 2.5, 2)
            bd = total_energy(v, ctx)
            p = ctx.params
            want = (p.lambda0 * bd.damp + p.lambda1 * bd.speed
                    + p.lambda2 * bd.direction + p.lambda3 * bd.attraction
                    + p.lambda4 * bd.group + bd.collision)
            assert bd.total == pytest.approx(want, rel=1e-12, abs=1e-15)
            if not grouped:
                assert bd.attraction == 0.0
                assert bd.group == 0.0


def test_total_terms_match_direct_calls():
    rng = np.random.default_rng(16)
    ctx = random_context(rng)
    v = rng.uniform(-2.0, 2.0, 2)
    bd = total_energy(v, ctx)
    assert bd.damp == damp_energy(v, ctx.prev_vel)
    assert bd.speed == speed_energy(v, ctx.desired_speed)
    assert bd.direction == direction_energy(v, ctx.self_pos, ctx.goal.point)
    assert bd.attraction == attraction_energy(v, ctx)
    assert bd.group == group_speed_energy(v, ctx.group_speed)
    assert bd.collision == collision_energy_new(v, ctx)


def test_original_variant_needs_legacy_params():
    rng = np.random.default_rng(17)
    ctx = random_context(rng)
    with pytest.raises(ValueError):
        total_energy((1.0, 0.0), ctx, collision_variant="original")
    with pytest.raises(ValueError):
        total_energy((1.0, 0.0), ctx, collision_variant="fancy")
    legacy = LegacyParamSet()
    bd = total_energy((1.0, 0.0), ctx, collision_variant="original",
                      legacy=legacy)
    assert bd.collision == pytest.approx(
        collision_energy_original((1.0, 0.0), ctx, legacy), rel=1e-12)


def test_reduced_matches_total():
    rng = np.random.default_rng(18)
    for grouped in (True, False):
        for heading in (True, False):
            for _ in range(10):
                ctx = random_context(rng, grouped=grouped, heading=heading)
                red = reduce_context(ctx)
                for _ in range(6):
                    v = rng.uniform(-2.5, 2.5, 2)
                    want = total_energy(v, ctx).total
                    assert red(v) == pytest.approx(want, rel=1e-10,
                                                   abs=1e-10)
                assert red((0.0, 0.0)) == pytest.approx(
                    total_energy((0.0, 0.0), ctx).total, rel=1e-10, abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(vx=st.floats(-2.5, 2.5), vy=st.floats(-2.5, 2.5),
       seed=st.integers(0, 30))
def test_reduced_matches_total_property(vx, vy, seed):
    rng = np.random.default_rng(seed)
    ctx = random_context(rng, grouped=seed % 2 == 0, heading=seed % 3 == 0)
    want = total_energy((vx, vy), ctx).total
    assert ctx.reduced()((vx, vy)) == pytest.approx(want, rel=1e-10,
                                                    abs=1e-10)


def reduced_gradient(red, v):
    """Closed-form gradient of the reduced energy away from v = 0."""
    vx, vy = float(v[0]), float(v[1])
    s = math.hypot(vx, vy)
    ux, uy = red.unit
    dot = ux * vx + uy * vy
    gx = (2.0 * red.quad * vx + red.lin[0] + red.rad * vx / s
          + ux / s - dot * vx / s ** 3)
    gy = (2.0 * red.quad * vy + red.lin[1] + red.rad * vy / s
          + uy / s - dot * vy / s ** 3)
    return np.array([gx, gy])


def test_reduced_gradient_matches_numeric():
    rng = np.random.default_rng(19)
    h = 1e-6
    done = 0
    while done < 30:
        ctx = random_context(rng, grouped=done % 2 == 0)
        v = rng.uniform(-2.5, 2.5, 2)
        if np.linalg.norm(v) <= 0.1:
            continue
        grad = reduced_gradient(reduce_context(ctx), v)
        num = np.empty(2)
        for k in range(2):
            step = np.zeros(2)
            step[k] = h
            num[k] = (total_energy(v + step, ctx).total
                      - total_energy(v - step, ctx).total) / (2.0 * h)
        np.testing.assert_allclose(grad, num, rtol=1e-4, atol=1e-6)
        done += 1


def test_rotation_equivariance():
    rng = np.random.default_rng(20)
    for heading in (False, True):
        for _ in range(10):
            kw = random_scene(rng, heading=heading)
            ang = rng.uniform(-math.pi, math.pi)
            c, s = math.cos(ang), math.sin(ang)
            R = np.array([[c, -s], [s, c]])

            def rot(a):
                return np.asarray(a, dtype=np.float64) @ R.T

            if heading:
                goal = Heading(kw["goal"].theta + ang)
            else:
                goal = Destination(rot(kw["goal"].point))
            turned = dict(kw, self_pos=rot(kw["self_pos"]),
                          prev_vel=rot(kw["prev_vel"]), goal=goal,
                          member_positions=rot(kw["member_positions"]),
                          member_velocities=rot(kw["member_velocities"]),
                          neighbor_positions=rot(kw["neighbor_positions"]),
                          neighbor_velocities=rot(kw["neighbor_velocities"]),
                          obstacles=rot(kw["obstacles"]))
            a = build_context(**kw)
            b = build_context(**turned)
            for _ in range(4):
                v = rng.uniform(-2.0, 2.0, 2)
                assert total_energy(v, a).total == pytest.approx(
                    total_energy(R @ v, b).total, rel=1e-9, abs=1e-9)
