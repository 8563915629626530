"""Compiled inner loops for the velocity optimizer.

Everything here works on the reduced energy form

    E(v) = quad*||v||^2 + lin.v + rad*||v|| + unit.(v/||v||) + const

so a single evaluation is a handful of flops regardless of how many
neighbors fed the coefficients. The salp update, gradient descent and
noise layout mirror the plain-Python implementations in optimizer.py;
tests assert the two paths agree.

Noise layout for one velocity search (all uniform [0, 1) draws):
    [0 : 2*(n_salps-1)]          initial swarm samples, xy interleaved
    [then 4 per iteration]       c2_x, c2_y, raw_x, raw_y with the
                                 leader sign taken from 2*raw - 1
"""

import math

import numpy as np
from numba import njit

from .core import EPS


def vel_noise_count(n_salps: int, n_iters: int) -> int:
    """Uniform draws consumed by one velocity search."""
    return 2 * (n_salps - 1) + 4 * n_iters


@njit(cache=True)
def _energy(vx, vy, quad, linx, liny, rad, unitx, unity, const):
    s2 = vx * vx + vy * vy
    s = math.sqrt(s2)
    e = quad * s2 + linx * vx + liny * vy + rad * s + const
    if s > EPS:
        e += (unitx * vx + unity * vy) / s
    return e


@njit(cache=True)
def _clamp(x, lo, hi):
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


@njit(cache=True)
def _gd(vx, vy, quad, linx, liny, rad, unitx, unity, const, lo, hi,
        max_steps, step0, shrink, tol, h):
    """Projected gradient descent with backtracking line search.

    Gradients are central differences; a non-finite value aborts and
    the best visited point is returned.
    """
    vx = _clamp(vx, lo, hi)
    vy = _clamp(vy, lo, hi)
    fx = _energy(vx, vy, quad, linx, liny, rad, unitx, unity, const)
    bx, by, bf = vx, vy, fx
    for _ in range(max_steps):
        gx = (_energy(vx + h, vy, quad, linx, liny, rad, unitx, unity, const)
              - _energy(vx - h, vy, quad, linx, liny, rad, unitx, unity, const)
              ) / (2.0 * h)
        gy = (_energy(vx, vy + h, quad, linx, liny, rad, unitx, unity, const)
              - _energy(vx, vy - h, quad, linx, liny, rad, unitx, unity, const)
              ) / (2.0 * h)
        if not (math.isfinite(gx) and math.isfinite(gy)):
            break
        gn = math.sqrt(gx * gx + gy * gy)
        if gn == 0.0:
            break
        t = step0
        accepted = False
        cx = vx
        cy = vy
        fc = fx
        while t * gn >= 1e-12:
            cx = _clamp(vx - t * gx, lo, hi)
            cy = _clamp(vy - t * gy, lo, hi)
            fc = _energy(cx, cy, quad, linx, liny, rad, unitx, unity, const)
            if math.isfinite(fc) and fc < fx:
                accepted = True
                break
            t *= shrink
        if not accepted:
            break
        dx = cx - vx
        dy = cy - vy
        vx, vy, fx = cx, cy, fc
        if fx < bf:
            bx, by, bf = vx, vy, fx
        if math.sqrt(dx * dx + dy * dy) < tol:
            break
    return bx, by


@njit(cache=True)
def argmin_velocity(pvx, pvy, quad, linx, liny, rad, unitx, unity, const,
                    lo, hi, noise, n_salps, n_iters,
                    gd_max_steps, gd_step0, gd_shrink, gd_tol, gd_h):
    """Salp swarm search over the velocity box, refined by descent.

    The previous velocity (clamped) seeds the swarm, so the returned
    energy never exceeds the incumbent's. Whenever an iteration's best
    sample matches or beats the food cost, gradient descent polishes it
    and the result becomes the new food.
    """
    sx = np.empty(n_salps)
    sy = np.empty(n_salps)
    sx[0] = _clamp(pvx, lo, hi)
    sy[0] = _clamp(pvy, lo, hi)
    for i in range(1, n_salps):
        sx[i] = lo + (hi - lo) * noise[2 * (i - 1)]
        sy[i] = lo + (hi - lo) * noise[2 * (i - 1) + 1]
    base = 2 * (n_salps - 1)
    best_x = sx[0]
    best_y = sy[0]
    best_cost = np.inf
    for it in range(n_iters):
        m = 0
        cm = _energy(sx[0], sy[0], quad, linx, liny, rad, unitx, unity, const)
        for i in range(1, n_salps):
            ci = _energy(sx[i], sy[i], quad, linx, liny, rad, unitx, unity,
                         const)
            if ci < cm:
                cm = ci
                m = i
        if cm <= best_cost:
            rx, ry = _gd(sx[m], sy[m], quad, linx, liny, rad, unitx, unity,
                         const, lo, hi, gd_max_steps, gd_step0, gd_shrink,
                         gd_tol, gd_h)
            best_x = rx
            best_y = ry
            best_cost = _energy(rx, ry, quad, linx, liny, rad, unitx, unity,
                                const)
        c1 = 2.0 * math.exp(-((4.0 * (it + 1) / n_iters) ** 2))
        o = base + 4 * it
        sgx = 1.0 if 2.0 * noise[o + 2] - 1.0 >= 0.0 else -1.0
        sgy = 1.0 if 2.0 * noise[o + 3] - 1.0 >= 0.0 else -1.0
        sx[0] = _clamp(best_x + sgx * c1 * ((hi - lo) * noise[o] + lo), lo, hi)
        sy[0] = _clamp(best_y + sgy * c1 * ((hi - lo) * noise[o + 1] + lo),
                       lo, hi)
        for i in range(1, n_salps):
            sx[i] = _clamp(0.5 * (sx[i] + sx[i - 1]), lo, hi)
            sy[i] = _clamp(0.5 * (sy[i] + sy[i - 1]), lo, hi)
    return best_x, best_y


@njit(cache=True)
def fit_cost(theta, self_pos, prev_vel, target_vel, z, u_i, has_group, u_l,
             att_dir, nb_dist, nb_unit, nb_vdot, nb_count, noise,
             lo, hi, n_salps, n_iters,
             gd_max_steps, gd_step0, gd_shrink, gd_tol, gd_h):
    """Decoupled parameter-fit objective for one theta sample.

    Each step s replays the observed scene at that instant: the context
    geometry is fixed, only the interaction gains depend on theta. The
    returned value is the sum of squared deviations between observed
    and recovered velocities.
    """
    l0 = theta[0]
    l1 = theta[1]
    l2 = theta[2]
    l3 = theta[3]
    l4 = theta[4]
    w = theta[5]
    d = theta[6]
    alpha = theta[7]
    amax = d * (1.0 - 1e-9)
    if alpha > amax:
        alpha = amax
    if alpha < 0.0:
        alpha = 0.0
    l4g = l4 if has_group else 0.0
    ulg = u_l if has_group else 0.0
    cost = 0.0
    n_steps = self_pos.shape[0]
    for s in range(n_steps):
        pvx = prev_vel[s, 0]
        pvy = prev_vel[s, 1]
        quad = l0 + l1 + l4g
        linx = -2.0 * l0 * pvx
        liny = -2.0 * l0 * pvy
        rad = -2.0 * (l1 * u_i + l4g * ulg)
        const = (l0 * (pvx * pvx + pvy * pvy) + l1 * u_i * u_i
                 + l4g * ulg * ulg)
        gx = z[0] - self_pos[s, 0]
        gy = z[1] - self_pos[s, 1]
        gn = math.sqrt(gx * gx + gy * gy)
        ux = 0.0
        uy = 0.0
        if gn > EPS:
            ux -= l2 * gx / gn
            uy -= l2 * gy / gn
        if has_group:
            ux += l3 * att_dir[s, 0]
            uy += l3 * att_dir[s, 1]
        for ni in range(nb_count[s]):
            r = nb_dist[s, ni]
            gap = d - r
            dg = w / (2.0 * d) * (gap + math.sqrt(gap * gap + alpha))
            linx -= dg * nb_unit[s, ni, 0]
            liny -= dg * nb_unit[s, ni, 1]
            const += dg * nb_vdot[s, ni]
        vx, vy = argmin_velocity(pvx, pvy, quad, linx, liny, rad, ux, uy,
                                 const, lo, hi, noise[s], n_salps, n_iters,
                                 gd_max_steps, gd_step0, gd_shrink, gd_tol,
                                 gd_h)
        ex = target_vel[s, 0] - vx
        ey = target_vel[s, 1] - vy
        cost += ex * ex + ey * ey
    return cost


@njit(cache=True)
def guided_rollout(theta, theta_g, start_x, start_y, pv0x, pv0y, u_i,
                   has_group, u_l, mem_pos, mem_vel, mem_count,
                   nb_pos, nb_vel, nb_count, dt, noise,
                   lo, hi, n_salps, n_iters,
                   gd_max_steps, gd_step0, gd_shrink, gd_tol, gd_h):
    """Resample a path under a fixed heading against recorded scenes.

    Step s scores candidates at the current resampled position against
    the stored states for that step (other agents and obstacles merged
    into the nb_* rows). Returns the resampled positions, one per step.
    """
    l0 = theta[0]
    l1 = theta[1]
    l2 = theta[2]
    l3 = theta[3]
    l4 = theta[4]
    w = theta[5]
    d = theta[6]
    alpha = theta[7]
    amax = d * (1.0 - 1e-9)
    if alpha > amax:
        alpha = amax
    if alpha < 0.0:
        alpha = 0.0
    l4g = l4 if has_group else 0.0
    ulg = u_l if has_group else 0.0
    hx = math.cos(theta_g)
    hy = math.sin(theta_g)
    n_steps = mem_count.shape[0]
    path = np.empty((n_steps, 2))
    px = start_x
    py = start_y
    pvx = pv0x
    pvy = pv0y
    for s in range(n_steps):
        quad = l0 + l1 + l4g
        linx = -2.0 * l0 * pvx
        liny = -2.0 * l0 * pvy
        rad = -2.0 * (l1 * u_i + l4g * ulg)
        const = (l0 * (pvx * pvx + pvy * pvy) + l1 * u_i * u_i
                 + l4g * ulg * ulg)
        ux = -l2 * hx
        uy = -l2 * hy
        if has_group:
            pvn = math.sqrt(pvx * pvx + pvy * pvy)
            if pvn > EPS:
                for mi in range(mem_count[s]):
                    mvx = mem_vel[s, mi, 0]
                    mvy = mem_vel[s, mi, 1]
                    mvn = math.sqrt(mvx * mvx + mvy * mvy)
                    dpx = px - mem_pos[s, mi, 0]
                    dpy = py - mem_pos[s, mi, 1]
                    dpn = math.sqrt(dpx * dpx + dpy * dpy)
                    if mvn > EPS and dpn > EPS:
                        a = (pvx * mvx + pvy * mvy) / (pvn * mvn)
                        ux += l3 * a * dpx / dpn
                        uy += l3 * a * dpy / dpn
        for ni in range(nb_count[s]):
            dpx = px - nb_pos[s, ni, 0]
            dpy = py - nb_pos[s, ni, 1]
            r = math.sqrt(dpx * dpx + dpy * dpy)
            if r <= EPS:
                continue
            gap = d - r
            dg = w / (2.0 * d) * (gap + math.sqrt(gap * gap + alpha))
            unx = dpx / r
            uny = dpy / r
            linx -= dg * unx
            liny -= dg * uny
            const += dg * (unx * nb_vel[s, ni, 0] + uny * nb_vel[s, ni, 1])
        vx, vy = argmin_velocity(pvx, pvy, quad, linx, liny, rad, ux, uy,
                                 const, lo, hi, noise[s], n_salps, n_iters,
                                 gd_max_steps, gd_step0, gd_shrink, gd_tol,
                                 gd_h)
        px += vx * dt
        py += vy * dt
        pvx = vx
        pvy = vy
        path[s, 0] = px
        path[s, 1] = py
    return path
