"""Hot numeric kernels: layer expansion, per-node costs, field sampling.

Every public function dispatches between a numba ``@njit`` loop version and
a vectorized pure-numpy version, selected once via ``accel``. Both versions
evaluate the same arithmetic expressions so results agree to float64
round-off; the parity test pins this.
"""

import math

import numpy as np

from .accel import NUMBA_ENABLED, njit

TWO_PI = 2.0 * math.pi


@njit(cache=True)
def _wrap(theta):
    w = (theta + math.pi) % TWO_PI
    if w <= 0.0:
        w += TWO_PI
    return w - math.pi


@njit(cache=True)
def _bilinear(values, ox, oy, res, x, y):
    """Sample a cell-center grid at (x, y), clamping to the border."""
    h, w = values.shape
    gx = (x - ox) / res - 0.5
    gy = (y - oy) / res - 0.5
    if gx < 0.0:
        gx = 0.0
    elif gx > w - 1.0:
        gx = w - 1.0
    if gy < 0.0:
        gy = 0.0
    elif gy > h - 1.0:
        gy = h - 1.0
    c0 = int(gx)
    r0 = int(gy)
    if c0 > w - 2:
        c0 = w - 2
    if r0 > h - 2:
        r0 = h - 2
    if c0 < 0:
        c0 = 0
    if r0 < 0:
        r0 = 0
    fx = gx - c0
    fy = gy - r0
    v00 = values[r0, c0]
    v01 = values[r0, c0 + 1]
    v10 = values[r0 + 1, c0]
    v11 = values[r0 + 1, c0 + 1]
    return (
        v00 * (1.0 - fx) * (1.0 - fy)
        + v01 * fx * (1.0 - fy)
        + v10 * (1.0 - fx) * fy
        + v11 * fx * fy
    )


@njit(cache=True)
def _agent_gauss(agents, t, x, y, eta, beta, robot_r):
    """Max over agents of the velocity-elongated Gaussian at time offset t."""
    best = 0.0
    for a in range(agents.shape[0]):
        cx = agents[a, 0] + t * agents[a, 2]
        cy = agents[a, 1] + t * agents[a, 3]
        dx = x - cx
        dy = y - cy
        sig_y = (agents[a, 4] + robot_r + eta) / 3.0
        speed = math.hypot(agents[a, 2], agents[a, 3])
        if speed > 0.0:
            cphi = agents[a, 2] / speed
            sphi = agents[a, 3] / speed
            lx = dx * cphi + dy * sphi
            ly = -dx * sphi + dy * cphi
            sig_x = sig_y + beta * speed / 3.0 if lx > 0.0 else sig_y
        else:
            lx = dx
            ly = dy
            sig_x = sig_y
        val = math.exp(-(lx * lx / (2.0 * sig_x * sig_x) + ly * ly / (2.0 * sig_y * sig_y)))
        if val > best:
            best = val
    return best


@njit(cache=True)
def _grid_quad(edt, ox, oy, res, x, y, eta, robot_r):
    dist = _bilinear(edt, ox, oy, res, x, y)
    delta = dist - robot_r
    if delta < 0.0:
        delta = 0.0
    rest = eta - delta
    if rest < 0.0:
        rest = 0.0
    return rest * rest


@njit(cache=True)
def _expand_layer_loop(states, lim, dt, v_samples, apos, arad, has_grid, edt, ox, oy, res, robot_r):
    n_states = states.shape[0]
    per = v_samples * v_samples
    out = np.empty((n_states * per, 5))
    parents = np.empty(n_states * per, np.int64)
    count = 0
    denom = v_samples - 1.0
    for m in range(n_states):
        x = states[m, 0]
        y = states[m, 1]
        th = states[m, 2]
        v = states[m, 3]
        w = states[m, 4]
        v_lo = max(lim[0], v + lim[4] * dt)
        v_hi = min(lim[1], v + lim[5] * dt)
        w_lo = max(lim[2], w + lim[6] * dt)
        w_hi = min(lim[3], w + lim[7] * dt)
        if v_lo > v_hi:
            v_lo = v_hi = lim[0] if v < lim[0] else lim[1]
        if w_lo > w_hi:
            w_lo = w_hi = lim[2] if w < lim[2] else lim[3]
        cth = math.cos(th)
        sth = math.sin(th)
        for i in range(v_samples):
            vs = v_lo + (v_hi - v_lo) * (i / denom)
            nx = x + dt * vs * cth
            ny = y + dt * vs * sth
            ok = True
            for a in range(apos.shape[0]):
                dxa = nx - apos[a, 0]
                dya = ny - apos[a, 1]
                rr = robot_r + arad[a]
                if dxa * dxa + dya * dya <= rr * rr:
                    ok = False
                    break
            if ok and has_grid:
                if _bilinear(edt, ox, oy, res, nx, ny) <= robot_r:
                    ok = False
            if not ok:
                continue
            for j in range(v_samples):
                ws = w_lo + (w_hi - w_lo) * (j / denom)
                out[count, 0] = nx
                out[count, 1] = ny
                out[count, 2] = _wrap(th + dt * ws)
                out[count, 3] = vs
                out[count, 4] = ws
                parents[count] = m
                count += 1
    return out[:count], parents[:count]


@njit(cache=True)
def _layer_costs_loop(
    states, px, py, pth, gamma_i, t, agents, has_grid, edt, ox, oy, res,
    eta, beta, robot_r, w_do, w_db, w_c, w_no, w_na, w_nt,
):
    n_states = states.shape[0]
    costs = np.empty(n_states)
    cpth = math.cos(pth)
    spth = math.sin(pth)
    for m in range(n_states):
        x = states[m, 0]
        y = states[m, 1]
        th = states[m, 2]
        d_agent = w_do * _agent_gauss(agents, t, x, y, eta, beta, robot_r)
        d_grid = 0.0
        if has_grid:
            d_grid = w_db * _grid_quad(edt, ox, oy, res, x, y, eta, robot_r)
        d = d_agent if d_agent >= d_grid else d_grid
        dxp = x - px
        dyp = y - py
        lon = dxp * cpth + dyp * spth
        lat = -dxp * spth + dyp * cpth
        ang = 1.0 - math.cos(th - pth)
        costs[m] = gamma_i * (w_c * d + w_no * lon * lon + w_na * lat * lat + w_nt * ang * ang)
    return costs


# ---------------------------------------------------------------------------
# Pure-numpy fallback implementations.
# ---------------------------------------------------------------------------


def _wrap_np(theta):
    w = np.mod(theta + np.pi, TWO_PI)
    w = np.where(w <= 0.0, w + TWO_PI, w)
    return w - np.pi


def _bilinear_np(values, ox, oy, res, x, y):
    h, w = values.shape
    gx = np.clip((np.asarray(x) - ox) / res - 0.5, 0.0, w - 1.0)
    gy = np.clip((np.asarray(y) - oy) / res - 0.5, 0.0, h - 1.0)
    c0 = np.clip(gx.astype(np.int64), 0, w - 2)
    r0 = np.clip(gy.astype(np.int64), 0, h - 2)
    fx = gx - c0
    fy = gy - r0
    v00 = values[r0, c0]
    v01 = values[r0, c0 + 1]
    v10 = values[r0 + 1, c0]
    v11 = values[r0 + 1, c0 + 1]
    return (
        v00 * (1.0 - fx) * (1.0 - fy)
        + v01 * fx * (1.0 - fy)
        + v10 * (1.0 - fx) * fy
        + v11 * fx * fy
    )


def _agent_gauss_np(agents, t, x, y, eta, beta, robot_r):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if agents.shape[0] == 0:
        return np.zeros(np.broadcast(x, y).shape)
    cx = agents[:, 0] + t * agents[:, 2]
    cy = agents[:, 1] + t * agents[:, 3]
    dx = x[..., None] - cx
    dy = y[..., None] - cy
    sig_y = (agents[:, 4] + robot_r + eta) / 3.0
    speed = np.hypot(agents[:, 2], agents[:, 3])
    moving = speed > 0.0
    safe = np.where(moving, speed, 1.0)
    cphi = np.where(moving, agents[:, 2] / safe, 1.0)
    sphi = np.where(moving, agents[:, 3] / safe, 0.0)
    lx = np.where(moving, dx * cphi + dy * sphi, dx)
    ly = np.where(moving, -dx * sphi + dy * cphi, dy)
    sig_x = np.where(moving & (lx > 0.0), sig_y + beta * speed / 3.0, sig_y)
    vals = np.exp(-(lx**2 / (2.0 * sig_x**2) + ly**2 / (2.0 * sig_y**2)))
    return vals.max(axis=-1)


def _grid_quad_np(edt, ox, oy, res, x, y, eta, robot_r):
    dist = _bilinear_np(edt, ox, oy, res, x, y)
    delta = np.maximum(dist - robot_r, 0.0)
    rest = np.maximum(eta - delta, 0.0)
    return rest * rest


def _expand_layer_np(states, lim, dt, v_samples, apos, arad, has_grid, edt, ox, oy, res, robot_r):
    n_states = states.shape[0]
    frac = np.arange(v_samples) / (v_samples - 1.0)
    v = states[:, 3]
    w = states[:, 4]
    v_lo = np.maximum(lim[0], v + lim[4] * dt)
    v_hi = np.minimum(lim[1], v + lim[5] * dt)
    w_lo = np.maximum(lim[2], w + lim[6] * dt)
    w_hi = np.minimum(lim[3], w + lim[7] * dt)
    bad_v = v_lo > v_hi
    if bad_v.any():
        pin = np.where(v < lim[0], lim[0], lim[1])
        v_lo = np.where(bad_v, pin, v_lo)
        v_hi = np.where(bad_v, pin, v_hi)
    bad_w = w_lo > w_hi
    if bad_w.any():
        pin = np.where(w < lim[2], lim[2], lim[3])
        w_lo = np.where(bad_w, pin, w_lo)
        w_hi = np.where(bad_w, pin, w_hi)
    vs = v_lo[:, None] + (v_hi - v_lo)[:, None] * frac[None, :]  # (M, V)
    ws = w_lo[:, None] + (w_hi - w_lo)[:, None] * frac[None, :]  # (M, V)
    cth = np.cos(states[:, 2])
    sth = np.sin(states[:, 2])
    nx = states[:, 0, None] + dt * vs * cth[:, None]  # (M, V)
    ny = states[:, 1, None] + dt * vs * sth[:, None]
    ok = np.ones_like(nx, dtype=bool)
    if apos.shape[0] > 0:
        dxa = nx[..., None] - apos[:, 0]
        dya = ny[..., None] - apos[:, 1]
        rr = robot_r + arad
        ok &= ~np.any(dxa**2 + dya**2 <= rr**2, axis=-1)
    if has_grid:
        ok &= _bilinear_np(edt, ox, oy, res, nx, ny) > robot_r
    nth = _wrap_np(states[:, 2, None, None] + dt * ws[:, None, :])  # (M, 1, V)
    shape = (n_states, v_samples, v_samples)
    children = np.empty(shape + (5,))
    children[..., 0] = nx[:, :, None]
    children[..., 1] = ny[:, :, None]
    children[..., 2] = nth
    children[..., 3] = vs[:, :, None]
    children[..., 4] = ws[:, None, :]
    mask = np.broadcast_to(ok[:, :, None], shape)
    parents = np.broadcast_to(
        np.arange(n_states, dtype=np.int64)[:, None, None], shape
    )
    return children[mask], parents[mask]


def _layer_costs_np(
    states, px, py, pth, gamma_i, t, agents, has_grid, edt, ox, oy, res,
    eta, beta, robot_r, w_do, w_db, w_c, w_no, w_na, w_nt,
):
    x = states[:, 0]
    y = states[:, 1]
    d_agent = w_do * _agent_gauss_np(agents, t, x, y, eta, beta, robot_r)
    if has_grid:
        d_grid = w_db * _grid_quad_np(edt, ox, oy, res, x, y, eta, robot_r)
        d = np.maximum(d_agent, d_grid)
    else:
        d = d_agent
    dxp = x - px
    dyp = y - py
    lon = dxp * math.cos(pth) + dyp * math.sin(pth)
    lat = -dxp * math.sin(pth) + dyp * math.cos(pth)
    ang = 1.0 - np.cos(states[:, 2] - pth)
    return gamma_i * (w_c * d + w_no * lon**2 + w_na * lat**2 + w_nt * ang**2)


_EMPTY_EDT = np.zeros((2, 2))


def expand_layer(states, lim, dt, v_samples, apos, arad, grid_ctx, robot_r):
    """Expand every state of a layer over its dynamic window.

    ``grid_ctx`` is None or (edt_meters, origin_x, origin_y, resolution).
    Returns (children (K, 5), parent_indices (K,)) with collision-rejected
    samples removed.
    """
    if grid_ctx is None:
        has_grid, edt, ox, oy, res = False, _EMPTY_EDT, 0.0, 0.0, 1.0
    else:
        has_grid = True
        edt, ox, oy, res = grid_ctx
    fn = _expand_layer_loop if NUMBA_ENABLED else _expand_layer_np
    return fn(states, lim, dt, v_samples, apos, arad, has_grid, edt, ox, oy, res, robot_r)


def layer_costs(states, ref_pose, gamma_i, t, agents, grid_ctx, params, robot_r):
    """Per-node cost gamma^i * (w_c * d_i + navigation terms) for a layer."""
    if grid_ctx is None:
        has_grid, edt, ox, oy, res = False, _EMPTY_EDT, 0.0, 0.0, 1.0
    else:
        has_grid = True
        edt, ox, oy, res = grid_ctx
    fn = _layer_costs_loop if NUMBA_ENABLED else _layer_costs_np
    return fn(
        states, ref_pose[0], ref_pose[1], ref_pose[2], gamma_i, t, agents,
        has_grid, edt, ox, oy, res,
        params.eta, params.beta, robot_r,
        params.w_do, params.w_db, params.w_c, params.w_no, params.w_na, params.w_nt,
    )


def agent_gauss(agents, t, x, y, eta, beta, robot_r):
    """Agent Gaussian field value(s); scalar in, scalar out."""
    if agents.shape[0] == 0:
        return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape) if (
            np.ndim(x) or np.ndim(y)
        ) else 0.0
    if np.ndim(x) == 0 and np.ndim(y) == 0 and NUMBA_ENABLED:
        return _agent_gauss(agents, t, float(x), float(y), eta, beta, robot_r)
    out = _agent_gauss_np(agents, t, x, y, eta, beta, robot_r)
    return float(out) if out.ndim == 0 else out


def bilinear_sample(values, ox, oy, res, x, y):
    """Border-clamped bilinear sample of a cell-center grid."""
    if np.ndim(x) == 0 and np.ndim(y) == 0 and NUMBA_ENABLED:
        return _bilinear(values, ox, oy, res, float(x), float(y))
    out = _bilinear_np(values, ox, oy, res, x, y)
    return float(out) if out.ndim == 0 else out


def warm_up():
    """Trigger numba compilation of all kernels (no-op on the numpy path)."""
    states = np.array([[0.0, 0.0, 0.0, 0.1, 0.0]])
    lim = np.array([0.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0])
    apos = np.array([[5.0, 5.0]])
    arad = np.array([0.3])
    agents = np.array([[5.0, 5.0, 0.1, 0.0, 0.3]])
    edt = np.full((4, 4), 10.0)
    ctx = (edt, 0.0, 0.0, 1.0)
    expand_layer(states, lim, 0.2, 2, apos, arad, ctx, 0.3)
    expand_layer(states, lim, 0.2, 2, apos, arad, None, 0.3)
    if NUMBA_ENABLED:
        _layer_costs_loop(
            states, 0.0, 0.0, 0.0, 1.0, 0.2, agents, True, edt, 0.0, 0.0, 1.0,
            0.3, 1.0, 0.3, 600.0, 200.0, 1.0, 5.0, 1.0, 0.5,
        )
        _agent_gauss(agents, 0.0, 0.0, 0.0, 0.3, 1.0, 0.3)
        _bilinear(edt, 0.0, 0.0, 1.0, 0.5, 0.5)
