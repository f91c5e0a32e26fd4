"""Compiled inner loops of the scaled gas solver.

Conserved variables per cell are (v, U, E) with E = theta + U^2/2, flux
(-U, P, P U), P = theta / v, characteristic speed sqrt(2 theta) / v.
Everything here is sequential with a fixed summation order, so results are
bitwise reproducible.
"""

import math

import numpy as np
from numba import njit

LIMITER_NONE = 0
LIMITER_MINMOD = 1

CONDUCTION_IMPLICIT = 0
CONDUCTION_EXPLICIT = 1

BC_PROFILE = 0
BC_FROZEN = 1

# wave parameter vector layout
W_EPS, W_KAPPA, W_THETA_MINUS, W_THETA_PLUS, W_ETA_MAX, W_CONSTANT = range(6)

STATUS_OK = 0
STATUS_POSITIVITY = 1



@njit(cache=True)
def _minmod(a, b):
    if a * b <= 0.0:
        return 0.0
    if abs(a) < abs(b):
        return a
    return b


@njit(cache=True)
def bpoly_eval(c, xn, e):
    """Evaluate a piecewise Bernstein polynomial (scipy BPoly layout) at e."""
    n = xn.shape[0]
    i = int((e - xn[0]) / (xn[1] - xn[0]))
    if i < 0:
        i = 0
    if i > n - 2:
        i = n - 2
    while i > 0 and e < xn[i]:
        i -= 1
    while i < n - 2 and e > xn[i + 1]:
        i += 1
    s = (e - xn[i]) / (xn[i + 1] - xn[i])
    r = 1.0 - s
    deg = c.shape[0] - 1
    total = 0.0
    binom = 1.0
    for a in range(deg + 1):
        total += c[a, i] * binom * s**a * r ** (deg - a)
        binom = binom * (deg - a) / (a + 1)
    return total


@njit(cache=True)
def ghost_values(wave, Tc, Tpc, xn, ghost_y, tau, out):
    """Conserved (v, U, E) of the corrected profile at the four ghost centres.

    ``out`` has shape (3, 4): columns are the two left ghosts (outer first)
    followed by the two right ghosts (inner first).
    """
    eps = wave[W_EPS]
    kappa = wave[W_KAPPA]
    eta_max = wave[W_ETA_MAX]
    t = eps * eps * tau
    root = math.sqrt(1.0 + t)
    for j in range(4):
        if wave[W_CONSTANT] != 0.0:
            T = wave[W_THETA_PLUS]
            Tp = 0.0
        else:
            eta = eps * ghost_y[j] / root
            if eta < -eta_max:
                T = wave[W_THETA_MINUS]
                Tp = 0.0
            elif eta > eta_max:
                T = wave[W_THETA_PLUS]
                Tp = 0.0
            else:
                T = bpoly_eval(Tc, xn, eta)
                Tp = bpoly_eval(Tpc, xn, eta)
        u = 0.5 * kappa * Tp / (root * T)
        U = eps * u
        theta = T - 0.5 * U * U
        out[0, j] = T
        out[1, j] = U
        out[2, j] = theta + 0.5 * U * U


@njit(cache=True)
def hyperbolic_rhs(q, ghosts, h, limiter, qe, half_slope, flux, rhs, bflux):
    """Finite-volume divergence with Rusanov fluxes on a piecewise-linear reconstruction.

    ``ghosts`` columns: outer-left, inner-left, inner-right, outer-right.
    Writes -dF/dy into ``rhs`` and the left/right boundary face fluxes into
    ``bflux[0]`` and ``bflux[1]``. ``qe``, ``half_slope`` and ``flux`` are work
    arrays of shapes (3, n+4), (3, n+4), (3, n+1).
    """
    n = q.shape[1]
    m = n + 4
    inv_h = 1.0 / h
    for k in range(3):
        qe[k, 0] = ghosts[k, 0]
        qe[k, 1] = ghosts[k, 1]
        for i in range(n):
            qe[k, i + 2] = q[k, i]
        qe[k, n + 2] = ghosts[k, 2]
        qe[k, n + 3] = ghosts[k, 3]
    for k in range(3):
        half_slope[k, 0] = 0.0
        half_slope[k, m - 1] = 0.0
        for j in range(1, m - 1):
            dl = qe[k, j] - qe[k, j - 1]
            dr = qe[k, j + 1] - qe[k, j]
            if limiter == LIMITER_MINMOD:
                half_slope[k, j] = 0.5 * _minmod(dl, dr)
            else:
                half_slope[k, j] = 0.25 * (dl + dr)
        # edge cells reconstruct from interior data only and ghosts stay flat, so the
        # boundary flux is a characteristic upwind flux against the ghost state
        half_slope[k, 1] = 0.0
        half_slope[k, m - 2] = 0.0
        half_slope[k, 2] = 0.5 * (qe[k, 3] - qe[k, 2])
        half_slope[k, m - 3] = 0.5 * (qe[k, m - 3] - qe[k, m - 4])
    for f in range(n + 1):
        jl = f + 1
        jr = f + 2
        vl = qe[0, jl] + half_slope[0, jl]
        ul = qe[1, jl] + half_slope[1, jl]
        el = qe[2, jl] + half_slope[2, jl]
        vr = qe[0, jr] - half_slope[0, jr]
        ur = qe[1, jr] - half_slope[1, jr]
        er = qe[2, jr] - half_slope[2, jr]
        tl = el - 0.5 * ul * ul
        tr = er - 0.5 * ur * ur
        ivl = 1.0 / vl
        ivr = 1.0 / vr
        pl = tl * ivl
        pr = tr * ivr
        al = math.sqrt(2.0 * abs(tl)) * abs(ivl)
        ar = math.sqrt(2.0 * abs(tr)) * abs(ivr)
        a = al if al > ar else ar
        flux[0, f] = 0.5 * (-ul - ur) - 0.5 * a * (vr - vl)
        flux[1, f] = 0.5 * (pl + pr) - 0.5 * a * (ur - ul)
        flux[2, f] = 0.5 * (pl * ul + pr * ur) - 0.5 * a * (er - el)
    for k in range(3):
        for i in range(n):
            rhs[k, i] = -(flux[k, i + 1] - flux[k, i]) * inv_h
        bflux[0, k] = flux[k, 0]
        bflux[1, k] = flux[k, n]


@njit(cache=True)
def face_conductivity(v, v_ghost_left, v_ghost_right, kappa, c):
    """kappa times the face average of 1/v, including both boundary faces."""
    n = v.shape[0]
    prev = 1.0 / v_ghost_left
    for f in range(n):
        cur = 1.0 / v[f]
        c[f] = 0.5 * kappa * (prev + cur)
        prev = cur
    c[n] = 0.5 * kappa * (prev + 1.0 / v_ghost_right)


@njit(cache=True)
def conduction_trapezoidal(theta, c, tl0, tl1, tr0, tr1, dt, h, out, cp, dp):
    """Crank-Nicolson step of theta_t = (c theta_y)_y with Dirichlet ghosts.

    ``tl0, tr0`` are the ghost temperatures at the old time, ``tl1, tr1`` at the
    new time. Writes the new temperatures into ``out`` and returns the
    time-integrated net energy inflow through the two boundary faces.
    """
    n = theta.shape[0]
    r = 0.5 * dt / (h * h)
    # right-hand side (I + r A) theta, stored in out
    for i in range(n):
        left = tl0 if i == 0 else theta[i - 1]
        right = tr0 if i == n - 1 else theta[i + 1]
        out[i] = theta[i] + r * (c[i + 1] * (right - theta[i]) - c[i] * (theta[i] - left))
    out[0] += r * c[0] * tl1
    out[n - 1] += r * c[n] * tr1
    # Thomas sweep for -r c_i x_{i-1} + (1 + r (c_i + c_{i+1})) x_i - r c_{i+1} x_{i+1}
    b = 1.0 + r * (c[0] + c[1])
    cp[0] = -r * c[1] / b
    dp[0] = out[0] / b
    for i in range(1, n):
        a = -r * c[i]
        b = 1.0 + r * (c[i] + c[i + 1])
        up = -r * c[i + 1] if i < n - 1 else 0.0
        inv = 1.0 / (b - a * cp[i - 1])
        cp[i] = up * inv
        dp[i] = (out[i] - a * dp[i - 1]) * inv
    out[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        out[i] = dp[i] - cp[i] * out[i + 1]
    inflow_old = -c[0] * (theta[0] - tl0) / h + c[n] * (tr0 - theta[n - 1]) / h
    inflow_new = -c[0] * (out[0] - tl1) / h + c[n] * (tr1 - out[n - 1]) / h
    return 0.5 * dt * (inflow_old + inflow_new)


@njit(cache=True)
def conduction_explicit(theta, c, tl0, tl1, tr0, tr1, dt, h, n_sub, out, work):
    """Forward-Euler substeps of theta_t = (c theta_y)_y, ghosts interpolated in time."""
    n = theta.shape[0]
    for i in range(n):
        out[i] = theta[i]
    ds = dt / n_sub
    inflow = 0.0
    for s in range(n_sub):
        w = s / n_sub
        tl = (1.0 - w) * tl0 + w * tl1
        tr = (1.0 - w) * tr0 + w * tr1
        for i in range(n):
            left = tl if i == 0 else out[i - 1]
            right = tr if i == n - 1 else out[i + 1]
            work[i] = out[i] + ds / (h * h) * (c[i + 1] * (right - out[i]) - c[i] * (out[i] - left))
        inflow += ds * (-c[0] * (out[0] - tl) / h + c[n] * (tr - out[n - 1]) / h)
        for i in range(n):
            out[i] = work[i]
    return inflow


@njit(cache=True)
def stable_step(q, h, cfl, kappa, conduction):
    """Largest stable step: acoustic CFL, plus the parabolic limit for explicit conduction."""
    n = q.shape[1]
    speed = 0.0
    vmin = q[0, 0]
    for i in range(n):
        v = q[0, i]
        theta = q[2, i] - 0.5 * q[1, i] * q[1, i]
        s = math.sqrt(2.0 * theta) / v
        if s > speed:
            speed = s
        if v < vmin:
            vmin = v
    dt = cfl * h / speed
    if conduction == CONDUCTION_EXPLICIT:
        dp = cfl * h * h * vmin / (2.0 * kappa)
        if dp < dt:
            dt = dp
    return dt


@njit(cache=True)
def _conduct(q, g0, g1, dt, h, kappa, conduction, cfl, theta, c, out, cp, dp, inflow):
    n = q.shape[1]
    for i in range(n):
        theta[i] = q[2, i] - 0.5 * q[1, i] * q[1, i]
    face_conductivity(q[0], g0[0, 1], g0[0, 2], kappa, c)
    tl0 = g0[2, 1] - 0.5 * g0[1, 1] ** 2
    tl1 = g1[2, 1] - 0.5 * g1[1, 1] ** 2
    tr0 = g0[2, 2] - 0.5 * g0[1, 2] ** 2
    tr1 = g1[2, 2] - 0.5 * g1[1, 2] ** 2
    if conduction == CONDUCTION_IMPLICIT:
        gain = conduction_trapezoidal(theta, c, tl0, tl1, tr0, tr1, dt, h, out, cp, dp)
    else:
        vmin = q[0, 0]
        for i in range(n):
            if q[0, i] < vmin:
                vmin = q[0, i]
        limit = h * h * vmin / (2.0 * kappa)
        n_sub = max(1, int(math.ceil(dt / (cfl * limit))))
        gain = conduction_explicit(theta, c, tl0, tl1, tr0, tr1, dt, h, n_sub, out, cp)
    for i in range(n):
        q[2, i] += out[i] - theta[i]
    inflow[2] += gain


@njit(cache=True)
def advance(
    q, tau, tau_target, fixed_dt, h, cfl, kappa, limiter, conduction, bc,
    wave, Tc, Tpc, xn, ghost_y, frozen, inflow,
):
    """Strang-split steps (half conduction, SSP-RK2 hyperbolic, half conduction).

    Advances ``q`` in place from ``tau`` to ``tau_target`` with CFL-limited
    steps, the last one truncated to land exactly on the target. With
    ``fixed_dt > 0`` a single step of that size is taken instead.
    Returns (tau_reached, status, steps).
    """
    n = q.shape[1]
    qe = np.empty((3, n + 4))
    half_slope = np.empty((3, n + 4))
    flux = np.empty((3, n + 1))
    rhs = np.empty((3, n))
    q1 = np.empty((3, n))
    bflux = np.empty((2, 3))
    theta = np.empty(n)
    c = np.empty(n + 1)
    out = np.empty(n)
    cp = np.empty(n)
    dp = np.empty(n)
    g0 = np.empty((3, 4))
    gm = np.empty((3, 4))
    g1 = np.empty((3, 4))
    if bc == BC_FROZEN:
        g0[:, :] = frozen
        gm[:, :] = frozen
        g1[:, :] = frozen
    else:
        ghost_values(wave, Tc, Tpc, xn, ghost_y, tau, g0)
    steps = 0
    while True:
        if fixed_dt > 0.0:
            if steps == 1:
                break
            new_tau = tau + fixed_dt
        else:
            if tau >= tau_target:
                break
            dt = stable_step(q, h, cfl, kappa, conduction)
            if tau + dt * (1.0 + 1e-9) >= tau_target:
                new_tau = tau_target
            else:
                new_tau = tau + dt
        dt = new_tau - tau
        mid = tau + 0.5 * dt
        if bc == BC_PROFILE:
            ghost_values(wave, Tc, Tpc, xn, ghost_y, mid, gm)
            ghost_values(wave, Tc, Tpc, xn, ghost_y, new_tau, g1)
        _conduct(q, g0, gm, mid - tau, h, kappa, conduction, cfl, theta, c, out, cp, dp, inflow)
        # SSP-RK2 on the hyperbolic part
        hyperbolic_rhs(q, g0, h, limiter, qe, half_slope, flux, rhs, bflux)
        for k in range(3):
            inflow[k] += 0.5 * dt * (bflux[0, k] - bflux[1, k])
            for i in range(n):
                q1[k, i] = q[k, i] + dt * rhs[k, i]
        hyperbolic_rhs(q1, g1, h, limiter, qe, half_slope, flux, rhs, bflux)
        for k in range(3):
            inflow[k] += 0.5 * dt * (bflux[0, k] - bflux[1, k])
            for i in range(n):
                q[k, i] = 0.5 * q[k, i] + 0.5 * (q1[k, i] + dt * rhs[k, i])
        _conduct(q, gm, g1, new_tau - mid, h, kappa, conduction, cfl, theta, c, out, cp, dp, inflow)
        steps += 1
        tau = new_tau
        for i in range(n):
            if q[0, i] <= 0.0 or q[2, i] - 0.5 * q[1, i] * q[1, i] <= 0.0:
                return tau, STATUS_POSITIVITY, steps
        if bc == BC_PROFILE:
            g0[:, :] = g1
    return tau, STATUS_OK, steps
