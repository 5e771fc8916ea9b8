"""Backend-selectable stepping kernels for the support-function flow.

The same arithmetic exists twice: explicitly-looped kernels compiled with
numba.njit (no fastmath, so reruns are bitwise reproducible), and a
vectorized numpy/scipy fallback.  Set FBCSF_NO_NUMBA=1 to force the fallback;
a missing numba install falls back silently.  Both implementations stay
importable side by side so the benchmark can race them on identical inputs.

Scheme per accepted step, N+1 nodes on theta = theta_lo + s*(theta_hi-theta_lo):
  1. endpoint normal angles advance explicitly,
     d(theta_hi)/dt = +kappa_bar(pi/2+theta_hi) * kappa(theta_hi),
     d(theta_lo)/dt = -kappa_bar(3pi/2+theta_lo) * kappa(theta_lo);
  2. sigma_t = -1/w (w = sigma'' + sigma) goes linearly implicit through
     -1/w_new ~ w_new/w_old^2 - 2/w_old, giving one tridiagonal solve; the
     grid-motion advection a_i * sigma_theta is explicit second-order upwind
     on the old grid (central at the two nodes next to the contacts, where
     the upwind stencil would leave the grid);
  3. Neumann rows at the new contact angles close the system; their 3-point
     corners are eliminated into the adjacent rows before the solve.

A step is rejected (dt halved, up to max_halvings) when w_new has a
non-positive entry, jumps by more than ratio_tol relative to w_old, or went
non-finite.
"""
from __future__ import annotations

import math
import os

import numpy as np

# advance() status codes
ST_STEPS = 0        # completed the requested number of steps
ST_GAP = 1          # barrier angle gap pi - Theta below gap_tol
ST_REM = 2          # proxy for remaining time below stop_frac * T_est
ST_CONVEXITY = -1   # w <= 0 on entry, state unusable
ST_DTFLOOR = -2     # step rejected through all halvings
ST_DOMAIN = -3      # barrier curvature radius <= 0 at a needed angle

HALF_PI = 0.5 * math.pi
BOT = 1.5 * math.pi


def _dom_eval_scalar(kind, par, fa, ftx, fty, theta):
    """(h, h', rho) of the framed barrier at one angle; rho = 1/kappa."""
    if kind == 0:
        return 0.0, 0.0, 0.0
    phi = theta - fa
    c = math.cos(phi)
    s = math.sin(phi)
    if kind == 1:
        r = par[0]
        h = r
        hp = 0.0
        rho = r
    elif kind == 2:
        a = par[0]
        b = par[1]
        h = math.sqrt(a * a * c * c + b * b * s * s)
        hp = (b * b - a * a) * s * c / h
        rho = a * a * b * b / (h * h * h)
    else:
        kmax = (par.shape[0] - 1) // 2
        h = par[0]
        hp = 0.0
        hpp = 0.0
        for k in range(1, kmax + 1):
            ck = math.cos(k * phi)
            sk = math.sin(k * phi)
            ak = par[k]
            bk = par[kmax + k]
            h += ak * ck + bk * sk
            hp += k * (bk * ck - ak * sk)
            hpp -= k * k * (ak * ck + bk * sk)
        rho = hpp + h
    return h + ftx * c + fty * s, hp - ftx * s + fty * c, rho


def _w_profile(u, dth, w):
    """w = sigma'' + sigma, central interior, one-sided (2,-5,4,-1) ends."""
    n = u.shape[0] - 1
    h2 = dth * dth
    for i in range(1, n):
        w[i] = (u[i - 1] - 2.0 * u[i] + u[i + 1]) / h2 + u[i]
    w[0] = (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / h2 + u[0]
    w[n] = (2.0 * u[n] - 5.0 * u[n - 1] + 4.0 * u[n - 2] - u[n - 3]) / h2 + u[n]


def _simpson_dot(y, z, dx):
    """Simpson integral of the product y*z on a uniform grid (even panels)."""
    n = y.shape[0] - 1
    acc = y[0] * z[0] + y[n] * z[n]
    for i in range(1, n):
        acc += (4.0 if i % 2 == 1 else 2.0) * y[i] * z[i]
    return acc * dx / 3.0


def _try_step(kind, par, fa, ftx, fty, lo, hi, u, w, dt,
              rate_lo, rate_hi, ratio_tol,
              sub, diag, sup, rhs, u_new, w_new):
    """One linearly-implicit step at fixed dt.  Returns (ok, lo2, hi2).

    ok=1 success (u_new, w_new filled), ok=0 rejected, ok=-3 domain failure.
    """
    n = u.shape[0] - 1
    dth = (hi - lo) / n
    lo2 = lo + dt * rate_lo
    hi2 = hi + dt * rate_hi
    if hi2 - lo2 <= 0.0:
        return 0, lo, hi
    dth2 = (hi2 - lo2) / n
    c2 = 1.0 / (dth2 * dth2)

    # interior rows + explicit upwind advection on the old grid
    for i in range(1, n):
        beta = dt / (w[i] * w[i])
        sub[i] = -beta * c2
        sup[i] = -beta * c2
        diag[i] = 1.0 - beta + 2.0 * beta * c2
        s = i / n
        a = (1.0 - s) * rate_lo + s * rate_hi
        if a >= 0.0:
            if i <= n - 2:
                du = (-3.0 * u[i] + 4.0 * u[i + 1] - u[i + 2]) / (2.0 * dth)
            else:
                # central keeps 2nd order where the upwind stencil would
                # leave the grid; 1st order here leaves an O(h) tail in the
                # odd modes of the rescaled profile
                du = (u[i + 1] - u[i - 1]) / (2.0 * dth)
        else:
            if i >= 2:
                du = (3.0 * u[i] - 4.0 * u[i - 1] + u[i - 2]) / (2.0 * dth)
            else:
                du = (u[i + 1] - u[i - 1]) / (2.0 * dth)
        rhs[i] = u[i] - 2.0 * dt / w[i] + dt * a * du

    hL, _, rL = _dom_eval_scalar(kind, par, fa, ftx, fty, BOT + lo2)
    hH, _, rH = _dom_eval_scalar(kind, par, fa, ftx, fty, HALF_PI + hi2)
    if kind == 3 and (rL <= 0.0 or rH <= 0.0):
        return -3, lo, hi

    # Neumann rows at the new angles, corners eliminated into rows 1, n-1
    gL = -hL
    gH = hH
    f = -1.0 / sup[1]
    diag[0] = -3.0 - f * sub[1]
    sup[0] = 4.0 - f * diag[1]
    rhs[0] = 2.0 * dth2 * gL - f * rhs[1]
    f = 1.0 / sub[n - 1]
    diag[n] = 3.0 - f * sup[n - 1]
    sub[n] = -4.0 - f * diag[n - 1]
    rhs[n] = 2.0 * dth2 * gH - f * rhs[n - 1]

    # Thomas sweep (sup and rhs overwritten)
    c_prev = sup[0] / diag[0]
    d_prev = rhs[0] / diag[0]
    sup[0] = c_prev
    rhs[0] = d_prev
    for i in range(1, n + 1):
        m = diag[i] - sub[i] * c_prev
        if i < n:
            c_prev = sup[i] / m
            sup[i] = c_prev
        d_prev = (rhs[i] - sub[i] * d_prev) / m
        rhs[i] = d_prev
    u_new[n] = rhs[n]
    for i in range(n - 1, -1, -1):
        u_new[i] = rhs[i] - sup[i] * u_new[i + 1]

    _w_profile(u_new, dth2, w_new)
    for i in range(n + 1):
        if not (w_new[i] > 0.0) or not math.isfinite(u_new[i]):
            return 0, lo, hi
        r = w_new[i] / w[i] - 1.0
        if r > ratio_tol or r < -ratio_tol:
            return 0, lo, hi
    return 1, lo2, hi2


def _advance(kind, par, fa, ftx, fty,
             t, lo, hi, u,
             n_steps, sample_stride,
             cfl, ratio_tol, gap_tol, stop_frac, rem_div, max_halvings,
             out_t, out_lo, out_hi, out_dt, out_sig):
    """Run up to n_steps accepted steps, sampling every sample_stride.

    u is updated in place to the final state.  Returns
    (status, steps_done, n_samples, n_rejected, t, lo, hi).
    """
    n = u.shape[0] - 1
    w = np.empty(n + 1)
    w_new = np.empty(n + 1)
    sub = np.empty(n + 1)
    diag = np.empty(n + 1)
    sup = np.empty(n + 1)
    rhs = np.empty(n + 1)
    u_new = np.empty(n + 1)
    cap = out_t.shape[0]

    steps = 0
    n_samp = 0
    n_rej = 0
    status = ST_STEPS
    dth = (hi - lo) / n
    _w_profile(u, dth, w)
    wmin = w[0]
    for i in range(1, n + 1):
        if w[i] < wmin:
            wmin = w[i]
    if wmin <= 0.0:
        return ST_CONVEXITY, steps, n_samp, n_rej, t, lo, hi
    area = 0.5 * _simpson_dot(u, w, dth)
    t_est = t + area / (hi - lo)

    while steps < n_steps and n_samp < cap:
        # stop checks on the current state
        if kind != 0 and math.pi - (hi - lo) < gap_tol:
            status = ST_GAP
            break
        rem = 0.5 * wmin * wmin
        if rem < stop_frac * t_est:
            status = ST_REM
            break

        # endpoint rates from the current state
        _, _, rho_lo = _dom_eval_scalar(kind, par, fa, ftx, fty, BOT + lo)
        _, _, rho_hi = _dom_eval_scalar(kind, par, fa, ftx, fty, HALF_PI + hi)
        if kind == 0:
            rate_lo = 0.0
            rate_hi = 0.0
        else:
            if rho_lo <= 0.0 or rho_hi <= 0.0:
                status = ST_DOMAIN
                break
            rate_lo = -1.0 / (rho_lo * w[0])
            rate_hi = 1.0 / (rho_hi * w[n])

        dt = cfl * dth * dth * wmin * wmin
        amax = abs(rate_lo)
        if abs(rate_hi) > amax:
            amax = abs(rate_hi)
        if amax > 0.0:
            adv = cfl * dth / amax
            if adv < dt:
                dt = adv
        if rem / rem_div < dt:
            dt = rem / rem_div

        ok = 0
        for _ in range(max_halvings + 1):
            ok, lo2, hi2 = _try_step(kind, par, fa, ftx, fty, lo, hi, u, w,
                                     dt, rate_lo, rate_hi, ratio_tol,
                                     sub, diag, sup, rhs, u_new, w_new)
            if ok == 1:
                break
            if ok == -3:
                status = ST_DOMAIN
                break
            n_rej += 1
            dt *= 0.5
        if ok != 1:
            if status == ST_STEPS:
                status = ST_DTFLOOR
            break

        t += dt
        lo = lo2
        hi = hi2
        dth = (hi - lo) / n
        for i in range(n + 1):
            u[i] = u_new[i]
            w[i] = w_new[i]
        wmin = w[0]
        for i in range(1, n + 1):
            if w[i] < wmin:
                wmin = w[i]
        steps += 1

        if steps % sample_stride == 0:
            area = 0.5 * _simpson_dot(u, w, dth)
            t_est = t + area / (hi - lo)
            out_t[n_samp] = t
            out_lo[n_samp] = lo
            out_hi[n_samp] = hi
            out_dt[n_samp] = dt
            for i in range(n + 1):
                out_sig[n_samp, i] = u[i]
            n_samp += 1

    return status, steps, n_samp, n_rej, t, lo, hi


# ---------------------------------------------------------------------------
# vectorized numpy fallback
# ---------------------------------------------------------------------------

def _w_profile_np(u, dth):
    w = np.empty_like(u)
    h2 = dth * dth
    w[1:-1] = (u[:-2] - 2.0 * u[1:-1] + u[2:]) / h2 + u[1:-1]
    w[0] = (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / h2 + u[0]
    w[-1] = (2.0 * u[-1] - 5.0 * u[-2] + 4.0 * u[-3] - u[-4]) / h2 + u[-1]
    return w


def _try_step_np(kind, par, fa, ftx, fty, lo, hi, u, w, dt,
                 rate_lo, rate_hi, ratio_tol):
    from scipy.linalg import solve_banded

    n = u.shape[0] - 1
    dth = (hi - lo) / n
    lo2 = lo + dt * rate_lo
    hi2 = hi + dt * rate_hi
    if hi2 - lo2 <= 0.0:
        return 0, lo, hi, u, w
    dth2 = (hi2 - lo2) / n
    c2 = 1.0 / (dth2 * dth2)

    beta = dt / (w[1:-1] * w[1:-1])
    sub = np.zeros(n + 1)
    sup = np.zeros(n + 1)
    diag = np.empty(n + 1)
    sub[1:-1] = -beta * c2
    sup[1:-1] = -beta * c2
    diag[1:-1] = 1.0 - beta + 2.0 * beta * c2

    s = np.arange(1, n) / n
    a = (1.0 - s) * rate_lo + s * rate_hi
    fwd = np.empty(n - 1)
    fwd[:-1] = (-3.0 * u[1:-2] + 4.0 * u[2:-1] - u[3:]) / (2.0 * dth)
    fwd[-1] = (u[n] - u[n - 2]) / (2.0 * dth)
    bwd = np.empty(n - 1)
    bwd[1:] = (3.0 * u[2:-1] - 4.0 * u[1:-2] + u[:-3]) / (2.0 * dth)
    bwd[0] = (u[2] - u[0]) / (2.0 * dth)
    du = np.where(a >= 0.0, fwd, bwd)
    rhs = np.empty(n + 1)
    rhs[1:-1] = u[1:-1] - 2.0 * dt / w[1:-1] + dt * a * du

    hL, _, rL = _dom_eval_scalar(kind, par, fa, ftx, fty, BOT + lo2)
    hH, _, rH = _dom_eval_scalar(kind, par, fa, ftx, fty, HALF_PI + hi2)
    if kind == 3 and (rL <= 0.0 or rH <= 0.0):
        return -3, lo, hi, u, w

    f = -1.0 / sup[1]
    diag[0] = -3.0 - f * sub[1]
    sup[0] = 4.0 - f * diag[1]
    rhs[0] = 2.0 * dth2 * (-hL) - f * rhs[1]
    f = 1.0 / sub[n - 1]
    diag[n] = 3.0 - f * sup[n - 1]
    sub[n] = -4.0 - f * diag[n - 1]
    rhs[n] = 2.0 * dth2 * hH - f * rhs[n - 1]

    ab = np.zeros((3, n + 1))
    ab[0, 1:] = sup[:-1]
    ab[1, :] = diag
    ab[2, :-1] = sub[1:]
    u_new = solve_banded((1, 1), ab, rhs)

    w_new = _w_profile_np(u_new, dth2)
    if (not np.all(np.isfinite(u_new)) or np.min(w_new) <= 0.0
            or np.max(np.abs(w_new / w - 1.0)) > ratio_tol):
        return 0, lo, hi, u, w
    return 1, lo2, hi2, u_new, w_new


def _advance_np(kind, par, fa, ftx, fty,
                t, lo, hi, u,
                n_steps, sample_stride,
                cfl, ratio_tol, gap_tol, stop_frac, rem_div, max_halvings,
                out_t, out_lo, out_hi, out_dt, out_sig):
    n = u.shape[0] - 1
    cap = out_t.shape[0]
    steps = 0
    n_samp = 0
    n_rej = 0
    status = ST_STEPS
    dth = (hi - lo) / n
    w = _w_profile_np(u, dth)
    wmin = float(np.min(w))
    if wmin <= 0.0:
        return ST_CONVEXITY, steps, n_samp, n_rej, t, lo, hi
    simp = np.full(n + 1, 2.0)
    simp[1::2] = 4.0
    simp[0] = simp[-1] = 1.0
    area = 0.5 * float(np.dot(simp, u * w)) * dth / 3.0
    t_est = t + area / (hi - lo)

    while steps < n_steps and n_samp < cap:
        if kind != 0 and math.pi - (hi - lo) < gap_tol:
            status = ST_GAP
            break
        rem = 0.5 * wmin * wmin
        if rem < stop_frac * t_est:
            status = ST_REM
            break

        _, _, rho_lo = _dom_eval_scalar(kind, par, fa, ftx, fty, BOT + lo)
        _, _, rho_hi = _dom_eval_scalar(kind, par, fa, ftx, fty, HALF_PI + hi)
        if kind == 0:
            rate_lo = rate_hi = 0.0
        else:
            if rho_lo <= 0.0 or rho_hi <= 0.0:
                status = ST_DOMAIN
                break
            rate_lo = -1.0 / (rho_lo * w[0])
            rate_hi = 1.0 / (rho_hi * w[n])

        dt = cfl * dth * dth * wmin * wmin
        amax = max(abs(rate_lo), abs(rate_hi))
        if amax > 0.0:
            dt = min(dt, cfl * dth / amax)
        dt = min(dt, rem / rem_div)

        ok = 0
        for _ in range(max_halvings + 1):
            ok, lo2, hi2, u2, w2 = _try_step_np(
                kind, par, fa, ftx, fty, lo, hi, u, w, dt,
                rate_lo, rate_hi, ratio_tol)
            if ok == 1:
                break
            if ok == -3:
                status = ST_DOMAIN
                break
            n_rej += 1
            dt *= 0.5
        if ok != 1:
            if status == ST_STEPS:
                status = ST_DTFLOOR
            break

        t += dt
        lo, hi = lo2, hi2
        dth = (hi - lo) / n
        u[:] = u2
        w = w2
        wmin = float(np.min(w))
        steps += 1

        if steps % sample_stride == 0:
            area = 0.5 * float(np.dot(simp, u * w)) * dth / 3.0
            t_est = t + area / (hi - lo)
            out_t[n_samp] = t
            out_lo[n_samp] = lo
            out_hi[n_samp] = hi
            out_dt[n_samp] = dt
            out_sig[n_samp, :] = u
            n_samp += 1

    return status, steps, n_samp, n_rej, t, lo, hi


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------

_NUMBA_OK = False
if os.environ.get("FBCSF_NO_NUMBA", "0") != "1":
    try:
        from numba import njit as _njit

        _dom_eval_scalar = _njit(cache=True)(_dom_eval_scalar)  # noqa: F811
        _w_profile = _njit(cache=True)(_w_profile)              # noqa: F811
        _simpson_dot = _njit(cache=True)(_simpson_dot)          # noqa: F811
        _try_step = _njit(cache=True)(_try_step)                # noqa: F811
        advance_numba = _njit(cache=True)(_advance)
        _NUMBA_OK = True
    except ImportError:
        pass

advance_numpy = _advance_np
BACKEND = "numba" if _NUMBA_OK else "numpy"
advance = advance_numba if _NUMBA_OK else advance_numpy


def backends():
    """Mapping of importable advance implementations (for the benchmark)."""
    out = {"numpy": advance_numpy}
    if _NUMBA_OK:
        out["numba"] = advance_numba
    return out
