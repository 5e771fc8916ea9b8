"""Scale and translation normalization of the shrinking arc.

The rescaled profile is sigma_tilde = lambda * (sigma - p cos(theta)) on the
unchanged angle window, with the slow time t_tilde = -log(2(T - t))/2 tied to
the reference scale Lambda = 1/sqrt(2(T - t)).

lambda balances the total turning against the arc area functional,
    lambda^2 * mu(sigma) = Theta + Lambda * {h},   mu = integral sigma w,
where {h} sums the barrier support at the two contact angles.  p zeroes the
translated first-moment balance
    F(p) = 3 q(U) - 3 p |U| - nu_bar(p) - Lambda^{-2} [gamma.e2] = 0,
with nu_bar(p) the barrier-piece moment integral taken against the shifted
weight (x - p)(h - p cos phi) by default; F is then a downward parabola in p
and the smallest-magnitude real root is the translation.  On the flat
barrier both reductions are exact: lambda = Lambda and p recovers the
horizontal offset of a translated exact solution.

Against exact states the solved pair reproduces the identities to quadrature
accuracy; U_resid and q_resid re-evaluate both balances through an
independent path (quintic spline derivatives + adaptive Simpson) so a
quadrature bug cannot hide behind itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import InterpolatedUnivariateSpline

from . import geometry as geo
from .errors import AmbiguousRoot, DegenerateDenominator, NoRealRoot

HALF_PI = 0.5 * math.pi
BOT = 1.5 * math.pi


def reference_scale(t, T):
    """Lambda(t) = 1/sqrt(2(T-t)) and t_tilde(t) = -log(2(T-t))/2."""
    rem = 2.0 * (T - np.asarray(t, dtype=float))
    if np.any(rem <= 0.0):
        raise DegenerateDenominator("time at or past the extinction estimate")
    return 1.0 / np.sqrt(rem), -0.5 * np.log(rem)


def contact_support_sum(domain, arc):
    """{h} = h(3pi/2 + theta_lo) + h(pi/2 + theta_hi)."""
    h_lo, _, _ = geo.domain_eval(domain, BOT + arc.theta_lo)
    h_hi, _, _ = geo.domain_eval(domain, HALF_PI + arc.theta_hi)
    return h_lo + h_hi


def solve_lambda(arc, domain, Lam):
    """Scale factor from lambda^2 mu(sigma) = Theta + Lambda {h}."""
    mu = geo.mu_functional(arc)
    num = arc.width + Lam * contact_support_sum(domain, arc)
    if mu <= 0.0 or num <= 0.0:
        raise DegenerateDenominator(
            f"mu={mu:.3e}, Theta + Lambda*{{h}}={num:.3e}")
    return math.sqrt(num / mu)


def _gamma_e2_jump(arc):
    """[gamma.e2] across the endpoints from the support samples."""
    sp = geo.deriv1_4(arc.sigma, arc.dtheta)
    lo, hi = arc.theta_lo, arc.theta_hi
    g_lo = arc.sigma[0] * math.sin(lo) + sp[0] * math.cos(lo)
    g_hi = arc.sigma[-1] * math.sin(hi) + sp[-1] * math.cos(hi)
    return g_hi - g_lo


def barrier_moment_coeffs(domain, arc):
    """(A0, A1, A2): moments of the closing barrier piece against rho.

    A0 = int x h rho,  A1 = int (x cos phi + h) rho,  A2 = int cos phi rho,
    so the shifted barrier moment is nu_bar(p) = A0 - p A1 + p^2 A2.
    """
    if domain.kind == "halfplane":
        return 0.0, 0.0, 0.0
    a, b = geo.sigma_arc_bounds(arc.theta_lo, arc.theta_hi)

    def f0(phi):
        h, hp, rho = geo._eval_full(domain, phi)
        return (h * np.cos(phi) - hp * np.sin(phi)) * h * rho

    def f1(phi):
        h, hp, rho = geo._eval_full(domain, phi)
        c = np.cos(phi)
        return ((h * c - hp * np.sin(phi)) * c + h) * rho

    def f2(phi):
        h, hp, rho = geo._eval_full(domain, phi)
        return np.cos(phi) * rho

    return (geo.gauss_arc(f0, a, b), geo.gauss_arc(f1, a, b),
            geo.gauss_arc(f2, a, b))


def solve_p(arc, domain, Lam, translate_barrier=True, split_tol=1e-3):
    """Horizontal translation zeroing the first-moment balance.

    With translate_barrier the barrier-piece weight shifts with p and F is
    quadratic; otherwise only the arc part carries p and F is affine.  The
    smallest-magnitude real root is returned; complex roots raise NoRealRoot
    and a near-double root (separation below split_tol) raises AmbiguousRoot.
    """
    area = geo.enclosed_area(arc, domain, contact_tol=None)
    q = geo.first_moment(arc, domain, contact_tol=None)
    A0, A1, A2 = barrier_moment_coeffs(domain, arc)
    if not translate_barrier:
        A1 = A2 = 0.0
    ge2 = _gamma_e2_jump(arc) / (Lam * Lam)
    c0 = 3.0 * q - A0 - ge2
    b = A1 - 3.0 * area
    a = -A2

    # pre-cancellation magnitude of the balance, for the vertex fallback
    cscale = 3.0 * abs(q) + abs(A0) + abs(ge2)
    return quadratic_smallest_root(a, b, c0, split_tol, resid_scale=cscale)


def quadratic_smallest_root(a, b, c0, split_tol=1e-3, resid_scale=None):
    """Smallest-magnitude real root of a p^2 + b p + c0.

    With resid_scale given, a slightly complex pair (best-achievable
    residual below 5% of that scale) degrades to the vertex instead of
    raising: near a sign change of b the balance cannot be zeroed exactly
    and the translation is only determined up to that residual.
    """
    if a == 0.0:
        if b == 0.0:
            raise DegenerateDenominator("moment balance has no p dependence")
        return -c0 / b
    disc = b * b - 4.0 * a * c0
    if disc < 0.0:
        if disc > -1e-8 * (b * b + abs(4.0 * a * c0)):
            disc = 0.0  # roundoff pushed a double root slightly complex
        elif resid_scale is not None and (
                abs(disc) <= 4.0 * abs(a) * 0.05 * resid_scale):
            return -b / (2.0 * a)
        else:
            raise NoRealRoot(f"discriminant {disc:.3e}")
    root = math.sqrt(disc)
    # stable split: bigger-magnitude root first, companion via c0/(a r1)
    if b != 0.0:
        r1 = (-b - math.copysign(root, b)) / (2.0 * a)
    else:
        r1 = root / (2.0 * a)
    r2 = c0 / (a * r1) if r1 != 0.0 else -b / a
    if abs(r1 - r2) < split_tol:
        raise AmbiguousRoot(f"roots {r1:.6g} and {r2:.6g} nearly coincide")
    return r2 if abs(r2) <= abs(r1) else r1


def rescale_state(arc, lam, p):
    """sigma_tilde = lambda (sigma - p cos theta) on the same window."""
    theta = arc.grid()
    return geo.SupportArc(arc.theta_lo, arc.theta_hi,
                          lam * (arc.sigma - p * np.cos(theta)))


# ---------------------------------------------------------------------------
# independent re-checks
# ---------------------------------------------------------------------------

def _spline(arc):
    return InterpolatedUnivariateSpline(arc.grid(), arc.sigma, k=5)


def recheck_lambda(arc, domain, Lam, lam):
    """|lambda^2 mu - Theta - Lambda {h}| via spline + adaptive Simpson."""
    s = _spline(arc)
    s2 = s.derivative(2)

    def f(th):
        return float(s(th)) * (float(s2(th)) + float(s(th)))

    mu = geo.adaptive_simpson(f, arc.theta_lo, arc.theta_hi, tol=1e-12)
    return abs(lam * lam * mu - arc.width
               - Lam * contact_support_sum(domain, arc))


def recheck_p(arc, domain, Lam, p, translate_barrier=True):
    """|F(p)| rebuilt from spline derivatives and adaptive quadrature."""
    s = _spline(arc)
    s1 = s.derivative(1)
    s2 = s.derivative(2)

    def f(th):
        c, sn = math.cos(th), math.sin(th)
        sig = float(s(th)) - p * c
        dsig = float(s1(th)) + p * sn
        w = float(s2(th)) + float(s(th))
        return (sig * c - dsig * sn) * sig * w

    nu_arc = geo.adaptive_simpson(f, arc.theta_lo, arc.theta_hi, tol=1e-12)
    lo, hi = arc.theta_lo, arc.theta_hi
    g_lo = float(s(lo)) * math.sin(lo) + float(s1(lo)) * math.cos(lo)
    g_hi = float(s(hi)) * math.sin(hi) + float(s1(hi)) * math.cos(hi)
    # the shifted barrier terms cancel against 3q(U^p) in the translated
    # form; the untranslated variant keeps their p-dependence explicit
    resid = nu_arc - (g_hi - g_lo) / (Lam * Lam)
    if not translate_barrier and domain.kind != "halfplane":
        _, a1, a2 = barrier_moment_coeffs(domain, arc)
        resid += -p * a1 + p * p * a2
    return abs(resid)


# ---------------------------------------------------------------------------
# series over a trajectory
# ---------------------------------------------------------------------------

@dataclass
class ModulationSeries:
    t: np.ndarray
    t_tilde: np.ndarray
    lam: np.ndarray
    Lam: np.ndarray
    p: np.ndarray
    L: np.ndarray
    B: np.ndarray
    U_resid: np.ndarray
    q_resid: np.ndarray

    def __len__(self):
        return self.t.size


def _nonuniform_deriv(t, f):
    """3-point first derivative on a nonuniform grid, one-sided at the ends."""
    t = np.asarray(t, dtype=float)
    f = np.asarray(f, dtype=float)
    d = np.empty_like(f)
    hm = t[1:-1] - t[:-2]
    hp = t[2:] - t[1:-1]
    d[1:-1] = (-hp / (hm * (hm + hp)) * f[:-2]
               + (hp - hm) / (hm * hp) * f[1:-1]
               + hm / (hp * (hm + hp)) * f[2:])
    h0, h1 = t[1] - t[0], t[2] - t[1]
    d[0] = (-(2 * h0 + h1) / (h0 * (h0 + h1)) * f[0]
            + (h0 + h1) / (h0 * h1) * f[1]
            - h0 / (h1 * (h0 + h1)) * f[2])
    h0, h1 = t[-2] - t[-3], t[-1] - t[-2]
    d[-1] = (h1 / (h0 * (h0 + h1)) * f[-3]
             - (h0 + h1) / (h0 * h1) * f[-2]
             + (2 * h1 + h0) / (h1 * (h0 + h1)) * f[-1])
    return d


def build_series(traj, T, translate_barrier=True, recheck=True,
                 indices=None):
    """Solve (lambda, p) along a trajectory's checkpoints.

    L = dlog(lambda)/dt / lambda^2 and B = -dp/dt / lambda use 3-point
    nonuniform differences of the checkpoint times, so both equal their
    slow-time definitions without interpolation.  Pass indices to modulate a
    different subset of samples.
    """
    idx = traj.ck_idx if indices is None else np.asarray(indices)
    if idx.size < 3:
        raise DegenerateDenominator("need at least 3 states to difference")
    t = traj.t[idx]
    Lam, t_tilde = reference_scale(t, T)
    m = idx.size
    lam = np.empty(m)
    p = np.empty(m)
    u_res = np.full(m, np.nan)
    q_res = np.full(m, np.nan)
    for k, i in enumerate(idx):
        arc = traj.arc(int(i))
        lam[k] = solve_lambda(arc, traj.domain, Lam[k])
        p[k] = solve_p(arc, traj.domain, Lam[k],
                       translate_barrier=translate_barrier)
        if recheck:
            u_res[k] = recheck_lambda(arc, traj.domain, Lam[k], lam[k])
            q_res[k] = recheck_p(arc, traj.domain, Lam[k], p[k],
                                 translate_barrier=translate_barrier)
    L = _nonuniform_deriv(t, np.log(lam)) / lam ** 2
    B = -_nonuniform_deriv(t, p) / lam
    return ModulationSeries(t, t_tilde, lam, Lam, p, L, B, u_res, q_res)
