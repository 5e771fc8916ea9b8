"""Time integration of the support-function flow with moving contact angles.

A state is (t, SupportArc).  run() drives the backend kernels in chunks,
keeping a sample every sample_stride accepted steps (support snapshot plus
scalar diagnostics) and marking every checkpoint_stride-th step, plus the
final state, as a checkpoint.  Step size follows
    dt = cfl * min(dtheta^2 * w_min^2,  dtheta / max|contact rate|)
capped by a fiftieth of the remaining-time proxy w_min^2 / 2; rejected steps
halve dt.  The quadratic spacing term ties the O(dt) splitting error to the
O(dtheta^2) spatial error, so refinement in N alone shows second order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from . import geometry as geo
from .errors import (
    ConfigError,
    ContactSolveFailed,
    ConvexityLost,
    InconsistentFit,
    InsufficientData,
    NonConvexDomain,
    StepRejected,
)

HALF_PI = 0.5 * math.pi
BOT = 1.5 * math.pi


@dataclass
class SolverOptions:
    cfl: float = 0.8
    gap_tol: float = 1e-2            # stop when pi - Theta drops below
    stop_time_frac: float = 1e-4     # stop when w_min^2/2 < frac * T_est
    sample_stride: int = 64
    checkpoint_stride: int = 256
    max_steps: int = 2_000_000
    curvature_ratio_tol: float = 0.25
    max_halvings: int = 60
    rem_div: float = 50.0

    def validate(self):
        if not 0.0 < self.cfl <= 2.0:
            raise ConfigError(f"cfl {self.cfl} outside (0, 2]")
        if self.sample_stride < 1 or self.checkpoint_stride < 1:
            raise ConfigError("strides must be positive")
        if self.checkpoint_stride % self.sample_stride != 0:
            raise ConfigError("checkpoint_stride must be a multiple of sample_stride")
        if self.max_steps % self.sample_stride != 0:
            raise ConfigError("max_steps must be a multiple of sample_stride")
        for name in ("gap_tol", "stop_time_frac", "curvature_ratio_tol"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"{name} must be positive")
        return self


@dataclass
class FlowState:
    t: float
    arc: geo.SupportArc


def _domain_args(domain):
    fr = domain.frame
    return domain.kind_id, domain.params_array(), fr.alpha, fr.tx, fr.ty


def resolve_backend(name=None):
    table = _kernels.backends()
    if name is None:
        name = _kernels.BACKEND
    if name not in table:
        raise ConfigError(f"backend {name!r} unavailable; have {sorted(table)}")
    return name, table[name]


def endpoint_rates(domain, arc):
    """Contact angle speeds (d theta_lo/dt, d theta_hi/dt) of the current state."""
    if domain.kind == "halfplane":
        return 0.0, 0.0
    w = _kernels._w_profile_np(arc.sigma, arc.dtheta)
    _, _, k_lo = geo.domain_eval(domain, BOT + arc.theta_lo)
    _, _, k_hi = geo.domain_eval(domain, HALF_PI + arc.theta_hi)
    return -k_lo / w[0], k_hi / w[-1]


def bc_residuals(domain, arc):
    """Neumann defects: sigma'(lo) + h(3pi/2+lo) and sigma'(hi) - h(pi/2+hi)."""
    sp = geo.deriv1_4(arc.sigma, arc.dtheta)
    h_lo, _, _ = geo.domain_eval(domain, BOT + arc.theta_lo)
    h_hi, _, _ = geo.domain_eval(domain, HALF_PI + arc.theta_hi)
    return float(sp[0] + h_lo), float(sp[-1] - h_hi)


def step_once(domain, state, dt, ratio_tol=0.25, backend=None):
    """One fixed-dt step; raises StepRejected instead of halving."""
    name, _ = resolve_backend(backend)
    kind, par, fa, ftx, fty = _domain_args(domain)
    arc = state.arc
    u = arc.sigma.copy()
    rate_lo, rate_hi = endpoint_rates(domain, arc)
    if name == "numpy":
        w = _kernels._w_profile_np(u, arc.dtheta)
        ok, lo2, hi2, u2, _ = _kernels._try_step_np(
            kind, par, fa, ftx, fty, arc.theta_lo, arc.theta_hi, u, w, dt,
            rate_lo, rate_hi, ratio_tol)
    else:
        n = arc.n
        w = np.empty(n + 1)
        _kernels._w_profile(u, arc.dtheta, w)
        scratch = [np.empty(n + 1) for _ in range(6)]
        ok, lo2, hi2 = _kernels._try_step(
            kind, par, fa, ftx, fty, arc.theta_lo, arc.theta_hi, u, w, dt,
            rate_lo, rate_hi, ratio_tol, *scratch)
        u2 = scratch[4]
    if ok == -3:
        raise NonConvexDomain("barrier curvature failed at a contact angle")
    if ok != 1:
        raise StepRejected(f"dt={dt:.3e} rejected at t={state.t:.6g}")
    return FlowState(state.t + dt, geo.SupportArc(lo2, hi2, u2.copy()))


@dataclass
class Trajectory:
    """Sampled history of one run plus scalar diagnostics per sample."""

    domain: geo.ConvexDomain
    opts: SolverOptions
    backend: str
    status: int
    steps: int
    rejected: int
    t: np.ndarray
    theta_lo: np.ndarray
    theta_hi: np.ndarray
    dt: np.ndarray
    step: np.ndarray
    sigma: np.ndarray
    area: np.ndarray = field(default=None)
    moment: np.ndarray = field(default=None)
    kappa_min: np.ndarray = field(default=None)
    kappa_max: np.ndarray = field(default=None)
    r_lo: np.ndarray = field(default=None)
    r_hi: np.ndarray = field(default=None)
    ck_idx: np.ndarray = field(default=None)

    def __len__(self):
        return self.t.size

    @property
    def theta(self):
        return self.theta_hi - self.theta_lo

    def arc(self, i):
        return geo.SupportArc(self.theta_lo[i], self.theta_hi[i], self.sigma[i])

    def checkpoints(self):
        return [(float(self.t[i]), self.arc(i)) for i in self.ck_idx]


def _collect_diagnostics(traj):
    s = len(traj)
    traj.area = np.empty(s)
    traj.moment = np.empty(s)
    traj.kappa_min = np.empty(s)
    traj.kappa_max = np.empty(s)
    traj.r_lo = np.empty(s)
    traj.r_hi = np.empty(s)
    for i in range(s):
        arc = traj.arc(i)
        kap = geo.curvature_of_arc(arc)
        traj.kappa_min[i] = np.min(kap)
        traj.kappa_max[i] = np.max(kap)
        traj.area[i] = geo.enclosed_area(arc, traj.domain, contact_tol=None)
        traj.moment[i] = geo.first_moment(arc, traj.domain, contact_tol=None)
        traj.r_lo[i], traj.r_hi[i] = bc_residuals(traj.domain, arc)


def run(domain, state, opts=None, backend=None, diagnostics=True):
    """Advance until a stop condition or max_steps; returns a Trajectory."""
    opts = (opts or SolverOptions()).validate()
    name, adv = resolve_backend(backend)
    kind, par, fa, ftx, fty = _domain_args(domain)
    arc = state.arc
    n = arc.n
    t, lo, hi = float(state.t), arc.theta_lo, arc.theta_hi
    u = arc.sigma.copy()

    ts, los, his, dts, stepnos, sigs = [t], [lo], [hi], [0.0], [0], [u.copy()]
    steps_done = 0
    rejected = 0
    stride = opts.sample_stride
    chunk = stride * max(1, 100_000 // stride)
    status = _kernels.ST_STEPS
    while steps_done < opts.max_steps:
        todo = min(chunk, opts.max_steps - steps_done)
        cap = todo // stride + 1
        out_t = np.empty(cap)
        out_lo = np.empty(cap)
        out_hi = np.empty(cap)
        out_dt = np.empty(cap)
        out_sig = np.empty((cap, n + 1))
        status, done, n_samp, n_rej, t, lo, hi = adv(
            kind, par, fa, ftx, fty, t, lo, hi, u,
            todo, stride, opts.cfl, opts.curvature_ratio_tol,
            opts.gap_tol, opts.stop_time_frac, opts.rem_div,
            opts.max_halvings,
            out_t, out_lo, out_hi, out_dt, out_sig)
        for k in range(n_samp):
            ts.append(float(out_t[k]))
            los.append(float(out_lo[k]))
            his.append(float(out_hi[k]))
            dts.append(float(out_dt[k]))
            stepnos.append(steps_done + (k + 1) * stride)
            sigs.append(out_sig[k].copy())
        steps_done += done
        rejected += n_rej
        if status != _kernels.ST_STEPS or done < todo:
            break

    if status == _kernels.ST_CONVEXITY:
        raise ConvexityLost("initial data has sigma'' + sigma <= 0")
    if status == _kernels.ST_DOMAIN:
        raise NonConvexDomain("barrier curvature failed during the run")
    if status == _kernels.ST_DTFLOOR:
        raise StepRejected(
            f"step size underflow after {steps_done} steps at t={t:.6g}")

    if t > ts[-1]:
        ts.append(t)
        los.append(lo)
        his.append(hi)
        dts.append(dts[-1])
        stepnos.append(steps_done)
        sigs.append(u.copy())

    stepnos = np.asarray(stepnos, dtype=np.int64)
    ck = (stepnos % opts.checkpoint_stride == 0)
    ck[-1] = True
    traj = Trajectory(domain, opts, name, int(status), steps_done, rejected,
                      np.asarray(ts), np.asarray(los), np.asarray(his),
                      np.asarray(dts), stepnos, np.vstack(sigs),
                      ck_idx=np.flatnonzero(ck))
    if diagnostics:
        _collect_diagnostics(traj)
    return traj


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------

def _initial_profile(theta, lo, hi, r0, eps, s_lo, s_hi):
    width = hi - lo
    v = np.full_like(theta, r0)
    for j, e in enumerate(eps, start=1):
        v += e * np.cos(j * math.pi * (theta - lo) / width)
    # quadratic wings restore the Neumann data without moving the middle
    tm = lo + 0.35 * width
    v += np.where(theta <= tm, s_lo * (theta - tm) ** 2 / (2.0 * (lo - tm)), 0.0)
    tm = hi - 0.35 * width
    v += np.where(theta >= tm, s_hi * (theta - tm) ** 2 / (2.0 * (hi - tm)), 0.0)
    return v


def _initial_contact_gaps(domain, lo, hi, r0, eps):
    h_lo, hp_lo, _ = geo.domain_eval(domain, BOT + lo)
    h_hi, hp_hi, _ = geo.domain_eval(domain, HALF_PI + hi)
    ends = np.array([lo, hi])
    v = _initial_profile(ends, lo, hi, r0, eps, -h_lo, h_hi)
    # endpoint must coincide with the barrier point at the contact angle
    return v[0] - hp_lo, v[1] + hp_hi


def make_initial(domain, r0, eps=(), n=512, window0=None):
    """Build a starting state: r0 plus window cosine modes, contact-corrected.

    The angle window solves the two endpoint-position equations by a damped
    Newton iteration seeded at window0 when given; quadratic wings over the
    outer 35% of the window carry the Neumann data.  The flat barrier keeps
    the exact window [0, pi].
    """
    eps = tuple(float(e) for e in eps)
    if r0 <= 0:
        raise ConfigError("r0 must be positive")
    if domain.kind == "halfplane":
        lo, hi = 0.0, math.pi
    else:
        if window0 is not None:
            lo, hi = float(window0[0]), float(window0[1])
        else:
            _, _, k_c = geo.domain_eval(domain, BOT)
            guess = min(r0 * k_c, 0.6)
            lo, hi = guess, math.pi - guess
        delta = 1e-7
        ok = False
        for _ in range(60):
            g1, g2 = _initial_contact_gaps(domain, lo, hi, r0, eps)
            if max(abs(g1), abs(g2)) < 1e-13 * (1.0 + r0):
                ok = True
                break
            a1, a2 = _initial_contact_gaps(domain, lo + delta, hi, r0, eps)
            b1, b2 = _initial_contact_gaps(domain, lo, hi + delta, r0, eps)
            jac = np.array([[(a1 - g1) / delta, (b1 - g1) / delta],
                            [(a2 - g2) / delta, (b2 - g2) / delta]])
            try:
                step = np.linalg.solve(jac, np.array([g1, g2]))
            except np.linalg.LinAlgError as exc:
                raise ContactSolveFailed("singular contact Jacobian") from exc
            limit = 0.2 * (hi - lo)
            step = np.clip(step, -limit, limit)
            lo -= step[0]
            hi -= step[1]
            if not lo < hi:
                raise ContactSolveFailed("contact window collapsed")
        if not ok:
            raise ContactSolveFailed(
                f"no contact window for r0={r0}, eps={eps}")
    h_lo, _, _ = geo.domain_eval(domain, BOT + lo)
    h_hi, _, _ = geo.domain_eval(domain, HALF_PI + hi)
    theta = np.linspace(lo, hi, n + 1)
    sigma = _initial_profile(theta, lo, hi, r0, eps, -h_lo, h_hi)
    arc = geo.SupportArc(lo, hi, sigma)
    geo.curvature_of_arc(arc)  # raises ConvexityLost on bad perturbations
    return FlowState(0.0, arc)


# ---------------------------------------------------------------------------
# extinction estimate
# ---------------------------------------------------------------------------

@dataclass
class ExtinctionEstimate:
    T: float
    T_fixed: float
    T_fit: float
    c_fit: float
    p_star: np.ndarray
    normal_angle: float
    t_last: float
    n_fit: int

    def describe(self):
        return {"T": self.T, "T_fixed": self.T_fixed, "T_fit": self.T_fit,
                "c_fit": self.c_fit, "p_star": [float(v) for v in self.p_star],
                "normal_angle": self.normal_angle,
                "t_last": self.t_last, "n_fit": self.n_fit}


def estimate_extinction(traj: Trajectory):
    """Extinction time and contact point from the tail of a trajectory.

    T first from T = t + |U|/Theta at the last sample (exact under the area
    law when the barrier piece has shrunk away), then refined by fitting
    |U| = pi (T - t) + c (T - t)^{3/2} over the last decade of remaining
    time.  The two must agree to 10% of the remaining time.
    """
    if traj.area is None:
        _collect_diagnostics(traj)
    gap = math.pi - float(traj.theta[-1])
    shrunk = traj.area[-1] < 0.05 * traj.area[0]
    if not (gap < 0.2 or shrunk):
        raise InsufficientData(
            f"run stopped too early: gap {gap:.3f} rad, "
            f"area ratio {traj.area[-1] / traj.area[0]:.3f}")

    t_last = float(traj.t[-1])
    T0 = t_last + float(traj.area[-1]) / float(traj.theta[-1])
    rem_last = T0 - t_last
    mask = (T0 - traj.t > 0) & (T0 - traj.t <= 10.0 * rem_last)
    if int(np.sum(mask)) < 8:
        raise InsufficientData(f"only {int(np.sum(mask))} samples in the tail")
    tt = traj.t[mask]
    aa = traj.area[mask]

    T, c = T0, 0.0
    for _ in range(40):
        rem = np.maximum(T - tt, 1e-300)
        root = np.sqrt(rem)
        r = math.pi * rem + c * rem * root - aa
        jac = np.stack([math.pi + 1.5 * c * root, rem * root], axis=1)
        upd, *_ = np.linalg.lstsq(jac, r, rcond=None)
        T -= float(upd[0])
        c -= float(upd[1])
        if abs(upd[0]) < 1e-15 * max(T, 1.0):
            break
    if abs(T - T0) > 0.10 * rem_last:
        raise InconsistentFit(
            f"extinction estimators disagree: {T0:.9g} vs {T:.9g} "
            f"with {rem_last:.3e} remaining")

    arc = traj.arc(len(traj) - 1)
    ends = geo.reconstruct_curve(arc)[[0, -1]]
    phi_a, pa = geo.project_to_boundary(traj.domain, ends[0],
                                        phi0=BOT + arc.theta_lo)
    phi_b, pb = geo.project_to_boundary(traj.domain, ends[1],
                                        phi0=HALF_PI + arc.theta_hi)
    mid = 0.5 * (pa + pb)
    phi_star, p_star = geo.project_to_boundary(
        traj.domain, mid, phi0=0.5 * (phi_a + phi_b))
    return ExtinctionEstimate(T, T0, T, c, p_star, phi_star, t_last,
                              int(np.sum(mask)))
