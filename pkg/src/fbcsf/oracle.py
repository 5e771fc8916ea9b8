"""Lagrangian front-tracking cross-check solver.

Tracks the curve as an ordered point set moved by the discrete curvature
vector (circumscribed-circle estimator), with endpoints slid along the
barrier so the terminal segment stays orthogonal to it.  Deliberately
shares no discretization machinery with the support-function scheme.
Intended for horizons away from extinction; front tracking degrades as
kappa blows up.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .analysis import hausdorff_polylines
from .errors import NoOverlap, SpacingCollapse
from .geometry import domain_eval, project_to_boundary, reconstruct_curve

PI = math.pi


@dataclass
class Polyline:
    points: np.ndarray          # (M, 2), ordered; open: endpoints on barrier
    t: float = 0.0
    closed: bool = False        # sanity mode: no barrier, cyclic neighbors

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ValueError("points must be (M, 2)")
        if self.points.shape[0] < 8:
            raise ValueError("need at least 8 points")

    @property
    def m(self):
        return self.points.shape[0]

    def spacings(self):
        d = np.diff(self.points, axis=0)
        seg = np.hypot(d[:, 0], d[:, 1])
        if self.closed:
            wrap = np.hypot(*(self.points[0] - self.points[-1]))
            seg = np.append(seg, wrap)
        return seg


def _check_spacing(seg):
    mean = float(np.mean(seg))
    if not np.isfinite(mean) or mean <= 0.0:
        raise SpacingCollapse("degenerate polyline spacing")
    lo, hi = seg.min(), seg.max()
    if lo < 0.2 * mean or hi > 5.0 * mean:
        raise SpacingCollapse(
            f"spacing [{lo:.3e}, {hi:.3e}] outside [0.2, 5] x mean {mean:.3e}")


def _end_tangent(s, pts):
    """dP/ds at s[0] from a quartic through the first five samples."""
    ds = s[:5] - s[0]
    V = np.vander(ds, 5, increasing=True)
    coef = np.linalg.solve(V, pts[:5])
    return coef[1]


def _respace(points, closed):
    """Uniform cumulative-chord resampling through an interpolating spline.

    Ends are clamped with 4th-order one-sided tangents; the default
    not-a-knot closure is only O(h^3) at the ends, which accumulates to
    O(h) over the ~h^-2 steps of a run.  Leaves an already uniformly
    spaced polyline fixed to roundoff (the targets coincide with knots).
    """
    if closed:
        pts = np.vstack([points, points[:1]])
    else:
        pts = points
    d = np.diff(pts, axis=0)
    seg = np.hypot(d[:, 0], d[:, 1])
    if seg.min() <= 1e-14 * max(seg.max(), 1e-300):
        raise SpacingCollapse("coincident neighbors, cannot re-space")
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if closed:
        spline = CubicSpline(s, pts, axis=0, bc_type="periodic")
    else:
        t0 = _end_tangent(s, pts)
        t1 = -_end_tangent(s[-1] - s[::-1], pts[::-1])
        spline = CubicSpline(s, pts, axis=0, bc_type=((1, t0), (1, t1)))
    m = points.shape[0]
    targets = np.linspace(0.0, s[-1], m + 1 if closed else m)
    out = spline(targets[:-1] if closed else targets)
    if not closed:
        out[0] = points[0]
        out[-1] = points[-1]
    return out


def curvature_vectors(points, closed):
    """Signed circumscribed-circle curvature times the unit normal.

    kappa = 4K/(abc) on each neighbor triple; the chord-perpendicular
    carries the sign, so the vector is orientation-free.
    """
    if closed:
        A = np.roll(points, 1, axis=0)
        B = points
        C = np.roll(points, -1, axis=0)
    else:
        A, B, C = points[:-2], points[1:-1], points[2:]
    u = C - B
    v = A - B
    chord = C - A
    cross = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
    a = np.hypot(u[:, 0], u[:, 1])
    b = np.hypot(v[:, 0], v[:, 1])
    c = np.hypot(chord[:, 0], chord[:, 1])
    kappa = 2.0 * cross / (a * b * c)
    nhat = np.stack([-chord[:, 1], chord[:, 0]], axis=1) / c[:, None]
    return kappa[:, None] * nhat


def _mirror_ghost(domain, end, inner):
    """Reflect the interior neighbor across the barrier tangent at the end."""
    phi, foot = project_to_boundary(domain, end)
    tng = np.array([-math.sin(phi), math.cos(phi)])
    v = inner - foot
    return foot + 2.0 * float(v @ tng) * tng - v


def _endpoint_motion(domain, trip, dt):
    """Curvature step of a boundary point from its mirror-completed triple."""
    kv = curvature_vectors(np.asarray(trip), closed=False)[0]
    moved = trip[1] + dt * kv
    _, snapped = project_to_boundary(domain, moved)
    return snapped


def oracle_step(line, domain, dt):
    """One explicit curvature-motion step with contact enforcement.

    Interior points move by dt times the curvature vector.  Endpoints move
    by the curvature of their mirror-completed triple (neighbor reflected
    across the barrier tangent), then snap back onto the barrier; replacing
    them by the neighbor's projection instead would bias the contact speed
    by O(1/cfl) since the O(h^2) pull repeats every O(h^2)-sized step.
    """
    seg = line.spacings()
    _check_spacing(seg)
    hmin = float(seg.min())
    if dt > 0.5000001 * hmin * hmin:
        raise ValueError(f"dt={dt:g} exceeds 0.5*(min spacing)^2={0.5*hmin*hmin:g}")
    pts = line.points.copy()
    if dt > 0.0:
        kv = curvature_vectors(pts, line.closed)
        if line.closed:
            pts = pts + dt * kv
        else:
            g_lo = _mirror_ghost(domain, pts[0], pts[1])
            g_hi = _mirror_ghost(domain, pts[-1], pts[-2])
            new_lo = _endpoint_motion(domain, [g_lo, pts[0], pts[1]], dt)
            new_hi = _endpoint_motion(domain, [pts[-2], pts[-1], g_hi], dt)
            pts[1:-1] += dt * kv
            pts[0] = new_lo
            pts[-1] = new_hi
    pts = _respace(pts, line.closed)
    out = Polyline(pts, line.t + dt, line.closed)
    _check_spacing(out.spacings())
    return out


def contact_angle_residuals(line, domain):
    """Unsigned angles between the curve's end tangents and the barrier normal.

    One-sided parabolic tangent estimate; the raw chord would carry an
    O(kappa*h/2) bias and mask the actual contact error.
    """
    res = []
    for p0, p1, p2 in ((line.points[0], line.points[1], line.points[2]),
                       (line.points[-1], line.points[-2], line.points[-3])):
        phi, _ = project_to_boundary(domain, p0)
        n = np.array([math.cos(phi), math.sin(phi)])
        seg = 4.0 * p1 - 3.0 * p0 - p2
        seg = seg / np.hypot(*seg)
        res.append(abs(math.asin(max(-1.0, min(1.0,
                   float(n[0] * seg[1] - n[1] * seg[0]))))))
    return tuple(res)


def polyline_turning(points):
    """Total tangent rotation along the polyline (the angular width).

    Chord directions are midpoint tangents, so the raw first-to-last span
    misses half a spacing at each end; one-sided parabolic end tangents
    restore it.
    """
    d = np.diff(points, axis=0)
    ang = np.unwrap(np.arctan2(d[:, 1], d[:, 0]))
    d0 = 4.0 * points[1] - 3.0 * points[0] - points[2]
    d1 = 3.0 * points[-1] - 4.0 * points[-2] + points[-3]
    a0 = math.atan2(d0[1], d0[0])
    a1 = math.atan2(d1[1], d1[0])
    a0 += 2.0 * PI * round((ang[0] - a0) / (2.0 * PI))
    a1 += 2.0 * PI * round((ang[-1] - a1) / (2.0 * PI))
    return float(a1 - a0)


def enclosed_area_polyline(line, domain, n_arc=256):
    """Shoelace area of the region bounded by the curve and the barrier."""
    pts = line.points
    if line.closed:
        ring = pts
    else:
        phi_hi, _ = project_to_boundary(domain, pts[-1])
        phi_lo, _ = project_to_boundary(domain, pts[0])
        if domain.kind == "halfplane":
            ring = pts        # the barrier chord is straight, adds nothing
        else:
            from .geometry import domain_arc_points
            back = domain_arc_points(domain, phi_hi, phi_lo, n_arc)
            ring = np.vstack([pts, back[1:-1]])
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def run_oracle(domain, line, times, cfl=0.4):
    """Advance the front so it lands exactly on each requested time.

    Returns a list of Polyline snapshots, one per entry of `times`.
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return []
    if np.any(np.diff(times) < 0.0):
        raise ValueError("times must be nondecreasing")
    if times[0] < line.t - 1e-15:
        raise ValueError("first requested time precedes the line's time")
    out = []
    cur = line
    for target in times:
        while cur.t < target - 1e-15:
            hmin = float(cur.spacings().min())
            dt = min(cfl * hmin * hmin, target - cur.t)
            cur = oracle_step(cur, domain, dt)
        out.append(Polyline(cur.points.copy(), float(target), cur.closed))
    return out


def _interp_points(t, t0, p0, t1, p1):
    if t1 <= t0:
        return p0.copy()
    w = (t - t0) / (t1 - t0)
    return (1.0 - w) * p0 + w * p1


def _curve_at(times, curves, ts):
    """Index-wise linear interpolation between bracketing snapshots."""
    i = int(np.searchsorted(times, ts))
    if i < times.size and abs(times[i] - ts) <= 1e-12 * (1.0 + abs(ts)):
        return curves[i]
    if i == 0 or i >= times.size:
        raise NoOverlap(f"time {ts:g} outside range "
                        f"[{times[0]:g}, {times[-1]:g}]")
    return _interp_points(ts, times[i - 1], curves[i - 1], times[i], curves[i])


def compare_solvers(traj, oracle_snaps, sample_times):
    """Max Hausdorff distance between the two solvers at the sample times.

    Returns (max_distance, table) with table rows (t, distance).  Solver
    curves come from reconstructed trajectory samples, oracle curves from
    the snapshot list; both sides interpolate between brackets when a
    sample time falls inside their range.
    """
    sample_times = np.asarray(sample_times, dtype=float)
    if sample_times.size == 0:
        raise NoOverlap("no sample times requested")
    st = traj.t
    ot = np.asarray([ln.t for ln in oracle_snaps], dtype=float)
    lo = max(st[0], ot[0])
    hi = min(st[-1], ot[-1])
    if hi < lo:
        raise NoOverlap(f"solver range [{st[0]:g}, {st[-1]:g}] and oracle "
                        f"range [{ot[0]:g}, {ot[-1]:g}] do not overlap")
    tol = 1e-12 * (1.0 + abs(hi))
    if np.any(sample_times < lo - tol) or np.any(sample_times > hi + tol):
        raise NoOverlap("sample times leave the common range "
                        f"[{lo:g}, {hi:g}]")
    solver_curves = [reconstruct_curve(traj.arc(i)) for i in range(len(traj))]
    oracle_curves = [ln.points for ln in oracle_snaps]
    table = []
    worst = 0.0
    for ts in sample_times:
        a = _curve_at(st, solver_curves, ts)
        b = _curve_at(ot, oracle_curves, ts)
        d = hausdorff_polylines(a, b)
        table.append((float(ts), float(d)))
        worst = max(worst, d)
    return worst, table


def polyline_from_arc(arc, m, t=0.0):
    """Sample a support arc's curve at m uniform normal angles.

    Independent entry point for seeding the front tracker from the other
    solver's state; the first re-spacing step evens out the arclength.
    """
    th = arc.grid()
    spl = CubicSpline(th, arc.sigma)
    tt = np.linspace(arc.theta_lo, arc.theta_hi, m)
    sig, sigp = spl(tt), spl(tt, 1)
    c, s = np.cos(tt), np.sin(tt)
    pts = np.stack([sig * c - sigp * s, sig * s + sigp * c], axis=1)
    return Polyline(pts, float(t))


def semicircle_line(radius, m, domain=None, closed=False):
    """Uniformly spaced polyline on a circle of the given radius.

    Open mode: upper semicircle with endpoints on the x-axis; closed mode:
    full circle for the no-boundary sanity law.
    """
    if closed:
        ang = np.linspace(0.0, 2.0 * PI, m, endpoint=False)
    else:
        ang = np.linspace(0.0, PI, m)
    pts = radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return Polyline(pts, 0.0, closed)
