"""Convex barriers as support functions, and area/moment functionals of contact arcs.

The barrier is the boundary of a convex planar domain, stored through its
support function h(theta) = sup_x x.(cos theta, sin theta) over the domain.
Points, tangents and curvature all come from h and its first two derivatives
(Gauss-map parametrisation): the boundary point with outward normal angle
theta is h*N + h'*T with N = (cos theta, sin theta), T = (-sin theta, cos theta),
and the curvature there is 1/(h'' + h).

An evolving arc with endpoints on the barrier is stored the same way: support
samples sigma_i on its own angle interval [theta_lo, theta_hi].  The barrier
piece closing the arc into a loop runs over the angle interval
[pi/2 + theta_hi, 3*pi/2 + theta_lo].

"Standard position" places the eventual contact point at the origin with the
outward barrier normal pointing straight down (angle 3*pi/2), so the barrier
support function vanishes to first order at 3*pi/2.  A half-plane barrier is
the degenerate flat case: its support data is identically (0, 0, 0) and the
closing barrier piece has zero angular width.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson as _scipy_simpson

from .errors import (
    ContactMismatch,
    ConvexityLost,
    InvalidArc,
    NonConvexDomain,
    PointNotOnBoundary,
)

TWO_PI = 2.0 * math.pi
BOTTOM = 1.5 * math.pi  # normal angle of the standard contact point

_KIND_IDS = {"halfplane": 0, "disk": 1, "ellipse": 2, "fourier": 3}


# ---------------------------------------------------------------------------
# finite differences and quadrature helpers (uniform grids)
# ---------------------------------------------------------------------------

def deriv1_4(y, dx):
    """Fourth-order first derivative on a uniform grid, one-sided at the ends."""
    y = np.asarray(y, dtype=float)
    n = y.size
    if n < 6:
        raise ValueError("need at least 6 samples for the 4th-order stencil")
    d = np.empty_like(y)
    d[2:-2] = (y[:-4] - 8.0 * y[1:-3] + 8.0 * y[3:-1] - y[4:]) / (12.0 * dx)
    d[0] = (-25 * y[0] + 48 * y[1] - 36 * y[2] + 16 * y[3] - 3 * y[4]) / (12.0 * dx)
    d[1] = (-3 * y[0] - 10 * y[1] + 18 * y[2] - 6 * y[3] + y[4]) / (12.0 * dx)
    d[-2] = (3 * y[-1] + 10 * y[-2] - 18 * y[-3] + 6 * y[-4] - y[-5]) / (12.0 * dx)
    d[-1] = (25 * y[-1] - 48 * y[-2] + 36 * y[-3] - 16 * y[-4] + 3 * y[-5]) / (12.0 * dx)
    return d


def deriv2_2(y, dx):
    """Second-order second derivative, one-sided (2,-5,4,-1) at the ends."""
    y = np.asarray(y, dtype=float)
    if y.size < 4:
        raise ValueError("need at least 4 samples")
    d = np.empty_like(y)
    d[1:-1] = (y[:-2] - 2.0 * y[1:-1] + y[2:]) / (dx * dx)
    d[0] = (2 * y[0] - 5 * y[1] + 4 * y[2] - y[3]) / (dx * dx)
    d[-1] = (2 * y[-1] - 5 * y[-2] + 4 * y[-3] - y[-4]) / (dx * dx)
    return d


def deriv2_4(y, dx):
    """Fourth-order second derivative, one-sided 6-point stencils at the ends."""
    y = np.asarray(y, dtype=float)
    n = y.size
    if n < 7:
        raise ValueError("need at least 7 samples for the 4th-order stencil")
    h2 = 12.0 * dx * dx
    d = np.empty_like(y)
    d[2:-2] = (-y[:-4] + 16 * y[1:-3] - 30 * y[2:-2] + 16 * y[3:-1] - y[4:]) / h2
    d[0] = (45 * y[0] - 154 * y[1] + 214 * y[2] - 156 * y[3] + 61 * y[4] - 10 * y[5]) / h2
    d[1] = (10 * y[0] - 15 * y[1] - 4 * y[2] + 14 * y[3] - 6 * y[4] + y[5]) / h2
    d[-2] = (10 * y[-1] - 15 * y[-2] - 4 * y[-3] + 14 * y[-4] - 6 * y[-5] + y[-6]) / h2
    d[-1] = (45 * y[-1] - 154 * y[-2] + 214 * y[-3] - 156 * y[-4] + 61 * y[-5] - 10 * y[-6]) / h2
    return d


def simpson(y, dx):
    """Composite Simpson integral of uniform samples."""
    return float(_scipy_simpson(np.asarray(y, dtype=float), dx=dx))


def adaptive_simpson(f, a, b, tol=1e-10, max_depth=50):
    """Adaptive Simpson quadrature of a scalar callable on [a, b]."""
    if b <= a:
        return 0.0
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, fa, b, fb, m, fm, whole, tol, depth):
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        delta = left + right - whole
        if depth >= max_depth or abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        return (recurse(a, fa, m, fm, lm, flm, left, 0.5 * tol, depth + 1)
                + recurse(m, fm, b, fb, rm, frm, right, 0.5 * tol, depth + 1))

    return recurse(a, fa, b, fb, m, fm, whole, tol, 0)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)


def gauss_arc(f, a, b):
    """48-point Gauss-Legendre integral of a vectorized callable on [a, b].

    Spectrally accurate for the analytic barrier integrands; adaptive Simpson
    stays available as an independent cross-check quadrature.
    """
    if b <= a:
        return 0.0
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    return half * float(np.dot(_GL_W, f(mid + half * _GL_X)))


def shoelace_area(points):
    """Signed polygon area (positive for counterclockwise vertex order)."""
    p = np.asarray(points, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


# ---------------------------------------------------------------------------
# rigid frames and domains
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Frame:
    """Rigid motion x -> R(alpha) (x + (tx, ty)) applied to the raw domain."""

    alpha: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    def is_identity(self, tol=0.0):
        return (abs(self.alpha) <= tol and abs(self.tx) <= tol
                and abs(self.ty) <= tol)

    def apply(self, points):
        p = np.asarray(points, dtype=float) + np.array([self.tx, self.ty])
        c, s = math.cos(self.alpha), math.sin(self.alpha)
        rot = np.array([[c, -s], [s, c]])
        return p @ rot.T


def compose(first: Frame, second: Frame) -> Frame:
    """Frame doing `first` and then `second`."""
    c, s = math.cos(-first.alpha), math.sin(-first.alpha)
    bx = first.tx + c * second.tx - s * second.ty
    by = first.ty + s * second.tx + c * second.ty
    return Frame(first.alpha + second.alpha, bx, by)


@dataclass(frozen=True)
class ConvexDomain:
    """Convex barrier: a support-function kind, raw coefficients, and a frame.

    kinds
        halfplane : flat barrier, degenerate support data (params ignored)
        disk      : params (R,), raw disk of radius R centred at the origin
        ellipse   : params (a, b), axis-aligned, centred at the origin
        fourier   : params (a0, a1..aK, b1..bK), raw support function
                    a0 + sum a_k cos(k phi) + b_k sin(k phi)
    """

    kind: str
    params: tuple = ()
    frame: Frame = Frame()

    def __post_init__(self):
        if self.kind not in _KIND_IDS:
            raise NonConvexDomain(f"unknown barrier kind {self.kind!r}")
        p = tuple(float(v) for v in self.params)
        object.__setattr__(self, "params", p)
        if self.kind == "disk":
            if len(p) != 1 or p[0] <= 0:
                raise NonConvexDomain("disk needs a single positive radius")
        elif self.kind == "ellipse":
            if len(p) != 2 or min(p) <= 0:
                raise NonConvexDomain("ellipse needs two positive semi-axes")
        elif self.kind == "fourier":
            if len(p) < 1 or len(p) % 2 == 0:
                raise NonConvexDomain("fourier needs coefficients (a0, a1..aK, b1..bK)")

    @property
    def kind_id(self):
        return _KIND_IDS[self.kind]

    def params_array(self):
        return np.asarray(self.params if self.params else (0.0,), dtype=float)

    def describe(self):
        return {"kind": self.kind, "params": list(self.params),
                "frame": [self.frame.alpha, self.frame.tx, self.frame.ty]}


def halfplane():
    """Flat barrier in standard position (upper half-plane, boundary y = 0)."""
    return ConvexDomain("halfplane", ())


def standard_disk(radius):
    """Disk barrier tangent to y = 0 at the origin from above."""
    return ConvexDomain("disk", (radius,), Frame(0.0, 0.0, radius))


def standard_ellipse(a, b):
    """Axis-aligned ellipse barrier tangent to y = 0 at the origin from above."""
    return ConvexDomain("ellipse", (a, b), Frame(0.0, 0.0, b))


def _raw_eval(kind_id, params, phi):
    """Raw support value, derivative and curvature radius at angle phi."""
    phi = np.asarray(phi, dtype=float)
    if kind_id == 0:
        z = np.zeros_like(phi)
        return z, z.copy(), z.copy()
    if kind_id == 1:
        r = params[0]
        return np.full_like(phi, r), np.zeros_like(phi), np.full_like(phi, r)
    if kind_id == 2:
        a, b = params[0], params[1]
        c, s = np.cos(phi), np.sin(phi)
        h = np.sqrt((a * c) ** 2 + (b * s) ** 2)
        hp = (b * b - a * a) * s * c / h
        rho = (a * b) ** 2 / h ** 3
        return h, hp, rho
    # fourier
    k_max = (len(params) - 1) // 2
    h = np.full_like(phi, params[0])
    hp = np.zeros_like(phi)
    hpp = np.zeros_like(phi)
    for k in range(1, k_max + 1):
        ak = params[k]
        bk = params[k_max + k]
        ck, sk = np.cos(k * phi), np.sin(k * phi)
        h += ak * ck + bk * sk
        hp += k * (-ak * sk + bk * ck)
        hpp += -k * k * (ak * ck + bk * sk)
    return h, hp, hpp + h


def _eval_full(domain: ConvexDomain, theta):
    """(h, h', rho) of the framed barrier; rho is the curvature radius."""
    theta = np.asarray(theta, dtype=float)
    if domain.kind == "halfplane":
        z = np.zeros_like(theta)
        return z, z.copy(), z.copy()
    fr = domain.frame
    phi = theta - fr.alpha
    h, hp, rho = _raw_eval(domain.kind_id, domain.params, phi)
    c, s = np.cos(phi), np.sin(phi)
    h = h + fr.tx * c + fr.ty * s
    hp = hp - fr.tx * s + fr.ty * c
    return h, hp, rho


def domain_eval(domain: ConvexDomain, theta):
    """Support value, its theta-derivative, and barrier curvature at angle theta.

    Angles are taken mod 2*pi.  The half-plane returns (0, 0, 0) identically.
    Raises NonConvexDomain if a fourier barrier has non-positive curvature
    radius at the requested angle.
    """
    scalar = np.isscalar(theta)
    h, hp, rho = _eval_full(domain, theta)
    if domain.kind == "halfplane":
        kappa = rho
    else:
        if np.any(rho <= 0.0):
            raise NonConvexDomain(
                f"{domain.kind} barrier has curvature radius <= 0 at some angle")
        kappa = 1.0 / rho
    if scalar:
        return float(h), float(hp), float(kappa)
    return h, hp, kappa


def domain_point(domain: ConvexDomain, theta):
    """Barrier point with outward normal angle theta (h*N + h'*T)."""
    h, hp, _ = _eval_full(domain, theta)
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    pts = np.stack([h * c - hp * s, h * s + hp * c], axis=-1)
    return pts


def domain_arc_points(domain: ConvexDomain, phi_a, phi_b, n):
    """n+1 barrier points with normal angles uniformly spaced in [phi_a, phi_b]."""
    return domain_point(domain, np.linspace(phi_a, phi_b, n + 1))


def standardize_frame(domain: ConvexDomain, p_star, normal_angle=BOTTOM,
                      tol=1e-6):
    """Re-frame the barrier so p_star maps to the origin with normal 3*pi/2.

    Returns (new_domain, extra) where extra is the rigid motion applied on
    top of the existing frame; the same motion must be applied to any arcs
    expressed in the old coordinates.  p_star must lie on the barrier
    (support and tangency residuals at normal_angle within tol times the
    coordinate scale), otherwise PointNotOnBoundary is raised.
    """
    px, py = float(p_star[0]), float(p_star[1])
    phi = float(normal_angle)
    scale = 1.0 + abs(px) + abs(py)
    if domain.kind == "halfplane":
        # flat barrier: frame-independent, so only shift the coordinates
        if abs(py) > tol * scale:
            raise PointNotOnBoundary(f"point sits {py:.3e} off the flat barrier")
        return domain, Frame(0.0, -px, 0.0)
    h, hp, _ = domain_eval(domain, phi)
    n = (math.cos(phi), math.sin(phi))
    t = (-math.sin(phi), math.cos(phi))
    res_val = h - (px * n[0] + py * n[1])
    res_tan = hp - (px * t[0] + py * t[1])
    if max(abs(res_val), abs(res_tan)) > tol * scale:
        raise PointNotOnBoundary(
            f"support residual {res_val:.3e}, tangency residual {res_tan:.3e}")
    extra = Frame(_wrap_angle(BOTTOM - phi), -px, -py)
    return ConvexDomain(domain.kind, domain.params,
                        compose(domain.frame, extra)), extra


def _wrap_angle(a):
    """Wrap to (-pi, pi]."""
    a = math.fmod(a, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    elif a > math.pi:
        a -= TWO_PI
    return a


def in_standard_position(domain: ConvexDomain, tol=1e-9):
    """True when the barrier supports y = 0 at the origin from above."""
    if domain.kind == "halfplane":
        return domain.frame.is_identity(tol)
    h, hp, _ = domain_eval(domain, BOTTOM)
    return abs(h) <= tol and abs(hp) <= tol


# ---------------------------------------------------------------------------
# support arcs
# ---------------------------------------------------------------------------

@dataclass
class SupportArc:
    """Uniform support samples of a convex arc on [theta_lo, theta_hi]."""

    theta_lo: float
    theta_hi: float
    sigma: np.ndarray

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, dtype=float)
        if self.sigma.ndim != 1 or self.sigma.size < 17:
            raise InvalidArc("need at least 17 support samples (N >= 16)")
        if not self.theta_lo < self.theta_hi:
            raise InvalidArc("empty angle interval")

    @property
    def n(self):
        return self.sigma.size - 1

    @property
    def width(self):
        return self.theta_hi - self.theta_lo

    @property
    def dtheta(self):
        return self.width / self.n

    def grid(self):
        return np.linspace(self.theta_lo, self.theta_hi, self.sigma.size)


def sigma_arc_bounds(theta_lo, theta_hi):
    """Angle interval of the barrier piece closing the arc into a loop."""
    return 0.5 * math.pi + theta_hi, 1.5 * math.pi + theta_lo


def curvature_of_arc(arc: SupportArc):
    """Pointwise curvature 1/(sigma'' + sigma) from second-order differences."""
    w = deriv2_2(arc.sigma, arc.dtheta) + arc.sigma
    if np.min(w) <= 0.0:
        raise ConvexityLost(f"curvature radius min {np.min(w):.3e} <= 0")
    return 1.0 / w


def reconstruct_curve(arc: SupportArc):
    """Arc points sigma*N + sigma'*T on the support grid (4th-order sigma')."""
    theta = arc.grid()
    sp = deriv1_4(arc.sigma, arc.dtheta)
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([arc.sigma * c - sp * s, arc.sigma * s + sp * c], axis=-1)


def mu_functional(arc: SupportArc):
    """Arc part of twice the enclosed area: integral of sigma*(sigma''+sigma)."""
    w = deriv2_4(arc.sigma, arc.dtheta) + arc.sigma
    return simpson(arc.sigma * w, arc.dtheta)


def mu_sigma(domain: ConvexDomain, theta_lo, theta_hi):
    """Barrier part of twice the enclosed area: integral of h/kappa over the
    closing barrier piece."""
    if domain.kind == "halfplane":
        return 0.0
    a, b = sigma_arc_bounds(theta_lo, theta_hi)

    def f(phi):
        h, _, rho = _eval_full(domain, phi)
        return h * rho

    return gauss_arc(f, a, b)


def contact_residuals(arc: SupportArc, domain: ConvexDomain):
    """Signed support residuals of the two arc endpoints against the barrier.

    Zero means the endpoint sits exactly on the barrier at the contact angle
    implied by orthogonal intersection.
    """
    pts = _endpoints(arc)
    phi_lo = 1.5 * math.pi + arc.theta_lo
    phi_hi = 0.5 * math.pi + arc.theta_hi
    out = []
    for pt, phi in ((pts[0], phi_lo), (pts[1], phi_hi)):
        if domain.kind == "halfplane":
            out.append(float(pt[1]))
        else:
            h, _, _ = domain_eval(domain, phi)
            out.append(float(h - (pt[0] * math.cos(phi) + pt[1] * math.sin(phi))))
    return out[0], out[1]


def _endpoints(arc: SupportArc):
    """Cartesian endpoints of the arc (4th-order one-sided sigma')."""
    sp = deriv1_4(arc.sigma, arc.dtheta)
    th = (arc.theta_lo, arc.theta_hi)
    sig = (arc.sigma[0], arc.sigma[-1])
    d = (sp[0], sp[-1])
    pts = []
    for t, sg, dv in zip(th, sig, d):
        c, s = math.cos(t), math.sin(t)
        pts.append((sg * c - dv * s, sg * s + dv * c))
    return pts


def _check_contact(arc, domain, contact_tol):
    if contact_tol is None:
        return
    r_lo, r_hi = contact_residuals(arc, domain)
    scale = max(1.0, float(np.max(np.abs(arc.sigma))))
    worst = max(abs(r_lo), abs(r_hi))
    if worst > contact_tol * scale:
        raise ContactMismatch(
            f"endpoint support residual {worst:.3e} exceeds "
            f"{contact_tol:.1e} * scale {scale:.3g}")


def enclosed_area(arc: SupportArc, domain: ConvexDomain, contact_tol=1e-6):
    """Area enclosed by the arc and the closing barrier piece.

    Pass contact_tol=None to skip the endpoint-on-barrier check.
    """
    _check_contact(arc, domain, contact_tol)
    return 0.5 * (mu_functional(arc) + mu_sigma(domain, arc.theta_lo, arc.theta_hi))


def first_moment(arc: SupportArc, domain: ConvexDomain, p=0.0,
                 contact_tol=1e-6):
    """First horizontal moment of the enclosed region shifted left by p.

    Returns q = integral of x over the region behind the arc translated by
    -p*e1, computed as one third of the arc and barrier boundary integrals of
    x * (support) * (curvature radius).
    """
    _check_contact(arc, domain, contact_tol)
    theta = arc.grid()
    dth = arc.dtheta
    c, s = np.cos(theta), np.sin(theta)
    w = deriv2_4(arc.sigma, dth) + arc.sigma
    sig_p = arc.sigma - p * c
    dsig_p = deriv1_4(arc.sigma, dth) + p * s
    x = sig_p * c - dsig_p * s
    nu_arc = simpson(x * sig_p * w, dth)

    nu_bar = 0.0
    if domain.kind != "halfplane":
        a, b = sigma_arc_bounds(arc.theta_lo, arc.theta_hi)

        def f(phi):
            h, hp, rho = _eval_full(domain, phi)
            cc, ss = np.cos(phi), np.sin(phi)
            return ((h * cc - hp * ss) - p) * (h - p * cc) * rho

        nu_bar = gauss_arc(f, a, b)
    return (nu_arc + nu_bar) / 3.0


def boundary_sum(f_lo, f_hi):
    """{f} = f_lo + f_hi, the sum of a quantity over the two contacts."""
    return f_lo + f_hi

def boundary_diff(f_lo, f_hi):
    """[f] = f_hi - f_lo, the difference across the two contacts."""
    return f_hi - f_lo


def transform_arc(arc: SupportArc, frame: Frame) -> SupportArc:
    """Support samples of the rigidly moved arc x -> R(alpha)(x + t).

    Exact relabelling: angles shift by alpha and each sample gains t.N(theta).
    """
    theta = arc.grid()
    gain = frame.tx * np.cos(theta) + frame.ty * np.sin(theta)
    return SupportArc(arc.theta_lo + frame.alpha, arc.theta_hi + frame.alpha,
                      arc.sigma + gain)


def project_to_boundary(domain: ConvexDomain, point, phi0=BOTTOM,
                        tol=1e-13, max_iter=60):
    """Closest-point projection onto the barrier.

    Returns (phi, point_on_barrier).  For the flat barrier this drops the
    vertical coordinate; otherwise Newton iteration on the normal angle.
    """
    px, py = float(point[0]), float(point[1])
    if domain.kind == "halfplane":
        return BOTTOM, np.array([px, 0.0])
    phi = float(phi0)
    scale = 1.0 + abs(px) + abs(py)
    for _ in range(max_iter):
        h, hp, rho = (float(v) for v in _eval_full(domain, phi))
        c, s = math.cos(phi), math.sin(phi)
        gx = px - (h * c - hp * s)
        gy = py - (h * s + hp * c)
        g = gx * (-s) + gy * c          # residual along the tangent
        gp = -rho - (gx * c + gy * s)
        if gp == 0.0:
            break
        step = g / gp
        phi -= step
        if abs(step) <= tol * scale:
            break
    return phi, domain_point(domain, phi)
