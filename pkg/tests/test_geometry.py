import math

import numpy as np
import pytest

from fbcsf import geometry as geo
from fbcsf.errors import (
    ContactMismatch,
    ConvexityLost,
    InvalidArc,
    NonConvexDomain,
    PointNotOnBoundary,
)


def make_arc(theta_lo, theta_hi, n, fn):
    th = np.linspace(theta_lo, theta_hi, n + 1)
    return geo.SupportArc(theta_lo, theta_hi, fn(th))


def disk_contact_arc(r, n=512):
    # circle of radius r meeting the unit standard disk orthogonally:
    # sigma = (1 - sqrt(1+r^2)) sin(theta) + r on [atan r, pi - atan r]
    y0 = 1.0 - math.sqrt(1.0 + r * r)
    lo = math.atan(r)
    return make_arc(lo, math.pi - lo, n, lambda th: y0 * np.sin(th) + r)


def disk_contact_area(r):
    # lens of orthogonal circles (radii 1 and r, center distance sqrt(1+r^2))
    return 0.5 * r * r * (math.pi - 2.0 * math.atan(r)) + math.atan(r) - r


# ---------------------------------------------------------------------------
# finite-difference stencils
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("deriv,exact,order", [
    (geo.deriv1_4, lambda x: np.cos(x), 3.7),
    (geo.deriv2_2, lambda x: -np.sin(x), 1.8),
    (geo.deriv2_4, lambda x: -np.sin(x), 3.6),
])
def test_stencil_order(deriv, exact, order):
    errs = []
    for n in (64, 128):
        x = np.linspace(0.0, 1.0, n + 1)
        errs.append(np.max(np.abs(deriv(np.sin(x), x[1] - x[0]) - exact(x))))
    measured = math.log2(errs[0] / errs[1])
    assert measured >= order


def test_stencils_exact_on_quadratics():
    x = np.linspace(-0.3, 1.1, 25)
    y = 2.0 - 0.7 * x + 0.25 * x * x
    h = x[1] - x[0]
    assert np.allclose(geo.deriv1_4(y, h), -0.7 + 0.5 * x, atol=1e-12)
    assert np.allclose(geo.deriv2_2(y, h), 0.5, atol=1e-11)
    assert np.allclose(geo.deriv2_4(y, h), 0.5, atol=1e-10)


def test_adaptive_simpson():
    assert geo.adaptive_simpson(math.sin, 0.0, math.pi) == pytest.approx(2.0, abs=1e-12)
    assert geo.adaptive_simpson(lambda x: x ** 3, -1.0, 2.0) == pytest.approx(3.75, abs=1e-12)
    assert geo.adaptive_simpson(math.exp, 1.0, 1.0) == 0.0


def test_shoelace_square():
    sq = [(0, 0), (2, 0), (2, 1), (0, 1)]
    assert geo.shoelace_area(sq) == pytest.approx(2.0)
    assert geo.shoelace_area(sq[::-1]) == pytest.approx(-2.0)


# ---------------------------------------------------------------------------
# frames and domains
# ---------------------------------------------------------------------------

def test_frame_compose_matches_sequential(rng):
    f1 = geo.Frame(0.7, -0.3, 1.1)
    f2 = geo.Frame(-1.9, 0.4, 0.25)
    pts = rng.normal(size=(10, 2))
    combined = geo.compose(f1, f2)
    assert np.allclose(combined.apply(pts), f2.apply(f1.apply(pts)), atol=1e-14)


def test_disk_eval_standard_values():
    d1 = geo.standard_disk(1.0)
    assert geo.domain_eval(d1, 1.5 * math.pi) == pytest.approx((0.0, 0.0, 1.0), abs=1e-15)
    d2 = geo.standard_disk(2.0)
    h, hp, k = geo.domain_eval(d2, math.pi)
    assert (h, hp, k) == pytest.approx((2.0, -2.0, 0.5), abs=1e-14)
    assert geo.in_standard_position(d1) and geo.in_standard_position(d2)


def test_halfplane_eval_degenerate():
    hp = geo.halfplane()
    th = np.linspace(0.0, 2.0 * math.pi, 11)
    for v in geo.domain_eval(hp, th):
        assert np.all(v == 0.0)
    assert geo.mu_sigma(hp, 0.1, 3.0) == 0.0


def test_ellipse_eval_against_parametric():
    a, b = 2.0, 1.0
    dom = geo.ConvexDomain("ellipse", (a, b))
    th = np.linspace(0.0, 2.0 * math.pi, 481)
    pts = geo.domain_point(dom, th)
    # boundary points must satisfy the implicit equation
    assert np.max(np.abs((pts[:, 0] / a) ** 2 + (pts[:, 1] / b) ** 2 - 1.0)) < 1e-12
    # support value is the max of <x, N> over the boundary
    t = np.linspace(0.0, 2.0 * math.pi, 20001)
    bx, by = a * np.cos(t), b * np.sin(t)
    for ang in (0.3, 1.2, 4.0):
        h, _, _ = geo.domain_eval(dom, ang)
        assert h == pytest.approx(np.max(bx * math.cos(ang) + by * math.sin(ang)),
                                  abs=1e-7)


def test_fourier_domain_matches_disk():
    # a0 = R with no higher modes is the origin-centred disk
    dom = geo.ConvexDomain("fourier", (1.5,))
    h, hp, k = geo.domain_eval(dom, 0.77)
    assert (h, hp, k) == pytest.approx((1.5, 0.0, 1.0 / 1.5), abs=1e-14)


def test_fourier_nonconvex_rejected():
    dom = geo.ConvexDomain("fourier", (1.0, 0.0, 0.4, 0.0, 0.0))  # 1 + 0.4 cos(2t)
    with pytest.raises(NonConvexDomain):
        geo.domain_eval(dom, np.linspace(0.0, 2.0 * math.pi, 64))


def test_bad_domain_params():
    with pytest.raises(NonConvexDomain):
        geo.ConvexDomain("disk", (-1.0,))
    with pytest.raises(NonConvexDomain):
        geo.ConvexDomain("ellipse", (1.0,))
    with pytest.raises(NonConvexDomain):
        geo.ConvexDomain("square", ())


def test_standardize_frame_shift_only():
    dom = geo.ConvexDomain("disk", (2.0,), geo.Frame(0.0, 1.0, 3.0))
    std, extra = geo.standardize_frame(dom, (1.0, 1.0), 1.5 * math.pi)
    assert geo.in_standard_position(std)
    assert extra.alpha == pytest.approx(0.0)
    assert (extra.tx, extra.ty) == pytest.approx((-1.0, -1.0))
    th = np.linspace(0.0, 2.0 * math.pi, 37)
    h, _, _ = geo.domain_eval(std, th)
    assert np.allclose(h, 2.0 + 2.0 * np.sin(th), atol=1e-12)


def test_standardize_frame_with_rotation():
    # contact on the right of the raw unit disk: rotate so the center lands at (0,1)
    dom = geo.ConvexDomain("disk", (1.0,))
    std, extra = geo.standardize_frame(dom, (1.0, 0.0), 0.0)
    assert geo.in_standard_position(std, tol=1e-12)
    center = std.frame.apply(np.zeros((1, 2)))[0]
    assert center == pytest.approx((0.0, 1.0), abs=1e-14)
    assert extra.alpha == pytest.approx(-0.5 * math.pi)


def test_standardize_frame_rejects_off_boundary():
    dom = geo.standard_disk(1.0)
    with pytest.raises(PointNotOnBoundary):
        geo.standardize_frame(dom, (0.0, 0.3), 1.5 * math.pi)
    with pytest.raises(PointNotOnBoundary):
        geo.standardize_frame(geo.halfplane(), (0.2, 0.5))


def test_standardize_frame_halfplane_shift():
    dom, extra = geo.standardize_frame(geo.halfplane(), (0.7, 0.0))
    assert dom.kind == "halfplane"
    assert (extra.alpha, extra.tx, extra.ty) == pytest.approx((0.0, -0.7, 0.0))


def test_project_to_boundary():
    dom = geo.standard_disk(1.0)
    phi, pt = geo.project_to_boundary(dom, (0.3, 0.1))
    v = np.array([0.3, 0.1]) - np.array([0.0, 1.0])
    expect = np.array([0.0, 1.0]) + v / np.linalg.norm(v)
    assert pt == pytest.approx(expect, abs=1e-12)
    # returned angle is the outward normal angle of the projected point
    assert pt == pytest.approx(geo.domain_point(dom, phi), abs=1e-12)
    _, flat = geo.project_to_boundary(geo.halfplane(), (0.5, 0.2))
    assert flat == pytest.approx((0.5, 0.0))


# ---------------------------------------------------------------------------
# support arcs: curvature, reconstruction, functionals
# ---------------------------------------------------------------------------

def test_arc_validation():
    with pytest.raises(InvalidArc):
        geo.SupportArc(0.0, math.pi, np.ones(10))
    with pytest.raises(InvalidArc):
        geo.SupportArc(1.0, 1.0, np.ones(33))


@pytest.mark.parametrize("fn", [lambda th: np.ones_like(th),
                                lambda th: 1.0 + 0.2 * np.cos(th)])
def test_unit_curvature_arcs(fn):
    # one-sided second-difference rows carry an 11/12 h^2 constant
    arc = make_arc(0.0, math.pi, 512, fn)
    kap = geo.curvature_of_arc(arc)
    assert np.max(np.abs(kap - 1.0)) < 1e-5


def test_convexity_lost():
    arc = make_arc(0.0, math.pi, 64, lambda th: 1.0 + 10.0 * np.cos(2.0 * th))
    with pytest.raises(ConvexityLost):
        geo.curvature_of_arc(arc)


def test_reconstruct_shifted_circle():
    arc = make_arc(0.2, 2.9, 200, lambda th: 1.0 + 0.3 * np.cos(th))
    pts = geo.reconstruct_curve(arc)
    th = arc.grid()
    expect = np.stack([0.3 + np.cos(th), np.sin(th)], axis=-1)
    assert np.max(np.abs(pts - expect)) < 1e-9


@pytest.mark.parametrize("r0,lo,hi,expect", [
    (1.0, 0.0, math.pi, math.pi),
    (0.5, 0.3, 2.1, 0.25 * 1.8),
])
def test_mu_constant(r0, lo, hi, expect):
    arc = make_arc(lo, hi, 256, lambda th: np.full_like(th, r0))
    assert geo.mu_functional(arc) == pytest.approx(expect, rel=1e-12)


def test_mu_perturbed_semicircle():
    eps = 0.05
    arc = make_arc(0.0, math.pi, 512, lambda th: 1.0 + eps * np.cos(2.0 * th))
    expect = math.pi - 1.5 * math.pi * eps * eps
    assert geo.mu_functional(arc) == pytest.approx(expect, abs=1e-9)


def test_halfplane_area_and_moment():
    d = 0.2
    arc = make_arc(0.0, math.pi, 512, lambda th: 1.0 + d * np.cos(th))
    dom = geo.halfplane()
    # upper half-disk of radius 1 centred at (d, 0)
    assert geo.enclosed_area(arc, dom) == pytest.approx(0.5 * math.pi, abs=1e-9)
    q = geo.first_moment(arc, dom)
    assert q == pytest.approx(0.5 * math.pi * d, abs=1e-9)
    # translating the weight is exact: q(U - p e1) = q(U) - p |U|
    p = 0.13
    assert geo.first_moment(arc, dom, p=p) == pytest.approx(
        q - p * 0.5 * math.pi, abs=1e-9)


@pytest.mark.parametrize("r", [0.2, 0.5, 1.0])
def test_disk_contact_area(r):
    arc = disk_contact_arc(r)
    dom = geo.standard_disk(1.0)
    assert geo.enclosed_area(arc, dom) == pytest.approx(disk_contact_area(r),
                                                        abs=1e-9)


def test_disk_moment_translation_covariance():
    arc = disk_contact_arc(0.6)
    dom = geo.standard_disk(1.0)
    area = geo.enclosed_area(arc, dom)
    q0 = geo.first_moment(arc, dom)
    assert q0 == pytest.approx(0.0, abs=1e-10)  # symmetric region
    p = 0.21
    assert geo.first_moment(arc, dom, p=p) == pytest.approx(q0 - p * area, abs=1e-9)


def test_area_against_shoelace():
    # dense polygon so the chord deficit (~kappa^2 l^2 L / 12) sits below gate
    r = 0.5
    dom = geo.standard_disk(1.0)
    area = geo.enclosed_area(disk_contact_arc(r, n=512), dom)
    fine = disk_contact_arc(r, n=4096)
    a, b = geo.sigma_arc_bounds(fine.theta_lo, fine.theta_hi)
    poly = np.vstack([geo.reconstruct_curve(fine),
                      geo.domain_arc_points(dom, a, b, 4096)[1:-1]])
    assert geo.shoelace_area(poly) == pytest.approx(area, abs=1e-6)


def test_contact_mismatch_raised():
    # unit semicircle floated inside the disk, not touching the barrier
    arc = make_arc(0.3, math.pi - 0.3, 128, lambda th: 0.4 * np.ones_like(th))
    with pytest.raises(ContactMismatch):
        geo.enclosed_area(arc, geo.standard_disk(1.0))
    # the unchecked path still returns a number
    val = geo.enclosed_area(arc, geo.standard_disk(1.0), contact_tol=None)
    assert np.isfinite(val)


def test_boundary_sum_diff():
    assert geo.boundary_sum(2.0, 3.5) == 5.5
    assert geo.boundary_diff(2.0, 3.5) == 1.5


def test_transform_arc_matches_moved_points():
    arc = make_arc(0.1, 2.8, 256, lambda th: 1.0 + 0.1 * np.sin(3.0 * th))
    fr = geo.Frame(0.4, 0.2, -0.15)
    moved = geo.transform_arc(arc, fr)
    assert moved.theta_lo == pytest.approx(arc.theta_lo + 0.4)
    got = geo.reconstruct_curve(moved)
    expect = fr.apply(geo.reconstruct_curve(arc))
    assert np.max(np.abs(got - expect)) < 2e-7


def test_sigma_arc_bounds_width():
    a, b = geo.sigma_arc_bounds(0.25, math.pi - 0.4)
    assert b - a == pytest.approx(math.pi - (math.pi - 0.4 - 0.25))
