import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from boundary_bubble import core_math as cm
from boundary_bubble.core_math import HalfSpacePoint, ParameterError, ProblemParams
from boundary_bubble.forms import TraceFreeForm


# ------------------------------------------------------------- params


def test_params_defaults_and_validation():
    p = ProblemParams()
    assert (p.n, p.r_max, p.n_r) == (7, 60.0, 600)
    for bad in [dict(n=2), dict(r_max=0), dict(n_t=8), dict(quad_tol=1e-3), dict(grading=-1)]:
        with pytest.raises(ParameterError):
            ProblemParams(**bad)


def test_energy_dimension_gate():
    ProblemParams(n=7).require_energy_dimension()
    with pytest.raises(ParameterError):
        ProblemParams(n=6).require_energy_dimension()


def test_halfspace_point_rejects_negative_t():
    with pytest.raises(ParameterError):
        HalfSpacePoint(np.zeros(6), -0.1)


# ------------------------------------------------------------- bubble


def test_bubble_at_origin_and_axis():
    p = ProblemParams()
    assert cm.bubble_eval(p, HalfSpacePoint(np.zeros(6), 0.0)).u == 1.0
    assert cm.bubble_eval(p, HalfSpacePoint(np.zeros(6), 1.0)).u == pytest.approx(0.03125, rel=1e-15)


def test_bubble_gradient_matches_finite_differences(rng):
    n = 7
    z, t = rng.normal(size=6), 0.7
    g = cm.bubble_gradient(n, z, t)
    eps = 1e-6
    for a in range(n):
        zp, zm, tp, tm = z.copy(), z.copy(), t, t
        if a < n - 1:
            zp[a] += eps
            zm[a] -= eps
        else:
            tp, tm = t + eps, t - eps
        fd = (cm.bubble(n, zp, tp) - cm.bubble(n, zm, tm)) / (2 * eps)
        assert fd == pytest.approx(g[a], rel=1e-6, abs=1e-12)


def test_bubble_hessian_symmetric_and_matches_gradient_fd(rng):
    n = 8
    z, t = rng.normal(size=n - 1), 0.3
    H = cm.bubble_hessian(n, z, t)
    assert np.allclose(H, H.T, atol=0)
    eps = 1e-6
    zp, zm = z.copy(), z.copy()
    zp[2] += eps
    zm[2] -= eps
    col = (cm.bubble_gradient(n, zp, t) - cm.bubble_gradient(n, zm, t)) / (2 * eps)
    assert np.allclose(col, H[:, 2], rtol=1e-6, atol=1e-10)


def test_bubble_value_bounds(rng):
    z = rng.normal(size=(500, 6)) * 3
    t = rng.uniform(0, 5, 500)
    u = cm.bubble(7, z, t)
    assert np.all(u > 0) and np.all(u <= 1)


def test_boundary_identity_pointwise(rng):
    z = rng.normal(size=(2000, 6)) * 2
    assert np.max(np.abs(cm.boundary_identity_residual(7, z))) < 1e-12


# ----------------------------------------------------------- Jacobi


def test_jacobi_at_origin():
    p = ProblemParams()
    o = HalfSpacePoint(np.zeros(6), 0.0)
    assert cm.jacobi_field(p, 7, o) == 2.5
    assert cm.jacobi_field(p, 1, o) == 0.0


def test_jacobi_index_range():
    with pytest.raises(ParameterError):
        cm.jacobi_field(ProblemParams(), 0, HalfSpacePoint(np.zeros(6), 0.0))
    with pytest.raises(ParameterError):
        cm.jacobi_field(ProblemParams(), 8, HalfSpacePoint(np.zeros(6), 0.0))


@pytest.mark.parametrize("b", range(1, 8))
def test_jacobi_robin_condition(rng, b):
    z = rng.normal(size=(500, 6))
    assert np.max(np.abs(cm.linearized_robin_residual(7, b, z))) < 1e-10


def test_dilation_field_harmonic_by_stencil(rng):
    """Fourth-order finite-difference Laplacian of j_n at interior points."""
    n, hstep = 7, 1e-2
    for _ in range(5):
        z, t = rng.normal(size=6) * 0.8, rng.uniform(0.5, 2.0)
        lap = 0.0
        for a in range(n):
            vals = []
            for k in (-2, -1, 0, 1, 2):
                zz, tt = z.copy(), t
                if a < n - 1:
                    zz[a] += k * hstep
                else:
                    tt += k * hstep
                vals.append(cm.jacobi_fields(n, n, zz, tt))
            lap += (-vals[0] + 16 * vals[1] - 30 * vals[2] + 16 * vals[3] - vals[4]) / (12 * hstep**2)
        assert abs(lap) < 1e-6


def test_jacobi_dt_matches_fd(rng):
    z, t, e = rng.normal(size=6), 0.4, 1e-6
    for b in (1, 7):
        fd = (cm.jacobi_fields(7, b, z, t + e) - cm.jacobi_fields(7, b, z, t - e)) / (2 * e)
        assert fd == pytest.approx(cm.jacobi_field_dt(7, b, z, t), rel=1e-6, abs=1e-12)


# -------------------------------------------------------- integrals


def test_integral_I_elementary():
    assert cm.integral_I(1, 0) == pytest.approx(math.pi / 2, rel=1e-15)
    assert cm.integral_I(6, 7) == pytest.approx(1 / 40, rel=1e-14)


def test_integral_I_two_step_ratio():
    assert cm.integral_I(6, 5) == pytest.approx(2 / 3 * cm.integral_I(6, 7), rel=1e-13)


def test_integral_I_against_quadrature():
    q, _ = integrate.quad(lambda r: r**7 / (1 + r * r) ** 6, 0, np.inf, epsrel=1e-13)
    assert cm.integral_I(6, 7) == pytest.approx(q, rel=1e-10)


def test_integral_I_rejects_divergent():
    with pytest.raises(ParameterError):
        cm.integral_I(1, 1)
    with pytest.raises(ParameterError):
        cm.integral_I(3, -1)


def test_integral_I_accepts_fractions():
    assert cm.integral_I(Fraction(7, 2), Fraction(1, 2)) > 0


@settings(max_examples=200, deadline=None)
@given(m2=st.integers(2, 40), a=st.integers(0, 30))
def test_integral_recurrences(m2, a):
    m = m2 / 2
    alpha = float(a)
    if not alpha + 1 < 2 * m:
        return
    I = cm.integral_I
    assert I(m, alpha) == pytest.approx(2 * m / (alpha + 1) * I(m + 1, alpha + 2), rel=1e-12)
    assert I(m, alpha) == pytest.approx(2 * m / (2 * m - alpha - 1) * I(m + 1, alpha), rel=1e-12)
    if alpha + 3 < 2 * m:
        assert I(m, alpha) == pytest.approx((2 * m - alpha - 3) / (alpha + 1) * I(m, alpha + 2), rel=1e-12)


def test_beta_integral_examples():
    assert cm.beta_integral_t(2, 5) == pytest.approx(1 / 12, rel=1e-15)
    assert cm.beta_integral_t(0, 2) == 1.0
    q, _ = integrate.quad(lambda t: t**3 / (1 + t) ** 9, 0, np.inf, epsrel=1e-13, epsabs=0)
    assert cm.beta_integral_t(3, 9) == pytest.approx(q, rel=1e-12)
    with pytest.raises(ParameterError):
        cm.beta_integral_t(3, 4)


def test_sphere_area():
    assert cm.sphere_area(2) == pytest.approx(2 * math.pi, rel=1e-15)
    assert cm.sphere_area(6) == pytest.approx(math.pi**3, rel=1e-15)
    assert cm.omega(7) == cm.sphere_area(6)
    with pytest.raises(ParameterError):
        cm.sphere_area(0)


def test_omega_normalization_via_boundary_integral():
    n = 7
    pw = 2 * (n - 1) / (n - 2)
    q = cm.omega(n) * cm.quad_halfline(lambda r: (1 + r * r) ** (-(n - 2) / 2 * pw) * r ** (n - 2), 1e-12)
    assert q == pytest.approx(cm.omega(n) * cm.integral_I(n - 1, n - 2), rel=1e-8)


@pytest.mark.parametrize("n", range(7, 13))
def test_halfspace_integrals_match_quadrature(n):
    closed = cm.halfspace_integrals(n)
    quad = cm.halfspace_integrals_quadrature(n)
    for k in closed:
        assert quad[k] == pytest.approx(closed[k], rel=1e-8), k


# ---------------------------------------------------- quartic moment


def test_quartic_moment_examples(rng):
    p = ProblemParams()
    assert cm.quartic_moment_constant(p, TraceFreeForm.zeros(6)) == 0.0
    h = np.diag([1.0, -1, 0, 0, 0, 0])
    assert cm.quartic_moment_constant(p, h) == pytest.approx(math.pi**3 / 12, rel=1e-14)
    assert cm.quartic_moment_constant(p, 3 * h) == pytest.approx(9 * math.pi**3 / 12, rel=1e-14)


def test_quartic_moment_monte_carlo(rng):
    """Monte-Carlo sphere sampling oracle at 1e-3."""
    w = rng.normal(size=(400_000, 6))
    w /= np.linalg.norm(w, axis=1)[:, None]
    vals = (w[:, 0] ** 2 - w[:, 1] ** 2) ** 2
    assert math.pi**3 * vals.mean() == pytest.approx(math.pi**3 / 12, rel=1e-2)
    # the product rule is exact on this degree-4 polynomial
    nodes, wts = cm.sphere_rule(6, 3)
    exact = np.sum(wts * (nodes[:, 0] ** 2 - nodes[:, 1] ** 2) ** 2)
    assert exact == pytest.approx(math.pi**3 / 12, rel=1e-13)


def test_quartic_moment_rejects_bad_forms():
    with pytest.raises(ParameterError):
        cm.quartic_moment_constant(ProblemParams(), np.eye(6))
    with pytest.raises(ParameterError):
        cm.quartic_moment_constant(ProblemParams(), np.triu(np.ones((6, 6))) - np.eye(6))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_quartic_moment_rotation_invariant(seed):
    rng = np.random.default_rng(seed)
    h = TraceFreeForm.random(6, rng)
    Q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
    p = ProblemParams()
    a = cm.quartic_moment_constant(p, h)
    b = cm.quartic_moment_constant(p, h.rotated(Q))
    assert b == pytest.approx(a, rel=1e-10)


# --------------------------------------------------------- constants


def test_constants_n7():
    AB = cm.constants_AB(ProblemParams())
    assert AB.B == pytest.approx(math.pi**3 / 48, rel=1e-14)
    assert AB.A == pytest.approx(math.pi**3 / 144, rel=1e-14)


def test_constants_need_convergent_integral():
    # I_{n-1}^n diverges at n = 3
    with pytest.raises(ParameterError):
        cm.constants_AB(3)


@pytest.mark.parametrize("n", range(4, 15))
def test_constants_ratio(n):
    AB = cm.constants_AB(n)
    assert AB.A >= 0 and AB.B > 0
    assert AB.A / AB.B == pytest.approx((n - 3) / (2 * (n - 1)), rel=1e-14)


def test_reduced_coefficients_positive():
    with pytest.raises(ParameterError):
        cm.ReducedCoefficients(n=7, A=-1.0, B=1.0)


# ----------------------------------------------------- quadrature rules


@pytest.mark.parametrize("d,m", [(2, 3), (3, 4), (6, 5)])
def test_sphere_rule_exactness(rng, d, m):
    nodes, w = cm.sphere_rule(d, m)
    assert np.allclose(np.linalg.norm(nodes, axis=1), 1.0)
    assert w.sum() == pytest.approx(cm.sphere_area(d), rel=1e-13)
    # second and fourth moments
    assert np.sum(w * nodes[:, 0] ** 2) == pytest.approx(cm.sphere_area(d) / d, rel=1e-12)
    m4 = 3 * cm.sphere_area(d) / (d * (d + 2))
    assert np.sum(w * nodes[:, 0] ** 4) == pytest.approx(m4, rel=1e-12)
    # odd moments vanish
    assert abs(np.sum(w * nodes[:, 0] ** 3 * nodes[:, -1] ** 2)) < 1e-12


def test_gauss_legendre_panels():
    x, w = cm.gauss_legendre_panels([0, 1, 3], 8)
    assert np.sum(w * x**5) == pytest.approx(3**6 / 6, rel=1e-13)
