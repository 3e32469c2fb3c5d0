from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from boundary_bubble import reduced as rd
from boundary_bubble.core_math import ParameterError, ProblemParams, ReducedCoefficients, constants_AB
from boundary_bubble.correction import correction_scalars, solve_reduced_bvp
from boundary_bubble.forms import TraceFreeForm
from boundary_bubble.geometry import FermiMetricJet, sinusoidal_pi_field, varying_gamma_field


# ------------------------------------------------------------------ phi


def test_phi_zero_form(coarse):
    jet = FermiMetricJet.flat(7)
    prof = solve_reduced_bvp(coarse, jet.h)
    assert rd.phi_of_q(coarse, jet, prof) == 0.0


def test_phi_negative_and_homogeneous(coarse, unit_form, coarse_profile):
    jet = FermiMetricJet.build(7, unit_form)
    phi1 = rd.phi_of_q(coarse, jet, coarse_profile)
    assert phi1 < 0
    h2 = unit_form.scaled(2.5)
    prof2 = solve_reduced_bvp(coarse, h2)
    phi2 = rd.phi_of_q(coarse, FermiMetricJet.build(7, h2), prof2)
    assert phi2 == pytest.approx(6.25 * phi1, rel=1e-6)


def test_phi_rejects_mismatched_profile(coarse, coarse_profile):
    jet = FermiMetricJet.build(7, TraceFreeForm(np.diag([0.0, 0, 1, -1, 0, 0])))
    with pytest.raises(ParameterError):
        rd.phi_of_q(coarse, jet, coarse_profile)


def test_phi_dimension_gate():
    with pytest.raises(ParameterError):
        rd.unit_phi(ProblemParams(n=6, n_r=32, n_t=32))


def test_field_coefficients(coarse, coarse_profile):
    f = sinusoidal_pi_field(shape=(8,))
    c = rd.field_coefficients(coarse, f, coarse_profile)
    phi1 = rd.phi_of_q(coarse, FermiMetricJet.build(7, coarse_profile.h_ref), coarse_profile)
    for q, j in zip(f.ids, f.jets):
        assert c.phi[q] == pytest.approx(phi1 * j.pi_norm_sq, rel=1e-12)
    assert c.provenance["grid"]["n_r"] == 64


# --------------------------------------------------------- cancellation


def test_cancellation_zero_jet():
    assert rd.curvature_cancellation_check(ProblemParams(), FermiMetricJet.flat(7)) == 0.0


def test_cancellation_dimension_gate():
    with pytest.raises(ParameterError):
        rd.curvature_cancellation_check(ProblemParams(n=6), FermiMetricJet.flat(6))


@settings(max_examples=50, deadline=None)
@given(ric=st.fractions(-10, 10), Rii=st.fractions(-10, 10), pi2=st.fractions(0, 10), n=st.integers(7, 20))
def test_cancellation_exact_rationals(ric, Rii, pi2, n):
    assert rd.curvature_cancellation_exact(n, ric, Rii, pi2) == Fraction(0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.1, 3.0))
def test_cancellation_random_jets(seed, scale):
    jet = FermiMetricJet.random(7, np.random.default_rng(seed), scale)
    assert abs(rd.curvature_cancellation_check(ProblemParams(), jet)) < 1e-12


# ------------------------------------------------------------- G and max


def _coeffs(field_, B=1.0, phi=None):
    phi = phi if phi is not None else {q: -1.0 for q in field_.ids}
    return ReducedCoefficients(n=7, A=1.0, B=B, phi=phi)


def test_G_eval_examples():
    f = varying_gamma_field(shape=(4,), amplitude=0.0)
    c = _coeffs(f)
    assert rd.G_eval(c, f, 0.5, 0) == pytest.approx(0.25)
    with pytest.raises(ParameterError):
        rd.G_eval(c, f, 0.0, 0)
    lin = _coeffs(f, phi={q: 0.0 for q in f.ids})
    assert rd.G_eval(lin, f, 2.0, 1) == pytest.approx(2 * rd.G_eval(lin, f, 1.0, 1))


@settings(max_examples=40, deadline=None)
@given(B=st.floats(0.1, 5), gam=st.floats(0.1, 5), phi=st.floats(-5, -0.01))
def test_lambda_derivative_vanishes_at_lambda_star(B, gam, phi):
    lam = -B * gam / (2 * phi)
    assert abs(B * gam + 2 * lam * phi) < 1e-12 * max(1.0, B * gam)


def test_flat_field_degenerate():
    f = varying_gamma_field(shape=(6,), amplitude=0.0)
    rep = rd.find_critical(_coeffs(f), f)
    assert rep.lambda0 == pytest.approx(0.5)
    assert rep.classification == "degenerate" and not rep.stable
    assert rep.ties == list(f.ids) and rep.q0 == 0


def test_sinusoidal_maximiser():
    f = sinusoidal_pi_field(shape=(32,))
    phi = {q: -(1.0 + np.sin(c[0]) ** 2) for q, c in zip(f.ids, f.coords)}
    c = _coeffs(f, B=0.7, phi=phi)
    rep = rd.find_critical(c, f)
    assert np.sin(f.coords[f.index(rep.q0)][0]) == pytest.approx(0.0, abs=1e-12)
    assert rep.hessian[0, 0] == 2 * phi[rep.q0]
    assert rep.classification == "max" and rep.stable and rep.critical
    assert np.all(np.linalg.eigvalsh(rep.hessian) < 0)
    assert rd.stencil_check(c, f, rep)
    assert set(rep.ties) == {0, 16}


def test_skipped_points_and_all_positive():
    f = varying_gamma_field(shape=(4,), amplitude=0.0)
    rep = rd.find_critical(_coeffs(f, phi={0: 0.1, 1: -1.0, 2: -1.0, 3: -1.0}), f)
    assert rep.skipped == [0]
    with pytest.raises(ParameterError):
        rd.find_critical(_coeffs(f, phi={q: 0.5 for q in f.ids}), f)


@settings(max_examples=20, deadline=None)
@given(c=st.floats(0.1, 10.0), amp=st.floats(0.05, 0.9))
def test_argmax_invariant_under_gamma_scaling(c, amp):
    f = varying_gamma_field(shape=(16,), amplitude=amp)
    co = _coeffs(f, B=0.6, phi={q: -0.3 for q in f.ids})
    r1 = rd.find_critical(co, f)
    r2 = rd.find_critical(co, f.with_gamma(c * f.gamma))
    assert r1.q0 == r2.q0
    assert r2.lambda0 == pytest.approx(c * r1.lambda0, rel=1e-12)
    assert r2.G_value == pytest.approx(c * c * r1.G_value, rel=1e-12)


def test_critical_table_csv():
    f = sinusoidal_pi_field(shape=(4,))
    rep = rd.find_critical(_coeffs(f, phi={q: -1.0 - q for q in f.ids}), f)
    lines = rd.critical_table_csv(rep).splitlines()
    assert lines[0] == "id,gamma,pi_norm_sq,phi,lambda_star,G_star"
    assert len(lines) == 5


# -------------------------------------------------------------- conjecture


def test_conjecture_scan_small(coarse):
    scan = rd.conjecture_scan(coarse, samples=4, seed=3)
    assert scan.max_rel_deviation < 1e-6
    assert all(r["phi"] < 0 for r in scan.rows)
    again = rd.conjecture_scan(coarse, samples=4, seed=3, threads=2)
    assert again.to_csv() == scan.to_csv()
    assert scan.to_csv().splitlines()[0] == "sample,h_norm_sq,phi,ratio"


def test_conjecture_rotation_and_scaling(coarse, rng):
    h = TraceFreeForm.random(6, rng)
    Q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
    scan = rd.conjecture_scan(coarse, 3, forms=[h, h.rotated(Q), h.scaled(3.0)])
    r = [row["ratio"] for row in scan.rows]
    assert r[1] == pytest.approx(r[0], rel=1e-10)
    assert r[2] == pytest.approx(r[0], rel=1e-8)


def test_conjecture_errors(coarse):
    with pytest.raises(ParameterError):
        rd.conjecture_scan(coarse, samples=1)
    p8 = ProblemParams(n=8, n_r=32, n_t=32)
    good = TraceFreeForm(np.diag([1.0, -1.0, 0, 0, 0, 0, 0]))
    bad = TraceFreeForm(np.diag([1.0, -1.0, 0, 0, 0, 0]))
    with pytest.raises(rd.ScanError) as exc:
        rd.conjecture_scan(p8, 2, forms=[good, bad])
    assert exc.value.index == 1
    with pytest.raises(rd.ScanError) as exc:
        rd.conjecture_scan(p8, 2, forms=[TraceFreeForm.zeros(7), good])
    assert exc.value.index == 0
