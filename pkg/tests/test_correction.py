import json

import numpy as np
import pytest

from boundary_bubble import correction as co
from boundary_bubble.core_math import ParameterError, ProblemParams, bubble_hessian
from boundary_bubble.forms import TraceFreeForm


# -------------------------------------------------------------- grid


def test_graded_nodes():
    x = co.graded_nodes(60.0, 101, 4.0)
    assert x[0] == 0.0 and x[-1] == pytest.approx(60.0)
    assert np.all(np.diff(x) > 0)
    assert np.diff(x)[0] < np.diff(x)[-1]
    u = co.graded_nodes(10.0, 11, 0.0)
    assert np.allclose(u, np.linspace(0, 10, 11))


def test_grid_from_params(coarse):
    g = co.Grid2D.from_params(coarse)
    assert g.shape == (64, 64)
    assert g.r[0] == 0.0 and g.t[0] == 0.0
    assert g.metadata()["policy"] == "graded"


# ----------------------------------------------------------- forcing


def test_forcing_examples():
    assert co.forcing_profile(7, 0.0, 0.0) == 0.0
    assert co.forcing_profile(7, 0.0, 1.0) == pytest.approx(70 / 512, rel=1e-14)


def test_forcing_matches_hessian_contraction(rng, unit_form):
    """2 h_ij t d_ij U equals (z^T h z) f(|z|, t); Hessian by finite differences."""
    n = 7
    h = TraceFreeForm.random(6, rng)
    for _ in range(10):
        z, t = rng.normal(size=6), rng.uniform(0.1, 2)
        direct = co.full_forcing(n, h, z, t)
        red = h.quadratic(z) * co.forcing_profile(n, np.linalg.norm(z), t)
        assert direct == pytest.approx(red, rel=1e-10, abs=1e-14)
        H = bubble_hessian(n, z, t)[:6, :6]
        assert direct == pytest.approx(2 * t * np.sum(h.entries * H), rel=1e-10, abs=1e-14)


def test_forcing_parity():
    h = TraceFreeForm(np.diag([1.0, -1.0, 0, 0, 0, 0]))
    z = np.array([0.3, 0.7, 0.1, 0, 0, 0.2])
    zs = z[[1, 0, 2, 3, 4, 5]]
    f1, f2 = co.full_forcing(7, h, z, 0.5), co.full_forcing(7, h, zs, 0.5)
    assert f1 == pytest.approx(-f2, rel=1e-14)
    assert co.full_forcing(7, h, -z, 0.5) == pytest.approx(f1, rel=1e-14)


def test_reduce_forcing_requires_trace_free(coarse):
    with pytest.raises(ParameterError):
        co.reduce_forcing(coarse, np.eye(6))


# ------------------------------------------------------------- solve


def test_assembled_matrix_spd(coarse):
    A, b = co.assemble_system(7, co.Grid2D.from_params(coarse))
    d = (A - A.T).tocoo()
    assert np.max(np.abs(d.data), initial=0.0) < 1e-12
    assert np.all(A.diagonal() > 0)
    x = np.random.default_rng(0).normal(size=A.shape[0])
    assert x @ (A @ x) > 0


def test_zero_form_gives_zero_profile(coarse):
    prof = co.solve_reduced_bvp(coarse, TraceFreeForm.zeros(6))
    assert prof.is_zero and not np.any(prof.w)
    sc = co.correction_scalars(prof)
    assert (sc.delta_v_v, sc.dirichlet, sc.boundary_quad, sc.cross_term) == (0.0, 0.0, 0.0, 0.0)
    with pytest.raises(co.FitError):
        co.decay_fit(prof)


def test_linearity(coarse, unit_form, coarse_profile):
    p2 = co.solve_reduced_bvp(coarse, unit_form.scaled(2.0))
    assert np.allclose(p2.w, 2 * coarse_profile.w, rtol=1e-7, atol=1e-12 * np.abs(coarse_profile.w).max())


def test_profile_immutable_and_boundary(coarse_profile):
    with pytest.raises(ValueError):
        coarse_profile.w[0, 0] = 1.0
    assert np.all(np.isfinite(coarse_profile.w))
    assert np.all(coarse_profile.w[-1, :] == 0) and np.all(coarse_profile.w[:, -1] == 0)


def test_v_reconstruction(coarse_profile, unit_form):
    z, t = np.array([0.5, 0.2, 0.1, 0, 0, 0.3]), 0.4
    r = np.linalg.norm(z)
    assert coarse_profile.v(z, t) == pytest.approx(coarse_profile.w_at(r, t) * unit_form.quadratic(z))
    assert coarse_profile.w_at(100.0, 1.0) == 0.0


def test_solver_failure_reported(coarse, unit_form):
    with pytest.raises(co.SolverError) as exc:
        co.solve_reduced_bvp(coarse, unit_form, maxiter=3)
    assert exc.value.iterations == 3


# ------------------------------------------------------------ scalars


def test_scalar_identities_medium(medium_profile, coarse_profile):
    # the 1e-3 bound holds at 600 x 600 (acceptance); here check size and rate
    sc = co.correction_scalars(medium_profile)
    assert sc.delta_v_v < 0
    assert sc.ibp_residual < 5e-3
    assert sc.reduction_residual < 5e-3
    coarse_res = co.correction_scalars(coarse_profile).ibp_residual
    assert coarse_res / sc.ibp_residual > (150 / 64) ** 2 * 0.7


def test_scalars_quadratic_in_h(coarse, unit_form, coarse_profile):
    s1 = co.correction_scalars(coarse_profile)
    s3 = co.correction_scalars(co.solve_reduced_bvp(coarse, unit_form.scaled(3.0)))
    assert s3.delta_v_v == pytest.approx(9 * s1.delta_v_v, rel=1e-8)
    assert s3.dirichlet == pytest.approx(9 * s1.dirichlet, rel=1e-8)


def test_scalars_rotation_invariant(coarse, rng):
    h = TraceFreeForm.random(6, rng)
    Q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
    a = co.correction_scalars(co.solve_reduced_bvp(coarse, h))
    b = co.correction_scalars(co.solve_reduced_bvp(coarse, h.rotated(Q)))
    for k in ("delta_v_v", "dirichlet", "boundary_quad", "cross_term"):
        assert getattr(b, k) == pytest.approx(getattr(a, k), rel=1e-10)


def test_orthogonality(coarse_profile):
    checks = co.orthogonality_checks(coarse_profile)
    assert set(checks) >= {"boundary_U_pow", "L2_j_n", "L2_j_1"}
    assert max(abs(v) for v in checks.values()) < 1e-12


def test_refinement_positive_order(coarse, unit_form):
    res = co.refinement_study(coarse, unit_form, sizes=(48, 96, 192))
    assert res["order"] > 1.0 and res["monotone"]


# -------------------------------------------------------------- decay


def test_decay_fit_scaling(medium_profile):
    f1 = co.decay_fit(medium_profile)
    f5 = co.decay_fit(medium_profile.scaled(5.0))
    assert f5.exponent == pytest.approx(f1.exponent, abs=1e-10)
    assert f5.C == pytest.approx(5 * f1.C, rel=1e-10)


def test_decay_fit_window_validation(medium_profile):
    with pytest.raises(co.FitError):
        co.decay_fit(medium_profile, window=(20.0, 40.0))
    with pytest.raises(co.FitError):
        co.decay_fit(medium_profile, samples=2)


def test_truncation_check_small_domain(unit_form):
    p = ProblemParams(r_max=12.0, t_max=12.0, n_r=64, n_t=64)
    prof = co.solve_reduced_bvp(p, unit_form)
    with pytest.raises((co.TruncationError, co.FitError)):
        co.check_truncation(prof)


# -------------------------------------------------------------- export


def test_exports(tmp_path, coarse_profile):
    path = tmp_path / "w.csv"
    co.profile_to_csv(coarse_profile, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "r,t,w"
    assert len(lines) == 1 + 64 * 64
    r, t, w = map(float, lines[2].split(","))
    g = coarse_profile.grid
    assert (r, t) == (g.r[0], g.t[1]) and w == coarse_profile.w[0, 1]
    text = co.scalars_to_json(co.correction_scalars(coarse_profile))
    d = json.loads(text)
    assert {"delta_v_v", "dirichlet", "boundary_quad", "cross_term", "n", "h_norm_sq", "grid"} <= set(d)
    assert text == co.scalars_to_json(co.correction_scalars(coarse_profile))
