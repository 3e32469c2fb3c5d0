"""The correction term v_h on the half-space.

v solves

    -Delta v = 2 h_ij t d_ij U          in R^n_+,
    d_t v + n U^{2/(n-2)} v = 0         on t = 0,

for a trace-free symmetric h.  Because z^T h z is a harmonic quadratic,
v = w(r, t) * z^T h_hat z with h_hat = h / |h| and r = |z|, and the profile w
solves the two-dimensional problem

    -(w_rr + (n+2)/r w_r + w_tt) = |h| f(r, t),
    f(r, t) = 2 n (n-2) t ((1+t)^2 + r^2)^{-(n+2)/2},
    w_t + n/(1+r^2) w = 0 at t = 0,   w_r = 0 at r = 0.

The profile is discretised with a vertex-centred finite-volume scheme on a
graded tensor grid, weighted by r^{n+2}, giving a symmetric positive definite
system solved by Jacobi-preconditioned conjugate gradients.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import simpson
from scipy.interpolate import RectBivariateSpline

from .core_math import (
    ParameterError,
    ProblemParams,
    bubble_hessian,
    gauss_legendre_panels,
    bubble_radial,
    bubble,
    jacobi_fields,
    omega,
    sphere_rule,
)
from .forms import TraceFreeForm

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """The linear solver did not reach its tolerance."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class TruncationError(RuntimeError):
    """The outer truncation radius is too small for the requested tolerance."""


class FitError(ValueError):
    """A decay fit could not be carried out."""


# ------------------------------------------------------------------ grid


def graded_nodes(length: float, count: int, grading: float) -> np.ndarray:
    """Nodes L * expm1(beta xi) / expm1(beta) on xi in [0, 1]; uniform if beta = 0."""
    xi = np.linspace(0.0, 1.0, count)
    if grading > 0:
        x = length * np.expm1(grading * xi) / np.expm1(grading)
    else:
        x = length * xi
    x[0] = 0.0
    x[-1] = length
    return x


@dataclass(frozen=True, eq=False)
class Grid2D:
    r: np.ndarray
    t: np.ndarray
    policy: str = "graded"

    def __post_init__(self):
        for name in ("r", "t"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.ndim != 1 or len(a) < 3:
                raise ParameterError(f"{name}-nodes must be a 1D array with >= 3 entries")
            if a[0] != 0.0:
                raise ParameterError(f"{name}-nodes must start exactly at 0")
            if np.any(np.diff(a) <= 0):
                raise ParameterError(f"{name}-nodes must be strictly increasing")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if self.policy not in ("uniform", "graded"):
            raise ParameterError(f"unknown spacing policy {self.policy!r}")

    @classmethod
    def from_params(cls, p: ProblemParams) -> "Grid2D":
        policy = "graded" if p.grading > 0 else "uniform"
        return cls(
            graded_nodes(p.r_max, p.n_r, p.grading),
            graded_nodes(p.t_max, p.n_t, p.grading),
            policy,
        )

    @property
    def shape(self):
        return (len(self.r), len(self.t))

    @property
    def r_max(self) -> float:
        return float(self.r[-1])

    @property
    def t_max(self) -> float:
        return float(self.t[-1])

    def metadata(self) -> dict:
        return {
            "n_r": len(self.r),
            "n_t": len(self.t),
            "r_max": self.r_max,
            "t_max": self.t_max,
            "policy": self.policy,
            "h_min_r": float(self.r[1] - self.r[0]),
            "h_min_t": float(self.t[1] - self.t[0]),
        }


# --------------------------------------------------------------- forcing


def as_form(h, n: Optional[int] = None) -> TraceFreeForm:
    if not isinstance(h, TraceFreeForm):
        h = TraceFreeForm(h)
    if n is not None and h.dim != n - 1:
        raise ParameterError(f"form has size {h.dim}, expected {n - 1} for n={n}")
    return h


def forcing_profile(n: int, r, t) -> np.ndarray:
    """f(r, t) = 2n(n-2) t ((1+t)^2 + r^2)^{-(n+2)/2}."""
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    return 2.0 * n * (n - 2) * t * ((1.0 + t) ** 2 + r * r) ** (-(n + 2) / 2.0)


def reduce_forcing(p: ProblemParams, h):
    """Return f with 2 h_ij t d_ij U = (z^T h z) f(r, t).

    The identity uses tr h = 0 to cancel the isotropic part of d_ij U, so a
    form with nonzero trace is rejected.
    """
    as_form(h, p.n)
    n = p.n
    return lambda r, t: forcing_profile(n, r, t)


def full_forcing(n: int, h, z, t) -> np.ndarray:
    """2 h_ij t d_ij U evaluated directly from the bubble Hessian."""
    h = as_form(h, n)
    z = np.asarray(z, dtype=float)
    t = np.asarray(t, dtype=float)
    H = bubble_hessian(n, z, t)[..., : n - 1, : n - 1]
    return 2.0 * t * np.einsum("ij,...ij->...", h.entries, H)


# -------------------------------------------------------------- assembly


def _dual_cells(x):
    mid = 0.5 * (x[:-1] + x[1:])
    lo = np.concatenate([[x[0]], mid[:-1]])
    hi = mid
    return lo, hi


def assemble_system(n: int, grid: Grid2D):
    """Finite-volume matrix and unit-forcing load vector.

    Unknowns are w at nodes (i, j) with i < n_r - 1 and j < n_t - 1; the
    outer row and column carry the homogeneous Dirichlet condition.  Each
    equation is integrated over the dual cell with weight r^{n+2}, so the
    axis row needs no special stencil and the matrix is symmetric.
    """
    r, t = grid.r, grid.t
    Nr, Nt = len(r) - 1, len(t) - 1
    rlo, rhi = _dual_cells(r)
    Vr = (rhi[:Nr] ** (n + 3) - rlo[:Nr] ** (n + 3)) / (n + 3)
    kr = rhi ** (n + 2) / np.diff(r)
    d = kr[:Nr].copy()
    d[1:] += kr[: Nr - 1]
    Kr = sp.diags([d, -kr[: Nr - 1], -kr[: Nr - 1]], [0, 1, -1])

    tlo, thi = _dual_cells(t)
    Mt = thi[:Nt] - tlo[:Nt]
    kt = 1.0 / np.diff(t)
    d = kt[:Nt].copy()
    d[1:] += kt[: Nt - 1]
    Kt = sp.diags([d, -kt[: Nt - 1], -kt[: Nt - 1]], [0, 1, -1])

    A = sp.kron(Kr, sp.diags(Mt)) + sp.kron(sp.diags(Vr), Kt)
    robin = np.zeros((Nr, Nt))
    robin[:, 0] = n * Vr / (1.0 + r[:Nr] ** 2)
    A = (A - sp.diags(robin.ravel())).tocsr()

    R, T = np.meshgrid(r[:Nr], t[:Nt], indexing="ij")
    b = (Vr[:, None] * Mt[None, :] * forcing_profile(n, R, T)).ravel()
    return A, b


@dataclass(frozen=True)
class SolveInfo:
    iterations: int
    residual: float
    converged: bool


# ---------------------------------------------------------------- profile


@dataclass(frozen=True, eq=False)
class ReducedProfile:
    """w on the grid; v = w(|z|, t) z^T h_hat z with h_hat = h / |h|."""

    grid: Grid2D
    w: np.ndarray
    h_ref: TraceFreeForm
    n: int
    info: SolveInfo = field(default=SolveInfo(0, 0.0, True))

    def __post_init__(self):
        w = np.array(self.w, dtype=float)
        if w.shape != self.grid.shape:
            raise ParameterError(f"profile shape {w.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(w)):
            raise ParameterError("profile contains non-finite values")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "_spline_cache", {})

    @property
    def is_zero(self) -> bool:
        return self.h_ref.norm_sq == 0.0

    def spline(self, order: int = 5) -> RectBivariateSpline:
        cache = self._spline_cache
        if order not in cache:
            cache[order] = RectBivariateSpline(self.grid.r, self.grid.t, self.w, kx=order, ky=order, s=0)
        return cache[order]

    def w_at(self, r, t, dr: int = 0, dt: int = 0, order: int = 5) -> np.ndarray:
        """Interpolated w (or a derivative); zero outside the truncated domain."""
        r = np.asarray(r, dtype=float)
        t = np.asarray(t, dtype=float)
        r, t = np.broadcast_arrays(r, t)
        out = self.spline(order).ev(r, t, dx=dr, dy=dt)
        outside = (r > self.grid.r_max) | (t > self.grid.t_max)
        return np.where(outside, 0.0, out)

    def unit_form(self) -> np.ndarray:
        if self.is_zero:
            return np.zeros((self.n - 1, self.n - 1))
        return self.h_ref.entries / self.h_ref.norm

    def v(self, z, t) -> np.ndarray:
        """Reconstructed n-dimensional correction v(z, t)."""
        z = np.asarray(z, dtype=float)
        r = np.linalg.norm(z, axis=-1)
        q = np.einsum("...i,ij,...j->...", z, self.unit_form(), z)
        return self.w_at(r, t) * q

    def scaled(self, c: float) -> "ReducedProfile":
        return ReducedProfile(self.grid, c * self.w, self.h_ref.scaled(c), self.n, self.info)

    def for_form(self, h) -> "ReducedProfile":
        """Profile for another form, using that w depends on h only through |h|."""
        h = as_form(h, self.n)
        if self.is_zero:
            raise ParameterError("cannot rescale a zero profile")
        return ReducedProfile(self.grid, self.w * (h.norm / self.h_ref.norm), h, self.n, self.info)


def solve_reduced_bvp(
    p: ProblemParams, h, rtol: float = 1e-10, maxiter: Optional[int] = None, grid: Optional[Grid2D] = None
) -> ReducedProfile:
    """Solve the profile problem for the form h."""
    p.require_energy_dimension()
    h = as_form(h, p.n)
    grid = grid or Grid2D.from_params(p)
    if h.norm_sq == 0.0:
        return ReducedProfile(grid, np.zeros(grid.shape), h, p.n, SolveInfo(0, 0.0, True))
    A, b = assemble_system(p.n, grid)
    b = h.norm * b
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise SolverError("system matrix has a non-positive diagonal; grid too coarse near t=0")
    prec = sp.diags(1.0 / diag)
    count = [0]

    def cb(_):
        count[0] += 1

    maxiter = maxiter or 20 * A.shape[0]
    x, flag = spla.cg(A, b, rtol=rtol, atol=0.0, M=prec, maxiter=maxiter, callback=cb)
    res = float(np.linalg.norm(A @ x - b) / np.linalg.norm(b))
    if flag != 0 or not np.isfinite(res):
        raise SolverError(
            f"conjugate gradients stopped after {count[0]} iterations with relative residual {res:.3e}",
            iterations=count[0],
            residual=res,
        )
    log.info("profile solve: %d iterations, residual %.2e", count[0], res)
    Nr, Nt = grid.shape
    w = np.zeros(grid.shape)
    w[:-1, :-1] = x.reshape(Nr - 1, Nt - 1)
    return ReducedProfile(grid, w, h, p.n, SolveInfo(count[0], res, True))


# ---------------------------------------------------------------- scalars


def _moment(n: int) -> float:
    """Angular factor int_{S^{n-2}} (w^T h_hat w)^2 for |h_hat| = 1."""
    return 2.0 * omega(n) / ((n - 1) * (n + 1))


@dataclass(frozen=True)
class CorrectionScalars:
    delta_v_v: float
    dirichlet: float
    boundary_quad: float
    cross_term: float
    n: int
    h_norm_sq: float
    grid: dict

    @property
    def ibp_residual(self) -> float:
        """(delta_v_v + dirichlet - boundary_quad) / dirichlet."""
        if self.dirichlet == 0.0:
            return 0.0
        return (self.delta_v_v + self.dirichlet - self.boundary_quad) / self.dirichlet

    @property
    def reduction_residual(self) -> float:
        """(cross_term - boundary_quad + dirichlet) / dirichlet."""
        if self.dirichlet == 0.0:
            return 0.0
        return (self.cross_term - self.boundary_quad + self.dirichlet) / self.dirichlet

    def to_dict(self) -> dict:
        return {
            "delta_v_v": self.delta_v_v,
            "dirichlet": self.dirichlet,
            "boundary_quad": self.boundary_quad,
            "cross_term": self.cross_term,
            "n": self.n,
            "h_norm_sq": self.h_norm_sq,
            "ibp_residual": self.ibp_residual,
            "reduction_residual": self.reduction_residual,
            "grid": self.grid,
        }


def correction_scalars(prof: ReducedProfile) -> CorrectionScalars:
    """The four integrals of v in reduced (r, t) form.

    Derivatives of w come from a quintic spline through the nodal values;
    double integrals use composite Simpson rules on the grid.
    """
    n = prof.n
    g = prof.grid
    meta = g.metadata()
    if prof.is_zero:
        return CorrectionScalars(0.0, 0.0, 0.0, 0.0, n, 0.0, meta)
    r, t, w = g.r, g.t, prof.w
    R, T = np.meshgrid(r, t, indexing="ij")
    spl = prof.spline(5)
    wr = spl(r, t, dx=1)
    wt = spl(r, t, dy=1)
    M = _moment(n)
    hn = prof.h_ref.norm

    def dbl(F):
        return float(simpson(simpson(F, x=t, axis=1), x=r))

    f = forcing_profile(n, R, T)
    delta_v_v = -hn * M * dbl(f * w * R ** (n + 2))
    dirichlet = M * dbl(R ** (n + 2) * (wr**2 + wt**2))
    boundary_quad = n * M * float(simpson(w[:, 0] ** 2 * r ** (n + 2) / (1.0 + r**2), x=r))
    S = (1.0 + T) ** 2 + R**2
    cross = -2.0 * (n - 2) * hn * M * dbl(T * S ** (-n / 2.0) * (R ** (n + 1) * wr + (n + 1) * R**n * w))
    return CorrectionScalars(delta_v_v, dirichlet, boundary_quad, cross, n, prof.h_ref.norm_sq, meta)


def orthogonality_checks(prof: ReducedProfile, sphere_order: int = 4) -> dict:
    """Pairings of v against the bubble and the Jacobi fields.

    Each pairing is assembled as (angular moment) x (radial integral), with
    the angular moments taken by the product sphere rule, so the returned
    values are the discrete integrals themselves.
    """
    n = prof.n
    g = prof.grid
    nodes, wts = sphere_rule(n - 1, sphere_order)
    s = np.einsum("ki,ij,kj->k", nodes, prof.unit_form(), nodes)
    r, t, w = g.r, g.t, prof.w
    R, T = np.meshgrid(r, t, indexing="ij")

    def dbl(F):
        return float(simpson(simpson(F, x=t, axis=1), x=r))

    out = {}
    Ub = bubble_radial(n, r, 0.0)
    radial = float(simpson(Ub ** (n / (n - 2)) * w[:, 0] * r**2 * r ** (n - 2), x=r))
    out["boundary_U_pow"] = radial * float(np.sum(wts * s))
    # j_n is radial in z; j_i = -(n-2) z_i s^{-n/2} is odd in z
    e1 = np.zeros(n - 1)
    e1[0] = 1.0
    jn = jacobi_fields(n, n, (R[..., None] * e1), T)
    out["L2_j_n"] = dbl(w * R**2 * jn * R ** (n - 2)) * float(np.sum(wts * s))
    rad_i = dbl(w * R**2 * (-(n - 2)) * R * ((1 + T) ** 2 + R**2) ** (-n / 2.0) * R ** (n - 2))
    for i in range(n - 1):
        out[f"L2_j_{i + 1}"] = rad_i * float(np.sum(wts * s * nodes[:, i]))
    return out


# ------------------------------------------------------------ decay fit


@dataclass(frozen=True)
class DecayFit:
    exponent: float
    C: float
    plain_exponent: float
    ray_exponents: tuple
    window: tuple
    model: str
    far_amplitude: float = 0.0

    def to_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "C": self.C,
            "plain_exponent": self.plain_exponent,
            "ray_exponents": list(self.ray_exponents),
            "window": list(self.window),
            "model": self.model,
            "far_amplitude": self.far_amplitude,
        }


def _envelope(prof: ReducedProfile, r, t):
    """max over directions of |v| at (|z|, t) = (r, t)."""
    lam = float(np.max(np.abs(np.linalg.eigvalsh(prof.unit_form()))))
    return np.abs(prof.w_at(r, t, order=3)) * r * r * lam


def decay_fit(
    prof: ReducedProfile,
    window=(5.0, 15.0),
    n_rays: int = 8,
    samples: int = 40,
    model: str = "corrected",
) -> DecayFit:
    """Fit |v| ~ C rho^p along rays in the far field.

    model "corrected" fits log|v| = p log rho + c0_k + c1_k / rho with a
    shared exponent p and per-ray constants (the profile approaches its
    asymptotic power slowly, with a 1/rho correction).  model "plain" fits
    log|v| = p log rho + c0_k.  Both exponents are reported.  C is the
    smallest constant with |v| <= C (1 + rho)^{3-n} on the grid nodes inside
    half the truncation radius.
    """
    lo, hi = float(window[0]), float(window[1])
    if prof.is_zero or not np.any(prof.w):
        raise FitError("cannot fit the decay of a zero field")
    if not (0 < lo < hi):
        raise FitError("fit window must satisfy 0 < start < end")
    R_trunc = min(prof.grid.r_max, prof.grid.t_max)
    if R_trunc < 4.0 * lo or hi > R_trunc:
        raise FitError(f"truncation radius {R_trunc} must be >= 4x the window start {lo} and contain the window")
    if samples < 4 or n_rays < 1:
        raise FitError("insufficient far-field samples")
    angles = np.linspace(0.15, 0.5 * np.pi, n_rays)
    rho = np.geomspace(lo, hi, samples)
    logs, ys = np.log(rho), []
    for a in angles:
        vals = _envelope(prof, rho * np.sin(a), rho * np.cos(a))
        if np.any(vals <= 0):
            raise FitError("field vanishes inside the fit window")
        ys.append(np.log(vals))
    ys = np.array(ys)
    k = len(angles)
    far_log = float(np.max(ys[:, -1]))

    def joint(corrected: bool):
        cols = 2 if corrected else 1
        X = np.zeros((k * samples, 1 + cols * k))
        for j in range(k):
            sl = slice(j * samples, (j + 1) * samples)
            X[sl, 0] = logs
            X[sl, 1 + j] = 1.0
            if corrected:
                X[sl, 1 + k + j] = 1.0 / rho
        coef, *_ = np.linalg.lstsq(X, ys.ravel(), rcond=None)
        return float(coef[0])

    per_ray = []
    for j in range(k):
        X = np.stack([logs, np.ones_like(rho), 1.0 / rho], axis=1) if model == "corrected" else np.stack(
            [logs, np.ones_like(rho)], axis=1
        )
        per_ray.append(float(np.linalg.lstsq(X, ys[j], rcond=None)[0][0]))
    if model not in ("corrected", "plain"):
        raise FitError(f"unknown decay model {model!r}")
    p_corr = joint(True)
    p_plain = joint(False)
    p_used = p_corr if model == "corrected" else p_plain

    g = prof.grid
    ri = g.r[g.r <= 0.5 * g.r_max]
    ti = g.t[g.t <= 0.5 * g.t_max]
    Rg, Tg = np.meshgrid(ri, ti, indexing="ij")
    env = _envelope(prof, Rg, Tg)
    C = float(np.max(env * (1.0 + np.hypot(Rg, Tg)) ** (prof.n - 3)))
    far = math.exp(far_log - p_used * math.log(hi))
    return DecayFit(p_used, C, p_plain, tuple(per_ray), (lo, hi), model, far)


def truncation_tail(prof: ReducedProfile, fit: DecayFit, dirichlet: float) -> float:
    """Relative Dirichlet energy beyond the truncation radius R implied by the fit.

    The energy in the shell R/4 <= rho <= R/2 (clear of the Dirichlet edge)
    is measured from the profile and continued past R with the fitted power
    law: the density decays like rho^{k-1}, k = 2p + n - 2.
    """
    n = prof.n
    k = 2.0 * fit.exponent + n - 2
    if k >= 0:
        return math.inf
    if dirichlet <= 0:
        return 0.0
    R = min(prof.grid.r_max, prof.grid.t_max)
    rho, wr = gauss_legendre_panels(np.linspace(0.25 * R, 0.5 * R, 5), 16)
    th, wt = gauss_legendre_panels([0.0, 0.25 * np.pi, 0.5 * np.pi], 16)
    RHO, TH = np.meshgrid(rho, th, indexing="ij")
    r, t = RHO * np.sin(TH), RHO * np.cos(TH)
    dens = r ** (n + 2) * (prof.w_at(r, t, dr=1) ** 2 + prof.w_at(r, t, dt=1) ** 2) * RHO
    shell = _moment(n) * float(np.sum(wr[:, None] * wt[None, :] * dens))
    ratio = 1.0 / (4.0 ** (-k) - 2.0 ** (-k))
    return shell * ratio / dirichlet


def check_truncation(prof: ReducedProfile, tol: float = 1e-3) -> float:
    """Raise TruncationError when the fitted tail exceeds tol; return the estimate."""
    if prof.is_zero:
        return 0.0
    fit = decay_fit(prof)
    sc = correction_scalars(prof)
    tail = truncation_tail(prof, fit, sc.dirichlet)
    if tail > tol:
        raise TruncationError(f"estimated truncation tail {tail:.2e} exceeds {tol:.1e}; enlarge r_max/t_max")
    return tail


# ---------------------------------------------------- independent oracles


def pde_residual_oracle(
    prof: ReducedProfile,
    samples: int = 100,
    seed: int = 0,
    box=(4.0, 0.2, 4.0),
    eta: float = 3e-3,
) -> dict:
    """Residual of the reconstructed v against the full n-dimensional PDE.

    Points are drawn uniformly with |z| <= box[0] and t in [box[1], box[2]].
    The Laplacian of v uses fourth-order five-point differences along each of
    the n coordinate axes; the forcing is 2 h_ij t d_ij U from the bubble
    Hessian.  Returns the maximum residual divided by the maximum forcing
    over the sample.
    """
    n = prof.n
    d = n - 1
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((samples, d))
    g /= np.linalg.norm(g, axis=1)[:, None]
    g *= box[0] * rng.uniform(0.0, 1.0, (samples, 1)) ** (1.0 / d)
    tt = rng.uniform(box[1], box[2], samples)
    Y = np.concatenate([g, tt[:, None]], axis=1)

    def v(y):
        return prof.v(y[:, :d], y[:, d])

    c = (-1.0 / 12, 4.0 / 3, -2.5, 4.0 / 3, -1.0 / 12)
    lap = np.zeros(samples)
    for a in range(n):
        e = np.zeros(n)
        e[a] = eta
        lap += sum(ck * v(Y + (k - 2) * e) for k, ck in enumerate(c)) / eta**2
    F = full_forcing(n, prof.h_ref, Y[:, :d], Y[:, d])
    res = -lap - F
    scale = float(np.max(np.abs(F)))
    return {
        "max_abs_residual": float(np.max(np.abs(res))),
        "max_forcing": scale,
        "relative": float(np.max(np.abs(res)) / scale) if scale > 0 else 0.0,
        "samples": samples,
    }


def refinement_study(p: ProblemParams, h, sizes=(150, 300, 600)) -> dict:
    """delta_v_v on successively refined grids and the observed order."""
    if len(sizes) != 3:
        raise ParameterError("refinement study needs three grid sizes")
    vals = []
    for N in sizes:
        q = ProblemParams(p.n, p.quad_tol, p.r_max, p.t_max, N, N, p.grading)
        vals.append(correction_scalars(solve_reduced_bvp(q, h)).delta_v_v)
    d1, d2 = vals[0] - vals[1], vals[1] - vals[2]
    ratio = (sizes[1] - 1) / (sizes[0] - 1)
    order = math.log(abs(d1 / d2)) / math.log(ratio) if d2 != 0 else math.inf
    return {
        "sizes": list(sizes),
        "delta_v_v": vals,
        "differences": [d1, d2],
        "order": order,
        "monotone": abs(d2) < abs(d1),
    }


# ----------------------------------------------------------------- export


def profile_to_csv(prof: ReducedProfile, path) -> None:
    """Write r,t,w rows in row-major grid order (r outer, t inner)."""
    g = prof.grid
    R, T = np.meshgrid(g.r, g.t, indexing="ij")
    data = np.stack([R.ravel(), T.ravel(), prof.w.ravel()], axis=1)
    np.savetxt(path, data, delimiter=",", header="r,t,w", comments="", fmt="%.17g")


def scalars_to_json(sc: CorrectionScalars, path=None, extra: Optional[dict] = None) -> str:
    payload = sc.to_dict()
    if extra:
        payload.update(extra)
    text = json.dumps(payload, indent=2, sort_keys=True)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text
