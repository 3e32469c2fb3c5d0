"""Bubble calculus on the half-space.

The standard bubble on R^n_+ is

    U(z, t) = ((1 + t)^2 + |z|^2)^{-(n-2)/2},   z in R^{n-1}, t >= 0,

i.e. the Newtonian kernel centred at the mirror point (0, -1).  This module
evaluates U, its Jacobi fields, the one-dimensional integrals

    I_m^alpha = int_0^inf rho^alpha / (1 + rho^2)^m d rho,

sphere areas, angular moments and the energy constants A and B.  Everything
here is a pure function of its arguments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Union

import numpy as np
from scipy import integrate, special


class ParameterError(ValueError):
    """Raised when an input is outside the admissible range."""


@dataclass(frozen=True)
class ProblemParams:
    """Dimension, truncation radii, grid sizes and tolerances.

    ``grading`` controls the exponential stretching of the solver grid
    (0 means uniform).
    """

    n: int = 7
    quad_tol: float = 1e-10
    r_max: float = 60.0
    t_max: float = 60.0
    n_r: int = 600
    n_t: int = 600
    grading: float = 4.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise ParameterError(f"dimension n must be an integer >= 3, got {self.n}")
        if not (self.r_max > 0 and self.t_max > 0):
            raise ParameterError("truncation radii must be positive")
        if self.n_r < 16 or self.n_t < 16:
            raise ParameterError("grids need at least 16 points per axis")
        if not (0 < self.quad_tol <= 1e-4):
            raise ParameterError("quad_tol must lie in (0, 1e-4]")
        if self.grading < 0:
            raise ParameterError("grading must be non-negative")

    def require_energy_dimension(self) -> None:
        """Energy-level quantities are only meaningful for n >= 7."""
        if self.n < 7:
            raise ParameterError(f"this operation needs n >= 7, got n={self.n}")

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "quad_tol": self.quad_tol,
            "r_max": self.r_max,
            "t_max": self.t_max,
            "n_r": self.n_r,
            "n_t": self.n_t,
            "grading": self.grading,
        }


ParamsLike = Union[ProblemParams, int]


def dimension(p: ParamsLike) -> int:
    """Accept either a ProblemParams or a bare dimension."""
    if isinstance(p, ProblemParams):
        return p.n
    n = int(p)
    if n != p or n < 3:
        raise ParameterError(f"dimension n must be an integer >= 3, got {p}")
    return n


@dataclass(frozen=True)
class HalfSpacePoint:
    z: np.ndarray
    t: float

    def __post_init__(self):
        object.__setattr__(self, "z", np.atleast_1d(np.asarray(self.z, dtype=float)))
        if not self.t >= 0:
            raise ParameterError(f"half-space points need t >= 0, got t={self.t}")


@dataclass(frozen=True)
class BubbleValue:
    u: float
    grad: np.ndarray  # (dU/dz_1, ..., dU/dz_{n-1}, dU/dt)


@dataclass
class ReducedCoefficients:
    """Constants of the reduced functional and per-point phi values."""

    n: int
    A: float
    B: float
    phi: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.A > 0 and self.B > 0):
            raise ParameterError("A and B must be positive")


# ---------------------------------------------------------------- bubble


def _split(n: int, z, t):
    z = np.asarray(z, dtype=float)
    t = np.asarray(t, dtype=float)
    if z.shape[-1] != n - 1:
        raise ParameterError(f"z must have {n - 1} components, got {z.shape[-1]}")
    if np.any(t < 0):
        raise ParameterError("t must be non-negative")
    return z, t


def bubble(n: int, z, t) -> np.ndarray:
    """Vectorised U(z, t); z has shape (..., n-1)."""
    z, t = _split(n, z, t)
    s = (1.0 + t) ** 2 + np.sum(z * z, axis=-1)
    return s ** (-(n - 2) / 2.0)


def bubble_radial(n: int, r, t) -> np.ndarray:
    """U as a function of r = |z| and t."""
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    return ((1.0 + t) ** 2 + r * r) ** (-(n - 2) / 2.0)


def bubble_gradient(n: int, z, t) -> np.ndarray:
    """Gradient (dU/dz, dU/dt), shape (..., n)."""
    z, t = _split(n, z, t)
    Y = np.concatenate([z, (1.0 + t)[..., None] * np.ones(z.shape[:-1] + (1,))], axis=-1)
    s = np.sum(Y * Y, axis=-1)
    return -(n - 2) * Y * (s ** (-n / 2.0))[..., None]


def bubble_hessian(n: int, z, t) -> np.ndarray:
    """Hessian of U, shape (..., n, n)."""
    z, t = _split(n, z, t)
    Y = np.concatenate([z, (1.0 + t)[..., None] * np.ones(z.shape[:-1] + (1,))], axis=-1)
    s = np.sum(Y * Y, axis=-1)[..., None, None]
    eye = np.eye(n)
    return -(n - 2) * s ** (-n / 2.0) * (eye - n * Y[..., :, None] * Y[..., None, :] / s)


def bubble_eval(p: ParamsLike, y: HalfSpacePoint) -> BubbleValue:
    """Value and exact gradient of the bubble at one point."""
    n = dimension(p)
    if y.t < 0:
        raise ParameterError("t must be non-negative")
    u = float(bubble(n, y.z, y.t))
    g = bubble_gradient(n, y.z, y.t)
    return BubbleValue(u=u, grad=np.asarray(g, dtype=float))


def boundary_identity_residual(n: int, z) -> np.ndarray:
    """dU/dt + (n-2) U^{n/(n-2)} at t = 0 (zero for the exact bubble)."""
    z = np.asarray(z, dtype=float)
    t = np.zeros(z.shape[:-1])
    u = bubble(n, z, t)
    ut = bubble_gradient(n, z, t)[..., -1]
    return ut + (n - 2) * u ** (n / (n - 2))


# ---------------------------------------------------------- Jacobi fields


def _check_index(n: int, b: int) -> None:
    if not (1 <= int(b) <= n) or int(b) != b:
        raise ParameterError(f"Jacobi index must be in 1..{n}, got {b}")


def jacobi_fields(n: int, b: int, z, t) -> np.ndarray:
    """Vectorised j_b.

    j_i = dU/dz_i for i < n and j_n = (n-2)/2 U + y . grad U (dilation).
    """
    _check_index(n, b)
    z, t = _split(n, z, t)
    grad = bubble_gradient(n, z, t)
    if b < n:
        return grad[..., b - 1]
    y = np.concatenate([z, t[..., None] * np.ones(z.shape[:-1] + (1,))], axis=-1)
    return 0.5 * (n - 2) * bubble(n, z, t) + np.sum(y * grad, axis=-1)


def jacobi_field(p: ParamsLike, b: int, y: HalfSpacePoint) -> float:
    n = dimension(p)
    return float(jacobi_fields(n, b, y.z, y.t))


def jacobi_field_dt(n: int, b: int, z, t) -> np.ndarray:
    """Analytic t-derivative of j_b."""
    _check_index(n, b)
    z, t = _split(n, z, t)
    H = bubble_hessian(n, z, t)
    if b < n:
        return H[..., b - 1, n - 1]
    grad = bubble_gradient(n, z, t)
    y = np.concatenate([z, t[..., None] * np.ones(z.shape[:-1] + (1,))], axis=-1)
    return 0.5 * n * grad[..., -1] + np.sum(y * H[..., :, n - 1], axis=-1)


def linearized_robin_residual(n: int, b: int, z) -> np.ndarray:
    """d_t j_b + n U^{2/(n-2)} j_b on the boundary t = 0."""
    z = np.asarray(z, dtype=float)
    t = np.zeros(z.shape[:-1])
    u = bubble(n, z, t)
    return jacobi_field_dt(n, b, z, t) + n * u ** (2.0 / (n - 2)) * jacobi_fields(n, b, z, t)


# ------------------------------------------------------------- integrals


def _as_number(x) -> float:
    return float(Fraction(x)) if isinstance(x, (Fraction, int)) else float(x)


def integral_I(m, alpha) -> float:
    """I_m^alpha through the Beta function.

    Converges iff alpha > -1 and 2m - alpha - 1 > 0.
    """
    m = _as_number(m)
    alpha = _as_number(alpha)
    if not (alpha > -1.0 and 2.0 * m - alpha - 1.0 > 0.0):
        raise ParameterError(
            f"I_m^alpha diverges for m={m}, alpha={alpha}: need alpha > -1 and 2m - alpha - 1 > 0"
        )
    a = 0.5 * (alpha + 1.0)
    return 0.5 * math.exp(special.betaln(a, m - a))


def beta_integral_t(k: int, m: int) -> float:
    """int_0^inf t^k / (1 + t)^m dt = k! / ((m-1)(m-2)...(m-k-1))."""
    if int(k) != k or int(m) != m or k < 0:
        raise ParameterError("k and m must be integers with k >= 0")
    if not m > k + 1:
        raise ParameterError(f"integral diverges unless m > k + 1 (k={k}, m={m})")
    den = 1
    for j in range(1, k + 2):
        den *= m - j
    return float(Fraction(math.factorial(k), den))


def sphere_area(d: int) -> float:
    """Area of the unit sphere S^{d-1} in R^d."""
    if int(d) != d or d < 1:
        raise ParameterError(f"sphere_area needs an integer d >= 1, got {d}")
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def omega(n: int) -> float:
    """The normalisation omega_{n-1} = area(S^{n-2})."""
    return sphere_area(n - 1)


def quad_halfline(f: Callable[[float], float], tol: float = 1e-10) -> float:
    """Adaptive Gauss-Kronrod quadrature on [0, inf) after rho = tan(theta)."""

    def g(th):
        c = math.cos(th)
        if c == 0.0:
            return 0.0
        return f(math.tan(th)) / (c * c)

    val, _ = integrate.quad(g, 0.0, 0.5 * math.pi, epsabs=0.0, epsrel=tol, limit=400)
    return val


def quad_quarter_plane(F: Callable[[float, float], float], tol: float = 1e-10) -> float:
    """int_0^inf int_0^inf F(r, t) dt dr with tan substitutions in both axes."""

    def inner(a):
        ca = math.cos(a)
        if ca == 0.0:
            return 0.0
        r = math.tan(a)

        def g(b):
            cb = math.cos(b)
            if cb == 0.0:
                return 0.0
            return F(r, math.tan(b)) / (cb * cb)

        v, _ = integrate.quad(g, 0.0, 0.5 * math.pi, epsabs=0.0, epsrel=tol, limit=400)
        return v / (ca * ca)

    val, _ = integrate.quad(inner, 0.0, 0.5 * math.pi, epsabs=0.0, epsrel=tol, limit=400)
    return val


def halfspace_integrals(n: int) -> dict:
    """Closed forms of four half-space integrals of powers of s = (1+t)^2 + |z|^2."""
    if n < 5:
        raise ParameterError("the half-space integrals need n >= 5")
    w = omega(n)
    In = integral_I(n - 1, n)
    return {
        "s^-(n-1)": w * integral_I(n - 1, n - 2) / (n - 2),
        "|z|^2 t^2 s^-n": 2.0 * w * integral_I(n, n) / ((n - 2) * (n - 3) * (n - 4)),
        "t^2 s^-(n-1)": 2.0 * w * integral_I(n - 1, n - 2) / ((n - 2) * (n - 3) * (n - 4)),
        "|z|^2 s^-(n-1)": w * In / (n - 4),
    }


def halfspace_integrals_quadrature(n: int, tol: float = 1e-11) -> dict:
    """Adaptive-quadrature oracle for :func:`halfspace_integrals`."""
    w = omega(n)

    def radial(fn):
        return w * quad_quarter_plane(lambda r, t: fn(r, t) * r ** (n - 2), tol)

    s = lambda r, t: (1.0 + t) ** 2 + r * r  # noqa: E731
    return {
        "s^-(n-1)": radial(lambda r, t: s(r, t) ** (1 - n)),
        "|z|^2 t^2 s^-n": radial(lambda r, t: r * r * t * t * s(r, t) ** (-n)),
        "t^2 s^-(n-1)": radial(lambda r, t: t * t * s(r, t) ** (1 - n)),
        "|z|^2 s^-(n-1)": radial(lambda r, t: r * r * s(r, t) ** (1 - n)),
    }


def quartic_moment_constant(p: ParamsLike, h) -> float:
    """int over S^{n-2} of (w^T h w)^2 = 2 |h|^2 omega_{n-1} / ((n-1)(n+1))."""
    from .forms import TraceFreeForm

    n = dimension(p)
    if not isinstance(h, TraceFreeForm):
        h = TraceFreeForm(h)
    if h.dim != n - 1:
        raise ParameterError(f"form has size {h.dim}, expected {n - 1}")
    return 2.0 * h.norm_sq * omega(n) / ((n - 1) * (n + 1))


def constants_AB(p: ParamsLike) -> ReducedCoefficients:
    """A = (n-2)(n-3)/(2(n-1)^2) omega I and B = (n-2)/(n-1) omega I with I = I_{n-1}^n."""
    n = dimension(p)
    base = omega(n) * integral_I(n - 1, n)
    A = (n - 2) * (n - 3) / (2.0 * (n - 1) ** 2) * base
    B = (n - 2) / (n - 1) * base
    return ReducedCoefficients(n=n, A=A, B=B)


def phi_curvature_constant(n: int) -> float:
    """c(n) = (n-6)(n-2) omega I_{n-1}^n / (4 (n-1)^2 (n-4))."""
    return (n - 6) * (n - 2) * omega(n) * integral_I(n - 1, n) / (4.0 * (n - 1) ** 2 * (n - 4))


# ---------------------------------------------------------- quadratures


def gauss_legendre_panels(breaks, order: int = 16):
    """Composite Gauss-Legendre nodes and weights on consecutive intervals."""
    x, w = np.polynomial.legendre.leggauss(order)
    b = np.asarray(breaks, dtype=float)
    a, c = b[:-1], b[1:]
    half = 0.5 * (c - a)
    nodes = (0.5 * (a + c))[:, None] + half[:, None] * x[None, :]
    weights = half[:, None] * w[None, :]
    return nodes.ravel(), weights.ravel()


def sphere_rule(d: int, m: int):
    """Product quadrature on S^{d-1} in R^d.

    Gauss-Jacobi in the cosine of each polar angle and an equispaced rule in
    the azimuth.  Exact for polynomials of degree <= 2m - 1.  Returns nodes of
    shape (N, d) and weights summing to sphere_area(d).
    """
    if d < 1 or m < 1:
        raise ParameterError("sphere_rule needs d >= 1 and m >= 1")
    if d == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    phi = 2.0 * np.pi * np.arange(2 * m) / (2 * m)
    nodes = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    weights = np.full(2 * m, 2.0 * np.pi / (2 * m))
    # prepend one polar angle at a time; the new angle carries sin^{e}
    for dd in range(3, d + 1):
        e = dd - 2
        a = 0.5 * (e - 1)
        u, wu = special.roots_jacobi(m, a, a)
        sin_u = np.sqrt(1.0 - u * u)
        new = np.concatenate(
            [
                np.repeat(u, len(weights))[:, None],
                (sin_u[:, None, None] * nodes[None, :, :]).reshape(-1, dd - 1),
            ],
            axis=1,
        )
        weights = (wu[:, None] * weights[None, :]).ravel()
        nodes = new
    return nodes, weights
