"""Boundary-point curvature data and Fermi-coordinate metric jets.

Index conventions: z indices run over 0..n-2 (tangential), the last
coordinate is the normal distance t.  The boundary Riemann tensor is stored
as Rbar[i, k, j, l], antisymmetric in (i, k) and in (j, l), with Ricci
contraction Rbar_ricci[i, j] = Rbar[i, k, j, k].  dh[i, j, k] is the
derivative of h_ij along z_k.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core_math import HalfSpacePoint, ParameterError
from .forms import TraceFreeForm

log = logging.getLogger(__name__)

SYM_TOL = 1e-12


class GeometryError(ValueError):
    """Curvature data violates a required symmetry or consistency relation."""


# --------------------------------------------------------- Riemann checks


def riemann_symmetry_residuals(T) -> dict:
    """Largest violations of the algebraic curvature identities."""
    T = np.asarray(T, dtype=float)
    if T.ndim != 4 or len(set(T.shape)) != 1:
        raise GeometryError("a curvature tensor must have shape (d, d, d, d)")
    return {
        "antisym_first": float(np.max(np.abs(T + T.transpose(1, 0, 2, 3)), initial=0.0)),
        "antisym_last": float(np.max(np.abs(T + T.transpose(0, 1, 3, 2)), initial=0.0)),
        "pair": float(np.max(np.abs(T - T.transpose(2, 3, 0, 1)), initial=0.0)),
        # T[i,k,j,l] + T[i,j,l,k] + T[i,l,k,j] = 0
        "bianchi": float(
            np.max(np.abs(T + T.transpose(0, 2, 3, 1) + T.transpose(0, 3, 1, 2)), initial=0.0)
        ),
    }


def validate_riemann(T, tol: float = SYM_TOL) -> np.ndarray:
    """Return T unchanged if it has curvature symmetries, else raise."""
    T = np.asarray(T, dtype=float)
    res = riemann_symmetry_residuals(T)
    scale = max(1.0, float(np.max(np.abs(T), initial=0.0)))
    bad = {k: v for k, v in res.items() if v > tol * scale}
    if bad:
        raise GeometryError(f"curvature tensor violates symmetries: {bad}")
    return T


def ricci_contraction(T) -> np.ndarray:
    return np.einsum("ikjk->ij", np.asarray(T, dtype=float))


def kulkarni_nomizu(A, B) -> np.ndarray:
    """(A o B)[i,k,j,l] = A_ij B_kl + A_kl B_ij - A_il B_kj - A_kj B_il."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    return (
        np.einsum("ij,kl->ikjl", A, B)
        + np.einsum("kl,ij->ikjl", A, B)
        - np.einsum("il,kj->ikjl", A, B)
        - np.einsum("kj,il->ikjl", A, B)
    )


def random_riemann(d: int, rng: np.random.Generator, terms: int = 3, scale: float = 1.0) -> np.ndarray:
    """A random algebraic curvature tensor as a sum of Kulkarni-Nomizu products."""
    T = np.zeros((d, d, d, d))
    for _ in range(terms):
        a = rng.standard_normal((d, d))
        b = rng.standard_normal((d, d))
        T += kulkarni_nomizu(0.5 * (a + a.T), 0.5 * (b + b.T))
    return scale * T / terms


def random_symmetric(d: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    a = rng.standard_normal((d, d))
    return scale * 0.5 * (a + a.T)


def random_dh(d: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Random dh[i, j, k] symmetric and trace-free in (i, j)."""
    a = rng.standard_normal((d, d, d))
    a = 0.5 * (a + a.transpose(1, 0, 2))
    tr = np.einsum("iik->k", a)
    a -= np.eye(d)[:, :, None] * tr[None, None, :] / d
    return scale * a


# ------------------------------------------------------------------- jets


def scalar_curvature(ric: float, Rbar_ricci, pi_norm_sq: float) -> float:
    """R_g = 2 ric + trace(Rbar_ricci) + |pi|^2 at a boundary point."""
    return 2.0 * ric + float(np.trace(np.asarray(Rbar_ricci))) + pi_norm_sq


def conformal_coefficient(n: int, R_g: float) -> float:
    """a = (n-2) / (4(n-1)) R_g."""
    return (n - 2) / (4.0 * (n - 1)) * R_g


@dataclass(frozen=True, eq=False)
class FermiMetricJet:
    """Curvature data at a boundary point, truncated at quadratic order."""

    n: int
    h: TraceFreeForm
    dh: np.ndarray
    Rbar: np.ndarray
    Rn: np.ndarray
    ric: float
    Rbar_ricci: np.ndarray
    pi_norm_sq: float
    a: float
    strict: bool = field(default=True, repr=False)

    def __post_init__(self):
        n = int(self.n)
        d = n - 1
        h = self.h if isinstance(self.h, TraceFreeForm) else TraceFreeForm(self.h)
        object.__setattr__(self, "h", h)
        if h.dim != d:
            raise GeometryError(f"h has size {h.dim}, expected {d}")
        dh = np.array(self.dh, dtype=float)
        Rbar = np.array(self.Rbar, dtype=float)
        Rn = np.array(self.Rn, dtype=float)
        Rr = np.array(self.Rbar_ricci, dtype=float)
        if dh.shape != (d, d, d) or Rbar.shape != (d,) * 4 or Rn.shape != (d, d) or Rr.shape != (d, d):
            raise GeometryError("jet arrays have inconsistent shapes")
        sc = lambda x: max(1.0, float(np.max(np.abs(x), initial=0.0)))  # noqa: E731
        if np.max(np.abs(dh - dh.transpose(1, 0, 2)), initial=0.0) > SYM_TOL * sc(dh):
            raise GeometryError("dh must be symmetric in its first two indices")
        if np.max(np.abs(np.einsum("iik->k", dh)), initial=0.0) > SYM_TOL * sc(dh) * d:
            raise GeometryError("dh must be trace-free in its first two indices")
        validate_riemann(Rbar)
        if np.max(np.abs(Rn - Rn.T), initial=0.0) > SYM_TOL * sc(Rn):
            raise GeometryError("R_injn must be symmetric")
        if np.max(np.abs(Rr - ricci_contraction(Rbar)), initial=0.0) > SYM_TOL * sc(Rbar) * d:
            raise GeometryError("Rbar_ricci is not the contraction of Rbar")
        if abs(self.ric - np.trace(Rn)) > SYM_TOL * sc(Rn) * d:
            raise GeometryError("ric must equal the trace of R_injn")
        if abs(self.pi_norm_sq - h.norm_sq) > SYM_TOL * max(1.0, h.norm_sq):
            raise GeometryError("pi_norm_sq must equal |h|^2")
        for name, arr in (("dh", dh), ("Rbar", Rbar), ("Rn", Rn), ("Rbar_ricci", Rr)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "ric", float(self.ric))
        object.__setattr__(self, "pi_norm_sq", float(self.pi_norm_sq))
        object.__setattr__(self, "a", float(self.a))
        if self.strict:
            ok, res = scalar_curvature_check(self)
            if not ok:
                raise GeometryError(f"a is inconsistent with the scalar curvature (residual {res:.3e})")

    @property
    def dim(self) -> int:
        return self.n - 1

    @property
    def K(self) -> np.ndarray:
        """t^2 coefficient of g^{ij}: R_injn + 3 h_ik h_kj."""
        hh = self.h.entries
        return self.Rn + 3.0 * hh @ hh

    @property
    def scalar_curvature(self) -> float:
        return scalar_curvature(self.ric, self.Rbar_ricci, self.pi_norm_sq)

    @classmethod
    def build(cls, n: int, h, dh=None, Rbar=None, Rn=None, a: Optional[float] = None, strict: bool = True):
        """Fill derived fields (ric, Rbar_ricci, |pi|^2 and, unless given, a)."""
        d = n - 1
        h = h if isinstance(h, TraceFreeForm) else TraceFreeForm(h)
        dh = np.zeros((d, d, d)) if dh is None else np.asarray(dh, dtype=float)
        Rbar = np.zeros((d,) * 4) if Rbar is None else np.asarray(Rbar, dtype=float)
        Rn = np.zeros((d, d)) if Rn is None else np.asarray(Rn, dtype=float)
        Rr = ricci_contraction(Rbar)
        ric = float(np.trace(Rn))
        if a is None:
            a = conformal_coefficient(n, scalar_curvature(ric, Rr, h.norm_sq))
        return cls(n, h, dh, Rbar, Rn, ric, Rr, h.norm_sq, a, strict)

    @classmethod
    def flat(cls, n: int) -> "FermiMetricJet":
        return cls.build(n, TraceFreeForm.zeros(n - 1))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator, scale: float = 1.0) -> "FermiMetricJet":
        """A random jet with consistent a."""
        d = n - 1
        return cls.build(
            n,
            TraceFreeForm.random(d, rng, scale),
            random_dh(d, rng, scale),
            random_riemann(d, rng, scale=scale),
            random_symmetric(d, rng, scale),
        )

    def with_h(self, h) -> "FermiMetricJet":
        """Same curvature data with a new second fundamental form (a recomputed)."""
        return FermiMetricJet.build(self.n, h, self.dh, self.Rbar, self.Rn)

    def to_dict(self) -> dict:
        return {
            "h": self.h.to_list(),
            "dh": self.dh.tolist(),
            "Rbar": self.Rbar.tolist(),
            "Rn": self.Rn.tolist(),
            "ric": self.ric,
            "Rbar_ricci": self.Rbar_ricci.tolist(),
            "pi_norm_sq": self.pi_norm_sq,
            "a": self.a,
        }

    @classmethod
    def from_dict(cls, n: int, data: dict, strict: bool = True) -> "FermiMetricJet":
        required = {"h", "dh", "Rbar", "Rn", "ric", "Rbar_ricci", "pi_norm_sq", "a"}
        missing = required - set(data)
        if missing:
            raise GeometryError(f"jet is missing keys {sorted(missing)}")
        extra = set(data) - required
        if extra:
            raise GeometryError(f"jet has unknown keys {sorted(extra)}")
        return cls(
            n,
            TraceFreeForm(data["h"]),
            data["dh"],
            data["Rbar"],
            data["Rn"],
            data["ric"],
            data["Rbar_ricci"],
            data["pi_norm_sq"],
            data["a"],
            strict,
        )


def scalar_curvature_check(jet: FermiMetricJet, tol: float = 1e-12):
    """Check a == (n-2)/(4(n-1)) (2 ric + tr Rbar_ricci + |pi|^2); return (ok, residual)."""
    expected = conformal_coefficient(jet.n, scalar_curvature(jet.ric, jet.Rbar_ricci, jet.pi_norm_sq))
    res = float(jet.a - expected)
    return abs(res) <= tol * max(1.0, abs(expected)), res


# ----------------------------------------------------------- metric jets


def metric_det_sqrt_array(jet: FermiMetricJet, z, t) -> np.ndarray:
    """|g|^{1/2} = 1 - (|pi|^2 + ric) t^2 / 2 - Rbar_ij z_i z_j / 6 (vectorised)."""
    z = np.asarray(z, dtype=float)
    t = np.asarray(t, dtype=float)
    zz = np.einsum("...i,ij,...j->...", z, jet.Rbar_ricci, z)
    return 1.0 - 0.5 * (jet.pi_norm_sq + jet.ric) * t * t - zz / 6.0


def metric_det_sqrt(jet: FermiMetricJet, y: HalfSpacePoint) -> float:
    return float(metric_det_sqrt_array(jet, y.z, y.t))


def inverse_metric_tangential(jet: FermiMetricJet, z, t) -> np.ndarray:
    """g^{ij}(z, t) of shape (..., n-1, n-1)."""
    z = np.asarray(z, dtype=float)
    t = np.asarray(t, dtype=float)[..., None, None]
    d = jet.dim
    G = np.eye(d) + 2.0 * t * jet.h.entries
    G = G + np.einsum("ikjl,...k,...l->...ij", jet.Rbar, z, z) / 3.0
    G = G + 2.0 * t * np.einsum("ijk,...k->...ij", jet.dh, z)
    G = G + t * t * jet.K
    return G


def inverse_metric(jet: FermiMetricJet, y: HalfSpacePoint) -> np.ndarray:
    """Full n x n inverse metric; g^{an} = delta_an."""
    if y.z.shape != (jet.dim,):
        raise ParameterError(f"point has {y.z.shape[0]} tangential coordinates, expected {jet.dim}")
    n = jet.n
    G = np.eye(n)
    G[: n - 1, : n - 1] = inverse_metric_tangential(jet, y.z, y.t)
    return G


def det_sqrt_from_inverse_metric(jet: FermiMetricJet, y: HalfSpacePoint) -> float:
    """det(g^{ab})^{-1/2}; agrees with metric_det_sqrt up to cubic order."""
    return float(np.linalg.det(inverse_metric(jet, y)) ** -0.5)


def det_t_linear_coefficient(jet: FermiMetricJet) -> float:
    """Coefficient of t in det(g^{ab}(0, t))^{-1/2}, i.e. -tr(h)."""
    return -0.5 * float(np.trace(2.0 * jet.h.entries))


# --------------------------------------------------------- boundary field


@dataclass(frozen=True, eq=False)
class BoundaryField:
    """Sampled boundary data on an abstract parameter grid.

    ``grid_shape`` lists the grid extent along each parameter axis (points
    are ordered row-major by id); ``periodic`` marks periodic axes.
    """

    n: int
    ids: tuple
    coords: np.ndarray
    gamma: np.ndarray
    jets: tuple
    grid_shape: tuple = ()
    periodic: bool = True

    def __post_init__(self):
        ids = tuple(int(i) for i in self.ids)
        if len(set(ids)) != len(ids):
            raise GeometryError("point ids must be unique")
        order = np.argsort(ids, kind="stable")
        ids = tuple(ids[i] for i in order)
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        coords = coords[order]
        gamma = np.asarray(self.gamma, dtype=float)[order]
        jets = tuple(self.jets[i] for i in order)
        if not (len(ids) == len(gamma) == len(jets) == len(coords)):
            raise GeometryError("ids, coords, gamma and jets must have equal length")
        if len(ids) == 0:
            raise GeometryError("a boundary field needs at least one point")
        if np.any(~np.isfinite(gamma)) or np.any(gamma <= 0):
            raise GeometryError("gamma must be strictly positive everywhere")
        for j in jets:
            if j.n != self.n:
                raise GeometryError("all jets must share the field dimension")
        pis = np.array([j.pi_norm_sq for j in jets])
        if np.all(pis == 0):
            raise GeometryError("the trace-free second fundamental form vanishes at every point")
        if np.any(pis == 0):
            warnings.warn("some points are umbilic (|pi|^2 = 0)", stacklevel=2)
        shape = tuple(int(s) for s in self.grid_shape) or (len(ids),)
        if int(np.prod(shape)) != len(ids):
            raise GeometryError(f"grid shape {shape} does not match {len(ids)} points")
        gamma.setflags(write=False)
        coords.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "jets", jets)
        object.__setattr__(self, "grid_shape", shape)

    def __len__(self):
        return len(self.ids)

    def index(self, q) -> int:
        try:
            return self.ids.index(int(q))
        except ValueError:
            raise GeometryError(f"unknown boundary point id {q}") from None

    @property
    def pi_norm_sq(self) -> np.ndarray:
        return np.array([j.pi_norm_sq for j in self.jets])

    def neighbours(self, k: int, axis: int):
        """Indices of the previous and next grid points along an axis (None at an open edge)."""
        multi = list(np.unravel_index(k, self.grid_shape))
        out = []
        for step in (-1, 1):
            m = list(multi)
            m[axis] += step
            if 0 <= m[axis] < self.grid_shape[axis]:
                out.append(int(np.ravel_multi_index(m, self.grid_shape)))
            elif self.periodic:
                m[axis] %= self.grid_shape[axis]
                out.append(int(np.ravel_multi_index(m, self.grid_shape)))
            else:
                out.append(None)
        return tuple(out)

    def axis_spacing(self, axis: int) -> float:
        """Parameter spacing along an axis, inferred from the first two points."""
        if self.grid_shape[axis] < 2:
            return 1.0
        a = [0] * len(self.grid_shape)
        b = list(a)
        b[axis] = 1
        ia = int(np.ravel_multi_index(a, self.grid_shape))
        ib = int(np.ravel_multi_index(b, self.grid_shape))
        return float(np.linalg.norm(self.coords[ib] - self.coords[ia])) or 1.0

    def with_gamma(self, gamma) -> "BoundaryField":
        return BoundaryField(self.n, self.ids, self.coords, gamma, self.jets, self.grid_shape, self.periodic)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "grid": {"shape": list(self.grid_shape), "periodic": self.periodic},
            "points": [
                {"id": i, "coords": c.tolist(), "gamma": float(g), "jet": j.to_dict()}
                for i, c, g, j in zip(self.ids, self.coords, self.gamma, self.jets)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BoundaryField":
        allowed = {"n", "points", "grid"}
        extra = set(data) - allowed
        if extra:
            raise GeometryError(f"field has unknown keys {sorted(extra)}")
        if "n" not in data or "points" not in data:
            raise GeometryError("field needs keys 'n' and 'points'")
        n = int(data["n"])
        pts = data["points"]
        for p in pts:
            bad = set(p) - {"id", "coords", "gamma", "jet"}
            if bad:
                raise GeometryError(f"point has unknown keys {sorted(bad)}")
        grid = data.get("grid", {})
        return cls(
            n,
            [p["id"] for p in pts],
            [np.atleast_1d(p["coords"]) for p in pts],
            [p["gamma"] for p in pts],
            [FermiMetricJet.from_dict(n, p["jet"]) for p in pts],
            tuple(grid.get("shape", ())),
            bool(grid.get("periodic", True)),
        )


def load_field(path) -> BoundaryField:
    with open(path) as fh:
        return BoundaryField.from_dict(json.load(fh))


def save_field(field_: BoundaryField, path) -> None:
    with open(path, "w") as fh:
        json.dump(field_.to_dict(), fh, indent=1)
        fh.write("\n")


# ------------------------------------------------------------- generators


def _grid_coords(shape: Sequence[int]):
    axes = [2.0 * np.pi * np.arange(m) / m for m in shape]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([a.ravel() for a in mesh], axis=1)


def sinusoidal_pi_field(
    n: int = 7,
    shape=(32,),
    gamma: float = 1.0,
    base: float = 1.0,
    amplitude: float = 1.0,
    seed: int = 0,
    curvature_scale: float = 0.0,
) -> BoundaryField:
    """Constant gamma; |pi|^2 = base * (1 + amplitude * sum_k sin^2 theta_k)."""
    rng = np.random.default_rng(seed)
    d = n - 1
    direction = TraceFreeForm.random(d, rng).unit()
    template = FermiMetricJet.random(n, rng, curvature_scale) if curvature_scale > 0 else FermiMetricJet.flat(n)
    coords = _grid_coords(shape)
    jets = []
    for c in coords:
        pi2 = base * (1.0 + amplitude * float(np.sum(np.sin(c) ** 2)))
        jets.append(template.with_h(direction.scaled(np.sqrt(pi2))))
    ids = list(range(len(coords)))
    return BoundaryField(n, ids, coords, np.full(len(ids), gamma), jets, tuple(shape), True)


def varying_gamma_field(
    n: int = 7,
    shape=(32,),
    gamma0: float = 1.0,
    amplitude: float = 0.5,
    pi_norm_sq: float = 1.0,
    seed: int = 0,
) -> BoundaryField:
    """gamma = gamma0 * (1 + amplitude * prod_k cos theta_k); |pi|^2 constant."""
    if not 0 <= amplitude < 1:
        raise ParameterError("amplitude must lie in [0, 1) to keep gamma positive")
    rng = np.random.default_rng(seed)
    h = TraceFreeForm.random(n - 1, rng).unit().scaled(np.sqrt(pi_norm_sq))
    jet = FermiMetricJet.build(n, h)
    coords = _grid_coords(shape)
    gamma = gamma0 * (1.0 + amplitude * np.prod(np.cos(coords), axis=1))
    ids = list(range(len(coords)))
    return BoundaryField(n, ids, coords, gamma, [jet] * len(ids), tuple(shape), True)
