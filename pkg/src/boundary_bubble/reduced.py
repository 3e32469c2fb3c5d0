"""The reduced functional G(lambda, q) = lambda B gamma(q) + lambda^2 phi(q).

phi(q) = delta_v_v / 2 - c(n) |pi(q)|^2 with
c(n) = (n-6)(n-2) omega I_{n-1}^n / (4 (n-1)^2 (n-4)).
"""
from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .core_math import (
    ParameterError,
    ProblemParams,
    ReducedCoefficients,
    constants_AB,
    integral_I,
    omega,
    phi_curvature_constant,
)
from .correction import (
    CorrectionScalars,
    ReducedProfile,
    correction_scalars,
    solve_reduced_bvp,
)
from .forms import TraceFreeForm
from .geometry import BoundaryField, FermiMetricJet, GeometryError, scalar_curvature_check

log = logging.getLogger(__name__)


# -------------------------------------------------------------------- phi


def phi_from_scalars(n: int, delta_v_v: float, pi_norm_sq: float) -> float:
    return 0.5 * delta_v_v - phi_curvature_constant(n) * pi_norm_sq


def phi_of_q(p: ProblemParams, jet: FermiMetricJet, prof: ReducedProfile,
             scalars: Optional[CorrectionScalars] = None) -> float:
    """phi at a boundary point from a profile solved for the jet's form."""
    p.require_energy_dimension()
    if prof.n != jet.n or p.n != jet.n:
        raise ParameterError("dimension mismatch between parameters, jet and profile")
    a, b = prof.h_ref.entries, jet.h.entries
    if not np.allclose(a, b, rtol=1e-12, atol=1e-14 * max(1.0, jet.h.norm)):
        raise ParameterError("profile was solved for a different second fundamental form")
    sc = scalars if scalars is not None else correction_scalars(prof)
    return phi_from_scalars(p.n, sc.delta_v_v, jet.pi_norm_sq)


def unit_phi(p: ProblemParams, unit_profile: Optional[ReducedProfile] = None) -> tuple:
    """phi for |h| = 1 together with the unit profile it came from.

    phi depends on h only through |h|^2, so every point of a field can be
    served by rescaling this single value.
    """
    p.require_energy_dimension()
    if unit_profile is None:
        h = np.zeros((p.n - 1, p.n - 1))
        h[0, 0], h[1, 1] = 1.0 / np.sqrt(2.0), -1.0 / np.sqrt(2.0)
        unit_profile = solve_reduced_bvp(p, TraceFreeForm(h))
    if abs(unit_profile.h_ref.norm_sq - 1.0) > 1e-12:
        unit_profile = unit_profile.for_form(unit_profile.h_ref.unit())
    sc = correction_scalars(unit_profile)
    return phi_from_scalars(p.n, sc.delta_v_v, 1.0), unit_profile, sc


def field_coefficients(p: ProblemParams, field_: BoundaryField,
                       unit_profile: Optional[ReducedProfile] = None) -> ReducedCoefficients:
    """A, B and phi(q) for every point of a field (one profile solve)."""
    if field_.n != p.n:
        raise ParameterError("field and parameters disagree on n")
    phi1, prof, sc = unit_phi(p, unit_profile)
    coeffs = constants_AB(p)
    coeffs.phi = {q: phi1 * j.pi_norm_sq for q, j in zip(field_.ids, field_.jets)}
    coeffs.provenance = {
        "grid": prof.grid.metadata(),
        "solver_iterations": prof.info.iterations,
        "solver_residual": prof.info.residual,
        "phi_unit": phi1,
        "ibp_residual": sc.ibp_residual,
    }
    return coeffs


# ------------------------------------------------------- curvature algebra


def _cancellation_terms(n, a, ric, Rii, pi2):
    c1 = (n - 2) / ((n - 1) * (n - 4))
    c2 = (n - 2) ** 2 / (4 * (n - 1) ** 2 * (n - 4))
    c3 = (n - 6) * (n - 2) / (4 * (n - 1) ** 2 * (n - 4))
    bracket = 2 * ric + 2 * (n - 4) * pi2 / (n - 2) + Rii
    return a * c1 - c2 * bracket + c3 * pi2


def curvature_cancellation_check(p, jet: FermiMetricJet) -> float:
    """Residual of the collapse of the curvature terms onto -c(n)|pi|^2.

    The delta^2 energy contains a(q)(n-2)/((n-1)(n-4)) from the potential,
    minus (n-2)^2/(4(n-1)^2(n-4)) [2 ric + 2(n-4)/(n-2)|pi|^2 + Rbar_ii]
    from the gradient and boundary terms.  With a given by the scalar
    curvature this should equal -(n-6)(n-2)/(4(n-1)^2(n-4)) |pi|^2; the
    returned residual (times omega I_{n-1}^n) is zero for a consistent jet.
    """
    n = p.n if isinstance(p, ProblemParams) else int(p)
    if n < 7:
        raise ParameterError(f"the cancellation check needs n >= 7, got n={n}")
    base = omega(n) * integral_I(n - 1, n)
    r = _cancellation_terms(float(n), jet.a, jet.ric, float(np.trace(jet.Rbar_ricci)), jet.pi_norm_sq)
    return float(r * base)


def curvature_cancellation_exact(n: int, ric: Fraction, Rii: Fraction, pi2: Fraction) -> Fraction:
    """The same residual in exact rational arithmetic (without the omega I factor)."""
    n = Fraction(n)
    a = (n - 2) / (4 * (n - 1)) * (2 * ric + Rii + pi2)
    return _cancellation_terms(n, a, ric, Rii, pi2)


# ------------------------------------------------------ reduced functional


def G_eval(coeffs: ReducedCoefficients, field_: BoundaryField, lam: float, q) -> float:
    """G(lambda, q) = lambda B gamma(q) + lambda^2 phi(q)."""
    if not lam > 0:
        raise ParameterError("lambda must be positive")
    k = field_.index(q)
    return lam * coeffs.B * float(field_.gamma[k]) + lam * lam * coeffs.phi[field_.ids[k]]


@dataclass
class CriticalPointReport:
    lambda0: float
    q0: int
    G_value: float
    gradient: list
    hessian: np.ndarray
    classification: str
    stable: bool
    ties: list
    table: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    heuristic_argmax: Optional[int] = None
    critical: bool = True

    def to_dict(self) -> dict:
        return {
            "lambda0": self.lambda0,
            "q0": self.q0,
            "G_value": self.G_value,
            "gradient": list(self.gradient),
            "hessian": np.asarray(self.hessian).tolist(),
            "classification": self.classification,
            "stable": self.stable,
            "critical": self.critical,
            "ties": list(self.ties),
            "skipped": list(self.skipped),
            "heuristic_argmax": self.heuristic_argmax,
            "table": self.table,
        }


def _classify(H, tol):
    ev = np.linalg.eigvalsh(0.5 * (H + H.T))
    scale = max(1.0, float(np.max(np.abs(ev))))
    if np.any(np.abs(ev) <= tol * scale):
        return "degenerate", False
    if np.all(ev < 0):
        return "max", True
    return "saddle", True


def find_critical(coeffs: ReducedCoefficients, field_: BoundaryField, tie_rtol: float = 1e-12,
                  degenerate_tol: float = 1e-9, grad_tol: float = 1e-8) -> CriticalPointReport:
    """Maximise G over lambda > 0 fibrewise, then over the field points.

    For phi(q) < 0 the fibre maximiser is lambda* = -B gamma / (2 phi) with
    value G* = -B^2 gamma^2 / (4 phi).  The Hessian has lambda-block 2 phi(q0);
    q-derivatives are centred differences on the field grid.
    """
    B = coeffs.B
    gam = field_.gamma
    phi = np.array([coeffs.phi[q] for q in field_.ids])
    table, skipped = [], []
    Gs = np.full(len(field_), -np.inf)
    for k, q in enumerate(field_.ids):
        row = {"id": q, "gamma": float(gam[k]), "pi_norm_sq": float(field_.jets[k].pi_norm_sq), "phi": float(phi[k])}
        if phi[k] >= 0:
            skipped.append(q)
            row.update(lambda_star=None, G_star=None)
        else:
            lam = -B * gam[k] / (2.0 * phi[k])
            Gs[k] = -(B * gam[k]) ** 2 / (4.0 * phi[k])
            row.update(lambda_star=float(lam), G_star=float(Gs[k]))
        table.append(row)
    if not np.any(np.isfinite(Gs)):
        raise ParameterError("phi >= 0 at every point; no interior maximum in lambda")
    gmax = float(np.max(Gs))
    ties = [q for k, q in enumerate(field_.ids) if np.isfinite(Gs[k]) and Gs[k] >= gmax - tie_rtol * abs(gmax)]
    q0 = min(ties)
    k0 = field_.index(q0)
    lam0 = -B * gam[k0] / (2.0 * phi[k0])
    G0 = lam0 * B * gam[k0] + lam0 * lam0 * phi[k0]

    def G_at(k, lam):
        return lam * B * gam[k] + lam * lam * phi[k]

    dim_q = len(field_.grid_shape)
    grad = [B * gam[k0] + 2.0 * lam0 * phi[k0]]
    H = np.zeros((1 + dim_q, 1 + dim_q))
    H[0, 0] = 2.0 * phi[k0]
    for ax in range(dim_q):
        km, kp = field_.neighbours(k0, ax)
        hq = field_.axis_spacing(ax)
        if km is None or kp is None:
            grad.append(float("nan"))
            continue
        grad.append((G_at(kp, lam0) - G_at(km, lam0)) / (2.0 * hq))
        H[1 + ax, 1 + ax] = (G_at(kp, lam0) - 2.0 * G0 + G_at(km, lam0)) / hq**2
        # d_q d_lambda G = B d_q gamma + 2 lambda d_q phi
        mixed = (B * (gam[kp] - gam[km]) + 2.0 * lam0 * (phi[kp] - phi[km])) / (2.0 * hq)
        H[0, 1 + ax] = H[1 + ax, 0] = mixed
    for a in range(dim_q):
        for b in range(a + 1, dim_q):
            H[1 + a, 1 + b] = H[1 + b, 1 + a] = _mixed_q(field_, k0, a, b, lambda k: G_at(k, lam0))
    cls, stable = _classify(H, degenerate_tol)
    gscale = max(1.0, abs(G0))
    critical = all(np.isfinite(g) and abs(g) <= grad_tol * gscale for g in grad)
    with np.errstate(divide="ignore"):
        heur = np.sqrt(field_.pi_norm_sq) / gam**2
    heur_arg = int(field_.ids[int(np.argmax(heur))])
    return CriticalPointReport(
        lambda0=float(lam0), q0=int(q0), G_value=float(G0), gradient=[float(g) for g in grad],
        hessian=H, classification=cls, stable=stable and cls == "max", ties=ties, table=table,
        skipped=skipped, heuristic_argmax=heur_arg, critical=critical,
    )


def _mixed_q(field_, k0, a, b, G):
    ha, hb = field_.axis_spacing(a), field_.axis_spacing(b)
    multi = np.array(np.unravel_index(k0, field_.grid_shape))
    vals = {}
    for sa in (-1, 1):
        for sb in (-1, 1):
            m = multi.copy()
            m[a] += sa
            m[b] += sb
            if not field_.periodic and (np.any(m < 0) or np.any(m >= field_.grid_shape)):
                return float("nan")
            m %= np.array(field_.grid_shape)
            vals[(sa, sb)] = G(int(np.ravel_multi_index(tuple(m), field_.grid_shape)))
    return (vals[(1, 1)] - vals[(1, -1)] - vals[(-1, 1)] + vals[(-1, -1)]) / (4.0 * ha * hb)


def stencil_check(coeffs: ReducedCoefficients, field_: BoundaryField, report: CriticalPointReport,
                  dlam: float = 1e-3) -> bool:
    """G at (lambda0, q0) dominates its lambda and q neighbours."""
    k0 = field_.index(report.q0)
    G0 = report.G_value
    lam0 = report.lambda0
    vals = [G_eval(coeffs, field_, lam0 * (1 - dlam), report.q0), G_eval(coeffs, field_, lam0 * (1 + dlam), report.q0)]
    for ax in range(len(field_.grid_shape)):
        for k in field_.neighbours(k0, ax):
            if k is not None:
                vals.append(G_eval(coeffs, field_, lam0, field_.ids[k]))
    return all(v <= G0 + 1e-14 * abs(G0) for v in vals)


def critical_table_csv(report: CriticalPointReport) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["id", "gamma", "pi_norm_sq", "phi", "lambda_star", "G_star"])
    for row in report.table:
        wr.writerow([row["id"], repr(row["gamma"]), repr(row["pi_norm_sq"]), repr(row["phi"]),
                     "" if row["lambda_star"] is None else repr(row["lambda_star"]),
                     "" if row["G_star"] is None else repr(row["G_star"])])
    return buf.getvalue()


# --------------------------------------------------------- conjecture scan


@dataclass
class ConjectureScan:
    rows: list
    mean_ratio: float
    max_rel_deviation: float
    n: int
    seed: int
    grid: dict

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "seed": self.seed,
            "samples": len(self.rows),
            "mean_ratio": self.mean_ratio,
            "max_rel_deviation": self.max_rel_deviation,
            "grid": self.grid,
            "rows": self.rows,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["sample", "h_norm_sq", "phi", "ratio"])
        for r in self.rows:
            wr.writerow([r["sample"], repr(r["h_norm_sq"]), repr(r["phi"]), repr(r["ratio"])])
        return buf.getvalue()


class ScanError(RuntimeError):
    def __init__(self, message, index):
        super().__init__(message)
        self.index = index


def random_forms(n: int, samples: int, seed: int):
    """Seeded random trace-free forms with random overall scale."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(samples):
        h = TraceFreeForm.random(n - 1, rng)
        out.append(h.scaled(float(rng.uniform(0.5, 2.0))))
    return out


def conjecture_scan(p: ProblemParams, samples: int, seed: int = 0, threads: int = 1,
                    forms=None) -> ConjectureScan:
    """phi / |h|^2 over seeded random forms, each with its own profile solve."""
    p.require_energy_dimension()
    if samples < 2:
        raise ParameterError("the conjecture scan needs at least two samples")
    forms = forms if forms is not None else random_forms(p.n, samples, seed)

    def one(k):
        h = forms[k]
        if h.norm_sq == 0.0:
            raise ScanError(f"sample {k} has a zero form; the ratio is undefined", k)
        try:
            prof = solve_reduced_bvp(p, h)
            sc = correction_scalars(prof)
        except Exception as exc:  # surface the failing sample
            raise ScanError(f"sample {k} failed: {exc}", k) from exc
        phi = phi_from_scalars(p.n, sc.delta_v_v, h.norm_sq)
        return {"sample": k, "h_norm_sq": h.norm_sq, "phi": phi, "ratio": phi / h.norm_sq}, prof.grid

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(one, range(len(forms))))
    else:
        results = [one(k) for k in range(len(forms))]
    rows = [r for r, _ in results]
    ratios = np.array([r["ratio"] for r in rows])
    mean = float(np.mean(ratios))
    dev = float(np.max(np.abs(ratios - mean)) / abs(mean))
    return ConjectureScan(rows, mean, dev, p.n, seed, results[0][1].metadata())


def report_json(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)
