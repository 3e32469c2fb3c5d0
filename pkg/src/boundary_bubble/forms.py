"""Symmetric trace-free matrices (second fundamental forms)."""
from __future__ import annotations

import numpy as np

from .core_math import ParameterError

TRACE_TOL = 1e-12


class TraceFreeForm:
    """A symmetric (d x d) matrix with zero trace.

    Symmetry is enforced by storage: only the upper triangle of the input is
    kept and mirrored.  The trace must vanish to ``TRACE_TOL`` relative to
    the Frobenius norm.
    """

    __slots__ = ("_entries", "_norm_sq")

    def __init__(self, entries, check_symmetric: bool = True):
        a = np.array(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ParameterError("a trace-free form must be a square matrix")
        if not np.all(np.isfinite(a)):
            raise ParameterError("form entries must be finite")
        scale = max(1.0, float(np.max(np.abs(a))))
        if check_symmetric and np.max(np.abs(a - a.T)) > 1e-12 * scale:
            raise ParameterError("form is not symmetric")
        upper = np.triu(a)
        a = upper + np.triu(a, 1).T
        nrm = float(np.sqrt(np.sum(a * a)))
        tr = float(np.trace(a))
        if abs(tr) > TRACE_TOL * max(nrm, 1.0) and not (nrm == 0.0):
            raise ParameterError(f"form is not trace-free (trace={tr:.3e})")
        a.setflags(write=False)
        self._entries = a
        self._norm_sq = float(np.sum(a * a))

    @classmethod
    def project(cls, a) -> "TraceFreeForm":
        """Symmetrise and remove the trace of an arbitrary square matrix."""
        a = np.asarray(a, dtype=float)
        s = 0.5 * (a + a.T)
        d = s.shape[0]
        s = s - np.trace(s) / d * np.eye(d)
        return cls(s)

    @classmethod
    def zeros(cls, dim: int) -> "TraceFreeForm":
        return cls(np.zeros((dim, dim)))

    @classmethod
    def random(cls, dim: int, rng: np.random.Generator, scale: float = 1.0) -> "TraceFreeForm":
        return cls.project(scale * rng.standard_normal((dim, dim)))

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def dim(self) -> int:
        return self._entries.shape[0]

    @property
    def norm_sq(self) -> float:
        return self._norm_sq

    @property
    def norm(self) -> float:
        return float(np.sqrt(self._norm_sq))

    def unit(self) -> "TraceFreeForm":
        if self._norm_sq == 0.0:
            raise ParameterError("the zero form has no direction")
        return TraceFreeForm(self._entries / self.norm)

    def scaled(self, c: float) -> "TraceFreeForm":
        return TraceFreeForm(c * self._entries)

    def rotated(self, Q) -> "TraceFreeForm":
        Q = np.asarray(Q, dtype=float)
        return TraceFreeForm(Q @ self._entries @ Q.T, check_symmetric=False)

    def quadratic(self, z) -> np.ndarray:
        """z^T h z for z of shape (..., d)."""
        z = np.asarray(z, dtype=float)
        return np.einsum("...i,ij,...j->...", z, self._entries, z)

    def to_list(self):
        return self._entries.tolist()

    def __eq__(self, other):
        return isinstance(other, TraceFreeForm) and np.array_equal(self._entries, other._entries)

    def __hash__(self):
        return hash(self._entries.tobytes())

    def __repr__(self):
        return f"TraceFreeForm(dim={self.dim}, norm_sq={self._norm_sq:.6g})"
