import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from boundary_bubble.core_math import ParameterError
from boundary_bubble.forms import TraceFreeForm


def test_rejects_trace_and_asymmetry():
    with pytest.raises(ParameterError):
        TraceFreeForm(np.eye(3))
    a = np.zeros((3, 3))
    a[0, 1] = 1.0
    with pytest.raises(ParameterError):
        TraceFreeForm(a)
    with pytest.raises(ParameterError):
        TraceFreeForm(np.zeros((2, 3)))


def test_entries_read_only_and_symmetric():
    h = TraceFreeForm.project(np.arange(16.0).reshape(4, 4))
    assert np.array_equal(h.entries, h.entries.T)
    assert abs(np.trace(h.entries)) < 1e-12
    with pytest.raises(ValueError):
        h.entries[0, 0] = 1.0


def test_unit_of_zero_raises():
    with pytest.raises(ParameterError):
        TraceFreeForm.zeros(4).unit()


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), c=st.floats(-5, 5).filter(lambda x: abs(x) > 1e-3))
def test_norm_and_scaling(seed, c):
    rng = np.random.default_rng(seed)
    h = TraceFreeForm.random(6, rng)
    assert h.norm_sq == pytest.approx(np.sum(h.entries**2), rel=1e-14)
    assert h.scaled(c).norm_sq == pytest.approx(c * c * h.norm_sq, rel=1e-12)
    assert h.unit().norm == pytest.approx(1.0, rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_rotation_preserves_norm_and_quadratic(seed):
    rng = np.random.default_rng(seed)
    h = TraceFreeForm.random(6, rng)
    Q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
    g = h.rotated(Q)
    assert g.norm_sq == pytest.approx(h.norm_sq, rel=1e-12)
    z = rng.normal(size=6)
    assert g.quadratic(Q @ z) == pytest.approx(h.quadratic(z), rel=1e-10, abs=1e-12)


def test_equality_and_hash():
    a = TraceFreeForm(np.diag([1.0, -1.0]))
    b = TraceFreeForm([[1.0, 0.0], [0.0, -1.0]])
    assert a == b and hash(a) == hash(b)
    assert a.to_list() == [[1.0, 0.0], [0.0, -1.0]]
