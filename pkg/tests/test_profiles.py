"""Potential profiles: construction, scaling, flipping, support checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curvewell.errors import InputError
from curvewell.profiles import PotentialProfile


def test_default_profile_is_zero():
    p = PotentialProfile()
    n = np.linspace(-1, 1, 7)
    np.testing.assert_array_equal(p.V(n), np.zeros(7))
    np.testing.assert_array_equal(p.U(np.zeros(7), n), np.zeros(7))


def test_from_expressions():
    p = PotentialProfile.from_expressions("n*n - 1", "s*0 + n")
    assert p.V(0.5) == pytest.approx(-0.75)
    assert p.U(0.0, 0.25) == pytest.approx(0.25)


def test_from_samples_interpolates_and_truncates():
    n = np.linspace(-1, 1, 101)
    p = PotentialProfile.from_samples(n, np.cos(np.pi * n / 2))
    assert p.V(0.0) == pytest.approx(1.0, abs=1e-8)
    assert p.V(0.5) == pytest.approx(np.cos(np.pi / 4), abs=1e-6)
    np.testing.assert_array_equal(p.V(np.array([-1.5, 1.5])), [0.0, 0.0])


def test_from_samples_validation():
    with pytest.raises(InputError):
        PotentialProfile.from_samples(np.linspace(-0.5, 1, 10), np.zeros(10))
    with pytest.raises(InputError):
        PotentialProfile.from_samples(np.linspace(-1, 1, 10), np.zeros(9))
    with pytest.raises(InputError):
        PotentialProfile.from_samples(np.linspace(-1, 1, 10),
                                      np.full(10, np.nan))


def test_nonfinite_expression_rejected():
    with np.errstate(divide="ignore"), pytest.raises(InputError):
        PotentialProfile.from_expressions("1/(n - n)")


def test_scaled():
    p = PotentialProfile.from_expressions("n")
    q = p.scaled(3.0)
    assert q.V(0.5) == pytest.approx(1.5)


def test_flipped_reverses_normal():
    p = PotentialProfile.from_expressions("n", "s + n")
    q = p.flipped()
    assert q.V(0.5) == pytest.approx(-0.5)
    assert q.U(1.0, 0.5) == pytest.approx(0.5)
    # double flip is the identity
    r = q.flipped()
    n = np.linspace(-1, 1, 9)
    np.testing.assert_allclose(r.V(n), p.V(n), atol=1e-14)


def test_support_defect_and_warning():
    smooth = PotentialProfile.from_expressions("(1 - n*n)**2")
    assert smooth.support_defect() == pytest.approx(0.0, abs=1e-14)
    wall = PotentialProfile.from_expressions("0*n - 1")
    assert wall.support_defect() == pytest.approx(1.0)
    with pytest.warns(UserWarning):
        wall.warn_if_not_compact()


@settings(max_examples=25, deadline=None)
@given(alpha=st.floats(-5, 5), x=st.floats(-1, 1))
def test_scaling_is_linear(alpha, x):
    p = PotentialProfile.from_expressions("cos(n)")
    assert p.scaled(alpha).V(x) == pytest.approx(alpha * np.cos(x), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(x=st.floats(-1, 1))
def test_flip_is_involution_pointwise(x):
    p = PotentialProfile.from_expressions("n**3 + 0.5*n")
    assert p.flipped().flipped().V(x) == pytest.approx(p.V(x), abs=1e-12)
