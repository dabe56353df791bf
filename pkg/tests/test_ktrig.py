import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from virial_lab.errors import DomainError, PoleError
from virial_lab.ktrig import arcsin_k, arctan_k, continuity_defect, cos_k, identity_residuals, sin_k, tan_k

KAPPAS = [-2.0, -1.0, 0.0, 1.0, 2.0]
xs = st.floats(-3.0, 3.0, allow_nan=False)
kappas = st.floats(-2.0, 2.0, allow_nan=False)


# oracles: closed forms evaluated independently
def test_cos_k_values():
    assert cos_k(0.0, 3.7) == 1.0
    assert cos_k(1.0, math.pi / 2) == pytest.approx(0.0, abs=1e-15)
    assert cos_k(-1.0, 1.0) == pytest.approx(1.5430806348152437, rel=1e-15)


def test_sin_k_values():
    assert sin_k(0.0, 2.5) == 2.5
    assert sin_k(1.0, math.pi) == pytest.approx(0.0, abs=1e-15)
    assert sin_k(-1.0, 1.0) == pytest.approx(1.1752011936438014, rel=1e-15)
    assert sin_k(4.0, 0.3) == pytest.approx(math.sin(0.6) / 2, rel=1e-15)


def test_tan_k_values_and_pole():
    assert tan_k(0.0, 4.2) == 4.2
    assert tan_k(1.0, math.pi / 4) == pytest.approx(1.0, rel=1e-15)
    with pytest.raises(PoleError):
        tan_k(1.0, math.pi / 2)
    # a looser epsilon widens the excluded neighbourhood
    with pytest.raises(PoleError):
        tan_k(1.0, math.pi / 2 - 1e-9, eps=1e-6)
    assert tan_k(1.0, math.pi / 2 - 1e-3) == pytest.approx(math.tan(math.pi / 2 - 1e-3), rel=1e-12)


def test_arcsin_k_values():
    assert arcsin_k(0.0, 0.7) == 0.7
    assert arcsin_k(1.0, 1.0) == pytest.approx(math.pi / 2, rel=1e-15)
    assert arcsin_k(-1.0, 1.1752012) == pytest.approx(1.0, abs=1e-7)
    assert arcsin_k(-1.0, 1.1752011936438014) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(DomainError):
        arcsin_k(1.0, 1.5)
    with pytest.raises(DomainError):
        arcsin_k(4.0, 0.51)


def test_arcsin_k_principal_branch():
    q = np.linspace(-0.5, 0.5, 11)
    out = arcsin_k(4.0, q)
    assert np.all(np.abs(out) <= math.pi / 4 + 1e-15)


def test_arctan_k_branches():
    assert arctan_k(1.0, 1.0) == pytest.approx(math.pi / 4, rel=1e-15)
    assert arctan_k(-1.0, 0.5) == pytest.approx(math.atanh(0.5), rel=1e-15)
    with pytest.raises(DomainError):
        arctan_k(-1.0, 1.0)


def test_array_input_keeps_shape_and_scalar_returns_float():
    x = np.linspace(-1, 1, 7).reshape(7, 1)
    assert cos_k(-0.5, x).shape == (7, 1)
    assert isinstance(sin_k(0.5, 0.2), float)


def test_series_branch_matches_direct_formula():
    # just inside the series threshold the two branches must agree
    kappa, x = 1e-7, 3.0
    assert sin_k(kappa, x) == pytest.approx(math.sin(math.sqrt(kappa) * x) / math.sqrt(kappa), rel=1e-13)
    assert cos_k(-kappa, x) == pytest.approx(math.cosh(math.sqrt(kappa) * x), rel=1e-15)
    assert arcsin_k(-kappa, x) == pytest.approx(math.asinh(math.sqrt(kappa) * x) / math.sqrt(kappa), rel=1e-12)


@pytest.mark.parametrize("kappa", KAPPAS)
def test_pythagorean_identity_on_random_points(kappa):
    x = np.random.default_rng(1).uniform(-3, 3, 100)
    c, s = cos_k(kappa, x), sin_k(kappa, x)
    assert np.max(np.abs(c * c + kappa * s * s - 1.0)) < 1e-12


@pytest.mark.parametrize("kappa", KAPPAS)
def test_identity_residuals_report(kappa):
    x = np.random.default_rng(2).uniform(-3, 3, 200)
    res = identity_residuals(kappa, x)
    assert set(res) == {"pythagorean", "double_cos", "double_sin", "arcsin_roundtrip", "arctan_roundtrip"}
    assert max(res.values()) < 1e-12


@given(kappas, xs)
def test_parity(kappa, x):
    assert cos_k(kappa, -x) == cos_k(kappa, x)
    assert sin_k(kappa, -x) == -sin_k(kappa, x)


@given(kappas, xs)
def test_double_angle(kappa, x):
    c, s = cos_k(kappa, x), sin_k(kappa, x)
    scale = max(1.0, c * c + abs(kappa) * s * s)
    assert abs(cos_k(kappa, 2 * x) - (c * c - kappa * s * s)) < 1e-12 * scale
    assert abs(sin_k(kappa, 2 * x) - 2 * s * c) < 1e-12 * scale


@given(kappas, st.floats(-2.5, 2.5))
def test_derivatives_by_central_difference(kappa, x):
    h = 1e-5
    d_sin = (sin_k(kappa, x + h) - sin_k(kappa, x - h)) / (2 * h)
    d_cos = (cos_k(kappa, x + h) - cos_k(kappa, x - h)) / (2 * h)
    scale = max(1.0, abs(cos_k(kappa, x)) + abs(kappa * sin_k(kappa, x)))
    assert abs(d_sin - cos_k(kappa, x)) < 1e-8 * scale
    assert abs(d_cos + kappa * sin_k(kappa, x)) < 1e-8 * scale


@given(kappas, st.floats(-1.0, 1.0))
def test_tan_and_arctan_derivatives(kappa, x):
    h = 1e-5
    c = cos_k(kappa, x)
    if abs(c) > 0.2:
        d_tan = (tan_k(kappa, x + h) - tan_k(kappa, x - h)) / (2 * h)
        assert abs(d_tan - 1 / c**2) < 1e-8 / c**2 * 10
    if kappa >= 0 or abs(x) < 0.6 / math.sqrt(-kappa):
        d_atan = (arctan_k(kappa, x + h) - arctan_k(kappa, x - h)) / (2 * h)
        assert abs(d_atan - 1 / (1 + kappa * x * x)) < 1e-7


@given(kappas, xs)
def test_arcsin_inverts_sin_on_principal_range(kappa, x):
    if kappa > 0:
        x = max(-0.99, min(0.99, x * math.sqrt(kappa) / 3)) * math.pi / (2 * math.sqrt(kappa))
    assert abs(arcsin_k(kappa, sin_k(kappa, x)) - x) < 1e-9 * max(1.0, abs(x))


def test_continuity_across_zero():
    x = np.random.default_rng(3).uniform(-3, 3, 500)
    assert continuity_defect(x) < 1e-7
    for f in (cos_k, sin_k, arctan_k):
        for eps in (1e-8, -1e-8):
            assert np.max(np.abs(f(eps, x) - f(0.0, x))) < 1e-7
