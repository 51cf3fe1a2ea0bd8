"""Tests for the chi-squared and normal helpers against independent oracles."""

import math

import numpy as np
import pytest

from simplexci.distributions import (
    chi2_cdf,
    chi2_pdf,
    chi2_quantile,
    normal_cdf,
    normal_pdf,
    normal_quantile,
    regularized_gamma_p,
)

from oracles import chi2_quantile_quadrature, normal_quantile_erf

P_GRID = [0.005, 0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.975, 0.99, 0.995]


def test_chi2_quantile_two_dof_closed_form():
    # G^-1(p; 2) = -2 ln(1-p)
    for p in P_GRID:
        assert abs(chi2_quantile(p, 2) + 2.0 * math.log1p(-p)) <= 1e-9


def test_chi2_quantile_one_dof_is_squared_normal_quantile():
    for p in [0.5, 0.8, 0.9, 0.95, 0.99]:
        z = normal_quantile_erf(0.5 * (1.0 + p))
        assert abs(chi2_quantile(p, 1) - z * z) <= 1e-8


def test_chi2_quantile_matches_quadrature_oracle():
    for k in range(1, 9):
        for p in [0.5, 0.9, 0.95, 0.99]:
            oracle = chi2_quantile_quadrature(p, k)
            assert abs(chi2_quantile(p, k) - oracle) <= 1e-6, (k, p)


def test_chi2_cdf_quantile_round_trip():
    for k in range(1, 11):
        for p in P_GRID:
            assert abs(chi2_cdf(chi2_quantile(p, k), k) - p) <= 1e-10, (k, p)


def test_chi2_quantile_monotone_in_p_and_dof():
    for k in range(1, 8):
        values = [chi2_quantile(p, k) for p in P_GRID]
        assert all(a < b for a, b in zip(values, values[1:]))
    for p in [0.5, 0.95]:
        values = [chi2_quantile(p, k) for k in range(1, 12)]
        assert all(a < b for a, b in zip(values, values[1:]))


def test_chi2_cdf_monotone_and_bounded():
    xs = np.linspace(0.0, 40.0, 200)
    for k in (1, 2, 5):
        values = [chi2_cdf(x, k) for x in xs]
        assert all(0.0 <= v <= 1.0 for v in values)
        assert all(a <= b for a, b in zip(values, values[1:]))
    assert chi2_cdf(0.0, 3) == 0.0
    assert chi2_cdf(-1.0, 3) == 0.0
    assert chi2_cdf(1e4, 3) == pytest.approx(1.0, abs=1e-12)


def test_chi2_pdf_matches_cdf_derivative():
    for k in (1, 2, 4, 7):
        for x in (0.5, 1.5, 4.0, 9.0):
            step = 1e-6 * (1.0 + x)
            numeric = (chi2_cdf(x + step, k) - chi2_cdf(x - step, k)) / (2.0 * step)
            assert abs(chi2_pdf(x, k) - numeric) <= 1e-6 * (1.0 + numeric)


def test_normal_quantile_matches_erf_oracle():
    for p in P_GRID:
        assert abs(normal_quantile(p) - normal_quantile_erf(p)) <= 1e-9


def test_normal_quantile_reflection_is_exact():
    for p in [0.005, 0.1, 0.25, 0.4]:
        assert normal_quantile(p) == -normal_quantile(1.0 - p)
    assert normal_quantile(0.5) == 0.0


def test_normal_cdf_symmetry_and_round_trip():
    for z in [0.0, 0.31, 1.0, 1.96, 3.5]:
        assert abs(normal_cdf(z) + normal_cdf(-z) - 1.0) <= 1e-14
    for p in P_GRID:
        assert abs(normal_cdf(normal_quantile(p)) - p) <= 1e-12


def test_normal_pdf_matches_cdf_derivative():
    for z in (-2.0, -0.3, 0.0, 1.2, 2.5):
        numeric = (normal_cdf(z + 1e-6) - normal_cdf(z - 1e-6)) / 2e-6
        assert abs(normal_pdf(z) - numeric) <= 1e-6


def test_frozen_reference_values():
    # closed-form anchors used elsewhere in the package and its docs
    assert abs(chi2_quantile(0.95, 2) - 5.991464547107982) <= 1e-9
    assert abs(chi2_quantile(0.95, 1) - 3.841458820694124) <= 1e-8
    assert abs(normal_quantile(0.975) - 1.959963984540054) <= 1e-9
    assert abs(normal_quantile(0.9775) - 2.004654461765097) <= 1e-9


def test_regularized_gamma_basics():
    assert regularized_gamma_p(0.5, 0.0) == 0.0
    assert regularized_gamma_p(3.0, 1e4) == pytest.approx(1.0, abs=1e-13)
    # continuity across the series/continued-fraction switch at x = a + 1
    for a in (0.5, 1.0, 2.5, 10.0):
        below = regularized_gamma_p(a, a + 1.0 - 1e-9)
        above = regularized_gamma_p(a, a + 1.0 + 1e-9)
        assert abs(below - above) <= 1e-8


def test_domain_validation():
    with pytest.raises(ValueError):
        chi2_quantile(0.95, 0)
    with pytest.raises(ValueError):
        chi2_quantile(0.95, True)
    with pytest.raises(ValueError):
        chi2_quantile(0.0, 2)
    with pytest.raises(ValueError):
        chi2_quantile(1.0, 2)
    with pytest.raises(ValueError):
        normal_quantile(0.0)
    with pytest.raises(ValueError):
        normal_quantile(1.0)
    with pytest.raises(ValueError):
        chi2_cdf(1.0, -3)
