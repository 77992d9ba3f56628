import math

import numpy as np
import pytest
from scipy.optimize import brentq, minimize_scalar

from errors import InputError
from invariants import (TorusDirection, exp_moments, futaki_continuum, futaki_limit_check, futaki_quantized,
                        parse_direction, quantized_soliton_field, soliton_field)
from polytope import integrate_exp_linear, lattice_points


def test_quantized_futaki_closed_form(unit_interval):
    for k in (1, 2, 5, 9):
        assert futaki_quantized(unit_interval, [0.0], [1.0], k) == -k * (k + 1) / 2


def test_continuum_futaki_vanishes_on_symmetric_polytopes(p1, p1xp1, p2):
    assert futaki_continuum(p1, [0.0], [1.0]) == pytest.approx(0.0, abs=1e-15)
    for polytope in (p1xp1, p2):
        for eta in ([1.0, 0.0], [0.0, 1.0]):
            assert futaki_continuum(polytope, [0.0, 0.0], eta) == pytest.approx(0.0, abs=1e-14)


def test_continuum_futaki_on_skew_interval(skew_interval):
    assert futaki_continuum(skew_interval, [0.0], [1.0]) == pytest.approx(-0.5, rel=1e-14)


def test_exp_moments_match_direct_integrals(bl1p2):
    xi = [0.3, -0.4]
    value, gradient, hessian = exp_moments(bl1p2, xi)
    assert value == pytest.approx(integrate_exp_linear(bl1p2, xi))
    assert gradient[1] == pytest.approx(integrate_exp_linear(bl1p2, xi, [0, 1]))
    assert hessian[0, 1] == pytest.approx(integrate_exp_linear(bl1p2, xi, [1, 1]))
    assert hessian[0, 1] == hessian[1, 0]


def test_soliton_field_vanishes_on_symmetric_polytopes(p1, p1xp1, p2):
    for polytope in (p1, p1xp1, p2):
        assert np.linalg.norm(soliton_field(polytope).components) <= 1e-12


def test_soliton_field_on_skew_interval(skew_interval):
    def first_moment(s):
        return (math.exp(2 * s) * (2 * s - 1) - math.exp(-s) * (-s - 1)) / s ** 2
    expected = brentq(first_moment, -5.0, -1e-3, xtol=1e-14)
    xi = soliton_field(skew_interval)
    assert xi.components[0] == pytest.approx(expected, abs=1e-10)
    assert xi.residual <= 1e-12
    assert futaki_continuum(skew_interval, xi, [1.0]) == pytest.approx(0.0, abs=1e-10)


def test_soliton_field_on_bl1p2(bl1p2):
    xi = soliton_field(bl1p2)
    s, t = xi.components
    assert s == pytest.approx(t, abs=1e-12)
    assert s < 0
    diagonal = minimize_scalar(lambda u: integrate_exp_linear(bl1p2, [u, u]), bracket=(-1.0, 0.0),
                               tol=1e-12)
    assert s == pytest.approx(diagonal.x, abs=1e-6)
    _, gradient, _ = exp_moments(bl1p2, xi)
    assert np.linalg.norm(gradient) <= 1e-12


def test_soliton_field_needs_interior_origin(unit_interval):
    with pytest.raises(InputError):
        soliton_field(unit_interval)


def test_quantized_soliton_field_annihilates_quantized_futaki(skew_interval, bl1p2):
    for polytope, k in ((skew_interval, 6), (bl1p2, 4)):
        xi = quantized_soliton_field(polytope, k)
        scale = k * len(lattice_points(polytope, k))
        for eta in np.eye(polytope.dim):
            assert abs(futaki_quantized(polytope, xi, eta, k)) <= 1e-9 * scale


def test_quantized_soliton_field_approaches_continuum(skew_interval):
    limit = soliton_field(skew_interval).components
    coarse = quantized_soliton_field(skew_interval, 4).components
    fine = quantized_soliton_field(skew_interval, 16).components
    assert np.linalg.norm(fine - limit) < np.linalg.norm(coarse - limit)


def test_futaki_limit_exact_polynomial(skew_interval):
    report = futaki_limit_check(skew_interval, [0.0], [1.0], 8)
    # Fut_k = −(3k² + k)/2 exactly
    np.testing.assert_allclose(report.quantized, [-(3 * k * k + k) / 2 for k in report.ks])
    assert report.leading_estimate == pytest.approx(-0.5, abs=1e-10)
    assert report.fit_residual <= 1e-9
    assert max(report.errors) <= 1e-12
    assert set(report.to_dict()) >= {"continuum", "leading_estimate", "rate_constant"}


def test_futaki_limit_rate(skew_interval):
    report = futaki_limit_check(skew_interval, [0.3], [1.0], 16)
    assert report.leading_estimate == pytest.approx(report.continuum, abs=1e-4)
    assert report.errors[-1] < report.errors[3]
    assert len(list(report.rows())) == 16


def test_futaki_limit_needs_enough_levels(square):
    with pytest.raises(InputError):
        futaki_limit_check(square, [0.0, 0.0], [1.0, 0.0], 3)


def test_parse_direction():
    xi = parse_direction("0.5,-1", 2)
    np.testing.assert_array_equal(np.asarray(xi), [0.5, -1.0])
    assert xi.role == "V"
    with pytest.raises(InputError):
        parse_direction("0.5", 2)
    with pytest.raises(InputError):
        parse_direction("a,b", 2)
    with pytest.raises(InputError):
        TorusDirection([1.0], role="X")
    with pytest.raises(InputError):
        TorusDirection([np.nan])
