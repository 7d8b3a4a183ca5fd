"""测试求积与 Airy 函数"""
import math

import numpy as np
import pytest
from scipy import special

from src.core.errors import AiryDomainError, DomainError, QuadratureError
from src.core.numerics import (
    AIRY_SWITCH_NEGATIVE,
    AIRY_SWITCH_POSITIVE,
    adaptive_quad,
    airy,
    airy_array,
    gauss_legendre_rule,
    integrate_1d,
    integrate_2d,
    integrate_line,
)
from src.models.schemas import QuadratureSpec


def test_integrate_1d_polynomial_and_trig():
    assert integrate_1d(lambda x: x ** 3, 0.0, 2.0) == pytest.approx(4.0, rel=1e-12)
    assert integrate_1d(np.sin, 0.0, math.pi) == pytest.approx(2.0, rel=1e-12)


def test_integrate_1d_scalar_function_falls_back():
    assert integrate_1d(lambda x: math.exp(x), 0.0, 1.0) == pytest.approx(math.e - 1.0, rel=1e-12)


def test_integrate_1d_reversed_bounds_flip_sign():
    forward = integrate_1d(np.cos, 0.0, 1.0)
    assert integrate_1d(np.cos, 1.0, 0.0) == pytest.approx(-forward, rel=1e-14)
    assert integrate_1d(np.cos, 1.0, 1.0) == 0.0


def test_integrate_1d_oscillatory():
    value = integrate_1d(lambda x: np.cos(200.0 * x), 0.0, 1.0)
    assert value == pytest.approx(math.sin(200.0) / 200.0, abs=1e-12)


def test_integrate_1d_kink_is_subdivided():
    value, error, subdivisions = adaptive_quad(np.abs, -1.0, 2.0)
    assert value == pytest.approx(2.5, rel=1e-10)
    assert error <= 1e-9


def test_quadrature_error_carries_diagnostics():
    spec = QuadratureSpec(max_subdivisions=3)
    with pytest.raises(QuadratureError) as info:
        integrate_1d(lambda x: np.sin(1.0 / np.maximum(x, 1e-3)), 1e-3, 1.0, spec)
    assert info.value.subdivisions == 3
    assert math.isfinite(info.value.estimate)
    assert "did not converge" in str(info.value)


def test_non_finite_integrand_is_a_domain_error():
    with pytest.raises(DomainError):
        integrate_1d(lambda x: np.where(x > 0.5, np.inf, 1.0), 0.0, 1.0)


def test_integrate_2d_separable():
    value = integrate_2d(lambda x, y: np.exp(-x) * np.cos(y), (0.0, 1.0, 0.0, math.pi / 2))
    assert value == pytest.approx(1.0 - math.exp(-1.0), rel=1e-10)


def test_integrate_2d_degenerate_box():
    assert integrate_2d(lambda x, y: x + y, (1.0, 1.0, 0.0, 2.0)) == 0.0
    with pytest.raises(DomainError):
        integrate_2d(lambda x, y: x, (1.0, 0.0, 0.0, 1.0))


def test_gauss_legendre_rule_is_exact_for_polynomials():
    nodes, weights = gauss_legendre_rule(-1.0, 3.0, panels=5, order=4)
    assert nodes.size == 20
    assert np.all(np.diff(nodes) > 0)
    assert weights.sum() == pytest.approx(4.0, rel=1e-14)
    assert np.dot(weights, nodes ** 7) == pytest.approx((3.0 ** 8 - 1.0) / 8.0, rel=1e-12)


def test_integrate_line_gaussian():
    value, half_width = integrate_line(lambda x: np.exp(-0.5 * x * x))
    assert value == pytest.approx(math.sqrt(2.0 * math.pi), rel=1e-10)
    assert half_width >= 8.0


def test_airy_origin_values():
    value = airy(0.0)
    assert value.ai == pytest.approx(0.355028053887817239, abs=1e-9)
    assert value.ai_prime == pytest.approx(-0.258819403792806798, abs=1e-9)


@pytest.mark.parametrize("x", [-20.0, -12.3, -7.5, -6.9, -3.0, -0.5, 1.0, 4.4, 5.4, 5.6, 8.0])
def test_airy_matches_scipy(x):
    ai, aip, _, _ = special.airy(x)
    value = airy(x)
    assert value.ai == pytest.approx(ai, abs=1e-9)
    assert value.ai_prime == pytest.approx(aip, abs=1e-9)


def test_airy_decays_at_ten():
    value = airy(10.0)
    assert 0.0 < value.ai < airy(9.0).ai
    assert value.ai < 1e-9


def test_airy_ode_residual():
    x = np.linspace(-10.0, 5.0, 200)
    h = 1e-5
    _, plus = airy_array(x + h)
    _, minus = airy_array(x - h)
    ai, _ = airy_array(x)
    assert np.max(np.abs((plus - minus) / (2 * h) - x * ai)) <= 1e-8


def test_airy_branches_are_accurate_around_switch_points():
    positive = np.linspace(AIRY_SWITCH_POSITIVE - 0.2, AIRY_SWITCH_POSITIVE + 0.2, 9)
    ai, aip = airy_array(positive)
    ref_ai, ref_aip, _, _ = special.airy(positive)
    # x > 5 时 Ai 已很小，按相对误差比较
    assert np.allclose(ai, ref_ai, rtol=1e-6, atol=0.0)
    assert np.allclose(aip, ref_aip, rtol=1e-6, atol=0.0)

    negative = np.linspace(-AIRY_SWITCH_NEGATIVE - 0.2, -AIRY_SWITCH_NEGATIVE + 0.2, 9)
    ai, aip = airy_array(negative)
    ref_ai, ref_aip, _, _ = special.airy(negative)
    assert np.max(np.abs(ai - ref_ai)) <= 1e-9
    assert np.max(np.abs(aip - ref_aip)) <= 1e-9


def test_airy_range_is_enforced():
    with pytest.raises(AiryDomainError):
        airy(10.5)
    with pytest.raises(AiryDomainError):
        airy(-20.01)
