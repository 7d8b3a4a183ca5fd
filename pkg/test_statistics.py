"""测试关联函数、结构因子、粒子数方差与弱收敛"""
import math

import numpy as np
import pytest

from src.core.alpha_det import alpha_corr
from src.core.asymptotics import pure_sine, scaled_sine, single_block
from src.core.errors import DomainError, QuadratureError, SizeError
from src.core.fermion_kernel import density_finite, kernel_block, slater_density
from src.core.numerics import integrate_1d
from src.core.statistics import (
    corr_n,
    cos_cycle_integral,
    cos_cycle_limit_check,
    number_variance_alpha,
    number_variance_bulk,
    number_variance_finite,
    number_variance_sweep,
    nv_expansion,
    poisson_limit_gap,
    rho2_limit,
    rho3_limit_half,
    scaled_sine_kernel,
    structure_factor,
    structure_factor_numeric,
    total_correlation,
    weak_convergence_gap,
)
from src.models.schemas import CONSTANTS, BlockSpec, QuadratureSpec

EULER_GAMMA = 0.5772156649015329


def ground_state(N):
    return BlockSpec(blocks=((0, 1),), M=N)


# ===== 关联函数 =====

def test_corr_n_one_point_is_density():
    spec = BlockSpec(blocks=((1, 1),), M=6)
    assert corr_n(spec, [0.7]) == pytest.approx(density_finite(spec, 0.7), rel=1e-13)


def test_corr_n_coincident_points_vanish():
    spec = ground_state(10)
    assert corr_n(spec, [0.4, 0.4]) == pytest.approx(0.0, abs=1e-12)
    assert corr_n(pure_sine(), [1.0, 1.0]) == pytest.approx(0.0, abs=1e-15)


def test_corr_n_matches_slater_marginal():
    # N = 3, n = 2：ρ₂(x, y) = 3!/1! ∫ |Ψ|² dz
    x, y = 0.3, -0.9
    marginal = integrate_1d(
        lambda z: np.array([6.0 * slater_density([0, 1, 2], [x, y, t]) for t in np.atleast_1d(z)]), -14.0, 14.0
    )
    assert corr_n(ground_state(3), [x, y]) == pytest.approx(marginal, rel=1e-9)


def test_corr_n_two_points_is_kernel_determinant():
    spec = BlockSpec(blocks=((1, 1), (3, 1)), M=4)
    x, y = 0.2, 1.1
    expected = density_finite(spec, x) * density_finite(spec, y) - kernel_block(spec, x, y) ** 2
    assert corr_n(spec, [x, y]) == pytest.approx(expected, rel=1e-11)


def test_corr_n_delegates_alpha_sources():
    points = [0.0, 0.8, 2.1]
    assert corr_n(scaled_sine(2), points) == pytest.approx(alpha_corr(-0.5, scaled_sine(2), points), rel=1e-14)
    assert corr_n(single_block(3.0), points, alpha=-0.5) == pytest.approx(
        alpha_corr(-0.5, single_block(3.0), points), rel=1e-14
    )


def test_corr_n_size_limit():
    with pytest.raises(SizeError):
        corr_n(pure_sine(), np.arange(13.0))
    assert corr_n(pure_sine(), []) == 1.0


def test_rho2_limit_values():
    assert rho2_limit(-0.5, 0.0) == 0.5
    assert rho2_limit(-0.5, 1.0) == pytest.approx(1 - 2 / math.pi ** 2, rel=1e-14)
    assert rho2_limit(-1.0, 0.0) == 0.0
    s = np.linspace(0.0, 4.0, 9)
    assert np.allclose(rho2_limit(-1.0, s), 1 - np.sinc(s) ** 2)


def test_rho2_limit_rejects_non_process_alpha():
    with pytest.raises(ValueError):
        rho2_limit(-0.3, 1.0)
    with pytest.raises(DomainError):
        rho2_limit(0.5, 1.0)


def test_rho3_limit_half_matches_alpha_determinant():
    kernel = scaled_sine(2)
    rng = np.random.default_rng(41)
    for _ in range(500):
        points = rng.uniform(-3.0, 3.0, 3)
        assert rho3_limit_half(*points) == pytest.approx(alpha_corr(-0.5, kernel, points), abs=1e-12)
    assert rho3_limit_half(0.0, 1.0, 2.0) == pytest.approx(alpha_corr(-0.5, kernel, [0.0, 1.0, 2.0]), abs=1e-12)


def test_rho3_limit_half_limits():
    assert rho3_limit_half(0.5, 0.5, 0.5) == pytest.approx(0.0, abs=1e-15)
    assert rho3_limit_half(0.0, 1e6, 2e6) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_structure_factor_piecewise(m):
    a = 1.0 / m
    assert structure_factor(-a, 0.0) == 0.0
    assert structure_factor(-a, math.pi * a) == pytest.approx(0.5, rel=1e-14)
    assert structure_factor(-a, 2 * math.pi * a) == pytest.approx(1.0, rel=1e-14)
    assert structure_factor(-a, 3 * math.pi * a) == 1.0
    assert structure_factor(-a, -math.pi * a) == pytest.approx(0.5, rel=1e-14)


def test_structure_factor_half():
    assert structure_factor(-0.5, math.pi / 2) == pytest.approx(0.5, rel=1e-14)


def test_total_correlation():
    assert total_correlation(-0.5, 0.0) == -0.5
    assert abs(total_correlation(-0.5, 1e6)) < 1e-12
    r = np.linspace(0.0, 3.0, 7)
    assert np.allclose(total_correlation(-1 / 3, r), rho2_limit(-1 / 3, r) - 1.0)


@pytest.mark.parametrize("alpha", [-1.0, -0.5])
def test_structure_factor_fourier_duality(alpha):
    for k in np.linspace(0.0, 3 * math.pi * abs(alpha), 8):
        assert structure_factor_numeric(alpha, k) == pytest.approx(structure_factor(alpha, k), abs=1e-6)


def test_poisson_limit():
    s = np.linspace(0.0, 10.0, 101)
    k = np.linspace(0.5, 5.0, 10)
    gaps = [poisson_limit_gap(m, s, k) for m in (2, 8, 32, 128)]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] <= 1.0 / 128 + 1e-15


def test_scaled_sine_kernel():
    kernel = scaled_sine_kernel(-1 / 3)
    assert kernel.kind == "scaled_sine"
    assert kernel.m == 3


# ===== 粒子数方差 =====

def test_euler_gamma_constant():
    assert CONSTANTS.euler_gamma == EULER_GAMMA


def test_dyson_mehta_large_L():
    expected = (math.log(100) + math.log(2 * math.pi) + 1 + EULER_GAMMA) / math.pi ** 2
    assert number_variance_alpha(-1.0, 100.0) == pytest.approx(expected, abs=1e-3)
    assert expected == pytest.approx(0.8126, abs=1e-4)
    assert nv_expansion(-1.0, 100.0, "large") == pytest.approx(expected, rel=1e-14)


def test_small_L_expansion():
    assert nv_expansion(-1.0, 0.0, "small") == 0.0
    assert nv_expansion(-1.0, 0.2, "small") == pytest.approx(number_variance_alpha(-1.0, 0.2), abs=1e-5)
    L = 0.1
    assert abs(number_variance_alpha(-1.0, L) - (L - L * L)) <= math.pi ** 2 / 18 * L ** 4 * 1.1


def test_large_L_expansion_third():
    assert nv_expansion(-1 / 3, 200.0, "large") == pytest.approx(number_variance_alpha(-1 / 3, 200.0), rel=2e-3)


def test_log_slope_doubles_at_half():
    slope = (number_variance_alpha(-0.5, 200.0) - number_variance_alpha(-0.5, 50.0)) / math.log(4.0)
    assert slope == pytest.approx(2.0 / math.pi ** 2, rel=0.02)


def test_expansion_regime_is_validated():
    with pytest.raises(DomainError):
        nv_expansion(-1.0, 1.0, "medium")
    with pytest.raises(DomainError):
        nv_expansion(-1.0, 0.0, "large")
    with pytest.raises(DomainError):
        number_variance_alpha(-1.0, 0.0)


def test_sine_variance_is_monotone_and_concave():
    L = np.arange(1.0, 11.0)
    values = np.array([number_variance_alpha(-1.0, x) for x in L])
    assert np.all(np.diff(values) > 0)
    assert np.all(np.diff(values, 2) <= 1e-9)


def test_bulk_variance_consistency():
    assert number_variance_bulk(pure_sine(), 1.0) == pytest.approx(number_variance_alpha(-1.0, 1.0), abs=1e-8)
    assert number_variance_bulk(scaled_sine(3), 5.0) == pytest.approx(number_variance_alpha(-1 / 3, 5.0), abs=1e-8)
    L = 1e-3
    assert number_variance_bulk(single_block(2.0), L) == pytest.approx(L, rel=2e-3)


def test_single_block_variance_lies_between_limits():
    value = number_variance_bulk(single_block(5.0), 4.0)
    assert number_variance_alpha(-1.0, 4.0) < value < number_variance_alpha(-0.5, 4.0)


def test_finite_variance_small_box_is_linear():
    spec = ground_state(20)
    L = 1e-3
    ratio = number_variance_finite(spec, L) / (density_finite(spec, 0.0) * L)
    assert ratio == pytest.approx(1.0, rel=0.01)


def test_finite_variance_is_sub_poissonian():
    spec = ground_state(20)
    mean = integrate_1d(lambda x: density_finite(spec, x), -0.5, 0.5)
    variance = number_variance_finite(spec, 1.0)
    assert 0.0 < variance < mean


def test_finite_variance_methods_agree():
    spec = ground_state(5)
    gram = number_variance_finite(spec, 1.5, method="gram", x0=0.3)
    kernel = number_variance_finite(spec, 1.5, method="kernel", x0=0.3)
    assert gram == pytest.approx(kernel, abs=1e-8)


def test_finite_variance_rejects_empty_box():
    with pytest.raises(DomainError):
        number_variance_finite(ground_state(5), 0.0)


def test_finite_variance_raises_when_refinement_stalls():
    # 二阶面板 + 不可达容差：加倍细分始终不满足停止条件
    quad = QuadratureSpec(relative_tolerance=1e-300, absolute_tolerance=1e-300, panel_order=2)
    with pytest.raises(QuadratureError) as info:
        number_variance_finite(ground_state(6), 3.0, quad=quad)
    assert info.value.error_bound > 0
    assert 0.0 < info.value.estimate < 3.0


@pytest.mark.slow
def test_finite_variance_approaches_half_curve():
    spec = BlockSpec(blocks=((10, 1),), M=20)
    for L in (1.0, 2.0, 4.0, 8.0):
        assert number_variance_finite(spec, L, rescaled=True) == pytest.approx(
            number_variance_alpha(-0.5, L), rel=0.10
        )


def test_number_variance_sweep_labels_and_order():
    series = number_variance_sweep([2.0, 1.0, 1.0], alpha=-0.5, kernel=single_block(3.0), workers=1)
    assert [s.label for s in series] == ["nv_alpha", "nv_small_L", "nv_large_L", "nv_single_block"]
    assert series[0].x == [1.0, 2.0]
    assert series[0].y[0] == pytest.approx(number_variance_alpha(-0.5, 1.0), rel=1e-12)


def test_number_variance_sweep_is_independent_of_workers():
    kwargs = {"alpha": -1.0, "spec": ground_state(6)}
    serial = number_variance_sweep([0.5, 1.0, 1.5], workers=1, **kwargs)
    parallel = number_variance_sweep([0.5, 1.0, 1.5], workers=3, **kwargs)
    assert [s.y for s in serial] == [s.y for s in parallel]
    assert serial[-1].label == "nv_finite"


# ===== 弱收敛 =====

def test_weak_convergence_gap_decreases_with_a():
    gaps = [weak_convergence_gap(2, single_block(a)) for a in (5.0, 20.0, 80.0)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] <= 0.01


def test_weak_convergence_gap_matches_cos_square_identity():
    # a 相关项只剩 ∫(L − u) sinc²(πu/2) cos(2ωu)，其大小 ~ 1/(2ω)²
    kernel = single_block(10.0)
    omega = kernel.frequencies[0]
    assert weak_convergence_gap(2, kernel) <= 1.0 / (2 * omega ** 2) + 1e-9


@pytest.mark.slow
def test_weak_convergence_three_points():
    assert weak_convergence_gap(3, single_block(50.0)) < 0.01


def test_weak_convergence_rejects_other_orders():
    with pytest.raises(SizeError):
        weak_convergence_gap(4, single_block(5.0))
    with pytest.raises(DomainError):
        weak_convergence_gap(2, single_block(5.0), window=(1.0, 1.0))


def test_cos_cycle_identity_permutation():
    assert cos_cycle_limit_check([0, 1, 2], 37.0) == 0.0


def test_cos_cycle_transposition_closed_form():
    omega = 100.0
    assert cos_cycle_integral([1, 0], omega) == pytest.approx(0.5 * (1 + math.sin(omega) ** 2 / omega ** 2), abs=1e-14)
    deviation = cos_cycle_limit_check([1, 0], omega)
    assert deviation == pytest.approx(0.5 * math.sin(omega) ** 2 / omega ** 2, abs=1e-14)
    assert abs(deviation) <= 5e-5


def test_cos_cycle_three_cycle():
    assert abs(cos_cycle_limit_check([1, 2, 0], 200.0)) < 1e-3
    assert abs(cos_cycle_limit_check([1, 2, 0], 2000.0)) < abs(cos_cycle_limit_check([1, 2, 0], 20.0))


def test_cos_cycle_integral_matches_quadrature():
    omega = 3.7
    value = integrate_1d(lambda x: np.array([
        integrate_1d(lambda y: np.cos(omega * (y - xi)) * np.cos(omega * (xi - y)), 0.0, 1.0) for xi in np.atleast_1d(x)
    ]), 0.0, 1.0)
    assert cos_cycle_integral([1, 0], omega) == pytest.approx(value, rel=1e-10)


def test_cos_cycle_validation():
    with pytest.raises(DomainError):
        cos_cycle_integral([0, 0], 1.0)
    with pytest.raises(SizeError):
        cos_cycle_integral(list(range(7)), 1.0)
