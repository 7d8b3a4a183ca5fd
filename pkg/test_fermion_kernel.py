"""测试 Hermite 波函数与块投影核"""
import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import integrate

from src.core.asymptotics import blocks_density, edge_kernel, semicircle_density, single_block
from src.core.errors import BlockOverlapError, DomainError
from src.core.fermion_kernel import (
    density_finite,
    edge_rescaled_kernel,
    kernel_block,
    kernel_cd,
    kernel_direct,
    kernel_grid,
    levels,
    psi,
    psi_levels,
    psi_prime,
    rescaled_kernel,
    slater_density,
)
from src.core.numerics import gauss_legendre_rule, integrate_1d, integrate_line
from src.models.schemas import BlockSpec

PSI0_AT_ZERO = (2.0 * math.pi) ** -0.25


def spec_of(blocks, M, parity="custom"):
    return BlockSpec(blocks=tuple(blocks), M=M, parity=parity)


# ===== levels / BlockSpec =====

def test_levels_ground_state():
    assert levels(spec_of([(0, 1)], 5)).tolist() == [0, 1, 2, 3, 4]


def test_levels_single_excited_block():
    spec = spec_of([(1, 1)], 4)
    assert levels(spec).tolist() == list(range(4, 16))
    assert spec.N == 12 == (2 * 1 + 1) * 4


def test_levels_odd_type_instance():
    spec = spec_of([(0, 0.5), (2, 1)], 8, parity="odd")
    assert levels(spec).tolist() == [0, 1] + list(range(32, 72))
    assert spec.B == 2
    assert spec.R == pytest.approx(1.5)


def test_levels_floor_absorbs_rounding():
    # 0.3² · 100 = 8.999999999999998
    spec = spec_of([(0.3, 0.2)], 100)
    assert spec.bounds == [(9, 25)]


def test_overlapping_blocks_name_the_pair():
    with pytest.raises(ValidationError, match="blocks overlap: block 0 ends at level 16 but block 1 starts at level 9"):
        spec_of([(1, 1), (1.5, 1)], 4)


def test_levels_rechecks_unvalidated_specs():
    spec = BlockSpec.model_construct(blocks=((1, 1), (1.5, 1)), M=4, parity="custom")
    with pytest.raises(BlockOverlapError) as info:
        levels(spec)
    assert info.value.pair == (0, 1)


@pytest.mark.parametrize(
    "blocks, parity",
    [
        ([(0, 1), (2, 1)], "even"),        # a_0 = 0
        ([(1, 1), (3, 2)], "even"),        # 宽度不等
        ([(1, 1)], "odd"),                 # a_0 ≠ 0
        ([(0, 1), (2, 1)], "odd"),         # w_0 ≠ w/2
    ],
)
def test_parity_constraints(blocks, parity):
    with pytest.raises(ValidationError):
        spec_of(blocks, 4, parity)


def test_block_parameters_are_validated():
    with pytest.raises(ValidationError):
        spec_of([(-1, 1)], 4)
    with pytest.raises(ValidationError):
        spec_of([(1, 0)], 4)
    with pytest.raises(ValidationError):
        spec_of([(0, 0.1)], 4)   # N = 0


# ===== psi =====

def test_psi_closed_forms():
    assert psi(0, 0.0) == pytest.approx(PSI0_AT_ZERO, rel=1e-14)
    assert psi(1, 0.0) == pytest.approx(0.0, abs=1e-15)
    assert psi(1, 1.5) == pytest.approx(1.5 * PSI0_AT_ZERO * math.exp(-1.5 ** 2 / 4), rel=1e-13)


def test_psi_orthonormal():
    nodes, weights = gauss_legendre_rule(-30.0, 30.0, panels=60, order=16)
    phi = psi_levels(range(21), nodes)
    gram = (phi * weights) @ phi.T
    assert np.max(np.abs(gram - np.eye(21))) <= 1e-9


def test_psi_levels_keeps_requested_order():
    x = np.array([-1.0, 0.2, 3.0])
    values = psi_levels([5, 0, 5, 2], x)
    assert values.shape == (4, 3)
    assert np.array_equal(values[0], values[2])
    assert np.allclose(values[1], psi(0, x))


def test_psi_high_level_beyond_gaussian_underflow():
    # ψ_0(60) 下溢到 0，但 k = 1000 时 x = 60 位于经典允许区内
    value = psi(1000, 60.0)
    assert math.isfinite(value) and value != 0.0
    assert abs(value) < 1.0


def test_psi_level_range():
    with pytest.raises(DomainError):
        psi(-1, 0.0)


def test_psi_prime_identities():
    assert psi_prime(0, 0.0) == pytest.approx(0.0, abs=1e-15)
    assert psi_prime(1, 0.0) == pytest.approx(PSI0_AT_ZERO, rel=1e-14)


def test_psi_prime_matches_finite_differences():
    rng = np.random.default_rng(7)
    h = 1e-5
    for _ in range(100):
        k = int(rng.integers(0, 51))
        x = float(rng.uniform(-8.0, 8.0))
        fd = (psi(k, x + h) - psi(k, x - h)) / (2 * h)
        assert psi_prime(k, x) == pytest.approx(fd, abs=1e-7)


# ===== kernels =====

def test_kernel_direct_small_cases():
    assert kernel_direct([0], 0.0, 0.0) == pytest.approx(1.0 / math.sqrt(2 * math.pi), rel=1e-14)
    assert kernel_direct([0, 1], 0.0, 1.0) == pytest.approx(psi(0, 0.0) * psi(0, 1.0), rel=1e-14)


def test_kernel_cd_matches_direct_sum():
    assert kernel_cd(1, 0.0, 0.0) == pytest.approx(1.0 / math.sqrt(2 * math.pi), rel=1e-12)
    assert kernel_cd(10, 0.0, 0.0) == pytest.approx(sum(psi(k, 0.0) ** 2 for k in range(10)), abs=1e-10)
    assert kernel_cd(10, 0.3, -0.7) == pytest.approx(kernel_direct(range(10), 0.3, -0.7), rel=1e-10)
    assert kernel_cd(100, 0.0, 0.1) == pytest.approx(kernel_direct(range(100), 0.0, 0.1), rel=1e-9)


def test_kernel_cd_diagonal_switch_is_continuous():
    inside = kernel_cd(30, 1.0, 1.0 + 5e-7)
    outside = kernel_cd(30, 1.0, 1.0 + 2e-6)
    assert inside == pytest.approx(outside, rel=1e-6)
    assert kernel_cd(0, 0.3, 0.4) == 0.0


def test_kernel_block_reduces_to_cd_for_ground_state():
    spec = spec_of([(0, 1)], 25)
    assert kernel_block(spec, 0.4, -1.1) == pytest.approx(kernel_cd(25, 0.4, -1.1), rel=1e-13)


@pytest.mark.parametrize(
    "blocks, M, x, y",
    [
        ([(1, 1)], 4, 0.0, 0.0),
        ([(1, 1), (3, 1)], 4, 0.5, -0.5),
        ([(0, 0.5), (2, 1)], 8, 1.7, 2.9),
    ],
)
def test_kernel_block_matches_direct(blocks, M, x, y):
    spec = spec_of(blocks, M)
    assert kernel_block(spec, x, y) == pytest.approx(kernel_direct(levels(spec), x, y), rel=1e-10, abs=1e-13)


def test_kernel_block_random_pairs_large_levels():
    spec = spec_of([(5, 1), (8, 2)], 100)    # max(J) = 9999
    J = levels(spec)
    rng = np.random.default_rng(11)
    edge = 2.0 * spec.outer_radius * math.sqrt(spec.M)
    x = rng.uniform(-edge, edge, 100)
    y = x + rng.uniform(-2.0, 2.0, 100)
    direct = kernel_direct(J, x, y)
    block = kernel_block(spec, x, y)
    scale = np.max(np.abs(direct))
    assert np.max(np.abs(block - direct)) <= 1e-9 * scale


def test_kernel_symmetry_and_parity():
    spec = spec_of([(1, 1), (3, 1)], 6)
    assert kernel_block(spec, 0.7, -2.3) == pytest.approx(kernel_block(spec, -2.3, 0.7), rel=1e-13)
    assert kernel_block(spec, -0.7, 2.3) == pytest.approx(kernel_block(spec, 0.7, -2.3), rel=1e-12)


def test_density_trace_is_N():
    spec = spec_of([(1, 1)], 10)
    value, _ = integrate_line(lambda x: density_finite(spec, x), scale=2 * spec.outer_radius * math.sqrt(spec.M))
    assert value == pytest.approx(spec.N, rel=1e-6)


def test_density_is_nonnegative():
    spec = spec_of([(0, 0.5), (2, 1)], 8)
    x = np.linspace(-25.0, 25.0, 501)
    assert np.min(density_finite(spec, x)) >= -1e-12


def test_density_against_semicircle_and_two_block_law():
    ground = spec_of([(0, 1)], 100)
    assert density_finite(ground, 0.0) == pytest.approx(semicircle_density(100, 0.0), rel=0.02)
    block = spec_of([(1, 1)], 20)
    assert density_finite(block, 0.0) == pytest.approx(math.sqrt(20) / math.pi, rel=0.05)
    assert blocks_density(block, 0.0) == pytest.approx(math.sqrt(20) / math.pi, rel=1e-12)


def l1_relative(f, g, x, mask):
    return float(integrate.trapezoid(np.abs(f - g) * mask, x) / integrate.trapezoid(np.abs(g) * mask, x))


@pytest.mark.parametrize("M", [100, 200])
def test_ground_state_density_approaches_semicircle_in_l1(M):
    spec = spec_of([(0, 1)], M)
    edge = 2.0 * math.sqrt(spec.N)
    x = np.linspace(-0.8 * edge, 0.8 * edge, 4001)
    assert l1_relative(density_finite(spec, x), semicircle_density(spec.N, x), x, np.ones_like(x)) <= 0.02


@pytest.mark.parametrize("M", [100, 200])
def test_block_density_approaches_annulus_law_in_l1(M):
    spec = spec_of([(1, 1)], M)
    inner, outer = 2.0 * math.sqrt(M), 4.0 * math.sqrt(M)
    x = np.linspace(-0.9 * outer, 0.9 * outer, 6001)
    # 去掉内边缘附近的过渡区
    bulk = (np.abs(x) <= 0.8 * inner) | ((np.abs(x) >= 1.2 * inner) & (np.abs(x) <= 0.9 * outer))
    assert l1_relative(density_finite(spec, x), blocks_density(spec, x), x, bulk.astype(float)) <= 0.03


def test_kernel_grid_is_symmetric_projection():
    spec = spec_of([(1, 1)], 3)
    nodes, weights = gauss_legendre_rule(-14.0, 14.0, panels=8, order=16)
    grid = kernel_grid(spec, nodes)
    assert np.array_equal(grid.values, grid.values.T)
    assert grid.is_finite_m
    spectrum = grid.projection_spectrum(weights)
    assert spectrum.min() >= -1e-8
    assert spectrum.max() <= 1.0 + 1e-8
    assert grid.min_eigen_ratio() >= -1e-8


def test_kernel_grid_from_limit_kernel():
    grid = kernel_grid(single_block(2.0), [0.5, 0.0, 1.0])
    assert grid.points.tolist() == [0.0, 0.5, 1.0]
    assert np.allclose(np.diag(grid.values), 1.0)
    assert grid.values[0, 2] == pytest.approx((2 / math.pi) * math.cos(2.5 * math.pi), abs=1e-15)
    assert not grid.is_finite_m


def test_rescaled_kernel_has_unit_diagonal():
    spec = spec_of([(5, 1)], 50)
    assert rescaled_kernel(spec, 0.0, 0.0) == pytest.approx(1.0, rel=1e-12)
    assert rescaled_kernel(spec, 0.0, 0.0, x0=3.0) == pytest.approx(1.0, rel=1e-12)


def test_rescaled_kernel_rejects_zero_density():
    spec = spec_of([(0, 1)], 4)
    with pytest.raises(DomainError):
        rescaled_kernel(spec, 0.0, 1.0, x0=200.0)


def test_edge_rescaled_kernel_is_finite():
    spec = spec_of([(0, 1)], 100)
    value = edge_rescaled_kernel(spec, 0.0, 0.0)
    assert math.isfinite(value) and value > 0


def test_edge_rescaled_kernel_converges_to_airy_limit():
    X, Y = np.meshgrid([-2.0, -1.0, 0.0, 1.0], [-2.0, -1.0, 0.0, 1.0])
    gaps = [
        float(np.max(np.abs(edge_rescaled_kernel(spec_of([(1, 1)], M), X, Y) - edge_kernel(1.0, X, Y))))
        for M in (50, 200, 800)
    ]
    # 每次 M ×4 误差约缩小 M^{-2/3}
    assert gaps[1] < 0.6 * gaps[0]
    assert gaps[2] < 0.6 * gaps[1]
    assert gaps[2] < 2e-4


def test_slater_density_two_fermions():
    # |Ψ|² = (ψ0(x)ψ1(y) − ψ1(x)ψ0(y))² / 2
    x, y = 0.3, -1.2
    expected = (psi(0, x) * psi(1, y) - psi(1, x) * psi(0, y)) ** 2 / 2
    assert slater_density([0, 1], [x, y]) == pytest.approx(expected, rel=1e-12)
    assert slater_density([0, 1], [0.5, 0.5]) == pytest.approx(0.0, abs=1e-18)
    with pytest.raises(DomainError):
        slater_density([0, 1], [0.0])


def test_one_point_marginal_of_slater_density():
    # ∫ N |Ψ|² dy = K(x, x)，N = 2
    x = 0.8
    marginal = integrate_1d(lambda y: np.array([2 * slater_density([0, 1], [x, t]) for t in np.atleast_1d(y)]), -12.0, 12.0)
    assert marginal == pytest.approx(kernel_cd(2, x, x), rel=1e-9)
