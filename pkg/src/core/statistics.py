"""
过程层面的统计量 - n 点关联、结构因子、总关联、粒子数方差与弱收敛检验

平移不变核的二重积分先在解析上化为一重积分：
    ∬_{[0,L]²} g(x − y) dx dy = 2 ∫_0^L (L − u) g(u) du   （g 为偶函数）
"""
import itertools
import logging
import math
from functools import partial
from typing import Callable, Iterable, Literal, Optional, Sequence, Union

import numpy as np
from scipy.special import sici

from src.core.alpha_det import AlphaLike, alpha_corr, cycle_count
from src.core.asymptotics import bulk_kernel, scaled_sine, sinc
from src.core.errors import DomainError, QuadratureError, SizeError
from src.core.executor import ordered_map
from src.core.fermion_kernel import density_finite, kernel_block, kernel_grid, levels, psi_matrix
from src.core.numerics import gauss_legendre_rule, integrate_1d, integrate_2d
from src.models.schemas import CONSTANTS, AlphaParam, BlockSpec, LimitKernel, QuadratureSpec, StatSeries

logger = logging.getLogger(__name__)

DETERMINANT_MAX = 12
GRAM_MAX_REFINEMENTS = 8


def _process_alpha(alpha: AlphaLike) -> float:
    """过程层面的 α：必须为 −1/m"""
    if isinstance(alpha, AlphaParam):
        param = alpha
    else:
        param = AlphaParam(alpha=float(alpha), process=True)
    if param.alpha >= 0:
        raise DomainError(f"alpha={param.alpha} is not of the form -1/m")
    return param.alpha


def _oscillation_spec(spec: Optional[QuadratureSpec], length: float, frequency: float) -> QuadratureSpec:
    """按振荡频率预切分面板（每半个周期至少一个面板）"""
    spec = spec or QuadratureSpec.default()
    panels = int(math.ceil(length * frequency / math.pi)) + 1
    return spec.model_copy(update={"initial_panels": max(spec.initial_panels, min(panels, 4096))})


# ===== 关联函数 =====

def corr_n(
    source: Union[BlockSpec, LimitKernel],
    points: Sequence[float],
    alpha: Optional[AlphaLike] = None,
) -> float:
    """
    n 点关联函数

    BlockSpec 与普通极限核：det[K(x_i, x_j)]；scaled_sine（m > 1）或显式给出 alpha 时
    委托给 alpha_corr

    Raises:
        SizeError: 行列式路径 n > 12
    """
    points = np.asarray(points, dtype=float).ravel()
    if isinstance(source, LimitKernel):
        if alpha is not None or (source.kind == "scaled_sine" and source.m > 1):
            return alpha_corr(alpha, source, points)
    if points.size > DETERMINANT_MAX:
        raise SizeError(f"corr_n supports at most {DETERMINANT_MAX} points (got {points.size})")
    if points.size == 0:
        return 1.0
    grid = kernel_grid(source, points)
    return float(np.linalg.det(grid.values))


def rho2_limit(alpha: AlphaLike, s) -> Union[float, np.ndarray]:
    """ρ̃₂(s) = 1 + α [sin(π|α|s)/(π|α|s)]²"""
    a = _process_alpha(alpha)
    values = 1.0 + a * sinc(math.pi * abs(a) * np.asarray(s, dtype=float)) ** 2
    return float(values) if np.ndim(s) == 0 else values


def rho3_limit_half(x1: float, x2: float, x3: float) -> float:
    """α = −1/2 的三点极限 1 − ½Σ sinc² + ½ sinc·sinc·sinc（sinc 参数为 π x_ij / 2）"""
    s12 = float(sinc(0.5 * math.pi * (x1 - x2)))
    s23 = float(sinc(0.5 * math.pi * (x2 - x3)))
    s31 = float(sinc(0.5 * math.pi * (x3 - x1)))
    return 1.0 - 0.5 * (s12 ** 2 + s23 ** 2 + s31 ** 2) + 0.5 * s12 * s23 * s31


def structure_factor(alpha: AlphaLike, k) -> Union[float, np.ndarray]:
    """S(k) = |k|/(2π|α|)（|k| ≤ 2π|α|），否则为 1"""
    a = abs(_process_alpha(alpha))
    k_abs = np.abs(np.asarray(k, dtype=float))
    values = np.minimum(k_abs / (2.0 * math.pi * a), 1.0)
    return float(values) if np.ndim(k) == 0 else values


def total_correlation(alpha: AlphaLike, r) -> Union[float, np.ndarray]:
    """h(r) = ρ̃₂(r) − 1 = α sinc²(π|α|r)"""
    a = _process_alpha(alpha)
    values = a * sinc(math.pi * abs(a) * np.asarray(r, dtype=float)) ** 2
    return float(values) if np.ndim(r) == 0 else values


def _cos_over_square_tail(omega: float, start: float) -> float:
    """∫_start^∞ cos(ωr)/r² dr"""
    omega = abs(omega)
    if omega == 0.0:
        return 1.0 / start
    si, _ = sici(omega * start)
    return math.cos(omega * start) / start - omega * (0.5 * math.pi - si)


def structure_factor_numeric(
    alpha: AlphaLike,
    k: float,
    cutoff: float = 50.0,
    spec: Optional[QuadratureSpec] = None,
) -> float:
    """
    1 + ĥ(k)，ĥ(k) = 2∫_0^∞ h(r) cos(kr) dr

    [0, cutoff] 上数值积分，尾部用正弦积分精确表示
    """
    a = _process_alpha(alpha)
    c = math.pi * abs(a)

    def integrand(r):
        return 2.0 * a * sinc(c * r) ** 2 * np.cos(k * r)

    body = integrate_1d(integrand, 0.0, cutoff, _oscillation_spec(spec, cutoff, abs(k) + 2 * c))
    # sin²(cr)cos(kr) = ½cos(kr) − ¼cos((2c+k)r) − ¼cos((2c−k)r)
    tail = 2.0 * a / c ** 2 * (
        0.5 * _cos_over_square_tail(k, cutoff)
        - 0.25 * _cos_over_square_tail(2 * c + k, cutoff)
        - 0.25 * _cos_over_square_tail(2 * c - k, cutoff)
    )
    return 1.0 + body + tail


# ===== 粒子数方差 =====

def _gram_variance(J: np.ndarray, lo: float, hi: float, panels: int, order: int) -> float:
    nodes, weights = gauss_legendre_rule(lo, hi, panels, order)
    phi = psi_matrix(J, nodes)
    gram = (phi * weights) @ phi.T
    return float(np.trace(gram) - np.sum(gram * gram))


def number_variance_finite(
    spec: BlockSpec,
    L: float,
    method: Literal["gram", "kernel"] = "gram",
    x0: float = 0.0,
    rescaled: bool = False,
    quad: Optional[QuadratureSpec] = None,
) -> float:
    """
    有限 M 粒子数方差

        Var = ∫_box K_J(x, x) dx − ∬_box K_J(x, y)² dx dy，box = [x0 − L/2, x0 + L/2]

    method="gram"：Var = tr G − tr G²，G_jk = ∫_box ψ_j ψ_k，复合规则逐次加倍直到收敛；
    method="kernel"：直接调用 integrate_1d / integrate_2d。
    rescaled=True 时 L 以 1/ρ_1(x0) 为单位。

    Raises:
        DomainError: L <= 0
        QuadratureError: method="gram" 时加倍 GRAM_MAX_REFINEMENTS 次仍未收敛
    """
    if L <= 0:
        raise DomainError(f"box length must be positive (got {L})")
    quad = quad or QuadratureSpec.default()
    length = L / density_finite(spec, x0) if rescaled else L
    lo, hi = x0 - 0.5 * length, x0 + 0.5 * length

    if method == "kernel":
        mean = integrate_1d(lambda x: density_finite(spec, x), lo, hi, quad)
        squared = integrate_2d(lambda x, y: kernel_block(spec, x, y) ** 2, (lo, hi, lo, hi), quad)
        return mean - squared

    J = levels(spec)
    panels = int(math.ceil(length * math.sqrt(J.max() + 1) / math.pi)) + 2
    previous = _gram_variance(J, lo, hi, panels, quad.panel_order)
    for refinement in range(GRAM_MAX_REFINEMENTS):
        panels *= 2
        current = _gram_variance(J, lo, hi, panels, quad.panel_order)
        change = abs(current - previous)
        if change <= max(quad.absolute_tolerance, quad.relative_tolerance * abs(current)):
            logger.debug("gram number variance at L=%g: %d panels after %d refinements", L, panels, refinement + 1)
            return current
        previous = current
    raise QuadratureError(current, change, GRAM_MAX_REFINEMENTS)


def _translation_invariant_variance(k2: Callable, L: float, frequency: float, quad: Optional[QuadratureSpec]) -> float:
    """Var = L − 2∫_0^L (L − u) k(u)² du"""
    integral = integrate_1d(lambda u: (L - u) * k2(u), 0.0, L, _oscillation_spec(quad, L, frequency))
    return L - 2.0 * integral


def number_variance_bulk(kernel: LimitKernel, L: float, quad: Optional[QuadratureSpec] = None) -> float:
    """平移不变极限核的方差 L − ∬ k(x − y)² dx dy"""
    if L <= 0:
        raise DomainError(f"box length must be positive (got {L})")
    frequency = 2.0 * max((*kernel.frequencies, 0.0)) + 2.0 * max((*kernel.scales, kernel.sinc_scale))
    return _translation_invariant_variance(lambda u: bulk_kernel(kernel, u) ** 2, L, frequency, quad)


def number_variance_alpha(alpha: AlphaLike, L: float, quad: Optional[QuadratureSpec] = None) -> float:
    """α = −1/m 极限过程的方差 L + α ∬ sinc²(απ(x − y)) dx dy"""
    if L <= 0:
        raise DomainError(f"box length must be positive (got {L})")
    a = _process_alpha(alpha)
    c = math.pi * abs(a)
    # L + α·2∫(L−u)sinc² = L − 2∫(L−u)·(−α)sinc²
    return _translation_invariant_variance(lambda u: -a * sinc(c * u) ** 2, L, 2 * c, quad)


def nv_expansion(alpha: AlphaLike, L: float, regime: Literal["small", "large"]) -> float:
    """
    方差的渐近展开

    small: L + αL² − (1/18)π²α³L⁴ + (2/675)π⁴α⁵L⁶
    large: −(1/(απ²))(ln L + ln(−2πα) + 1 + γ_E)
    """
    a = _process_alpha(alpha)
    if regime == "small":
        pi2 = math.pi ** 2
        return L + a * L ** 2 - pi2 * a ** 3 * L ** 4 / 18.0 + 2.0 * pi2 ** 2 * a ** 5 * L ** 6 / 675.0
    if regime == "large":
        if L <= 0:
            raise DomainError(f"large-L expansion needs L > 0 (got {L})")
        return -(math.log(L) + math.log(-2.0 * math.pi * a) + 1.0 + CONSTANTS.euler_gamma) / (a * math.pi ** 2)
    raise DomainError(f"unknown regime {regime!r}")


def _variance_point(kind: str, target, L: float) -> float:
    if kind == "alpha":
        return number_variance_alpha(target, L)
    if kind == "bulk":
        return number_variance_bulk(target, L)
    return number_variance_finite(target, L, rescaled=True)


def number_variance_sweep(
    L_values: Iterable[float],
    alpha: Optional[AlphaLike] = None,
    kernel: Optional[LimitKernel] = None,
    spec: Optional[BlockSpec] = None,
    workers: Optional[int] = None,
) -> list[StatSeries]:
    """
    对一组 L 并行计算方差曲线（按 L 升序输出）

    alpha → 极限曲线与两种展开；kernel → 极限核曲线；spec → 有限 M 曲线（单位密度重标度）
    """
    L_values = sorted(set(float(L) for L in L_values))
    series = []
    if alpha is not None:
        a = _process_alpha(alpha)
        values = ordered_map(partial(_variance_point, "alpha", a), L_values, workers)
        series.append(StatSeries(label="nv_alpha", x=L_values, y=values, x_unit="mean spacing", meta={"alpha": a}))
        for regime in ("small", "large"):
            series.append(
                StatSeries(
                    label=f"nv_{regime}_L",
                    x=L_values,
                    y=[nv_expansion(a, L, regime) for L in L_values],
                    x_unit="mean spacing",
                    meta={"alpha": a},
                )
            )
    if kernel is not None:
        values = ordered_map(partial(_variance_point, "bulk", kernel), L_values, workers)
        series.append(StatSeries(label=f"nv_{kernel.kind}", x=L_values, y=values, x_unit="mean spacing"))
    if spec is not None:
        values = ordered_map(partial(_variance_point, "finite", spec), L_values, workers)
        series.append(
            StatSeries(label="nv_finite", x=L_values, y=values, x_unit="mean spacing", meta={"M": spec.M})
        )
    return series


# ===== 弱收敛 =====

def _window(window) -> tuple[float, float]:
    lo, hi = (float(v) for v in window)
    if not hi > lo:
        raise DomainError(f"window must satisfy lo < hi (got {window})")
    return lo, hi


def weak_convergence_gap(
    n: int,
    kernel_a: LimitKernel,
    alpha_target: AlphaLike = -0.5,
    window: tuple[float, float] = (0.0, 1.0),
    quad: Optional[QuadratureSpec] = None,
) -> float:
    """
    |∫_{window^n} det[k_a(x_i − x_j)] dx − ∫_{window^n} det_α[sinc(π|α|(x_i − x_j))] dx|

    n = 2 化为一重积分；n = 3 利用置换对称性化为有序区域，
    再以 u = w·z、v = w·(1 − z) 映射到矩形（被积函数光滑）
    """
    a = _process_alpha(alpha_target)
    lo, hi = _window(window)
    length = hi - lo
    c = math.pi * abs(a)
    omega = max((*kernel_a.frequencies, kernel_a.sinc_scale)) + max((*kernel_a.scales, kernel_a.sinc_scale))

    def k(u):
        return bulk_kernel(kernel_a, u)

    def s(u):
        return sinc(c * u)

    if n == 2:
        def difference(u):
            return (1.0 - k(u) ** 2) - (1.0 + a * s(u) ** 2)

        integral = 2.0 * integrate_1d(
            lambda u: (length - u) * difference(u), 0.0, length, _oscillation_spec(quad, length, 2 * omega)
        )
        return abs(integral)

    if n == 3:
        def determinant(u, v):
            k1, k2, k3 = k(u), k(v), k(u + v)
            return 1.0 - k1 ** 2 - k2 ** 2 - k3 ** 2 + 2.0 * k1 * k2 * k3

        def alpha_determinant(u, v):
            s1, s2, s3 = s(u), s(v), s(u + v)
            return 1.0 + a * (s1 ** 2 + s2 ** 2 + s3 ** 2) + 2.0 * a * a * s1 * s2 * s3

        def integrand(w, z):
            u, v = w * z, w * (1.0 - z)
            return 6.0 * (length - w) * w * (determinant(u, v) - alpha_determinant(u, v))

        panels = int(math.ceil(length * 2 * omega / math.pi)) + 1
        base = quad or QuadratureSpec.default()
        spec = base.model_copy(
            update={
                "initial_panels": max(base.initial_panels, min(panels, 64)),
                "relative_tolerance": max(base.relative_tolerance, 1e-8),
                "absolute_tolerance": max(base.absolute_tolerance, 1e-9),
                "max_subdivisions": max(base.max_subdivisions, 20000),
            }
        )
        # z 方向在 [0, 1]，w 方向在 [0, L]
        return abs(integrate_2d(integrand, (0.0, length, 0.0, 1.0), spec))

    raise SizeError(f"weak_convergence_gap supports n in {{2, 3}} (got {n})")


def cos_cycle_integral(sigma: Sequence[int], omega: float, window: tuple[float, float] = (0.0, 1.0)) -> float:
    """
    ∫_{window^n} Π_i cos(ω(x_{σ(i)} − x_i)) dx（精确）

    展开 cos θ = (e^{iθ} + e^{−iθ})/2，每种符号组合分解为一维指数积分的乘积
    """
    sigma = list(sigma)
    n = len(sigma)
    if sorted(sigma) != list(range(n)):
        raise DomainError(f"{sigma} is not a permutation of 0..{n - 1}")
    if n > 6:
        raise SizeError(f"cos cycle integrals support n <= 6 (got {n})")
    lo, hi = _window(window)
    inverse = [0] * n
    for i, target in enumerate(sigma):
        inverse[target] = i

    total = 0.0 + 0.0j
    for signs in itertools.product((1, -1), repeat=n):
        term = 1.0 + 0.0j
        for j in range(n):
            coefficient = omega * (signs[inverse[j]] - signs[j])
            if coefficient == 0.0:
                term *= hi - lo
            else:
                term *= (np.exp(1j * coefficient * hi) - np.exp(1j * coefficient * lo)) / (1j * coefficient)
        total += term
    return float((total / 2 ** n).real)


def cos_cycle_limit_check(sigma: Sequence[int], omega: float, window: tuple[float, float] = (0.0, 1.0)) -> float:
    """∫ Π cos(ω(x_{σ(i)} − x_i)) 与极限 (1/2)^{n−m(σ)}·|window|^n 的偏差"""
    lo, hi = _window(window)
    n = len(sigma)
    limit = 0.5 ** (n - cycle_count(sigma)) * (hi - lo) ** n
    return cos_cycle_integral(sigma, omega, window) - limit


def poisson_limit_gap(m: int, s_values: Sequence[float], k_values: Sequence[float]) -> float:
    """
    m → ∞ 的泊松极限：sup |ρ̃₂(s) − 1| 与 sup_{k≠0} |S(k) − 1| 的较大者
    """
    alpha = -1.0 / m
    s_values = np.asarray(s_values, dtype=float)
    k_values = np.asarray([k for k in k_values if k != 0], dtype=float)
    gap_rho = float(np.max(np.abs(rho2_limit(alpha, s_values) - 1.0))) if s_values.size else 0.0
    gap_s = float(np.max(np.abs(structure_factor(alpha, k_values) - 1.0))) if k_values.size else 0.0
    return max(gap_rho, gap_s)


def scaled_sine_kernel(alpha: AlphaLike) -> LimitKernel:
    """α = −1/m 的极限核 sinc(π|α|s)"""
    a = _process_alpha(alpha)
    return scaled_sine(int(round(-1.0 / a)))
