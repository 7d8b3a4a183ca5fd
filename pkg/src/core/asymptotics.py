"""
M → ∞ 闭式对象 - 极限密度、平移不变极限核、尖点族、Airy 边缘核与圆周核

长度单位：密度函数使用振子单位 x；极限核使用单位密度下的间距 s
"""
import logging
import math
from typing import Iterable, Sequence, Union

import numpy as np
from pydantic import ValidationError

from src.core.errors import DomainError
from src.core.numerics import airy_array
from src.models.schemas import BlockSpec, CuspParams, LimitKernel

logger = logging.getLogger(__name__)

# |s| 小于该值时直接取 k(0) = 1
SMALL_SEPARATION = 1e-8
DIAGONAL_RADIUS = 1e-6

ArrayLike = Union[float, np.ndarray]


def _out(values, *inputs):
    if all(np.ndim(v) == 0 for v in inputs):
        return float(values)
    return values


def sinc(t) -> np.ndarray:
    """sin(t)/t，sinc(0) = 1"""
    return np.sinc(np.asarray(t, dtype=float) / math.pi)


# ===== 密度 =====

def semicircle_density(N: int, x) -> ArrayLike:
    """半圆律 (1/2π)√((4N − x²)₊)"""
    x_arr = np.asarray(x, dtype=float)
    return _out(np.sqrt(np.maximum(4.0 * N - x_arr ** 2, 0.0)) / (2.0 * math.pi), x)


def blocks_density(spec: BlockSpec, x) -> ArrayLike:
    """
    多块单点密度的大 M 极限

        (1/2π) Σ_j [√((4(a_j+w_j)²M − x²)₊) − √((4a_j²M − x²)₊)]
    """
    x2 = np.asarray(x, dtype=float) ** 2
    total = np.zeros_like(x2)
    for a, w in spec.blocks:
        total += np.sqrt(np.maximum(4.0 * (a + w) ** 2 * spec.M - x2, 0.0))
        total -= np.sqrt(np.maximum(4.0 * a * a * spec.M - x2, 0.0))
    return _out(total / (2.0 * math.pi), x)


def annulus_projection_density(spec: BlockSpec, x) -> ArrayLike:
    """
    相空间嵌套圆环 a_j²M < p² + x²/4 < (a_j+w_j)²M 上均匀密度的 x 投影

    每单位相空间面积权重 1/(2π)，积分为 N
    """
    x_arr = np.asarray(x, dtype=float)
    quarter = x_arr ** 2 / 4.0
    measure = np.zeros_like(x_arr)
    for a, w in spec.blocks:
        outer = np.sqrt(np.maximum((a + w) ** 2 * spec.M - quarter, 0.0))
        inner = np.sqrt(np.maximum(a * a * spec.M - quarter, 0.0))
        # {p : inner < |p| < outer} 的长度
        measure += 2.0 * (outer - inner)
    return _out(measure / (2.0 * math.pi), x)


def arcsine_density(a: float, M: int, x) -> ArrayLike:
    """
    高激发块的反正弦律 (1/π)(2a+1)M / √(4a²M − x²)，支撑外为 0

    端点处发散（可积奇点），返回 inf
    """
    if a <= 0:
        raise DomainError(f"arcsine law needs a > 0 (got {a})")
    x_arr = np.asarray(x, dtype=float)
    gap = 4.0 * a * a * M - x_arr ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.where(gap > 0, (2 * a + 1) * M / (math.pi * np.sqrt(np.where(gap > 0, gap, 1.0))), 0.0)
        values = np.where(gap == 0, np.inf, values)
    return _out(values, x)


def cumulative_arcsine(a: float, M: int, x) -> ArrayLike:
    """累积粒子数 ((2a+1)M/π)[π/2 + arcsin(x/(2a√M))]，截断在 [0, N]"""
    if a <= 0:
        raise DomainError(f"arcsine law needs a > 0 (got {a})")
    N = (2 * a + 1) * M
    ratio = np.clip(np.asarray(x, dtype=float) / (2.0 * a * math.sqrt(M)), -1.0, 1.0)
    values = np.clip(N / math.pi * (0.5 * math.pi + np.arcsin(ratio)), 0.0, N)
    return _out(values, x)


# ===== 极限核构造 =====

def pure_sine() -> LimitKernel:
    return LimitKernel(kind="pure_sine", m=1, sinc_scale=math.pi, constant=1.0)


def scaled_sine(m: int) -> LimitKernel:
    """sin(π|α|s)/(π|α|s)，α = −1/m"""
    return LimitKernel(kind="scaled_sine", m=m, sinc_scale=math.pi / m, constant=1.0)


def single_block(a: float) -> LimitKernel:
    """单块 [a²M, (a+1)²M)：sinc(πs/2)·cos(ωs)，ω = π(a + 1/2)"""
    if a < 0:
        raise DomainError(f"single_block needs a >= 0 (got {a})")
    if a == 0:
        # sinc(πs/2)cos(πs/2) = sinc(πs)
        return pure_sine().model_copy(update={"a": 0.0})
    half = math.pi / 2.0
    return LimitKernel(
        kind="single_block", m=2, sinc_scale=half,
        frequencies=(math.pi * (a + 0.5),), weights=(1.0,), scales=(half,), a=a,
    )


def even_type(a_values: Sequence[float], w: float) -> LimitKernel:
    """
    偶型 B 块（等宽 w，a_0 > 0），α = −1/(2B)

        k(s) = sinc(πs/2B) · (1/B) Σ_j cos(ω_j s)，ω_j = π(2a_j + w)/(2wB)
    """
    B = len(a_values)
    if B < 1 or w <= 0 or min(a_values) <= 0:
        raise DomainError("even type needs B >= 1 blocks, w > 0 and a_j > 0")
    scale = math.pi / (2 * B)
    return LimitKernel(
        kind="even_type", m=2 * B, sinc_scale=scale,
        frequencies=tuple(math.pi * (2 * a + w) / (2 * w * B) for a in a_values),
        weights=(1.0 / B,) * B, scales=(scale,) * B,
    )


def odd_type(a_values: Sequence[float], w: float) -> LimitKernel:
    """
    奇型：首块 [0, (w/2)²M) 加 B−1 个宽 w 的块（a_values 为后者），α = −1/(2B−1)

        k(s) = sinc(πs/(2B−1)) · (1/(B−½)) (½ + Σ_{j≥1} cos(ω_j s))
        ω_j = π(2a_j + w)/(2w(B−½))
    """
    B = len(a_values) + 1
    if w <= 0:
        raise DomainError(f"odd type needs w > 0 (got {w})")
    scale = math.pi / (2 * B - 1)
    norm = 1.0 / (B - 0.5)
    return LimitKernel(
        kind="odd_type", m=2 * B - 1, sinc_scale=scale,
        frequencies=tuple(math.pi * (2 * a + w) / (2 * w * (B - 0.5)) for a in a_values),
        weights=(norm,) * (B - 1), scales=(scale,) * (B - 1), constant=0.5 * norm,
    )


def multi_block(blocks: Iterable[tuple[float, float]]) -> LimitKernel:
    """
    任意块列表的体极限

        k(s) = Σ_j (w_j/R) sinc(πw_j s/(2R)) cos(π(2a_j + w_j) s/(2R))

    一般不是 α-行列式过程；m 取使 ρ̃₂(0) 的余弦平均值匹配的最近整数
    """
    blocks = list(blocks)
    R = sum(w for _, w in blocks)
    weights = tuple(w / R for _, w in blocks)
    contact = sum(
        (1.0 if a == 0 else 0.5) * weight ** 2 for (a, _), weight in zip(blocks, weights)
    )
    m = max(1, round(1.0 / contact))
    return LimitKernel(
        kind="multi_block", m=m, sinc_scale=math.pi / m,
        frequencies=tuple(math.pi * (2 * a + w) / (2 * R) for a, w in blocks),
        weights=weights,
        scales=tuple(math.pi * w / (2 * R) for _, w in blocks),
    )


def from_blocks(spec: BlockSpec) -> LimitKernel:
    """按块结构选择 pure_sine / single_block / even_type / odd_type / multi_block"""
    blocks = spec.blocks
    widths = [w for _, w in blocks]
    if spec.B == 1:
        a, w = blocks[0]
        return single_block(a / w)
    if blocks[0][0] > 0 and all(math.isclose(w, widths[0], rel_tol=1e-12) for w in widths):
        return even_type([a for a, _ in blocks], widths[0])
    w = widths[1]
    if (
        blocks[0][0] == 0
        and math.isclose(widths[0], w / 2, rel_tol=1e-12)
        and all(math.isclose(x, w, rel_tol=1e-12) for x in widths[1:])
    ):
        return odd_type([a for a, _ in blocks[1:]], w)
    return multi_block(blocks)


def bulk_kernel(kernel: LimitKernel, s) -> ArrayLike:
    """
    极限核 k(s)

        k(s) = constant·sinc(sinc_scale·s) + Σ_j weights_j sinc(scales_j s) cos(ω_j s)

    |s| < 1e-8 时取 k(0) = 1
    """
    s_arr = np.asarray(s, dtype=float)
    values = kernel.constant * sinc(kernel.sinc_scale * s_arr)
    for weight, scale, omega in zip(kernel.weights, kernel.scales, kernel.frequencies):
        values = values + weight * sinc(scale * s_arr) * np.cos(omega * s_arr)
    values = np.where(np.abs(s_arr) < SMALL_SEPARATION, 1.0, values)
    return _out(values, s)


# ===== 尖点与边缘 =====

def cusp_omega(a: float, b: float) -> float:
    """
    尖点前频率 ω(b) = (π/2)(√((a+1)²−b²) + √(a²−b²)) / (√((a+1)²−b²) − √(a²−b²))

    ω(0) = π(a + 1/2)，b → a 时单调下降到 π/2
    """
    if not (0 <= b <= a):
        raise DomainError(f"cusp frequency needs 0 <= b <= a (got a={a}, b={b})")
    outer = math.sqrt((a + 1) ** 2 - b * b)
    inner = math.sqrt(max(a * a - b * b, 0.0))
    return 0.5 * math.pi * (outer + inner) / (outer - inner)


def cusp_params(a: float, b: float, tau: float = 0.0) -> CuspParams:
    """
    校验后的尖点参数（c 与 eta 为派生量）

    Raises:
        DomainError: a ≤ 0、b ∉ [0, a+1) 或 tau < 0
    """
    try:
        return CuspParams(a=a, b=b, tau=tau)
    except ValidationError as e:
        raise DomainError(f"invalid cusp parameters a={a}, b={b}, tau={tau}: {e.errors()[0]['msg']}") from None


def cusp_limit(a: float, b: float) -> LimitKernel:
    """位置 x0 = 2b√M 处的极限核；b ∈ (a, a+1) 为纯正弦核"""
    params = cusp_params(a, b)
    if params.b > params.a:
        return pure_sine().model_copy(update={"a": a, "b": b})
    half = math.pi / 2.0
    return LimitKernel(
        kind="cusp", m=2, sinc_scale=half,
        frequencies=(cusp_omega(a, b),), weights=(1.0,), scales=(half,), a=a, b=b,
    )


def cusp_kernel(a: float, b: float, s) -> ArrayLike:
    """
    尖点族核 sinc(πs/2)·cos(ω(b)s)（0 ≤ b ≤ a），b ∈ (a, a+1) 时为 sin(πs)/(πs)

    Raises:
        DomainError: b < 0 或 b ≥ a + 1（支撑外）
    """
    return bulk_kernel(cusp_limit(a, b), s)


def crossover_c(tau: float) -> float:
    """b² = a² − 2τa、a → ∞ 时 ω → cπ/2，c = (1+t)/(1−t)，t = √(τ/(1+τ))"""
    if tau < 0:
        raise DomainError(f"tau must be >= 0 (got {tau})")
    t = math.sqrt(tau / (1.0 + tau))
    return (1.0 + t) / (1.0 - t)


def edge_eta(a: float) -> float:
    """η = (a+1)^{1/3} / (2a+1)^{1/6}"""
    if a < 0:
        raise DomainError(f"edge constant needs a >= 0 (got {a})")
    return (a + 1.0) ** (1.0 / 3.0) / (2.0 * a + 1.0) ** (1.0 / 6.0)


def edge_kernel(a: float, x, y) -> ArrayLike:
    """
    重标度 Airy 核 [Ai(ηx)Ai'(ηy) − Ai'(ηx)Ai(ηy)] / (x − y)

    |x − y| < 1e-6 时在中点取对角形式 η[Ai'(ηx)² − ηx Ai(ηx)²]
    """
    eta = edge_eta(a)
    X, Y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    ai_x, aip_x = airy_array(eta * X)
    ai_y, aip_y = airy_array(eta * Y)
    mid = 0.5 * (X + Y)
    ai_m, aip_m = airy_array(eta * mid)

    diff = X - Y
    diagonal = np.abs(diff) < DIAGONAL_RADIUS
    off = (ai_x * aip_y - aip_x * ai_y) / np.where(diagonal, 1.0, diff)
    on = eta * (aip_m ** 2 - eta * mid * ai_m ** 2)
    return _out(np.where(diagonal, on, off), x, y)


# ===== 圆周 =====

def circular_kernel(n: int, z) -> ArrayLike:
    """
    S_n(z) = (1/2π) sin(nz/2) / sin(z/2)，z → 0 的极限为 n/(2π)

    与 (1/2π) Σ_{k<n} e^{ikz} 只差一个相位，行列式相同
    """
    if n < 1:
        raise DomainError(f"circular kernel needs n >= 1 (got {n})")
    z_arr = np.asarray(z, dtype=float)
    denom = np.sin(0.5 * z_arr)
    near = np.abs(denom) < 1e-12
    regular = np.sin(0.5 * n * z_arr) / np.where(near, 1.0, denom)
    # 洛必达
    limit = n * np.cos(0.5 * n * z_arr) / np.cos(0.5 * z_arr)
    return _out(np.where(near, limit, regular) / (2.0 * math.pi), z)


def fourier_kernel(J: Iterable[int], z) -> np.ndarray:
    """圆周块核 (1/2π) Σ_{k∈J} e^{ikz}（复值）"""
    J = np.asarray(list(J), dtype=float)
    z_arr = np.asarray(z, dtype=float)
    phases = np.exp(1j * np.multiply.outer(z_arr, J))
    return phases.sum(axis=-1) / (2.0 * math.pi)
