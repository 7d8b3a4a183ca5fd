"""
投影行列式过程的精确采样与经验估计

顺序条件采样：第 i 步的条件密度为
    p_i(t) = (‖φ(t)‖² − Σ_{l<i} |⟨w_l, φ(t)⟩|²) / (N − i)
其中 w_l 是已抽取点的特征向量经 Gram–Schmidt 得到的正交基。
每一步对分段常数包络（4096 格）做拒绝采样。

随机流：重复 r 使用子流 (stream, r)，叠加中的第 g 个分量使用 (stream, r, g)，
因此结果与并行度无关。
"""
import logging
import math
from functools import lru_cache, partial
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import stats

from src.core.errors import DomainError, SamplerError, SizeError
from src.core.executor import ordered_map
from src.core.fermion_kernel import psi_matrix
from src.models.schemas import FourierBasis, HermiteBasis, PointSample, RngContract, StatSeries

logger = logging.getLogger(__name__)

ENVELOPE_CELLS = 4096
ALLOWED_PADDING = 1.1
# 经典允许区外 ψ_k² 的衰减尾部
TAIL_MARGIN = 6.0
MAX_LEVELS = 200
MAX_TRIALS = 10**6
NEGATIVE_TOLERANCE = 1e-10
ENVELOPE_FACTOR = 1.5
REFINED_FACTOR = 1.1
# 连续拒绝次数达到此值（拒绝率 > 90%）后收紧包络
REFINE_AFTER = 1000
BATCH = 64

TWO_PI = 2.0 * math.pi

Basis = Union[HermiteBasis, FourierBasis]
SamplerFn = Callable[[RngContract, int], PointSample]


def _domain(basis: Basis) -> tuple[str, float, float]:
    """(domain, lo, hi)；直线上为 ±1.1·2√(k_max+1) 再加尾部余量"""
    if isinstance(basis, FourierBasis):
        return "circle", 0.0, TWO_PI
    half = ALLOWED_PADDING * 2.0 * math.sqrt(max(basis.levels) + 1) + TAIL_MARGIN
    return "line", -half, half


def _features(basis: Basis, t: np.ndarray) -> np.ndarray:
    """特征向量 φ(t)，shape (N, len(t))"""
    if isinstance(basis, FourierBasis):
        k = np.asarray(basis.levels, dtype=float)
        return np.exp(1j * np.multiply.outer(k, t)) / math.sqrt(TWO_PI)
    return psi_matrix(basis.levels, t)


@lru_cache(maxsize=32)
def _grid_features(basis: Basis) -> np.ndarray:
    """包络网格（端点与中点交错，共 2·4096 + 1 个点）上的特征向量"""
    _, lo, hi = _domain(basis)
    features = _features(basis, np.linspace(lo, hi, 2 * ENVELOPE_CELLS + 1))
    features.setflags(write=False)
    return features


class _Envelope:
    """分段常数包络：每格取两端点与中点密度的最大值乘以放大因子"""

    def __init__(self, lo: float, hi: float, density: np.ndarray, factor: float):
        peak = float(np.max(density))
        if not math.isfinite(peak) or peak <= 0.0:
            raise SamplerError("envelope construction failed", {"peak": peak})
        samples = np.stack([density[0:-1:2], density[1::2], density[2::2]])
        self.lo = lo
        self.width = (hi - lo) / ENVELOPE_CELLS
        self.factor = factor
        self.heights = factor * samples.max(axis=0) + 1e-12 * peak
        self.cdf = np.cumsum(self.heights)

    @property
    def mass(self) -> float:
        return float(self.cdf[-1] * self.width)

    def propose(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
        cells = np.searchsorted(self.cdf, rng.random(size) * self.cdf[-1], side="right")
        cells = np.minimum(cells, ENVELOPE_CELLS - 1)
        return self.lo + (cells + rng.random(size)) * self.width, cells


def _remaining(features: np.ndarray, basis_vectors: list[np.ndarray]) -> np.ndarray:
    """‖φ(t)‖² − Σ_l |⟨w_l, φ(t)⟩|²"""
    values = np.sum(np.abs(features) ** 2, axis=0)
    for w in basis_vectors:
        values = values - np.abs(np.conj(w) @ features) ** 2
    return values


def _draw_step(
    basis: Basis,
    rng: np.random.Generator,
    grid_density: np.ndarray,
    basis_vectors: list[np.ndarray],
    step: int,
) -> float:
    _, lo, hi = _domain(basis)
    scale = max(float(np.max(grid_density)), 1.0)
    if np.min(grid_density) < -NEGATIVE_TOLERANCE * scale:
        raise SamplerError(
            "envelope construction failed: negative conditional density",
            {"step": step, "min": float(np.min(grid_density))},
        )
    clipped = np.maximum(grid_density, 0.0)
    envelope = _Envelope(lo, hi, clipped, ENVELOPE_FACTOR)

    trials = 0
    rejected_run = 0
    while trials < MAX_TRIALS:
        points, cells = envelope.propose(rng, BATCH)
        bounds = envelope.heights[cells]
        density = _remaining(_features(basis, points), basis_vectors)
        u = rng.random(BATCH)
        trials += BATCH

        accept = u * bounds < density
        violated = density > bounds
        first_accept = int(np.argmax(accept)) if accept.any() else BATCH
        first_violation = int(np.argmax(violated)) if violated.any() else BATCH

        if first_violation < BATCH and first_violation <= first_accept:
            logger.debug(
                "envelope violated at t=%.6g (step %d), factor %.2f -> %.2f",
                points[first_violation], step, envelope.factor, 2.0 * envelope.factor,
            )
            envelope = _Envelope(lo, hi, clipped, 2.0 * envelope.factor)
            rejected_run = 0
            continue
        if first_accept < BATCH:
            return float(points[first_accept])

        rejected_run += BATCH
        if rejected_run >= REFINE_AFTER and envelope.factor > REFINED_FACTOR:
            logger.debug("step %d: %d consecutive rejections, refining envelope", step, rejected_run)
            envelope = _Envelope(lo, hi, clipped, REFINED_FACTOR)
            rejected_run = 0

    raise SamplerError(
        "rejection sampling stalled",
        {"step": step, "trials": trials, "envelope_mass": envelope.mass, "factor": envelope.factor},
    )


def _draw_positions(basis: Basis, generator: np.random.Generator) -> list[float]:
    """一次完整的顺序条件采样，返回 N 个点（未排序）"""
    grid_features = _grid_features(basis)
    grid_density = np.sum(np.abs(grid_features) ** 2, axis=0)
    basis_vectors: list[np.ndarray] = []
    positions = []
    for step in range(len(basis.levels)):
        t = _draw_step(basis, generator, grid_density, basis_vectors, step)
        positions.append(t)

        # 两遍 Gram–Schmidt
        w = _features(basis, np.array([t]))[:, 0]
        for _ in range(2):
            for v in basis_vectors:
                w = w - (np.conj(v) @ w) * v
        norm = float(np.linalg.norm(w))
        if not norm > 0.0:
            raise SamplerError("degenerate feature vector", {"step": step, "t": t})
        w = w / norm
        basis_vectors.append(w)
        grid_density = grid_density - np.abs(np.conj(w) @ grid_features) ** 2
    return positions


def _point_sample(positions: list[float], domain: str, rng: RngContract, replicate_index: int) -> PointSample:
    if domain == "circle":
        positions = [p - TWO_PI if p >= TWO_PI else p for p in positions]
    positions = sorted(positions)
    return PointSample(
        positions=tuple(positions), domain=domain, n=len(positions), seed=rng.seed, replicate_index=replicate_index
    )


def _check_size(basis: Basis) -> None:
    if len(basis.levels) > MAX_LEVELS:
        raise SizeError(f"sampler supports at most {MAX_LEVELS} levels (got {len(basis.levels)})")


def sample_projection_dpp(basis: Basis, rng: RngContract, replicate_index: int = 0) -> PointSample:
    """
    精确抽取核为 Σ_{k∈J} φ̄_k(x)φ_k(y) 的投影行列式过程

    Args:
        basis: HermiteBasis（直线）或 FourierBasis（圆周）
        rng: 随机流契约
        replicate_index: 重复编号

    Raises:
        SizeError: |J| > 200
        SamplerError: 包络构造失败或拒绝采样停滞
    """
    _check_size(basis)
    domain, _, _ = _domain(basis)
    positions = _draw_positions(basis, rng.generator(replicate_index))
    return _point_sample(positions, domain, rng, replicate_index)


def sample_superposition(m: int, basis: Basis, rng: RngContract, replicate_index: int = 0) -> PointSample:
    """m 个独立投影过程之并（α = −1/m 过程的有限 N 版本），n = m·|J|"""
    if m < 1:
        raise DomainError(f"superposition needs m >= 1 (got {m})")
    _check_size(basis)
    domain, _, _ = _domain(basis)
    positions: list[float] = []
    for g in range(m):
        positions.extend(_draw_positions(basis, rng.generator(replicate_index, g)))
    return _point_sample(positions, domain, rng, replicate_index)


def sample_haar_eigenphases(n: int, rng: RngContract, replicate_index: int = 0) -> PointSample:
    """
    Haar 酉矩阵 U(n) 的本征相位：复 Ginibre 矩阵 QR 分解后按 R 的对角相位修正
    """
    if n < 1:
        raise DomainError(f"matrix size must be >= 1 (got {n})")
    generator = rng.generator(replicate_index)
    z = (generator.standard_normal((n, n)) + 1j * generator.standard_normal((n, n))) / math.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    q = q * (d / np.abs(d))
    phases = np.mod(np.angle(np.linalg.eigvals(q)), TWO_PI)
    return _point_sample(phases.tolist(), "circle", rng, replicate_index)


def power_map(sample: PointSample, m: int) -> PointSample:
    """
    θ ↦ m·θ mod 2π（重新排序）

    对 U(mN) 的本征相位，像与 m 个独立 U(N) 谱之并同分布；要求 m | n 且 m ≤ N = n/m

    Raises:
        DomainError: 直线样本，或 m 不满足上述条件
    """
    if sample.domain != "circle":
        raise DomainError("power map is defined for circle samples only")
    if m < 1:
        raise DomainError(f"power must be >= 1 (got {m})")
    if m > 1 and (sample.n % m != 0 or m > sample.n // m):
        raise DomainError(f"power map needs m | n and m <= n/m (got m={m}, n={sample.n})")
    phases = np.mod(m * sample.as_array(), TWO_PI)
    return sample.model_copy(update={"positions": tuple(sorted(p - TWO_PI if p >= TWO_PI else p for p in phases))})


def _replicate(sampler_fn: SamplerFn, rng: RngContract, replicate_index: int) -> PointSample:
    return sampler_fn(rng, replicate_index)


def sample_replicates(
    sampler_fn: SamplerFn,
    replicates: int,
    seed: int,
    stream: int = 0,
    workers: Optional[int] = None,
) -> list[PointSample]:
    """
    按重复编号顺序生成样本（任意 worker 数下逐位相同）

    Args:
        sampler_fn: (rng, replicate_index) -> PointSample，须可 pickle，
            例如 partial(sample_projection_dpp, basis)
    """
    rng = RngContract(seed=seed, stream=stream)
    samples = ordered_map(partial(_replicate, sampler_fn, rng), range(replicates), workers)
    logger.debug("generated %d replicates (seed=%d, stream=%d)", replicates, seed, stream)
    return samples


# ===== 经验估计 =====

def _check_samples(samples: Sequence[PointSample]) -> str:
    if not samples:
        raise DomainError("empty sample list")
    domains = {s.domain for s in samples}
    if len(domains) != 1:
        raise DomainError("samples mix line and circle domains")
    return domains.pop()


def _sem(values: np.ndarray) -> np.ndarray:
    """按重复计算的标准误（单个重复时为 0）"""
    if values.shape[0] < 2:
        return np.zeros(values.shape[1:])
    return values.std(axis=0, ddof=1) / math.sqrt(values.shape[0])


def estimate_density(samples: Sequence[PointSample], bins: Sequence[float]) -> StatSeries:
    """每个重复的期望计数密度直方图，y_err 为逐格标准误"""
    domain = _check_samples(samples)
    edges = np.asarray(bins, dtype=float)
    widths = np.diff(edges)
    counts = np.stack([np.histogram(s.as_array(), bins=edges)[0] for s in samples]).astype(float)
    per_length = counts / widths
    return StatSeries(
        label="density_empirical",
        x=(0.5 * (edges[:-1] + edges[1:])).tolist(),
        y=per_length.mean(axis=0).tolist(),
        y_err=_sem(per_length).tolist(),
        meta={"replicates": len(samples), "domain": domain},
    )


def _pair_separations(points: np.ndarray, domain: str) -> np.ndarray:
    i, j = np.triu_indices(points.size, k=1)
    separations = np.abs(points[i] - points[j])
    if domain == "circle":
        separations = np.minimum(separations, TWO_PI - separations)
    return separations


def estimate_pair_correlation(
    samples: Sequence[PointSample],
    bins: Sequence[float],
    window: Optional[tuple[float, float]] = None,
    density: Optional[float] = None,
) -> StatSeries:
    """
    距离直方图估计 ρ̃₂(s)（单位密度重标度，s 以平均间距为单位）

    直线：只统计 window 内的点对，边缘修正 |W| − d；圆周：周期距离，全圆。
    density 缺省时取 window 内的平均密度。

    Raises:
        DomainError: 空样本或某样本少于 2 个点
    """
    domain = _check_samples(samples)
    if any(s.n < 2 for s in samples):
        raise DomainError("pair correlation needs at least 2 points per sample")
    if domain == "circle":
        lo, hi = 0.0, TWO_PI
    else:
        lo, hi = window if window is not None else (min(s.positions[0] for s in samples), max(s.positions[-1] for s in samples))
    length = hi - lo

    selected = [s.as_array()[(s.as_array() >= lo) & (s.as_array() < hi)] for s in samples]
    rho = density if density is not None else float(np.mean([p.size for p in selected])) / length
    edges = np.asarray(bins, dtype=float)
    centers = 0.5 * (edges[:-1] + edges[1:])
    distance = centers / rho
    exposure = np.full_like(centers, length) if domain == "circle" else length - distance
    if np.any(exposure <= 0):
        raise DomainError("separation bins exceed the window length")

    counts = np.stack([np.histogram(_pair_separations(p, domain) * rho, bins=edges)[0] for p in selected])
    # 无序点对期望数 = ρ² g(d) Δd (|W| − d)
    g = counts / (rho ** 2 * (np.diff(edges) / rho) * exposure)
    return StatSeries(
        label="rho2_empirical",
        x=centers.tolist(),
        y=g.mean(axis=0).tolist(),
        y_err=_sem(g).tolist(),
        x_unit="mean spacing",
        meta={"replicates": len(samples), "density": rho, "window": [lo, hi]},
    )


def estimate_number_variance(
    samples: Sequence[PointSample],
    L_list: Sequence[float],
    center: Optional[float] = None,
    density: Optional[float] = None,
) -> StatSeries:
    """
    居中盒子计数的样本方差与 jackknife 误差

    density 给定时 L 以平均间距为单位（盒长 L/density）；圆周上盒子是周期的
    """
    domain = _check_samples(samples)
    center = (math.pi if domain == "circle" else 0.0) if center is None else center
    L_values = sorted({float(L) for L in L_list})
    R = len(samples)

    counts = np.zeros((R, len(L_values)))
    for r, sample in enumerate(samples):
        offsets = sample.as_array() - center
        if domain == "circle":
            offsets = np.mod(offsets + math.pi, TWO_PI) - math.pi
        distance = np.abs(offsets)
        for i, L in enumerate(L_values):
            half = 0.5 * (L / density if density else L)
            counts[r, i] = np.count_nonzero(distance < half)

    variance = counts.var(axis=0, ddof=1) if R > 1 else np.zeros(len(L_values))
    errors = np.zeros(len(L_values))
    if R > 2:
        # 留一法方差
        total = counts.sum(axis=0)
        total_sq = (counts ** 2).sum(axis=0)
        loo_mean = (total - counts) / (R - 1)
        loo_var = ((total_sq - counts ** 2) - (R - 1) * loo_mean ** 2) / (R - 2)
        errors = np.sqrt((R - 1) / R * np.sum((loo_var - loo_var.mean(axis=0)) ** 2, axis=0))
    return StatSeries(
        label="nv_empirical",
        x=L_values,
        y=variance.tolist(),
        y_err=errors.tolist(),
        x_unit="mean spacing" if density else "length",
        meta={"replicates": R, "center": center},
    )


def gap_statistics(samples: Sequence[PointSample]) -> np.ndarray:
    """
    归一化相邻间距矩阵，shape (R, gaps)

    圆周包含跨 2π 的间距并除以 2π/n；直线除以样本自身的平均间距
    """
    domain = _check_samples(samples)
    if len({s.n for s in samples}) != 1 or samples[0].n < 2:
        raise DomainError("gap statistics need equal sample sizes with at least 2 points")
    rows = []
    for sample in samples:
        points = sample.as_array()
        if domain == "circle":
            gaps = np.diff(np.append(points, points[0] + TWO_PI))
            rows.append(gaps * sample.n / TWO_PI)
        else:
            gaps = np.diff(points)
            rows.append(gaps / gaps.mean())
    return np.stack(rows)


def nearest_neighbor_spacings(samples: Sequence[PointSample], scale: Optional[float] = None) -> np.ndarray:
    """
    所有样本的相邻间距（展平）

    scale 给定时间距乘以 scale（例如局部密度），否则按 gap_statistics 归一化
    """
    domain = _check_samples(samples)
    if scale is None:
        return gap_statistics(samples).ravel()
    pieces = []
    for sample in samples:
        points = sample.as_array()
        if domain == "circle":
            points = np.append(points, points[0] + TWO_PI)
        pieces.append(np.diff(points) * scale)
    return np.concatenate(pieces)


def ks_two_sample(first: np.ndarray, second: np.ndarray) -> tuple[float, float]:
    """两样本 Kolmogorov–Smirnov 统计量与 p 值"""
    result = stats.ks_2samp(np.asarray(first).ravel(), np.asarray(second).ravel())
    return float(result.statistic), float(result.pvalue)
