"""
验证套件 - 每项检查输出一行 JSON：id, observed, tolerance, pass

--quick 使用缩小的规模（总计一分钟以内）；--only 选择检查 id
"""
import asyncio
import logging
import math
import sys
import time
from functools import partial
from typing import Callable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import integrate, stats

from src.core.alpha_det import alpha_corr, alpha_det_bruteforce, alpha_det_cycles, superposition_corr
from src.core.asymptotics import (
    annulus_projection_density,
    blocks_density,
    bulk_kernel,
    circular_kernel,
    cusp_kernel,
    edge_eta,
    scaled_sine,
    semicircle_density,
    single_block,
)
from src.core.fermion_kernel import density_finite, kernel_block, kernel_cd, kernel_direct, levels, rescaled_kernel
from src.core.numerics import airy, airy_array, integrate_1d
from src.core.output import render_json_lines, write_atomic
from src.core.sampler import (
    estimate_pair_correlation,
    gap_statistics,
    ks_two_sample,
    power_map,
    sample_projection_dpp,
    sample_replicates,
    sample_superposition,
)
from src.core.statistics import (
    cos_cycle_limit_check,
    nv_expansion,
    number_variance_alpha,
    number_variance_finite,
    structure_factor,
    structure_factor_numeric,
    weak_convergence_gap,
)
from src.models.schemas import CONSTANTS, BlockSpec, FourierBasis, HermiteBasis, RunConfig

logger = logging.getLogger(__name__)

VERIFY_SEED = 20240607


class CheckResult(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    id: str
    observed: Optional[float]
    tolerance: float
    passed: bool = Field(serialization_alias="pass")
    detail: str = ""
    seconds: float = 0.0

    def record(self) -> dict:
        return self.model_dump(by_alias=True, exclude={"seconds"})


Check = Callable[[bool], tuple[float, float, bool]]
CHECKS: dict[str, Check] = {}


def check(check_id: str):
    """注册检查：函数接收 quick 标志，返回 (observed, tolerance, passed)"""

    def register(fn: Check) -> Check:
        CHECKS[check_id] = fn
        return fn

    return register


def _rng(stream: int) -> np.random.Generator:
    return np.random.default_rng([VERIFY_SEED, stream])


# ===== alpha_det =====

@check("alpha_det_oracle")
def _alpha_det_oracle(quick: bool):
    rng = _rng(1)
    worst = 0.0
    for _ in range(60 if quick else 500):
        n = int(rng.integers(1, 8 if quick else 10))
        A = rng.standard_normal((n, n))
        for alpha in (-1.0, -0.5, -1.0 / 3.0, 0.0, 1.0):
            # 以各项绝对值之和为尺度
            scale = alpha_det_bruteforce(abs(alpha), np.abs(A))
            error = abs(alpha_det_cycles(alpha, A) - alpha_det_bruteforce(alpha, A))
            worst = max(worst, error / max(scale, 1e-300))
    return worst, 1e-12, worst <= 1e-12


@check("superposition_identity")
def _superposition_identity(quick: bool):
    rng = _rng(2)
    worst = 0.0
    for _ in range(20 if quick else 200):
        n = int(rng.integers(1, 7))
        m = int(rng.integers(1, 5))
        points = rng.uniform(0.0, 3.0 * m, n)
        kernel = scaled_sine(m)
        expected = alpha_corr(-1.0 / m, kernel, points)
        observed = superposition_corr(m, kernel, points)
        worst = max(worst, abs(observed - expected) / max(1.0, abs(expected)))
    return worst, 1e-11, worst <= 1e-11


# ===== fermion_kernel =====

@check("kernel_cross_check")
def _kernel_cross_check(quick: bool):
    specs = [
        BlockSpec(blocks=((0.0, 1.0),), M=50),
        BlockSpec(blocks=((1.0, 1.0),), M=100),
    ]
    if not quick:
        specs += [
            BlockSpec(blocks=((0.5, 0.5), (2.0, 0.5)), M=1500),
            BlockSpec(blocks=((3.0, 1.0),), M=600),
        ]
    rng = _rng(3)
    worst = 0.0
    for spec in specs:
        edge = 2.0 * spec.outer_radius * math.sqrt(spec.M)
        x = rng.uniform(-edge, edge, 100)
        y = rng.uniform(-edge, edge, 100)
        J = levels(spec)
        scale = np.sqrt(np.abs(kernel_direct(J, x, x) * kernel_direct(J, y, y))) + 1e-300
        error = np.abs(kernel_block(spec, x, y) - kernel_direct(J, x, y)) / scale
        worst = max(worst, float(error.max()))
    return worst, 1e-9, worst <= 1e-9


def _l1_relative(f: np.ndarray, g: np.ndarray, x: np.ndarray, mask: np.ndarray) -> float:
    return float(
        integrate.trapezoid(np.abs(f - g) * mask, x) / integrate.trapezoid(np.abs(g) * mask, x)
    )


@check("semicircle")
def _semicircle(quick: bool):
    spec = BlockSpec(blocks=((0.0, 1.0),), M=100)
    edge = 2.0 * math.sqrt(spec.N)
    x = np.linspace(-0.8 * edge, 0.8 * edge, 4001)
    error = _l1_relative(density_finite(spec, x), semicircle_density(spec.N, x), x, np.ones_like(x))
    return error, 0.02, error <= 0.02


@check("two_block_density")
def _two_block_density(quick: bool):
    spec = BlockSpec(blocks=((1.0, 1.0),), M=100)
    inner, outer = 2.0 * math.sqrt(spec.M), 4.0 * math.sqrt(spec.M)
    x = np.linspace(-0.9 * outer, 0.9 * outer, 6001)
    bulk = (np.abs(x) <= 0.8 * inner) | ((np.abs(x) >= 1.2 * inner) & (np.abs(x) <= 0.9 * outer))
    limit = blocks_density(spec, x)
    error = _l1_relative(density_finite(spec, x), limit, x, bulk.astype(float))
    identity = float(np.max(np.abs(limit - annulus_projection_density(spec, x))) / np.max(limit))
    return error, 0.03, error <= 0.03 and identity <= 1e-13


@check("bulk_kernel_convergence")
def _bulk_kernel_convergence(quick: bool):
    s = np.linspace(0.0, 4.0, 201)
    limit = bulk_kernel(single_block(5.0), s)
    gaps = []
    for M in (50, 200):
        spec = BlockSpec(blocks=((5.0, 1.0),), M=M)
        gaps.append(float(np.max(np.abs(rescaled_kernel(spec, np.zeros_like(s), s) - limit))))
    return gaps[-1], 0.02, gaps[1] < gaps[0] and gaps[1] <= 0.02


# ===== statistics =====

@check("weak_convergence")
def _weak_convergence(quick: bool):
    gaps = [weak_convergence_gap(2, single_block(a), -0.5, (0.0, 1.0)) for a in (5.0, 20.0, 80.0)]
    decreasing = all(b < a for a, b in zip(gaps, gaps[1:]))
    return gaps[-1], 0.01, decreasing and gaps[-1] <= 0.01


@check("cos_cycle")
def _cos_cycle(quick: bool):
    omega = 100.0
    transposition = cos_cycle_limit_check((1, 0), omega)
    identity_error = abs(transposition - 0.5 * math.sin(omega) ** 2 / omega ** 2)
    three_cycle = abs(cos_cycle_limit_check((1, 2, 0), 200.0))
    return three_cycle, 1e-3, identity_error <= 1e-12 and three_cycle < 1e-3


@check("cusp_continuity")
def _cusp_continuity(quick: bool):
    a = 3.0
    s = np.linspace(0.0, 5.0, 501)
    sine = bulk_kernel(single_block(0.0), s)
    deviation = float(np.max(np.abs(cusp_kernel(a, a - 1e-12, s) - sine)))
    # ω(b) − π/2 ∝ √(a − b)
    far = float(np.max(np.abs(cusp_kernel(a, a - 1e-6, s) - sine)))
    near = float(np.max(np.abs(cusp_kernel(a, a - 1e-8, s) - sine)))
    rate = far / near
    return deviation, 1e-5, deviation <= 1e-5 and 8.0 < rate < 12.5


@check("dyson_mehta")
def _dyson_mehta(quick: bool):
    L = 100.0
    expected = (math.log(L) + math.log(2 * math.pi) + 1 + CONSTANTS.euler_gamma) / math.pi ** 2
    large = abs(number_variance_alpha(-1.0, L) - expected)
    small = abs(number_variance_alpha(-1.0, 0.2) - nv_expansion(-1.0, 0.2, "small"))
    return large, 1e-3, large <= 1e-3 and small <= 1e-5


@check("structure_factor")
def _structure_factor(quick: bool):
    exact_error = 0.0
    for m in (1, 2, 3):
        c = math.pi / m
        values = [structure_factor(-1.0 / m, k) for k in (0.0, c, 2 * c, 3 * c)]
        exact_error = max(exact_error, max(abs(v - e) for v, e in zip(values, (0.0, 0.5, 1.0, 1.0))))
    worst = 0.0
    for m in (1, 2, 3):
        for k in np.linspace(0.05, 6.0 * math.pi / m, 5 if quick else 20):
            worst = max(worst, abs(structure_factor_numeric(-1.0 / m, k) - structure_factor(-1.0 / m, k)))
    return worst, 1e-6, worst <= 1e-6 and exact_error == 0.0


@check("finite_number_variance")
def _finite_number_variance(quick: bool):
    spec = BlockSpec(blocks=((10.0, 1.0),), M=20)
    worst = 0.0
    for L in ((1.0, 4.0) if quick else (1.0, 2.0, 4.0, 6.0, 8.0)):
        limit = number_variance_alpha(-0.5, L)
        worst = max(worst, abs(number_variance_finite(spec, L, rescaled=True) - limit) / limit)
    return worst, 0.10, worst <= 0.10


# ===== numerics =====

@check("airy")
def _airy(quick: bool):
    value = airy(0.0)
    constants_error = max(abs(value.ai - 0.3550280538878172), abs(value.ai_prime + 0.2588194037928068))
    x = np.linspace(-10.0, 5.0, 200)
    h = 1e-5
    _, plus = airy_array(x + h)
    _, minus = airy_array(x - h)
    ai, _ = airy_array(x)
    residual = float(np.max(np.abs((plus - minus) / (2 * h) - x * ai)))
    return residual, 1e-8, residual <= 1e-8 and constants_error <= 1e-9 and edge_eta(0.0) == 1.0


# ===== sampler =====

@check("sampler_density")
def _sampler_density(quick: bool):
    basis = HermiteBasis(levels=tuple(range(10)))
    replicates = 1000 if quick else 10000
    samples = sample_replicates(partial(sample_projection_dpp, basis), replicates, VERIFY_SEED)
    cardinality = all(s.n == 10 for s in samples)

    inner = np.linspace(-6.0, 6.0, 39)
    edges = np.concatenate([[-np.inf], inner, [np.inf]])
    points = np.concatenate([s.as_array() for s in samples])
    observed = np.histogram(points, bins=edges)[0]

    def diagonal(x):
        return kernel_cd(10, x, x)

    cuts = np.concatenate([[-20.0], inner, [20.0]])
    expected = np.array([integrate_1d(diagonal, lo, hi) for lo, hi in zip(cuts[:-1], cuts[1:])])
    expected *= observed.sum() / expected.sum()
    pvalue = float(stats.chisquare(observed, expected).pvalue)

    few = sample_replicates(partial(sample_projection_dpp, basis), 8, VERIFY_SEED + 1, workers=1)
    parallel = sample_replicates(partial(sample_projection_dpp, basis), 8, VERIFY_SEED + 1, workers=4)
    identical = all(a.positions == b.positions for a, b in zip(few, parallel))
    return pvalue, 1e-3, pvalue > 1e-3 and cardinality and identical


@check("rains_decoupling")
def _rains_decoupling(quick: bool):
    m, N = 2, 8
    replicates = 500 if quick else 10000
    big = FourierBasis(levels=tuple(range(m * N)))
    small = FourierBasis(levels=tuple(range(N)))
    powered = [
        power_map(s, m)
        for s in sample_replicates(partial(sample_projection_dpp, big), replicates, VERIFY_SEED, stream=1)
    ]
    union = sample_replicates(partial(sample_superposition, m, small), replicates, VERIFY_SEED, stream=2)

    # 每个重复取一个间距（同一样本内的间距不独立）
    _, pvalue = ks_two_sample(gap_statistics(powered)[:, 0], gap_statistics(union)[:, 0])

    edges = np.linspace(0.0, 3.0, 11)
    series = estimate_pair_correlation(powered, edges)
    rho = m * N / (2 * math.pi)
    outliers = 0
    for lo, hi, y, err in zip(edges[:-1], edges[1:], series.y, series.y_err):
        theta = np.linspace(lo, hi, 33) / rho
        predicted = float(np.mean(1.0 - m * np.asarray(circular_kernel(N, theta)) ** 2 / rho ** 2))
        if abs(y - predicted) > 3.0 * err + 1e-12:
            outliers += 1
    return pvalue, 1e-3, pvalue > 1e-3 and outliers == 0


# ===== runner =====

def run_checks(ids: Optional[list[str]] = None, quick: bool = False) -> list[CheckResult]:
    """按注册顺序运行；单项异常记为失败，不中断其余检查"""
    selected = list(CHECKS) if not ids else ids
    unknown = [i for i in selected if i not in CHECKS]
    if unknown:
        raise ValueError(f"unknown check id(s): {', '.join(unknown)} (available: {', '.join(CHECKS)})")

    results = []
    for check_id in selected:
        start = time.perf_counter()
        try:
            observed, tolerance, passed = CHECKS[check_id](quick)
            result = CheckResult(id=check_id, observed=float(observed), tolerance=tolerance, passed=bool(passed))
        except Exception as e:
            logger.exception("check %s raised", check_id)
            result = CheckResult(id=check_id, observed=None, tolerance=0.0, passed=False, detail=f"{type(e).__name__}: {e}")
        result.seconds = round(time.perf_counter() - start, 3)
        logger.info("check %s: %s (%.1fs)", check_id, "pass" if result.passed else "FAIL", result.seconds)
        results.append(result)
    return results


async def cmd_verify(config: RunConfig, stream=None) -> int:
    """运行检查，JSON lines 写到 stdout（--output 时同时写文件）；有失败时返回 1"""

    ids = [i.strip() for i in config.only.split(",") if i.strip()] if config.only else None
    results = await asyncio.to_thread(run_checks, ids, config.quick)
    content = render_json_lines(r.record() for r in results)
    (stream or sys.stdout).write(content)
    if config.output:
        await write_atomic(config.output, content)
    return 0 if all(r.passed for r in results) else 1
