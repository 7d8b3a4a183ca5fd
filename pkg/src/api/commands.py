"""
命令实现 - density / corr / nv / sk / sample

每个命令是协程：CPU 密集部分按参数切块后经进程池执行（run_ordered），
输出顺序只取决于参数值
"""
import asyncio
import logging
import math
from functools import partial

import numpy as np

from src.core.asymptotics import blocks_density, bulk_kernel, from_blocks, single_block
from src.core.executor import run_ordered
from src.core.fermion_kernel import density_finite, rescaled_kernel
from src.core.output import emit
from src.core.sampler import (
    power_map,
    sample_haar_eigenphases,
    sample_projection_dpp,
    sample_replicates,
    sample_superposition,
)
from src.core.settings import settings
from src.core.statistics import (
    number_variance_sweep,
    rho2_limit,
    structure_factor,
    structure_factor_numeric,
)
from src.models.schemas import (
    BlockSpec,
    FourierBasis,
    HermiteBasis,
    RunConfig,
    StatSeries,
    parse_grid,
    parse_levels,
)

logger = logging.getLogger(__name__)


def _workers(config: RunConfig) -> int:
    return config.workers or settings.workers


def _chunks(values: np.ndarray, workers: int) -> list[np.ndarray]:
    return [c for c in np.array_split(values, max(1, workers)) if c.size]


async def _chunked(fn, values: np.ndarray, workers: int) -> np.ndarray:
    """按块并行求值后按原顺序拼接"""
    parts = await run_ordered(fn, _chunks(values, workers), workers)
    return np.concatenate([np.atleast_1d(p) for p in parts])


# ===== density =====

async def cmd_density(config: RunConfig) -> int:
    """有限 M 单点密度与大 M 极限（多块时为嵌套半圆差，a=0 单块即半圆律）"""
    spec = config.block_spec()
    edge = 2.0 * spec.outer_radius * math.sqrt(spec.M)
    xs = parse_grid(config.grid or f"{-1.2 * edge}:{1.2 * edge}:400")
    finite = await _chunked(partial(density_finite, spec), xs, _workers(config))
    meta = {"blocks": spec.canonical(), "M": spec.M, "N": spec.N}
    series = [
        StatSeries(label="density_finite", x=xs.tolist(), y=finite.tolist(), meta=meta),
        StatSeries(label="density_limit", x=xs.tolist(), y=np.atleast_1d(blocks_density(spec, xs)).tolist(), meta=meta),
    ]
    await emit(config, series)
    return 0


# ===== corr =====

def _rho2_finite(spec: BlockSpec, s: np.ndarray) -> np.ndarray:
    """单位密度重标度的有限 M 两点函数 K̃(0,0)K̃(s,s) − K̃(0,s)²"""
    zero = np.zeros_like(s)
    return (
        rescaled_kernel(spec, zero, zero) * rescaled_kernel(spec, s, s)
        - rescaled_kernel(spec, zero, s) ** 2
    )


async def cmd_corr(config: RunConfig) -> int:
    """ρ̃₂(s)：有限 M 重标度、极限核与 α-极限曲线"""
    s = parse_grid(config.grid or "0:4:401")
    series = []
    spec = None
    if config.a is not None:
        if config.M is None:
            raise ValueError("--a needs --M")
        spec = BlockSpec(blocks=((config.a, 1.0),), M=config.M)
        kernel = single_block(config.a)
    elif config.blocks is not None:
        spec = config.block_spec()
        kernel = from_blocks(spec)
    else:
        kernel = None

    if spec is not None:
        finite = await _chunked(partial(_rho2_finite, spec), s, _workers(config))
        meta = {"blocks": spec.canonical(), "M": spec.M}
        series.append(StatSeries(label="rho2_finite", x=s.tolist(), y=finite.tolist(), x_unit="mean spacing", meta=meta))
        limit = 1.0 - np.asarray(bulk_kernel(kernel, s)) ** 2
        series.append(
            StatSeries(label=f"rho2_{kernel.kind}", x=s.tolist(), y=limit.tolist(), x_unit="mean spacing", meta=meta)
        )

    alpha = config.alpha_value(default=None if kernel is None else f"-1/{kernel.m}")
    series.append(
        StatSeries(
            label="rho2_alpha",
            x=s.tolist(),
            y=np.atleast_1d(rho2_limit(float(alpha), s)).tolist(),
            x_unit="mean spacing",
            meta={"alpha": str(alpha)},
        )
    )
    await emit(config, series)
    return 0


# ===== nv =====

async def cmd_nv(config: RunConfig) -> int:
    """粒子数方差：α-极限、两种展开，可选极限核与有限 M 曲线"""
    L_values = parse_grid(config.L_list or "0.1:100:log50")
    spec = config.block_spec() if config.blocks is not None else None
    kernel = from_blocks(spec) if spec is not None else None
    if config.alpha is None and spec is None:
        raise ValueError("nv needs --alpha or --blocks/--M")
    alpha = float(config.alpha_value()) if config.alpha is not None else None

    series = await asyncio.to_thread(
        number_variance_sweep,
        L_values,
        alpha=alpha,
        kernel=kernel,
        spec=spec,
        workers=_workers(config),
    )
    await emit(config, series)
    return 0


# ===== sk =====

async def cmd_sk(config: RunConfig) -> int:
    """结构因子 S(k)；--numeric 追加由 h(r) 数值 Fourier 变换得到的列"""
    alpha = float(config.alpha_value())
    kink = 2.0 * math.pi * abs(alpha)
    k = parse_grid(config.grid or f"0:{3.0 * kink}:301")
    series = [
        StatSeries(
            label="S_exact", x=k.tolist(), y=np.atleast_1d(structure_factor(alpha, k)).tolist(), meta={"alpha": alpha}
        )
    ]
    if config.numeric:
        values = await run_ordered(partial(structure_factor_numeric, alpha), k.tolist(), _workers(config))
        series.append(StatSeries(label="S_numeric", x=k.tolist(), y=values, meta={"alpha": alpha}))
    await emit(config, series)
    return 0


# ===== sample =====

def _basis(config: RunConfig):
    if config.basis == "fourier":
        return FourierBasis(levels=parse_levels(config.levels or "0:10"))
    if config.levels is not None:
        return HermiteBasis(levels=parse_levels(config.levels))
    if config.blocks is not None:
        return HermiteBasis.from_blocks(config.block_spec())
    return HermiteBasis(levels=parse_levels("0:10"))


async def cmd_sample(config: RunConfig) -> int:
    """
    样本转储，每个重复一行

    --m 叠加 m 个独立过程；--haar 用 QR 抽取 Haar 酉矩阵本征相位（规模为能级数）；
    --power 对圆周样本做幂映射
    """
    basis = _basis(config)
    if config.haar:
        sampler_fn = partial(sample_haar_eigenphases, len(basis.levels))
    elif config.m > 1:
        sampler_fn = partial(sample_superposition, config.m, basis)
    else:
        sampler_fn = partial(sample_projection_dpp, basis)

    samples = await asyncio.to_thread(
        sample_replicates, sampler_fn, config.replicates, config.seed, 0, _workers(config)
    )
    if config.power > 1:
        samples = [power_map(s, config.power) for s in samples]
    logger.info("sampled %d replicates of %d points", len(samples), samples[0].n if samples else 0)
    await emit(config, [], samples)
    return 0


COMMANDS = {
    "density": cmd_density,
    "corr": cmd_corr,
    "nv": cmd_nv,
    "sk": cmd_sk,
    "sample": cmd_sample,
}
