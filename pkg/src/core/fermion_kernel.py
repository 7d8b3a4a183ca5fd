"""
有限 M 对象 - Hermite 波函数 ψ_k、块投影核 K_J 与单点密度

ψ_k 采用缩放三项递推（高斯因子折叠进递推），每个求值点带一个对数尺度，
k ~ 10^6、ψ_0 下溢的区域仍然正确。
"""
import logging
import math
from typing import Iterable, Union

import numpy as np

from src.core.asymptotics import bulk_kernel
from src.core.errors import BlockOverlapError, DomainError
from src.models.schemas import BlockSpec, KernelGrid, LimitKernel

logger = logging.getLogger(__name__)

# Christoffel-Darboux 对角切换半径
DIAGONAL_RADIUS = 1e-6
MAX_LEVEL = 10**6

_PSI0 = (2.0 * math.pi) ** -0.25
_RESCALE_EVERY = 16
_BIG = 1e64


def _as_output(values: np.ndarray, *inputs):
    """标量输入返回 float"""
    if all(np.ndim(v) == 0 for v in inputs):
        return float(values)
    return values


def psi_levels(ks: Iterable[int], x) -> np.ndarray:
    """
    一次递推扫描求 ψ_k(x)，k ∈ ks

    Args:
        ks: 非负整数（任意顺序，可重复）
        x: 标量或数组

    Returns:
        shape (len(ks), *x.shape)，行顺序与 ks 相同
    """
    ks = np.asarray(list(ks), dtype=np.int64)
    x = np.asarray(x, dtype=float)
    if ks.size == 0:
        return np.zeros((0,) + x.shape)
    if ks.min() < 0 or ks.max() > MAX_LEVEL:
        raise DomainError(f"Hermite level out of range [0, {MAX_LEVEL}]")

    flat = x.ravel()
    order = np.argsort(ks, kind="stable")
    out = np.zeros((ks.size, flat.size))
    kmax = int(ks.max())
    roots = np.sqrt(np.arange(kmax + 2, dtype=float))

    prev = np.zeros_like(flat)
    cur = np.full_like(flat, _PSI0)
    log_scale = -0.25 * flat * flat
    idx = 0
    for k in range(kmax + 1):
        while idx < ks.size and ks[order[idx]] == k:
            out[order[idx]] = cur * np.exp(log_scale)
            idx += 1
        if k == kmax:
            break
        prev, cur = cur, (flat * cur - roots[k] * prev) / roots[k + 1]
        if k % _RESCALE_EVERY == _RESCALE_EVERY - 1:
            mag = np.maximum(np.abs(cur), np.abs(prev))
            mask = (mag > _BIG) | ((mag < 1.0 / _BIG) & (mag > 0.0))
            if mask.any():
                prev[mask] /= mag[mask]
                cur[mask] /= mag[mask]
                log_scale[mask] += np.log(mag[mask])

    return out.reshape((ks.size,) + x.shape)


def psi(k: int, x) -> Union[float, np.ndarray]:
    """
    Hermite 波函数 ψ_k(x)，L²(ℝ, dx) 正交归一，本征值 k + 1/2

    ψ_0 = (2π)^{-1/4} e^{-x²/4}，ψ_{k+1} = (x ψ_k − √k ψ_{k−1}) / √(k+1)
    """
    return _as_output(psi_levels([k], x)[0], x)


def psi_pair(n: int, x) -> tuple[np.ndarray, np.ndarray]:
    """(ψ_{n−1}(x), ψ_n(x))，n ≥ 1"""
    if n < 1:
        raise DomainError(f"psi_pair needs n >= 1 (got {n})")
    values = psi_levels([n - 1, n], x)
    return values[0], values[1]


def psi_prime(k: int, x) -> Union[float, np.ndarray]:
    """ψ_k'(x) = √k ψ_{k−1}(x) − (x/2) ψ_k(x)"""
    x_arr = np.asarray(x, dtype=float)
    if k == 0:
        result = -0.5 * x_arr * psi_levels([0], x_arr)[0]
    else:
        lower, upper = psi_pair(k, x_arr)
        result = math.sqrt(k) * lower - 0.5 * x_arr * upper
    return _as_output(result, x)


def psi_matrix(J: Iterable[int], x) -> np.ndarray:
    """特征向量矩阵 Φ[i, j] = ψ_{J_i}(x_j)"""
    return psi_levels(J, np.atleast_1d(np.asarray(x, dtype=float)))


def levels(spec: BlockSpec) -> np.ndarray:
    """
    J = ∪_j [⌊a_j²M⌋, ⌊(a_j+w_j)²M⌋) 的显式升序数组，长度为 N

    Raises:
        BlockOverlapError: 取整后相邻块重叠
    """
    bounds = spec.bounds
    for j in range(len(bounds) - 1):
        if bounds[j][1] > bounds[j + 1][0]:
            raise BlockOverlapError(j, j + 1, bounds[j][1], bounds[j + 1][0])
    return np.concatenate([np.arange(lo, hi, dtype=np.int64) for lo, hi in bounds])


def kernel_direct(J: Iterable[int], x, y) -> Union[float, np.ndarray]:
    """K_J(x, y) = Σ_{k∈J} ψ_k(x) ψ_k(y)，单次递推扫描"""
    J = np.asarray(list(J), dtype=np.int64)
    if J.size == 0:
        raise DomainError("level set J must be nonempty")
    X, Y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    values = psi_levels(J, np.concatenate([X.ravel(), Y.ravel()]))
    half = X.size
    result = np.einsum("kn,kn->n", values[:, :half], values[:, half:]).reshape(X.shape)
    return _as_output(result, x, y)


def _cd_sum(terms: list[tuple[int, float]], x, y) -> np.ndarray:
    """
    Σ sign · K_{[0,n)}(x, y)（Christoffel-Darboux），所有端点共享一次递推

    |x − y| < DIAGONAL_RADIUS 时在中点使用导数形式
        √n (√n ψ_{n−1}² − √(n−1) ψ_{n−2} ψ_n)
    """
    X, Y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    X, Y = X.ravel(), Y.ravel()
    terms = [(n, sign) for n, sign in terms if n > 0]
    result = np.zeros_like(X)
    if not terms:
        return result

    needed = sorted({k for n, _ in terms for k in (n - 2, n - 1, n) if k >= 0})
    position = {k: i for i, k in enumerate(needed)}
    size = X.size
    values = psi_levels(needed, np.concatenate([X, Y, 0.5 * (X + Y)]))
    at_x, at_y, at_mid = values[:, :size], values[:, size:2 * size], values[:, 2 * size:]

    diff = X - Y
    diagonal = np.abs(diff) < DIAGONAL_RADIUS
    safe = np.where(diagonal, 1.0, diff)
    for n, sign in terms:
        hi, lo = position[n], position[n - 1]
        root = math.sqrt(n)
        off = root * (at_x[hi] * at_y[lo] - at_x[lo] * at_y[hi]) / safe
        on = root * root * at_mid[lo] ** 2
        if n >= 2:
            on = on - root * math.sqrt(n - 1) * at_mid[position[n - 2]] * at_mid[hi]
        result += sign * np.where(diagonal, on, off)
    return result


def kernel_cd(N: int, x, y) -> Union[float, np.ndarray]:
    """
    K_{[0,N)}(x, y) = √N (ψ_N(x)ψ_{N−1}(y) − ψ_{N−1}(x)ψ_N(y)) / (x − y)

    kernel_cd(0, ·, ·) = 0
    """
    if N < 0:
        raise DomainError(f"kernel_cd needs N >= 0 (got {N})")
    X, Y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return _as_output(_cd_sum([(N, 1.0)], X, Y).reshape(X.shape), x, y)


def _block_terms(spec: BlockSpec) -> list[tuple[int, float]]:
    levels(spec)
    terms = []
    for lo, hi in spec.bounds:
        terms.append((hi, 1.0))
        terms.append((lo, -1.0))
    return terms


def kernel_block(spec: BlockSpec, x, y) -> Union[float, np.ndarray]:
    """
    K_J(x, y) = Σ_j [K_cd(⌊(a_j+w_j)²M⌋) − K_cd(⌊a_j²M⌋)]

    与 kernel_direct(levels(spec), x, y) 相同，但每个端点只需两个波函数
    """
    X, Y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return _as_output(_cd_sum(_block_terms(spec), X, Y).reshape(X.shape), x, y)


def density_finite(spec: BlockSpec, x) -> Union[float, np.ndarray]:
    """有限 M 单点密度 ρ_1(x) = K_J(x, x)"""
    return kernel_block(spec, x, x)


def _block_grid(spec: BlockSpec, points: np.ndarray) -> np.ndarray:
    """点集上的核矩阵：一次递推得到所有端点的 ψ，再做外积"""
    terms = [(n, sign) for n, sign in _block_terms(spec) if n > 0]
    needed = sorted({k for n, _ in terms for k in (n - 2, n - 1, n) if k >= 0})
    position = {k: i for i, k in enumerate(needed)}
    values = psi_levels(needed, points)

    diff = points[:, None] - points[None, :]
    np.fill_diagonal(diff, 1.0)
    close = np.abs(diff) < DIAGONAL_RADIUS
    matrix = np.zeros((points.size, points.size))
    for n, sign in terms:
        hi, lo = values[position[n]], values[position[n - 1]]
        root = math.sqrt(n)
        matrix += sign * root * (np.outer(hi, lo) - np.outer(lo, hi)) / diff
        diag = root * root * lo ** 2
        if n >= 2:
            diag = diag - root * math.sqrt(n - 1) * values[position[n - 2]] * hi
        np.fill_diagonal(matrix, np.diag(matrix) + sign * diag)

    if np.any(close & ~np.eye(points.size, dtype=bool)):
        # 近重合点对退回逐对求值
        rows, cols = np.nonzero(close & ~np.eye(points.size, dtype=bool))
        matrix[rows, cols] = _cd_sum(terms, points[rows], points[cols])
    return matrix


def kernel_grid(source: Union[BlockSpec, LimitKernel], points) -> KernelGrid:
    """
    点集上的对称核矩阵

    source 为 BlockSpec 时是有限 M 投影核；为 LimitKernel 时是 k(x_i − x_j)
    """
    points = np.sort(np.asarray(points, dtype=float).ravel())
    if isinstance(source, BlockSpec):
        matrix = _block_grid(source, points)
    else:
        matrix = bulk_kernel(source, points[:, None] - points[None, :])
    # 上三角镜像，保证精确对称
    upper = np.triu(matrix)
    values = upper + np.triu(matrix, 1).T
    return KernelGrid(points=points, values=values, source=source)


def rescaled_kernel(spec: BlockSpec, x, y, x0: float = 0.0):
    """
    体区域重标度核 ρ^{-1} K_J(x0 + x/ρ, x0 + y/ρ)，ρ = ρ_1(x0) 为实际计算值

    M → ∞ 的极限是 bulk_kernel / cusp_kernel
    """
    rho = density_finite(spec, x0)
    if rho <= 0:
        raise DomainError(f"density vanishes at x0={x0}; cannot rescale")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    result = kernel_block(spec, x0 + x / rho, x0 + y / rho) / rho
    return result


def edge_rescaled_kernel(spec: BlockSpec, x, y):
    """
    外边缘重标度 N^{-1/6} K_J(x_e + x N^{-1/6}, x_e + y N^{-1/6})

    x_e = 2 (a_last + w_last) √M；极限为 edge_kernel(a)
    """
    scale = spec.N ** (-1.0 / 6.0)
    edge = 2.0 * spec.outer_radius * math.sqrt(spec.M)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return scale * kernel_block(spec, edge + x * scale, edge + y * scale)


def slater_density(J: Iterable[int], xs) -> float:
    """
    |Ψ_J(x_1, …, x_N)|² = det[ψ_{J_i}(x_j)]² / N!

    归一化为 ℝ^N 上的概率密度
    """
    J = list(J)
    xs = np.asarray(xs, dtype=float).ravel()
    if len(J) != xs.size:
        raise DomainError(f"Slater determinant needs {len(J)} positions (got {xs.size})")
    det = np.linalg.det(psi_matrix(J, xs))
    return float(det * det / math.factorial(len(J)))
