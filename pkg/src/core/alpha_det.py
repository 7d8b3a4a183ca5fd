"""
α-行列式 - 两种独立实现、叠加恒等式与 α-行列式关联函数

    det_α A = Σ_{σ∈S_n} α^{n−m(σ)} Π_i A[σ(i), i]，m(σ) 为轮换数

α = −1 为行列式，α = 1 为积和式，α = 0 为对角线乘积
"""
import itertools
import logging
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Optional, Sequence, Union

import numpy as np

from src.core.asymptotics import bulk_kernel
from src.core.errors import SizeError
from src.models.schemas import AlphaParam, LimitKernel

logger = logging.getLogger(__name__)

BRUTEFORCE_MAX = 9
CYCLES_MAX = 16
SUPERPOSITION_MAX = 8

AlphaLike = Union[float, Fraction, AlphaParam]


def _alpha_value(alpha: AlphaLike) -> float:
    if isinstance(alpha, AlphaParam):
        return alpha.alpha
    return float(alpha)


def _square(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix (got shape {A.shape})")
    return A


def cycle_count(perm: Sequence[int]) -> int:
    """置换的轮换数（含不动点）"""
    seen = [False] * len(perm)
    cycles = 0
    for start in range(len(perm)):
        if seen[start]:
            continue
        cycles += 1
        i = start
        while not seen[i]:
            seen[i] = True
            i = perm[i]
    return cycles


@lru_cache(maxsize=BRUTEFORCE_MAX + 1)
def _permutation_table(n: int) -> tuple[np.ndarray, np.ndarray]:
    """字典序排列的全部置换及其 n − m(σ)"""
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int8).reshape(-1, n)
    exponents = np.array([n - cycle_count(p) for p in perms], dtype=np.int64)
    perms.setflags(write=False)
    exponents.setflags(write=False)
    return perms, exponents


def alpha_det_bruteforce(alpha: AlphaLike, A) -> float:
    """
    按定义枚举 S_n（n ≤ 9）

    Raises:
        SizeError: n > 9，应改用 alpha_det_cycles
    """
    A = _square(A)
    n = A.shape[0]
    if n > BRUTEFORCE_MAX:
        raise SizeError(
            f"alpha_det_bruteforce supports n <= {BRUTEFORCE_MAX} (got n={n}); "
            f"use alpha_det_cycles for n <= {CYCLES_MAX}"
        )
    if n == 0:
        return 1.0
    perms, exponents = _permutation_table(n)
    products = A[perms, np.arange(n)].prod(axis=1)
    weights = np.power(_alpha_value(alpha), exponents.astype(float))
    return float(np.sum(weights * products))


@lru_cache(maxsize=CYCLES_MAX + 1)
def _submask_patterns(k: int) -> np.ndarray:
    """k 位所有子集的位模式，shape (2^k, k)"""
    return ((np.arange(1 << k)[:, None] >> np.arange(k)) & 1).astype(np.int64)


def _submasks(mask: int) -> np.ndarray:
    positions = [i for i in range(mask.bit_length()) if mask >> i & 1]
    if not positions:
        return np.zeros(1, dtype=np.int64)
    return _submask_patterns(len(positions)) @ (np.int64(1) << np.array(positions, dtype=np.int64))


def _cycle_weights(A: np.ndarray) -> np.ndarray:
    """
    C(S) = 以 min(S) 为起点的所有有向圈的权重和（边 u → v 权重 A[v, u]）

    H[S, v] 为从 min(S) 出发、恰好经过 S、终于 v 的路径权重和
    """
    n = A.shape[0]
    size = 1 << n
    H = np.zeros((size, n))
    C = np.zeros(size)
    for mask in range(1, size):
        low = (mask & -mask).bit_length() - 1
        if mask == 1 << low:
            H[mask, low] = 1.0
        else:
            ends = [v for v in range(low + 1, n) if mask >> v & 1]
            previous = H[[mask ^ (1 << v) for v in ends]]
            H[mask, ends] = np.einsum("vu,vu->v", previous, A[ends])
        C[mask] = H[mask] @ A[low]
    return C


def alpha_det_cycles(alpha: AlphaLike, A) -> float:
    """
    子集动态规划（n ≤ 16）

    每一步取走包含最小未用下标的轮换：
        F(U) = Σ_{S ⊆ U, min U ∈ S} α^{|S|−1} C(S) F(U \\ S)

    归约顺序固定（按子集下标），结果与并行度无关

    Raises:
        SizeError: n > 16
    """
    A = _square(A)
    n = A.shape[0]
    if n > CYCLES_MAX:
        raise SizeError(f"alpha_det_cycles supports n <= {CYCLES_MAX} (got n={n})")
    if n == 0:
        return 1.0

    a = _alpha_value(alpha)
    size = 1 << n
    popcount = np.array([bin(s).count("1") for s in range(size)])
    W = _cycle_weights(A) * np.power(a, np.maximum(popcount - 1, 0).astype(float))

    F = np.zeros(size)
    F[0] = 1.0
    for U in range(1, size):
        low = U & -U
        S = _submasks(U ^ low) | low
        F[U] = np.sum(W[S] * F[U ^ S])
    return float(F[size - 1])


def permanent_ryser(A) -> float:
    """
    Ryser 公式（Gray 码更新行和）

        per A = (−1)^n Σ_{S ⊆ [n]} (−1)^{|S|} Π_i Σ_{j∈S} A[i, j]
    """
    A = _square(A)
    n = A.shape[0]
    if n == 0:
        return 1.0
    row_sums = np.zeros(n)
    total = 0.0
    sign = 1.0
    previous = 0
    for k in range(1, 1 << n):
        gray = k ^ (k >> 1)
        changed = (gray ^ previous).bit_length() - 1
        if gray >> changed & 1:
            row_sums += A[:, changed]
        else:
            row_sums -= A[:, changed]
        previous = gray
        sign = -sign
        total += sign * np.prod(row_sums)
    return float((-1) ** n * total)


def kernel_matrix(kernel: Union[LimitKernel, Callable], points: Sequence[float]) -> np.ndarray:
    """[k(x_i − x_j)]"""
    points = np.asarray(points, dtype=float).ravel()
    separations = points[:, None] - points[None, :]
    if isinstance(kernel, LimitKernel):
        return np.asarray(bulk_kernel(kernel, separations), dtype=float)
    return np.asarray(kernel(separations), dtype=float)


def alpha_corr(alpha: Optional[AlphaLike], kernel: LimitKernel, points: Sequence[float]) -> float:
    """
    α-行列式过程的 n 点关联 det_α[k(x_i − x_j)]

    alpha 为 None 时使用 kernel.alpha；α = −1 走普通行列式

    Raises:
        SizeError: n > 16
    """
    param = alpha if isinstance(alpha, AlphaParam) else AlphaParam(
        alpha=kernel.alpha if alpha is None else float(alpha), process=True
    )
    points = np.asarray(points, dtype=float).ravel()
    if points.size > CYCLES_MAX:
        raise SizeError(f"alpha_corr supports at most {CYCLES_MAX} points (got {points.size})")
    matrix = kernel_matrix(kernel, points)
    if param.alpha == -1.0:
        return float(np.linalg.det(matrix))
    return alpha_det_cycles(param, matrix)


def superposition_corr(m: int, base_kernel: Union[LimitKernel, Callable], points: Sequence[float]) -> float:
    """
    m 个独立、核为 base/m 的行列式过程之并的 n 点关联

        Σ_{c: [n]→[m]} Π_g det[base(x_i − x_j)/m]_{i,j ∈ c⁻¹(g)}

    按带标号子集卷积求和（与逐个着色枚举相同），等于 det_{−1/m}[base]

    Raises:
        SizeError: n > 8
    """
    if m < 1:
        raise ValueError(f"m must be a positive integer (got {m})")
    points = np.asarray(points, dtype=float).ravel()
    n = points.size
    if n > SUPERPOSITION_MAX:
        raise SizeError(f"superposition_corr supports at most {SUPERPOSITION_MAX} points (got {n})")

    matrix = kernel_matrix(base_kernel, points) / m
    size = 1 << n
    minors = np.ones(size)
    for mask in range(1, size):
        idx = [i for i in range(n) if mask >> i & 1]
        minors[mask] = np.linalg.det(matrix[np.ix_(idx, idx)])

    # 第 g 种颜色占据子集 S，其余颜色分配 U \ S
    layer = minors.copy()
    for _ in range(m - 1):
        nxt = np.zeros(size)
        for U in range(size):
            S = _submasks(U)
            nxt[U] = np.sum(minors[S] * layer[U ^ S])
        layer = nxt
    return float(layer[size - 1])
