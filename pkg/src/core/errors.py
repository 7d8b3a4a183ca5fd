"""异常层次 - 所有数值模块共用"""
from typing import Any, Optional


class FermidetError(Exception):
    """库内所有异常的基类"""


class QuadratureError(FermidetError, RuntimeError):
    """
    自适应求积在 max_subdivisions 内未收敛

    Attributes:
        estimate: 最后一次积分估计
        error_bound: 最后一次误差估计
        subdivisions: 已执行的细分次数
    """

    def __init__(self, estimate: float, error_bound: float, subdivisions: int):
        self.estimate = estimate
        self.error_bound = error_bound
        self.subdivisions = subdivisions
        super().__init__(
            f"quadrature did not converge after {subdivisions} subdivisions "
            f"(estimate={estimate:.16g}, error bound={error_bound:.3g})"
        )


class DomainError(FermidetError, ValueError):
    """参数不在定义域内"""


class AiryDomainError(DomainError):
    """Airy 函数参数超出精确范围 [-20, 10]"""


class SizeError(FermidetError, ValueError):
    """矩阵或点集规模超出算法上限"""


class BlockOverlapError(FermidetError, ValueError):
    """取整后相邻能级块重叠"""

    def __init__(self, first: int, second: int, first_end: int, second_start: int):
        self.pair = (first, second)
        super().__init__(
            f"blocks overlap: block {first} ends at level {first_end} "
            f"but block {second} starts at level {second_start}"
        )


class SamplerError(FermidetError, RuntimeError):
    """采样器内部错误（包络构造失败、拒绝采样停滞）"""

    def __init__(self, message: str, diagnostics: Optional[dict[str, Any]] = None):
        self.diagnostics = diagnostics or {}
        if self.diagnostics:
            message = f"{message} | " + ", ".join(
                f"{k}={v}" for k, v in self.diagnostics.items()
            )
        super().__init__(message)
