import math
import re
from fractions import Fraction
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, computed_field, field_validator, model_validator

from src.core.errors import BlockOverlapError
from src.core.settings import settings

# 取整时的相对容差：0.3**2 * 100 = 8.999999999999998 应取整为 9
_FLOOR_EPS = 1e-9

BLOCK_TOKEN_RE = re.compile(r"^\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*:\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*$")
GRID_RE = re.compile(r"^\s*(-?[0-9.eE+-]+):(-?[0-9.eE+-]+):(log)?([0-9]+)\s*$")


def floor_level(value: float) -> int:
    """能级端点取整 ⌊value⌋（吸收浮点舍入误差）"""
    return math.floor(value + _FLOOR_EPS * max(1.0, abs(value)))


def _format_number(value: float) -> str:
    return repr(int(value)) if float(value).is_integer() else repr(float(value))


def parse_blocks(text: str) -> tuple[tuple[float, float], ...]:
    """
    解析块描述字符串

    Args:
        text: 逗号分隔的 `a:w` 对，例如 "0:0.5,2:1"

    Returns:
        ((a_0, w_0), (a_1, w_1), ...)

    Raises:
        ValueError: 任一 token 格式错误（消息中包含该 token）
    """
    if text is None or not text.strip():
        raise ValueError("empty block specification")
    blocks = []
    for token in text.split(","):
        match = BLOCK_TOKEN_RE.fullmatch(token)
        if not match:
            raise ValueError(f"malformed block token {token.strip()!r} (expected 'a:w')")
        blocks.append((float(match.group(1)), float(match.group(2))))
    return tuple(blocks)


def format_blocks(blocks) -> str:
    """块描述的规范字符串形式（parse_blocks 的逆）"""
    return ",".join(f"{_format_number(a)}:{_format_number(w)}" for a, w in blocks)


def parse_alpha(text: str) -> Fraction:
    """解析有理数 α，如 "-1/2"、"-1"、"-0.5" """
    try:
        return Fraction(text.strip()).limit_denominator(10**6)
    except (ValueError, ZeroDivisionError, AttributeError):
        raise ValueError(f"malformed alpha {text!r} (expected a rational such as -1/2)")


def parse_grid(text: str) -> np.ndarray:
    """
    解析网格字符串 `min:max:count` 或 `min:max:logCOUNT`

    Raises:
        ValueError: 格式错误或网格为空
    """
    match = GRID_RE.fullmatch(text or "")
    if not match:
        raise ValueError(f"malformed grid {text!r} (expected 'min:max:count' or 'min:max:logCOUNT')")
    lo, hi, is_log, count = float(match.group(1)), float(match.group(2)), match.group(3), int(match.group(4))
    if count < 1:
        raise ValueError(f"empty grid {text!r}")
    if hi < lo:
        raise ValueError(f"grid {text!r} has max < min")
    if is_log:
        if lo <= 0:
            raise ValueError(f"log grid {text!r} needs a positive minimum")
        return np.geomspace(lo, hi, count)
    return np.linspace(lo, hi, count)


def parse_levels(text: str) -> tuple[int, ...]:
    """`lo:hi`（半开区间）或逗号分隔的整数列表"""
    try:
        if ":" in text:
            lo, hi = (int(part) for part in text.split(":"))
            values = tuple(range(lo, hi))
        else:
            values = tuple(sorted({int(part) for part in text.split(",") if part.strip()}))
    except ValueError:
        raise ValueError(f"malformed levels {text!r} (expected 'lo:hi' or 'k1,k2,...')")
    if not values:
        raise ValueError(f"level set {text!r} is empty")
    return values


# ===== numerics =====

class QuadratureSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    relative_tolerance: float = Field(default=1e-10, gt=0)
    absolute_tolerance: float = Field(default=1e-12, gt=0)
    max_subdivisions: int = Field(default=4000, ge=1)
    panel_order: int = Field(default=16, ge=2)       # 每个面板的 Gauss-Legendre 阶数
    initial_panels: int = Field(default=1, ge=1)     # 振荡被积函数可先均匀切分

    @classmethod
    def default(cls, **overrides) -> "QuadratureSpec":
        """使用环境变量中的默认容差"""
        values = {
            "relative_tolerance": settings.quad_rtol,
            "absolute_tolerance": settings.quad_atol,
        }
        values.update(overrides)
        return cls(**values)


class AiryValue(BaseModel):
    model_config = ConfigDict(frozen=True)

    ai: float
    ai_prime: float


# ===== fermion_kernel =====

class BlockSpec(BaseModel):
    """
    能级块 J = ∪_j [⌊a_j²M⌋, ⌊(a_j+w_j)²M⌋)

    w_j 即块宽（允许非整数，奇型的首块宽度为 w/2）
    """

    model_config = ConfigDict(frozen=True)

    blocks: tuple[tuple[float, float], ...] = Field(min_length=1)
    M: int = Field(gt=0)
    parity: Literal["even", "odd", "custom"] = "custom"

    @field_validator("blocks")
    @classmethod
    def validate_blocks(cls, v):
        for j, (a, w) in enumerate(v):
            if not (math.isfinite(a) and math.isfinite(w)):
                raise ValueError(f"block {j}: parameters must be finite")
            if a < 0:
                raise ValueError(f"block {j}: a must be >= 0 (got {a})")
            if w <= 0:
                raise ValueError(f"block {j}: w must be > 0 (got {w})")
        return v

    @model_validator(mode="after")
    def validate_structure(self):
        bounds = self.bounds
        for j in range(len(bounds) - 1):
            if bounds[j][1] > bounds[j + 1][0]:
                raise BlockOverlapError(j, j + 1, bounds[j][1], bounds[j + 1][0])

        widths = [w for _, w in self.blocks]
        if self.parity == "even":
            if self.blocks[0][0] <= 0:
                raise ValueError("even type requires a_0 > 0")
            if any(not math.isclose(w, widths[0], rel_tol=1e-12) for w in widths):
                raise ValueError("even type requires equal block widths")
        elif self.parity == "odd":
            if self.blocks[0][0] != 0:
                raise ValueError("odd type requires a_0 = 0")
            if len(widths) > 1:
                w = widths[1]
                if not math.isclose(widths[0], w / 2, rel_tol=1e-12):
                    raise ValueError("odd type requires w_0 = w/2")
                if any(not math.isclose(x, w, rel_tol=1e-12) for x in widths[1:]):
                    raise ValueError("odd type requires w_1 = ... = w_{B-1} = w")

        if self.N <= 0:
            raise ValueError("block specification selects no levels (N = 0)")
        return self

    @property
    def bounds(self) -> list[tuple[int, int]]:
        """每个块的半开能级区间 [lo, hi)"""
        return [
            (floor_level(a * a * self.M), floor_level((a + w) ** 2 * self.M))
            for a, w in self.blocks
        ]

    @property
    def B(self) -> int:
        return len(self.blocks)

    @property
    def R(self) -> float:
        return float(sum(w for _, w in self.blocks))

    @property
    def N(self) -> int:
        return sum(max(0, hi - lo) for lo, hi in self.bounds)

    @property
    def max_level(self) -> int:
        return max(hi for _, hi in self.bounds) - 1

    @property
    def outer_radius(self) -> float:
        """max_j (a_j + w_j)，相空间最外圈半径（单位 √M）"""
        return max(a + w for a, w in self.blocks)

    def canonical(self) -> str:
        return format_blocks(self.blocks)


# ===== asymptotics =====

LimitKind = Literal[
    "pure_sine", "single_block", "even_type", "odd_type", "cusp", "scaled_sine", "multi_block"
]


class LimitKernel(BaseModel):
    """
    平移不变极限核

        k(s) = constant·sinc(sinc_scale·s) + Σ_j weights_j·sinc(scales_j·s)·cos(frequencies_j·s)

    其中 sinc(t) = sin(t)/t。m 为目标 α = -1/m，sinc_scale = π|α|。
    各 kind 的构造见 src.core.asymptotics。
    """

    model_config = ConfigDict(frozen=True)

    kind: LimitKind
    m: int = Field(ge=1)
    sinc_scale: float = Field(gt=0)
    frequencies: tuple[float, ...] = ()
    weights: tuple[float, ...] = ()
    scales: tuple[float, ...] = ()
    constant: float = 0.0
    a: Optional[float] = None
    b: Optional[float] = None

    @computed_field
    @property
    def alpha(self) -> float:
        return -1.0 / self.m

    @model_validator(mode="after")
    def validate_kind(self):
        if not (len(self.weights) == len(self.scales) == len(self.frequencies)):
            raise ValueError("weights, scales and frequencies must have matching lengths")
        if not math.isclose(self.constant + sum(self.weights), 1.0, rel_tol=1e-12):
            raise ValueError(f"{self.kind}: k(0) must equal 1")
        if self.kind in ("pure_sine", "scaled_sine") and self.frequencies:
            raise ValueError(f"{self.kind} has no cosine components")
        if self.kind == "even_type" and len(self.frequencies) != self.m // 2:
            raise ValueError("even_type needs B frequencies with m = 2B")
        if self.kind == "odd_type" and len(self.frequencies) != (self.m - 1) // 2:
            raise ValueError("odd_type needs B-1 frequencies with m = 2B-1")
        if self.kind in ("single_block", "cusp") and len(self.frequencies) != 1:
            raise ValueError(f"{self.kind} needs exactly one frequency")
        if self.kind == "multi_block" and not self.frequencies:
            raise ValueError("multi_block needs at least one component")
        return self


class CuspParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    a: float = Field(gt=0)
    b: float = Field(ge=0)
    tau: float = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def validate_b(self):
        if self.b >= self.a + 1:
            raise ValueError(f"b={self.b} is outside the support (b < a + 1 = {self.a + 1})")
        return self

    @computed_field
    @property
    def c(self) -> float:
        t = math.sqrt(self.tau / (1.0 + self.tau))
        return (1.0 + t) / (1.0 - t)

    @computed_field
    @property
    def eta(self) -> float:
        return (self.a + 1.0) ** (1.0 / 3.0) / (2.0 * self.a + 1.0) ** (1.0 / 6.0)


class KernelGrid(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    points: np.ndarray
    values: np.ndarray
    source: Union[BlockSpec, LimitKernel]

    @property
    def is_finite_m(self) -> bool:
        return isinstance(self.source, BlockSpec)

    def min_eigen_ratio(self) -> float:
        """最小特征值 / 最大特征值（半正定性检查）"""
        eig = np.linalg.eigvalsh(self.values)
        top = max(abs(eig[-1]), np.finfo(float).tiny)
        return float(eig[0] / top)

    def projection_spectrum(self, weights: np.ndarray) -> np.ndarray:
        """W^{1/2} K W^{1/2} 的特征值（投影核应落在 [0, 1]）"""
        root = np.sqrt(np.asarray(weights, dtype=float))
        return np.linalg.eigvalsh(root[:, None] * self.values * root[None, :])


# ===== alpha_det =====

class AlphaParam(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: float
    process: bool = False   # 过程层面要求 -1/α ∈ ℕ

    @model_validator(mode="after")
    def validate_existence(self):
        if self.process and self.alpha < 0:
            m = -1.0 / self.alpha
            if abs(m - round(m)) > 1e-9 or round(m) < 1:
                raise ValueError(
                    f"alpha={self.alpha} does not define a point process (-1/alpha must be a positive integer)"
                )
        return self

    @classmethod
    def from_m(cls, m: int) -> "AlphaParam":
        return cls(alpha=-1.0 / m, process=True)

    @property
    def m(self) -> int:
        if self.alpha >= 0:
            raise ValueError(f"alpha={self.alpha} is not of the form -1/m")
        return int(round(-1.0 / self.alpha))


# ===== statistics =====

class StatSeries(BaseModel):
    """通用 (x, y) 序列记录 - CSV/JSON 输出的基本单元"""

    label: str
    x: list[float]
    y: list[float]
    x_unit: str = ""
    y_unit: str = ""
    y_err: Optional[list[float]] = None
    meta: dict = Field(default_factory=dict)

    @model_validator(mode="after")
    def validate_shape(self):
        if len(self.x) != len(self.y):
            raise ValueError(f"series {self.label!r}: |x|={len(self.x)} but |y|={len(self.y)}")
        if self.y_err is not None and len(self.y_err) != len(self.y):
            raise ValueError(f"series {self.label!r}: y_err length mismatch")
        if any(b <= a for a, b in zip(self.x, self.x[1:])):
            raise ValueError(f"series {self.label!r}: x must be strictly increasing")
        return self


class Constants(BaseModel):
    model_config = ConfigDict(frozen=True)

    euler_gamma: float = 0.5772156649015329


CONSTANTS = Constants()


# ===== sampler =====

class PointSample(BaseModel):
    model_config = ConfigDict(frozen=True)

    positions: tuple[float, ...]
    domain: Literal["line", "circle"]
    n: int = Field(ge=0)
    seed: int = Field(ge=0, lt=2**64)
    replicate_index: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def validate_positions(self):
        if len(self.positions) != self.n:
            raise ValueError(f"sample has {len(self.positions)} points but n={self.n}")
        if any(b < a for a, b in zip(self.positions, self.positions[1:])):
            raise ValueError("positions must be sorted")
        if self.domain == "circle" and any(not (0.0 <= p < 2 * math.pi) for p in self.positions):
            raise ValueError("circle positions must lie in [0, 2π)")
        return self

    def as_array(self) -> np.ndarray:
        return np.asarray(self.positions, dtype=float)


class RngContract(BaseModel):
    """(seed, stream) 唯一确定随机流，与并行度无关"""

    model_config = ConfigDict(frozen=True)

    seed: int = Field(ge=0, lt=2**64)
    stream: int = Field(default=0, ge=0)

    def generator(self, *substream: int) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream, *substream))
        return np.random.Generator(np.random.PCG64(seq))


class HermiteBasis(BaseModel):
    model_config = ConfigDict(frozen=True)

    levels: tuple[int, ...] = Field(min_length=1)

    @field_validator("levels")
    @classmethod
    def validate_levels(cls, v):
        if any(k < 0 for k in v) or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("levels must be sorted, distinct and non-negative")
        return v

    @classmethod
    def from_blocks(cls, spec: "BlockSpec") -> "HermiteBasis":
        return cls(levels=tuple(k for lo, hi in spec.bounds for k in range(lo, hi)))


class FourierBasis(BaseModel):
    model_config = ConfigDict(frozen=True)

    levels: tuple[int, ...] = Field(min_length=1)

    @field_validator("levels")
    @classmethod
    def validate_levels(cls, v):
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("levels must be sorted and distinct")
        return v


# ===== cli =====

class RunConfig(BaseModel):
    command: Literal["density", "corr", "nv", "sk", "sample", "verify"]
    blocks: Optional[str] = None
    M: Optional[int] = Field(default=None, gt=0)
    parity: Literal["even", "odd", "custom"] = "custom"
    a: Optional[float] = Field(default=None, ge=0)
    alpha: Optional[str] = None
    grid: Optional[str] = None
    L_list: Optional[str] = None
    basis: Literal["hermite", "fourier"] = "hermite"
    levels: Optional[str] = None
    m: int = Field(default=1, ge=1)
    power: int = Field(default=1, ge=1)
    haar: bool = False
    replicates: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    workers: Optional[int] = Field(default=None, ge=1)
    output: Optional[str] = None
    format: Literal["csv", "json"] = "csv"
    deterministic: bool = False
    numeric: bool = False
    quick: bool = False
    only: Optional[str] = None

    @field_validator("blocks")
    @classmethod
    def validate_blocks(cls, v: Optional[str]) -> Optional[str]:
        return None if v is None else format_blocks(parse_blocks(v))

    @field_validator("alpha")
    @classmethod
    def validate_alpha(cls, v: Optional[str]) -> Optional[str]:
        if v is None:
            return None
        return str(parse_alpha(v))

    @field_validator("grid", "L_list")
    @classmethod
    def validate_grid(cls, v: Optional[str]) -> Optional[str]:
        if v is not None:
            parse_grid(v)
        return v

    @field_validator("levels")
    @classmethod
    def validate_levels(cls, v: Optional[str]) -> Optional[str]:
        if v is not None:
            parse_levels(v)
        return v

    def block_spec(self) -> BlockSpec:
        if self.blocks is None or self.M is None:
            raise ValueError("--blocks and --M are required")
        try:
            return BlockSpec(blocks=parse_blocks(self.blocks), M=self.M, parity=self.parity)
        except ValidationError as e:
            # 块重叠以原异常抛出，保留 pair
            for err in e.errors():
                cause = err.get("ctx", {}).get("error")
                if isinstance(cause, BlockOverlapError):
                    raise cause from None
            raise

    def alpha_value(self, default: Optional[str] = None) -> Fraction:
        text = self.alpha if self.alpha is not None else default
        if text is None:
            raise ValueError("--alpha is required")
        return parse_alpha(text)
