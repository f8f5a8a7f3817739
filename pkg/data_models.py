# threshold_dde/data_models.py

import json
import math
from enum import Enum
from typing import Any, Dict, List, Optional

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config import (
    CONVERGE_CONFIG, DEMO_MODEL, DEMO_PREHISTORY, OUTPUT_CONFIG, PICARD_CONFIG,
    SOLVE_CONFIG, VALIDATION_CONFIG, VERIFY_CONFIG
)


# ==============================================================================
# 检查报告
# ==============================================================================

class CheckStatus(Enum):
    """
    PASS / FAIL / SKIP 定义了单项检查的结果.
    """
    PASS = "pass"
    FAIL = "fail"
    SKIP = "skip"


class CheckKind(Enum):
    """
    BOUND 为与闭式上界比较的检查; STABILITY 只检查经验比值有界.
    """
    BOUND = "bound"
    STABILITY = "stability"


class CheckItem(BaseModel):
    """
    单项检查结果

    上界型检查满足 margin = bound - measured，status 为 pass 当且仅当 margin >= -slack。
    """
    check_id: str
    status: CheckStatus
    measured: Optional[float] = None
    bound: Optional[float] = None
    margin: Optional[float] = None
    kind: CheckKind = CheckKind.BOUND
    context: str = ""

    @classmethod
    def upper_bound(cls, check_id: str, measured: float, bound: float, slack: float,
                    context: str = "") -> "CheckItem":
        margin = bound - measured
        ok = math.isfinite(margin) and margin >= -slack
        return cls(
            check_id=check_id,
            status=CheckStatus.PASS if ok else CheckStatus.FAIL,
            measured=measured,
            bound=bound,
            margin=margin,
            context=context,
        )

    @classmethod
    def lower_bound(cls, check_id: str, measured: float, bound: float, slack: float,
                    context: str = "") -> "CheckItem":
        """measured >= bound - slack"""
        margin = measured - bound
        ok = math.isfinite(margin) and margin >= -slack
        return cls(
            check_id=check_id,
            status=CheckStatus.PASS if ok else CheckStatus.FAIL,
            measured=measured,
            bound=bound,
            margin=margin,
            context=context,
        )

    @classmethod
    def condition(cls, check_id: str, ok: bool, context: str = "",
                  measured: Optional[float] = None) -> "CheckItem":
        """无数值上界的真假条件"""
        return cls(
            check_id=check_id,
            status=CheckStatus.PASS if ok else CheckStatus.FAIL,
            measured=measured,
            context=context,
        )

    @classmethod
    def skipped(cls, check_id: str, reason: str) -> "CheckItem":
        return cls(check_id=check_id, status=CheckStatus.SKIP, context=reason)

    @property
    def passed(self) -> bool:
        return self.status != CheckStatus.FAIL


class CheckReport(BaseModel):
    """检查项列表；合并后按 check_id 稳定排序"""
    items: List[CheckItem] = []

    def add(self, item: CheckItem) -> CheckItem:
        self.items.append(item)
        return item

    def extend(self, other: "CheckReport") -> "CheckReport":
        self.items.extend(other.items)
        return self

    @classmethod
    def merge(cls, reports: List["CheckReport"]) -> "CheckReport":
        items = [item for report in reports for item in report.items]
        items.sort(key=lambda item: item.check_id)
        return cls(items=items)

    @property
    def passed(self) -> bool:
        return all(item.passed for item in self.items)

    @property
    def failures(self) -> List[CheckItem]:
        return [item for item in self.items if item.status == CheckStatus.FAIL]

    def get(self, check_id: str) -> Optional[CheckItem]:
        for item in self.items:
            if item.check_id == check_id:
                return item
        return None

    def counts(self) -> Dict[str, int]:
        result = {status.value: 0 for status in CheckStatus}
        for item in self.items:
            result[item.status.value] += 1
        return result

    def to_records(self) -> List[Dict[str, Any]]:
        return [item.model_dump(mode="json") for item in self.items]

    def to_json(self) -> str:
        return json.dumps(self.to_records(), indent=2)

    def to_table(self) -> str:
        """人类可读的表格，供标准输出打印"""
        if not self.items:
            return "(no checks)"
        frame = pd.DataFrame(self.to_records())
        frame = frame[["check_id", "status", "measured", "bound", "margin", "context"]]
        return frame.to_string(index=False, float_format=lambda x: f"{x:.6g}")


# ==============================================================================
# 数值结果
# ==============================================================================

class DerivedBounds(BaseModel):
    """
    由网格最大化得到的常数

    M_G = K·exp(h·M_k)；|β(v)| <= C_beta·|v| + a_beta 在采样区间上成立。
    """
    M_q: float
    M_k: float
    M_G: float
    L_g: float
    L_q: float = 0.0
    L_beta: float = 0.0
    L_d: float = 0.0
    C_beta: float = 0.0
    a_beta: float = 0.0
    M_beta: float = 0.0
    M_g: float = 0.0
    v_lo: float = VALIDATION_CONFIG["default_v_range"][0]
    v_hi: float = VALIDATION_CONFIG["default_v_range"][1]

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _non_negative(self) -> "DerivedBounds":
        for name in ("M_q", "M_k", "M_G", "L_g", "L_q", "L_beta", "L_d", "C_beta", "a_beta", "M_beta", "M_g"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {value}")
        return self

    def with_overrides(self, **overrides: float) -> "DerivedBounds":
        """返回替换部分常数的副本 (用于故意破坏上界的验证)"""
        return self.model_copy(update=overrides)


class RhsValue(BaseModel):
    """F(φ, ψ) = (F1, F2) 及所用的 τ 和 𝒢"""
    f1: float
    f2: float
    tau_used: float
    calG_used: float

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _finite(self) -> "RhsValue":
        if not all(math.isfinite(x) for x in (self.f1, self.f2, self.tau_used, self.calG_used)):
            raise ValueError(f"non-finite right-hand side: {self}")
        return self


class MaturationResult(BaseModel):
    """成熟度方程解 y(s) (s 为向后经过的时间) 与阈值时滞 τ"""
    y_traj: Any  # history.History，避免循环导入
    tau: float
    n_steps: int
    root_iterations: int
    dt_y: float

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class ConvergenceRow(BaseModel):
    dt: float
    sup_error: float
    order: Optional[float] = None


class PicardIteration(BaseModel):
    iteration: int
    sup_diff: float
    ratio: Optional[float] = None


class RunSummary(BaseModel):
    """simulate 命令的结果摘要，不含耗时等不可复现信息"""
    T_reached: float
    n_nodes: int
    dt: float
    w_min: float
    w_max: float
    v_min: float
    v_max: float
    compatibility_defect: float
    voc_r_w: float
    voc_r_v: float
    validated_v_range: List[float]
    v_within_validated_range: bool
    checks: Dict[str, str] = {}
    checks_passed: bool = True


# ==============================================================================
# 运行配置 (JSON 配置文件)
# ==============================================================================

class ModelParams(BaseModel):
    x1: float
    x2: float
    mu: float
    eps: float
    K: float
    b: float


class ModelRange(BaseModel):
    """验证与采样使用的有限 v 区间，缺省时取默认区间并裁剪到声明区间 I"""
    v_lo: Optional[float] = None
    v_hi: Optional[float] = None


class ModelInterval(BaseModel):
    """声明的状态区间 I，None 表示无界"""
    lo: Optional[float] = None
    hi: Optional[float] = None

    @model_validator(mode="after")
    def _ordered(self) -> "ModelInterval":
        if self.lo is not None and self.hi is not None and not self.lo < self.hi:
            raise ValueError(f"state interval must satisfy lo < hi, got ({self.lo}, {self.hi})")
        return self


class ModelConfig(BaseModel):
    """模型函数表达式 (q, β 或 γ, g, D1g, d) 与参数"""
    q: str
    beta: Optional[str] = None
    gamma: Optional[str] = None
    g: str
    d1g: str
    d: str
    params: ModelParams
    range: ModelRange = Field(default_factory=ModelRange)
    interval: ModelInterval = Field(default_factory=ModelInterval)

    @model_validator(mode="after")
    def _beta_or_gamma(self) -> "ModelConfig":
        if (self.beta is None) == (self.gamma is None):
            raise ValueError("exactly one of model.beta and model.gamma must be given")
        return self


class PrehistoryConfig(BaseModel):
    """每个通道给出 t 的表达式或节点 CSV 文件 (t,value,derivative)"""
    w: Optional[str] = None
    v: Optional[str] = None
    w_csv: Optional[str] = None
    v_csv: Optional[str] = None
    n_nodes: int = Field(default=DEMO_PREHISTORY["n_nodes"], ge=2)

    @model_validator(mode="after")
    def _one_source_per_channel(self) -> "PrehistoryConfig":
        for channel in ("w", "v"):
            expr_given = getattr(self, channel) is not None
            csv_given = getattr(self, f"{channel}_csv") is not None
            if expr_given == csv_given:
                raise ValueError(f"prehistory.{channel}: give exactly one of an expression or a CSV file")
        return self


class SolveSettings(BaseModel):
    """方法步积分设置；dt <= (x2-x1)/K 在求解器中对照模型检查"""
    dt: float = Field(default=SOLVE_CONFIG["dt"], gt=0)
    T: float = Field(default=SOLVE_CONFIG["T"], gt=0)
    dt_y: Optional[float] = Field(default=SOLVE_CONFIG["dt_y"], gt=0)
    dt_y_divisor: int = Field(default=SOLVE_CONFIG["dt_y_divisor"], ge=1)
    blowup_cap: float = Field(default=SOLVE_CONFIG["blowup_cap"], gt=0)
    alpha_cap: float = Field(default=SOLVE_CONFIG["alpha_cap"], gt=0)


class PicardSettings(BaseModel):
    T0: float = Field(default=PICARD_CONFIG["T0"], gt=0)
    tol: float = Field(default=PICARD_CONFIG["tol"], gt=0)
    max_iter: int = Field(default=PICARD_CONFIG["max_iter"], ge=1)
    grid_n: int = Field(default=PICARD_CONFIG["grid_n"], ge=2)
    seed: Optional[int] = PICARD_CONFIG["seed"]
    seed_amplitude: float = Field(default=PICARD_CONFIG["seed_amplitude"], ge=0)

    @field_validator("grid_n")
    @classmethod
    def _even_grid(cls, value: int) -> int:
        # 复合Simpson需要偶数个区间
        if value % 2:
            raise ValueError("picard.grid_n must be even")
        return value


class ValidationConfig(BaseModel):
    grid_nx: int = Field(default=VALIDATION_CONFIG["grid_nx"], ge=2)
    grid_nv: int = Field(default=VALIDATION_CONFIG["grid_nv"], ge=2)
    tol_consistency: float = Field(default=VALIDATION_CONFIG["tol_consistency"], gt=0)
    fd_step: float = Field(default=VALIDATION_CONFIG["fd_step"], gt=0)


class GridPlan(BaseModel):
    """模型验证用的 (x, v) 采样网格: [x2-b, x2+b] × [v_lo, v_hi]"""
    nx: int = Field(ge=2)
    nv: int = Field(ge=2)
    v_lo: float
    v_hi: float
    tol_consistency: float = VALIDATION_CONFIG["tol_consistency"]
    fd_step: float = VALIDATION_CONFIG["fd_step"]

    @model_validator(mode="after")
    def _finite_range(self) -> "GridPlan":
        if not (math.isfinite(self.v_lo) and math.isfinite(self.v_hi) and self.v_lo < self.v_hi):
            raise ValueError(f"grid v-range must be finite with v_lo < v_hi, got [{self.v_lo}, {self.v_hi}]")
        return self


class VerifyConfig(BaseModel):
    seed: int = VERIFY_CONFIG["seed"]
    sobolev_samples: int = Field(default=VERIFY_CONFIG["sobolev_samples"], ge=1)
    tau_samples: int = Field(default=VERIFY_CONFIG["tau_samples"], ge=1)
    tau_pairs: int = Field(default=VERIFY_CONFIG["tau_pairs"], ge=1)
    alpha: float = Field(default=VERIFY_CONFIG["alpha"], gt=0)
    calG_samples: int = Field(default=VERIFY_CONFIG["calG_samples"], ge=1)
    calG_pairs: int = Field(default=VERIFY_CONFIG["calG_pairs"], ge=1)
    calG_delta: float = Field(default=VERIFY_CONFIG["calG_delta"], gt=0)
    rhs_samples: int = Field(default=VERIFY_CONFIG["rhs_samples"], ge=1)
    random_nodes: int = Field(default=VERIFY_CONFIG["random_nodes"], ge=2)
    amplitude: float = Field(default=VERIFY_CONFIG["amplitude"], gt=0)
    parallel: bool = VERIFY_CONFIG["parallel"]


class ConvergeConfig(BaseModel):
    T: float = Field(default=CONVERGE_CONFIG["T"], gt=0)
    dts: List[float] = Field(default_factory=lambda: list(CONVERGE_CONFIG["dts"]))
    compatible: bool = False  # True 时使用构造的相容前史
    min_order: Optional[float] = Field(default=CONVERGE_CONFIG.get("min_order"), gt=0)  # 给定时检查观测阶

    @field_validator("dts")
    @classmethod
    def _descending(cls, value: List[float]) -> List[float]:
        if len(value) < 2:
            raise ValueError("converge.dts needs at least two step sizes")
        if any(dt <= 0 for dt in value) or any(a <= b for a, b in zip(value, value[1:])):
            raise ValueError("converge.dts must be positive and strictly descending")
        return value


class OutputConfig(BaseModel):
    dir: str = OUTPUT_CONFIG["dir"]
    trajectory_csv: str = OUTPUT_CONFIG["trajectory_csv"]
    summary_json: str = OUTPUT_CONFIG["summary_json"]
    report_json: str = OUTPUT_CONFIG["report_json"]
    picard_csv: str = OUTPUT_CONFIG["picard_csv"]
    picard_log_csv: str = OUTPUT_CONFIG["picard_log_csv"]
    converge_csv: str = OUTPUT_CONFIG["converge_csv"]
    float_format: str = OUTPUT_CONFIG["float_format"]


class RunConfig(BaseModel):
    """一次命令行运行的完整配置；缺省段使用 config.py 中的默认值"""
    model: ModelConfig = Field(default_factory=lambda: ModelConfig(**DEMO_MODEL))
    prehistory: PrehistoryConfig = Field(
        default_factory=lambda: PrehistoryConfig(
            w=DEMO_PREHISTORY["w"], v=DEMO_PREHISTORY["v"], n_nodes=DEMO_PREHISTORY["n_nodes"]
        )
    )
    solve: SolveSettings = Field(default_factory=SolveSettings)
    picard: PicardSettings = Field(default_factory=PicardSettings)
    validation: ValidationConfig = Field(default_factory=ValidationConfig)
    verify: VerifyConfig = Field(default_factory=VerifyConfig)
    converge: ConvergeConfig = Field(default_factory=ConvergeConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    model_config = ConfigDict(extra="forbid", protected_namespaces=())
