# threshold_dde/model.py

"""
模型定义、假设验证与导出常数

模型:
    w'(t) = q(v(t)) w(t)
    v'(t) = β(v(t-τ)) 𝒢(v_t) w(t-τ) - μ v(t)
其中 τ = τ(v_t) 由成熟度方程 y' = -g(y, v_t(-s)) 的阈值条件隐式给出。
"""

import math
from typing import Callable, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from config import DEMO_MODEL, VALIDATION_CONFIG, get_slack
from data_models import (
    CheckItem, CheckReport, DerivedBounds, GridPlan, ModelConfig, ValidationConfig
)
from errors import BoundsError, ExprDomainError, ModelError
from expr import Expr, parse
from utils.logger import get_logger

logger = get_logger("Model")

V_VARS = ("v",)
XV_VARS = ("x", "v")


class ModelSpec(BaseModel):
    """
    完整的模型定义，构造后不可变

    beta 与 gamma 恰好给出一个；只给 gamma 时 β(v) = γ(v) / g(x1, v)。
    """
    q: Expr
    beta: Optional[Expr] = None
    gamma: Optional[Expr] = None
    g: Expr
    d1g: Expr
    d: Expr
    x1: float
    x2: float
    mu: float
    eps: float
    K: float
    b: float
    I_lo: float = -math.inf
    I_hi: float = math.inf
    v_lo: float = VALIDATION_CONFIG["default_v_range"][0]
    v_hi: float = VALIDATION_CONFIG["default_v_range"][1]

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    def model_post_init(self, __context) -> None:
        if (self.beta is None) == (self.gamma is None):
            raise ModelError("exactly one of beta and gamma must be supplied")
        if not (self.K > 0 and self.b > 0):
            raise ModelError(f"K and b must be positive to define h = b/K (K={self.K}, b={self.b})")
        if not self.I_lo < self.I_hi:
            raise ModelError(f"empty state interval ({self.I_lo}, {self.I_hi})")
        if not self.v_lo < self.v_hi:
            raise ModelError(f"empty validation range [{self.v_lo}, {self.v_hi}]")

    # ------------------------------------------------------------------
    # 导出量
    # ------------------------------------------------------------------

    @property
    def h(self) -> float:
        """最大时滞 h = b/K"""
        return self.b / self.K

    @property
    def min_delay(self) -> float:
        """τ 的下界 (x2-x1)/K，也是方法步的步长上限"""
        return (self.x2 - self.x1) / self.K

    @property
    def max_delay(self) -> float:
        return (self.x2 - self.x1) / self.eps

    def in_interval(self, v: float) -> bool:
        return self.I_lo < v < self.I_hi

    def in_validated_range(self, v: float) -> bool:
        return self.v_lo <= v <= self.v_hi

    # ------------------------------------------------------------------
    # 模型函数求值
    # ------------------------------------------------------------------

    def beta_eval(self, v: float) -> float:
        if self.beta is not None:
            return self.beta(v)
        denom = self.g(self.x1, v)
        if denom == 0.0:
            raise ExprDomainError(f"beta = gamma/g(x1, v) undefined: g({self.x1}, {v}) = 0")
        return self.gamma(v) / denom

    def beta_vector(self, v) -> np.ndarray:
        if self.beta is not None:
            return self.beta.vector(v)
        denom = self.g.vector(self.x1, v)
        if np.any(denom == 0.0):
            raise ExprDomainError("beta = gamma/g(x1, v) undefined: g(x1, v) = 0 on sample")
        return self.gamma.vector(v) / denom

    def k_eval(self, x: float, v: float) -> float:
        """𝒢 指数中的被积函数 d - D1g"""
        return self.d(x, v) - self.d1g(x, v)

    def k_vector(self, x, v) -> np.ndarray:
        return self.d.vector(x, v) - self.d1g.vector(x, v)

    def default_grid(self, validation: Optional[ValidationConfig] = None) -> GridPlan:
        validation = validation or ValidationConfig()
        return GridPlan(
            nx=validation.grid_nx,
            nv=validation.grid_nv,
            v_lo=self.v_lo,
            v_hi=self.v_hi,
            tol_consistency=validation.tol_consistency,
            fd_step=validation.fd_step,
        )

    def describe(self) -> str:
        beta = f"beta={self.beta.source}" if self.beta is not None else f"gamma={self.gamma.source}"
        return (
            f"q={self.q.source}, {beta}, g={self.g.source}, d1g={self.d1g.source}, d={self.d.source}, "
            f"x1={self.x1}, x2={self.x2}, mu={self.mu}, eps={self.eps}, K={self.K}, b={self.b}, h={self.h:.6g}"
        )


def derive_beta(gamma: Expr, g: Expr, x1: float) -> Callable[[float], float]:
    """β(v) = γ(v) / g(x1, v)"""

    def beta(v: float) -> float:
        denom = g(x1, v)
        if denom == 0.0:
            raise ExprDomainError(f"g({x1}, {v}) = 0")
        return gamma(v) / denom

    return beta


# ==============================================================================
# 构造
# ==============================================================================

def _resolve_range(cfg: ModelConfig) -> Tuple[float, float, float, float]:
    I_lo = -math.inf if cfg.interval.lo is None else cfg.interval.lo
    I_hi = math.inf if cfg.interval.hi is None else cfg.interval.hi
    default_lo, default_hi = VALIDATION_CONFIG["default_v_range"]
    v_lo = cfg.range.v_lo if cfg.range.v_lo is not None else max(default_lo, I_lo)
    v_hi = cfg.range.v_hi if cfg.range.v_hi is not None else min(default_hi, I_hi)
    return I_lo, I_hi, v_lo, v_hi


def build_model_spec(cfg: ModelConfig) -> ModelSpec:
    """从配置构造 ModelSpec；表达式错误以 ExprError 抛出"""
    I_lo, I_hi, v_lo, v_hi = _resolve_range(cfg)
    p = cfg.params
    spec = ModelSpec(
        q=parse(cfg.q, V_VARS),
        beta=parse(cfg.beta, V_VARS) if cfg.beta is not None else None,
        gamma=parse(cfg.gamma, V_VARS) if cfg.gamma is not None else None,
        g=parse(cfg.g, XV_VARS),
        d1g=parse(cfg.d1g, XV_VARS),
        d=parse(cfg.d, XV_VARS),
        x1=p.x1, x2=p.x2, mu=p.mu, eps=p.eps, K=p.K, b=p.b,
        I_lo=I_lo, I_hi=I_hi, v_lo=v_lo, v_hi=v_hi,
    )
    logger.debug(f"Model built: {spec.describe()}")
    return spec


def demo_model_spec() -> ModelSpec:
    """内置演示模型"""
    return build_model_spec(ModelConfig(**DEMO_MODEL))


# ==============================================================================
# 验证
# ==============================================================================

def _grid_points(spec: ModelSpec, grid: GridPlan) -> Tuple[np.ndarray, np.ndarray]:
    xs = np.linspace(spec.x2 - spec.b, spec.x2 + spec.b, grid.nx)
    vs = np.linspace(grid.v_lo, grid.v_hi, grid.nv)
    return xs, vs


def _lipschitz_1d(values: np.ndarray, points: np.ndarray) -> float:
    """相邻采样点差商的最大值"""
    return float(np.max(np.abs(np.diff(values)) / np.diff(points)))


def _lipschitz_2d(values: np.ndarray, xs: np.ndarray, vs: np.ndarray) -> Tuple[float, float]:
    """values[i, j] = f(xs[i], vs[j])，返回 (x 方向, v 方向) 的经验常数"""
    lx = float(np.max(np.abs(np.diff(values, axis=0)) / np.diff(xs)[:, None]))
    lv = float(np.max(np.abs(np.diff(values, axis=1)) / np.diff(vs)[None, :]))
    return lx, lv


def validate(spec: ModelSpec, grid: Optional[GridPlan] = None) -> CheckReport:
    """
    在有限网格上检查模型假设

    失败作为报告项返回，不抛出异常。
    """
    grid = grid or spec.default_grid()
    report = CheckReport()
    slack = get_slack("model_param")
    gap = spec.x2 - spec.x1

    report.add(CheckItem.condition("model_param.x1_lt_x2", spec.x1 < spec.x2, f"x1={spec.x1}, x2={spec.x2}"))
    report.add(CheckItem.condition("model_param.eps_positive", spec.eps > 0, f"eps={spec.eps}"))
    report.add(CheckItem.upper_bound("model_param.K_ge_eps", spec.eps, spec.K, slack, "eps <= K"))
    report.add(CheckItem.condition("model_param.b_positive", spec.b > 0, f"b={spec.b}"))
    report.add(CheckItem.condition("model_param.mu_nonneg", spec.mu >= 0, f"mu={spec.mu}"))
    report.add(CheckItem.condition(
        "model_param.delay_interval",
        0 < gap < spec.b * spec.eps / spec.K,
        f"x2-x1={gap:.6g} must lie in (0, b*eps/K) = (0, {spec.b * spec.eps / spec.K:.6g})",
        measured=gap,
    ))
    report.add(CheckItem.condition(
        "model_param.range_in_interval",
        spec.I_lo <= grid.v_lo and grid.v_hi <= spec.I_hi,
        f"validated range [{grid.v_lo}, {grid.v_hi}] within declared I = ({spec.I_lo}, {spec.I_hi})",
    ))

    xs, vs = _grid_points(spec, grid)
    X, V = np.meshgrid(xs, vs, indexing="ij")
    context = f"grid {grid.nx}x{grid.nv} on [{xs[0]:.6g}, {xs[-1]:.6g}] x [{grid.v_lo:.6g}, {grid.v_hi:.6g}]"

    try:
        g_vals = spec.g.vector(X, V)
    except ExprDomainError as e:
        report.add(CheckItem.condition("model_bound.g_domain", False, str(e)))
        return report

    report.add(CheckItem.upper_bound(
        "model_bound.g_lower", spec.eps, float(np.min(g_vals)), get_slack("model_bound"), f"eps <= min g, {context}"
    ))
    report.add(CheckItem.upper_bound(
        "model_bound.g_upper", float(np.max(g_vals)), spec.K, get_slack("model_bound"), f"max g <= K, {context}"
    ))

    # D1g 与 g 的 x 向中心差分一致
    try:
        step = grid.fd_step
        fd = (spec.g.vector(X + step, V) - spec.g.vector(X - step, V)) / (2.0 * step)
        d1g_vals = spec.d1g.vector(X, V)
        defect = float(np.max(np.abs(d1g_vals - fd)))
        report.add(CheckItem.upper_bound(
            "model_consistency.d1g", defect, grid.tol_consistency, get_slack("model_consistency"),
            f"max |D1g - dg/dx (fd step {step:g})|",
        ))
    except ExprDomainError as e:
        report.add(CheckItem.condition("model_consistency.d1g", False, str(e)))

    for name, fn in (("q", spec.q.vector), ("beta", spec.beta_vector)):
        try:
            vals = fn(vs)
            lip = _lipschitz_1d(vals, vs)
            report.add(CheckItem.condition(f"model_lipschitz.{name}", math.isfinite(lip),
                                           f"empirical Lipschitz constant of {name} on v-grid", measured=lip))
        except ExprDomainError as e:
            report.add(CheckItem.condition(f"model_lipschitz.{name}", False, str(e)))

    try:
        k_vals = spec.k_vector(X, V)
        lx, lv = _lipschitz_2d(spec.d.vector(X, V), xs, vs)
        report.add(CheckItem.condition("model_lipschitz.d", math.isfinite(max(lx, lv)),
                                       "empirical Lipschitz constant of d on grid", measured=max(lx, lv)))
        report.add(CheckItem.condition("model_growth.k_bounded", bool(np.all(np.isfinite(k_vals))),
                                       "d - D1g bounded on grid", measured=float(np.max(np.abs(k_vals)))))
    except ExprDomainError as e:
        report.add(CheckItem.condition("model_lipschitz.d", False, str(e)))

    lx, lv = _lipschitz_2d(g_vals, xs, vs)
    report.add(CheckItem.condition("model_lipschitz.g", math.isfinite(max(lx, lv)),
                                   "empirical Lipschitz constant of g on grid", measured=max(lx, lv)))

    try:
        q_sup = float(np.max(np.abs(spec.q.vector(vs))))
        report.add(CheckItem.condition("model_growth.q_bounded", math.isfinite(q_sup), "sup |q| on v-grid",
                                       measured=q_sup))
        C_beta, a_beta = _linear_growth_fit(vs, spec.beta_vector(vs))
        report.add(CheckItem.condition("model_growth.beta_linear", math.isfinite(C_beta + a_beta),
                                       f"|beta(v)| <= {C_beta:.6g}|v| + {a_beta:.6g} on v-grid", measured=C_beta))
    except ExprDomainError as e:
        report.add(CheckItem.condition("model_growth.q_beta", False, str(e)))

    n_fail = len(report.failures)
    if n_fail:
        logger.warning(f"Model validation: {n_fail} of {len(report.items)} checks failed")
    else:
        logger.info(f"Model validation passed ({len(report.items)} checks, {context})")
    return report


def _linear_growth_fit(vs: np.ndarray, beta_vals: np.ndarray) -> Tuple[float, float]:
    """
    |β| ≈ C|v| + a 的最小二乘拟合，再整体上移使直线控制所有样本

    C 与 a 均截断为非负。
    """
    abs_v = np.abs(vs)
    abs_b = np.abs(beta_vals)
    if np.ptp(abs_v) > 0:
        C, _ = np.polyfit(abs_v, abs_b, 1)
        C = max(float(C), 0.0)
    else:
        C = 0.0
    a = max(float(np.max(abs_b - C * abs_v)), 0.0)
    return C, a


def derive_bounds(spec: ModelSpec, grid: Optional[GridPlan] = None) -> DerivedBounds:
    """
    网格最大化得到 M_q, M_k, M_G = K·exp(h·M_k) 以及经验 Lipschitz 常数

    Raises:
        BoundsError: 网格上出现非有限函数值
    """
    grid = grid or spec.default_grid()
    xs, vs = _grid_points(spec, grid)
    X, V = np.meshgrid(xs, vs, indexing="ij")

    try:
        q_vals = spec.q.vector(vs)
        beta_vals = spec.beta_vector(vs)
        g_vals = spec.g.vector(X, V)
        d_vals = spec.d.vector(X, V)
        k_vals = spec.k_vector(X, V)
    except ExprDomainError as e:
        raise BoundsError(f"model function not finite on the validation grid: {e}") from None

    M_q = float(np.max(np.abs(q_vals)))
    M_k = float(np.max(np.abs(k_vals)))
    if M_k == 0.0:
        M_G = spec.K
    else:
        M_G = spec.K * math.exp(spec.h * M_k)

    g_lx, g_lv = _lipschitz_2d(g_vals, xs, vs)
    d_lx, d_lv = _lipschitz_2d(d_vals, xs, vs)
    C_beta, a_beta = _linear_growth_fit(vs, beta_vals)

    bounds = DerivedBounds(
        M_q=M_q,
        M_k=M_k,
        M_G=M_G,
        L_g=max(g_lx, g_lv),
        L_q=_lipschitz_1d(q_vals, vs),
        L_beta=_lipschitz_1d(beta_vals, vs),
        L_d=max(d_lx, d_lv),
        C_beta=C_beta,
        a_beta=a_beta,
        M_beta=float(np.max(np.abs(beta_vals))),
        M_g=float(np.max(np.abs(g_vals))),
        v_lo=grid.v_lo,
        v_hi=grid.v_hi,
    )
    logger.info(
        f"Derived bounds: M_q={bounds.M_q:.6g}, M_k={bounds.M_k:.6g}, M_G={bounds.M_G:.6g}, "
        f"L_g={bounds.L_g:.6g}, C_beta={bounds.C_beta:.6g}, a_beta={bounds.a_beta:.6g}"
    )
    return bounds
