# threshold_dde/errors.py

"""
异常层次结构

命令行退出码约定: ConfigError -> 2, 其余 ThresholdDDEError -> 1
"""

from typing import Optional


class ThresholdDDEError(Exception):
    """所有领域异常的基类"""

    exit_code = 1


class ConfigError(ThresholdDDEError):
    """配置文件无法解析或内容非法"""

    exit_code = 2


# ==============================================================================
# 表达式
# ==============================================================================

class ExprError(ThresholdDDEError, ValueError):
    """表达式解析/求值错误"""


class ExprSyntaxError(ExprError):
    """语法错误，携带字符偏移量"""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class UnknownIdentifierError(ExprError):
    """未声明的变量或未知函数"""

    def __init__(self, name: str, offset: Optional[int] = None):
        where = f" (offset {offset})" if offset is not None else ""
        super().__init__(f"unknown identifier '{name}'{where}")
        self.name = name
        self.offset = offset


class ArityError(ExprError):
    """函数调用参数个数错误"""

    def __init__(self, name: str, n_args: int, offset: Optional[int] = None):
        super().__init__(f"function '{name}' takes exactly 1 argument, got {n_args}")
        self.name = name
        self.n_args = n_args
        self.offset = offset


class ExprDomainError(ExprError):
    """定义域错误: log(<=0), sqrt(<0), 除零, 溢出或非有限结果"""


# ==============================================================================
# 数值部分
# ==============================================================================

class HistoryDomainError(ThresholdDDEError, ValueError):
    """在History定义域之外求值"""


class ModelError(ThresholdDDEError):
    """模型定义不满足前提"""


class BoundsError(ModelError):
    """导出常数时遇到非有限函数值"""


class MaturationError(ThresholdDDEError):
    """成熟度方程求解失败 (y 离开 B(x2, b) 等)"""


class NoBracketError(MaturationError):
    """在 s = h 之前 y 没有到达 x1"""


class StateRangeError(ThresholdDDEError):
    """v 离开声明的状态区间 I"""


class SolverError(ThresholdDDEError):
    """积分器错误基类"""


class BlowUpError(SolverError):
    """|w| 或 |v| 超过 blowup_cap"""

    def __init__(self, t: float, w: float, v: float, cap: float):
        super().__init__(f"blow-up at t={t:.6g}: |w|={abs(w):.6g}, |v|={abs(v):.6g} > cap {cap:.6g}")
        self.t = t


class PrehistoryError(SolverError):
    """前史不满足要求 (定义域或Lipschitz上界)"""


class StepSizeError(SolverError):
    """步长超过最小时滞 (x2-x1)/K"""


class PicardConvergenceError(SolverError):
    """Picard迭代在 max_iter 内未收敛"""

    def __init__(self, iterations: int, last_diff: float, last_ratio: Optional[float]):
        ratio = "n/a" if last_ratio is None else f"{last_ratio:.4g}"
        super().__init__(
            f"Picard iteration did not converge in {iterations} iterations: "
            f"last sup-diff={last_diff:.3e}, last contraction ratio={ratio}"
        )
        self.iterations = iterations
        self.last_diff = last_diff
        self.last_ratio = last_ratio
