# threshold_dde/maturation.py

"""
成熟度方程与阈值时滞

对前史段 φ (定义在 [-h, 0])，向后经过时间 s 的成熟度 y 满足
    y'(s) = -g(y(s), φ(-s)),  y(0) = x2
阈值时滞 τ(φ) 为 y(τ) = x1 的唯一根。由 ε <= g <= K 得
    τ ∈ [(x2-x1)/K, (x2-x1)/ε] ⊂ (0, h)。
"""

import math
from typing import Optional, Tuple

import numpy as np

from config import SOLVE_CONFIG
from data_models import MaturationResult
from errors import MaturationError, NoBracketError, StateRangeError
from history import History
from model import ModelSpec

# 求根停止条件
ROOT_VALUE_RTOL = 1e-12
ROOT_WIDTH_TOL = 1e-14
MAX_BISECTIONS = 200

# 向量化积分在最早穿越时刻之后每块的步数
CROSSING_CHUNK = 8


def default_dt_y(spec: ModelSpec, divisor: Optional[int] = None) -> float:
    """(x2-x1)/(divisor·K)：最早可能的穿越前至少 divisor 步"""
    divisor = divisor or SOLVE_CONFIG["dt_y_divisor"]
    return (spec.x2 - spec.x1) / (divisor * spec.K)


def _s_grid(h: float, dt_y: float) -> np.ndarray:
    """0, dt_y, 2dt_y, ... , h (最后一步截断到 h)"""
    n = max(1, int(math.ceil(h / dt_y - 1e-9)))
    s = np.arange(n + 1, dtype=float) * dt_y
    s[-1] = h
    return s


def _phi_along(phi: History, s: np.ndarray, h: float) -> np.ndarray:
    """φ(-s)，s > h 时截断为 φ(-h)"""
    return phi.eval_array(-np.minimum(s, h))


def _check_state_range(values: np.ndarray, spec: ModelSpec):
    if math.isinf(spec.I_lo) and math.isinf(spec.I_hi):
        return
    bad = (values <= spec.I_lo) | (values >= spec.I_hi)
    if np.any(bad):
        v = float(values[np.argmax(bad)])
        raise StateRangeError(f"history value {v!r} outside declared state interval ({spec.I_lo}, {spec.I_hi})")


def _check_containment(y: np.ndarray, spec: ModelSpec):
    """y 必须留在闭球 B(x2, b) 内"""
    dev = np.abs(y - spec.x2)
    if np.any(dev > spec.b * (1 + 1e-12)):
        raise MaturationError(
            f"maturity left the ball |y - x2| <= b (max deviation {float(np.max(dev)):.6g} > b={spec.b}); "
            "the model violates its standing assumptions"
        )


def _truncate_after_crossing(s: np.ndarray, y: np.ndarray, m: np.ndarray, x1: float):
    """保留到首个 y <= x1 的节点之后再多一步"""
    below = np.nonzero(y <= x1)[0]
    if below.size == 0:
        raise NoBracketError(
            f"maturity did not reach x1={x1} before s=h={s[-1]:.6g} (min y = {float(np.min(y)):.6g})"
        )
    end = min(int(below[0]) + 2, s.size)
    return s[:end], y[:end], m[:end]


def _solve_y_vectorized(phi: History, spec: ModelSpec, s: np.ndarray):
    """
    g 不依赖成熟度时 RK4 退化为逐步Simpson求积，可分块向量化

    首块到最早可能的穿越时刻 (x2-x1)/K 为止，此后每块 CROSSING_CHUNK 步，
    g 只在穿越点之后至多一块的前史上求值。
    """
    h = spec.h
    n = s.size - 1
    first = int(np.searchsorted(s, spec.min_delay, side="right"))
    stop = min(max(first, 1), n)
    start = 0
    y_parts = [np.array([spec.x2])]
    m_parts = []
    y_last = spec.x2
    while True:
        seg = s[start:stop + 1]
        mid = 0.5 * (seg[:-1] + seg[1:])
        phi_nodes = _phi_along(phi, seg, h)
        phi_mid = _phi_along(phi, mid, h)
        _check_state_range(phi_nodes, spec)
        _check_state_range(phi_mid, spec)

        g_nodes = spec.g.vector(np.full_like(phi_nodes, spec.x2), phi_nodes)
        g_mid = spec.g.vector(np.full_like(phi_mid, spec.x2), phi_mid)
        increments = np.diff(seg) / 6.0 * (g_nodes[:-1] + 4.0 * g_mid + g_nodes[1:])
        y_seg = y_last - np.cumsum(increments)

        m_parts.append(-g_nodes[:-1])
        y_parts.append(y_seg)
        y_last = float(y_seg[-1])
        crossed = np.nonzero(y_seg <= spec.x1)[0]
        # 穿越后需要再多一个节点
        if stop == n or (crossed.size and int(crossed[0]) < y_seg.size - 1):
            m_parts.append(-g_nodes[-1:])
            break
        start, stop = stop, min(stop + CROSSING_CHUNK, n)

    y = np.concatenate(y_parts)
    m = np.concatenate(m_parts)
    return _truncate_after_crossing(s[:y.size], y, m, spec.x1)


def _solve_y_loop(phi: History, spec: ModelSpec, s: np.ndarray):
    """经典RK4逐步积分，越过 x1 后再多走一步即停"""
    h = spec.h
    mid = 0.5 * (s[:-1] + s[1:])
    phi_nodes = _phi_along(phi, s, h).tolist()
    phi_mid = _phi_along(phi, mid, h).tolist()
    g = spec.g.compile_scalar()
    x1, x2, b = spec.x1, spec.x2, spec.b
    checked_range = not (math.isinf(spec.I_lo) and math.isinf(spec.I_hi))

    ys = [x2]
    ms = [-g(x2, phi_nodes[0])]
    crossed_at = None
    n = len(s) - 1
    for k in range(n):
        if checked_range and not (spec.I_lo < phi_mid[k] < spec.I_hi and spec.I_lo < phi_nodes[k + 1] < spec.I_hi):
            raise StateRangeError(f"history value outside declared state interval ({spec.I_lo}, {spec.I_hi})")
        dt = s[k + 1] - s[k]
        y = ys[-1]
        k1 = ms[-1]
        k2 = -g(y + 0.5 * dt * k1, phi_mid[k])
        k3 = -g(y + 0.5 * dt * k2, phi_mid[k])
        k4 = -g(y + dt * k3, phi_nodes[k + 1])
        y_new = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if abs(y_new - x2) > b * (1 + 1e-12):
            raise MaturationError(
                f"maturity left the ball |y - x2| <= b at s={s[k + 1]:.6g} (y={y_new:.6g}); "
                "the model violates its standing assumptions"
            )
        ys.append(y_new)
        ms.append(-g(y_new, phi_nodes[k + 1]))
        if crossed_at is not None:
            break
        if y_new <= x1:
            crossed_at = k + 1

    s_out = s[:len(ys)]
    return _truncate_after_crossing(s_out, np.array(ys), np.array(ms), x1)


def solve_y(phi: History, spec: ModelSpec, dt_y: Optional[float] = None) -> History:
    """
    RK4 定步长积分成熟度方程，返回 [0, s_end] 上的Hermite稠密输出

    节点导数取 -g(y_k, φ(-s_k))。积分在首个 y <= x1 的节点之后再走一步停止，
    且不超过 s = h。

    Raises:
        MaturationError: y 离开 B(x2, b)
        NoBracketError: s = h 之前 y 未到达 x1
        StateRangeError: φ 的取值离开声明区间 I
    """
    h = spec.h
    if abs(phi.a + h) > 1e-9 * max(1.0, h) or abs(phi.b) > 1e-12 * max(1.0, h):
        raise ValueError(f"maturation needs a history on [-h, 0] = [{-h}, 0], got {phi!r}")
    dt_y = dt_y or default_dt_y(spec)
    if dt_y <= 0:
        raise ValueError("dt_y must be positive")

    s = _s_grid(h, dt_y)
    if "x" in spec.g.free_variables:
        s_out, y, m = _solve_y_loop(phi, spec, s)
    else:
        s_out, y, m = _solve_y_vectorized(phi, spec, s)
    _check_containment(y, spec)
    return History(s_out, y, m)


def find_tau(y_traj: History, x1: float) -> Tuple[float, int]:
    """
    二分法求 y(τ) = x1，返回 (τ, 二分次数)

    稠密输出严格单调递减 (y' <= -ε)，根唯一。
    """
    ys = y_traj.values
    if not ys[0] > x1:
        raise NoBracketError(f"y(0)={ys[0]!r} is not above x1={x1!r}")
    if np.any(np.diff(ys) >= 0):
        raise MaturationError("maturity node values are not strictly decreasing")
    below = np.nonzero(ys <= x1)[0]
    if below.size == 0:
        raise NoBracketError(f"maturity never reaches x1={x1!r} on [0, {y_traj.b:.6g}]")

    k = int(below[0])
    if ys[k] == x1:
        return float(y_traj.times[k]), 0

    lo, hi = float(y_traj.times[k - 1]), float(y_traj.times[k])
    scale = abs(ys[0] - x1)
    iterations = 0
    mid = 0.5 * (lo + hi)
    while iterations < MAX_BISECTIONS:
        iterations += 1
        mid = 0.5 * (lo + hi)
        value = y_traj.eval(mid) - x1
        if abs(value) <= ROOT_VALUE_RTOL * scale or hi - lo <= ROOT_WIDTH_TOL:
            break
        if value > 0:
            lo = mid
        else:
            hi = mid
    return mid, iterations


def mature(phi: History, spec: ModelSpec, dt_y: Optional[float] = None) -> MaturationResult:
    """solve_y + find_tau"""
    dt_y = dt_y or default_dt_y(spec)
    y_traj = solve_y(phi, spec, dt_y)
    tau, iterations = find_tau(y_traj, spec.x1)
    return MaturationResult(
        y_traj=y_traj,
        tau=tau,
        n_steps=len(y_traj) - 1,
        root_iterations=iterations,
        dt_y=dt_y,
    )


def tau_of(phi: History, spec: ModelSpec, dt_y: Optional[float] = None) -> float:
    return mature(phi, spec, dt_y).tau


def y_growth_bound(phi: History, spec: ModelSpec, t: float, L: float) -> float:
    """
    |y(t)| 的指数增长上界
        [x2 + (|g(x2, φ(0))| + 2‖φ‖_C + L·x2)·t]·e^{Lt}
    """
    g0 = abs(spec.g(spec.x2, phi.eval(0.0)))
    return (spec.x2 + (g0 + 2.0 * phi.sup_norm() + L * spec.x2) * t) * math.exp(L * t)


def y_history_lip_check(
    phi: History, psi: History, spec: ModelSpec, L: float, dt_y: Optional[float] = None
) -> float:
    """
    max_{t ∈ [0, min(τ_φ, τ_ψ)]} (|y_φ(t) - y_ψ(t)| - L‖φ-ψ‖_C·t·e^{Lt})

    结果应不超过数值容差。
    """
    res_phi = mature(phi, spec, dt_y)
    res_psi = mature(psi, spec, dt_y)
    t_end = min(res_phi.tau, res_psi.tau)
    diff_sup = (phi - psi).sup_norm()

    ts = np.union1d(res_phi.y_traj.times, res_psi.y_traj.times)
    ts = np.append(ts[ts < t_end], t_end)
    gap = np.abs(res_phi.y_traj.eval_array(ts) - res_psi.y_traj.eval_array(ts))
    bound = L * diff_sup * ts * np.exp(L * ts)
    return float(np.max(gap - bound))
