# threshold_dde/solver.py

"""
积分器

    x'(t) = F(x_t),  x_0 = Φ  (t ∈ [-h, 0])

MethodOfStepsSolver: 经典RK4方法步，Hermite稠密输出
PicardSolver: 第一个时滞区间上的不动点迭代，作为积分器的参照解
"""

import math
import time
from enum import Enum
from typing import Any, Dict, List, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_simpson

from config import OUTPUT_CONFIG
from data_models import PicardIteration, PicardSettings, RhsValue, SolveSettings
from errors import BlowUpError, PicardConvergenceError, PrehistoryError, StateRangeError, StepSizeError
from history import History, Prehistory, SegmentView, hermite_piece, segment
from maturation import default_dt_y
from model import ModelSpec
from rhs import DelayFunctional, assemble_F, delay_functional, rhs_F
from utils.logger import LoggerMixin, get_logger, log_performance

logger = get_logger("Solver")

CHANNELS = ("w", "v")


class SolverStatus(Enum):
    """求解器运行状态"""
    NOT_STARTED = "NOT_STARTED"
    RUNNING = "RUNNING"
    COMPLETED = "COMPLETED"
    FAILED = "FAILED"


# ==============================================================================
# 轨线
# ==============================================================================

class Trajectory:
    """
    解 x = (w, v) 在 [-h, T] 上的记录

    两个通道共用节点时间。t <= 0 的节点逐点复现前史，之后只追加。
    分段系数单独存储: t = 0 处的节点导数保留 Φ'(0⁻)，[0, t_1] 段以 F(Φ) 为起点斜率。
    """

    _NODE_KEYS = ("t", "w", "v", "dw", "dv", "tau", "calG")
    _SEGMENT_KEYS = ("H",) + tuple(f"{c}_c{k}" for c in CHANNELS for k in range(4))

    def __init__(self, prehistory: Prehistory, capacity: int = 1024):
        w, v = prehistory.w, prehistory.v
        if not np.array_equal(w.times, v.times):
            w, v = w.resampled(v.times), v.resampled(w.times)

        n0 = len(w)
        self._capacity = max(capacity, n0 + 1)
        self._buf: Dict[str, np.ndarray] = {
            key: np.full(self._capacity, np.nan) for key in self._NODE_KEYS + self._SEGMENT_KEYS
        }
        b = self._buf
        b["t"][:n0] = w.times
        b["H"][:n0 - 1] = w.coefficients()[0]
        for name, hist in (("w", w), ("v", v)):
            b[name][:n0] = hist.values
            b["d" + name][:n0] = hist.derivs
            for k, coef in enumerate(hist.coefficients()[1:]):
                b[f"{name}_c{k}"][:n0 - 1] = coef

        self.prehistory = prehistory
        self._h = prehistory.h
        self._n0 = n0
        self._n = n0
        self._right_slope = {"w": float(w.derivs[-1]), "v": float(v.derivs[-1])}

    # ------------------------------------------------------------------
    # 写入
    # ------------------------------------------------------------------

    def _grow(self):
        self._capacity *= 2
        for key, arr in self._buf.items():
            grown = np.full(self._capacity, np.nan)
            grown[:arr.size] = arr
            self._buf[key] = grown

    def set_start_slope(self, dw: float, dv: float, tau: float = math.nan, calG: float = math.nan):
        """t = 0 右侧的斜率 (第一段的起点导数) 以及该点的 τ 与 𝒢"""
        if self._n != self._n0:
            raise RuntimeError("start slope can only be set before the first step")
        self._right_slope = {"w": dw, "v": dv}
        self._buf["tau"][self._n0 - 1] = tau
        self._buf["calG"][self._n0 - 1] = calG

    def append(self, t: float, w: float, v: float, dw: float, dv: float,
               tau: float = math.nan, calG: float = math.nan):
        """提交新节点，同时写入 [t_n, t] 段的三次系数"""
        n = self._n
        b = self._buf
        t0 = b["t"][n - 1]
        if not t > t0:
            raise ValueError(f"node t={t!r} must lie after the current end {t0!r}")
        if n == self._capacity:
            self._grow()
            b = self._buf

        b["H"][n - 1] = t - t0
        for name, y1, m1 in (("w", w, dw), ("v", v, dv)):
            coefs = hermite_piece(t0, b[name][n - 1], self._right_slope[name], t, y1, m1)
            for k, c in enumerate(coefs):
                b[f"{name}_c{k}"][n - 1] = c

        for key, value in zip(self._NODE_KEYS, (t, w, v, dw, dv, tau, calG)):
            b[key][n] = value
        self._right_slope = {"w": dw, "v": dv}
        self._n = n + 1

    # ------------------------------------------------------------------
    # 读取
    # ------------------------------------------------------------------

    @property
    def h(self) -> float:
        return self._h

    @property
    def n_nodes(self) -> int:
        return self._n

    @property
    def n_prehistory(self) -> int:
        """t <= 0 的节点数"""
        return self._n0

    @property
    def t_end(self) -> float:
        return float(self._buf["t"][self._n - 1])

    def column(self, key: str) -> np.ndarray:
        """节点列 (t, w, v, dw, dv, tau, calG) 的只读视图"""
        view = self._buf[key][:self._n]
        view.flags.writeable = False
        return view

    @property
    def times(self) -> np.ndarray:
        return self.column("t")

    def last_state(self) -> Tuple[float, float, float]:
        n = self._n - 1
        return float(self._buf["t"][n]), float(self._buf["w"][n]), float(self._buf["v"][n])

    def right_slope(self) -> Tuple[float, float]:
        return self._right_slope["w"], self._right_slope["v"]

    def channel(self, name: str) -> History:
        """通道 w 或 v 在 [-h, t_end] 上的稠密输出 (共享缓冲区，不复制)"""
        if name not in CHANNELS:
            raise ValueError(f"unknown channel '{name}'")
        n = self._n
        b = self._buf
        return History.from_coefficients(
            b["t"][:n], b[name][:n], b["d" + name][:n],
            b["H"][:n - 1], *(b[f"{name}_c{k}"][:n - 1] for k in range(4))
        )

    def segment(self, t: float) -> Prehistory:
        """段 x_t = (w_t, v_t)"""
        return Prehistory(
            w=segment(self.channel("w"), t, self._h),
            v=segment(self.channel("v"), t, self._h),
        )

    def segment_view(self, name: str, t: float, tail=None) -> SegmentView:
        """段的惰性视图；tail 为 (t_join, c0, c1, c2, c3) 时 (t_join, t] 上用该三次式"""
        return SegmentView(self.channel(name), t, self._h, tail)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({key: np.array(self.column(key)) for key in self._NODE_KEYS})
        # t < 0 处没有 τ 与 𝒢
        frame.loc[frame["t"] < 0, ["tau", "calG"]] = np.nan
        return frame

    def to_csv(self, path: str, float_format: str = OUTPUT_CONFIG["float_format"]):
        self.to_frame().to_csv(path, index=False, float_format=float_format, na_rep="")

    def __repr__(self) -> str:
        return f"Trajectory([{-self._h:.6g}, {self.t_end:.6g}], nodes={self._n})"


def trajectory_distance(a: Trajectory, b: Trajectory, times) -> float:
    """两条轨线在给定时刻上两个通道的最大差"""
    times = np.asarray(times, dtype=float)
    return max(
        float(np.max(np.abs(a.channel(name).eval_array(times) - b.channel(name).eval_array(times))))
        for name in CHANNELS
    )


# ==============================================================================
# 右端在轨线上的求值
# ==============================================================================

def _delayed_rhs(
    spec: ModelSpec,
    w_hist: History,
    v_hist: History,
    t_c: float,
    state: Tuple[float, float],
    functional: DelayFunctional,
) -> RhsValue:
    """F 在 t_c 处的值: 当前值取 state，时滞值 x(t_c - τ) 取已提交的数据"""
    t_d = min(t_c - functional.tau, w_hist.b)
    return assemble_F(spec, state[0], state[1], w_hist.eval(t_d), v_hist.eval(t_d), functional)


class MethodOfStepsSolver(LoggerMixin):
    """
    经典RK4方法步

    dt <= (x2-x1)/K <= τ，所有时滞值 x(t_c - τ) 都落在已提交的数据上；
    只有 τ 泛函的参数 v_{t_c} 会用到 [t_n, t_c] 上尚未提交的一小段。
    预测时这一段取 (t_n, x_n, k1) 的线性延拓，校正时取预测结果的Hermite段，
    校正结果直接接受。同一横坐标上的各阶段共享一次成熟度求解。
    """

    def __init__(self, spec: ModelSpec, settings: Optional[SolveSettings] = None):
        self.spec = spec
        self.settings = settings or SolveSettings()
        self.dt_y = self.settings.dt_y or default_dt_y(spec, self.settings.dt_y_divisor)

        self._status = SolverStatus.NOT_STARTED
        self.trajectory: Optional[Trajectory] = None
        self.steps_taken = 0
        self.left_validated_range_at: Optional[float] = None

    @property
    def status(self) -> SolverStatus:
        return self._status

    def check_inputs(self, prehistory: Prehistory):
        """
        Raises:
            StepSizeError: dt 超过最小时滞
            PrehistoryError: 前史区间不是 [-h, 0] 或导数上界超过 alpha_cap
        """
        spec, settings = self.spec, self.settings
        if settings.dt > spec.min_delay * (1.0 + 1e-12):
            raise StepSizeError(
                f"dt={settings.dt:g} exceeds the minimal delay (x2-x1)/K={spec.min_delay:.6g}"
            )
        if abs(prehistory.h - spec.h) > 1e-9 * max(1.0, spec.h):
            raise PrehistoryError(
                f"prehistory covers [{-prehistory.h:.6g}, 0] but the model needs [-h, 0] with h={spec.h:.6g}"
            )
        lip = prehistory.lip_bound()
        if lip > settings.alpha_cap:
            raise PrehistoryError(
                f"prehistory Lipschitz bound {lip:.6g} exceeds alpha_cap={settings.alpha_cap:g}"
            )
        self._check_state(0.0, *prehistory.initial_value())

    def _check_state(self, t: float, w: float, v: float):
        cap = self.settings.blowup_cap
        if not (math.isfinite(w) and math.isfinite(v)) or abs(w) > cap or abs(v) > cap:
            raise BlowUpError(t, w, v, cap)
        if not self.spec.in_interval(v):
            raise StateRangeError(
                f"v({t:.6g})={v:.6g} left the declared state interval ({self.spec.I_lo}, {self.spec.I_hi})"
            )
        if self.left_validated_range_at is None and not self.spec.in_validated_range(v):
            self.left_validated_range_at = t
            self.log_warning(
                f"v({t:.6g})={v:.6g} left the validated range [{self.spec.v_lo}, {self.spec.v_hi}]; "
                "derived bounds no longer cover the solution"
            )

    def run(self, prehistory: Prehistory) -> Trajectory:
        self.check_inputs(prehistory)
        spec, settings = self.spec, self.settings
        n_steps = max(1, int(math.ceil(settings.T / settings.dt - 1e-9)))
        traj = Trajectory(prehistory, capacity=len(prehistory.w) + len(prehistory.v) + n_steps)
        self.trajectory = traj
        self._status = SolverStatus.RUNNING
        self.log_info(
            f"Method of steps: dt={settings.dt:g}, T={settings.T:g}, dt_y={self.dt_y:.6g}, {n_steps} steps"
        )

        started = time.perf_counter()
        try:
            start = rhs_F(prehistory.w, prehistory.v, spec, self.dt_y)
            traj.set_start_slope(start.f1, start.f2, start.tau_used, start.calG_used)
            for k in range(1, n_steps + 1):
                self._step(traj, min(k * settings.dt, settings.T))
                self.steps_taken += 1
        except Exception:
            self._status = SolverStatus.FAILED
            self.log_error(f"Integration stopped at t={traj.t_end:.6g} after {self.steps_taken} steps")
            raise

        self._status = SolverStatus.COMPLETED
        log_performance(self.logger, f"method of steps ({n_steps} steps)", time.perf_counter() - started)
        return traj

    def _stages(self, traj: Trajectory, t_next: float, tail) -> Tuple[Tuple[float, float], RhsValue]:
        """一次RK4，tail 为 [t_n, t_next] 上 v 的延拓；返回 x_{n+1} 与其处的 F"""
        spec = self.spec
        t_n, w_n, v_n = traj.last_state()
        k1 = traj.right_slope()
        dt = t_next - t_n
        t_half = t_n + 0.5 * dt
        w_hist, v_hist = traj.channel("w"), traj.channel("v")

        mid = delay_functional(SegmentView(v_hist, t_half, traj.h, tail), spec, self.dt_y)
        r2 = _delayed_rhs(spec, w_hist, v_hist, t_half, (w_n + 0.5 * dt * k1[0], v_n + 0.5 * dt * k1[1]), mid)
        r3 = _delayed_rhs(spec, w_hist, v_hist, t_half, (w_n + 0.5 * dt * r2.f1, v_n + 0.5 * dt * r2.f2), mid)

        end = delay_functional(SegmentView(v_hist, t_next, traj.h, tail), spec, self.dt_y)
        r4 = _delayed_rhs(spec, w_hist, v_hist, t_next, (w_n + dt * r3.f1, v_n + dt * r3.f2), end)

        x_next = (
            w_n + dt / 6.0 * (k1[0] + 2.0 * r2.f1 + 2.0 * r3.f1 + r4.f1),
            v_n + dt / 6.0 * (k1[1] + 2.0 * r2.f2 + 2.0 * r3.f2 + r4.f2),
        )
        return x_next, _delayed_rhs(spec, w_hist, v_hist, t_next, x_next, end)

    def _step(self, traj: Trajectory, t_next: float):
        t_n, _, v_n = traj.last_state()
        slope_v = traj.right_slope()[1]

        # 预测: 线性延拓
        predicted, predicted_rhs = self._stages(traj, t_next, (t_n, v_n, slope_v, 0.0, 0.0))

        # 校正: 预测值构成的Hermite段
        piece = hermite_piece(t_n, v_n, slope_v, t_next, predicted[1], predicted_rhs.f2)
        (w_new, v_new), rhs_new = self._stages(traj, t_next, (t_n,) + piece)

        self._check_state(t_next, w_new, v_new)
        traj.append(t_next, w_new, v_new, rhs_new.f1, rhs_new.f2, rhs_new.tau_used, rhs_new.calG_used)

    def get_status_info(self) -> Dict[str, Any]:
        info: Dict[str, Any] = {
            "status": self._status.value,
            "steps_taken": self.steps_taken,
            "dt": self.settings.dt,
            "dt_y": self.dt_y,
            "left_validated_range_at": self.left_validated_range_at,
        }
        if self.trajectory is not None:
            info["t_end"] = self.trajectory.t_end
        return info


def integrate(spec: ModelSpec, prehistory: Prehistory, settings: Optional[SolveSettings] = None) -> Trajectory:
    return MethodOfStepsSolver(spec, settings).run(prehistory)


# ==============================================================================
# Picard 迭代
# ==============================================================================

class PicardResult(NamedTuple):
    trajectory: Trajectory
    iterations: List[PicardIteration]


class PicardSolver(LoggerMixin):
    """
    x^{k+1}(t) = Φ(0) + ∫₀^t F(x^k_s) ds,  t ∈ [0, T0]

    T0 <= (x2-x1)/K，时滞值全部落在前史上。积分在均匀网格上用复合Simpson，
    迭代值的节点导数取被积函数 F(x^k_t)，稠密输出与积分器一致。
    """

    PERTURBATION_MODES = 3

    def __init__(self, spec: ModelSpec, settings: Optional[PicardSettings] = None, dt_y: Optional[float] = None):
        self.spec = spec
        self.settings = settings or PicardSettings()
        self.dt_y = dt_y or default_dt_y(spec)
        self.iterations: List[PicardIteration] = []
        self._status = SolverStatus.NOT_STARTED

    @property
    def status(self) -> SolverStatus:
        return self._status

    def _initial_iterate(self, grid: np.ndarray, w0: float, v0: float):
        """常数延拓；给定 seed 时叠加 p(0) = 0 的光滑扰动"""
        n = grid.size
        W, V = np.full(n, w0), np.full(n, v0)
        dW, dV = np.zeros(n), np.zeros(n)
        seed = self.settings.seed
        if seed is not None:
            rng = np.random.default_rng(seed)
            amp = self.settings.seed_amplitude
            coef = rng.uniform(-1.0, 1.0, (2, self.PERTURBATION_MODES))
            for i in range(self.PERTURBATION_MODES):
                freq = (i + 1) * math.pi / (2.0 * self.settings.T0)
                W = W + amp * coef[0, i] * np.sin(freq * grid)
                V = V + amp * coef[1, i] * np.sin(freq * grid)
                dW = dW + amp * coef[0, i] * freq * np.cos(freq * grid)
                dV = dV + amp * coef[1, i] * freq * np.cos(freq * grid)
        return W, V, dW, dV

    def _iterate_trajectory(self, prehistory, grid, W, V, dW, dV, taus=None, calGs=None) -> Trajectory:
        traj = Trajectory(prehistory, capacity=len(prehistory.w) + len(prehistory.v) + grid.size)
        taus = np.full(grid.size, np.nan) if taus is None else taus
        calGs = np.full(grid.size, np.nan) if calGs is None else calGs
        traj.set_start_slope(dW[0], dV[0], taus[0], calGs[0])
        for j in range(1, grid.size):
            traj.append(grid[j], W[j], V[j], dW[j], dV[j], taus[j], calGs[j])
        return traj

    def _rhs_on_grid(self, traj: Trajectory, grid: np.ndarray, W: np.ndarray, V: np.ndarray):
        spec = self.spec
        w_hist, v_hist = traj.channel("w"), traj.channel("v")
        out = np.empty((4, grid.size))
        for j, t in enumerate(grid):
            functional = delay_functional(SegmentView(v_hist, t, traj.h), spec, self.dt_y)
            value = _delayed_rhs(spec, w_hist, v_hist, t, (W[j], V[j]), functional)
            out[:, j] = (value.f1, value.f2, value.tau_used, value.calG_used)
        return out

    def run(self, prehistory: Prehistory) -> PicardResult:
        spec, settings = self.spec, self.settings
        if settings.T0 > spec.min_delay * (1.0 + 1e-12):
            raise StepSizeError(
                f"Picard horizon T0={settings.T0:g} exceeds the minimal delay (x2-x1)/K={spec.min_delay:.6g}"
            )
        if abs(prehistory.h - spec.h) > 1e-9 * max(1.0, spec.h):
            raise PrehistoryError(
                f"prehistory covers [{-prehistory.h:.6g}, 0] but the model needs [-h, 0] with h={spec.h:.6g}"
            )

        grid = np.linspace(0.0, settings.T0, settings.grid_n + 1)
        w0, v0 = prehistory.initial_value()
        W, V, dW, dV = self._initial_iterate(grid, w0, v0)
        self.iterations = []
        self._status = SolverStatus.RUNNING
        started = time.perf_counter()

        prev_diff: Optional[float] = None
        ratio: Optional[float] = None
        diff = math.inf
        for k in range(1, settings.max_iter + 1):
            current = self._iterate_trajectory(prehistory, grid, W, V, dW, dV)
            F_w, F_v, taus, calGs = self._rhs_on_grid(current, grid, W, V)
            W_new = w0 + cumulative_simpson(F_w, x=grid, initial=0.0)
            V_new = v0 + cumulative_simpson(F_v, x=grid, initial=0.0)

            diff = max(float(np.max(np.abs(W_new - W))), float(np.max(np.abs(V_new - V))))
            ratio = diff / prev_diff if prev_diff else None
            self.iterations.append(PicardIteration(iteration=k, sup_diff=diff, ratio=ratio))
            self.log_debug(f"Picard iteration {k}: sup-diff={diff:.3e}, ratio={ratio}")

            W, V, dW, dV = W_new, V_new, F_w, F_v
            if diff <= settings.tol:
                # τ 与 𝒢 在被接受的迭代值上重新求值
                accepted = self._iterate_trajectory(prehistory, grid, W, V, dW, dV)
                _, _, taus, calGs = self._rhs_on_grid(accepted, grid, W, V)
                self._status = SolverStatus.COMPLETED
                log_performance(self.logger, f"Picard iteration ({k} iterations)", time.perf_counter() - started)
                return PicardResult(
                    trajectory=self._iterate_trajectory(prehistory, grid, W, V, dW, dV, taus, calGs),
                    iterations=list(self.iterations),
                )
            prev_diff = diff

        self._status = SolverStatus.FAILED
        raise PicardConvergenceError(settings.max_iter, diff, ratio)


def picard_solve(
    spec: ModelSpec,
    prehistory: Prehistory,
    settings: Optional[PicardSettings] = None,
    dt_y: Optional[float] = None,
) -> PicardResult:
    return PicardSolver(spec, settings, dt_y).run(prehistory)


# ==============================================================================
# 诊断
# ==============================================================================

def _per_segment_simpson(times: np.ndarray, f_nodes: np.ndarray, f_mid: np.ndarray) -> np.ndarray:
    """∫_{t_0}^{t_j} f 的累积值 (每段一次Simpson，中点取稠密输出)"""
    increments = np.diff(times) / 6.0 * (f_nodes[:-1] + 4.0 * f_mid + f_nodes[1:])
    return np.concatenate(([0.0], np.cumsum(increments)))


def _birth_rate(traj: Trajectory, w_hist: History, v_hist: History, s: float,
                spec: ModelSpec, dt_y: float) -> float:
    """β(v(s-τ))·𝒢(v_s)·w(s-τ)，τ 与 𝒢 对 v_s 重新计算"""
    functional = delay_functional(SegmentView(v_hist, s, traj.h), spec, dt_y)
    t_d = s - functional.tau
    calG_value = spec.g(spec.x2, v_hist.eval(s)) * math.exp(functional.exponent)
    return spec.beta_eval(v_hist.eval(t_d)) * calG_value * w_hist.eval(t_d)


def voc_residual(traj: Trajectory, spec: ModelSpec, dt_y: Optional[float] = None) -> Tuple[float, float]:
    """
    常数变易恒等式的最大残差

        w(t) = φ(0)·exp(∫₀^t q(v))
        v(t) = e^{-μt}[ψ(0) + ∫₀^t e^{μs} β(v(s-τ)) 𝒢(v_s) w(s-τ) ds]

    积分在轨线节点上逐段Simpson (中点取稠密输出)，τ 与 𝒢 逐点重新计算。
    """
    dt_y = dt_y or default_dt_y(spec)
    start = traj.n_prehistory - 1
    times = np.array(traj.times[start:])
    if times.size < 2:
        return 0.0, 0.0
    mids = 0.5 * (times[:-1] + times[1:])
    w_hist, v_hist = traj.channel("w"), traj.channel("v")
    w_nodes = np.array(traj.column("w")[start:])
    v_nodes = np.array(traj.column("v")[start:])
    w0, v0 = w_nodes[0], v_nodes[0]

    q_int = _per_segment_simpson(times, spec.q.vector(v_nodes), spec.q.vector(v_hist.eval_array(mids)))
    r_w = float(np.max(np.abs(w_nodes - w0 * np.exp(q_int))))

    def weight(s: float) -> float:
        return math.exp(spec.mu * s) * _birth_rate(traj, w_hist, v_hist, s, spec, dt_y)

    b_nodes = np.array([weight(s) for s in times])
    b_mid = np.array([weight(s) for s in mids])
    b_int = _per_segment_simpson(times, b_nodes, b_mid)
    r_v = float(np.max(np.abs(v_nodes - np.exp(-spec.mu * times) * (v0 + b_int))))

    logger.debug(f"Variation-of-constants residuals: r_w={r_w:.3e}, r_v={r_v:.3e}")
    return r_w, r_v


def compatibility_defect(spec: ModelSpec, prehistory: Prehistory, dt_y: Optional[float] = None) -> float:
    """|F(Φ) - Φ'(0⁻)| (欧氏范数)，只作诊断"""
    value = rhs_F(prehistory.w, prehistory.v, spec, dt_y)
    dw, dv = prehistory.initial_slope()
    return math.hypot(value.f1 - dw, value.f2 - dv)


def _add_ramp(hist: History, delta: float, width: float) -> History:
    """
    加上 c(t) = δ·t·(1 + t/σ)²  (t ∈ [-σ, 0])，其余处为 0

    c(0) = c(-σ) = c'(-σ) = 0，c'(0) = δ；c 在 [-σ, 0] 上是三次式，-σ 为节点时结果仍精确分段三次。
    """
    t = hist.times
    inside = t >= -width
    r = 1.0 + t[inside] / width
    values = np.array(hist.values)
    derivs = np.array(hist.derivs)
    values[inside] += delta * t[inside] * r * r
    derivs[inside] += delta * (r * r + 2.0 * t[inside] / width * r)
    return History(t, values, derivs)


def manufacture_compatible(
    spec: ModelSpec,
    prehistory: Prehistory,
    width: Optional[float] = None,
    dt_y: Optional[float] = None,
    tol: float = 1e-14,
    max_iter: int = 50,
) -> Prehistory:
    """
    修改 [-σ, 0] 上的前史使 Φ'(0⁻) = F(Φ)

    Φ(0) 不变，[-h, -σ] 上不变。δ = F(Φ_δ) - Φ'(0⁻) 做不动点迭代 (F 对 δ 的依赖只经过 τ)。
    """
    width = width or 0.5 * min(spec.min_delay, prehistory.h)
    base_w = prehistory.w.resampled([-width])
    base_v = prehistory.v.resampled([-width])
    slope_w, slope_v = prehistory.initial_slope()

    delta = (0.0, 0.0)
    candidate = prehistory
    for _ in range(max_iter):
        candidate = Prehistory(w=_add_ramp(base_w, delta[0], width), v=_add_ramp(base_v, delta[1], width))
        value = rhs_F(candidate.w, candidate.v, spec, dt_y)
        new_delta = (value.f1 - slope_w, value.f2 - slope_v)
        change = max(abs(new_delta[0] - delta[0]), abs(new_delta[1] - delta[1]))
        delta = new_delta
        if change <= tol * (1.0 + max(abs(delta[0]), abs(delta[1]))):
            break
    candidate = Prehistory(w=_add_ramp(base_w, delta[0], width), v=_add_ramp(base_v, delta[1], width))
    logger.info(f"Manufactured compatible prehistory: slope correction {delta}, width {width:.6g}")
    return candidate
