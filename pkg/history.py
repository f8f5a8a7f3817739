# threshold_dde/history.py

"""
有限区间上的分段三次Hermite函数

History 同时承担前史 Φ、段 x_t 以及成熟度轨线 y 的表示。每个区间上
的三次多项式由端点的值和导数确定，导数在节点处单值，函数整体 C¹。
"""

from typing import Callable, Iterable, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.special import roots_legendre

from errors import HistoryDomainError
from expr import Expr

# 每段4点Gauss-Legendre，对三次多项式平方(6次)精确
_GL_X, _GL_W = roots_legendre(4)
_GL_U = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W

# 相对时间容差：节点合并与定义域判断
_TIME_RTOL = 1e-12


def _hermite_coefficients(times: np.ndarray, values: np.ndarray, derivs: np.ndarray):
    """每段幂基系数，局部变量 u = t - t_i"""
    H = np.diff(times)
    y0, y1 = values[:-1], values[1:]
    m0, m1 = derivs[:-1], derivs[1:]
    slope = (y1 - y0) / H
    c2 = (3.0 * slope - 2.0 * m0 - m1) / H
    c3 = (m0 + m1 - 2.0 * slope) / (H * H)
    return H, y0.copy(), m0.copy(), c2, c3


def _merge_times(*grids: np.ndarray) -> np.ndarray:
    merged = np.unique(np.concatenate(grids))
    scale = max(1.0, float(merged[-1] - merged[0]))
    keep = np.concatenate(([True], np.diff(merged) > _TIME_RTOL * scale))
    # 保证右端点保留
    merged_kept = merged[keep]
    merged_kept[-1] = merged[-1]
    return merged_kept


class History:
    """
    分段三次Hermite插值函数 [a, b] -> R

    节点数组只读，对象创建后不可变，可在线程间共享。
    """

    def __init__(self, times: Iterable[float], values: Iterable[float], derivs: Iterable[float]):
        t = np.array(times, dtype=float)
        y = np.array(values, dtype=float)
        m = np.array(derivs, dtype=float)

        if t.ndim != 1 or y.shape != t.shape or m.shape != t.shape:
            raise ValueError("times, values and derivs must be 1-D arrays of equal length")
        if t.size < 2:
            raise ValueError("History needs at least two nodes")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y)) and np.all(np.isfinite(m))):
            raise ValueError("History node data must be finite")
        if np.any(np.diff(t) <= 0):
            raise ValueError("History node times must be strictly increasing")

        self._set_arrays(t, y, m, *_hermite_coefficients(t, y, m))

    def _set_arrays(self, t, y, m, H, c0, c1, c2, c3):
        for arr in (t, y, m, H, c0, c1, c2, c3):
            arr.flags.writeable = False
        self._t, self._y, self._m = t, y, m
        self._H, self._c0, self._c1, self._c2, self._c3 = H, c0, c1, c2, c3

    @classmethod
    def from_coefficients(cls, t, y, m, H, c0, c1, c2, c3) -> "History":
        """由已知的分段系数直接构造，不重复校验 (调用方保证节点合法)"""
        obj = cls.__new__(cls)
        obj._set_arrays(t, y, m, H, c0, c1, c2, c3)
        return obj

    # ------------------------------------------------------------------
    # 构造
    # ------------------------------------------------------------------

    @classmethod
    def from_nodes(cls, times, values, derivs) -> "History":
        return cls(times, values, derivs)

    @classmethod
    def constant(cls, value: float, a: float, b: float) -> "History":
        return cls([a, b], [value, value], [0.0, 0.0])

    @classmethod
    def from_expr(cls, e: Expr, a: float, b: float, n_nodes: int) -> "History":
        """
        在 [a, b] 上等距采样表达式 e(t)

        节点导数用小步长中心差分，端点处用二阶单侧差分。
        """
        if n_nodes < 2:
            raise ValueError("n_nodes must be >= 2")
        if not b > a:
            raise ValueError(f"empty interval [{a}, {b}]")
        extra = [v for v in e.variables if v != "t"]
        if extra:
            raise ValueError(f"prehistory expression may only use 't', got {extra}")

        def f(ts: np.ndarray) -> np.ndarray:
            if e.variables:
                return e.vector(ts)
            return np.full_like(ts, e())

        times = np.linspace(a, b, n_nodes)
        values = f(times)

        delta = 1e-5 * (b - a)
        derivs = (f(times + delta) - f(times - delta)) / (2.0 * delta)
        derivs[0] = (-3.0 * values[0] + 4.0 * f(np.array([a + delta]))[0]
                     - f(np.array([a + 2 * delta]))[0]) / (2.0 * delta)
        derivs[-1] = (3.0 * values[-1] - 4.0 * f(np.array([b - delta]))[0]
                      + f(np.array([b - 2 * delta]))[0]) / (2.0 * delta)
        return cls(times, values, derivs)

    @classmethod
    def from_callable(
        cls,
        f: Callable[[float], float],
        a: float,
        b: float,
        n_nodes: int,
        df: Optional[Callable[[float], float]] = None,
    ) -> "History":
        """标量函数采样；未给出 df 时同 from_expr 用差分求节点导数"""
        if n_nodes < 2:
            raise ValueError("n_nodes must be >= 2")
        times = np.linspace(a, b, n_nodes)
        values = np.array([f(float(t)) for t in times])
        if df is not None:
            derivs = np.array([df(float(t)) for t in times])
        else:
            delta = 1e-5 * (b - a)
            derivs = np.empty_like(values)
            for i, t in enumerate(times):
                if i == 0:
                    derivs[i] = (-3 * values[0] + 4 * f(t + delta) - f(t + 2 * delta)) / (2 * delta)
                elif i == n_nodes - 1:
                    derivs[i] = (3 * values[-1] - 4 * f(t - delta) + f(t - 2 * delta)) / (2 * delta)
                else:
                    derivs[i] = (f(t + delta) - f(t - delta)) / (2 * delta)
        return cls(times, values, derivs)

    # ------------------------------------------------------------------
    # 基本属性
    # ------------------------------------------------------------------

    @property
    def times(self) -> np.ndarray:
        return self._t

    @property
    def values(self) -> np.ndarray:
        return self._y

    @property
    def derivs(self) -> np.ndarray:
        return self._m

    @property
    def a(self) -> float:
        return float(self._t[0])

    @property
    def b(self) -> float:
        return float(self._t[-1])

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def n_segments(self) -> int:
        return self._t.size - 1

    def __len__(self) -> int:
        return self._t.size

    def __repr__(self) -> str:
        return f"History([{self.a:.6g}, {self.b:.6g}], nodes={len(self)})"

    def __sub__(self, other: "History") -> "History":
        return self.subtract(other)

    def coefficients(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(H, c0, c1, c2, c3)，第 i 段为 c0 + c1 u + c2 u² + c3 u³，u ∈ [0, H_i]"""
        return self._H, self._c0, self._c1, self._c2, self._c3

    def same_nodes(self, other: "History") -> bool:
        return (
            np.array_equal(self._t, other._t)
            and np.array_equal(self._y, other._y)
            and np.array_equal(self._m, other._m)
        )

    # ------------------------------------------------------------------
    # 求值
    # ------------------------------------------------------------------

    def _tol(self) -> float:
        return _TIME_RTOL * max(1.0, self.length)

    def _check_domain(self, t: float) -> float:
        a, b = self.a, self.b
        if t < a or t > b:
            tol = self._tol()
            if t < a - tol or t > b + tol:
                raise HistoryDomainError(f"t={t!r} outside History domain [{a!r}, {b!r}]")
            t = min(max(t, a), b)
        return t

    def _segment_index(self, t: float) -> int:
        i = int(np.searchsorted(self._t, t, side="right")) - 1
        return min(max(i, 0), self.n_segments - 1)

    def eval(self, t: float) -> float:
        """覆盖 t 的Hermite段在 t 处的值"""
        t = self._check_domain(float(t))
        if t >= self._t[-1]:
            return float(self._y[-1])
        i = self._segment_index(t)
        u = t - float(self._t[i])
        return float(self._c0[i] + u * (self._c1[i] + u * (self._c2[i] + u * self._c3[i])))

    def eval_deriv(self, t: float) -> float:
        t = self._check_domain(float(t))
        if t >= self._t[-1]:
            return float(self._m[-1])
        i = self._segment_index(t)
        u = t - float(self._t[i])
        return float(self._c1[i] + u * (2.0 * self._c2[i] + 3.0 * u * self._c3[i]))

    def _locate_array(self, ts) -> Tuple[np.ndarray, np.ndarray]:
        ts = np.asarray(ts, dtype=float)
        tol = self._tol()
        if np.any(ts < self.a - tol) or np.any(ts > self.b + tol):
            raise HistoryDomainError(f"evaluation points outside History domain [{self.a!r}, {self.b!r}]")
        ts = np.clip(ts, self.a, self.b)
        idx = np.clip(np.searchsorted(self._t, ts, side="right") - 1, 0, self.n_segments - 1)
        return idx, ts - self._t[idx]

    def eval_array(self, ts) -> np.ndarray:
        idx, u = self._locate_array(ts)
        return self._c0[idx] + u * (self._c1[idx] + u * (self._c2[idx] + u * self._c3[idx]))

    def eval_deriv_array(self, ts) -> np.ndarray:
        idx, u = self._locate_array(ts)
        return self._c1[idx] + u * (2.0 * self._c2[idx] + 3.0 * u * self._c3[idx])

    # ------------------------------------------------------------------
    # 范数
    # ------------------------------------------------------------------

    def _gauss_samples(self):
        u = self._H[:, None] * _GL_U[None, :]
        w = self._H[:, None] * _GL_W[None, :]
        c0, c1, c2, c3 = (c[:, None] for c in (self._c0, self._c1, self._c2, self._c3))
        val = c0 + u * (c1 + u * (c2 + u * c3))
        der = c1 + u * (2.0 * c2 + 3.0 * u * c3)
        return w, val, der

    def l2_norm(self) -> float:
        w, val, _ = self._gauss_samples()
        return float(np.sqrt(np.sum(w * val * val)))

    def l2_norm_deriv(self) -> float:
        w, _, der = self._gauss_samples()
        return float(np.sqrt(np.sum(w * der * der)))

    def h1_norm(self) -> float:
        """sqrt(‖u‖² + ‖u'‖²)"""
        w, val, der = self._gauss_samples()
        return float(np.sqrt(np.sum(w * (val * val + der * der))))

    def integral(self) -> float:
        w, val, _ = self._gauss_samples()
        return float(np.sum(w * val))

    def sup_norm(self) -> float:
        """
        max |f|，逐段精确计算

        候选点: 所有节点，以及每段导数二次式 c1 + 2c2 u + 3c3 u² 在段内的根。
        """
        best = float(np.max(np.abs(self._y)))
        A = 3.0 * self._c3
        B = 2.0 * self._c2
        C = self._c1

        candidates = []
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.abs(A) * self._H + np.abs(B)
            quad = np.abs(A) * self._H > 1e-14 * np.maximum(scale, 1e-300)
            disc = B * B - 4.0 * A * C
            sq = np.sqrt(np.where(disc >= 0, disc, np.nan))
            r1 = np.where(quad, (-B + sq) / (2.0 * A), np.nan)
            r2 = np.where(quad, (-B - sq) / (2.0 * A), np.nan)
            lin = ~quad & (np.abs(B) > 0)
            r3 = np.where(lin, -C / B, np.nan)
        for r in (r1, r2, r3):
            candidates.append(r)

        for r in candidates:
            inside = np.isfinite(r) & (r > 0) & (r < self._H)
            if np.any(inside):
                u = r[inside]
                vals = self._c0[inside] + u * (self._c1[inside] + u * (self._c2[inside] + u * self._c3[inside]))
                best = max(best, float(np.max(np.abs(vals))))
        return best

    def lip_bound(self) -> float:
        """
        sup |f'|，逐段精确计算

        导数是二次式，最大模在端点或顶点 u* = -c2/(3c3) 处取得。
        """
        best = float(np.max(np.abs(self._m)))
        with np.errstate(divide="ignore", invalid="ignore"):
            vertex = np.where(self._c3 != 0, -self._c2 / (3.0 * self._c3), np.nan)
        inside = np.isfinite(vertex) & (vertex > 0) & (vertex < self._H)
        if np.any(inside):
            c1, c2, c3 = self._c1[inside], self._c2[inside], self._c3[inside]
            peak = c1 - c2 * c2 / (3.0 * c3)
            best = max(best, float(np.max(np.abs(peak))))
        return best

    def max_value(self) -> float:
        return float(np.max(self._y))

    def min_value(self) -> float:
        return float(np.min(self._y))

    # ------------------------------------------------------------------
    # 变换
    # ------------------------------------------------------------------

    def subtract(self, other: "History") -> "History":
        """
        合并网格上的差 self - other

        两者定义域必须一致；在合并节点处重新取值和导数。
        """
        tol = max(self._tol(), other._tol())
        if abs(self.a - other.a) > tol or abs(self.b - other.b) > tol:
            raise HistoryDomainError(
                f"cannot subtract Histories on [{self.a}, {self.b}] and [{other.a}, {other.b}]"
            )
        if np.array_equal(self._t, other._t):
            return History(self._t, self._y - other._y, self._m - other._m)

        times = _merge_times(self._t, other._t)
        times[0], times[-1] = self.a, self.b
        values = self.eval_array(times) - other.eval_array(times)
        derivs = self.eval_deriv_array(times) - other.eval_deriv_array(times)
        return History(times, values, derivs)

    def resampled(self, extra_times: Iterable[float]) -> "History":
        """
        插入节点后的同一函数

        新节点处取精确的Hermite值和导数，每段仍是原来的三次多项式。
        """
        extra = np.asarray(list(extra_times), dtype=float)
        extra = extra[(extra > self.a) & (extra < self.b)]
        times = _merge_times(self._t, extra)
        times[0], times[-1] = self.a, self.b
        return History(times, self.eval_array(times), self.eval_deriv_array(times))

    def scaled(self, factor: float, offset: float = 0.0) -> "History":
        return History(self._t, factor * self._y + offset, factor * self._m)

    def _reexpand(self, j: int, delta: float) -> Tuple[float, float, float, float]:
        """第 j 段多项式在 t_j + delta 处的Taylor系数 (同一多项式换局部原点)"""
        c0, c1, c2, c3 = self._c0[j], self._c1[j], self._c2[j], self._c3[j]
        return (
            c0 + delta * (c1 + delta * (c2 + delta * c3)),
            c1 + delta * (2.0 * c2 + 3.0 * delta * c3),
            c2 + 3.0 * delta * c3,
            c3,
        )

    def window(
        self,
        lo: float,
        hi: float,
        shift: float = 0.0,
        append: Optional[Tuple[float, float, float]] = None,
        bounds: Optional[Tuple[float, float]] = None,
    ) -> "History":
        """
        截取 [lo, hi]，保留内部节点，端点处插入Hermite求值的节点

        截取后每段仍是原来的三次多项式 (系数直接复用)，结果与原函数在窗口上完全一致。

        Args:
            shift: 结果的时间平移量
            append: 在 hi 之后追加的节点 (t, value, derivative)，t 为平移前的时间
            bounds: 平移后强制使用的端点，消除舍入误差
        """
        if not hi > lo:
            raise ValueError(f"empty window [{lo}, {hi}]")
        tol = self._tol()
        if lo < self.a - tol or hi > self.b + tol:
            raise HistoryDomainError(
                f"window [{lo!r}, {hi!r}] not covered by History on [{self.a!r}, {self.b!r}]"
            )
        lo = max(lo, self.a)
        hi = min(hi, self.b)

        t = self._t
        # [i_lo, i_hi) 为落在 [lo - tol, hi + tol] 内的节点；与端点几乎重合的节点直接复用
        i_lo = int(np.searchsorted(t, lo - tol, side="left"))
        i_hi = int(np.searchsorted(t, hi + tol, side="right"))
        snap_lo = i_lo < t.size and abs(t[i_lo] - lo) <= tol
        snap_hi = i_hi > 0 and abs(t[i_hi - 1] - hi) <= tol

        node_parts = [[], [], []]
        coef_parts = [[], [], [], [], []]

        def add_nodes(ts, ys, ms):
            for part, arr in zip(node_parts, (ts, ys, ms)):
                part.append(np.atleast_1d(np.asarray(arr, dtype=float)))

        def add_segments(H, c0, c1, c2, c3):
            for part, arr in zip(coef_parts, (H, c0, c1, c2, c3)):
                part.append(np.atleast_1d(np.asarray(arr, dtype=float)))

        if i_lo < i_hi:
            if not snap_lo:
                j = i_lo - 1
                head = self._reexpand(j, lo - t[j])
                add_nodes(lo, head[0], head[1])
                add_segments(t[i_lo] - lo, *head)
            add_nodes(t[i_lo:i_hi], self._y[i_lo:i_hi], self._m[i_lo:i_hi])
            add_segments(self._H[i_lo:i_hi - 1], self._c0[i_lo:i_hi - 1], self._c1[i_lo:i_hi - 1],
                         self._c2[i_lo:i_hi - 1], self._c3[i_lo:i_hi - 1])
            if not snap_hi:
                k = i_hi - 1
                tail = self._reexpand(k, hi - t[k])
                add_segments(hi - t[k], self._c0[k], self._c1[k], self._c2[k], self._c3[k])
                add_nodes(hi, tail[0], tail[1])
        else:
            # 窗口落在同一段内部
            j = i_lo - 1
            head = self._reexpand(j, lo - t[j])
            tail = self._reexpand(j, hi - t[j])
            add_nodes([lo, hi], [head[0], tail[0]], [head[1], tail[1]])
            add_segments(hi - lo, *head)

        if append is not None:
            t_new, y_new, m_new = append
            if not t_new > hi + tol:
                raise ValueError(f"appended node t={t_new!r} must lie after the window end {hi!r}")
            last_y = node_parts[1][-1][-1]
            last_m = node_parts[2][-1][-1]
            H, c0, c1, c2, c3 = _hermite_coefficients(
                np.array([hi, t_new]), np.array([last_y, y_new]), np.array([last_m, m_new])
            )
            add_segments(H, c0, c1, c2, c3)
            add_nodes(t_new, y_new, m_new)

        times = np.concatenate(node_parts[0])
        if shift != 0.0:
            times = times + shift
        H = np.concatenate(coef_parts[0])
        if bounds is not None:
            times[0], times[-1] = bounds
            H[0] = times[1] - times[0]
            H[-1] = times[-1] - times[-2]
        return History.from_coefficients(
            times, np.concatenate(node_parts[1]), np.concatenate(node_parts[2]),
            H, *(np.concatenate(part) for part in coef_parts[1:])
        )

    def shifted(self, offset: float, a: Optional[float] = None, b: Optional[float] = None) -> "History":
        """时间平移 t -> t + offset，分段系数不变；可显式指定新端点以消除舍入"""
        times = self._t + offset
        H = np.array(self._H)
        if a is not None:
            times[0] = a
            H[0] = times[1] - times[0]
        if b is not None:
            times[-1] = b
            H[-1] = times[-1] - times[-2]
        return History.from_coefficients(times, self._y, self._m, H, self._c0, self._c1, self._c2, self._c3)

    # ------------------------------------------------------------------
    # CSV
    # ------------------------------------------------------------------

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self._t, "value": self._y, "derivative": self._m})

    def to_csv(self, path: str, float_format: str = "%.17g"):
        self.to_frame().to_csv(path, index=False, float_format=float_format)

    @classmethod
    def from_csv(cls, path: str) -> "History":
        """读取 t,value,derivative 三列的节点文件"""
        frame = pd.read_csv(path, float_precision="round_trip")
        missing = {"t", "value", "derivative"} - set(frame.columns)
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        frame = frame.sort_values("t", kind="stable")
        return cls(frame["t"].to_numpy(), frame["value"].to_numpy(), frame["derivative"].to_numpy())


def segment(source: History, t: float, h: float) -> History:
    """
    段映射 t -> u_t: 返回 [-h, 0] 上的History，u_t(s) = u(t + s)

    复用/截取底层Hermite节点。
    """
    lo = t - h
    if lo < source.a - source._tol() or t > source.b + source._tol():
        raise HistoryDomainError(
            f"segment at t={t!r} needs [{lo!r}, {t!r}], History covers [{source.a!r}, {source.b!r}]"
        )
    return source.window(lo, t, shift=-t, bounds=(-h, 0.0))


def hermite_piece(t0: float, y0: float, m0: float, t1: float, y1: float, m1: float) -> Tuple[float, ...]:
    """两点Hermite三次式的幂基系数 (c0, c1, c2, c3)，局部变量 u = t - t0"""
    H = t1 - t0
    slope = (y1 - y0) / H
    return y0, m0, (3.0 * slope - 2.0 * m0 - m1) / H, (m0 + m1 - 2.0 * slope) / (H * H)


class SegmentView:
    """
    段 u_t 的惰性视图: s ∈ [-h, 0] -> u(t + s)

    不复制节点，求值时委托给 source。给定 tail 时，source 只用到 t_join，
    (t_join, t] 上改用 tail 的三次式 (局部变量 u - t_join)。
    """

    def __init__(
        self,
        source: History,
        t: float,
        h: float,
        tail: Optional[Tuple[float, float, float, float, float]] = None,
    ):
        self.source = source
        self.t = t
        self.a = -h
        self.b = 0.0
        if tail is None:
            if t > source.b + source._tol():
                raise HistoryDomainError(f"segment at t={t!r} beyond History end {source.b!r}")
            self._join = t
            self._tail = None
        else:
            self._join = tail[0]
            self._tail = tail[1:]

    @property
    def length(self) -> float:
        return self.b - self.a

    def _tail_value(self, u):
        c0, c1, c2, c3 = self._tail
        r = u - self._join
        return c0 + r * (c1 + r * (c2 + r * c3))

    def _tail_deriv(self, u):
        _, c1, c2, c3 = self._tail
        r = u - self._join
        return c1 + r * (2.0 * c2 + 3.0 * r * c3)

    def eval(self, s: float) -> float:
        u = self.t + float(s)
        if self._tail is None or u <= self._join:
            return self.source.eval(min(u, self._join))
        return float(self._tail_value(u))

    def eval_deriv(self, s: float) -> float:
        u = self.t + float(s)
        if self._tail is None or u < self._join:
            return self.source.eval_deriv(min(u, self._join))
        return float(self._tail_deriv(u))

    def eval_array(self, ss) -> np.ndarray:
        u = np.asarray(ss, dtype=float) + self.t
        if self._tail is None:
            return self.source.eval_array(np.minimum(u, self._join))
        out = np.empty_like(u)
        committed = u <= self._join
        out[committed] = self.source.eval_array(u[committed])
        out[~committed] = self._tail_value(u[~committed])
        return out

    def materialize(self) -> History:
        """对应的 History (复制节点)"""
        if self._tail is None:
            return segment(self.source, self.t, -self.a)
        end = (self.t, float(self._tail_value(self.t)), float(self._tail_deriv(self.t)))
        lo = self.t + self.a
        return self.source.window(lo, self._join, shift=-self.t, append=end, bounds=(self.a, 0.0))


def random_history(
    rng: np.random.Generator,
    a: float,
    b: float,
    n_nodes: int,
    amplitude: float = 1.0,
    alpha: Optional[float] = None,
) -> History:
    """
    随机分段三次函数

    节点值与导数取自 amplitude·U[-1, 1]；给定 alpha 时整体缩放使 lip_bound <= alpha。
    """
    times = np.linspace(a, b, n_nodes)
    values = amplitude * rng.uniform(-1.0, 1.0, n_nodes)
    derivs = amplitude * rng.uniform(-1.0, 1.0, n_nodes)
    hist = History(times, values, derivs)
    if alpha is not None:
        lip = hist.lip_bound()
        if lip > alpha:
            factor = alpha / lip * (1.0 - 1e-12)
            hist = History(times, values * factor, derivs * factor)
    return hist


class Prehistory(BaseModel):
    """
    两通道的前史 Φ = (φ, ψ)，定义在 [-h, 0] 上

    也用于表示段 x_t = (w_t, v_t)。
    """
    w: History
    v: History

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @model_validator(mode="after")
    def _same_domain(self) -> "Prehistory":
        tol = _TIME_RTOL * max(1.0, self.w.length)
        if abs(self.w.a - self.v.a) > tol or abs(self.w.b - self.v.b) > tol:
            raise ValueError(f"channel domains differ: {self.w!r} vs {self.v!r}")
        if abs(self.w.b) > tol:
            raise ValueError(f"prehistory must end at t=0, got {self.w.b}")
        return self

    @property
    def h(self) -> float:
        return -self.w.a

    def lip_bound(self) -> float:
        return max(self.w.lip_bound(), self.v.lip_bound())

    def initial_value(self) -> Tuple[float, float]:
        return self.w.eval(0.0), self.v.eval(0.0)

    def initial_slope(self) -> Tuple[float, float]:
        """Φ'(0⁻)"""
        return self.w.eval_deriv(0.0), self.v.eval_deriv(0.0)

    @classmethod
    def from_exprs(cls, w_expr: Expr, v_expr: Expr, h: float, n_nodes: int) -> "Prehistory":
        return cls(
            w=History.from_expr(w_expr, -h, 0.0, n_nodes),
            v=History.from_expr(v_expr, -h, 0.0, n_nodes),
        )
