# threshold_dde/verify.py

"""
验证套件

每个检查在随机样本 (或轨线节点) 上取最坏情况，生成一个 CheckItem。
上界型检查满足 margin = bound - measured，容差统一取自 SLACK_CONFIG。
"""

import asyncio
import math
import time
from functools import partial
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson

from config import get_slack
from data_models import (
    CheckItem, CheckKind, CheckReport, CheckStatus, ConvergenceRow, DerivedBounds,
    GridPlan, MaturationResult, SolveSettings, VerifyConfig
)
from errors import ThresholdDDEError
from history import History, Prehistory, random_history
from maturation import default_dt_y, mature, y_growth_bound, y_history_lip_check
from model import ModelSpec, derive_bounds
from rhs import (
    calG_bound, delay_functional, delayed_value, delayed_value_lip_bound, rhs_F,
    rhs_local_bound, sobolev_constant, tau_lip_bound
)
from solver import CHANNELS, Trajectory, integrate, voc_residual
from utils.logger import LoggerMixin, get_logger, log_performance

logger = get_logger("Verify")

# 每个抽样检查使用独立的随机流，结果与执行顺序无关
_STREAMS = {
    "sobolev": 1,
    "eval_map": 2,
    "segment_map": 3,
    "tau_envelope": 4,
    "tau_lipschitz": 5,
    "delayed_value": 6,
    "calG_domination": 7,
    "calG_stability": 8,
    "rhs_local_bound": 9,
    "y_growth": 10,
    "y_lipschitz": 11,
    "rhs_stability": 12,
}


def _rng(seed: int, check: str) -> np.random.Generator:
    return np.random.default_rng((seed, _STREAMS[check]))


def _random_prehistory(rng: np.random.Generator, spec: ModelSpec, cfg: VerifyConfig,
                       alpha: Optional[float] = None) -> History:
    return random_history(rng, -spec.h, 0.0, cfg.random_nodes, cfg.amplitude, alpha)


def _worst(check_id: str, margins: np.ndarray, measured: np.ndarray, bounds: np.ndarray,
           slacks: np.ndarray, context: str) -> CheckItem:
    """按 (margin + slack) 最小的样本报告"""
    i = int(np.argmin(margins + slacks))
    return CheckItem.upper_bound(
        check_id, float(measured[i]), float(bounds[i]), float(slacks[i]),
        f"{context}; worst of {len(margins)} (sample {i})",
    )


# ==============================================================================
# History 不等式
# ==============================================================================

def check_sobolev(samples: int, seed: int, h: float, cfg: Optional[VerifyConfig] = None) -> CheckReport:
    """‖f‖_C <= ((b-a)^{1/2} + (b-a)^{-1/2})‖f‖_{H¹}，随机分段三次函数"""
    cfg = cfg or VerifyConfig()
    rng = _rng(seed, "sobolev")
    constant = sobolev_constant(h)
    sup = np.empty(samples)
    bound = np.empty(samples)
    for i in range(samples):
        f = random_history(rng, -h, 0.0, cfg.random_nodes, cfg.amplitude)
        sup[i] = f.sup_norm()
        bound[i] = constant * f.h1_norm()
    slack = np.full(samples, get_slack("sobolev"))
    report = CheckReport()
    report.add(_worst("sobolev.embedding", bound - sup, sup, bound, slack,
                      f"sup <= (h^1/2 + h^-1/2) H1, h={h:.6g}"))
    return report


def check_eval_map(spec: ModelSpec, pairs: int, alpha: float, seed: int,
                   cfg: Optional[VerifyConfig] = None) -> CheckReport:
    """|φ(s) - ψ(t)| <= max{α, h^{1/2}+h^{-1/2}}·(|t-s| + ‖φ-ψ‖_{H¹})，φ, ψ ∈ V_α"""
    cfg = cfg or VerifyConfig()
    rng = _rng(seed, "eval_map")
    h = spec.h
    constant = max(alpha, sobolev_constant(h))
    measured = np.empty(pairs)
    bound = np.empty(pairs)
    for i in range(pairs):
        phi = _random_prehistory(rng, spec, cfg, alpha)
        psi = _random_prehistory(rng, spec, cfg, alpha)
        s, t = rng.uniform(-h, 0.0, 2)
        measured[i] = abs(phi.eval(s) - psi.eval(t))
        bound[i] = constant * (abs(t - s) + (phi - psi).h1_norm())
    slack = np.full(pairs, get_slack("eval_map"))
    report = CheckReport()
    report.add(_worst("eval_map.lipschitz", bound - measured, measured, bound, slack,
                      f"restricted evaluation map on V_alpha, alpha={alpha:g}"))
    return report


def check_segment_map(traj: Trajectory, pairs: int, seed: int) -> CheckReport:
    """‖u_t - u_s‖_{L²} <= |s-t|·‖u‖_{H¹(-h, T)}，0 <= t < s <= T"""
    rng = _rng(seed, "segment_map")
    T = traj.t_end
    if T <= 0:
        report = CheckReport()
        report.add(CheckItem.skipped("segment_map.lipschitz", "trajectory has no committed steps"))
        return report
    h1_total = math.sqrt(sum(traj.channel(name).h1_norm() ** 2 for name in CHANNELS))
    measured = np.empty(pairs)
    bound = np.empty(pairs)
    for i in range(pairs):
        t, s = np.sort(rng.uniform(0.0, T, 2))
        seg_t, seg_s = traj.segment(float(t)), traj.segment(float(s))
        measured[i] = math.sqrt(sum((getattr(seg_t, c) - getattr(seg_s, c)).l2_norm() ** 2 for c in CHANNELS))
        bound[i] = (s - t) * h1_total
    slack = np.full(pairs, get_slack("segment_map"))
    report = CheckReport()
    report.add(_worst("segment_map.lipschitz", bound - measured, measured, bound, slack,
                      f"segment map on [0, {T:.6g}]"))
    return report


# ==============================================================================
# 成熟度与 τ
# ==============================================================================

def sample_maturations(spec: ModelSpec, samples: int, seed: int,
                       cfg: Optional[VerifyConfig] = None) -> List[MaturationResult]:
    cfg = cfg or VerifyConfig()
    rng = _rng(seed, "tau_envelope")
    return [mature(_random_prehistory(rng, spec, cfg), spec) for _ in range(samples)]


def check_tau_envelope(results: Sequence[MaturationResult], spec: ModelSpec) -> CheckReport:
    """
    τ ∈ [(x2-x1)/K, (x2-x1)/ε]，且 [0, τ] 上的节点满足 x2 - K s <= y(s) <= x2 - ε s
    """
    slack = get_slack("tau_envelope")
    tau_lo, tau_hi = spec.min_delay, spec.max_delay
    taus = np.array([r.tau for r in results])
    # 到区间 [tau_lo, tau_hi] 的越界量，非正表示在区间内
    tau_excess = np.maximum(tau_lo - taus, taus - tau_hi)

    envelope_excess = np.empty(len(results))
    for i, r in enumerate(results):
        s = r.y_traj.times
        keep = s <= r.tau
        s, y = s[keep], r.y_traj.values[keep]
        envelope_excess[i] = float(np.max(np.maximum(
            (spec.x2 - spec.K * s) - y,
            y - (spec.x2 - spec.eps * s),
        )))

    report = CheckReport()
    i = int(np.argmax(tau_excess))
    report.add(CheckItem.upper_bound(
        "tau_envelope.delay", float(tau_excess[i]), 0.0, slack,
        f"tau in [{tau_lo:.6g}, {tau_hi:.6g}]; worst tau={taus[i]:.12g} of {len(results)}",
    ))
    i = int(np.argmax(envelope_excess))
    report.add(CheckItem.upper_bound(
        "tau_envelope.maturity", float(envelope_excess[i]), 0.0, slack,
        f"x2 - K s <= y(s) <= x2 - eps s; worst sample {i} of {len(results)}",
    ))
    return report


def _admissible_pairs(spec: ModelSpec, pairs: int, alpha: float, rng: np.random.Generator,
                      cfg: VerifyConfig):
    for _ in range(pairs):
        yield _random_prehistory(rng, spec, cfg, alpha), _random_prehistory(rng, spec, cfg, alpha)


def check_tau_lipschitz(spec: ModelSpec, bounds: DerivedBounds, pairs: int, alpha: float, seed: int,
                        cfg: Optional[VerifyConfig] = None) -> CheckReport:
    """|τ(ψ1) - τ(ψ2)| <= L_τ·‖ψ1 - ψ2‖_{H¹}，L_τ = tau_lip_bound(spec, L_g)"""
    cfg = cfg or VerifyConfig()
    rng = _rng(seed, "tau_lipschitz")
    L_tau = tau_lip_bound(spec, bounds.L_g)
    measured, bound, ratio = np.empty(pairs), np.empty(pairs), np.empty(pairs)
    for i, (psi1, psi2) in enumerate(_admissible_pairs(spec, pairs, alpha, rng, cfg)):
        measured[i] = abs(mature(psi1, spec).tau - mature(psi2, spec).tau)
        dist = (psi1 - psi2).h1_norm()
        bound[i] = L_tau * dist
        ratio[i] = measured[i] / dist if dist > 0 else 0.0
    slack = np.full(pairs, get_slack("tau_lipschitz"))
    report = CheckReport()
    report.add(_worst("tau_lipschitz.h1", bound - measured, measured, bound, slack,
                      f"L_tau={L_tau:.6g} (L_g={bounds.L_g:.6g}), worst ratio {float(np.max(ratio)):.6g}"))
    return report


def check_delayed_value(spec: ModelSpec, bounds: DerivedBounds, pairs: int, alpha: float, seed: int,
                        cfg: Optional[VerifyConfig] = None) -> CheckReport:
    """ψ -> ψ(-τ(ψ)) 在 V_α 上的Lipschitz上界"""
    cfg = cfg or VerifyConfig()
    rng = _rng(seed, "delayed_value")
    constant = delayed_value_lip_bound(spec, bounds.L_g, alpha)
    measured, bound = np.empty(pairs), np.empty(pairs)
    for i, (psi1, psi2) in enumerate(_admissible_pairs(spec, pairs, alpha, rng, cfg)):
        measured[i] = abs(delayed_value(psi1, spec) - delayed_value(psi2, spec))
        bound[i] = constant * (psi1 - psi2).h1_norm()
    slack = np.full(pairs, get_slack("delayed_value"))
    report = CheckReport()
    report.add(_worst("delayed_value.lipschitz", bound - measured, measured, bound, slack,
                      f"constant {constant:.6g}, alpha={alpha:g}"))
    return report


def check_y_growth(spec: ModelSpec, bounds: DerivedBounds, samples: int, seed: int,
                   cfg: Optional[VerifyConfig] = None) -> CheckReport:
    """|y(s)| <= [x2 + (|g(x2, φ(0))| + 2‖φ‖_C + L x2)s]e^{Ls}，s ∈ [0, τ]"""
    cfg = cfg or VerifyConfig()
    rng = _rng(seed, "y_growth")
    L = bounds.L_g
    margins, measured, bound = [], [], []
    for _ in range(samples):
        phi = _random_prehistory(rng, spec, cfg)
        result = mature(phi, spec)
        s = result.y_traj.times
        keep = s <= result.tau
        y_abs = np.abs(result.y_traj.values[keep])
        b = np.array([y_growth_bound(phi, spec, float(s_k), L) for s_k in s[keep]])
        i = int(np.argmin(b - y_abs))
        margins.append(b[i] - y_abs[i])
        measured.append(y_abs[i])
        bound.append(b[i])
    slack = np.full(samples, get_slack("y_growth"))
    report = CheckReport()
    report.add(_worst("y_growth.bound", np.array(margins), np.array(measured), np.array(bound), slack,
                      f"exponential growth bound of y, L={L:.6g}"))
    return report


def check_y_lipschitz(spec: ModelSpec, bounds: DerivedBounds, pairs: int, seed: int,
                      cfg: Optional[VerifyConfig] = None) -> CheckReport:
    """|y_φ(t) - y_ψ(t)| <= L‖φ-ψ‖_C t e^{Lt}"""
    cfg = cfg or VerifyConfig()
    rng = _rng(seed, "y_lipschitz")
    margins = np.array([
        y_history_lip_check(phi, psi, spec, bounds.L_g)
        for phi, psi in _admissible_pairs(spec, pairs, cfg.alpha, rng, cfg)
    ])
    i = int(np.argmax(margins))
    report = CheckReport()
    report.add(CheckItem.upper_bound(
        "y_lipschitz.margin", float(margins[i]), 0.0, get_slack("y_lipschitz"),
        f"max over [0, min tau] of |y_phi - y_psi| - L|phi-psi|_C t e^(Lt); worst of {pairs}",
    ))
    return report


# ==============================================================================
# 𝒢 与 F
# ==============================================================================

def check_calG_domination(spec: ModelSpec, bounds: DerivedBounds, samples: int, seed: int,
                          cfg: Optional[VerifyConfig] = None) -> CheckReport:
    """0 < 𝒢(ψ) <= M_G，以及指数 |∫₀^τ (d - D1g)| <= h·M_k"""
    cfg = cfg or VerifyConfig()
    rng = _rng(seed, "calG_domination")
    M_G = calG_bound(spec, bounds)
    exponent_bound = spec.h * bounds.M_k
    values = np.empty(samples)
    exponents = np.empty(samples)
    for i in range(samples):
        psi = _random_prehistory(rng, spec, cfg)
        functional = delay_functional(psi, spec)
        exponents[i] = abs(functional.exponent)
        values[i] = spec.g(spec.x2, psi.eval(0.0)) * math.exp(functional.exponent)

    report = CheckReport()
    i = int(np.argmax(values))
    report.add(CheckItem.upper_bound(
        "calG_domination.upper", float(values[i]), M_G, get_slack("calG_domination"),
        f"calG <= M_G = K exp(h M_k); worst of {samples}",
    ))
    report.add(CheckItem.condition(
        "calG_domination.positive", bool(np.min(values) > 0), f"calG > 0 over {samples} samples",
        measured=float(np.min(values)),
    ))
    i = int(np.argmax(exponents))
    report.add(CheckItem.upper_bound(
        "calG_exponent.bound", float(exponents[i]), exponent_bound, get_slack("calG_exponent"),
        f"|int_0^tau (d - D1g)| <= h M_k; worst of {samples}",
    ))
    return report


def _ball_member(rng: np.random.Generator, base: History, radius: float, cfg: VerifyConfig) -> History:
    """base 的 sup 球内的随机 History (同一网格)"""
    bump = random_history(rng, base.a, base.b, len(base), cfg.amplitude)
    sup = bump.sup_norm()
    factor = rng.uniform(0.0, 1.0) * (radius / sup if sup > 0 else 0.0)
    return History(base.times, base.values + factor * bump.values, base.derivs + factor * bump.derivs)


def _stability_item(check_id: str, fine: np.ndarray, coarse: np.ndarray, context: str) -> CheckItem:
    """细分辨率的最大比值不超过粗分辨率的 10 倍"""
    ratio_fine, ratio_coarse = float(np.max(fine)), float(np.max(coarse))
    ok = math.isfinite(ratio_fine) and ratio_fine <= 10.0 * ratio_coarse + get_slack(check_id)
    return CheckItem(
        check_id=check_id,
        status=CheckStatus.PASS if ok else CheckStatus.FAIL,
        measured=ratio_fine,
        bound=10.0 * ratio_coarse,
        kind=CheckKind.STABILITY,
        context=f"{context}; coarse-resolution max ratio {ratio_coarse:.6g}",
    )


def check_calG_stability(spec: ModelSpec, pairs: int, radius: float, seed: int,
                         cfg: Optional[VerifyConfig] = None) -> CheckReport:
    """
    sup 球内 |𝒢(ψ1) - 𝒢(ψ2)| / ‖ψ1 - ψ2‖_{H¹} 有界

    没有闭式常数可比，改为比较两种分辨率: 细分辨率下的最大比值不超过粗分辨率 (dt_y 加倍) 的 10 倍。
    """
    cfg = cfg or VerifyConfig()
    rng = _rng(seed, "calG_stability")
    base = _random_prehistory(rng, spec, cfg)
    dt_fine = default_dt_y(spec)
    dt_coarse = 2.0 * dt_fine

    def calG_at(psi: History, dt_y: float) -> float:
        functional = delay_functional(psi, spec, dt_y)
        return spec.g(spec.x2, psi.eval(0.0)) * math.exp(functional.exponent)

    fine, coarse = np.zeros(pairs), np.zeros(pairs)
    for i in range(pairs):
        psi1 = _ball_member(rng, base, radius, cfg)
        psi2 = _ball_member(rng, base, radius, cfg)
        dist = (psi1 - psi2).h1_norm()
        if dist == 0:
            continue
        fine[i] = abs(calG_at(psi1, dt_fine) - calG_at(psi2, dt_fine)) / dist
        coarse[i] = abs(calG_at(psi1, dt_coarse) - calG_at(psi2, dt_coarse)) / dist

    report = CheckReport()
    report.add(_stability_item("calG_stability.ratio", fine, coarse, f"sup-ball radius {radius:g}, {pairs} pairs"))
    return report


def check_rhs_stability(spec: ModelSpec, pairs: int, radius: float, seed: int,
                        cfg: Optional[VerifyConfig] = None) -> CheckReport:
    """
    sup 球内 |F(x1) - F(x2)|₁ / (‖Δφ‖_{H¹} + ‖Δψ‖_{H¹}) 有界，判据同 check_calG_stability
    """
    cfg = cfg or VerifyConfig()
    rng = _rng(seed, "rhs_stability")
    base_w = _random_prehistory(rng, spec, cfg).scaled(1.0, 1.0)
    base_v = _random_prehistory(rng, spec, cfg)
    dt_fine = default_dt_y(spec)
    dt_coarse = 2.0 * dt_fine

    def difference(a, b, dt_y: float) -> float:
        fa, fb = rhs_F(a[0], a[1], spec, dt_y), rhs_F(b[0], b[1], spec, dt_y)
        return abs(fa.f1 - fb.f1) + abs(fa.f2 - fb.f2)

    fine, coarse = np.zeros(pairs), np.zeros(pairs)
    for i in range(pairs):
        x1 = (_ball_member(rng, base_w, radius, cfg), _ball_member(rng, base_v, radius, cfg))
        x2 = (_ball_member(rng, base_w, radius, cfg), _ball_member(rng, base_v, radius, cfg))
        dist = (x1[0] - x2[0]).h1_norm() + (x1[1] - x2[1]).h1_norm()
        if dist == 0:
            continue
        fine[i] = difference(x1, x2, dt_fine) / dist
        coarse[i] = difference(x1, x2, dt_coarse) / dist

    report = CheckReport()
    report.add(_stability_item("rhs_stability.ratio", fine, coarse, f"sup-ball radius {radius:g}, {pairs} pairs"))
    return report


def check_rhs_local_bound(spec: ModelSpec, bounds: DerivedBounds, samples: int, seed: int,
                          cfg: Optional[VerifyConfig] = None) -> CheckReport:
    """|F1| + |F2| <= M_q M + (C_β M + a_β) M M_G + μ M，M 为样本的 sup 范数"""
    cfg = cfg or VerifyConfig()
    rng = _rng(seed, "rhs_local_bound")
    measured, bound = np.empty(samples), np.empty(samples)
    for i in range(samples):
        phi = _random_prehistory(rng, spec, cfg)
        psi = _random_prehistory(rng, spec, cfg)
        value = rhs_F(phi, psi, spec)
        measured[i] = abs(value.f1) + abs(value.f2)
        bound[i] = rhs_local_bound(spec, bounds, max(phi.sup_norm(), psi.sup_norm()))
    slack = np.full(samples, get_slack("rhs_local_bound"))
    report = CheckReport()
    report.add(_worst("rhs_local_bound.F", bound - measured, measured, bound, slack,
                      "local bound of F on a sup-ball"))
    return report


# ==============================================================================
# 轨线上的先验估计
# ==============================================================================

def _forward_part(traj: Trajectory):
    """t >= 0 的节点"""
    start = traj.n_prehistory - 1
    return start, np.array(traj.times[start:])


def check_apriori_w(traj: Trajectory, spec: ModelSpec, bounds: DerivedBounds) -> CheckReport:
    """|w(t)| <= |φ(0)| e^{t M_q}，容差 slack·e^{t M_q}"""
    start, t = _forward_part(traj)
    w = np.abs(np.array(traj.column("w")[start:]))
    growth = np.exp(t * bounds.M_q)
    bound = abs(traj.prehistory.w.eval(0.0)) * growth
    slack = get_slack("apriori_w") * growth
    report = CheckReport()
    # 按 e^{t M_q} 归一化后的 margin 取最坏节点
    i = int(np.argmin((bound - w) / growth))
    report.add(CheckItem.upper_bound(
        "apriori_w.bound", float(w[i]), float(bound[i]), float(slack[i]),
        f"M_q={bounds.M_q:.6g}; worst at t={t[i]:.6g} of {t.size} nodes",
    ))
    return report


def apriori_v_bound(traj: Trajectory, spec: ModelSpec, bounds: DerivedBounds,
                    gronwall: bool = False) -> np.ndarray:
    """
    |v(t)| 的先验上界，在 t >= 0 的节点上

    有界 β: c + C e^{(μ+M_q)t}，c = |ψ(0)|，C = M_β M_G ‖φ‖∞ / (μ + M_q)
    Grönwall: (‖ψ‖∞ + ∫₀^t a_β M_G W) · exp(∫₀^t C_β M_G W)，W(s) = ‖φ‖∞ e^{s M_q}
    """
    _, t = _forward_part(traj)
    phi_sup = traj.prehistory.w.sup_norm()
    M_G = calG_bound(spec, bounds)
    if not gronwall:
        c = abs(traj.prehistory.v.eval(0.0))
        rate = spec.mu + bounds.M_q
        if rate == 0.0:
            return c + bounds.M_beta * M_G * phi_sup * t
        return c + bounds.M_beta * M_G * phi_sup / rate * np.exp(rate * t)

    W = phi_sup * np.exp(t * bounds.M_q)
    if t.size < 2:
        return np.full(t.size, traj.prehistory.v.sup_norm())
    inhomogeneous = cumulative_simpson(bounds.a_beta * M_G * W, x=t, initial=0.0)
    exponent = cumulative_simpson(bounds.C_beta * M_G * W, x=t, initial=0.0)
    return (traj.prehistory.v.sup_norm() + inhomogeneous) * np.exp(exponent)


def check_apriori_v(traj: Trajectory, spec: ModelSpec, bounds: DerivedBounds,
                    force_gronwall: bool = False) -> CheckReport:
    """
    |v(t)| 的先验估计

    v 留在验证区间内时 β 在其上有界 (M_β)，用有界形式；否则用 Grönwall 形式。
    """
    start, t = _forward_part(traj)
    v_raw = np.array(traj.column("v")[start:])
    v = np.abs(v_raw)
    in_range = bool(np.all((v_raw >= bounds.v_lo) & (v_raw <= bounds.v_hi)))
    gronwall = force_gronwall or not in_range
    bound = apriori_v_bound(traj, spec, bounds, gronwall)
    slack = get_slack("apriori_v") * np.maximum(bound, 1.0)
    branch = "Gronwall form" if gronwall else "bounded-beta form"
    report = CheckReport()
    report.add(_worst("apriori_v.bound", bound - v, v, bound, slack,
                      f"{branch}, M_beta={bounds.M_beta:.6g}, M_G={calG_bound(spec, bounds):.6g}"))
    return report


def check_deriv_bound(traj: Trajectory, spec: ModelSpec, bounds: DerivedBounds) -> CheckReport:
    """
    |u'(t)|² <= M_q² W² + 2 β(v(t-τ))² M_G² W² + 2 μ² v(t)²，W = ‖φ‖∞ e^{t M_q}

    只检查 t > 0 的节点 (t = 0 处节点导数是 Φ'(0⁻))。
    v 离开验证区间时常数不再适用，记为跳过。
    """
    start = traj.n_prehistory
    t = np.array(traj.times[start:])
    report = CheckReport()
    if t.size == 0:
        report.add(CheckItem.skipped("deriv_bound.bound", "trajectory has no committed steps"))
        return report
    dw = np.array(traj.column("dw")[start:])
    dv = np.array(traj.column("dv")[start:])
    v = np.array(traj.column("v")[start:])
    tau = np.array(traj.column("tau")[start:])
    v_delayed = traj.channel("v").eval_array(t - tau)
    seen = np.concatenate([v, v_delayed])
    if not np.all((seen >= bounds.v_lo) & (seen <= bounds.v_hi)):
        report.add(CheckItem.skipped(
            "deriv_bound.bound",
            f"v left the validated range [{bounds.v_lo:g}, {bounds.v_hi:g}]; M_q and M_G do not apply",
        ))
        return report
    beta_obs = spec.beta_vector(v_delayed)

    W = traj.prehistory.w.sup_norm() * np.exp(t * bounds.M_q)
    M_G = calG_bound(spec, bounds)
    measured = dw * dw + dv * dv
    bound = bounds.M_q ** 2 * W * W + 2.0 * beta_obs * beta_obs * M_G * M_G * W * W + 2.0 * spec.mu ** 2 * v * v
    slack = get_slack("deriv_bound") * np.maximum(bound, 1.0)
    report.add(_worst("deriv_bound.bound", bound - measured, measured, bound, slack,
                      "|u'|^2 against the global-existence derivative estimate"))
    return report


def check_voc(traj: Trajectory, spec: ModelSpec, dt_y: Optional[float] = None) -> CheckReport:
    r_w, r_v = voc_residual(traj, spec, dt_y)
    slack = get_slack("voc")
    report = CheckReport()
    report.add(CheckItem.upper_bound("voc.w", r_w, 0.0, slack, "variation-of-constants residual for w"))
    report.add(CheckItem.upper_bound("voc.v", r_v, 0.0, slack, "variation-of-constants residual for v"))
    return report


# ==============================================================================
# 收敛阶
# ==============================================================================

def convergence_study(
    spec: ModelSpec,
    prehistory: Prehistory,
    T: float,
    dts: Sequence[float],
    settings: Optional[SolveSettings] = None,
) -> List[ConvergenceRow]:
    """
    以最小步长的解为参照，各步长在其节点上的 sup 误差与相邻两行间的观测阶

    order_i = log(e_{i-1}/e_i) / log(dt_{i-1}/dt_i)
    """
    dts = list(dts)
    if any(a <= b for a, b in zip(dts, dts[1:])):
        raise ValueError("step sizes must be strictly descending")
    base = settings or SolveSettings()
    runs = []
    for dt in dts:
        started = time.perf_counter()
        runs.append(integrate(spec, prehistory, base.model_copy(update={"dt": dt, "T": T})))
        log_performance(logger, f"convergence run dt={dt:g}", time.perf_counter() - started)

    reference = runs[-1]
    rows: List[ConvergenceRow] = []
    for dt, traj in zip(dts[:-1], runs[:-1]):
        start = traj.n_prehistory - 1
        t = np.array(traj.times[start:])
        error = max(
            float(np.max(np.abs(np.array(traj.column(name)[start:]) - reference.channel(name).eval_array(t))))
            for name in CHANNELS
        )
        order = None
        if rows and error > 0 and rows[-1].sup_error > 0:
            order = math.log(rows[-1].sup_error / error) / math.log(rows[-1].dt / dt)
        rows.append(ConvergenceRow(dt=dt, sup_error=error, order=order))
        logger.info(f"dt={dt:g}: sup error {error:.3e}, order {order}")
    return rows


def check_convergence_order(rows: Sequence[ConvergenceRow], min_order: float) -> CheckReport:
    orders = [row.order for row in rows if row.order is not None]
    report = CheckReport()
    if not orders:
        report.add(CheckItem.skipped("convergence.order", "fewer than two error rows"))
        return report
    observed = min(orders)
    report.add(CheckItem.lower_bound(
        "convergence.order", observed, min_order, get_slack("convergence"),
        f"min observed order over {len(orders)} refinements >= {min_order:g}",
    ))
    return report


# ==============================================================================
# 套件
# ==============================================================================

class VerificationSuite(LoggerMixin):
    """
    全部检查

    先积分一条轨线 (先验估计需要)，再把相互独立的检查放到线程池里并行执行，
    最后按 check_id 合并。
    """

    def __init__(
        self,
        spec: ModelSpec,
        prehistory: Prehistory,
        solve: Optional[SolveSettings] = None,
        cfg: Optional[VerifyConfig] = None,
        grid: Optional[GridPlan] = None,
        bounds: Optional[DerivedBounds] = None,
    ):
        self.spec = spec
        self.prehistory = prehistory
        self.solve = solve or SolveSettings()
        self.cfg = cfg or VerifyConfig()
        self.grid = grid
        self.bounds = bounds
        self.trajectory: Optional[Trajectory] = None

    def _jobs(self, bounds: DerivedBounds, traj: Trajectory) -> List[Callable[[], CheckReport]]:
        spec, cfg, seed = self.spec, self.cfg, self.cfg.seed
        return [
            partial(check_sobolev, cfg.sobolev_samples, seed, spec.h, cfg),
            partial(check_eval_map, spec, cfg.tau_pairs, cfg.alpha, seed, cfg),
            partial(check_segment_map, traj, cfg.tau_pairs, seed),
            lambda: check_tau_envelope(sample_maturations(spec, cfg.tau_samples, seed, cfg), spec),
            partial(check_tau_lipschitz, spec, bounds, cfg.tau_pairs, cfg.alpha, seed, cfg),
            partial(check_delayed_value, spec, bounds, cfg.tau_pairs, cfg.alpha, seed, cfg),
            partial(check_y_growth, spec, bounds, cfg.tau_samples, seed, cfg),
            partial(check_y_lipschitz, spec, bounds, cfg.tau_pairs, seed, cfg),
            partial(check_calG_domination, spec, bounds, cfg.calG_samples, seed, cfg),
            partial(check_calG_stability, spec, cfg.calG_pairs, cfg.calG_delta, seed, cfg),
            partial(check_rhs_stability, spec, cfg.calG_pairs, cfg.calG_delta, seed, cfg),
            partial(check_rhs_local_bound, spec, bounds, cfg.rhs_samples, seed, cfg),
            partial(check_apriori_w, traj, spec, bounds),
            partial(check_apriori_v, traj, spec, bounds),
            partial(check_deriv_bound, traj, spec, bounds),
            partial(check_voc, traj, spec, self.solve.dt_y),
        ]

    async def run(self) -> CheckReport:
        started = time.perf_counter()
        loop = asyncio.get_running_loop()

        bounds = self.bounds or derive_bounds(self.spec, self.grid)
        self.log_info(f"Integrating reference trajectory to T={self.solve.T:g} for the a-priori checks")
        traj = await loop.run_in_executor(None, integrate, self.spec, self.prehistory, self.solve)
        self.trajectory = traj

        jobs = self._jobs(bounds, traj)
        if self.cfg.parallel:
            results = await asyncio.gather(
                *(loop.run_in_executor(None, job) for job in jobs),
                return_exceptions=True,
            )
        else:
            results = []
            for job in jobs:
                try:
                    results.append(job())
                except ThresholdDDEError as e:
                    results.append(e)

        errors = [r for r in results if isinstance(r, BaseException)]
        for error in errors:
            self.log_error(f"Check aborted: {error}")
        if errors:
            raise errors[0]

        report = CheckReport.merge(results)
        counts = report.counts()
        self.log_info(f"Verification finished: {counts}")
        log_performance(self.logger, "verification suite", time.perf_counter() - started)
        return report

    def run_sync(self) -> CheckReport:
        return asyncio.run(self.run())
