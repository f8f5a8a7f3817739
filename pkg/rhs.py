# threshold_dde/rhs.py

"""
泛函 𝒢 与右端 F

    𝒢(ψ) = g(x2, ψ(0))·exp(∫₀^τ (d - D1g)(y(s), ψ(-s)) ds)
    F1   = q(ψ(0))·φ(0)
    F2   = β(ψ(-τ))·φ(-τ)·𝒢(ψ) - μ·ψ(0)

昂贵的部分 (成熟度求解与指数积分) 只依赖 ψ，与当前状态的代数组合分开，
方法步的多个RK阶段可以共享同一次求解。
"""

import math
from typing import NamedTuple, Optional

import numpy as np

from data_models import DerivedBounds, MaturationResult, RhsValue
from errors import ExprDomainError
from history import History
from maturation import mature
from model import ModelSpec


class DelayFunctional(NamedTuple):
    """τ(ψ) 与 𝒢 的指数 ∫₀^τ (d - D1g) ds"""
    maturation: MaturationResult
    exponent: float

    @property
    def tau(self) -> float:
        return self.maturation.tau


def calG_exponent(maturation: MaturationResult, psi: History, spec: ModelSpec) -> float:
    """
    ∫₀^τ (d - D1g)(y(s), ψ(-s)) ds

    在成熟度求解的子步上用复合Simpson，最后的不完整区间 [s_m, τ] 用三点Simpson。
    """
    tau = maturation.tau
    if not (spec.d.free_variables or spec.d1g.free_variables):
        return spec.k_eval(spec.x2, 0.0) * tau

    y_traj: History = maturation.y_traj
    s_nodes = y_traj.times
    m = int(np.searchsorted(s_nodes, tau, side="right")) - 1
    s_full = s_nodes[:m + 1]

    total = 0.0
    if m > 0:
        s_mid = 0.5 * (s_full[:-1] + s_full[1:])
        k_nodes = spec.k_vector(y_traj.values[:m + 1], psi.eval_array(-s_full))
        k_mid = spec.k_vector(y_traj.eval_array(s_mid), psi.eval_array(-s_mid))
        total += float(np.sum(np.diff(s_full) / 6.0 * (k_nodes[:-1] + 4.0 * k_mid + k_nodes[1:])))

    s_m = float(s_nodes[m])
    width = tau - s_m
    if width > 0:
        pts = np.array([s_m, s_m + 0.5 * width, tau])
        k_part = spec.k_vector(y_traj.eval_array(pts), psi.eval_array(-pts))
        total += width / 6.0 * float(k_part[0] + 4.0 * k_part[1] + k_part[2])
    return total


def delay_functional(psi: History, spec: ModelSpec, dt_y: Optional[float] = None) -> DelayFunctional:
    maturation = mature(psi, spec, dt_y)
    return DelayFunctional(maturation=maturation, exponent=calG_exponent(maturation, psi, spec))


def calG(psi: History, spec: ModelSpec, dt_y: Optional[float] = None,
         functional: Optional[DelayFunctional] = None) -> float:
    """𝒢(ψ)，可传入已算好的 DelayFunctional 避免重复求解"""
    functional = functional or delay_functional(psi, spec, dt_y)
    return spec.g(spec.x2, psi.eval(0.0)) * math.exp(functional.exponent)


def assemble_F(
    spec: ModelSpec,
    w_now: float,
    v_now: float,
    w_delayed: float,
    v_delayed: float,
    functional: DelayFunctional,
) -> RhsValue:
    """由当前值、时滞值和 (τ, 指数) 组合 F"""
    calG_value = spec.g(spec.x2, v_now) * math.exp(functional.exponent)
    f1 = spec.q(v_now) * w_now
    f2 = spec.beta_eval(v_delayed) * w_delayed * calG_value - spec.mu * v_now
    if not (math.isfinite(f1) and math.isfinite(f2)):
        raise ExprDomainError(f"non-finite right-hand side F = ({f1}, {f2}) at v(0)={v_now}, v(-tau)={v_delayed}")
    return RhsValue(f1=f1, f2=f2, tau_used=functional.tau, calG_used=calG_value)


def rhs_F(phi: History, psi: History, spec: ModelSpec, dt_y: Optional[float] = None) -> RhsValue:
    """F(φ, ψ)，共享一次成熟度求解"""
    functional = delay_functional(psi, spec, dt_y)
    tau = functional.tau
    return assemble_F(
        spec,
        w_now=phi.eval(0.0),
        v_now=psi.eval(0.0),
        w_delayed=phi.eval(-tau),
        v_delayed=psi.eval(-tau),
        functional=functional,
    )


def delayed_value(psi: History, spec: ModelSpec, dt_y: Optional[float] = None) -> float:
    """ψ(-τ(ψ))"""
    return psi.eval(-mature(psi, spec, dt_y).tau)


# ==============================================================================
# 闭式常数
# ==============================================================================

def _t_exp_integral(h: float, L: float) -> float:
    """∫₀^h t e^{Lt} dt"""
    if L == 0.0:
        return 0.5 * h * h
    return (h / L - 1.0 / (L * L)) * math.exp(L * h) + 1.0 / (L * L)


def sobolev_constant(length: float) -> float:
    """‖f‖_C <= (ℓ^{1/2} + ℓ^{-1/2})‖f‖_{H¹}，ℓ 为区间长度"""
    return math.sqrt(length) + 1.0 / math.sqrt(length)


def tau_lip_bound(spec: ModelSpec, L: float) -> float:
    """
    τ 关于 H¹ 范数的Lipschitz常数
        (L²(h^{1/2} + h^{-1/2})∫₀^h t e^{Lt} dt + L√h) / ε
    """
    if L < 0:
        raise ValueError("Lipschitz constant must be non-negative")
    h = spec.h
    return (L * L * sobolev_constant(h) * _t_exp_integral(h, L) + L * math.sqrt(h)) / spec.eps


def delayed_value_lip_bound(spec: ModelSpec, L: float, alpha: float) -> float:
    """ψ -> ψ(-τ(ψ)) 在 V_α 上的Lipschitz常数 max{α, h^{1/2}+h^{-1/2}}·(1 + L_τ)"""
    return max(alpha, sobolev_constant(spec.h)) * (1.0 + tau_lip_bound(spec, L))


def calG_bound(spec: ModelSpec, bounds: DerivedBounds) -> float:
    """M_G = K·exp(h·M_k)"""
    if bounds.M_k == 0.0:
        return spec.K
    return spec.K * math.exp(spec.h * bounds.M_k)


def rhs_local_bound(spec: ModelSpec, bounds: DerivedBounds, M: float) -> float:
    """sup 范数不超过 M 的 (φ, ψ) 上 |F1| + |F2| 的上界"""
    M_G = calG_bound(spec, bounds)
    return bounds.M_q * M + (bounds.C_beta * M + bounds.a_beta) * M * M_G + spec.mu * M
