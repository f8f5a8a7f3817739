# threshold_dde/config.py

import os
from typing import Dict, Any
from dotenv import load_dotenv

# 加载环境变量
load_dotenv()

# ==============================================================================
# 内置演示模型
# ==============================================================================

# 满足基本假设与进一步假设的演示模型 (h = b/K = 2.5, x2-x1 = 1 ∈ (0, 1.25))
DEMO_MODEL = {
    "q": "0.5/(1+v^2)",
    "gamma": "1",
    "g": "0.5 + 1/(1+v^2)",
    "d1g": "0",
    "d": "0",
    "params": {
        "x1": 1.0,
        "x2": 2.0,
        "mu": 0.2,
        "eps": 0.5,
        "K": 2.0,
        "b": 5.0,
    },
    "range": {
        "v_lo": -10.0,
        "v_hi": 10.0,
    },
    # 声明的状态区间 I，None 表示无界
    "interval": {
        "lo": None,
        "hi": None,
    },
}

# 演示前史 (t ∈ [-h, 0])
DEMO_PREHISTORY = {
    "w": "1",
    "v": "0.1*(1+t/2.5)",
    "n_nodes": 201,
}

# ==============================================================================
# 求解器配置
# ==============================================================================

SOLVE_CONFIG = {
    "dt": 1e-3,             # 外层步长，必须 <= (x2-x1)/K
    "T": 5.0,               # 积分终点
    "dt_y": None,           # 成熟度方程步长，None 表示 (x2-x1)/(50K)
    "dt_y_divisor": 50,     # 最早穿越前至少的步数
    "blowup_cap": 1e9,      # |w|,|v| 上限
    "alpha_cap": 1e3,       # 前史导数上界 ‖Φ'‖∞
}

PICARD_CONFIG = {
    "T0": 0.5,              # 不超过 (x2-x1)/K
    "tol": 1e-9,
    "max_iter": 60,
    "grid_n": 512,
    "seed": None,           # None 表示常数延拓初值
    "seed_amplitude": 1e-2,
}

# ==============================================================================
# 模型校验配置
# ==============================================================================

VALIDATION_CONFIG = {
    "grid_nx": 41,
    "grid_nv": 401,
    "tol_consistency": 1e-4,    # |D1g - 差分| 容差
    "fd_step": 1e-5,            # 中心差分步长
    "default_v_range": (-10.0, 10.0),  # 声明区间无界时使用
}

# ==============================================================================
# 验证套件配置
# ==============================================================================

VERIFY_CONFIG = {
    "seed": int(os.getenv("TDDE_SEED", "42")),
    "sobolev_samples": 200,
    "tau_samples": 100,
    "tau_pairs": 100,
    "alpha": 1.0,               # V_α 的导数上界
    "calG_samples": 200,
    "calG_pairs": 100,
    "calG_delta": 0.5,          # 𝒢 稳定性检查的 sup 球半径
    "rhs_samples": 100,
    "random_nodes": 21,         # 随机History的节点数
    "amplitude": 0.5,           # 随机History的幅值
    "parallel": True,           # 是否并行执行独立检查
}

CONVERGE_CONFIG = {
    "T": 1.0,
    "dts": [4e-3, 2e-3, 1e-3, 5e-4, 2.5e-5],
    "min_order": None,
}

# 容差表: 所有检查统一从这里取 slack，检查函数内不写死容差
SLACK_CONFIG = {
    "sobolev": 1e-9,
    "eval_map": 1e-9,
    "segment_map": 1e-9,
    "tau_envelope": 1e-8,
    "tau_lipschitz": 1e-6,
    "delayed_value": 1e-6,
    "calG_domination": 1e-9,
    "calG_exponent": 1e-9,
    "calG_stability": 0.0,
    "rhs_stability": 0.0,
    "rhs_local_bound": 1e-9,
    "y_growth": 1e-9,
    "y_lipschitz": 1e-6,
    "apriori_w": 1e-7,          # 乘以 e^{t M_q}
    "apriori_v": 1e-6,          # 相对
    "deriv_bound": 1e-6,        # 相对
    "voc": 1e-6,
    "model_param": 0.0,
    "model_bound": 0.0,
    "model_consistency": 0.0,
    "model_lipschitz": 0.0,
    "model_growth": 0.0,
    "convergence": 0.0,
}

# ==============================================================================
# 输出与日志配置
# ==============================================================================

OUTPUT_CONFIG = {
    "dir": os.getenv("TDDE_OUTPUT_DIR", "output"),
    "trajectory_csv": "trajectory.csv",
    "summary_json": "summary.json",
    "report_json": "report.json",
    "picard_csv": "picard_trajectory.csv",
    "picard_log_csv": "picard_iterations.csv",
    "converge_csv": "convergence.csv",
    "float_format": "%.17g",
}

LOG_CONFIG = {
    "level": os.getenv("TDDE_LOG_LEVEL", "INFO"),  # 日志级别
    "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    "file_path": os.getenv("TDDE_LOG_FILE", "logs/threshold_dde.log"),  # 日志文件路径
    "max_file_size": 10 * 1024 * 1024,  # 最大文件大小(10MB)
    "backup_count": 5,  # 备份文件数量
}

# ==============================================================================
# 辅助函数
# ==============================================================================

def get_section(name: str) -> Dict[str, Any]:
    """获取指定配置段"""
    try:
        return ALL_CONFIG[name]
    except KeyError:
        raise ValueError(f"Unknown config section: {name}")


def get_slack(check_id: str) -> float:
    """按检查ID前缀取容差，例如 'apriori_w' 或 'model_bound.g_upper'"""
    key = check_id.split(".")[0]
    if key not in SLACK_CONFIG:
        raise ValueError(f"No slack registered for check: {check_id}")
    return SLACK_CONFIG[key]


def validate_config() -> bool:
    """验证默认配置的有效性"""
    if SOLVE_CONFIG["dt"] <= 0 or SOLVE_CONFIG["T"] <= 0:
        raise ValueError("dt and T must be positive")

    if SOLVE_CONFIG["dt_y"] is not None and SOLVE_CONFIG["dt_y"] <= 0:
        raise ValueError("dt_y must be positive")

    if PICARD_CONFIG["tol"] <= 0 or PICARD_CONFIG["max_iter"] <= 0 or PICARD_CONFIG["grid_n"] < 2:
        raise ValueError("Invalid Picard settings")

    if VALIDATION_CONFIG["grid_nx"] < 2 or VALIDATION_CONFIG["grid_nv"] < 2:
        raise ValueError("Validation grid needs at least two points per axis")

    if any(value < 0 for value in SLACK_CONFIG.values()):
        raise ValueError("Slack values must be non-negative")

    dts = CONVERGE_CONFIG["dts"]
    if any(a <= b for a, b in zip(dts, dts[1:])):
        raise ValueError("Convergence step sizes must be strictly descending")

    return True

# ==============================================================================
# 配置导出
# ==============================================================================

# 将所有配置合并为一个字典，方便导入使用
ALL_CONFIG = {
    "model": DEMO_MODEL,
    "prehistory": DEMO_PREHISTORY,
    "solve": SOLVE_CONFIG,
    "picard": PICARD_CONFIG,
    "validation": VALIDATION_CONFIG,
    "verify": VERIFY_CONFIG,
    "converge": CONVERGE_CONFIG,
    "slack": SLACK_CONFIG,
    "output": OUTPUT_CONFIG,
    "log": LOG_CONFIG,
}
