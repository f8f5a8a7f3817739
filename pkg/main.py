#!/usr/bin/env python3
"""
阈值时滞微分方程的模拟与验证工具
干细胞成熟模型 w' = q(v)w, v' = β(v(t-τ))w(t-τ)𝒢(v_t) - μv，τ 由成熟度阈值隐式决定
"""

import argparse
import sys
from typing import List, Optional

from simulation_controller import COMMANDS, SimulationController
from utils.logger import get_logger, setup_logging

# 设置全局日志
logger = get_logger("Main")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="threshold_dde",
        description="Simulate and verify state-dependent threshold-delay DDEs.",
    )
    parser.add_argument("command", choices=COMMANDS, help="action to run")
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    parser.add_argument("--seed", type=int, default=None, help="seed for the verification samples")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """主程序入口，返回退出码"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse 用法错误的退出码本来就是 2
        return int(e.code or 0)

    try:
        setup_logging(level=args.log_level)
    except ValueError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 2
    controller = SimulationController(args.config, out_dir=args.out, seed=args.seed)
    return controller.run(args.command)


if __name__ == "__main__":
    # 检查Python版本
    if sys.version_info < (3, 9):
        print("Error: Python 3.9 or higher is required")
        sys.exit(1)

    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\nProgram interrupted by user")
        sys.exit(1)
