# threshold_dde/simulation_controller.py

import asyncio
import json
import math
import os
import time
from datetime import datetime
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd
from pydantic import ValidationError

from config import validate_config
from data_models import CheckReport, RunConfig, RunSummary
from errors import ConfigError, ExprError, ModelError, ThresholdDDEError
from expr import parse
from history import History, Prehistory
from model import ModelSpec, build_model_spec, derive_bounds, validate
from solver import (
    Trajectory, compatibility_defect, integrate, manufacture_compatible, picard_solve, voc_residual
)
from utils.logger import LoggerMixin, log_performance
from verify import (
    VerificationSuite, check_apriori_v, check_apriori_w, check_convergence_order, check_deriv_bound,
    convergence_study
)

COMMANDS = ("validate", "simulate", "picard", "verify", "converge")


def load_run_config(path: str) -> RunConfig:
    """读取 JSON 配置；任何解析或校验失败都转为 ConfigError"""
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: malformed JSON ({e.msg} at line {e.lineno}, column {e.colno})")

    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    try:
        return RunConfig(**raw)
    except ValidationError as e:
        raise ConfigError(f"{path}: invalid configuration\n{e}")


def build_prehistory(cfg: RunConfig, spec: ModelSpec, base_dir: str = ".") -> Prehistory:
    """表达式 (变量 t，定义域 [-h, 0]) 或节点 CSV；相对路径相对于配置文件所在目录"""
    h = spec.h
    pre = cfg.prehistory
    channels = {}
    for name in ("w", "v"):
        source = getattr(pre, name)
        if source is not None:
            channels[name] = History.from_expr(parse(source, ("t",)), -h, 0.0, pre.n_nodes)
            continue
        path = getattr(pre, f"{name}_csv")
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        if not os.path.exists(path):
            raise ConfigError(f"prehistory.{name}_csv: file not found: {path}")
        try:
            channels[name] = History.from_csv(path)
        except ValueError as e:
            raise ConfigError(f"prehistory.{name}_csv: {e}")
    try:
        return Prehistory(**channels)
    except ValidationError as e:
        raise ConfigError(f"prehistory must be defined on [-h, 0] = [{-h:g}, 0]\n{e}")


class SimulationController(LoggerMixin):
    """
    命令调度器

    负责读取配置、构造模型与前史、执行一个命令并写出结果文件。
    返回值即进程退出码: 0 成功, 1 检查或求解失败, 2 配置错误。
    """

    def __init__(self, config_path: str, out_dir: Optional[str] = None, seed: Optional[int] = None,
                 bounds_override: Optional[Dict[str, float]] = None):
        validate_config()

        self.config_path = config_path
        self.out_dir_override = out_dir
        self.seed_override = seed
        self.bounds_override = bounds_override or {}

        self.cfg: Optional[RunConfig] = None
        self.spec: Optional[ModelSpec] = None
        self.prehistory: Optional[Prehistory] = None

        self.command: Optional[str] = None
        self.start_time: Optional[datetime] = None
        self.stop_time: Optional[datetime] = None
        self.exit_code: Optional[int] = None

        self.log_info("SimulationController initialized")

    # ------------------------------------------------------------------
    # 准备
    # ------------------------------------------------------------------

    def load(self):
        """读取配置并构造模型与前史"""
        cfg = load_run_config(self.config_path)
        if self.seed_override is not None:
            cfg.verify.seed = self.seed_override
        if self.out_dir_override is not None:
            cfg.output.dir = self.out_dir_override

        try:
            spec = build_model_spec(cfg.model)
        except (ExprError, ModelError, ValidationError) as e:
            raise ConfigError(f"model: {e}")

        dt_cap = spec.min_delay
        if cfg.solve.dt > dt_cap:
            raise ConfigError(
                f"solve.dt={cfg.solve.dt:g} exceeds the method-of-steps cap (x2-x1)/K = {dt_cap:.6g}"
            )

        try:
            prehistory = build_prehistory(cfg, spec, os.path.dirname(os.path.abspath(self.config_path)))
        except ExprError as e:
            raise ConfigError(f"prehistory: {e}")

        self.cfg, self.spec, self.prehistory = cfg, spec, prehistory
        os.makedirs(cfg.output.dir, exist_ok=True)
        self.log_info(f"Loaded {self.config_path}: {spec.describe()}")

    def _output_path(self, name: str) -> str:
        return os.path.join(self.cfg.output.dir, name)

    def _write_report(self, report: CheckReport):
        path = self._output_path(self.cfg.output.report_json)
        with open(path, "w", encoding="utf-8") as f:
            f.write(report.to_json())
        print(report.to_table())
        self.log_info(f"Report written to {path}: {report.counts()}")

    def _write_frame(self, frame: pd.DataFrame, name: str):
        path = self._output_path(name)
        frame.to_csv(path, index=False, float_format=self.cfg.output.float_format, na_rep="")
        self.log_info(f"Wrote {path} ({len(frame)} rows)")

    # ------------------------------------------------------------------
    # 命令
    # ------------------------------------------------------------------

    def cmd_validate(self) -> int:
        grid = self.spec.default_grid(self.cfg.validation)
        report = validate(self.spec, grid)
        if report.passed:
            bounds = derive_bounds(self.spec, grid)
            self.log_info(f"Derived bounds: {bounds.model_dump()}")
        else:
            for item in report.failures:
                self.log_error(f"Model check failed: {item.check_id} ({item.context})")
        self._write_report(report)
        return 0 if report.passed else 1

    def _summarize(self, traj: Trajectory) -> RunSummary:
        spec = self.spec
        frame = traj.to_frame()
        dt_y = self.cfg.solve.dt_y
        r_w, r_v = voc_residual(traj, spec, dt_y)

        bounds = derive_bounds(spec, spec.default_grid(self.cfg.validation)).with_overrides(**self.bounds_override)
        checks = CheckReport.merge([
            check_apriori_w(traj, spec, bounds),
            check_apriori_v(traj, spec, bounds),
            check_deriv_bound(traj, spec, bounds),
        ])
        forward = frame[frame["t"] >= 0]
        v_inside = bool(np.all((forward["v"] >= spec.v_lo) & (forward["v"] <= spec.v_hi)))
        return RunSummary(
            T_reached=traj.t_end,
            n_nodes=traj.n_nodes,
            dt=self.cfg.solve.dt,
            w_min=float(frame["w"].min()),
            w_max=float(frame["w"].max()),
            v_min=float(frame["v"].min()),
            v_max=float(frame["v"].max()),
            compatibility_defect=compatibility_defect(spec, self.prehistory, dt_y),
            voc_r_w=r_w,
            voc_r_v=r_v,
            validated_v_range=[spec.v_lo, spec.v_hi],
            v_within_validated_range=v_inside,
            checks={item.check_id: item.status.value for item in checks.items},
            checks_passed=checks.passed,
        )

    def cmd_simulate(self) -> int:
        report = validate(self.spec, self.spec.default_grid(self.cfg.validation))
        if not report.passed:
            self.log_error("Model validation failed; refusing to simulate")
            self._write_report(report)
            return 1

        traj = integrate(self.spec, self.prehistory, self.cfg.solve)
        traj.to_csv(self._output_path(self.cfg.output.trajectory_csv), self.cfg.output.float_format)

        summary = self._summarize(traj)
        path = self._output_path(self.cfg.output.summary_json)
        with open(path, "w", encoding="utf-8") as f:
            f.write(summary.model_dump_json(indent=2))
        self.log_info(
            f"Simulated to T={summary.T_reached:g}: w in [{summary.w_min:.6g}, {summary.w_max:.6g}], "
            f"v in [{summary.v_min:.6g}, {summary.v_max:.6g}], defect {summary.compatibility_defect:.3e}"
        )
        if not summary.checks_passed:
            self.log_error(f"A-priori checks failed: {summary.checks}")
        return 0 if summary.checks_passed else 1

    def cmd_picard(self) -> int:
        result = picard_solve(self.spec, self.prehistory, self.cfg.picard, self.cfg.solve.dt_y)
        result.trajectory.to_csv(self._output_path(self.cfg.output.picard_csv), self.cfg.output.float_format)
        log = pd.DataFrame([row.model_dump() for row in result.iterations], columns=["iteration", "sup_diff", "ratio"])
        self._write_frame(log, self.cfg.output.picard_log_csv)
        self.log_info(f"Picard converged in {len(result.iterations)} iterations")
        return 0

    async def cmd_verify_async(self) -> int:
        grid = self.spec.default_grid(self.cfg.validation)
        bounds = None
        if self.bounds_override:
            bounds = derive_bounds(self.spec, grid).with_overrides(**self.bounds_override)
            self.log_warning(f"Using overridden bounds: {self.bounds_override}")
        suite = VerificationSuite(
            self.spec, self.prehistory, solve=self.cfg.solve, cfg=self.cfg.verify, grid=grid, bounds=bounds,
        )
        report = await suite.run()
        self._write_report(report)
        return 0 if report.passed else 1

    def cmd_verify(self) -> int:
        return asyncio.run(self.cmd_verify_async())

    def cmd_converge(self) -> int:
        conv = self.cfg.converge
        prehistory = self.prehistory
        if conv.compatible:
            prehistory = manufacture_compatible(self.spec, prehistory, dt_y=self.cfg.solve.dt_y)
            self.log_info(
                f"Using compatible prehistory (defect {compatibility_defect(self.spec, prehistory):.3e})"
            )
        rows = convergence_study(self.spec, prehistory, conv.T, conv.dts, self.cfg.solve)
        frame = pd.DataFrame([row.model_dump() for row in rows], columns=["dt", "sup_error", "order"])
        self._write_frame(frame, self.cfg.output.converge_csv)
        print(frame.to_string(index=False))

        if conv.min_order is None:
            return 0
        report = check_convergence_order(rows, conv.min_order)
        self._write_report(report)
        return 0 if report.passed else 1

    # ------------------------------------------------------------------
    # 调度
    # ------------------------------------------------------------------

    def run(self, command: str) -> int:
        """执行一个命令并返回退出码，领域异常在这里转成退出码"""
        if command not in COMMANDS:
            self.log_error(f"Unknown command: {command}")
            self.exit_code = 2
            return self.exit_code

        self.command = command
        self.start_time = datetime.now()
        started = time.perf_counter()
        try:
            self.load()
            self.exit_code = getattr(self, f"cmd_{command}")()
        except ConfigError as e:
            self.log_error(f"Configuration error: {e}")
            self.exit_code = e.exit_code
        except ThresholdDDEError as e:
            self.log_exception(f"{command} failed: {type(e).__name__}: {e}")
            self.exit_code = e.exit_code
        finally:
            self.stop_time = datetime.now()
            log_performance(self.logger, f"command {command}", time.perf_counter() - started)

        self.log_info(f"{command} finished with exit code {self.exit_code}")
        return self.exit_code

    def get_run_status(self) -> Dict[str, Any]:
        """当前运行状态"""
        duration = None
        if self.start_time and self.stop_time:
            duration = (self.stop_time - self.start_time).total_seconds()
        return {
            "command": self.command,
            "config": self.config_path,
            "output_dir": self.cfg.output.dir if self.cfg else None,
            "start_time": self.start_time.isoformat() if self.start_time else None,
            "duration_s": duration,
            "exit_code": self.exit_code,
            "min_delay": self.spec.min_delay if self.spec else math.nan,
        }
