# threshold_dde/tests/test_cli.py

import json
import logging

import pandas as pd
import pytest

from main import main
from simulation_controller import SimulationController, load_run_config
from errors import ConfigError
from tests.conftest import write_config
from utils.logger import get_logger, setup_logging

FAST_SOLVE = {"dt": 0.005, "T": 0.2}
FAST_VERIFY = {
    "seed": 3, "sobolev_samples": 20, "tau_samples": 8, "tau_pairs": 8, "calG_samples": 10,
    "calG_pairs": 5, "rhs_samples": 8,
}


@pytest.fixture
def out_dir(tmp_path):
    return tmp_path / "out"


def run(tmp_path, out_dir, command, bounds_override=None, **sections):
    sections.setdefault("solve", FAST_SOLVE)
    sections.setdefault("output", {"dir": str(out_dir)})
    path = write_config(tmp_path / "run.json", **sections)
    controller = SimulationController(path, bounds_override=bounds_override)
    return controller, controller.run(command)


class TestConfigLoading:
    def test_missing_sections_take_defaults(self, tmp_path):
        cfg = load_run_config(write_config(tmp_path / "c.json"))
        assert cfg.prehistory.w == "1"
        assert cfg.solve.dt == pytest.approx(1e-3)

    def test_unknown_section(self, tmp_path):
        with pytest.raises(ConfigError):
            load_run_config(write_config(tmp_path / "c.json", plot={"dpi": 300}))

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"model": {')
        with pytest.raises(ConfigError, match="malformed JSON"):
            load_run_config(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_run_config(str(tmp_path / "nope.json"))


class TestExitCodes:
    def test_validate_demo(self, tmp_path, out_dir):
        controller, code = run(tmp_path, out_dir, "validate")
        assert code == 0
        records = json.loads((out_dir / "report.json").read_text())
        assert records and all(r["status"] != "fail" for r in records)
        assert controller.get_run_status()["exit_code"] == 0

    def test_validate_rejects_K_below_eps(self, tmp_path, out_dir):
        model = json.loads(json.dumps(write_model()))
        model["params"]["K"] = 0.4
        _, code = run(tmp_path, out_dir, "validate", model=model)
        assert code == 1
        records = json.loads((out_dir / "report.json").read_text())
        assert any(r["check_id"] == "model_param.K_ge_eps" and r["status"] == "fail" for r in records)

    def test_malformed_config_exits_2(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("not json")
        assert SimulationController(str(path)).run("validate") == 2

    def test_bad_expression_exits_2(self, tmp_path, out_dir):
        model = write_model()
        model["q"] = "0.5/(1+w^2)"
        _, code = run(tmp_path, out_dir, "simulate", model=model)
        assert code == 2

    def test_step_larger_than_delay_exits_2(self, tmp_path, out_dir):
        _, code = run(tmp_path, out_dir, "simulate", solve={"dt": 0.6, "T": 1.0})
        assert code == 2

    def test_unknown_command(self, tmp_path, out_dir):
        controller, code = run(tmp_path, out_dir, "plot")
        assert code == 2


class TestCommands:
    def test_simulate_writes_outputs(self, tmp_path, out_dir):
        _, code = run(tmp_path, out_dir, "simulate")
        assert code == 0
        frame = pd.read_csv(out_dir / "trajectory.csv")
        assert list(frame.columns) == ["t", "w", "v", "dw", "dv", "tau", "calG"]
        assert frame["t"].is_monotonic_increasing
        assert frame["t"].iloc[-1] == pytest.approx(0.2)
        summary = json.loads((out_dir / "summary.json").read_text())
        assert summary["T_reached"] == pytest.approx(0.2)
        assert summary["checks_passed"] is True
        assert summary["compatibility_defect"] > 0

    def test_simulate_blow_up_exits_1(self, tmp_path, out_dir):
        model = write_model()
        model["q"] = "50"
        _, code = run(tmp_path, out_dir, "simulate", model=model,
                      solve={"dt": 0.001, "T": 1.0, "blowup_cap": 10.0})
        assert code == 1
        assert not (out_dir / "trajectory.csv").exists()

    def test_simulate_with_understated_bounds_exits_1(self, tmp_path, out_dir):
        _, code = run(tmp_path, out_dir, "simulate", bounds_override={"M_q": 0.25})
        assert code == 1
        summary = json.loads((out_dir / "summary.json").read_text())
        assert summary["checks"]["apriori_w.bound"] == "fail"

    def test_prehistory_from_csv(self, tmp_path, out_dir):
        from history import History

        History.constant(1.0, -2.5, 0.0).to_csv(str(tmp_path / "w.csv"))
        History.constant(0.05, -2.5, 0.0).to_csv(str(tmp_path / "v.csv"))
        _, code = run(tmp_path, out_dir, "simulate", prehistory={"w_csv": "w.csv", "v_csv": "v.csv"})
        assert code == 0
        frame = pd.read_csv(out_dir / "trajectory.csv")
        assert frame.loc[frame["t"] == 0.0, "v"].iloc[0] == pytest.approx(0.05)

    def test_picard(self, tmp_path, out_dir):
        _, code = run(tmp_path, out_dir, "picard", picard={"T0": 0.25, "grid_n": 64, "tol": 1e-9})
        assert code == 0
        log = pd.read_csv(out_dir / "picard_iterations.csv")
        assert list(log.columns) == ["iteration", "sup_diff", "ratio"]
        assert log["sup_diff"].iloc[-1] <= 1e-9
        assert (out_dir / "picard_trajectory.csv").exists()

    def test_picard_non_convergence_exits_1(self, tmp_path, out_dir):
        _, code = run(tmp_path, out_dir, "picard", picard={"T0": 0.25, "grid_n": 64, "max_iter": 2})
        assert code == 1

    def test_verify(self, tmp_path, out_dir):
        _, code = run(tmp_path, out_dir, "verify", verify=FAST_VERIFY)
        assert code == 0
        records = json.loads((out_dir / "report.json").read_text())
        ids = {r["check_id"] for r in records}
        assert {"tau_lipschitz.h1", "calG_stability.ratio", "apriori_v.bound"} <= ids

    def test_verify_outcome_independent_of_seed(self, tmp_path):
        codes = []
        for seed in (41, 42, 43):
            out = tmp_path / f"out_{seed}"
            _, code = run(tmp_path, out, "verify", verify={**FAST_VERIFY, "seed": seed})
            records = json.loads((out / "report.json").read_text())
            codes.append((code, sorted(r["check_id"] for r in records if r["status"] == "fail")))
        assert codes[0] == codes[1] == codes[2]
        assert codes[0][0] == 0

    def test_verify_with_understated_bounds_exits_1(self, tmp_path, out_dir):
        _, code = run(tmp_path, out_dir, "verify", bounds_override={"M_q": 0.25}, verify=FAST_VERIFY)
        assert code == 1
        records = json.loads((out_dir / "report.json").read_text())
        failed = {r["check_id"] for r in records if r["status"] == "fail"}
        assert "apriori_w.bound" in failed

    def test_converge(self, tmp_path, out_dir):
        converge = {"T": 0.2, "dts": [0.02, 0.01, 0.005]}
        _, code = run(tmp_path, out_dir, "converge", converge=converge)
        assert code == 0
        frame = pd.read_csv(out_dir / "convergence.csv")
        assert list(frame.columns) == ["dt", "sup_error", "order"]
        assert len(frame) == 2
        assert pd.isna(frame["order"].iloc[0])

    def test_converge_below_required_order_exits_1(self, tmp_path, out_dir):
        converge = {"T": 0.2, "dts": [0.02, 0.01, 0.005, 0.0025], "min_order": 10.0}
        _, code = run(tmp_path, out_dir, "converge", converge=converge)
        assert code == 1


class TestMain:
    def test_usage_error(self, capsys):
        assert main(["simulate"]) == 2
        assert main(["plot", "--config", "x.json"]) == 2

    def test_validate_via_main(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        path = write_config(tmp_path / "run.json")
        code = main(["validate", "--config", path, "--out", str(tmp_path / "o"), "--log-level", "WARNING"])
        assert code == 0
        assert (tmp_path / "o" / "report.json").exists()

    def test_missing_config_via_main(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert main(["verify", "--config", str(tmp_path / "missing.json"), "--seed", "5"]) == 2

    def test_unknown_log_level_exits_2(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        path = write_config(tmp_path / "run.json")
        assert main(["validate", "--config", path, "--log-level", "LOUD"]) == 2

    def test_setup_logging_replaces_its_handlers(self, tmp_path):
        log_file = tmp_path / "logs" / "run.log"
        setup_logging("INFO", str(log_file))
        package_logger = setup_logging("WARNING", str(log_file))
        assert len(package_logger.handlers) == 2
        assert package_logger.level == logging.WARNING
        assert not package_logger.propagate
        get_logger("Solver").warning("step rejected")
        for handler in package_logger.handlers:
            handler.flush()
        assert "ThresholdDDE.Solver - WARNING - step rejected" in log_file.read_text()
        setup_logging("WARNING", "")


def write_model():
    from config import DEMO_MODEL

    return json.loads(json.dumps(DEMO_MODEL))
