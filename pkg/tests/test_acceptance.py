# threshold_dde/tests/test_acceptance.py

"""端到端验收: 每项只依赖公开接口"""

import json
import os

import numpy as np
import pytest

from data_models import PicardSettings, SolveSettings
from history import History, Prehistory, random_history
from maturation import mature
from model import derive_bounds
from rhs import tau_lip_bound
from simulation_controller import SimulationController
from solver import compatibility_defect, integrate, manufacture_compatible, picard_solve, trajectory_distance
from tests.conftest import constant_prehistory, make_spec, write_config
from verify import (
    check_apriori_v, check_apriori_w, check_convergence_order, check_sobolev, check_tau_envelope,
    check_tau_lipschitz, convergence_study, sample_maturations
)

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")
REFINEMENTS = [4e-3, 2e-3, 1e-3, 5e-4, 2.5e-5]


@pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
def test_threshold_delay_exact_for_constant_rate(c):
    spec = make_spec(g=str(c))
    result = mature(History.constant(0.3, -spec.h, 0.0), spec)
    assert result.tau == pytest.approx((spec.x2 - spec.x1) / c, abs=1e-10)


def test_tau_envelope_over_random_prehistories(demo_spec):
    report = check_tau_envelope(sample_maturations(demo_spec, 100, 42), demo_spec)
    assert report.passed


def test_sobolev_embedding_suite(demo_spec):
    assert check_sobolev(200, 42, demo_spec.h).passed


def test_tau_lipschitz_bound(demo_spec):
    bounds = derive_bounds(demo_spec)
    report = check_tau_lipschitz(demo_spec, bounds, 100, 1.0, 42)
    assert report.passed
    assert report.items[0].bound >= 0
    assert tau_lip_bound(demo_spec, bounds.L_g) > 0


@pytest.mark.slow
def test_picard_oracle_on_random_prehistories(demo_spec):
    rng = np.random.default_rng(2024)
    T0 = min(0.5, demo_spec.min_delay)
    grid = np.linspace(0.0, T0, 257)
    for _ in range(5):
        pre = Prehistory(
            w=random_history(rng, -demo_spec.h, 0.0, 21, 0.5, 1.0).scaled(1.0, 1.0),
            v=random_history(rng, -demo_spec.h, 0.0, 21, 0.5, 1.0),
        )
        oracle = picard_solve(demo_spec, pre, PicardSettings(T0=T0, tol=1e-9, grid_n=256))
        traj = integrate(demo_spec, pre, SolveSettings(dt=1e-3, T=T0))
        assert trajectory_distance(oracle.trajectory, traj, grid) <= 1e-6


def test_decoupled_cases_match_closed_forms():
    spec = make_spec(beta="0", q="0.4")
    pre = constant_prehistory(spec, w=1.5, v=0.2)
    traj = integrate(spec, pre, SolveSettings(dt=1e-3, T=1.0))
    start = traj.n_prehistory - 1
    t = np.array(traj.times[start:])
    assert np.max(np.abs(traj.column("v")[start:] - 0.2 * np.exp(-spec.mu * t))) <= 1e-9
    assert np.max(np.abs(traj.column("w")[start:] - 1.5 * np.exp(0.4 * t))) <= 1e-9


@pytest.mark.slow
def test_apriori_bounds_on_long_demo_run(demo_spec):
    pre = Prehistory.from_exprs(*_demo_exprs(), demo_spec.h, 201)
    traj = integrate(demo_spec, pre, SolveSettings(dt=1e-3, T=5.0))
    bounds = derive_bounds(demo_spec)
    assert check_apriori_w(traj, demo_spec, bounds).passed
    report = check_apriori_v(traj, demo_spec, bounds)
    assert report.passed
    assert "bounded-beta" in report.items[0].context


@pytest.mark.slow
@pytest.mark.parametrize("compatible, min_order", [(True, 3.0), (False, 2.0)])
def test_convergence_order(demo_spec, demo_prehistory, compatible, min_order):
    pre = manufacture_compatible(demo_spec, demo_prehistory) if compatible else demo_prehistory
    rows = convergence_study(demo_spec, pre, 1.0, REFINEMENTS)
    assert len(rows) == 4
    assert check_convergence_order(rows, min_order).passed


@pytest.mark.slow
def test_sign_changing_prehistory(tmp_path, demo_spec):
    path = os.path.join(CONFIG_DIR, "sign_changing.json")
    assert SimulationController(path, out_dir=str(tmp_path)).run("simulate") == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["T_reached"] == pytest.approx(5.0)
    assert summary["checks_passed"] is True
    assert summary["compatibility_defect"] > 0
    assert summary["v_min"] < 0


def test_simulate_is_byte_identical(tmp_path):
    path = write_config(tmp_path / "run.json", solve={"dt": 0.005, "T": 0.5})
    outputs = []
    for name in ("first", "second"):
        out = tmp_path / name
        assert SimulationController(path, out_dir=str(out)).run("simulate") == 0
        outputs.append((out / "trajectory.csv").read_bytes())
    assert outputs[0] == outputs[1]


def test_demo_prehistory_is_incompatible(demo_spec):
    pre = Prehistory.from_exprs(*_demo_exprs(), demo_spec.h, 201)
    assert compatibility_defect(demo_spec, pre) > 0.1


def _demo_exprs():
    from config import DEMO_PREHISTORY
    from expr import parse

    return parse(DEMO_PREHISTORY["w"], ("t",)), parse(DEMO_PREHISTORY["v"], ("t",))
