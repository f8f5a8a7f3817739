# threshold_dde/tests/test_solver.py

import math

import numpy as np
import pytest

from data_models import PicardSettings, SolveSettings
from errors import BlowUpError, PicardConvergenceError, PrehistoryError, StateRangeError, StepSizeError
from history import History, Prehistory
from rhs import calG, delay_functional
from solver import (
    MethodOfStepsSolver, SolverStatus, Trajectory, compatibility_defect, integrate,
    manufacture_compatible, picard_solve, trajectory_distance, voc_residual
)
from tests.conftest import constant_prehistory, make_spec

SHORT = SolveSettings(dt=1e-3, T=0.05)


def test_trajectory_reproduces_prehistory(demo_spec):
    pre = Prehistory(
        w=History.from_callable(lambda t: 1.0 + 0.1 * t, -demo_spec.h, 0.0, 11),
        v=History.from_callable(lambda t: 0.1 * math.cos(t), -demo_spec.h, 0.0, 26),
    )
    traj = Trajectory(pre)
    assert traj.n_prehistory == len(pre.w.resampled(pre.v.times))
    ts = np.linspace(-demo_spec.h, 0.0, 41)
    np.testing.assert_allclose(traj.channel("v").eval_array(ts), pre.v.eval_array(ts), atol=1e-13)
    np.testing.assert_allclose(traj.channel("w").eval_array(ts), pre.w.eval_array(ts), atol=1e-13)


def test_append_builds_hermite_segments(demo_spec, demo_prehistory):
    traj = Trajectory(demo_prehistory)
    traj.set_start_slope(0.5, 1.0)
    traj.append(0.1, 1.05, 0.1, 0.5, 1.0)
    w = traj.channel("w")
    assert w.eval(0.05) == pytest.approx(1.025)
    assert traj.column("dw")[traj.n_prehistory - 1] == 0.0  # 节点保留 Φ'(0⁻)
    assert w.eval_deriv(0.1) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        traj.append(0.1, 1.0, 0.0, 0.0, 0.0)
    with pytest.raises(RuntimeError):
        traj.set_start_slope(0.0, 0.0)


def test_trajectory_grows_past_capacity(demo_prehistory):
    traj = Trajectory(demo_prehistory, capacity=4)
    for k in range(1, 20):
        traj.append(0.01 * k, 1.0, 0.0, 0.0, 0.0)
    assert traj.n_nodes == traj.n_prehistory + 19
    assert traj.t_end == pytest.approx(0.19)


def test_step_count_and_columns(demo_spec, demo_prehistory):
    traj = integrate(demo_spec, demo_prehistory, SHORT)
    assert traj.n_nodes == traj.n_prehistory + 50
    assert traj.t_end == pytest.approx(0.05, abs=1e-15)
    frame = traj.to_frame()
    assert list(frame.columns) == ["t", "w", "v", "dw", "dv", "tau", "calG"]
    assert frame.loc[frame["t"] < 0, "tau"].isna().all()
    assert frame.loc[frame["t"] > 0, "tau"].notna().all()


def test_first_step_slope_is_F_of_prehistory(demo_spec, demo_prehistory):
    traj = integrate(demo_spec, demo_prehistory, SHORT)
    # F(Φ) = (0.5, 1.0) 而 Φ'(0⁻) = 0
    assert traj.channel("w").eval_deriv(1e-9) == pytest.approx(0.5, abs=1e-6)
    assert traj.channel("v").eval_deriv(1e-9) == pytest.approx(1.0, abs=1e-6)
    assert compatibility_defect(demo_spec, demo_prehistory) == pytest.approx(math.hypot(0.5, 1.0), abs=1e-10)


def test_decoupled_v_decays_exactly():
    spec = make_spec(beta="0")
    pre = constant_prehistory(spec, w=1.0, v=0.3)
    traj = integrate(spec, pre, SolveSettings(dt=1e-3, T=1.0))
    t = np.array(traj.times[traj.n_prehistory - 1:])
    v = np.array(traj.column("v")[traj.n_prehistory - 1:])
    assert np.max(np.abs(v - 0.3 * np.exp(-spec.mu * t))) <= 1e-9


def test_constant_q_grows_exactly():
    spec = make_spec(q="0.3")
    pre = constant_prehistory(spec, w=2.0, v=0.1)
    traj = integrate(spec, pre, SolveSettings(dt=1e-3, T=1.0))
    t = np.array(traj.times[traj.n_prehistory - 1:])
    w = np.array(traj.column("w")[traj.n_prehistory - 1:])
    assert np.max(np.abs(w - 2.0 * np.exp(0.3 * t))) <= 1e-9


def test_rejects_step_larger_than_minimal_delay(demo_spec, demo_prehistory):
    with pytest.raises(StepSizeError):
        integrate(demo_spec, demo_prehistory, SolveSettings(dt=0.6, T=1.0))


def test_rejects_prehistory_on_wrong_interval(demo_spec):
    pre = Prehistory(w=History.constant(1.0, -1.0, 0.0), v=History.constant(0.0, -1.0, 0.0))
    with pytest.raises(PrehistoryError):
        integrate(demo_spec, pre, SHORT)


def test_rejects_steep_prehistory(demo_spec):
    steep = History.from_callable(lambda t: 0.01 * math.sin(1e6 * t), -demo_spec.h, 0.0, 11,
                                  df=lambda t: 1e4 * math.cos(1e6 * t))
    pre = Prehistory(w=History.constant(1.0, -demo_spec.h, 0.0), v=steep)
    with pytest.raises(PrehistoryError):
        integrate(demo_spec, pre, SHORT)


def test_blow_up_is_reported():
    spec = make_spec(q="50")
    solver = MethodOfStepsSolver(spec, SolveSettings(dt=1e-3, T=1.0, blowup_cap=10.0))
    with pytest.raises(BlowUpError) as info:
        solver.run(constant_prehistory(spec))
    assert info.value.t == pytest.approx(math.log(10.0) / 50.0, abs=2e-3)
    assert solver.status == SolverStatus.FAILED


def test_leaving_declared_interval_is_an_error():
    spec = make_spec(interval={"lo": -0.05, "hi": 0.05}, range={"v_lo": -0.04, "v_hi": 0.04})
    with pytest.raises(StateRangeError):
        integrate(spec, constant_prehistory(spec), SolveSettings(dt=1e-3, T=0.2))


def test_leaving_validated_range_only_warns():
    spec = make_spec(range={"v_lo": -0.05, "v_hi": 0.05})
    solver = MethodOfStepsSolver(spec, SolveSettings(dt=1e-3, T=0.2))
    traj = solver.run(constant_prehistory(spec))
    assert solver.status == SolverStatus.COMPLETED
    assert solver.left_validated_range_at is not None
    assert traj.t_end == pytest.approx(0.2)
    assert solver.get_status_info()["steps_taken"] == 200


def test_integration_is_deterministic(demo_spec, demo_prehistory):
    a = integrate(demo_spec, demo_prehistory, SHORT)
    b = integrate(demo_spec, demo_prehistory, SHORT)
    for key in ("t", "w", "v", "dw", "dv", "tau", "calG"):
        np.testing.assert_array_equal(a.column(key), b.column(key))


def test_segment_of_trajectory(demo_spec, demo_prehistory):
    traj = integrate(demo_spec, demo_prehistory, SHORT)
    seg = traj.segment(0.03)
    assert seg.h == pytest.approx(demo_spec.h)
    assert seg.v.eval(0.0) == pytest.approx(traj.channel("v").eval(0.03))
    assert seg.w.eval(-1.0) == pytest.approx(1.0)


def test_picard_matches_method_of_steps(demo_spec, demo_prehistory):
    result = picard_solve(demo_spec, demo_prehistory, PicardSettings(T0=0.5, tol=1e-9, grid_n=256))
    assert result.iterations[-1].sup_diff <= 1e-9
    traj = integrate(demo_spec, demo_prehistory, SolveSettings(dt=1e-3, T=0.5))
    grid = np.linspace(0.0, 0.5, 257)
    assert trajectory_distance(result.trajectory, traj, grid) <= 1e-6


@pytest.mark.parametrize("seed", [3, 7, 11])
def test_picard_seeded_start_reaches_same_fixed_point(demo_spec, demo_prehistory, seed):
    settings = PicardSettings(T0=0.25, tol=1e-10, grid_n=128)
    plain = picard_solve(demo_spec, demo_prehistory, settings)
    seeded = picard_solve(demo_spec, demo_prehistory, settings.model_copy(update={"seed": seed}))
    grid = np.linspace(0.0, 0.25, 129)
    assert trajectory_distance(plain.trajectory, seeded.trajectory, grid) <= 10 * settings.tol
    assert seeded.iterations[0].sup_diff != plain.iterations[0].sup_diff


def test_picard_distinct_seeds_agree(demo_spec, demo_prehistory):
    settings = PicardSettings(T0=0.25, tol=1e-10, grid_n=128)
    runs = [picard_solve(demo_spec, demo_prehistory, settings.model_copy(update={"seed": s})) for s in (3, 7, 11)]
    grid = np.linspace(0.0, 0.25, 129)
    for i in range(3):
        for j in range(i + 1, 3):
            assert trajectory_distance(runs[i].trajectory, runs[j].trajectory, grid) <= 10 * settings.tol
    assert len({run.iterations[0].sup_diff for run in runs}) == 3


def test_picard_columns_belong_to_returned_iterate(demo_spec, demo_prehistory):
    result = picard_solve(demo_spec, demo_prehistory, PicardSettings(T0=0.25, tol=1e-6, grid_n=64))
    traj = result.trajectory
    start = traj.n_prehistory
    for t, tau, G in zip(traj.times[start:], traj.column("tau")[start:], traj.column("calG")[start:]):
        segment = traj.segment_view("v", float(t))
        functional = delay_functional(segment, demo_spec)
        assert tau == pytest.approx(functional.tau, abs=1e-13)
        assert G == pytest.approx(calG(segment, demo_spec, functional=functional), abs=1e-13)


def test_picard_reports_non_convergence(demo_spec, demo_prehistory):
    with pytest.raises(PicardConvergenceError) as info:
        picard_solve(demo_spec, demo_prehistory, PicardSettings(T0=0.5, max_iter=3, grid_n=64))
    assert info.value.iterations == 3
    assert info.value.last_ratio is not None and 0 < info.value.last_ratio < 1


def test_picard_horizon_limited_by_minimal_delay(demo_spec, demo_prehistory):
    with pytest.raises(StepSizeError):
        picard_solve(demo_spec, demo_prehistory, PicardSettings(T0=0.6))


def test_variation_of_constants_residual(demo_spec, demo_prehistory):
    traj = integrate(demo_spec, demo_prehistory, SolveSettings(dt=1e-3, T=1.0))
    r_w, r_v = voc_residual(traj, demo_spec)
    assert r_w <= 1e-6
    assert r_v <= 1e-6


def test_manufactured_prehistory_is_compatible(demo_spec, demo_prehistory):
    pre = manufacture_compatible(demo_spec, demo_prehistory)
    assert compatibility_defect(demo_spec, pre) <= 1e-10
    # Φ(0) 与 [-h, -σ] 上的前史不变
    assert pre.initial_value() == pytest.approx(demo_prehistory.initial_value(), abs=1e-15)
    assert pre.v.eval(-1.0) == pytest.approx(demo_prehistory.v.eval(-1.0), abs=1e-15)
