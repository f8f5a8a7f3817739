# threshold_dde/tests/test_model.py

import math

import numpy as np
import pytest
from pydantic import ValidationError

from config import VALIDATION_CONFIG
from data_models import DerivedBounds, ModelConfig
from errors import ModelError
from expr import parse
from model import ModelSpec, derive_beta, derive_bounds, validate
from tests.conftest import make_spec


def test_demo_model_passes_validation(demo_spec):
    report = validate(demo_spec)
    assert report.passed, report.to_table()
    assert report.get("model_param.K_ge_eps").passed
    assert report.get("model_consistency.d1g").passed


def test_demo_geometry(demo_spec):
    assert demo_spec.h == pytest.approx(2.5)
    assert demo_spec.min_delay == pytest.approx(0.5)
    assert demo_spec.max_delay == pytest.approx(2.0)


def test_demo_bounds(demo_spec):
    bounds = derive_bounds(demo_spec)
    assert bounds.M_q == pytest.approx(0.5)
    assert bounds.M_k == 0.0
    assert bounds.M_G == pytest.approx(demo_spec.K)
    # max |∂g/∂v| = 3√3/8 at v = 1/√3
    assert bounds.L_g == pytest.approx(3.0 * math.sqrt(3.0) / 8.0, rel=2e-3)
    assert bounds.M_beta == pytest.approx(1.0 / (0.5 + 1.0 / 101.0), rel=1e-12)
    assert bounds.C_beta >= 0 and bounds.a_beta >= 0


def test_linear_growth_fit_dominates_beta(demo_spec):
    bounds = derive_bounds(demo_spec)
    vs = np.linspace(bounds.v_lo, bounds.v_hi, 401)
    beta = np.abs(demo_spec.beta_vector(vs))
    assert np.all(beta <= bounds.C_beta * np.abs(vs) + bounds.a_beta + 1e-12)


def test_K_below_eps_names_the_inequality():
    spec = make_spec(params={"K": 0.4, "eps": 0.5, "b": 2.0})
    report = validate(spec)
    assert not report.passed
    failed = {item.check_id for item in report.failures}
    assert "model_param.K_ge_eps" in failed


def test_inconsistent_d1g_fails():
    spec = make_spec(g="1 + 0.25*tanh(x)", d1g="0")
    report = validate(spec)
    assert report.get("model_consistency.d1g").status.value == "fail"


def test_consistent_x_dependent_g_passes():
    spec = make_spec(g="1 + 0.25*tanh(x)", d1g="0.25*(1 - tanh(x)^2)")
    assert validate(spec).passed


def test_delay_interval_condition():
    # x2 - x1 = 1 需小于 b*eps/K = 0.5
    spec = make_spec(params={"b": 2.0})
    report = validate(spec)
    assert report.get("model_param.delay_interval").status.value == "fail"


def test_delay_interval_is_strict():
    # b*eps/K = 4*0.5/2 = 1 = x2 - x1
    assert not validate(make_spec(params={"b": 4.0})).get("model_param.delay_interval").passed
    assert validate(make_spec(params={"b": 4.001})).get("model_param.delay_interval").passed


@pytest.mark.parametrize("changes", [{}, {"g": "1 + 0.25*tanh(x)", "d1g": "0"}])
def test_verdict_stable_under_grid_refinement(changes):
    spec = make_spec(**changes)
    grid = spec.default_grid()
    finer = grid.model_copy(update={"nx": 2 * grid.nx - 1, "nv": 2 * grid.nv - 1})
    coarse_report, fine_report = validate(spec, grid), validate(spec, finer)
    assert coarse_report.passed == fine_report.passed
    assert {i.check_id for i in coarse_report.failures} == {i.check_id for i in fine_report.failures}


def test_derive_beta_from_gamma(demo_spec):
    beta = derive_beta(parse("1", ("v",)), demo_spec.g, demo_spec.x1)
    assert beta(0.0) == pytest.approx(1.0 / 1.5)
    assert demo_spec.beta_eval(0.0) == pytest.approx(1.0 / 1.5)


def test_derive_beta_matches_direct_quotient(rng):
    spec = make_spec(gamma="1 + 0.25*v^2 + sin(v)")
    beta = derive_beta(spec.gamma, spec.g, spec.x1)
    vs = rng.uniform(spec.v_lo, spec.v_hi, 100)
    direct = np.array([spec.gamma(v) / spec.g(spec.x1, v) for v in vs])
    np.testing.assert_allclose([beta(v) for v in vs], direct, rtol=1e-12, atol=0)
    np.testing.assert_allclose(spec.beta_vector(vs), direct, rtol=1e-12, atol=0)


def test_derived_bounds_default_to_configured_range():
    bounds = DerivedBounds(M_q=0.0, M_k=0.0, M_G=1.0, L_g=0.0)
    assert (bounds.v_lo, bounds.v_hi) == VALIDATION_CONFIG["default_v_range"]


def test_beta_given_directly():
    spec = make_spec(beta="0")
    assert spec.beta_eval(3.0) == 0.0


def test_exactly_one_of_beta_and_gamma():
    with pytest.raises(ValidationError):
        ModelConfig(q="0", beta="1", gamma="1", g="1", d1g="0", d="0",
                    params={"x1": 0, "x2": 1, "mu": 0, "eps": 1, "K": 1, "b": 2})
    with pytest.raises(ModelError):
        ModelSpec(q=parse("0", ("v",)), g=parse("1", ("x", "v")), d1g=parse("0", ("x", "v")),
                  d=parse("0", ("x", "v")), x1=0.0, x2=1.0, mu=0.0, eps=1.0, K=1.0, b=2.0)


def test_with_overrides_is_a_copy(demo_spec):
    bounds = derive_bounds(demo_spec)
    broken = bounds.with_overrides(M_q=bounds.M_q / 2)
    assert broken.M_q == pytest.approx(0.25)
    assert bounds.M_q == pytest.approx(0.5)
