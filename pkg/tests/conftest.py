# threshold_dde/tests/conftest.py

import copy
import json
import logging

import numpy as np
import pytest

from config import DEMO_MODEL
from data_models import ModelConfig
from history import History, Prehistory
from model import build_model_spec, demo_model_spec


def make_spec(**changes):
    """演示模型的变体: 顶层键替换表达式，params 中的键替换参数"""
    raw = copy.deepcopy(DEMO_MODEL)
    params = changes.pop("params", {})
    raw["params"].update(params)
    if "beta" in changes:
        raw.pop("gamma", None)
    raw.update(changes)
    return build_model_spec(ModelConfig(**raw))


def constant_prehistory(spec, w=1.0, v=0.0):
    return Prehistory(w=History.constant(w, -spec.h, 0.0), v=History.constant(v, -spec.h, 0.0))


def write_config(path, **sections):
    """把演示配置加上若干段覆盖写成 JSON 文件"""
    raw = {"model": copy.deepcopy(DEMO_MODEL)}
    raw.update(sections)
    path.write_text(json.dumps(raw))
    return str(path)


@pytest.fixture(autouse=True)
def quiet_logs():
    logging.getLogger("ThresholdDDE").setLevel(logging.WARNING)
    yield


@pytest.fixture(scope="session")
def demo_spec():
    return demo_model_spec()


@pytest.fixture(scope="session")
def demo_prehistory(demo_spec):
    """φ ≡ 1, ψ ≡ 0"""
    return constant_prehistory(demo_spec)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
