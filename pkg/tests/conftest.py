import json
import math
from pathlib import Path

import numpy as np
import pytest

from slv_core.fixtures import (class_26_spec, identity_spec, may_leonard_spec, repeller_spec,
                               sampled_class_26_spec, saddle_spec)
from slv_core.model import ModelSpec

MODELS_DIR = Path(__file__).resolve().parents[1] / "models"

STANDARD_SEASON = {"b": 1.0, "mu": 0.5, "phi": 0.5, "omega": 1.0}
RHO_STAR = math.expm1(-0.25) / math.expm1(-0.5)  # ~0.562177
L_FACTOR = math.exp(-0.25)  # ~0.778801


@pytest.fixture
def standard_spec():
    return ModelSpec(A=[[1.0, 0.5, 0.5], [0.5, 1.0, 0.5], [0.5, 0.5, 1.0]], **STANDARD_SEASON)


@pytest.fixture
def ml_attractor():
    return may_leonard_spec(1.2, 0.5)


@pytest.fixture
def ml_heteroclinic():
    return may_leonard_spec(1.5, 0.8)


@pytest.fixture
def ml_center():
    return may_leonard_spec(1.5, 0.5)


@pytest.fixture
def identity():
    return identity_spec()


@pytest.fixture
def saddle():
    return saddle_spec()


@pytest.fixture
def repeller():
    return repeller_spec()


@pytest.fixture
def class26():
    return class_26_spec()


@pytest.fixture
def class26_sampled():
    return sampled_class_26_spec(seed=0)


@pytest.fixture
def write_model(tmp_path):
    def _write(payload, name="model.json"):
        path = tmp_path / name
        path.write_text(json.dumps(payload), encoding="utf-8")
        return path

    return _write


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
