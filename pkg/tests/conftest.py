"""
Shared fixtures for the sllg_fem test suite.
"""
import logging

import numpy as np
import pytest

from sllg_fem.config import SimulationConfig
from sllg_fem.constants import APP_ID
from sllg_fem.fem_core import NodalField
from sllg_fem.mesh import Mesh, uniform_unit_square_mesh
from sllg_fem.presets import build_simulator


def random_unit_field(mesh: Mesh, rng: np.random.Generator) -> NodalField:
    values = rng.standard_normal((mesh.node_count, 3))
    return NodalField(mesh, values / np.linalg.norm(values, axis=1)[:, None])


@pytest.fixture(autouse=True)
def reset_package_logger():
    yield
    package_logger = logging.getLogger(APP_ID)
    for handler in list(package_logger.handlers):
        package_logger.removeHandler(handler)
        handler.close()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def mesh4() -> Mesh:
    return uniform_unit_square_mesh(4)


@pytest.fixture
def single_element_mesh() -> Mesh:
    return Mesh([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]])


@pytest.fixture
def small_config(tmp_path) -> SimulationConfig:
    return SimulationConfig(n=4, steps=8, paths=3, seed=42, out=str(tmp_path / "out"))


@pytest.fixture
def small_simulator(small_config):
    return build_simulator(small_config)


@pytest.fixture
def twist_simulator(small_config):
    return build_simulator(small_config.copy(update={"g": "twist-x"}))
