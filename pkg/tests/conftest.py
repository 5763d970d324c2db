import numpy as np
import pytest

from src.core.models import RigidTransform, ShapeModel
from src.core.geometry import random_rotation
from src.core.solver_manager import SolverManager
from src.core.synth import ScenarioConfig, generate_scenario


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope='session')
def backend():
    manager = SolverManager()
    yield manager
    manager.close()


@pytest.fixture
def random_pose(rng):
    def make(scale=1.0):
        return RigidTransform(random_rotation(rng), rng.uniform(-scale, scale, 3))
    return make


@pytest.fixture
def small_model(rng):
    mean = rng.uniform(-0.5, 0.5, (3, 12))
    bases = tuple(0.1 * rng.normal(size=(3, 12)) for _ in range(2))
    return ShapeModel(mean, bases)


@pytest.fixture(scope='session')
def ns_scenario():
    return generate_scenario(ScenarioConfig(seed=1, n=50, m=3, counts=(10, 10), config_id='test'))


@pytest.fixture(scope='session')
def nsc_scenario():
    return generate_scenario(ScenarioConfig.from_ladder(1, family='nsc', seed=3))
