import numpy as np
import pytest

from lqgrate.loop import LoopDesign
from lqgrate.lqr import PlantModel, min_cost, solve_dare

A2 = np.array([[1.1, 0.2], [0.0, 0.8]])


def two_state_model() -> PlantModel:
    I = np.eye(2)
    return PlantModel(A2, I, I, I, I, I)


@pytest.fixture(scope="session")
def model2():
    return two_state_model()


@pytest.fixture(scope="session")
def cert2(model2):
    return solve_dare(model2)


@pytest.fixture(scope="session")
def floor2(model2, cert2):
    return min_cost(model2, cert2)


@pytest.fixture(scope="session")
def design2(model2, floor2):
    return LoopDesign.synthesize(model2, 2.0 * floor2, seed=0)


@pytest.fixture(scope="session")
def scalar_design():
    model = PlantModel.scalar(1.2)
    return LoopDesign.synthesize(model, 2.0 * min_cost(model, solve_dare(model)), seed=7)
