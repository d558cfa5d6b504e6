import numpy as np
import pytest

from ddrmpc.datalab import run_experiment, uniform_inputs
from ddrmpc.lmi import Weights, input_box_rows, make_constraint_rows, state_box_rows
from ddrmpc.plants import LtiPlant, LurePlant, PolytopicPlant, get_nonlinearity


# angular positioning rig: two damping extremes sharing one input matrix
A1 = np.array([[1.0, 0.1], [0.0, 0.99]])
A2 = np.array([[1.0, 0.1], [0.0, 0.0]])
B_ANG = np.array([[0.0], [0.787]])
K_REF_ANG = np.array([[-0.6489, -0.3809]])

# flexible arm with a measured sector nonlinearity on the third state
A_ARM = np.array([
    [1.0, 0.02, 0.0, 0.0],
    [-0.972, 0.975, 0.972, 0.0],
    [0.0, 0.0, 1.0, 0.02],
    [0.39, 0.0, -0.334, 1.0],
])
B_ARM = np.array([[0.0], [0.432], [0.0], [0.0]])
E_ARM = np.array([[0.0], [0.0], [0.0], [-0.0666]])
H_ARM = np.array([[0.0, 0.0, 1.0, 0.0]])
BETA_ARM = np.array([[2.0]])
K_REF_ARM = np.array([[-1.0342, -0.1949, -0.4329, -0.2236]])


@pytest.fixture
def angular_vertices():
    return [LtiPlant(A1, B_ANG), LtiPlant(A2, B_ANG)]


@pytest.fixture
def angular_polytope():
    return PolytopicPlant([(A1, B_ANG), (A2, B_ANG)], (0.85, 0.15))


@pytest.fixture
def angular_datasets(angular_vertices):
    out = []
    for seed, plant in zip((1, 2), angular_vertices):
        inputs = uniform_inputs(1, 10, 1.0, seed)
        out.append(run_experiment(plant, np.zeros(2), inputs, seed=seed))
    return out


@pytest.fixture
def angular_weights():
    return Weights(np.eye(2), np.array([[0.01]]))


@pytest.fixture
def angular_rows():
    return make_constraint_rows(np.zeros((0, 2)), input_box_rows(1.0, 1), 2, 1)


@pytest.fixture
def angular_x0():
    return np.array([0.95, 0.0])


@pytest.fixture
def arm_plant():
    return LurePlant(A_ARM, B_ARM, E_ARM, H_ARM, get_nonlinearity("sin_plus_id"), BETA_ARM)


@pytest.fixture
def arm_dataset(arm_plant):
    inputs = uniform_inputs(1, 50, 2.0, 1)
    return run_experiment(arm_plant, np.array([1.1, 0.2, 0.0, 0.0]), inputs,
                          record_w=True, seed=1)


@pytest.fixture
def arm_weights():
    return Weights(0.1 * np.diag([1.0, 0.1, 1.0, 0.1]), np.array([[0.1]]))


@pytest.fixture
def arm_rows():
    state = state_box_rows({0: (-np.pi / 2, np.pi / 2), 2: (-np.pi / 2, np.pi / 2)}, 4)
    return make_constraint_rows(state, input_box_rows(2.0, 1), 4, 1)


@pytest.fixture
def arm_x0():
    return np.array([1.1, 0.2, 0.0, 0.0])
