import numpy as np
import pytest

from parelastic import CouplingSpec, RobotModel, State, step, uniform_rod_chain


def make_finger(gravity=(0.0, -9.81), damping=0.5):
    """Three uniform unit rods, joints 0 and 1 actuated, joint 2 passive and
    elastically coupled to joint 1."""
    chain = uniform_rod_chain([1.0, 1.0, 1.0], [0.1, 0.1, 0.1])
    return RobotModel(
        chains=[chain],
        actuated_indices=(0, 1),
        joint_stiffness=1.5,
        joint_damping=damping,
        couplings=[CouplingSpec("linear", 2.0, coordinate_pair=(1, 2))],
        gravity=gravity,
    )


def make_two_chain_rig(gravity=(0.0, 0.0)):
    """Actuated arm and passive arm on separate anchors, linearly coupled."""
    return RobotModel(
        chains=[
            uniform_rod_chain([0.6], [0.12]),
            uniform_rod_chain([0.6], [0.12]),
        ],
        actuated_indices=(0,),
        joint_stiffness=1.5,
        joint_damping=0.5,
        couplings=[CouplingSpec("linear", 2.0, coordinate_pair=(0, 1))],
        gravity=gravity,
        chain_anchors=((0.0, 0.0), (1.5, 0.0)),
    )


@pytest.fixture
def finger():
    return make_finger()


@pytest.fixture
def finger_nogravity():
    return make_finger(gravity=(0.0, 0.0))


@pytest.fixture(scope="session", autouse=True)
def warm_numba():
    """Compile the simulation kernels once so timed tests measure physics."""
    model = make_finger()
    step(model, State(np.zeros(3), np.zeros(3)), lambda s: np.zeros(2), 1e-3, 2)
