import numpy as np
import pytest

from bcmppi.dynamics import QuadrotorParams, State


@pytest.fixture
def params():
    return QuadrotorParams()


@pytest.fixture
def hover_state():
    return State.hover(position=(0.0, 0.0, 1.0))


def random_state(rng, params, spread=0.3):
    """A mildly perturbed flying state with a valid unit quaternion."""
    q = np.array([1.0, *(0.1 * rng.standard_normal(3))])
    q /= np.linalg.norm(q)
    return State(
        position=rng.uniform(-2.0, 2.0, 3),
        attitude=q,
        linear_velocity=spread * rng.standard_normal(3),
        angular_velocity=spread * rng.standard_normal(3),
    )
