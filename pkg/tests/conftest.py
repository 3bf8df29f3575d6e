import numpy as np
import pytest

from gyropower import gyrator

K_WORKED = np.array([[2.0, 1.0], [1.0, 2.0]])
T_WORKED = np.array([1.0, 2.0])

# hand-solved values for the worked model (see oracles.worked_2x2_by_hand)
SIGMA_WORKED = np.array([[0.75, -0.5], [-0.5, 1.25]])
OMEGA_WORKED = np.array([[0.0, 0.125], [-0.125, 0.0]])
P_WORKED = 1.0 / 22.0


@pytest.fixture
def worked():
    return gyrator.LinearGyratorModel(K_WORKED, T_WORKED)


@pytest.fixture
def worked_report(worked):
    return gyrator.max_power(worked)


@pytest.fixture
def rng():
    return np.random.default_rng(20231016)
