import numpy as np
import pytest

from ddsls.blockops import CostWeights
from ddsls.lqg import dare
from ddsls.lti import LtiSystem

# Slightly unstable graph-Laplacian benchmark plant used across the suite.
A_BENCH = np.array(
    [
        [1.01, 0.01, 0.00],
        [0.01, 1.01, 0.01],
        [0.00, 0.01, 1.01],
    ]
)
SIGMA2 = 0.1
L_BENCH = 10
T_BENCH = 45


@pytest.fixture(scope="session")
def plant() -> LtiSystem:
    return LtiSystem(A=A_BENCH, B=np.eye(3), noise_std=np.sqrt(SIGMA2))


@pytest.fixture(scope="session")
def bench_weights(plant) -> CostWeights:
    q = 1e-3 * np.eye(3)
    r = np.eye(3)
    terminal = dare(plant, q, r)
    return CostWeights(q_state=q, r_input=r, q_terminal=terminal, horizon=L_BENCH)
