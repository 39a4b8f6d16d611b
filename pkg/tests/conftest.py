import numpy as np
import pytest

from pseudohinf.synthesis import lagrange_output_feedback_unobservable
from pseudohinf.three_pendulums import three_pendulum_bank, three_pendulum_plant, reference_params


def random_stable(rng, n, shift=0.5):
    M = rng.standard_normal((n, n))
    return M - (np.max(np.linalg.eigvals(M).real) + shift) * np.eye(n)


def random_pseudo_hurwitz(rng, n, unstable=0.7):
    """``V diag(-stable..., +unstable) V^-1`` with random well-conditioned ``V``."""
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    S = np.diag(np.r_[-rng.uniform(0.5, 3.0, n - 1), unstable]) + np.triu(rng.standard_normal((n, n)) * 0.3, 1)
    return Q @ S @ Q.T


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def ring_plant():
    return three_pendulum_plant()


@pytest.fixture(scope="session")
def ring_bank():
    return three_pendulum_bank()


@pytest.fixture(scope="session")
def ring_params():
    return reference_params()


@pytest.fixture(scope="session")
def ring_result(ring_plant, ring_bank, ring_params):
    return lagrange_output_feedback_unobservable(ring_plant, ring_bank, ring_params)
