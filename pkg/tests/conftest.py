import numpy as np
import pytest

from avgkit import corpus
from avgkit.system import System


@pytest.fixture(scope="session")
def systems():
    return corpus.load_all()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def autonomous(F, T=2 * np.pi):
    """A system whose fields do not depend on t, so that g_i = F_i exactly."""
    return System.from_strings(F, T=T)
