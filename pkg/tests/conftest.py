import numpy as np
import pytest

from gausshand.hand import default_hand_model


@pytest.fixture(scope="session")
def model():
    return default_hand_model()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
