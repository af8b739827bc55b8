import numpy as np
import pytest

from relight.data import synthesize_image


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def rand_image(rng):
    """Random 16x16 RGB image in [0, 1]."""
    return rng.uniform(0.0, 1.0, (16, 16, 3)).astype(np.float32)


@pytest.fixture(scope="session")
def natural_image():
    """One deterministic procedural scene, 256x256."""
    return synthesize_image([77, 0], size=256)
