import numpy as np
import pytest

from robustkit.synthetic import gray_image, synthetic_corpus


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_corpus():
    return [x for x, _ in synthetic_corpus(3, size=32, seed=7)]


@pytest.fixture(scope="session")
def gray64():
    return gray_image(64, 0.5)
