import numpy as np
import pytest

from wmhkit.volume import Volume3D


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_volume(rng, shape=(5, 6, 7), spacing=(1.0, 1.0, 1.0), orientation=("R", "A", "S")):
    data = rng.uniform(-10.0, 10.0, size=shape).astype(np.float32)
    return Volume3D(data, spacing, orientation)


def random_binary_volume(rng, shape=(16, 16, 16), p=0.2, spacing=(1.0, 1.0, 1.0)):
    data = (rng.random(shape) < p).astype(np.float32)
    return Volume3D(data, spacing)
