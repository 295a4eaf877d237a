import numpy as np
import pytest

from maskfed.numerics import stream


@pytest.fixture
def rng() -> np.random.Generator:
    return stream(12345, "tests")
