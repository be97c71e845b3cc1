import numpy as np
import pytest
from hypothesis import settings

from pbim.sparse import SparseMatrix

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def a34():
    """Rows [[3, 4], [0, 5]]."""
    return SparseMatrix.from_dense([[3.0, 4.0], [0.0, 5.0]])
