import numpy as np
import pytest

from app.services.grid import Field, make_grid


@pytest.fixture
def grid8():
    return make_grid(2, 8, 4.0)


@pytest.fixture
def grid16():
    return make_grid(2, 16, 6.0)


@pytest.fixture
def gaussian16(grid16):
    v2 = grid16.speed_squared()
    values = np.exp(-v2 / 2.0) / (2.0 * np.pi)
    return Field(grid16, values, nonneg=True)
