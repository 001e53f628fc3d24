import math

import numpy as np
import pytest

from app.services.analysis import moments
from app.services.bkw import (
    BkwError,
    bkw_field,
    bkw_table,
    density,
    fourth_moment,
    fourth_moment_ode,
    similarity_parameter,
    start_time,
)
from app.services.grid import make_grid


def test_start_times():
    assert start_time(2) == 0.0
    assert start_time(3) == pytest.approx(6.0 * math.log(2.5))
    with pytest.raises(BkwError):
        start_time(4)


def test_similarity_parameter_limits():
    assert similarity_parameter(0.0, 2) == pytest.approx(0.5)
    assert similarity_parameter(start_time(3), 3) == pytest.approx(0.6)
    assert similarity_parameter(200.0, 2) == pytest.approx(1.0)
    with pytest.raises(BkwError):
        similarity_parameter(1.0, 3)


@pytest.mark.parametrize("dimension, t", [(2, 0.0), (2, 3.0), (3, start_time(3)), (3, 8.0)])
def test_profile_is_nonnegative(dimension, t):
    v2 = np.linspace(0.0, 100.0, 501)
    assert density(v2, t, dimension).min() >= 0.0


@pytest.mark.parametrize("t", [0.0, 1.0, 5.0])
def test_two_dimensional_profile_has_unit_mass_and_temperature(t):
    grid = make_grid(2, 32, 8.0)
    f = bkw_field(grid, t)
    m = moments(f)
    assert m.mass == pytest.approx(1.0, rel=1e-8)
    assert m.temperature == pytest.approx(1.0, rel=1e-8)
    discrete = float(np.sum(f.values * grid.speed_squared() ** 2) * grid.cell_volume)
    assert discrete == pytest.approx(fourth_moment(t, 2), rel=1e-8)


def test_fourth_moment_relaxes_to_the_maxwellian_value():
    assert fourth_moment(0.0, 2) == pytest.approx(6.0)
    assert fourth_moment(500.0, 2) == pytest.approx(8.0)
    assert fourth_moment(500.0, 3) == pytest.approx(15.0)


@pytest.mark.parametrize("dimension", [2, 3])
def test_ode_agrees_with_closed_form(dimension):
    times = np.linspace(start_time(dimension), start_time(dimension) + 10.0, 11)
    ode = fourth_moment_ode(times, dimension)
    closed = [fourth_moment(t, dimension) for t in times]
    assert np.allclose(ode, closed, rtol=1e-9)


def test_table_rows():
    rows = bkw_table([2.0, 0.0, 1.0], 2, [0.0, 1.0, 2.0])
    assert [row.t for row in rows] == [0.0, 1.0, 2.0]
    assert all(len(row.values) == 3 for row in rows)
    assert all(abs(row.fourth_moment - row.fourth_moment_ode) < 1e-9 for row in rows)
    single = bkw_table([1.0], 2, [0.0])
    assert single[0].fourth_moment == single[0].fourth_moment_ode
