import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.services.grid import (
    Field,
    GridError,
    check_same_grid,
    dft,
    idft,
    interpolate,
    interpolate_many,
    make_grid,
    read_snapshot,
    write_snapshot,
)


def test_make_grid_nodes_and_spacing():
    grid = make_grid(2, 8, 4.0)
    assert grid.spacing == pytest.approx(1.0)
    assert grid.nodes[0] == pytest.approx(-4.0)
    assert grid.nodes[-1] == pytest.approx(3.0)
    assert grid.shape == (8, 8)
    assert grid.cell_volume == pytest.approx(1.0)


@pytest.mark.parametrize(
    "dimension, points, half_width",
    [(1, 8, 4.0), (4, 8, 4.0), (2, 12, 4.0), (2, 4, 4.0), (2, 8, 0.0), (2, 8, -1.0)],
)
def test_make_grid_rejects_bad_parameters(dimension, points, half_width):
    with pytest.raises(GridError):
        make_grid(dimension, points, half_width)


def test_field_rejects_non_finite(grid8):
    values = np.zeros(grid8.shape)
    values[1, 1] = np.nan
    with pytest.raises(GridError):
        Field(grid8, values)


def test_field_nonneg_flag_is_checked(grid8):
    values = np.zeros(grid8.shape)
    values[0, 0] = -1.0
    with pytest.raises(GridError):
        Field(grid8, values, nonneg=True)


def test_check_same_grid(grid8, grid16):
    a = Field(grid8, np.zeros(grid8.shape))
    b = Field(grid16, np.zeros(grid16.shape))
    assert check_same_grid(a, a) is grid8
    with pytest.raises(GridError):
        check_same_grid(a, b)


def test_shift_moves_mass_by_whole_cells(grid8):
    values = np.zeros(grid8.shape)
    values[3, 3] = 1.0
    moved = Field(grid8, values).shifted((2, -1))
    assert moved.values[5, 2] == 1.0
    assert moved.values.sum() == 1.0


def test_shift_out_of_box_gives_zero(grid8):
    values = np.ones(grid8.shape)
    assert Field(grid8, values).shifted((8, 0)).values.sum() == 0.0


def test_interpolation_exact_at_nodes(grid8):
    rng = np.random.default_rng(3)
    f = Field(grid8, rng.random(grid8.shape))
    assert interpolate(f, [grid8.nodes[2], grid8.nodes[5]]) == pytest.approx(f.values[2, 5])


@settings(max_examples=50, deadline=None)
@given(
    x=st.floats(min_value=-4.0, max_value=3.0),
    y=st.floats(min_value=-4.0, max_value=3.0),
)
def test_interpolation_reproduces_affine_functions(x, y):
    grid = make_grid(2, 8, 4.0)
    coords = grid.coordinates()
    f = Field(grid, 1.5 + 2.0 * coords[0] - 0.5 * coords[1])
    assert interpolate(f, [x, y]) == pytest.approx(1.5 + 2.0 * x - 0.5 * y, abs=1e-10)


def test_interpolation_outside_box_is_zero(grid8):
    f = Field(grid8, np.ones(grid8.shape))
    points = np.array([[3.5, 0.0], [-4.5, 0.0], [0.0, 10.0]])
    assert np.all(interpolate_many(f, points) == 0.0)


def test_interpolate_rejects_wrong_dimension(grid8):
    f = Field(grid8, np.ones(grid8.shape))
    with pytest.raises(GridError):
        interpolate(f, [0.0, 0.0, 0.0])


def test_dft_is_unitary_and_invertible(grid16):
    rng = np.random.default_rng(7)
    f = Field(grid16, rng.standard_normal(grid16.shape))
    spectrum = dft(f)
    assert np.sum(np.abs(spectrum) ** 2) == pytest.approx(
        np.sum(f.values**2) * grid16.cell_volume
    )
    assert np.allclose(idft(spectrum, grid16).real, f.values)


def test_snapshot_round_trip_keeps_header(tmp_path, gaussian16):
    path = write_snapshot(gaussian16, tmp_path / "snap.txt", time=1.25)
    restored, time = read_snapshot(path)
    assert time == 1.25
    assert restored.grid.same_as(gaussian16.grid)
    assert np.array_equal(restored.values, gaussian16.values)


def test_snapshot_with_wrong_size_is_rejected(tmp_path, grid8):
    path = tmp_path / "bad.txt"
    path.write_text("# N 2\n# M 8\n# R 4.0\n# time 0.0\n1.0\n2.0\n", encoding="utf-8")
    with pytest.raises(GridError):
        read_snapshot(path)
