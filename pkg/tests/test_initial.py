import numpy as np
import pytest

from app.schemas import InitialDatumConfig
from app.services.analysis import moments
from app.services.grid import make_grid, write_snapshot
from app.services.initial import (
    InitialDatumError,
    build_initial,
    disk,
    double_bump,
    from_snapshot,
    maxwellian,
)


@pytest.fixture
def grid():
    return make_grid(2, 16, 6.0)


def test_disk_has_exact_discrete_mass(grid):
    f = disk(grid, radius=2.0, mass=1.5)
    assert moments(f).mass == pytest.approx(1.5, rel=1e-12)
    assert set(np.unique(f.values)) == {0.0, f.values.max()}


def test_disk_without_nodes_is_rejected(grid):
    with pytest.raises(InitialDatumError):
        disk(grid, radius=0.1, center=[0.375, 0.375])


def test_double_bump_is_centered():
    fine = make_grid(2, 32, 6.0)
    f = double_bump(fine, separation=2.0, width=0.6)
    m = moments(f)
    assert m.mass == pytest.approx(1.0, rel=1e-6)
    assert np.allclose(m.mean_velocity, 0.0, atol=1e-8)
    assert f.values[16, 16] < f.values[np.argmin(np.abs(fine.nodes - 1.0)), 16]


def test_maxwellian_moments(grid):
    m = moments(maxwellian(grid, mass=2.0, center=[0.5, 0.0], temperature=0.8))
    assert m.mass == pytest.approx(2.0, rel=1e-6)
    assert m.temperature == pytest.approx(0.8, rel=1e-5)


def test_snapshot_datum(tmp_path, grid):
    path = write_snapshot(maxwellian(grid), tmp_path / "start.txt")
    assert np.allclose(from_snapshot(grid, path).values, maxwellian(grid).values)
    with pytest.raises(InitialDatumError):
        from_snapshot(make_grid(2, 8, 6.0), path)


@pytest.mark.parametrize("kind", ["maxwellian", "disk", "double_bump", "bkw"])
def test_build_initial_kinds(grid, kind):
    f = build_initial(InitialDatumConfig(kind=kind), grid)
    assert f.nonneg
    assert moments(f).mass == pytest.approx(1.0, rel=1e-3)


def test_build_initial_checks_center(grid):
    config = InitialDatumConfig(kind="disk", center=[0.0, 0.0, 0.0])
    with pytest.raises(InitialDatumError):
        build_initial(config, grid)
