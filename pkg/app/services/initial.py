import logging
from pathlib import Path

import numpy as np

from app.schemas import InitialDatumConfig
from app.services.analysis import gaussian
from app.services.bkw import bkw_field, start_time
from app.services.grid import Field, GridSpec, read_snapshot

logger = logging.getLogger(__name__)


class InitialDatumError(ValueError):
    """Raised when an initial datum cannot be built on the requested grid."""


def maxwellian(grid: GridSpec, mass: float = 1.0, center=None, temperature: float = 1.0) -> Field:
    center = np.zeros(grid.dimension) if center is None else center
    return Field(grid, gaussian(grid, mass, center, temperature), nonneg=True)


def disk(grid: GridSpec, radius: float = 2.0, center=None, mass: float = 1.0) -> Field:
    """Indicator of the ball |v - center| < radius scaled to the given discrete mass."""
    center = np.zeros(grid.dimension) if center is None else np.asarray(center, dtype=np.float64)
    offset = grid.coordinates() - center.reshape((grid.dimension,) + (1,) * grid.dimension)
    inside = np.sum(offset**2, axis=0) < radius**2
    count = int(inside.sum())
    if count == 0:
        raise InitialDatumError(f"Disk of radius {radius} contains no grid node")
    height = mass / (count * grid.cell_volume)
    return Field(grid, np.where(inside, height, 0.0), nonneg=True)


def double_bump(
    grid: GridSpec,
    separation: float = 2.0,
    width: float = 0.6,
    mass: float = 1.0,
    center=None,
) -> Field:
    center = np.zeros(grid.dimension) if center is None else np.asarray(center, dtype=np.float64)
    step = np.zeros(grid.dimension)
    step[0] = 0.5 * separation
    values = gaussian(grid, 0.5 * mass, center - step, width**2)
    values = values + gaussian(grid, 0.5 * mass, center + step, width**2)
    return Field(grid, values, nonneg=True)


def from_snapshot(grid: GridSpec, path: Path) -> Field:
    field, _ = read_snapshot(path)
    if not field.grid.same_as(grid):
        raise InitialDatumError(f"Snapshot {path} was written on a different grid")
    if field.values.min() < 0:
        raise InitialDatumError(f"Snapshot {path} holds negative values")
    return Field(grid, field.values, nonneg=True)


def build_initial(config: InitialDatumConfig, grid: GridSpec) -> Field:
    center = np.asarray(config.center, dtype=np.float64)
    if center.shape != (grid.dimension,):
        raise InitialDatumError("initial.center must have one entry per dimension")
    if config.kind == "maxwellian":
        datum = maxwellian(grid, config.mass, center, config.temperature)
    elif config.kind == "disk":
        datum = disk(grid, config.radius, center, config.mass)
    elif config.kind == "double_bump":
        datum = double_bump(grid, config.separation, config.width, config.mass, center)
    elif config.kind == "snapshot":
        datum = from_snapshot(grid, Path(config.path))
    elif config.kind == "bkw":
        datum = bkw_field(grid, start_time(grid.dimension) + config.bkw_time)
    else:
        raise InitialDatumError(f"Unknown initial datum {config.kind!r}")
    logger.debug("Initial datum built", extra={"kind": config.kind})
    return datum
