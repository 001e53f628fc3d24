"""Closed-form isotropic similarity solution for the constant kernel.

Two dimensions, B = 1 / (2 pi):
    f = exp(-v^2 / 2S) / (2 pi S^2) * (2S - 1 + (1 - S) v^2 / 2S),  S = 1 - exp(-t / 8) / 2
Three dimensions, B = 1 / (4 pi):
    f = exp(-v^2 / 2K) / (2 (2 pi K)^{3/2}) * ((5K - 3) / K + (1 - K) v^2 / K^2),  K = 1 - exp(-t / 6)

Both carry unit mass and unit temperature. The fourth moment obeys a closed linear
ODE, integrated independently by ``fourth_moment_ode`` to cross-check the closed form.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from app.services.grid import Field, GridSpec

logger = logging.getLogger(__name__)


class BkwError(ValueError):
    """Raised for times or dimensions outside the similarity solution's range."""


def start_time(dimension: int) -> float:
    """Earliest time at which the profile is nonnegative."""
    if dimension == 2:
        return 0.0
    if dimension == 3:
        return 6.0 * math.log(2.5)
    raise BkwError(f"No similarity solution for dimension {dimension}")


def similarity_parameter(t: float, dimension: int) -> float:
    if t < start_time(dimension) - 1e-12:
        raise BkwError(f"t = {t} precedes the nonnegative range for N = {dimension}")
    if dimension == 2:
        return 1.0 - 0.5 * math.exp(-t / 8.0)
    return 1.0 - math.exp(-t / 6.0)


def density(speed_squared: np.ndarray, t: float, dimension: int) -> np.ndarray:
    s = similarity_parameter(t, dimension)
    v2 = np.asarray(speed_squared, dtype=np.float64)
    if dimension == 2:
        shape = 2.0 * s - 1.0 + (1.0 - s) * v2 / (2.0 * s)
        return np.exp(-v2 / (2.0 * s)) / (2.0 * math.pi * s**2) * shape
    shape = (5.0 * s - 3.0) / s + (1.0 - s) * v2 / s**2
    return np.exp(-v2 / (2.0 * s)) / (2.0 * (2.0 * math.pi * s) ** 1.5) * shape


def bkw_field(grid: GridSpec, t: float) -> Field:
    return Field(grid, density(grid.speed_squared(), t, grid.dimension), nonneg=True)


def fourth_moment(t: float, dimension: int) -> float:
    """Closed-form integral of f |v|^4."""
    s = similarity_parameter(t, dimension)
    if dimension == 2:
        return 16.0 * s - 8.0 * s**2
    return 30.0 * s - 15.0 * s**2


def fourth_moment_ode(times, dimension: int) -> np.ndarray:
    """Fourth moment from its relaxation ODE, started at the closed-form initial value."""
    times = np.asarray(times, dtype=np.float64)
    t0 = float(times[0])
    if dimension == 2:
        equilibrium, rate = 8.0, 0.25
    elif dimension == 3:
        equilibrium, rate = 15.0, 1.0 / 3.0
    else:
        raise BkwError(f"No similarity solution for dimension {dimension}")
    solution = integrate.solve_ivp(
        lambda _, m: -rate * (m - equilibrium),
        (t0, float(times[-1])),
        [fourth_moment(t0, dimension)],
        t_eval=times,
        rtol=1e-12,
        atol=1e-12,
        method="DOP853",
    )
    if not solution.success:
        raise BkwError(f"Fourth-moment ODE failed: {solution.message}")
    return solution.y[0]


@dataclass(frozen=True)
class BkwRow:
    t: float
    parameter: float
    fourth_moment: float
    fourth_moment_ode: float
    values: tuple[float, ...]


def bkw_table(times, dimension: int, radii) -> list[BkwRow]:
    times = np.asarray(sorted(float(t) for t in times))
    radii = np.asarray(radii, dtype=np.float64)
    ode = fourth_moment_ode(times, dimension) if times.size > 1 else [fourth_moment(times[0], dimension)]
    rows = []
    for t, m4_ode in zip(times, ode):
        rows.append(
            BkwRow(
                t=float(t),
                parameter=similarity_parameter(t, dimension),
                fourth_moment=fourth_moment(t, dimension),
                fourth_moment_ode=float(m4_ode),
                values=tuple(float(v) for v in density(radii**2, t, dimension)),
            )
        )
    logger.debug("BKW table built", extra={"rows": len(rows), "dimension": dimension})
    return rows
