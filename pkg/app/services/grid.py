import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)


class GridError(ValueError):
    """Raised when a grid or field is malformed."""


@dataclass(frozen=True)
class GridSpec:
    """Truncated uniform velocity grid on [-R, R - dv]^N."""

    dimension: int
    points: int
    half_width: float
    spacing: float = field(init=False)
    nodes: np.ndarray = field(init=False, repr=False, compare=False)
    lattice: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        spacing = 2.0 * self.half_width / self.points
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(
            self, "nodes", -self.half_width + spacing * np.arange(self.points)
        )
        object.__setattr__(
            self, "lattice", np.fft.fftfreq(self.points, d=1.0 / self.points)
        )

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points,) * self.dimension

    @property
    def size(self) -> int:
        return self.points**self.dimension

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dimension

    def coordinates(self) -> np.ndarray:
        """Node coordinates with shape (N, M, ..., M), axis order = array order."""
        mesh = np.meshgrid(*([self.nodes] * self.dimension), indexing="ij")
        return np.stack(mesh)

    def speed_squared(self) -> np.ndarray:
        return np.sum(self.coordinates() ** 2, axis=0)

    def bracket(self) -> np.ndarray:
        """Japanese bracket <v> = sqrt(1 + |v|^2) at every node."""
        return np.sqrt(1.0 + self.speed_squared())

    def wavenumbers(self) -> np.ndarray:
        """Physical wavenumbers xi = pi * k / R, shape (N, M, ..., M), FFT order."""
        mesh = np.meshgrid(*([self.lattice] * self.dimension), indexing="ij")
        return np.pi * np.stack(mesh) / self.half_width

    def same_as(self, other: "GridSpec") -> bool:
        return (
            self.dimension == other.dimension
            and self.points == other.points
            and self.half_width == other.half_width
        )


@dataclass(frozen=True, eq=False)
class Field:
    """Real samples of a distribution on a GridSpec."""

    grid: GridSpec
    values: np.ndarray
    nonneg: bool = False

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != self.grid.shape:
            values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise GridError("Field values must be finite")
        if self.nonneg and values.min(initial=0.0) < 0:
            raise GridError(
                f"Field flagged nonnegative has minimum {values.min():.3e}"
            )
        object.__setattr__(self, "values", values)

    def like(self, values: np.ndarray, nonneg: bool = False) -> "Field":
        return Field(self.grid, values, nonneg=nonneg)

    def scaled(self, factor: float) -> "Field":
        return Field(self.grid, factor * self.values, nonneg=self.nonneg and factor >= 0)

    def shifted(self, cells: tuple[int, ...]) -> "Field":
        """Integer-cell translation tau_h f(v) = f(v - h) with zero fill."""
        if len(cells) != self.grid.dimension:
            raise GridError("Shift must have one entry per axis")
        out = np.zeros_like(self.values)
        src = []
        dst = []
        for step in cells:
            n = self.grid.points
            if abs(step) >= n:
                return self.like(out, nonneg=self.nonneg)
            if step >= 0:
                src.append(slice(0, n - step))
                dst.append(slice(step, n))
            else:
                src.append(slice(-step, n))
                dst.append(slice(0, n + step))
        out[tuple(dst)] = self.values[tuple(src)]
        return self.like(out, nonneg=self.nonneg)


def make_grid(dimension: int, points: int, half_width: float) -> GridSpec:
    if dimension not in (2, 3):
        raise GridError(f"Dimension must be 2 or 3, got {dimension}")
    if points < 8 or points & (points - 1):
        raise GridError(f"Points per axis must be a power of two >= 8, got {points}")
    if not half_width > 0:
        raise GridError(f"Half-width must be positive, got {half_width}")
    return GridSpec(dimension=dimension, points=points, half_width=float(half_width))


def check_same_grid(*fields: Field) -> GridSpec:
    grid = fields[0].grid
    for other in fields[1:]:
        if not grid.same_as(other.grid):
            raise GridError("Fields live on different grids")
    return grid


def stencil(
    grid: GridSpec, points: np.ndarray
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Multilinear stencil of arbitrary points (shape (..., N)).

    Returns the 2^N (flat index, weight) corners and a validity mask; points outside
    [-R, R - dv]^N get mask False and must contribute zero.
    """
    points = np.asarray(points, dtype=np.float64)
    n = grid.points
    scaled = (points + grid.half_width) / grid.spacing
    base = np.floor(scaled)
    frac = scaled - base
    base = base.astype(np.int64)
    valid = np.ones(points.shape[:-1], dtype=bool)
    for axis in range(grid.dimension):
        k = base[..., axis]
        valid &= (k >= 0) & ((k < n - 1) | ((k == n - 1) & (frac[..., axis] == 0.0)))

    corners = []
    for corner in range(2**grid.dimension):
        flat = np.zeros(points.shape[:-1], dtype=np.int64)
        weight = np.ones(points.shape[:-1])
        for axis in range(grid.dimension):
            bit = (corner >> (grid.dimension - 1 - axis)) & 1
            idx = np.clip(base[..., axis] + bit, 0, n - 1)
            flat = flat * n + idx
            alpha = frac[..., axis]
            weight = weight * (alpha if bit else 1.0 - alpha)
        corners.append((flat, weight))
    return corners, valid


def interpolate_many(f: Field, points: np.ndarray) -> np.ndarray:
    corners, valid = stencil(f.grid, points)
    flat_values = f.values.ravel()
    out = np.zeros(valid.shape)
    for flat, weight in corners:
        out += weight * flat_values[flat]
    return np.where(valid, out, 0.0)


def interpolate(f: Field, point) -> float:
    point = np.asarray(point, dtype=np.float64)
    if point.shape != (f.grid.dimension,):
        raise GridError("Point dimension does not match the grid")
    return float(interpolate_many(f, point[None, :])[0])


def dft(f: Field) -> np.ndarray:
    """Unitary transform: sum |f|^2 dv^N == sum |f_hat|^2."""
    grid = f.grid
    scale = np.sqrt(grid.cell_volume / grid.size)
    return np.fft.fftn(f.values) * scale


def idft(spectrum: np.ndarray, grid: GridSpec) -> np.ndarray:
    scale = np.sqrt(grid.cell_volume / grid.size)
    return np.fft.ifftn(spectrum / scale)


def write_snapshot(f: Field, path: Path, time: float = 0.0) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    grid = f.grid
    header = "\n".join(
        [
            f"N {grid.dimension}",
            f"M {grid.points}",
            f"R {grid.half_width!r}",
            f"time {float(time)!r}",
        ]
    )
    np.savetxt(path, f.values.ravel(), fmt="%.17g", header=header, comments="# ")
    logger.debug("Snapshot written", extra={"path": str(path), "time": time})
    return path


def read_snapshot(path: Path) -> tuple[Field, float]:
    path = Path(path)
    meta: dict[str, str] = {}
    with path.open(encoding="utf-8") as handle:
        for line in handle:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition(" ")
            meta[key] = value.strip()
    try:
        grid = make_grid(int(meta["N"]), int(meta["M"]), float(meta["R"]))
        time = float(meta["time"])
    except KeyError as exc:
        raise GridError(f"Snapshot {path} is missing header entry {exc}") from exc
    values = np.loadtxt(path, comments="#", dtype=np.float64)
    if values.size != grid.size:
        raise GridError(
            f"Snapshot {path} holds {values.size} values, expected {grid.size}"
        )
    return Field(grid, values.reshape(grid.shape)), time
