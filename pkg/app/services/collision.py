"""Gain and loss operators by direct quadrature.

The gain term is evaluated in the relative velocity u = v - v_*: for a fixed pair
(u, sigma) the post-collisional velocities are constant offsets of v, so one shifted
multilinear interpolation serves the whole slab of output nodes. Offsets are cut into
fixed work units of block_size; partial sums are added in unit order no matter how
many threads run, which keeps results bit-identical across thread counts.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import signal

from app.services.grid import Field, GridError, GridSpec, check_same_grid, interpolate_many
from app.services.kernel import CollisionKernel, MollifiedSplit, angular_mass

logger = logging.getLogger(__name__)


class CollisionError(ValueError):
    """Raised when a collision operator cannot be evaluated."""


@dataclass(frozen=True, eq=False)
class SigmaQuadrature:
    """Nodes on S^{N-1} expressed relative to the reference axis e1."""

    dimension: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def cosines(self) -> np.ndarray:
        return self.nodes[:, 0]

    def __len__(self) -> int:
        return self.weights.size


@dataclass(frozen=True)
class OperatorOptions:
    quadrature: SigmaQuadrature
    guard: float = 1e-15
    loss_mode: Literal["direct", "fft"] = "fft"
    threads: int = 1
    block_size: int = 256

    def __post_init__(self) -> None:
        if self.guard < 0:
            raise CollisionError("Support guard threshold must be nonnegative")
        if self.threads < 1 or self.block_size < 1:
            raise CollisionError("threads and block_size must be positive")


def sigma_quadrature(dimension: int, count: int = 32) -> SigmaQuadrature:
    """Uniform angles (N=2) or Gauss-Legendre in cos(theta) x uniform azimuth (N=3)."""
    if count < 2:
        raise CollisionError("Angular quadrature needs at least two nodes")
    if dimension == 2:
        angles = 2.0 * math.pi * np.arange(count) / count
        nodes = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        weights = np.full(count, 2.0 * math.pi / count)
    elif dimension == 3:
        x, wx = np.polynomial.legendre.leggauss(count)
        phi = 2.0 * math.pi * np.arange(count) / count
        sin_t = np.sqrt(1.0 - x**2)
        nodes = np.stack(
            [
                np.repeat(x, count),
                np.outer(sin_t, np.cos(phi)).ravel(),
                np.outer(sin_t, np.sin(phi)).ravel(),
            ],
            axis=1,
        )
        weights = np.outer(wx, np.full(count, 2.0 * math.pi / count)).ravel()
    else:
        raise CollisionError(f"Unsupported dimension {dimension}")
    return SigmaQuadrature(dimension=dimension, nodes=nodes, weights=weights)


def default_options(dimension: int, count: int | None = None, **kwargs) -> OperatorOptions:
    if count is None:
        count = 32 if dimension == 2 else 16
    return OperatorOptions(quadrature=sigma_quadrature(dimension, count), **kwargs)


def post_collision(v, v_star, sigma) -> tuple[np.ndarray, np.ndarray]:
    v = np.asarray(v, dtype=np.float64)
    v_star = np.asarray(v_star, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if abs(np.linalg.norm(sigma) - 1.0) > 1e-12:
        raise CollisionError("sigma must be a unit vector")
    center = 0.5 * (v + v_star)
    half = 0.5 * np.linalg.norm(v - v_star)
    return center + half * sigma, center - half * sigma


def _frame(directions: np.ndarray) -> np.ndarray:
    """Orthonormal frames (U, N, N) whose first column is the given unit vector."""
    count, dim = directions.shape
    frames = np.empty((count, dim, dim))
    frames[:, :, 0] = directions
    if dim == 2:
        frames[:, 0, 1] = -directions[:, 1]
        frames[:, 1, 1] = directions[:, 0]
        return frames
    helper = np.zeros_like(directions)
    use_x = np.abs(directions[:, 2]) > 0.9
    helper[use_x, 0] = 1.0
    helper[~use_x, 2] = 1.0
    second = np.cross(helper, directions)
    second /= np.linalg.norm(second, axis=1, keepdims=True)
    third = np.cross(directions, second)
    frames[:, :, 1] = second
    frames[:, :, 2] = third
    return frames


def rotate_nodes(quadrature: SigmaQuadrature, directions: np.ndarray) -> np.ndarray:
    """sigma_j rotated so that e1 maps onto each direction: shape (U, J, N)."""
    frames = _frame(directions)
    return np.einsum("uab,jb->uja", frames, quadrature.nodes)


def _unit(vectors: np.ndarray, norms: np.ndarray) -> np.ndarray:
    out = np.zeros_like(vectors)
    out[:, 0] = 1.0
    nonzero = norms > 0
    out[nonzero] = vectors[nonzero] / norms[nonzero, None]
    return out


def _support_box(values: np.ndarray, grid: GridSpec) -> tuple[np.ndarray, np.ndarray] | None:
    nonzero = np.argwhere(values != 0.0)
    if nonzero.size == 0:
        return None
    lo = grid.nodes[nonzero.min(axis=0)]
    hi = grid.nodes[nonzero.max(axis=0)]
    return lo - grid.spacing, hi + grid.spacing


def _max_separation(box_f, box_g) -> float:
    lo_f, hi_f = box_f
    lo_g, hi_g = box_g
    reach = np.maximum(np.abs(hi_f - lo_g), np.abs(hi_g - lo_f))
    return float(np.linalg.norm(reach))


def _offsets(points: int, dimension: int) -> np.ndarray:
    """Integer relative-velocity vectors in row-major order, shape (K, N)."""
    span = np.arange(-(points - 1), points)
    mesh = np.meshgrid(*([span] * dimension), indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, dimension)


def _antipodes(quadrature: SigmaQuadrature) -> tuple[np.ndarray, np.ndarray] | None:
    """Index pairs (j, k) with sigma_k = -sigma_j, or None if the node set is not symmetric."""
    nodes = quadrature.nodes
    gaps = np.linalg.norm(nodes[:, None, :] + nodes[None, :, :], axis=2)
    partner = np.argmin(gaps, axis=1)
    if np.max(gaps[np.arange(len(nodes)), partner]) > 1e-12:
        return None
    keep = np.flatnonzero(partner > np.arange(len(nodes)))
    if keep.size * 2 != len(nodes):
        return None
    return keep, partner[keep]


def _shift(values: np.ndarray, rows: list[np.ndarray], scaled: np.ndarray, points: int) -> np.ndarray:
    """values(i + scaled_j) for i on the slab ``rows``, one multilinear pass per axis.

    Points outside the node hull read zero. Result shape (J, len(rows[0]), ...).
    """
    base = np.floor(scaled)
    frac = scaled - base
    base = base.astype(np.int64)
    count, dim = scaled.shape
    out = values[None]
    for axis in range(dim):
        idx = rows[axis][None, :] + base[:, axis, None]
        t = frac[:, axis, None]
        valid = (idx >= 0) & ((idx <= points - 2) | ((idx == points - 1) & (t == 0.0)))
        shape = [count] + [1] * dim
        shape[axis + 1] = idx.shape[1]
        lower = np.take_along_axis(out, np.clip(idx, 0, points - 1).reshape(shape), axis=axis + 1)
        upper = np.take_along_axis(out, np.clip(idx + 1, 0, points - 1).reshape(shape), axis=axis + 1)
        out = ((1.0 - t) * valid).reshape(shape) * lower + (t * valid).reshape(shape) * upper
    return out


def _prepare(values: np.ndarray, guard: float) -> np.ndarray:
    return np.where(np.abs(values) < guard, 0.0, values)


def q_plus(g: Field, f: Field, kernel: CollisionKernel, opts: OperatorOptions) -> Field:
    """dv^N sum over v_* nodes and sigma nodes of B g(v'_*) f(v').

    For an integer offset u = v - v_* and a node sigma_j the post-collisional
    velocities are fixed displacements of v, so each (u, sigma_j) pair is one
    shifted interpolation of g and f over the slab of v with v_* inside the box.
    When g and f coincide the antipodal nodes sigma and -sigma are merged.
    """
    try:
        grid = check_same_grid(g, f)
    except GridError as exc:
        raise CollisionError(str(exc)) from exc
    if kernel.dimension != grid.dimension or opts.quadrature.dimension != grid.dimension:
        raise CollisionError("Kernel, quadrature and grid dimensions differ")

    g_values = _prepare(g.values, opts.guard)
    f_values = _prepare(f.values, opts.guard)
    box_g = _support_box(g_values, grid)
    box_f = _support_box(f_values, grid)
    nonneg = bool(g_values.min() >= 0 and f_values.min() >= 0)
    if box_g is None or box_f is None:
        return Field(grid, np.zeros(grid.shape), nonneg=True)
    reach = _max_separation(box_f, box_g) + 1e-12

    quad = opts.quadrature
    nodes = np.arange(len(quad))
    b_weights = kernel.b(quad.cosines) * quad.weights
    pairs = _antipodes(quad) if np.array_equal(g_values, f_values) else None
    if pairs is not None:
        nodes, partners = pairs
        b_weights = b_weights[nodes] + b_weights[partners]

    offsets = _offsets(grid.points, grid.dimension)
    speed = np.linalg.norm(offsets, axis=1) * grid.spacing
    phi = kernel.phi(speed)
    keep = (speed <= reach) & (phi != 0.0)
    if not np.any(b_weights):
        keep[:] = False
    offsets, speed, phi = offsets[keep], speed[keep], phi[keep]
    n = grid.points
    units = [slice(start, start + opts.block_size) for start in range(0, len(offsets), opts.block_size)]
    logger.debug(
        "Gain quadrature",
        extra={"offsets": len(offsets), "units": len(units), "sigma_nodes": len(nodes), "folded": pairs is not None},
    )

    def reduce_unit(unit: slice) -> np.ndarray:
        acc = np.zeros(grid.shape)
        cells = offsets[unit]
        sigma = rotate_nodes(quad, _unit(cells * grid.spacing, speed[unit]))[:, nodes]
        for k, (u_cells, radius, kinetic) in enumerate(zip(cells, speed[unit], phi[unit])):
            rows = [np.arange(max(0, c), min(n, n + c)) for c in u_cells]
            half = (0.5 * radius / grid.spacing) * sigma[k]
            to_f = -0.5 * u_cells[None, :] + half
            to_g = -0.5 * u_cells[None, :] - half
            product = _shift(f_values, rows, to_f, n) * _shift(g_values, rows, to_g, n)
            slab = tuple(slice(r[0], r[-1] + 1) for r in rows)
            acc[slab] += np.tensordot(kinetic * b_weights, product, axes=(0, 0))
        return acc

    out = np.zeros(grid.shape)
    if opts.threads > 1 and len(units) > 1:
        with ThreadPoolExecutor(max_workers=opts.threads) as pool:
            for partial in pool.map(reduce_unit, units):
                out += partial
    else:
        for unit in units:
            out += reduce_unit(unit)
    out *= grid.cell_volume
    # remainder kernel pieces can be negative
    nonneg = nonneg and bool(out.min() >= 0)
    return Field(grid, out, nonneg=nonneg)


def loss_table(grid: GridSpec, kernel: CollisionKernel) -> np.ndarray:
    """A(z) = ||b||_{L1} Phi(|z|) on the (2M - 1)^N relative offsets."""
    span = grid.spacing * np.arange(-(grid.points - 1), grid.points)
    mesh = np.meshgrid(*([span] * grid.dimension), indexing="ij")
    radius = np.sqrt(sum(axis**2 for axis in mesh))
    return angular_mass(kernel) * kernel.phi(radius)


def loss_rate(
    f: Field, kernel: CollisionKernel, mode: Literal["direct", "fft"] = "fft"
) -> Field:
    grid = f.grid
    table = loss_table(grid, kernel)
    if mode == "fft":
        full = signal.fftconvolve(f.values, table, mode="full")
    elif mode == "direct":
        full = signal.convolve(f.values, table, mode="full", method="direct")
    else:
        raise CollisionError(f"Unknown loss convolution mode {mode!r}")
    window = tuple(slice(grid.points - 1, 2 * grid.points - 1) for _ in range(grid.dimension))
    values = full[window] * grid.cell_volume
    return Field(grid, values)


def q_minus(g: Field, f: Field, kernel: CollisionKernel, opts: OperatorOptions) -> Field:
    try:
        grid = check_same_grid(g, f)
    except GridError as exc:
        raise CollisionError(str(exc)) from exc
    rate = loss_rate(g, kernel, opts.loss_mode)
    return Field(grid, f.values * rate.values)


def q_full(f: Field, kernel: CollisionKernel, opts: OperatorOptions) -> Field:
    gain = q_plus(f, f, kernel, opts)
    loss = q_minus(f, f, kernel, opts)
    return f.like(gain.values - loss.values)


def invariant_defects(f: Field, kernel: CollisionKernel, opts: OperatorOptions) -> dict[str, float]:
    """|sum Q(f, f) phi| / sum |Q+(f, f) phi| for phi in {1, v_1 .. v_N, |v|^2}.

    Momentum reports the worst axis. Zero gain gives zero defects.
    """
    gain = q_plus(f, f, kernel, opts).values
    full = gain - f.values * loss_rate(f, kernel, opts.loss_mode).values
    coords = f.grid.coordinates()

    def defect(weight: np.ndarray) -> float:
        scale = float(np.sum(np.abs(gain * weight)))
        return abs(float(np.sum(full * weight))) / scale if scale > 0 else 0.0

    return {
        "mass": defect(np.ones(f.grid.shape)),
        "momentum": max(defect(axis) for axis in coords),
        "energy": defect(f.grid.speed_squared()),
    }


def iterated_gain(
    g: Field, f: Field, h: Field, kernel: CollisionKernel, opts: OperatorOptions
) -> Field:
    return q_plus(q_plus(g, f, kernel, opts), h, kernel, opts)


def split_q_plus(
    g: Field, f: Field, split: MollifiedSplit, opts: OperatorOptions
) -> dict[str, Field]:
    """Q+_S, Q+_RS, Q+_SR, Q+_RR keyed by (kinetic, angular) piece."""
    pieces = {}
    for kinetic in ("S", "R"):
        for angular in ("S", "R"):
            name = "S" if (kinetic, angular) == ("S", "S") else kinetic + angular
            pieces[name] = q_plus(g, f, split.piece(kinetic, angular), opts)
    return pieces


def kernel_lower_bound(kernel: CollisionKernel, speeds, quadrature: SigmaQuadrature) -> np.ndarray:
    """sigma-integral of B at the given relative speeds."""
    speeds = np.asarray(speeds, dtype=np.float64)
    angular = np.sum(kernel.b(quadrature.cosines) * quadrature.weights)
    return kernel.phi(speeds) * angular


CARLEMAN_NORMALIZATION = 2.0


def carleman_q_plus(
    g: Field,
    f: Field,
    kernel: CollisionKernel,
    opts: OperatorOptions | None = None,
    chunk: int = 64,
) -> Field:
    """Q+ through the (v', v'_*) parametrization; two-dimensional cross-check only.

    With v' = v + rho e and v'_* = v + l e_perp the sigma integral becomes
    2 int de int drho int dl B(sqrt(rho^2 + l^2), (l^2 - rho^2) / (rho^2 + l^2))
    f(v') g(v'_*); the polar measure cancels the 1/|v - v'| weight of the
    Carleman form. Directions e come from the (uniform) sigma quadrature, rho and
    l are stepped by dv.
    """
    try:
        grid = check_same_grid(g, f)
    except GridError as exc:
        raise CollisionError(str(exc)) from exc
    if grid.dimension != 2:
        raise CollisionError("The Carleman oracle is only available for N = 2")
    opts = opts or default_options(2)
    directions = opts.quadrature.nodes
    d_alpha = opts.quadrature.weights

    reach = int(math.ceil(2.0 * math.sqrt(2.0) * grid.half_width / grid.spacing))
    rho = grid.spacing * np.arange(reach + 1)
    ell = grid.spacing * np.arange(-reach, reach + 1)
    rho_weights = np.full(rho.size, grid.spacing)
    rho_weights[0] *= 0.5
    r2 = rho[:, None] ** 2 + ell[None, :] ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(r2 > 0, (ell[None, :] ** 2 - rho[:, None] ** 2) / r2, 1.0)
    table = kernel(np.sqrt(r2), np.clip(cos, -1.0, 1.0))
    table *= CARLEMAN_NORMALIZATION * rho_weights[:, None] * grid.spacing

    coords = grid.coordinates().reshape(2, -1).T
    normals = np.stack([-directions[:, 1], directions[:, 0]], axis=1)

    def at_nodes(block: slice) -> np.ndarray:
        v = coords[block]
        f_ray = v[:, None, None, :] + rho[None, None, :, None] * directions[None, :, None, :]
        g_line = v[:, None, None, :] + ell[None, None, :, None] * normals[None, :, None, :]
        f_vals = interpolate_many(f, f_ray.reshape(-1, 2)).reshape(f_ray.shape[:3])
        g_vals = interpolate_many(g, g_line.reshape(-1, 2)).reshape(g_line.shape[:3])
        inner = np.sum((f_vals @ table) * g_vals, axis=2)
        return inner @ d_alpha

    blocks = [slice(start, start + chunk) for start in range(0, grid.size, chunk)]
    if opts.threads > 1:
        with ThreadPoolExecutor(max_workers=opts.threads) as pool:
            values = np.concatenate(list(pool.map(at_nodes, blocks)))
    else:
        values = np.concatenate([at_nodes(block) for block in blocks])
    return Field(grid, values.reshape(grid.shape))


def jacobian_identity_check(
    kernel: CollisionKernel, psi, grid: GridSpec, quadrature: SigmaQuadrature
) -> tuple[float, float]:
    """Both sides of the v -> v+ = (v + |v| sigma) / 2 change of variables.

    For a node sigma_j at angle theta_j from v the map scales |v| by cos(theta_j / 2),
    so lhs = sum_v sum_j b(cos theta_j) w_j psi(v+) and rhs = sum_u psi(u)
    sum_j b(cos theta_j) w_j cos(theta_j / 2)^{-N}, over nodes with cos theta_j > -1.
    """
    coords = grid.coordinates().reshape(grid.dimension, -1).T
    speed = np.linalg.norm(coords, axis=1)
    c = quadrature.cosines
    front = c > -1.0 + 1e-12
    b_theta = kernel.b(c[front]) * quadrature.weights[front]
    sigma = rotate_nodes(quadrature, _unit(coords, speed))[:, front]
    v_plus = 0.5 * (coords[:, None, :] + speed[:, None, None] * sigma)
    lhs = float(np.sum(psi(v_plus) * b_theta[None, :])) * grid.cell_volume

    jac = (0.5 * (1.0 + c[front])) ** (-0.5 * grid.dimension)
    rhs = float(np.sum(psi(coords)) * np.sum(b_theta * jac)) * grid.cell_volume
    return lhs, rhs


def galilean_defect(
    f: Field, kernel: CollisionKernel, opts: OperatorOptions, cells: tuple[int, ...]
) -> float:
    """max |shift(Q(f)) - Q(shift(f))| / max |Q(f)| over nodes fed from inside the box."""
    base = q_full(f, kernel, opts)
    moved = q_full(f.shifted(cells), kernel, opts)
    expected = base.shifted(cells)
    mask = np.ones(f.grid.shape, dtype=bool)
    for axis, step in enumerate(cells):
        sl = [slice(None)] * f.grid.dimension
        if step > 0:
            sl[axis] = slice(0, step)
        elif step < 0:
            sl[axis] = slice(f.grid.points + step, f.grid.points)
        else:
            continue
        mask[tuple(sl)] = False
    scale = np.abs(base.values).max() or 1.0
    return float(np.abs(moved.values - expected.values)[mask].max() / scale)


@dataclass(frozen=True)
class BoltzmannModel:
    """Gain and loss evaluation handed to the solver."""

    kernel: CollisionKernel
    opts: OperatorOptions = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.opts is None:
            object.__setattr__(self, "opts", default_options(self.kernel.dimension))

    def gain(self, f: Field) -> Field:
        return q_plus(f, f, self.kernel, self.opts)

    def loss(self, f: Field) -> Field:
        return loss_rate(f, self.kernel, self.opts.loss_mode)

    def full(self, f: Field) -> Field:
        return f.like(self.gain(f).values - f.values * self.loss(f).values)


