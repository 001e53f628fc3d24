import logging
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import signal, special, stats

from app.schemas import DiagnosticsRow
from app.services.grid import Field, GridSpec, dft

logger = logging.getLogger(__name__)

ENTROPY_CLIP = 1e-12
YOUNG_WEIGHT = 4.0 / 3.0


class AnalysisError(ValueError):
    """Raised when a diagnostic cannot be computed for the given field."""


@dataclass(frozen=True)
class NormSpec:
    kind: Literal["lebesgue", "sobolev"]
    p: float = 2.0
    s: float = 0.0
    weight: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("lebesgue", "sobolev"):
            raise AnalysisError(f"Unknown norm kind {self.kind!r}")
        if self.p < 1:
            raise AnalysisError(f"Lebesgue exponent must be >= 1, got {self.p}")
        if self.s < 0:
            raise AnalysisError(f"Sobolev order must be >= 0, got {self.s}")

    def __call__(self, f: Field) -> float:
        if self.kind == "lebesgue":
            return lp_norm(f, self.p, self.weight)
        return sobolev_norm(f, self.s, self.weight)


@dataclass(frozen=True)
class Moments:
    mass: float
    momentum: tuple[float, ...]
    energy: float
    temperature: float

    @property
    def mean_velocity(self) -> np.ndarray:
        return np.asarray(self.momentum) / self.mass


@dataclass(frozen=True)
class InequalityCheck:
    lhs: float
    rhs: float
    passed: bool

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else math.inf


@dataclass(frozen=True)
class EdgeJump:
    amplitude: float
    edge_point: np.ndarray
    inside: float
    outside: float


def _scaled_norm(weighted: np.ndarray, p: float, cell_volume: float) -> float:
    """(sum w^p dv)^(1/p) factored through max |w| so large p neither overflows nor underflows."""
    peak = float(np.max(weighted)) if weighted.size else 0.0
    if peak == 0.0 or math.isinf(p):
        return peak
    return peak * float((np.sum((weighted / peak) ** p) * cell_volume) ** (1.0 / p))


def lp_norm(f: Field, p: float = 2.0, k: float = 0.0) -> float:
    if p < 1:
        raise AnalysisError(f"Lebesgue exponent must be >= 1, got {p}")
    weighted = np.abs(f.values)
    if k:
        weighted = weighted * f.grid.bracket() ** k
    return _scaled_norm(weighted, p, f.grid.cell_volume)


def sobolev_norm(f: Field, s: float = 1.0, eta: float = 0.0) -> float:
    """Periodized H^s norm of f <v>^eta, computed on the unitary DFT."""
    if s < 0:
        raise AnalysisError(f"Sobolev order must be >= 0, got {s}")
    values = f.values * f.grid.bracket() ** eta if eta else f.values
    spectrum = dft(f.like(values))
    xi_squared = np.sum(f.grid.wavenumbers() ** 2, axis=0)
    return float(np.sqrt(np.sum((1.0 + xi_squared) ** s * np.abs(spectrum) ** 2)))


def entropy(f: Field) -> float:
    values = f.values
    lowest = float(values.min())
    if lowest < -ENTROPY_CLIP:
        raise AnalysisError(f"Entropy of a field with minimum {lowest:.3e} is undefined")
    if lowest < 0:
        logger.warning("Clipping tiny negative values before entropy", extra={"min": lowest})
        values = np.maximum(values, 0.0)
    return float(np.sum(special.xlogy(values, values)) * f.grid.cell_volume)


def moments(f: Field) -> Moments:
    grid = f.grid
    coords = grid.coordinates()
    weight = grid.cell_volume
    mass = float(np.sum(f.values) * weight)
    momentum = tuple(float(np.sum(f.values * c) * weight) for c in coords)
    energy = float(np.sum(f.values * grid.speed_squared()) * weight)
    if mass > 0:
        mean_sq = sum(m**2 for m in momentum) / mass**2
        temperature = (energy / mass - mean_sq) / grid.dimension
    else:
        temperature = math.nan
    return Moments(mass=mass, momentum=momentum, energy=energy, temperature=temperature)


def gaussian(grid: GridSpec, mass: float, mean, temperature: float) -> np.ndarray:
    mean = np.asarray(mean, dtype=np.float64).reshape((grid.dimension,) + (1,) * grid.dimension)
    dist = np.sum((grid.coordinates() - mean) ** 2, axis=0)
    norm = (2.0 * math.pi * temperature) ** (-grid.dimension / 2)
    return mass * norm * np.exp(-dist / (2.0 * temperature))


def maxwellian_for(f: Field) -> Field:
    """Sampled Maxwellian with the discrete mass, mean velocity and temperature of f.

    One correction pass moves the parameters by the defect between target and sampled
    moments; the mass is then matched exactly by rescaling.
    """
    target = moments(f)
    if not target.mass > 0:
        raise AnalysisError("Maxwellian needs positive mass")
    if not target.temperature > 0:
        raise AnalysisError(f"Maxwellian needs positive temperature, got {target.temperature}")

    mean = target.mean_velocity
    temperature = target.temperature
    sampled = moments(f.like(gaussian(f.grid, target.mass, mean, temperature)))
    if sampled.mass > 0 and sampled.temperature > 0:
        mean = mean + (target.mean_velocity - sampled.mean_velocity)
        temperature = temperature * target.temperature / sampled.temperature
    values = gaussian(f.grid, target.mass, mean, temperature)
    discrete_mass = np.sum(values) * f.grid.cell_volume
    return f.like(values * (target.mass / discrete_mass), nonneg=True)


def lower_bound_margin(f: Field, k0: float, a0: float, q0: float = 2.0) -> float:
    """min over |v| <= R/2 of f(v) - k0 exp(-a0 |v|^q0)."""
    if k0 <= 0 or a0 <= 0 or q0 < 2:
        raise AnalysisError("Lower bound needs k0, a0 > 0 and q0 >= 2")
    speed = np.sqrt(f.grid.speed_squared())
    trusted = speed <= 0.5 * f.grid.half_width
    bound = k0 * np.exp(-a0 * speed**q0)
    return float(np.min((f.values - bound)[trusted]))


def fit_lower_bound(f: Field, q0: float = 2.0) -> tuple[float, float]:
    """Fit (k0, a0) on the even-parity nodes of the trusted region.

    The odd-parity nodes are left for lower_bound_margin to check.
    """
    grid = f.grid
    speed = np.sqrt(grid.speed_squared())
    parity = np.sum(np.indices(grid.shape), axis=0) % 2 == 0
    fit_set = (speed <= 0.5 * grid.half_width) & parity & (f.values > 0)
    if fit_set.sum() < 3:
        raise AnalysisError("Too few positive nodes to fit a lower bound")
    x = speed[fit_set] ** q0
    y = np.log(f.values[fit_set])
    fit = stats.linregress(x, y)
    a0 = max(-fit.slope, 1e-3) * 1.25
    k0 = 0.5 * float(np.min(f.values[fit_set] * np.exp(a0 * x)))
    return k0, a0


def shell_spectrum(f: Field) -> tuple[np.ndarray, np.ndarray]:
    """Shell-averaged |f_hat| against the integer shell radius (bins of width one)."""
    grid = f.grid
    amplitude = np.abs(dft(f)).ravel()
    mesh = np.meshgrid(*([grid.lattice] * grid.dimension), indexing="ij")
    radius = np.sqrt(sum(axis**2 for axis in mesh)).ravel()
    shell = np.rint(radius).astype(np.int64)
    counts = np.bincount(shell)
    sums = np.bincount(shell, weights=amplitude)
    populated = counts > 0
    shells = np.flatnonzero(populated)
    return shells, sums[populated] / counts[populated]


def fourier_decay_exponent(f: Field, band: tuple[float, float] | None = None) -> float:
    """Slope of log shell-averaged |f_hat| against log <xi>; band in lattice wavenumbers."""
    grid = f.grid
    if band is None:
        band = (grid.points / 8, grid.points / 4)
    lo, hi = band
    shells, spectrum = shell_spectrum(f)
    chosen = (shells >= lo) & (shells <= hi) & (shells <= grid.points // 2) & (spectrum > 0)
    if chosen.sum() < 2:
        raise AnalysisError(f"Fit band {band} holds fewer than two resolved shells")
    xi = math.pi * shells[chosen] / grid.half_width
    fit = stats.linregress(np.log(np.sqrt(1.0 + xi**2)), np.log(spectrum[chosen]))
    return float(-fit.slope)


def weighted_young_check(
    f: Field, g: Field, p: float, q: float, r: float, eta: float
) -> InequalityCheck:
    """||f * g||_{L^r_eta} <= C ||f||_{L^p_|eta|} ||g||_{L^q_eta} with the full convolution.

    C = (4/3)^{|eta|/2} is the sharp constant of <a + b> <= C <a> <b>; it is 1 for eta = 0.
    """
    if min(p, q, r) < 1:
        raise AnalysisError("Young exponents must be >= 1")
    if abs(1.0 / r + 1.0 - 1.0 / p - 1.0 / q) > 1e-12:
        raise AnalysisError(f"Exponents violate 1/r + 1 = 1/p + 1/q: p={p}, q={q}, r={r}")
    grid = f.grid
    conv = signal.fftconvolve(f.values, g.values, mode="full") * grid.cell_volume
    nodes = -2.0 * grid.half_width + grid.spacing * np.arange(2 * grid.points - 1)
    mesh = np.meshgrid(*([nodes] * grid.dimension), indexing="ij")
    bracket = np.sqrt(1.0 + sum(axis**2 for axis in mesh))
    lhs = _scaled_norm(np.abs(conv) * bracket**eta, r, grid.cell_volume)
    rhs = YOUNG_WEIGHT ** abs(0.5 * eta) * lp_norm(f, p, abs(eta)) * lp_norm(g, q, eta)
    return InequalityCheck(lhs=lhs, rhs=rhs, passed=lhs <= rhs * (1.0 + 1e-6))


def translation_weight_check(
    f: Field, cells: tuple[int, ...], p: float, k1: float, k2: float
) -> InequalityCheck:
    """||tau_h f||_{L^p_k} <= lambda(h)^{|k|} ||f||_{L^p_k} with k = k1 + k2.

    lambda(h) = (|h| + sqrt(|h|^2 + 4)) / 2 = sup_v <v> / <v - h>, so lambda(0) = 1. The
    right side only counts source nodes that stay inside the box after the shift.
    """
    grid = f.grid
    k = k1 + k2
    h = np.asarray(cells, dtype=np.float64) * grid.spacing
    moved = f.shifted(cells)
    lhs = lp_norm(moved, p, k)
    survivors = f.like(np.ones(grid.shape)).shifted(tuple(-c for c in cells)).values > 0
    kept = f.like(np.where(survivors, f.values, 0.0))
    length = math.sqrt(float(h @ h))
    factor = 0.5 * (length + math.sqrt(length**2 + 4.0))
    rhs = factor ** abs(k) * lp_norm(kept, p, k)
    return InequalityCheck(lhs=lhs, rhs=rhs, passed=lhs <= rhs * (1.0 + 1e-12))


def interpolation_inequality_check(
    f: Field, s1: float, s2: float, eta: float = 0.0
) -> InequalityCheck:
    lhs = sobolev_norm(f, 0.5 * (s1 + s2), eta)
    rhs = math.sqrt(sobolev_norm(f, s1, eta) * sobolev_norm(f, s2, eta))
    return InequalityCheck(lhs=lhs, rhs=rhs, passed=lhs <= rhs * (1.0 + 1e-10))


def edge_jump(f: Field, radius: float, center=None) -> EdgeJump:
    """Jump across the disk edge along the +v1 ray, by one-sided linear extrapolation.

    The ray runs through the node closest to ``center``; two nodes on each side of the
    edge are used.
    """
    grid = f.grid
    center = np.zeros(grid.dimension) if center is None else np.asarray(center, dtype=np.float64)
    cell = np.rint((center + grid.half_width) / grid.spacing).astype(int)
    line = f.values[(slice(None),) + tuple(cell[1:])]
    offset = grid.nodes - grid.nodes[cell[0]]
    inner = np.flatnonzero((offset >= 0) & (offset < radius))
    outer = np.flatnonzero(offset > radius)
    if inner.size < 2 or outer.size < 2:
        raise AnalysisError("Disk edge is too close to the node set to measure a jump")
    i1, i0 = inner[-1], inner[-2]
    o0, o1 = outer[0], outer[1]

    def extrapolate(a: int, b: int) -> float:
        slope = (line[b] - line[a]) / (offset[b] - offset[a])
        return float(line[b] + slope * (radius - offset[b]))

    inside = extrapolate(i0, i1)
    outside = extrapolate(o1, o0)
    edge_point = grid.nodes[cell].astype(np.float64)
    edge_point[0] += radius
    return EdgeJump(amplitude=inside - outside, edge_point=edge_point, inside=inside, outside=outside)


def diagnostics_row(
    f: Field,
    t: float,
    gamma: float = 1.0,
    dt: float | None = None,
    extra: dict[str, float] | None = None,
) -> DiagnosticsRow:
    m = moments(f)
    try:
        distance = lp_norm(f.like(f.values - maxwellian_for(f).values), 1.0)
    except AnalysisError:
        distance = math.nan
    return DiagnosticsRow(
        t=t,
        mass=m.mass,
        momentum=list(m.momentum),
        energy=m.energy,
        entropy=entropy(f),
        l2=lp_norm(f, 2.0),
        l2_weighted=lp_norm(f, 2.0, 0.5 * gamma),
        h1=sobolev_norm(f, 1.0),
        min_value=float(f.values.min()),
        l1_to_maxwellian=distance,
        dt=dt,
        extra=extra or {},
    )
