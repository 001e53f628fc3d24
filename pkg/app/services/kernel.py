import logging
import math
import warnings
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np
from scipy import integrate, stats

from app.schemas import KernelConfig

logger = logging.getLogger(__name__)

RadialFamily = Literal["power", "capped", "smooth", "remainder"]
AngularFamily = Literal["constant", "table", "truncated", "smooth", "remainder", "folded"]

MOLLIFIER_POINTS = 4096
ANGULAR_TABLE_POINTS = 2048
RADIAL_TABLE_POINTS = 4096


class KernelError(ValueError):
    """Raised when a collision kernel violates its assumptions."""


def sphere_area(dimension: int) -> float:
    """|S^{N-1}|: 2 pi for N = 2, 4 pi for N = 3."""
    return 2.0 * math.pi ** (dimension / 2) / math.gamma(dimension / 2)


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Kinetic part Phi(|z|)."""

    family: RadialFamily
    gamma: float
    scale: float = 1.0
    cutoff: float = 0.0
    radii: np.ndarray | None = None
    table: np.ndarray | None = None
    base: "RadialProfile | None" = None
    smooth: "RadialProfile | None" = None

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        if self.family == "power":
            return self.scale * np.power(r, self.gamma)
        if self.family == "capped":
            return self.scale * np.minimum(np.power(r, self.gamma), 1.0)
        if self.family == "smooth":
            values = np.interp(r, self.radii, self.table, right=0.0)
            return np.where(r <= self.cutoff, 0.0, values)
        if self.family == "remainder":
            return self.base(r) - self.smooth(r)
        raise KernelError(f"Unknown kinetic family {self.family!r}")


@dataclass(frozen=True, eq=False)
class AngularProfile:
    """Angular part b(cos theta), zero outside [-1, 1]."""

    family: AngularFamily
    value: float = 0.0
    theta_b: float | None = None
    support: float = 1.0
    cosines: np.ndarray | None = None
    table: np.ndarray | None = None
    base: "AngularProfile | None" = None
    smooth: "AngularProfile | None" = None

    def __call__(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=np.float64)
        inside = np.abs(c) <= 1.0
        if self.family == "constant":
            out = np.full(c.shape, self.value)
        elif self.family == "truncated":
            out = np.where(c >= -math.cos(self.theta_b), self.value, 0.0)
        elif self.family in ("table", "smooth"):
            out = np.interp(c, self.cosines, self.table)
            out = np.where(np.abs(c) <= self.support, out, 0.0)
        elif self.family == "remainder":
            out = self.base(c) - self.smooth(c)
        elif self.family == "folded":
            out = np.where(c >= 0.0, self.base(c) + self.base(-c), 0.0)
        else:
            raise KernelError(f"Unknown angular family {self.family!r}")
        return np.where(inside, out, 0.0)


@dataclass(frozen=True, eq=False)
class CollisionKernel:
    """Product kernel B(|z|, cos theta) = Phi(|z|) b(cos theta)."""

    dimension: int
    gamma: float
    phi: RadialProfile
    b: AngularProfile
    validation: bool = False
    k_phi: float | None = None
    theta_b: float | None = None
    b_0: float | None = None

    def __call__(self, r, c) -> np.ndarray:
        return self.phi(r) * self.b(c)


@dataclass(frozen=True, eq=False)
class MollifiedSplit:
    m: int
    n: int
    kernel: CollisionKernel
    phi_smooth: RadialProfile
    phi_remainder: RadialProfile
    b_smooth: AngularProfile
    b_remainder: AngularProfile

    def piece(self, kinetic: Literal["S", "R"], angular: Literal["S", "R"]) -> CollisionKernel:
        """Kernel of Q+_{kinetic angular}; ("S", "S") is the smooth piece."""
        phi = self.phi_smooth if kinetic == "S" else self.phi_remainder
        b = self.b_smooth if angular == "S" else self.b_remainder
        return replace(self.kernel, phi=phi, b=b, k_phi=None, b_0=None)

    @property
    def annulus(self) -> tuple[float, float]:
        return 2.0 / self.n, float(self.n)

    @property
    def interval(self) -> tuple[float, float]:
        return 2.0 / self.m - 1.0, 1.0 - 2.0 / self.m


@dataclass(frozen=True)
class TailRate:
    c_b: float
    delta: float
    r_squared: float
    defects: tuple[float, ...]


def make_kernel(
    dimension: int,
    kinetic: RadialFamily = "power",
    gamma: float = 1.0,
    angular: Literal["constant", "truncated"] = "constant",
    normalization: float = 1.0,
    scale: float = 1.0,
    theta_b: float | None = None,
    validation: bool = False,
) -> CollisionKernel:
    """Build a physical kernel; ``normalization`` is the angular mass ||b||_{L1(S^{N-1})}."""
    if dimension not in (2, 3):
        raise KernelError(f"Kernel dimension must be 2 or 3, got {dimension}")
    if not 0.0 <= gamma < 2.0:
        raise KernelError(f"gamma must lie in [0, 2), got {gamma}")
    if gamma == 0.0 and not validation:
        raise KernelError("gamma = 0 is only available with validation = true")
    if kinetic not in ("power", "capped"):
        raise KernelError(f"Kinetic family {kinetic!r} cannot be built directly")
    if normalization <= 0 or scale <= 0:
        raise KernelError("Kernel normalization and scale must be positive")

    phi = RadialProfile(family=kinetic, gamma=gamma, scale=scale)
    if angular == "constant":
        value = normalization / sphere_area(dimension)
        b = AngularProfile(family="constant", value=value)
    elif angular == "truncated":
        if theta_b is None or not 0.0 < theta_b < math.pi:
            raise KernelError("Truncated angular part needs theta_b in (0, pi)")
        b = AngularProfile(family="truncated", value=1.0, theta_b=theta_b)
        mass = angular_mass_of(b, dimension)
        b = replace(b, value=normalization / mass)
    else:
        raise KernelError(f"Unknown angular family {angular!r}")

    return CollisionKernel(
        dimension=dimension,
        gamma=gamma,
        phi=phi,
        b=b,
        validation=validation,
        k_phi=scale if kinetic == "power" else None,
        theta_b=theta_b,
        b_0=b.value,
    )


def hard_sphere(dimension: int = 2) -> CollisionKernel:
    return make_kernel(dimension, kinetic="power", gamma=1.0)


def constant_kernel(dimension: int = 2) -> CollisionKernel:
    """Maxwell-molecule kernel B = 1 / |S^{N-1}| (validation only)."""
    return make_kernel(dimension, gamma=0.0, validation=True)


def kernel_from_config(config: KernelConfig, dimension: int) -> CollisionKernel:
    return make_kernel(
        dimension,
        kinetic=config.kinetic,
        gamma=config.gamma,
        angular=config.angular,
        normalization=config.normalization,
        theta_b=config.theta_b,
        validation=config.validation,
    )


def table_angular(cosines: np.ndarray, values: np.ndarray) -> AngularProfile:
    cosines = np.asarray(cosines, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if cosines.shape != values.shape or np.any(np.diff(cosines) <= 0):
        raise KernelError("Angular table needs increasing cosines matching values")
    if np.any(values < 0):
        raise KernelError("Angular table must be nonnegative")
    return AngularProfile(family="table", cosines=cosines, table=values)


def eval_B(kernel: CollisionKernel, r, c) -> np.ndarray:
    return kernel(r, c)


def fold_angular(kernel: CollisionKernel) -> CollisionKernel:
    """b(c) + b(-c) restricted to theta <= pi/2; only valid for Q+(f, f)."""
    folded = AngularProfile(family="folded", base=kernel.b)
    return replace(kernel, b=folded, b_0=None)


def _theta_rule(panels: int = 256, order: int = 8) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, math.pi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def angular_mass_of(b: AngularProfile, dimension: int) -> float:
    theta, weights = _theta_rule()
    values = b(np.cos(theta))
    if not np.all(np.isfinite(values)):
        raise KernelError("Angular part is not integrable (non-cut-off kernel)")
    if dimension == 2:
        # full circle: deviation angles in (-pi, pi)
        mass = 2.0 * float(np.sum(weights * values))
    else:
        inner = float(np.sum(weights * values * np.sin(theta) ** (dimension - 2)))
        mass = sphere_area(dimension - 1) * inner
    if not math.isfinite(mass):
        raise KernelError("Angular mass diverges (non-cut-off kernel)")
    return mass


def angular_mass(kernel: CollisionKernel) -> float:
    return angular_mass_of(kernel.b, kernel.dimension)


def _tail_defect(b: AngularProfile, dimension: int, eps: float) -> float:
    def integrand(theta: float) -> float:
        return float(b(math.cos(theta))) * math.sin(theta) ** (dimension - 2)

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            low, _ = integrate.quad(integrand, 0.0, eps, limit=200)
            high, _ = integrate.quad(integrand, math.pi - eps, math.pi, limit=200)
        except integrate.IntegrationWarning as exc:
            raise KernelError(f"Angular tail integral did not converge: {exc}") from exc
    return abs(low) + abs(high)


def angular_tail_rate(kernel: CollisionKernel, eps_list) -> TailRate:
    eps = np.asarray(list(eps_list), dtype=np.float64)
    if eps.size < 4 or np.any(eps <= 0) or np.any(eps >= 0.3):
        raise KernelError("Tail-rate fit needs at least four epsilons in (0, 0.3)")
    defects = np.array([_tail_defect(kernel.b, kernel.dimension, e) for e in eps])
    positive = defects > 0
    if positive.sum() < 2:
        return TailRate(c_b=0.0, delta=math.inf, r_squared=math.nan, defects=tuple(defects))
    fit = stats.linregress(np.log(eps[positive]), np.log(defects[positive]))
    return TailRate(
        c_b=float(math.exp(fit.intercept)),
        delta=float(fit.slope),
        r_squared=float(fit.rvalue**2),
        defects=tuple(float(d) for d in defects),
    )


def holder_constant(
    kernel: CollisionKernel, pairs: np.ndarray | None = None, r_max: float = 16.0 * math.sqrt(2.0)
) -> float:
    """Lower estimate of ||Phi||_{C^{0,gamma}} from sampled pairs r != s."""
    gamma = kernel.gamma
    if gamma <= 0:
        raise KernelError("Holder estimate requires gamma > 0")
    if pairs is None:
        samples = np.unique(
            np.concatenate(
                [
                    [0.0],
                    np.geomspace(1e-8, r_max, 200),
                    np.linspace(0.0, r_max, 201),
                ]
            )
        )
        r, s = np.meshgrid(samples, samples, indexing="ij")
        keep = r > s
        r, s = r[keep], s[keep]
    else:
        pairs = np.asarray(pairs, dtype=np.float64)
        r, s = pairs[:, 0], pairs[:, 1]
        keep = r != s
        r, s = r[keep], s[keep]
    ratio = np.abs(kernel.phi(r) - kernel.phi(s)) / np.abs(r - s) ** gamma
    return float(ratio.max())


def bump(x: np.ndarray) -> np.ndarray:
    """exp(-1 / (1 - x^2)) on |x| < 1, zero elsewhere."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


def _mollifier_1d() -> tuple[np.ndarray, np.ndarray]:
    step = 2.0 / MOLLIFIER_POINTS
    s = -1.0 + step * (np.arange(MOLLIFIER_POINTS) + 0.5)
    w = bump(s)
    return s, w / w.sum()


def _mollifier_radial(dimension: int, order: int = 64) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nodes (rho, cos of angle to e1) and weights of the unit-mass radial bump."""
    x, wx = np.polynomial.legendre.leggauss(order)
    rho = 0.5 * (x + 1.0)
    w_rho = 0.5 * wx * bump(rho) * rho ** (dimension - 1)
    if dimension == 2:
        alpha = math.pi * (np.arange(order) + 0.5) / order
        cosines = np.cos(alpha)
        w_ang = np.full(order, 1.0 / order)
    else:
        cosines, w_ang = x, wx
    weights = w_rho[:, None] * w_ang[None, :]
    return rho, cosines, weights / weights.sum()


def _smooth_angular(b: AngularProfile, m: int) -> AngularProfile:
    s, w = _mollifier_1d()
    cosines = np.linspace(-1.0, 1.0, ANGULAR_TABLE_POINTS)
    edge = 1.0 - 2.0 / m
    table = np.empty_like(cosines)
    for start in range(0, cosines.size, 256):
        x = cosines[start:start + 256, None] - s[None, :] / m
        restricted = np.where(np.abs(x) <= edge, b(x), 0.0)
        table[start:start + 256] = restricted @ w
    return AngularProfile(
        family="smooth", cosines=cosines, table=table, support=1.0 - 1.0 / m
    )


def _smooth_radial(phi: RadialProfile, n: int, dimension: int) -> RadialProfile:
    rho, cosines, weights = _mollifier_radial(dimension)
    rho = rho / n
    r_max = n + 1.0 / n
    radii = np.linspace(0.0, r_max, RADIAL_TABLE_POINTS)
    low, high = 2.0 / n, float(n)
    table = np.empty_like(radii)
    for start in range(0, radii.size, 128):
        r = radii[start:start + 128, None, None]
        dist = np.sqrt(
            np.maximum(r**2 + rho[None, :, None] ** 2 - 2.0 * r * rho[None, :, None] * cosines[None, None, :], 0.0)
        )
        inside = (dist >= low) & (dist <= high)
        values = np.where(inside, phi(dist), 0.0)
        table[start:start + 128] = np.sum(values * weights[None, :, :], axis=(1, 2))
    return RadialProfile(
        family="smooth", gamma=phi.gamma, cutoff=1.0 / n, radii=radii, table=table
    )


def split_kernel(kernel: CollisionKernel, m: int, n: int) -> MollifiedSplit:
    if m < 4 or n < 4:
        raise KernelError(f"Split parameters too small to separate supports: m={m}, n={n}")
    phi_s = _smooth_radial(kernel.phi, n, kernel.dimension)
    b_s = _smooth_angular(kernel.b, m)
    logger.debug("Kernel split built", extra={"m": m, "n": n})
    return MollifiedSplit(
        m=m,
        n=n,
        kernel=kernel,
        phi_smooth=phi_s,
        phi_remainder=RadialProfile(
            family="remainder", gamma=kernel.gamma, base=kernel.phi, smooth=phi_s
        ),
        b_smooth=b_s,
        b_remainder=AngularProfile(family="remainder", base=kernel.b, smooth=b_s),
    )


def gain_exponent(p: float, dimension: int, which: Literal["corollary", "theorem"] = "corollary") -> float:
    """Integrability gain q(p) of the smoothing estimates."""
    if p <= 1:
        raise KernelError(f"Lebesgue exponent must exceed 1, got {p}")
    if dimension not in (2, 3):
        raise KernelError(f"Dimension must be 2 or 3, got {dimension}")
    n = float(dimension)
    if which == "corollary":
        if p < 2:
            return p / (2.0 - 1.0 / n + p * (1.0 / n - 1.0))
        return p * n
    if which == "theorem":
        if p < 2 * n:
            return (2 * n - 1) * p / (n + (n - 1) * p)
        return p / n
    raise KernelError(f"Unknown exponent formula {which!r}")
