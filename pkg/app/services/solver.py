"""Time integration, the discrete Duhamel split and the smooth/remainder decomposition.

The exponential step integrates df/dt = Q+(f, f) - f L(f) with L and Q+ frozen over the
step. Splitting the update into a damped part and a freshly produced part gives the
discrete Duhamel pieces for free: ``transported`` carries the initial datum of the
current segment times exp(-integral of L) and ``smoothpart`` the accumulated gain.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Protocol

import numpy as np
from scipy import optimize, stats

from app.schemas import NodeRecord
from app.services.analysis import lp_norm, maxwellian_for
from app.services.grid import Field

logger = logging.getLogger(__name__)

CFL_LIMIT = 0.5
SMALL_RATE = 1e-14
THETA_GRID = tuple(round(0.05 * i, 2) for i in range(1, 20))
DEGENERATE_C = 1e-6


class SolverError(ValueError):
    """Raised when a run or a fit cannot proceed with the given inputs."""


class NumericalFailure(SolverError):
    """NaN or Inf produced by an update."""

    def __init__(self, message: str, diagnostics: dict[str, float]):
        super().__init__(message)
        self.diagnostics = diagnostics


class CollisionModel(Protocol):
    def gain(self, f: Field) -> Field: ...

    def loss(self, f: Field) -> Field: ...


@dataclass(frozen=True)
class SolverState:
    t: float
    f: Field
    transported: Field
    smoothpart: Field
    loss_integral: np.ndarray
    segment_start: float
    loss: Field | None = None
    steps: int = 0


def start_state(f0: Field, t0: float = 0.0) -> SolverState:
    return SolverState(
        t=t0,
        f=f0,
        transported=f0,
        smoothpart=f0.like(np.zeros(f0.grid.shape)),
        loss_integral=np.zeros(f0.grid.shape),
        segment_start=t0,
    )


def restart_segment(state: SolverState) -> SolverState:
    """Start a new Duhamel segment at the current time without touching f."""
    return replace(
        state,
        transported=state.f,
        smoothpart=state.f.like(np.zeros(state.f.grid.shape)),
        loss_integral=np.zeros(state.f.grid.shape),
        segment_start=state.t,
    )


def _guard(values: np.ndarray, state: SolverState, dt: float, what: str) -> None:
    if not np.all(np.isfinite(values)):
        diagnostics = {
            "t": state.t,
            "dt": dt,
            "step": state.steps,
            "max_abs_f": float(np.abs(state.f.values).max()),
        }
        raise NumericalFailure(f"Non-finite values in {what} at t={state.t:.6g}", diagnostics)


def step_exponential(
    state: SolverState, dt: float, model: CollisionModel, loss: Field | None = None
) -> SolverState:
    if dt <= 0:
        raise SolverError(f"Time step must be positive, got {dt}")
    f = state.f
    rate = (loss if loss is not None else model.loss(f)).values
    gain = model.gain(f).values
    _guard(rate, state, dt, "loss rate")
    _guard(gain, state, dt, "gain term")

    exponent = dt * rate
    damping = np.exp(-exponent)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi1 = np.where(rate < SMALL_RATE, 1.0, -np.expm1(-exponent) / exponent)
    produced = dt * phi1 * gain

    values = f.values * damping + produced
    _guard(values, state, dt, "update")
    return SolverState(
        t=state.t + dt,
        f=f.like(values),
        transported=f.like(state.transported.values * damping),
        smoothpart=f.like(state.smoothpart.values * damping + produced),
        loss_integral=state.loss_integral + exponent,
        segment_start=state.segment_start,
        loss=f.like(rate),
        steps=state.steps + 1,
    )


def step_rk4(
    state: SolverState, dt: float, model: CollisionModel, loss: Field | None = None
) -> SolverState:
    """Classical RK4 on Q(f, f); the Duhamel pieces collapse to (f, 0)."""
    if dt <= 0:
        raise SolverError(f"Time step must be positive, got {dt}")
    f = state.f

    def rhs(values: np.ndarray) -> np.ndarray:
        current = f.like(values)
        out = model.gain(current).values - values * model.loss(current).values
        _guard(out, state, dt, "collision operator")
        return out

    k1 = rhs(f.values)
    k2 = rhs(f.values + 0.5 * dt * k1)
    k3 = rhs(f.values + 0.5 * dt * k2)
    k4 = rhs(f.values + dt * k3)
    values = f.values + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    _guard(values, state, dt, "update")
    rate = loss if loss is not None else model.loss(f)
    new_f = f.like(values)
    return SolverState(
        t=state.t + dt,
        f=new_f,
        transported=new_f,
        smoothpart=f.like(np.zeros(f.grid.shape)),
        loss_integral=state.loss_integral + dt * rate.values,
        segment_start=state.segment_start,
        loss=rate,
        steps=state.steps + 1,
    )


STEPPERS = {"exponential": step_exponential, "rk4": step_rk4}


def advance(
    state: SolverState,
    t_end: float,
    dt: float,
    model: CollisionModel,
    integrator: Literal["exponential", "rk4"] = "exponential",
    callback: Callable[[SolverState, SolverState], None] | None = None,
) -> SolverState:
    """Step to t_end, halving dt while dt * max L exceeds the CFL-like limit.

    ``callback(previous, current)`` runs after every accepted step.
    """
    if dt <= 0:
        raise SolverError(f"Time step must be positive, got {dt}")
    if t_end < state.t:
        raise SolverError(f"Cannot advance backwards from t={state.t} to {t_end}")
    try:
        stepper = STEPPERS[integrator]
    except KeyError as exc:
        raise SolverError(f"Unknown integrator {integrator!r}") from exc

    tolerance = 1e-12 * max(1.0, abs(t_end))
    while t_end - state.t > tolerance:
        loss = model.loss(state.f)
        h = min(dt, t_end - state.t)
        peak = float(loss.values.max())
        while h * peak > CFL_LIMIT:
            h *= 0.5
            logger.warning(
                "Halving time step for the loss-rate limit",
                extra={"t": state.t, "dt": h, "max_loss": peak},
            )
        previous = state
        state = stepper(state, h, model, loss=loss)
        if t_end - state.t <= tolerance:
            state = replace(state, t=t_end)
        logger.debug("Step accepted", extra={"step": state.steps, "t": state.t, "dt": h})
        if callback is not None:
            callback(previous, state)
    return state


@dataclass
class FlowResult:
    state: SolverState
    snapshots: dict[float, SolverState] = field(default_factory=dict)


def run_flow(
    f0: Field,
    model: CollisionModel,
    t_end: float,
    dt: float,
    record_times=(),
    integrator: Literal["exponential", "rk4"] = "exponential",
    callback: Callable[[SolverState, SolverState], None] | None = None,
    t0: float = 0.0,
) -> FlowResult:
    state = start_state(f0, t0)
    result = FlowResult(state=state)
    for target in sorted(set(float(t) for t in record_times) | {float(t_end)}):
        if target < t0:
            raise SolverError(f"Record time {target} precedes the flow start {t0}")
        state = advance(state, target, dt, model, integrator, callback)
        result.snapshots[target] = state
    result.state = state
    return result


def duhamel_split(
    f_a: Field, model: CollisionModel, a: float, b: float, dt: float
) -> tuple[Field, Field]:
    """(f_a exp(-int_a^b L), int_a^b Q+ exp(-int_s^b L) ds) along the exponential scheme."""
    state = advance(start_state(f_a, a), b, dt, model)
    return state.transported, state.smoothpart


def node_times(tau_prime: float, t: float, depth: int, mu: float) -> list[float]:
    """t_i = t_{i-1} + mu (t - t_{i-1}) for i = 0 .. depth - 1, from t_{-1} = tau_prime."""
    if depth < 1:
        raise SolverError(f"Tree depth must be >= 1, got {depth}")
    if not 0.0 < mu < 1.0:
        raise SolverError(f"mu must lie in (0, 1), got {mu}")
    if not 0.0 <= tau_prime < t:
        raise SolverError(f"Need 0 <= tau' < t, got tau'={tau_prime}, t={t}")
    times = []
    previous = tau_prime
    for _ in range(depth):
        previous = previous + mu * (t - previous)
        times.append(previous)
    return times


@dataclass(frozen=True)
class DecompositionPlan:
    t: float
    tau: float
    depth: int
    mu: float
    c_stab: float | None = None
    k_prime: float | None = None
    lambdas: dict[float, float] = field(default_factory=dict)

    @property
    def tau_prime(self) -> float:
        return 0.5 * self.tau

    @property
    def times(self) -> list[float]:
        return node_times(self.tau_prime, self.t, self.depth, self.mu)

    @property
    def mu_threshold(self) -> float | None:
        if self.c_stab is None or self.k_prime is None or self.c_stab + self.k_prime <= 0:
            return None
        return self.c_stab / (self.c_stab + self.k_prime)

    @property
    def mu_admissible(self) -> bool | None:
        threshold = self.mu_threshold
        return None if threshold is None else self.mu > threshold

    def at(self, t: float) -> "DecompositionPlan":
        return replace(self, t=t)


@dataclass
class TreeResult:
    f_s: Field
    f_r: Field
    base: Field
    nodes: list[NodeRecord]
    warnings: list[str] = field(default_factory=list)


def _check_plan(plan: DecompositionPlan) -> list[str]:
    if plan.t < plan.tau:
        raise SolverError(f"Decomposition time {plan.t} precedes tau = {plan.tau}")
    warnings = []
    if plan.mu_admissible is False:
        message = (
            f"mu = {plan.mu:.3f} does not exceed C_stab / (C_stab + K') = "
            f"{plan.mu_threshold:.3f} for the estimated constants"
        )
        logger.warning(message, extra={"mu": plan.mu})
        warnings.append(message)
    return warnings


def _grow_tree(
    at_tau_prime: SolverState, model: CollisionModel, plan: DecompositionPlan, dt: float
) -> tuple[Field, list[NodeRecord]]:
    """Restart flows at each node from the previous flow's smooth Duhamel part."""
    records = []
    state = restart_segment(at_tau_prime)
    for index, node in enumerate(plan.times):
        state = advance(state, node, dt, model)
        discarded = state.transported
        restart = state.smoothpart
        records.append(
            NodeRecord(
                index=index,
                time=node,
                discarded_l1=lp_norm(discarded, 1.0),
                discarded_l2=lp_norm(discarded, 2.0),
                restart_l1=lp_norm(restart, 1.0),
            )
        )
        logger.info("Tree node reached", extra={"node": index, "node_time": node})
        state = start_state(restart, node)
    state = advance(state, plan.t, dt, model)
    return state.f, records


def decomposition_tree(
    f0: Field, model: CollisionModel, plan: DecompositionPlan, dt: float
) -> TreeResult:
    warnings = _check_plan(plan)
    base = run_flow(f0, model, plan.t, dt, record_times=[plan.tau_prime])
    f_s, records = _grow_tree(base.snapshots[plan.tau_prime], model, plan, dt)
    f_t = base.state.f
    return TreeResult(
        f_s=f_s,
        f_r=f_t.like(f_t.values - f_s.values),
        base=f_t,
        nodes=records,
        warnings=warnings,
    )


def decomposition_series(
    f0: Field, model: CollisionModel, plan: DecompositionPlan, times, dt: float
) -> list[TreeResult]:
    """Decompositions at several final times sharing one base flow."""
    times = sorted(float(t) for t in times)
    warnings = _check_plan(plan.at(times[0]))
    base = run_flow(f0, model, times[-1], dt, record_times=[plan.tau_prime, *times])
    results = []
    for t in times:
        current = plan.at(t)
        f_s, records = _grow_tree(base.snapshots[plan.tau_prime], model, current, dt)
        f_t = base.snapshots[t].f
        results.append(
            TreeResult(
                f_s=f_s,
                f_r=f_t.like(f_t.values - f_s.values),
                base=f_t,
                nodes=records,
                warnings=list(warnings),
            )
        )
    return results


@dataclass(frozen=True)
class DecayFit:
    rate: float
    prefactor: float
    r_squared: float


def _positive_series(times, values) -> tuple[np.ndarray, np.ndarray]:
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if times.shape != values.shape or times.size < 2:
        raise SolverError("Decay fit needs matching series of at least two points")
    if np.any(values <= 0):
        raise SolverError("Decay fit needs positive values on the fit window")
    return times, values


def fit_exponential_decay(times, values) -> DecayFit:
    """log y = log C - lambda t by least squares."""
    times, values = _positive_series(times, values)
    fit = stats.linregress(times, np.log(values))
    return DecayFit(rate=float(-fit.slope), prefactor=float(math.exp(fit.intercept)), r_squared=float(fit.rvalue**2))


def fit_power_decay(times, values) -> DecayFit:
    """log y = log C - alpha log t by least squares."""
    times, values = _positive_series(times, values)
    if np.any(times <= 0):
        raise SolverError("Power-law fit needs positive times")
    fit = stats.linregress(np.log(times), np.log(values))
    return DecayFit(rate=float(-fit.slope), prefactor=float(math.exp(fit.intercept)), r_squared=float(fit.rvalue**2))


@dataclass(frozen=True)
class DecayModelChoice:
    preferred: Literal["exponential", "power"]
    exponential: DecayFit
    power: DecayFit


def select_decay_model(times, values) -> DecayModelChoice:
    exponential = fit_exponential_decay(times, values)
    power = fit_power_decay(times, values)
    preferred = "exponential" if exponential.r_squared >= power.r_squared else "power"
    return DecayModelChoice(preferred=preferred, exponential=exponential, power=power)


@dataclass(frozen=True)
class StabilityEstimate:
    c_stab: float
    c_differential: float
    degenerate: bool
    times: tuple[float, ...]
    gaps: tuple[float, ...]


def estimate_stability(
    f0: Field, g0: Field, model: CollisionModel, horizon: float, k: float, dt: float, samples: int = 11
) -> StabilityEstimate:
    """Largest growth rate of ||f_t - g_t||_{L1_k} and the matching constant C in
    d/dt log gap <= C ||f_t + g_t||_{L1_{k+gamma}}."""
    if horizon <= 0:
        raise SolverError("Stability horizon must be positive")
    if not 0.0 <= k <= 2.0:
        raise SolverError(f"Stability weight must lie in [0, 2], got {k}")
    times = np.linspace(0.0, horizon, samples)
    initial_gap = lp_norm(f0.like(f0.values - g0.values), 1.0, k)
    if initial_gap <= 1e-14 * max(lp_norm(f0, 1.0, k), 1e-300):
        logger.warning("Identical data in the stability estimate; returning zero")
        return StabilityEstimate(0.0, 0.0, True, tuple(times), (initial_gap,) * samples)

    with ThreadPoolExecutor(max_workers=2) as pool:
        runs = list(pool.map(lambda datum: run_flow(datum, model, horizon, dt, times), (f0, g0)))
    gaps, totals = [], []
    gamma = float(getattr(getattr(model, "kernel", None), "gamma", 1.0))
    for t in times:
        f_t = runs[0].snapshots[float(t)].f
        g_t = runs[1].snapshots[float(t)].f
        gaps.append(lp_norm(f_t.like(f_t.values - g_t.values), 1.0, k))
        totals.append(lp_norm(f_t.like(f_t.values + g_t.values), 1.0, k + gamma))
    gaps_arr = np.asarray(gaps)
    if np.any(gaps_arr <= 0):
        return StabilityEstimate(0.0, 0.0, True, tuple(times), tuple(gaps))
    slopes = np.diff(np.log(gaps_arr)) / np.diff(times)
    c_stab = max(float(slopes.max()), 0.0)
    midpoint_totals = 0.5 * (np.asarray(totals)[1:] + np.asarray(totals)[:-1])
    c_differential = max(float(np.max(slopes / midpoint_totals)), 0.0)
    return StabilityEstimate(c_stab, c_differential, False, tuple(times), tuple(gaps))


def estimate_transport_decay(
    f0: Field, model: CollisionModel, horizon: float, dt: float, samples: int = 6
) -> DecayFit:
    """Exponential decay rate of ||f_0 exp(-int L)||_{L1}; the measured K'."""
    times = np.linspace(0.0, horizon, samples)
    run = run_flow(f0, model, horizon, dt, times)
    mass = [lp_norm(run.snapshots[float(t)].transported, 1.0) for t in times]
    return fit_exponential_decay(times, mass)


def auto_plan(
    f0: Field,
    model: CollisionModel,
    t: float,
    tau: float,
    depth: int,
    dt: float,
    pilot_time: float = 1.0,
    mu_floor: float = 0.5,
) -> DecompositionPlan:
    """mu = max(mu_floor, C/(C + K') + 0.05), at most 0.95, from short pilot runs."""
    companion = f0.like(0.99 * f0.values + 0.01 * maxwellian_for(f0).values)
    stability = estimate_stability(f0, companion, model, pilot_time, 0.0, dt)
    transport = estimate_transport_decay(f0, model, pilot_time, dt)
    c_stab, k_prime = stability.c_stab, max(transport.rate, 0.0)
    if c_stab + k_prime > 0:
        mu = max(mu_floor, c_stab / (c_stab + k_prime) + 0.05)
    else:
        mu = mu_floor
    mu = min(mu, 0.95)
    logger.info(
        "Decomposition plan chosen",
        extra={"mu": mu, "c_stab": c_stab, "k_prime": k_prime},
    )
    return DecompositionPlan(t=t, tau=tau, depth=depth, mu=mu, c_stab=c_stab, k_prime=k_prime)


@dataclass(frozen=True)
class DiffIneqFit:
    c_plus: float
    k_minus: float
    theta: float
    feasible: bool
    violation: float
    scale: float
    slack: float = math.nan

    @property
    def theta_at_bound(self) -> bool:
        return self.theta in (THETA_GRID[0], THETA_GRID[-1])

    @property
    def degenerate(self) -> bool:
        """theta pinned to the grid edge or C+ collapsed: the fit carries no bound."""
        if not math.isfinite(self.c_plus):
            return True
        return self.theta_at_bound or self.c_plus <= DEGENERATE_C * self.scale


def fit_diffineq(
    times,
    norm,
    weighted_norm,
    p: float = 2.0,
    derivative=None,
    k_floor: float = 1e-9,
) -> DiffIneqFit:
    """Fit d/dt ||f||_p^p <= C ||f||_p^{p(1-theta)} - K ||f||_{p,gamma/p}^p.

    theta runs over a fixed grid; for each theta a linear program minimizes the total
    slack over (C, K >= k_floor) and a second one picks the smallest C + K with that
    slack. The theta with the least slack wins, smaller C on ties. A fit whose theta
    sits on the grid edge or whose C collapses to zero is flagged degenerate.
    """
    times = np.asarray(times, dtype=np.float64)
    x = np.asarray(norm, dtype=np.float64)
    y = np.asarray(weighted_norm, dtype=np.float64)
    if times.size < 10 or x.shape != times.shape or y.shape != times.shape:
        raise SolverError("Differential-inequality fit needs at least ten samples")
    power = x**p
    d = np.gradient(power, times) if derivative is None else np.asarray(derivative, dtype=np.float64)
    c_terms = y**p
    scale = float(max(np.abs(d).max(), c_terms.max(), power.max()))

    best = None
    for theta in THETA_GRID:
        a_terms = x ** (p * (1.0 - theta))
        # rows: -a C + c K <= -d
        a_ub = np.stack([-a_terms, c_terms], axis=1) / scale
        b_ub = -d / scale
        bounds = [(0.0, None), (k_floor, None)]
        first = optimize.linprog(
            [a_terms.sum() / scale, -c_terms.sum() / scale], A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs"
        )
        if first.status != 0:
            continue
        slack = first.fun + d.sum() / scale
        cap = first.fun + 1e-9 * max(1.0, abs(first.fun))
        second = optimize.linprog(
            [1.0, 1.0],
            A_ub=np.vstack([a_ub, [a_terms.sum() / scale, -c_terms.sum() / scale]]),
            b_ub=np.append(b_ub, cap),
            bounds=bounds,
            method="highs",
        )
        c_plus, k_minus = (second.x if second.status == 0 else first.x)
        key = (round(slack / times.size, 12), c_plus)
        if best is None or key < best[0]:
            best = (key, theta, float(c_plus), float(k_minus))

    if best is None:
        return DiffIneqFit(math.nan, math.nan, math.nan, False, math.inf, scale)
    _, theta, c_plus, k_minus = best
    bound = c_plus * x ** (p * (1.0 - theta)) - k_minus * c_terms
    violation = float(np.max(np.maximum(d - bound, 0.0)) / scale)
    slack = float(np.mean(np.maximum(bound - d, 0.0)) / scale)
    fit = DiffIneqFit(c_plus, k_minus, theta, violation <= 1e-3, violation, scale, slack)
    if fit.degenerate:
        logger.warning(
            "Differential-inequality fit is degenerate",
            extra={"theta": theta, "c_plus": c_plus, "k_minus": k_minus, "slack": slack},
        )
    return fit
