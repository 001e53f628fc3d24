"""Verification suites: each check pairs a measured quantity with the property it probes."""

import logging
import math
from dataclasses import replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import integrate, ndimage

from app.schemas import PlanConfig, VerifyCheck, VerifyReport
from app.services import bkw
from app.services.analysis import (
    edge_jump,
    entropy,
    fit_lower_bound,
    fourier_decay_exponent,
    interpolation_inequality_check,
    lower_bound_margin,
    lp_norm,
    maxwellian_for,
    moments,
    sobolev_norm,
    translation_weight_check,
    weighted_young_check,
)
from app.services.collision import (
    CARLEMAN_NORMALIZATION,
    BoltzmannModel,
    carleman_q_plus,
    galilean_defect,
    invariant_defects,
    iterated_gain,
    jacobian_identity_check,
    kernel_lower_bound,
    loss_rate,
    q_plus,
    sigma_quadrature,
    split_q_plus,
)
from app.services.grid import Field, GridSpec, interpolate, make_grid
from app.services.initial import disk, double_bump, maxwellian
from app.services.kernel import angular_mass, constant_kernel, gain_exponent, split_kernel
from app.services.pipeline import RunContext, build_model, plan_from_config
from app.services.solver import (
    advance,
    decomposition_series,
    duhamel_split,
    fit_diffineq,
    fit_exponential_decay,
    run_flow,
    select_decay_model,
    start_state,
)

logger = logging.getLogger(__name__)

CONSERVATION_HORIZON = 5.0
LP_HORIZON = 10.0
JUMP_HORIZON = 2.0
EQUILIBRIUM_HORIZON = 6.0
RELAXATION_SPACING = 0.25
PROPERTY_CASES = 100


class VerifyError(ValueError):
    """Raised for an unknown verification suite."""


def _check(
    name: str,
    claim: str,
    measured: dict[str, float],
    passed: bool,
    tolerance: float | None = None,
    notes: list[str] | None = None,
) -> VerifyCheck:
    check = VerifyCheck(
        name=name,
        claim=claim,
        measured={key: float(value) for key, value in measured.items()},
        tolerance=tolerance,
        passed=bool(passed),
        notes=notes or [],
    )
    logger.info("Check evaluated", extra={"check": name, "passed": check.passed})
    return check


def _relative(a: np.ndarray, b: np.ndarray, norm=np.inf) -> float:
    scale = np.linalg.norm(b.ravel(), norm)
    return float(np.linalg.norm((a - b).ravel(), norm) / scale) if scale > 0 else math.inf


def _disk_datum(ctx: RunContext, grid: GridSpec | None = None) -> Field:
    grid = grid or ctx.grid
    initial = ctx.config.initial
    return disk(grid, initial.radius, np.asarray(initial.center, dtype=np.float64))


def _equilibrium_ratio(grid: GridSpec, kernel, opts) -> float:
    """||Q(M, M)||_inf / ||Q+(M, M)||_inf for the unit Maxwellian."""
    equilibrium = maxwellian(grid)
    gain = q_plus(equilibrium, equilibrium, kernel, opts)
    full = gain.values - equilibrium.values * loss_rate(equilibrium, kernel, opts.loss_mode).values
    return float(np.abs(full).max() / np.abs(gain.values).max())


def suite_operators(ctx: RunContext) -> VerifyReport:
    grid = ctx.grid
    model = build_model(ctx)
    kernel, opts = model.kernel, model.opts
    checks = []

    ratio = _equilibrium_ratio(grid, kernel, opts)
    checks.append(
        _check(
            "equilibrium_identity",
            "Gain and loss balance on a Maxwellian: Q(M, M) = 0",
            {"ratio": ratio},
            ratio <= 1e-2,
            1e-2,
        )
    )
    if grid.dimension == 2:
        refined = _equilibrium_ratio(make_grid(2, 2 * grid.points, grid.half_width), kernel, opts)
        checks.append(
            _check(
                "equilibrium_identity_order",
                "The Maxwellian balance improves under grid refinement",
                {"ratio": ratio, "refined_ratio": refined, "refined_points": 2 * grid.points},
                refined <= 5e-3 and refined < ratio,
                5e-3,
            )
        )

    datum = _disk_datum(ctx)
    direct = loss_rate(datum, kernel, "direct")
    fast = loss_rate(datum, kernel, "fft")
    loss_gap = _relative(fast.values, direct.values)
    checks.append(
        _check(
            "loss_convolution_modes",
            "The loss rate A * f agrees between direct and FFT convolution",
            {"relative_gap": loss_gap},
            loss_gap <= 1e-10,
            1e-10,
        )
    )

    disk_gain = q_plus(datum, datum, kernel, opts)
    checks.append(
        _check(
            "gain_nonnegative",
            "Q+(f, f) >= 0 for f >= 0",
            {"min": float(disk_gain.values.min())},
            disk_gain.values.min() >= 0.0,
        )
    )

    split = split_kernel(kernel, ctx.config.kernel.split_m, ctx.config.kernel.split_n)
    pieces = split_q_plus(datum, datum, split, opts)
    total = sum(piece.values for piece in pieces.values())
    split_gap = _relative(total, disk_gain.values, 2)
    checks.append(
        _check(
            "split_consistency",
            "The four pieces of the mollified split add up to Q+",
            {"relative_l2": split_gap},
            split_gap <= 1e-10,
            1e-10,
        )
    )

    small = disk(grid, grid.half_width / 8.0)
    cells = (2,) + (0,) * (grid.dimension - 1)
    defect = galilean_defect(small, kernel, opts, cells)
    checks.append(
        _check(
            "galilean_equivariance",
            "Q commutes with integer-cell translations of interior-supported data",
            {"defect": defect},
            defect <= 1e-10,
            1e-10,
        )
    )

    mass = angular_mass(kernel)
    checks.append(
        _check(
            "angular_mass",
            "The angular part carries the configured L1 mass (Grad cut-off)",
            {"angular_mass": mass, "configured": ctx.config.kernel.normalization},
            abs(mass - ctx.config.kernel.normalization) <= 1e-10 * ctx.config.kernel.normalization,
            1e-10,
        )
    )

    if kernel.k_phi is not None:
        radii = np.linspace(0.0, 2.0 * grid.half_width, 33)
        integrated = kernel_lower_bound(kernel, radii, opts.quadrature)
        floor = mass * kernel.k_phi * radii**kernel.gamma
        worst = float(np.min(integrated - floor * (1.0 - 1e-8)))
        checks.append(
            _check(
                "kernel_lower_bound",
                "The sigma-integral of B is at least K_B r^gamma with K_B = ||b|| K_Phi",
                {"min_margin": worst},
                worst >= 0.0,
                1e-8,
            )
        )

    bracket = grid.bracket() ** kernel.gamma
    trusted = np.sqrt(grid.speed_squared()) <= 0.5 * grid.half_width
    loss_floor = float(np.min(direct.values[trusted] / bracket[trusted]))
    checks.append(
        _check(
            "loss_lower_bound",
            "L f >= c <v>^gamma with c > 0 on the trusted region",
            {"c": loss_floor},
            loss_floor > 0.0,
        )
    )

    smooth_kernel = replace(kernel, b=split.b_smooth)
    lhs, rhs = jacobian_identity_check(
        smooth_kernel, lambda x: np.exp(-4.0 * np.sum(x**2, axis=-1)), grid, opts.quadrature
    )
    jac_gap = abs(lhs - rhs) / abs(rhs)
    checks.append(
        _check(
            "jacobian_identity",
            "The change of variables v -> (v + |v| sigma)/2 carries Jacobian cos^N(theta/2)",
            {"lhs": lhs, "rhs": rhs, "relative_gap": jac_gap},
            jac_gap <= 1e-2,
            1e-2,
        )
    )

    if grid.dimension == 2:
        checks.append(_carleman_check(ctx, model))

    exact = {
        "q_2d_gain": gain_exponent(2.0, 2, "corollary"),
        "q_3d_gain": gain_exponent(2.0, 3, "corollary"),
        "q_2d_differential": gain_exponent(2.0, 2, "theorem"),
    }
    jump = abs(gain_exponent(2.0 - 1e-13, 3, "corollary") - exact["q_3d_gain"])
    checks.append(
        _check(
            "gain_exponents",
            "Integrability gain exponents: q(2) = 2N and the differential exponent at p = 2",
            {**exact, "continuity_gap": jump},
            exact == {"q_2d_gain": 4.0, "q_3d_gain": 6.0, "q_2d_differential": 1.5} and jump <= 1e-11,
        )
    )
    return VerifyReport(suite="operators", checks=checks)


def _carleman_check(ctx: RunContext, model: BoltzmannModel) -> VerifyCheck:
    grid = ctx.grid
    f = maxwellian(grid, center=np.array([0.5, 0.0]))
    g = double_bump(grid, width=0.8)
    expected = q_plus(g, f, model.kernel, model.opts)
    candidate = carleman_q_plus(g, f, model.kernel, model.opts)
    gap = _relative(candidate.values, expected.values, 2)
    return _check(
        "carleman_cross_check",
        "Q+ through the (v', v'_*) hyperplane representation matches the sigma quadrature",
        {"normalization": CARLEMAN_NORMALIZATION, "relative_l2": gap, "points": grid.points},
        gap <= 0.02,
        0.02,
    )


def _energy(f: Field) -> float:
    return moments(f).energy


def _drift_run(f0: Field, model: BoltzmannModel, horizon: float, dt: float) -> tuple[float, float, int]:
    violations = 0
    last = entropy(f0)

    def watch(_previous, current) -> None:
        nonlocal violations, last
        h = entropy(current.f)
        if h > last + 1e-8:
            violations += 1
        last = h

    state = advance(start_state(f0), horizon, dt, model, callback=watch)
    mass0, energy0 = moments(f0).mass, _energy(f0)
    return abs(moments(state.f).mass - mass0), abs(_energy(state.f) - energy0), violations


def suite_conservation(ctx: RunContext) -> VerifyReport:
    grid = ctx.grid
    model = build_model(ctx)
    dt = ctx.config.dt
    checks, notes = [], []

    data = {
        "maxwellian": maxwellian(grid),
        "disk": _disk_datum(ctx),
        "double_bump": double_bump(grid),
    }
    drifts = {}
    for name, datum in data.items():
        mass_drift, energy_drift, violations = _drift_run(datum, model, CONSERVATION_HORIZON, dt)
        drifts[name] = {"mass": mass_drift, "energy": energy_drift}
        checks.append(
            _check(
                f"h_theorem_{name}",
                "The H functional is nonincreasing along the flow",
                {"violations": violations},
                violations == 0,
                1e-8,
            )
        )
    smooth = drifts["double_bump"]
    checks.append(
        _check(
            "conservation_drift",
            "Mass and energy are conserved up to quadrature error",
            {
                "mass_drift": smooth["mass"],
                "energy_drift": smooth["energy"],
                "disk_mass_drift": drifts["disk"]["mass"],
                "disk_energy_drift": drifts["disk"]["energy"],
                "maxwellian_mass_drift": drifts["maxwellian"]["mass"],
            },
            smooth["mass"] <= 1e-4 and smooth["energy"] <= 1e-3,
            1e-4,
            notes=["judged on the double bump; the disk edge is a grid-scale discontinuity"],
        )
    )

    base = invariant_defects(data["double_bump"], model.kernel, model.opts)
    checks.append(
        _check(
            "mass_defect",
            "The discrete collision operator conserves mass: sum Q(f, f) = 0",
            base,
            base["mass"] <= 1e-4,
            1e-4,
        )
    )
    if grid.dimension == 2:
        checks.append(_conservation_order(base, grid, model))
    else:
        notes.append("refinement comparison skipped in three dimensions")

    checks.append(_bkw_check(ctx))
    return VerifyReport(suite="conservation", checks=checks, notes=notes)


def _conservation_order(base: dict[str, float], grid: GridSpec, model: BoltzmannModel) -> VerifyCheck:
    fine_grid = make_grid(grid.dimension, 2 * grid.points, grid.half_width)
    fine = invariant_defects(double_bump(fine_grid), model.kernel, model.opts)
    mass_gain = base["mass"] / max(fine["mass"], 1e-300)
    energy_gain = base["energy"] / max(fine["energy"], 1e-300)
    # defects at round-off level carry no order information
    resolved = {key: fine[key] <= 1e-12 for key in ("mass", "energy")}
    return _check(
        "conservation_order",
        "Collision-invariant defects shrink at least twofold when the grid is refined twofold",
        {
            "refined_points": fine_grid.points,
            "mass": base["mass"],
            "refined_mass": fine["mass"],
            "energy": base["energy"],
            "refined_energy": fine["energy"],
            "mass_ratio": mass_gain,
            "energy_ratio": energy_gain,
        },
        (mass_gain >= 2.0 or resolved["mass"]) and (energy_gain >= 2.0 or resolved["energy"]),
        2.0,
    )


def _bkw_flow(grid: GridSpec, ctx: RunContext, dt: float) -> tuple[Field, float]:
    model = build_model(ctx, constant_kernel(grid.dimension))
    t0 = bkw.start_time(grid.dimension)
    state = advance(start_state(bkw.bkw_field(grid, t0), t0), t0 + 1.0, dt, model)
    return state.f, t0 + 1.0


def _bkw_check(ctx: RunContext) -> VerifyCheck:
    """Spatial accuracy against the closed form, temporal order against a finer-step flow.

    The temporal comparison runs on a half-resolution grid: every flow there shares the
    same spatial error, so differences between step sizes isolate the time error.
    """
    grid = ctx.grid
    final, t_end = _bkw_flow(grid, ctx, 0.01)
    error = float(np.abs(final.values - bkw.bkw_field(grid, t_end).values).max())

    coarse = make_grid(grid.dimension, max(grid.points // 2, 8), grid.half_width)
    reference, _ = _bkw_flow(coarse, ctx, 0.0025)
    temporal = {}
    for dt in (0.01, 0.005):
        flow, _ = _bkw_flow(coarse, ctx, dt)
        temporal[dt] = float(np.abs(flow.values - reference.values).max())
    reduction = temporal[0.01] / max(temporal[0.005], 1e-300)

    t0 = bkw.start_time(grid.dimension)
    ode = bkw.fourth_moment_ode([t0, t0 + 0.5, t0 + 1.0], grid.dimension)
    closed = [bkw.fourth_moment(t, grid.dimension) for t in (t0, t0 + 0.5, t0 + 1.0)]
    moment_gap = float(np.max(np.abs(np.asarray(closed) - ode)))
    return _check(
        "bkw_oracle",
        "The constant-kernel flow reproduces the closed-form similarity solution",
        {
            "linf_error": error,
            "temporal_error": temporal[0.01],
            "temporal_error_half_step": temporal[0.005],
            "reduction": reduction,
            "reference_dt": 0.0025,
            "fourth_moment_gap": moment_gap,
        },
        error <= 1e-3 and reduction >= 2.0 and moment_gap <= 1e-8,
        1e-3,
    )


def suite_lp(ctx: RunContext) -> VerifyReport:
    model = build_model(ctx)
    gamma = model.kernel.gamma
    f0 = _disk_datum(ctx)
    times, plain, weighted = [0.0], [lp_norm(f0, 2.0)], [lp_norm(f0, 2.0, gamma / 2.0)]

    def record(_previous, current) -> None:
        times.append(current.t)
        plain.append(lp_norm(current.f, 2.0))
        weighted.append(lp_norm(current.f, 2.0, gamma / 2.0))

    advance(start_state(f0), LP_HORIZON, ctx.config.dt, model, callback=record)
    fit = fit_diffineq(times, plain, weighted, p=2.0)
    checks = [
        _check(
            "lp_differential_inequality",
            "d/dt ||f||_2^2 <= C ||f||_2^{2(1-theta)} - K ||f||_{2,gamma/2}^2 along the flow",
            {
                "c_plus": fit.c_plus,
                "k_minus": fit.k_minus,
                "theta": fit.theta,
                "violation": fit.violation,
                "slack": fit.slack,
                "degenerate": float(fit.degenerate),
            },
            fit.feasible and not fit.degenerate,
            1e-3,
        )
    ]
    if fit.degenerate:
        bound = math.nan
    else:
        bound = max(plain[0], (fit.c_plus / fit.k_minus) ** (1.0 / (2.0 * fit.theta)))
    peak = max(plain)
    checks.append(
        _check(
            "lp_uniform_bound",
            "sup_t ||f||_2 stays below max(||f_0||_2, (C/K)^{1/(2 theta)})",
            {"sup_l2": peak, "bound": bound},
            peak <= 1.05 * bound,
            0.05,
        )
    )
    return VerifyReport(suite="lp", checks=checks)


def suite_smoothing(ctx: RunContext) -> VerifyReport:
    grid = ctx.grid
    model = build_model(ctx)
    kernel, opts = model.kernel, model.opts
    cfg = ctx.config
    checks = []
    indicator = _disk_datum(ctx)
    base_rate = fourier_decay_exponent(indicator)

    split = split_kernel(kernel, cfg.kernel.split_m, cfg.kernel.split_n)
    smooth_gain = q_plus(indicator, indicator, split.piece("S", "S"), opts)
    gain_rate = fourier_decay_exponent(smooth_gain)
    checks.append(
        _check(
            "gain_regularization",
            "Q+ with a smooth kernel gains (N-1)/2 derivatives over its arguments",
            {"indicator": base_rate, "gain": gain_rate, "gap": gain_rate - base_rate},
            gain_rate >= base_rate + 0.4,
            0.4,
        )
    )

    # every band 1 - 2/m < cos theta must hold nodes for m up to 32
    angular_count = max(cfg.kernel.sigma_nodes, 32)
    angular_opts = replace(opts, quadrature=sigma_quadrature(grid.dimension, angular_count))
    remainders = {}
    for m in (8, 16, 32):
        pieces = split_q_plus(
            indicator, indicator, split_kernel(kernel, m, cfg.kernel.split_n), angular_opts
        )
        remainders[m] = lp_norm(pieces["SR"].like(pieces["SR"].values + pieces["RR"].values), 2.0)
    values = [remainders[m] for m in (8, 16, 32)]
    checks.append(
        _check(
            "angular_remainder_decay",
            "||Q+_SR + Q+_RR||_2 decreases as the angular mollification sharpens",
            {**{f"m{m}": v for m, v in remainders.items()}, "sigma_count": angular_count},
            values[0] > values[1] > values[2],
        )
    )

    _, smoothpart = duhamel_split(indicator, model, 0.0, 1.0, cfg.dt)
    duhamel_rate = fourier_decay_exponent(smoothpart)
    checks.append(
        _check(
            "duhamel_regularization",
            "The gain part of the Duhamel formula is smoother than the initial datum",
            {"indicator": base_rate, "smoothpart": duhamel_rate},
            duhamel_rate >= base_rate + 0.4,
            0.4,
        )
    )

    checks.append(_jump_check(ctx, model, indicator))

    interp = interpolation_inequality_check(indicator, 0.0, 2.0)
    checks.append(
        _check(
            "sobolev_interpolation",
            "||f||_{H^s} <= sqrt(||f||_{H^s1} ||f||_{H^s2}) for s = (s1 + s2)/2",
            {"lhs": interp.lhs, "rhs": interp.rhs},
            interp.passed,
            1e-10,
        )
    )

    ratios = {}
    for points in (grid.points // 2, grid.points):
        g = make_grid(grid.dimension, points, grid.half_width)
        sharp = _disk_datum(ctx, g)
        blurred = sharp.like(ndimage.gaussian_filter(sharp.values, 0.5 / g.spacing, mode="constant"))
        ratios[points] = sobolev_norm(sharp, 1.0) / sobolev_norm(blurred, 1.0)
    checks.append(
        _check(
            "indicator_h1_growth",
            "The H^1 surrogate of an indicator grows with resolution relative to its mollification",
            {f"ratio_{p}": r for p, r in ratios.items()},
            ratios[grid.points] > ratios[grid.points // 2],
        )
    )
    return VerifyReport(suite="smoothing", checks=checks)


def _jump_check(ctx: RunContext, model: BoltzmannModel, indicator: Field) -> VerifyCheck:
    """Edge jump of the flow against f_0 jump * exp(-int L f ds) at the edge point.

    The gain part of the Duhamel split is continuous across the edge; its on-grid jump
    is the estimator's own error and is subtracted before comparing.
    """
    radius = ctx.config.initial.radius
    center = np.asarray(ctx.config.initial.center, dtype=np.float64)
    times = np.linspace(0.0, JUMP_HORIZON, 9)
    flow = run_flow(indicator, model, JUMP_HORIZON, ctx.config.dt, record_times=times)
    initial = edge_jump(indicator, radius, center)

    worst, raw_worst, residual = 0.0, 0.0, 0.0
    losses = []
    for t in times:
        state = flow.snapshots[float(t)]
        total = edge_jump(state.f, radius, center).amplitude
        continuous = edge_jump(state.smoothpart, radius, center).amplitude
        integral = interpolate(state.f.like(state.loss_integral), initial.edge_point)
        predicted = initial.amplitude * math.exp(-integral)
        worst = max(worst, abs(total - continuous - predicted) / abs(predicted))
        raw_worst = max(raw_worst, abs(total - predicted) / abs(predicted))
        residual = max(residual, abs(continuous) / abs(initial.amplitude))
        losses.append(interpolate(loss_rate(state.f, model.kernel, "direct"), initial.edge_point))
    independent = float(integrate.trapezoid(losses, times))
    accumulated = interpolate(flow.state.f.like(flow.state.loss_integral), initial.edge_point)
    history_gap = abs(independent - accumulated) / accumulated
    return _check(
        "singularity_damping",
        "The jump across the disk edge decays like exp(-int L f(s, v_edge) ds)",
        {
            "worst_relative_error": worst,
            "raw_worst_relative_error": raw_worst,
            "gain_part_edge_residual": residual,
            "loss_history_gap": history_gap,
        },
        worst <= 0.05 and history_gap <= 0.05,
        0.05,
    )


def suite_decomposition(ctx: RunContext) -> VerifyReport:
    cfg = ctx.config
    plan_cfg = cfg.plan or PlanConfig()
    model = build_model(ctx)
    f0 = _disk_datum(ctx)
    plan = plan_from_config(ctx, f0, model)
    times = np.linspace(plan_cfg.window_start, plan_cfg.window_end, plan_cfg.window_points)
    trees = decomposition_series(f0, model, plan, times, cfg.dt)

    remainder = [lp_norm(tree.f_r, 1.0) for tree in trees]
    smooth_h1 = [sobolev_norm(tree.f_s, 1.0) for tree in trees]
    base_h1 = [sobolev_norm(tree.base, 1.0) for tree in trees]
    smooth_min = min(float(tree.f_s.values.min()) for tree in trees)
    checks = [
        _check(
            "smooth_part_nonnegative",
            "f^S >= 0 exactly",
            {"min": smooth_min},
            smooth_min >= 0.0,
        )
    ]
    if min(remainder) > 0:
        fit = fit_exponential_decay(times, remainder)
        checks.append(
            _check(
                "remainder_decay",
                "||f^R||_1 decays exponentially in t",
                {"rate": fit.rate, "r_squared": fit.r_squared},
                fit.rate > 0 and fit.r_squared >= 0.95,
                0.95,
            )
        )
    else:
        checks.append(
            _check("remainder_decay", "||f^R||_1 decays exponentially in t", {"min": min(remainder)}, False)
        )
    # f^S tends to the Maxwellian with the moments of f_0, so its H^1 norm is the scale
    limit_h1 = sobolev_norm(maxwellian_for(f0), 1.0)
    checks.append(
        _check(
            "smooth_part_bounded",
            "The H^1 surrogate of f^S stays bounded over the window",
            {"max": max(smooth_h1), "limit": limit_h1, "base_max": max(base_h1)},
            max(smooth_h1) <= 2.0 * limit_h1,
            2.0,
        )
    )
    notes = [f"mu = {plan.mu:.3f}, node times at t = {times[-1]:g}: {plan.at(float(times[-1])).times}"]
    notes.extend(trees[0].warnings)
    return VerifyReport(suite="decomposition", checks=checks, notes=notes)


def suite_equilibrium(ctx: RunContext) -> VerifyReport:
    """Relaxation of the disk datum towards equilibrium.

    The distance is taken to a companion flow started from the Maxwellian with the
    moments of f_0: both flows share the discrete equilibrium, so the measured decay is
    not floored by the quadrature defect of Q(M, M).
    """
    model = build_model(ctx)
    f0 = _disk_datum(ctx)
    target = maxwellian_for(f0)
    times = np.arange(0.0, EQUILIBRIUM_HORIZON + 1e-9, RELAXATION_SPACING)
    flow = run_flow(f0, model, EQUILIBRIUM_HORIZON, ctx.config.dt, record_times=times)
    companion = run_flow(target, model, EQUILIBRIUM_HORIZON, ctx.config.dt, record_times=times)
    gaps = [
        flow.snapshots[float(t)].f.values - companion.snapshots[float(t)].f.values for t in times
    ]
    d = np.asarray([lp_norm(f0.like(gap), 1.0) for gap in gaps])
    drift = lp_norm(target.like(companion.state.f.values - target.values), 1.0)
    late = times >= 0.5
    increases = int(np.sum(np.diff(d[late]) > 1e-12 * d[0]))
    window = times >= 1.0
    choice = select_decay_model(times[window], d[window])
    fit = choice.exponential
    checks = [
        _check(
            "relaxation_monotone",
            "||f_t - M||_1 decreases monotonically after the initial layer",
            {"increases": increases, "samples": int(late.sum())},
            increases == 0,
        ),
        _check(
            "relaxation_rate",
            "||f_t - M||_1 tends to zero faster than any power of t",
            {
                "rate": fit.rate,
                "r_squared": fit.r_squared,
                "power_r_squared": choice.power.r_squared,
                "equilibrium_drift": drift,
            },
            fit.rate > 0 and fit.r_squared >= 0.9,
            0.9,
            notes=[
                f"preferred model: {choice.preferred}",
                "an exponential rate is stronger than the O(t^-inf) decay claimed for cut-off hard potentials",
                "equilibrium_drift is the L1 distance the discrete flow moves the Maxwellian itself",
            ],
        ),
    ]
    at_one = flow.snapshots[1.0].f

    gibbs = {}
    for name, datum in (("disk", f0), ("double_bump", double_bump(ctx.grid))):
        gibbs[name] = entropy(datum) - entropy(maxwellian_for(datum))
    checks.append(
        _check(
            "gibbs_inequality",
            "H(M_f) <= H(f) for the Maxwellian with the moments of f",
            gibbs,
            all(gap >= -1e-8 for gap in gibbs.values()),
            1e-8,
        )
    )

    k0, a0 = fit_lower_bound(at_one)
    margin = lower_bound_margin(at_one, k0, a0)
    checks.append(
        _check(
            "maxwellian_lower_bound",
            "f_t >= K_0 exp(-A_0 |v|^2) appears immediately",
            {"k0": k0, "a0": a0, "margin": margin},
            margin > 0.0,
        )
    )

    iterated = iterated_gain(target, target, target, model.kernel, model.opts)
    checks.append(
        _check(
            "iterated_gain",
            "Q+(Q+(f, f), f) is a nonnegative bounded function",
            {"min": float(iterated.values.min()), "l2": lp_norm(iterated, 2.0)},
            iterated.values.min() >= 0.0 and math.isfinite(lp_norm(iterated, 2.0)),
        )
    )
    return VerifyReport(suite="equilibrium", checks=checks)


def random_bumps(rng: np.random.Generator, grid: GridSpec) -> Field:
    values = np.zeros(grid.shape)
    coords = grid.coordinates()
    for _ in range(int(rng.integers(1, 4))):
        center = rng.uniform(-0.5, 0.5, grid.dimension) * grid.half_width
        width = rng.uniform(0.4, 1.5)
        offset = coords - center.reshape((grid.dimension,) + (1,) * grid.dimension)
        values += rng.uniform(0.2, 1.0) * np.exp(-np.sum(offset**2, axis=0) / (2.0 * width**2))
    return Field(grid, values, nonneg=True)


def random_young_exponents(rng: np.random.Generator) -> tuple[float, float, float]:
    a = rng.uniform(0.05, 1.0)
    b = rng.uniform(1.0 - a, 1.0)
    slack = a + b - 1.0
    r = math.inf if slack <= 1e-12 else 1.0 / slack
    return 1.0 / a, 1.0 / b, r


def suite_appendix(ctx: RunContext) -> VerifyReport:
    grid = ctx.grid
    rng = np.random.default_rng(ctx.seed)
    checks = []

    f, g = random_bumps(rng, grid), random_bumps(rng, grid)
    equality = weighted_young_check(f, g, 1.0, 1.0, 1.0, 0.0)
    checks.append(
        _check(
            "young_equality_case",
            "||f * g||_1 = ||f||_1 ||g||_1 for nonnegative f, g",
            {"lhs": equality.lhs, "rhs": equality.rhs},
            abs(equality.lhs - equality.rhs) <= 1e-10 * equality.rhs,
            1e-10,
        )
    )

    young_pass, worst = 0, 0.0
    for _ in range(PROPERTY_CASES):
        f, g = random_bumps(rng, grid), random_bumps(rng, grid)
        p, q, r = random_young_exponents(rng)
        result = weighted_young_check(f, g, p, q, r, rng.uniform(-2.0, 2.0))
        young_pass += result.passed
        worst = max(worst, result.ratio)
    checks.append(
        _check(
            "weighted_young",
            "||f * g||_{L^r_eta} <= (4/3)^{|eta|/2} ||f||_{L^p_|eta|} ||g||_{L^q_eta}"
            " when 1/r + 1 = 1/p + 1/q",
            {"passed": young_pass, "cases": PROPERTY_CASES, "worst_ratio": worst},
            young_pass == PROPERTY_CASES,
            1e-6,
        )
    )

    shift_pass, worst = 0, 0.0
    for _ in range(PROPERTY_CASES):
        f = random_bumps(rng, grid)
        cells = tuple(int(c) for c in rng.integers(-3, 4, grid.dimension))
        result = translation_weight_check(
            f, cells, rng.uniform(1.0, 4.0), rng.uniform(-2.0, 2.0), rng.uniform(0.0, 3.0)
        )
        shift_pass += result.passed
        worst = max(worst, result.ratio)
    checks.append(
        _check(
            "translation_weight",
            "||tau_h f||_{L^p_k} <= lambda(h)^|k| ||f||_{L^p_k}, lambda(h) = sup <v> / <v - h>",
            {"passed": shift_pass, "cases": PROPERTY_CASES, "worst_ratio": worst},
            shift_pass == PROPERTY_CASES,
            1e-12,
        )
    )
    return VerifyReport(
        suite="appendix",
        checks=checks,
        notes=[
            f"seed {ctx.seed}; translation weight k = k1 + k2 on both sides",
            "weight constants are the sharp ones for the Japanese bracket",
        ],
    )


SUITES: dict[str, Callable[[RunContext], VerifyReport]] = {
    "operators": suite_operators,
    "conservation": suite_conservation,
    "lp": suite_lp,
    "smoothing": suite_smoothing,
    "decomposition": suite_decomposition,
    "equilibrium": suite_equilibrium,
    "appendix": suite_appendix,
}


def cmd_verify(suite: str, ctx: RunContext) -> tuple[VerifyReport, Path]:
    try:
        runner = SUITES[suite]
    except KeyError as exc:
        raise VerifyError(f"Unknown suite {suite!r}; expected one of {sorted(SUITES)}") from exc
    logger.info("Suite started", extra={"suite": suite})
    report = runner(ctx)
    out = ctx.output_dir
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"verify_{suite}.json"
    path.write_text(report.model_dump_json(indent=2), encoding="utf-8")
    (out / f"verify_{suite}.txt").write_text(report.render_text() + "\n", encoding="utf-8")
    logger.info("Suite finished", extra={"suite": suite, "passed": report.passed})
    return report, path
