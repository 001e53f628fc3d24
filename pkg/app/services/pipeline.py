import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from app.config import Settings, render_config
from app.schemas import (
    DecayFitRead,
    DecompositionRecord,
    DecompositionReport,
    DiagnosticsRow,
    PlanConfig,
    RunConfig,
)
from app.services import bkw
from app.services.analysis import diagnostics_row, entropy, lp_norm, sobolev_norm
from app.services.collision import BoltzmannModel, OperatorOptions, sigma_quadrature
from app.services.grid import Field, GridSpec, make_grid, write_snapshot
from app.services.initial import build_initial
from app.services.kernel import (
    CollisionKernel,
    KernelError,
    angular_mass,
    angular_tail_rate,
    gain_exponent,
    holder_constant,
    kernel_from_config,
)
from app.services.solver import (
    DecompositionPlan,
    SolverError,
    SolverState,
    auto_plan,
    decomposition_series,
    fit_exponential_decay,
    run_flow,
)

logger = logging.getLogger(__name__)

ENTROPY_SLACK = 1e-8


@dataclass
class RunContext:
    """A validated run configuration plus the process-level knobs that do not change results."""

    config: RunConfig
    output_dir: Path
    threads: int = 1
    block_size: int = 256
    seed: int = 20240917

    @property
    def grid(self) -> GridSpec:
        cfg = self.config.grid
        return make_grid(cfg.dimension, cfg.points, cfg.half_width)


def build_context(
    config: RunConfig,
    settings: Settings,
    out: str | Path | None = None,
    threads: int | None = None,
    seed: int | None = None,
) -> RunContext:
    """CLI flags override the config file, which overrides settings."""
    output_dir = out or config.output_dir or settings.output_dir
    if seed is None:
        seed = config.seed if config.seed is not None else settings.seed
    return RunContext(
        config=config,
        output_dir=Path(output_dir),
        threads=threads or settings.threads,
        block_size=settings.block_size,
        seed=seed,
    )


def build_model(ctx: RunContext, kernel: CollisionKernel | None = None) -> BoltzmannModel:
    cfg = ctx.config
    if kernel is None:
        kernel = kernel_from_config(cfg.kernel, cfg.grid.dimension)
    opts = OperatorOptions(
        quadrature=sigma_quadrature(cfg.grid.dimension, cfg.kernel.sigma_nodes),
        loss_mode=cfg.kernel.loss_mode,
        threads=ctx.threads,
        block_size=ctx.block_size,
    )
    return BoltzmannModel(kernel=kernel, opts=opts)


@dataclass
class RunResult:
    output_dir: Path
    rows: list[DiagnosticsRow] = field(default_factory=list)
    final: Field | None = None
    artifacts: list[Path] = field(default_factory=list)
    entropy_violations: int = 0
    bkw_error: float | None = None
    notes: list[str] = field(default_factory=list)


class DiagnosticsRecorder:
    """Collects one DiagnosticsRow per ``stride`` accepted steps and watches the H functional."""

    def __init__(self, gamma: float, stride: int):
        self.gamma = gamma
        self.stride = stride
        self.rows: list[DiagnosticsRow] = []
        self.entropy_violations = 0
        self._last_entropy: float | None = None

    def initial(self, f: Field, t: float) -> None:
        row = diagnostics_row(f, t, self.gamma)
        self._last_entropy = row.entropy
        self.rows.append(row)

    def __call__(self, previous: SolverState, current: SolverState) -> None:
        dt = current.t - previous.t
        h = entropy(current.f)
        if self._last_entropy is not None and h > self._last_entropy + ENTROPY_SLACK:
            self.entropy_violations += 1
            logger.warning(
                "Entropy increased over a step",
                extra={"t": current.t, "increase": h - self._last_entropy},
            )
        self._last_entropy = h
        if current.steps % self.stride == 0:
            self.rows.append(diagnostics_row(current.f, current.t, self.gamma, dt=dt))

    def close(self, state: SolverState) -> None:
        if not self.rows or self.rows[-1].t != state.t:
            self.rows.append(diagnostics_row(state.f, state.t, self.gamma))


def write_series(rows: list[DiagnosticsRow], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        if rows:
            writer.writerow(rows[0].header())
        for row in rows:
            writer.writerow(row.csv_values())
    return path


def cmd_run(ctx: RunContext) -> RunResult:
    cfg = ctx.config
    grid = ctx.grid
    model = build_model(ctx)
    f0 = build_initial(cfg.initial, grid)
    out = ctx.output_dir
    out.mkdir(parents=True, exist_ok=True)
    result = RunResult(output_dir=out)
    (out / "config.txt").write_text(render_config(cfg), encoding="utf-8")

    logger.info(
        "Run started",
        extra={"points": grid.points, "dimension": grid.dimension, "t_end": cfg.t_end},
    )
    recorder = DiagnosticsRecorder(model.kernel.gamma, cfg.stride)
    recorder.initial(f0, 0.0)
    record_times = [t for t in cfg.snapshot_times if 0.0 <= t <= cfg.t_end]
    flow = run_flow(
        f0,
        model,
        cfg.t_end,
        cfg.dt,
        record_times=record_times,
        integrator=cfg.integrator,
        callback=recorder,
    )
    recorder.close(flow.state)
    result.rows = recorder.rows
    result.final = flow.state.f
    result.entropy_violations = recorder.entropy_violations
    if recorder.entropy_violations:
        result.notes.append(f"Entropy increased on {recorder.entropy_violations} step(s)")

    result.artifacts.append(write_series(result.rows, out / "diagnostics.csv"))
    for index, t in enumerate(sorted(set(record_times))):
        path = out / f"snapshot_{index:03d}.txt"
        result.artifacts.append(write_snapshot(flow.snapshots[float(t)].f, path, t))
    result.artifacts.append(write_snapshot(flow.state.f, out / "final.txt", flow.state.t))

    if cfg.initial.kind == "bkw":
        start = bkw.start_time(grid.dimension) + cfg.initial.bkw_time
        exact = bkw.bkw_field(grid, start + flow.state.t)
        error = flow.state.f.like(flow.state.f.values - exact.values)
        result.bkw_error = float(np.abs(error.values).max())
        result.artifacts.append(write_snapshot(error, out / "bkw_error.txt", flow.state.t))
        result.notes.append(f"L-infinity error against the similarity solution: {result.bkw_error:.3e}")

    logger.info("Run finished", extra={"steps": flow.state.steps, "t": flow.state.t})
    return result


def _decay_fit(times, values) -> DecayFitRead | None:
    if len(times) < 2 or min(values) <= 0:
        return None
    fit = fit_exponential_decay(times, values)
    return DecayFitRead(rate=fit.rate, prefactor=fit.prefactor, r_squared=fit.r_squared)


@dataclass
class DecompositionResult:
    report: DecompositionReport
    artifacts: list[Path] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)


def plan_from_config(ctx: RunContext, f0: Field, model: BoltzmannModel) -> DecompositionPlan:
    plan_cfg = ctx.config.plan or PlanConfig()
    if plan_cfg.window_start < plan_cfg.tau:
        raise SolverError(
            f"Decomposition window starts at {plan_cfg.window_start} before tau = {plan_cfg.tau}"
        )
    if plan_cfg.mu == "auto":
        return auto_plan(
            f0,
            model,
            t=plan_cfg.window_end,
            tau=plan_cfg.tau,
            depth=plan_cfg.depth,
            dt=ctx.config.dt,
            pilot_time=min(1.0, plan_cfg.tau),
        )
    return DecompositionPlan(t=plan_cfg.window_end, tau=plan_cfg.tau, depth=plan_cfg.depth, mu=plan_cfg.mu)


def cmd_decompose(ctx: RunContext) -> DecompositionResult:
    cfg = ctx.config
    plan_cfg = cfg.plan or PlanConfig()
    grid = ctx.grid
    model = build_model(ctx)
    f0 = build_initial(cfg.initial, grid)
    plan = plan_from_config(ctx, f0, model)
    times = np.linspace(plan_cfg.window_start, plan_cfg.window_end, plan_cfg.window_points)
    trees = decomposition_series(f0, model, plan, times, cfg.dt)

    records = []
    for t, tree in zip(times, trees):
        records.append(
            DecompositionRecord(
                time=float(t),
                node_times=plan.at(float(t)).times,
                remainder_l1=lp_norm(tree.f_r, 1.0),
                smooth_h1=sobolev_norm(tree.f_s, 1.0),
                base_h1=sobolev_norm(tree.base, 1.0),
                smooth_min=float(tree.f_s.values.min()),
                nodes=tree.nodes,
            )
        )
    report = DecompositionReport(
        tau=plan.tau,
        depth=plan.depth,
        mu=plan.mu,
        c_stab=plan.c_stab,
        k_prime=plan.k_prime,
        mu_admissible=plan.mu_admissible,
        records=records,
        remainder_fit=_decay_fit([r.time for r in records], [r.remainder_l1 for r in records]),
        warnings=trees[0].warnings if trees else [],
    )
    out = ctx.output_dir
    out.mkdir(parents=True, exist_ok=True)
    result = DecompositionResult(report=report)
    last = trees[-1]
    result.artifacts.append(write_snapshot(last.f_s, out / "smooth.txt", float(times[-1])))
    result.artifacts.append(write_snapshot(last.f_r, out / "remainder.txt", float(times[-1])))
    report_path = out / "decomposition.json"
    report_path.write_text(report.model_dump_json(indent=2), encoding="utf-8")
    result.artifacts.append(report_path)
    if report.remainder_fit is None:
        result.notes.append("Remainder norm not positive on the whole window; no decay fit")
    logger.info("Decomposition finished", extra={"mu": plan.mu, "records": len(records)})
    return result


@dataclass
class OracleResult:
    rows: list[bkw.BkwRow]
    radii: tuple[float, ...]
    max_moment_defect: float
    path: Path | None = None


def cmd_oracle(ctx: RunContext, samples: int = 11) -> OracleResult:
    dimension = ctx.config.grid.dimension
    start = bkw.start_time(dimension) + ctx.config.initial.bkw_time
    times = start + np.linspace(0.0, max(ctx.config.t_end, 1.0), samples)
    radii = tuple(float(r) for r in np.linspace(0.0, 4.0, 9))
    rows = bkw.bkw_table(times, dimension, radii)
    defect = max(abs(row.fourth_moment - row.fourth_moment_ode) for row in rows)

    out = ctx.output_dir
    out.mkdir(parents=True, exist_ok=True)
    path = out / "bkw_table.csv"
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(
            ["t", "parameter", "fourth_moment", "fourth_moment_ode"] + [f"f_r{r:g}" for r in radii]
        )
        for row in rows:
            writer.writerow(
                [repr(row.t), repr(row.parameter), repr(row.fourth_moment), repr(row.fourth_moment_ode)]
                + [repr(v) for v in row.values]
            )
    return OracleResult(rows=rows, radii=radii, max_moment_defect=defect, path=path)


TAIL_EPSILONS = (0.02, 0.04, 0.08, 0.16)


def cmd_kernel_info(ctx: RunContext) -> dict:
    cfg = ctx.config
    dimension = cfg.grid.dimension
    kernel = kernel_from_config(cfg.kernel, dimension)
    mass = angular_mass(kernel)
    tail = angular_tail_rate(kernel, TAIL_EPSILONS)
    info: dict = {
        "dimension": dimension,
        "kinetic": cfg.kernel.kinetic,
        "gamma": kernel.gamma,
        "angular": cfg.kernel.angular,
        "angular_mass": mass,
        "tail_rate": {
            "c_b": tail.c_b,
            "delta": tail.delta if math.isfinite(tail.delta) else "inf",
            "r_squared": tail.r_squared if math.isfinite(tail.r_squared) else None,
        },
        "k_b": mass * kernel.k_phi if kernel.k_phi is not None else None,
        "gain_exponents": {
            str(p): {
                "corollary": gain_exponent(p, dimension, "corollary"),
                "theorem": gain_exponent(p, dimension, "theorem"),
            }
            for p in (1.5, 2.0, 4.0)
        },
    }
    try:
        info["holder_constant"] = holder_constant(kernel)
    except KernelError as exc:
        info["holder_constant"] = None
        info["notes"] = [str(exc)]
    return info
