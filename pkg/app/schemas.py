from __future__ import annotations

from datetime import datetime
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, computed_field, model_validator


class ORMBase(BaseModel):
    model_config = ConfigDict(from_attributes=True)


class ConfigBase(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridConfig(ConfigBase):
    dimension: int = Field(default=2, description="Velocity dimension N (2 or 3)")
    points: int = Field(default=64, ge=8, description="Points per axis (power of two)")
    half_width: float = Field(default=8.0, gt=0, description="Box half-width R")

    @model_validator(mode="after")
    def check_grid(self) -> "GridConfig":
        if self.dimension not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        if self.points & (self.points - 1):
            raise ValueError("points must be a power of two")
        return self


class KernelConfig(ConfigBase):
    kinetic: Literal["power", "capped"] = "power"
    gamma: float = Field(default=1.0, ge=0, lt=2, description="gamma in [0, 2)")
    angular: Literal["constant", "truncated"] = "constant"
    normalization: float = Field(
        default=1.0, gt=0, description="Angular mass ||b||_{L1(S^{N-1})}"
    )
    theta_b: Optional[float] = Field(
        default=None, gt=0, description="Frontal cut of the truncated angular part"
    )
    validation: bool = Field(
        default=False, description="Allow the gamma = 0 constant kernel"
    )
    split_m: int = Field(default=16, ge=4, description="Angular mollification parameter")
    split_n: int = Field(default=16, ge=4, description="Kinetic mollification parameter")
    sigma_nodes: int = Field(
        default=32, ge=4, description="Angles (N=2) or per-direction nodes (N=3)"
    )
    loss_mode: Literal["direct", "fft"] = "fft"

    @model_validator(mode="after")
    def check_validation(self) -> "KernelConfig":
        if self.gamma == 0 and not self.validation:
            raise ValueError("gamma = 0 requires validation = true")
        if self.angular == "truncated" and self.theta_b is None:
            raise ValueError("truncated angular part requires theta_b")
        return self


class InitialDatumConfig(ConfigBase):
    kind: Literal["maxwellian", "disk", "double_bump", "snapshot", "bkw"] = "disk"
    radius: float = Field(default=2.0, gt=0, description="Disk radius")
    center: list[float] = Field(default_factory=lambda: [0.0, 0.0])
    temperature: float = Field(default=1.0, gt=0)
    mass: float = Field(default=1.0, gt=0)
    separation: float = Field(
        default=2.0, ge=0, description="Distance between the two bumps along v1"
    )
    width: float = Field(default=0.6, gt=0, description="Standard deviation of each bump")
    bkw_time: float = Field(
        default=0.0, ge=0, description="Time after the earliest nonnegative BKW profile"
    )
    path: Optional[str] = None

    @model_validator(mode="after")
    def check_snapshot(self) -> "InitialDatumConfig":
        if self.kind == "snapshot" and not self.path:
            raise ValueError("snapshot initial datum requires path")
        return self


class PlanConfig(ConfigBase):
    tau: float = Field(default=2.0, gt=0, description="Decomposition start time")
    depth: int = Field(default=3, ge=1, description="Tree depth n")
    mu: Union[float, Literal["auto"]] = "auto"
    window_start: float = Field(default=2.0, gt=0)
    window_end: float = Field(default=6.0, gt=0)
    window_points: int = Field(default=5, ge=2)

    @model_validator(mode="after")
    def check_mu(self) -> "PlanConfig":
        if isinstance(self.mu, float) and not 0.0 < self.mu < 1.0:
            raise ValueError("mu must lie in (0, 1)")
        if self.window_end <= self.window_start:
            raise ValueError("window_end must exceed window_start")
        return self


class RunConfig(ConfigBase):
    grid: GridConfig = Field(default_factory=GridConfig)
    kernel: KernelConfig = Field(default_factory=KernelConfig)
    initial: InitialDatumConfig = Field(default_factory=InitialDatumConfig)
    plan: Optional[PlanConfig] = None
    integrator: Literal["exponential", "rk4"] = "exponential"
    dt: float = Field(default=0.05, gt=0)
    t_end: float = Field(default=1.0, ge=0)
    stride: int = Field(default=1, ge=1)
    snapshot_times: list[float] = Field(default_factory=list)
    output_dir: Optional[str] = None
    seed: Optional[int] = None

    @model_validator(mode="after")
    def check_center(self) -> "RunConfig":
        if len(self.initial.center) != self.grid.dimension:
            if self.initial.center == [0.0, 0.0]:
                self.initial.center = [0.0] * self.grid.dimension
            else:
                raise ValueError("initial.center must have one entry per dimension")
        return self


class DiagnosticsRow(BaseModel):
    t: float
    mass: float
    momentum: list[float]
    energy: float
    entropy: float
    l2: float
    l2_weighted: float
    h1: float
    min_value: float
    l1_to_maxwellian: float
    dt: Optional[float] = None
    extra: dict[str, float] = Field(default_factory=dict)

    def header(self) -> list[str]:
        columns = ["t", "mass"]
        columns += [f"momentum_{i}" for i in range(len(self.momentum))]
        columns += [
            "energy",
            "entropy",
            "l2",
            "l2_weighted",
            "h1",
            "min_value",
            "l1_to_maxwellian",
            "dt",
        ]
        return columns + sorted(self.extra)

    def csv_values(self) -> list[str]:
        values = [self.t, self.mass, *self.momentum]
        values += [
            self.energy,
            self.entropy,
            self.l2,
            self.l2_weighted,
            self.h1,
            self.min_value,
            self.l1_to_maxwellian,
        ]
        cells = [repr(float(v)) for v in values]
        cells.append("" if self.dt is None else repr(float(self.dt)))
        cells += [repr(float(self.extra[key])) for key in sorted(self.extra)]
        return cells


class VerifyCheck(BaseModel):
    name: str
    claim: str = Field(..., description="Statement of the property being checked")
    measured: dict[str, float] = Field(default_factory=dict)
    tolerance: Optional[float] = None
    passed: bool
    notes: list[str] = Field(default_factory=list)


class VerifyReport(BaseModel):
    suite: str
    checks: list[VerifyCheck] = Field(default_factory=list)
    notes: list[str] = Field(default_factory=list)

    @computed_field
    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def render_text(self) -> str:
        lines = [f"suite {self.suite}: {'PASS' if self.passed else 'FAIL'}"]
        for check in self.checks:
            measured = ", ".join(f"{k}={v:.6g}" for k, v in check.measured.items())
            tol = "" if check.tolerance is None else f" (tol {check.tolerance:.3g})"
            status = "pass" if check.passed else "FAIL"
            lines.append(f"  [{status}] {check.name}: {measured}{tol}")
            lines.append(f"         {check.claim}")
            lines.extend(f"         note: {note}" for note in check.notes)
        lines.extend(f"note: {note}" for note in self.notes)
        return "\n".join(lines)


class NodeRecord(BaseModel):
    index: int
    time: float
    discarded_l1: float = Field(..., description="L1 norm of the discarded transported part")
    discarded_l2: float
    restart_l1: float = Field(..., description="L1 norm of the new initial datum")


class DecayFitRead(BaseModel):
    rate: float
    prefactor: float
    r_squared: float


class DecompositionRecord(BaseModel):
    time: float
    node_times: list[float]
    remainder_l1: float
    smooth_h1: float
    base_h1: float
    smooth_min: float
    nodes: list[NodeRecord] = Field(default_factory=list)


class DecompositionReport(BaseModel):
    tau: float
    depth: int
    mu: float
    c_stab: Optional[float] = None
    k_prime: Optional[float] = None
    mu_admissible: Optional[bool] = None
    records: list[DecompositionRecord] = Field(default_factory=list)
    remainder_fit: Optional[DecayFitRead] = None
    warnings: list[str] = Field(default_factory=list)


class CheckRecordRead(ORMBase):
    id: int
    run_id: int
    name: str
    claim: str
    passed: bool
    measured_json: str


class RunRecordRead(ORMBase):
    id: int
    command: str
    suite: Optional[str] = None
    status: str
    output_dir: Optional[str] = None
    config_text: str
    notes: Optional[str] = None
    created_at: datetime
    checks: list[CheckRecordRead] = Field(default_factory=list)


class VerifyRequest(BaseModel):
    config_text: str = Field(
        default="", description="Run configuration in key = value form"
    )
