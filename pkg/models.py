import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from settings import DEFAULT_SEED


# ---------------------------------------------------------------------------
# Points and potential
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChartPoint3:
    u: float
    y1: float
    y2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.y1, self.y2], dtype=float)

    @classmethod
    def from_array(cls, xyz) -> "ChartPoint3":
        return cls(float(xyz[0]), float(xyz[1]), float(xyz[2]))

    @property
    def rho(self) -> float:
        """Distance to the u-axis."""
        return math.hypot(self.y1, self.y2)

    @property
    def norm(self) -> float:
        return math.sqrt(self.u * self.u + self.y1 * self.y1 + self.y2 * self.y2)

    def scaled(self, factor: float) -> "ChartPoint3":
        return ChartPoint3(factor * self.u, factor * self.y1, factor * self.y2)


@dataclass(frozen=True)
class ChartPoint4:
    base: ChartPoint3
    t: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.base.u, self.base.y1, self.base.y2, self.t], dtype=float)

    @classmethod
    def from_array(cls, coords) -> "ChartPoint4":
        return cls(ChartPoint3.from_array(coords[:3]), float(coords[3]))


class PotentialParams(BaseModel):
    """Collapse parameter, harmonic part and truncation policy of the lattice sum.

    ``h_coeffs`` holds the coefficients of h(y) = sum_k c_k y^k as ``[re, im]``
    pairs, lowest degree first.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    eps: float
    h_coeffs: List[Tuple[float, float]] = Field(default_factory=list)
    tail_tol: float = 1e-10
    exclusion_radius: Optional[float] = None
    max_terms: int = 2 ** 22
    tail_order: int = 6

    @field_validator("eps")
    @classmethod
    def _eps_range(cls, v: float) -> float:
        # eps = 1 is the unit lattice used for the rescaled potential
        if not (0.0 < v <= 1.0) or not math.isfinite(v):
            raise ValueError(f"eps must lie in (0, 1], got {v}")
        return v

    @field_validator("tail_tol")
    @classmethod
    def _tol_positive(cls, v: float) -> float:
        if not v > 0.0:
            raise ValueError("tail_tol must be positive")
        return v

    @field_validator("exclusion_radius")
    @classmethod
    def _exclusion_positive(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and not v > 0.0:
            raise ValueError("exclusion_radius must be positive")
        return v

    @field_validator("tail_order")
    @classmethod
    def _even_order(cls, v: int) -> int:
        if v < 2 or v % 2:
            raise ValueError("tail_order must be an even integer >= 2")
        return v

    @property
    def exclusion(self) -> float:
        if self.exclusion_radius is not None:
            return self.exclusion_radius
        return 1e-3 * self.eps

    @property
    def h_poly(self) -> np.ndarray:
        if not self.h_coeffs:
            return np.zeros(1, dtype=complex)
        return np.array([complex(re, im) for re, im in self.h_coeffs])

    @property
    def beta(self) -> float:
        return math.log(1.0 / self.eps) / (2.0 * math.pi)

    def with_eps(self, eps: float) -> "PotentialParams":
        data = self.model_dump()
        data["eps"] = eps
        if self.exclusion_radius is not None:
            data["exclusion_radius"] = self.exclusion_radius * eps / self.eps
        return PotentialParams(**data)


@dataclass
class PotentialValue:
    value: float
    grad: np.ndarray
    hess: np.ndarray
    err_bound: float


@dataclass(frozen=True)
class TruncationPlan:
    """Frozen truncation: number of paired terms and the period shift.

    All evaluations sharing a plan see the same finite analytic expression.
    """

    n_terms: int
    shift: int


@dataclass
class LaplacianResidual:
    analytic: float
    finite_difference: float
    fd_step: float


# ---------------------------------------------------------------------------
# Connection and metrics
# ---------------------------------------------------------------------------

class GaugeId(str, Enum):
    STRING_PLUS = "StringPlus"
    STRING_MINUS = "StringMinus"

    @property
    def sigma(self) -> float:
        """Sign in A_phi = c (u/r - sigma) dphi for the charge at the origin."""
        return -1.0 if self is GaugeId.STRING_PLUS else 1.0


@dataclass
class GaugeForm:
    A: np.ndarray
    gauge_id: GaugeId
    a_phi: float
    err_bound: float = 0.0


class MetricKind(str, Enum):
    GIBBONS_HAWKING = "GibbonsHawking"
    TAUB_NUT = "TaubNUT"
    FLAT_R3_PRODUCT = "FlatR3Product"
    FLAT_S1R2 = "FlatS1R2"
    RESCALED = "Rescaled"
    PERTURBED = "Perturbed"


@dataclass
class CurvatureResult:
    riemann: np.ndarray
    ricci: np.ndarray
    norm_rm: float
    norm_ric: float
    fd_step: float
    est_error: float
    point: Optional[ChartPoint4] = None


@dataclass
class ScanResult:
    max_norm_ric: float
    argmax: Optional[ChartPoint4]
    n_points: int
    n_failed: int = 0


@dataclass
class GaugeScanResult:
    """Worst disagreement of curvature invariants between the two string gauges."""

    max_rel_rm: float
    max_ric_diff: float
    argmax: Optional[ChartPoint4]
    n_points: int
    n_failed: int = 0


@dataclass
class SweepRow:
    eps: float
    max_norm_rm: float
    argmax_point: Optional[ChartPoint3]
    ratio_upper: Optional[float]
    ratio_lower: Optional[float]
    applicable: bool = True
    degraded: bool = False
    n_failed: int = 0
    half_max_radius: Optional[float] = None


class GridPolicy(BaseModel):
    """Near-nut sampling grid: radii in units of the bubble scale eps/beta.

    Radii are clipped to [exclusion_radius, period_fraction * eps]. Polar angles
    are measured from the u-axis and must stay away from the string.
    """

    model_config = ConfigDict(extra="forbid")

    radial_min: float = 0.02
    radial_max: float = 2.0
    n_radial: int = 8
    polar_angles: List[float] = Field(
        default_factory=lambda: [math.pi / 4, math.pi / 2, 3 * math.pi / 4]
    )
    n_azimuth: int = 2
    period_fraction: float = 0.45

    @field_validator("polar_angles")
    @classmethod
    def _off_axis(cls, v: List[float]) -> List[float]:
        for theta in v:
            if abs(math.cos(theta)) > 0.95:
                raise ValueError(f"polar angle {theta} is too close to the string axis")
        return v


# ---------------------------------------------------------------------------
# Collapse limits
# ---------------------------------------------------------------------------

class Region(str, Enum):
    BUBBLE = "Bubble"
    NECK = "Neck"
    OUTER = "Outer"


class RegionThresholds(BaseModel):
    model_config = ConfigDict(extra="forbid")

    R0: float = 1.0
    neck_lower: float = 1.5
    neck_upper: float = 0.75
    r0: float = 0.8
    C0: float = 4.0

    @model_validator(mode="after")
    def _ordered(self) -> "RegionThresholds":
        if not self.R0 < self.neck_lower:
            raise ValueError("R0 must be below the neck lower threshold")
        if not self.neck_upper < self.r0 <= self.C0:
            raise ValueError("need neck_upper < r0 <= C0")
        return self


@dataclass
class RegionCase:
    region: Region
    eps: float
    beta: float
    d: float
    r_excision: Optional[float]
    gamma0sq: Optional[float] = None
    gammasq: Optional[float] = None


@dataclass
class ConvergenceReport:
    eps: float
    beta: float
    sup_dev: float
    excised: str
    aux: Dict[str, float] = field(default_factory=dict)


@dataclass
class StabilityVerdict:
    passed: bool
    D: List[float]
    rescaled_sup: List[float]
    fd_error: List[float]
    reason: str = ""


@dataclass
class HermitianGap:
    n: int
    trace_slack: float
    det_slack: float
    dist_sq: float


# ---------------------------------------------------------------------------
# Experiment configuration and reports
# ---------------------------------------------------------------------------

class ExperimentName(str, Enum):
    POTENTIAL_IDENTITY = "PotentialIdentity"
    HARMONICITY = "Harmonicity"
    CONNECTION = "Connection"
    RICCI_FLAT = "RicciFlat"
    CURVATURE_SWEEP = "CurvatureSweep"
    REGION1 = "Region1"
    REGION2 = "Region2"
    REGION3 = "Region3"
    LIMIT_STABILITY = "LimitStability"
    MATRIX_LEMMA = "MatrixLemma"


class EpsSchedule(BaseModel):
    """Either explicit ``values`` or log-scale indices ``m`` with eps = exp(-2 pi m)."""

    model_config = ConfigDict(extra="forbid")

    values: Optional[List[float]] = None
    m: Optional[List[float]] = None

    @model_validator(mode="after")
    def _one_source(self) -> "EpsSchedule":
        if (self.values is None) == (self.m is None):
            raise ValueError("eps_schedule needs exactly one of 'values' or 'm'")
        eps = self.resolve()
        if not eps:
            raise ValueError("eps_schedule is empty")
        for e in eps:
            if not 0.0 < e <= 1.0:
                raise ValueError(f"schedule value {e} outside (0, 1]")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("eps_schedule must be strictly decreasing")
        return self

    def resolve(self) -> List[float]:
        if self.values is not None:
            return list(self.values)
        return [math.exp(-2.0 * math.pi * m) for m in self.m]


class GridSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_points: int = 100
    min_distance: float = 0.2
    policy: GridPolicy = Field(default_factory=GridPolicy)
    radii: List[float] = Field(default_factory=lambda: [0.1, 0.2, 0.4, 0.7, 1.0])
    n_directions: int = 6


class ExperimentOptions(BaseModel):
    """Knobs that only some experiments read; defaults match the acceptance runs."""

    model_config = ConfigDict(extra="forbid")

    fd_step: Optional[float] = None
    samples: int = 100
    dimension: int = 2
    d_exponent: float = 0.25
    kappa: float = 1.0
    perturbation: str = "exponential"
    k_max: int = 2
    guard: float = 0.1
    acceptance: float = 0.05
    spread_limit: float = 10.0
    ricci_limit: float = 1e-5
    control_coeff: float = 0.01
    include_control: bool = True
    include_taub_nut: bool = True

    @field_validator("perturbation")
    @classmethod
    def _known_perturbation(cls, v: str) -> str:
        if v not in ("exponential", "sqrt", "none"):
            raise ValueError("perturbation must be 'exponential', 'sqrt' or 'none'")
        return v

    @field_validator("acceptance", "spread_limit", "ricci_limit", "guard")
    @classmethod
    def _positive(cls, v: float) -> float:
        if not v > 0.0:
            raise ValueError("tolerances must be positive")
        return v


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    experiment: ExperimentName
    params: PotentialParams = Field(default_factory=lambda: PotentialParams(eps=0.5))
    eps_schedule: EpsSchedule = Field(default_factory=lambda: EpsSchedule(values=[0.5]))
    grid: GridSpec = Field(default_factory=GridSpec)
    thresholds: RegionThresholds = Field(default_factory=RegionThresholds)
    options: ExperimentOptions = Field(default_factory=ExperimentOptions)
    seed: int = DEFAULT_SEED
    output_dir: Optional[str] = None


RowValue = Union[float, int, str, bool, None]


class Verdict(BaseModel):
    name: str
    passed: bool
    threshold: Optional[float] = None
    observed: Optional[float] = None
    detail: str = ""

    @property
    def label(self) -> str:
        return "PASS" if self.passed else "FAIL"


class Provenance(BaseModel):
    config_hash: str
    code_version: str
    seed: int


class ReportBundle(BaseModel):
    experiment: ExperimentName
    columns: List[str]
    rows: List[Dict[str, RowValue]]
    verdicts: List[Verdict]
    provenance: Provenance
    series: Dict[str, List[Optional[float]]] = Field(default_factory=dict)
    wall_time: Optional[float] = Field(default=None, exclude=True)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)


def to_row_value(x: Any) -> RowValue:
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x
