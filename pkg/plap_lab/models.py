"""Pydantic records for plap-lab: solver options, model parameters, reports, run config.

Array-carrying objects (meshes, fields, barrier sets, solution pairs) are frozen
dataclasses next to the code that builds them; everything that is configured
from a file or serialized into a report lives here.
"""

from __future__ import annotations

from enum import Enum
from typing import Any, Callable, Literal

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    computed_field,
    field_validator,
    model_validator,
)

Pair = tuple[float, float]

# f_i(x, s, t) on numpy arrays; x is an (n, dim) coordinate array or None.
Reaction = Callable[[Any, Any, Any], Any]


class Family(str, Enum):
    """Built-in reaction families."""

    EXAMPLE_COUPLED = "example_coupled"
    EXAMPLE_DECOUPLED = "example_decoupled"
    EXAMPLE_ODD = "example_odd"
    CUSTOM = "custom"


class Coupling(str, Enum):
    """Whether each reaction carries the sign of the other component."""

    SIGN_COUPLED = "sign_coupled"
    DECOUPLED = "decoupled"


class BoxKind(str, Enum):
    """Order interval that constrains a system solve."""

    POSITIVE = "positive"
    NEGATIVE = "negative"
    NODAL = "nodal"


class SignKind(str, Enum):
    """Sign classes of a solution pair."""

    POSITIVE = "positive"
    NEGATIVE = "negative"
    NODAL_SYNCHRONIZED = "nodal_synchronized"
    NODAL_OTHER = "nodal_other"
    DEGENERATE = "degenerate"


class SolverOpts(BaseModel):
    """Tolerances and budgets shared by the scalar and system solvers."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    tol_residual: float = Field(default=1e-9, gt=0)
    max_newton_iters: int = Field(default=100, ge=1)
    max_picard_iters: int = Field(default=200, ge=1)
    jacobian_floor: float = Field(
        default=1e-8,
        gt=0,
        description="Relative floor kappa/max|grad u| regularizing |grad u|^(p-2)",
    )
    line_search_shrink: float = Field(default=0.5, gt=0, lt=1)
    tol_outer: float = Field(default=1e-10, gt=0)
    accept_tol: float = Field(default=1e-6, gt=0)
    singular_guard: float | None = Field(
        default=None,
        gt=0,
        description="Exclusion radius in |u| for unregularized residuals; None means 10*h",
    )
    max_min_iters: int = Field(default=2000, ge=1)
    sign_tol_rel: float = Field(default=1e-8, gt=0)

    @classmethod
    def for_dimension(cls, dim: int, **overrides: Any) -> SolverOpts:
        """Defaults for a 1D or 2D mesh, with explicit overrides applied last."""
        base: dict[str, Any] = {}
        if dim == 2:
            base = {"tol_residual": 1e-7, "accept_tol": 1e-4}
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)


class ModelParams(BaseModel):
    """Exponents, constants and reaction closures of a singular system.

    The reactions are f_i(x, s, t) = (a_i + b_i sgn(w_i)) (|s|^alpha_i + |t|^beta_i)
    with w_i either s or t, unless explicit closures are supplied in ``f``.
    """

    model_config = ConfigDict(frozen=True, extra="forbid", arbitrary_types_allowed=True)

    family: Family = Family.CUSTOM
    p: Pair = (2.0, 2.0)
    alpha: Pair
    beta: Pair
    alpha_hat: Pair
    beta_hat: Pair
    M: Pair
    m: Pair
    eta: Pair = (1.0, 1.0)
    coupling: Coupling = Coupling.SIGN_COUPLED
    sign_offset: Pair = (0.5, 0.5)
    sign_gain: Pair = (1.0, 1.0)
    sign_source: tuple[Literal["s", "t"], Literal["s", "t"]] = ("t", "s")
    f: tuple[Reaction, Reaction] | None = Field(default=None, exclude=True, repr=False)


class InequalityCheck(BaseModel):
    """Outcome of one nodewise inequality, with its worst margin."""

    name: str
    relation: str
    worst_margin: float
    passed: bool
    worst_node: int | None = None


class HypothesisCheck(BaseModel):
    """Outcome of one structural hypothesis on the reactions."""

    name: str
    passed: bool
    detail: str = ""
    component: int | None = None
    witness: tuple[float, float, float] | None = Field(
        default=None,
        description="(x, s, t) sample at which the check failed",
    )


class HypothesisReport(BaseModel):
    """All hypothesis checks for one model."""

    checks: list[HypothesisCheck] = Field(default_factory=list)

    @computed_field
    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def get(self, name: str) -> HypothesisCheck | None:
        for c in self.checks:
            if c.name == name:
                return c
        return None

    def failed_names(self) -> set[str]:
        return {c.name for c in self.checks if not c.passed}


class BarrierReport(BaseModel):
    """Sub/supersolution and comparability checks for one barrier set."""

    C: float
    c: float
    delta: float
    checks: list[InequalityCheck] = Field(default_factory=list)

    @computed_field
    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def worst(self) -> InequalityCheck | None:
        failing = [c for c in self.checks if not c.passed]
        pool = failing or self.checks
        return min(pool, key=lambda c: c.worst_margin) if pool else None


class OppositeSignTest(BaseModel):
    """Test-function identity for a pair of opposite constant sign.

    For the component that is nonpositive, ``gradient_energy`` is the integral of
    |grad u_i^-|^p_i and ``reaction_pairing`` is minus the integral of f_i u_i^-.
    A solution needs both to agree; a negative pairing against a positive
    energy is a contradiction.
    """

    component: int
    gradient_energy: float
    reaction_pairing: float
    fired: bool


class SignClass(BaseModel):
    """Sign classification of a solution pair."""

    kind: SignKind
    weak_margin: float | None = Field(
        default=None, description="min over nodes and components of u_i - u_lo_i (signed side)"
    )
    strict_margin: float | None = Field(
        default=None, description="min over interior nodes of (u_i - u_lo_i) / d, signed side"
    )
    sync_defect: float
    changes_sign: tuple[bool, bool]
    tol: float
    opposite_sign: OppositeSignTest | None = None


class SmallSet(BaseModel):
    """Measure of {|u_i| <= mu} for both components."""

    mu: float
    measure: Pair


class RungDiagnostics(BaseModel):
    """Per-rung record of a continuation."""

    n: int
    eps: float
    residual: Pair
    converged: bool
    cauchy_gap: float | None = None
    small_sets: list[SmallSet] = Field(default_factory=list)
    min_abs_interior: Pair
    c1_norm: Pair
    message: str = ""


class ContinuationDiagnostics(BaseModel):
    """Diagnostics of a whole epsilon ladder."""

    rungs: list[RungDiagnostics] = Field(default_factory=list)
    failed_rung: int | None = None

    @property
    def cauchy_gaps(self) -> list[float]:
        return [r.cauchy_gap for r in self.rungs if r.cauchy_gap is not None]


class BranchSummary(BaseModel):
    """Serializable outcome of one branch continuation."""

    label: BoxKind
    converged: bool
    failed_rung: int | None = None
    limit_residual: Pair | None = None
    classification: SignClass | None = None
    expected: list[SignKind] = Field(default_factory=list)
    diagnostics: ContinuationDiagnostics = Field(default_factory=ContinuationDiagnostics)

    @computed_field
    @property
    def passed(self) -> bool:
        return (
            self.converged
            and self.classification is not None
            and self.classification.kind in self.expected
        )


class EigenSummary(BaseModel):
    """Header written next to an eigenfunction CSV."""

    p: float
    lam: float = Field(serialization_alias="lambda")
    c0: float
    iterations: int


class VerificationReport(BaseModel):
    """Consolidated verification rollup."""

    hypotheses: HypothesisReport
    allowed_hypothesis_failures: list[str] = Field(default_factory=list)
    barriers: BarrierReport | None = None
    homotopy_bounds: list[InequalityCheck] = Field(default_factory=list)
    branches: dict[str, BranchSummary] = Field(default_factory=dict)
    errors: list[str] = Field(default_factory=list)

    @computed_field
    @property
    def passed(self) -> bool:
        hyp_ok = self.hypotheses.failed_names() <= set(self.allowed_hypothesis_failures)
        bar_ok = self.barriers is not None and self.barriers.passed
        bounds_ok = all(c.passed for c in self.homotopy_bounds)
        branches_ok = bool(self.branches) and all(b.passed for b in self.branches.values())
        return hyp_ok and bar_ok and bounds_ok and branches_ok and not self.errors


# --- run configuration -----------------------------------------------------


class DomainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["interval", "rectangle"] = "interval"
    n: int | None = Field(default=256, ge=4)
    nx: int | None = Field(default=None, ge=4)
    ny: int | None = Field(default=None, ge=4)

    @model_validator(mode="after")
    def _sizes_match_kind(self) -> DomainConfig:
        if self.kind == "rectangle" and (self.nx is None or self.ny is None):
            raise ValueError("rectangle domains need nx and ny")
        if self.kind == "interval" and self.n is None:
            raise ValueError("interval domains need n")
        return self

    @property
    def dimension(self) -> int:
        return 1 if self.kind == "interval" else 2


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    family: Family = Family.EXAMPLE_COUPLED
    p: Pair = (2.0, 2.0)
    alpha: Pair = (-0.5, 0.5)
    beta: Pair = (0.5, -0.5)
    alpha_hat: Pair | None = None
    beta_hat: Pair | None = None
    eta: Pair = (1.0, 1.0)
    sign_offset: Pair = (0.5, 0.5)
    sign_gain: Pair = (1.0, 1.0)
    sign_source: tuple[Literal["s", "t"], Literal["s", "t"]] = ("t", "s")

    @field_validator("p")
    @classmethod
    def _p_above_one(cls, v: Pair) -> Pair:
        if min(v) <= 1.0:
            raise ValueError(f"exponents p must exceed 1, got {v}")
        return v


class SolverConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    tol_residual: float | None = None
    max_newton_iters: int | None = None
    max_picard_iters: int | None = None
    jacobian_floor: float | None = None
    line_search_shrink: float | None = None
    tol_outer: float | None = None
    accept_tol: float | None = None
    singular_guard: float | None = None
    max_min_iters: int | None = None


class RunSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    delta: float = Field(default=0.1, gt=0, lt=0.5)
    ladder_ns: list[int] = Field(default_factory=lambda: [4, 8, 16, 32, 64])
    seed: int = 0
    out: str = "lab-out"

    @field_validator("ladder_ns")
    @classmethod
    def _ladder_increasing(cls, v: list[int]) -> list[int]:
        if not v or v[0] < 2 or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError(f"ladder_ns must be strictly increasing integers >= 2, got {v}")
        return v


class RunConfig(BaseModel):
    """Top-level configuration of a CLI run."""

    model_config = ConfigDict(extra="forbid")

    domain: DomainConfig = Field(default_factory=DomainConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    run: RunSection = Field(default_factory=RunSection)

    def solver_opts(self) -> SolverOpts:
        return SolverOpts.for_dimension(self.domain.dimension, **self.solver.model_dump())
