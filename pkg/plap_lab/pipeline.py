"""Command bodies behind the ``lab`` CLI: eigen solves, branch continuations, verification.

Each ``run_*`` function takes a validated RunConfig and a RunStore, writes its
artifacts and returns the records the CLI summarizes. Exceptions propagate
to the CLI, which maps them to exit codes.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .barriers import BarrierSet, calibrate_C, verify_sub_super
from .config import build_mesh, build_model, thread_cap
from .eigen import Eigenpair, principal_eigenpair
from .errors import CalibrationFailure, ConvergenceFailure, InvalidArgument
from .mesh_domain import (
    BoundaryLayer,
    DistanceField,
    Mesh,
    boundary_layer,
    distance_field,
    mesh_frame,
)
from .models import (
    BoxKind,
    BranchSummary,
    Coupling,
    ModelParams,
    RunConfig,
    SolverOpts,
    VerificationReport,
)
from .reactions import (
    SIGN_COUPLING,
    check_fhat_lower_bounds,
    check_hypotheses,
    nodal_range_problems,
)
from .renderer import (
    branch_series,
    fields_frame,
    grid_frame,
    render_heatmap,
    render_line_plot,
)
from .store import RunStore
from .system_solver import (
    SolutionBranch,
    classify_solution,
    continuation,
    expected_kinds,
)

logger = logging.getLogger(__name__)

BRANCH_ORDER = (BoxKind.POSITIVE, BoxKind.NEGATIVE, BoxKind.NODAL)


@dataclass(frozen=True)
class RunContext:
    """Everything derived from a config before any solve."""

    cfg: RunConfig
    mesh: Mesh
    d: DistanceField
    layer: BoundaryLayer
    model: ModelParams
    opts: SolverOpts
    store: RunStore


def prepare(cfg: RunConfig, store: RunStore) -> RunContext:
    mesh = build_mesh(cfg.domain)
    d = distance_field(mesh)
    return RunContext(
        cfg=cfg,
        mesh=mesh,
        d=d,
        layer=boundary_layer(mesh, d, cfg.run.delta),
        model=build_model(cfg),
        opts=cfg.solver_opts(),
        store=store,
    )


def eigenpairs(ctx: RunContext) -> tuple[Eigenpair, Eigenpair]:
    """Principal pairs for p_1 and p_2; equal exponents share one solve."""
    p1, p2 = ctx.model.p
    first = principal_eigenpair(ctx.mesh, p1, ctx.opts)
    second = first if p2 == p1 else principal_eigenpair(ctx.mesh, p2, ctx.opts)
    return first, second


def run_eigen(cfg: RunConfig, store: RunStore) -> tuple[Eigenpair, Eigenpair]:
    """Solve both eigenproblems and write ``eigen/phi_<i>.csv`` and ``eigen/eigen_<i>.json``."""
    ctx = prepare(cfg, store)
    pairs = eigenpairs(ctx)
    store.write_csv("eigen", "mesh.csv", mesh_frame(ctx.mesh, ctx.d))
    for i, pair in enumerate(pairs, start=1):
        store.write_csv("eigen", f"phi_{i}.csv", fields_frame(ctx.mesh, {"phi": pair.phi}))
        store.write_json("eigen", f"eigen_{i}.json", pair.summary())
    return pairs


def _write_barriers(ctx: RunContext, section: str, barriers: BarrierSet) -> None:
    named = {}
    for i in range(2):
        n = i + 1
        named.update(
            {
                f"y{n}": barriers.y[i],
                f"z{n}": barriers.z[i],
                f"u_lo{n}": barriers.u_lo[i],
                f"u_hi{n}": barriers.u_hi[i],
            }
        )
    ctx.store.write_csv(section, "barriers.csv", fields_frame(ctx.mesh, named))


def calibrated_barriers(
    ctx: RunContext, eig: tuple[Eigenpair, Eigenpair]
) -> BarrierSet:
    _, barriers = calibrate_C(ctx.model, ctx.mesh, ctx.d, ctx.layer, eig, ctx.opts)
    return barriers


def _write_branch(ctx: RunContext, branch: SolutionBranch, summary: BranchSummary) -> None:
    section = branch.label.value
    store, mesh = ctx.store, ctx.mesh
    for n, pair in zip(branch.rung_ns, branch.ladder):
        frame = fields_frame(mesh, {"u1": pair.u1, "u2": pair.u2})
        store.write_csv(section, f"rung_n{n:03d}.csv", frame)
    store.write_json(section, "diagnostics.json", summary)
    if branch.limit is not None:
        limit = branch.limit
        frame = fields_frame(mesh, {"u1": limit.u1, "u2": limit.u2})
        store.write_csv(section, "limit.csv", frame)


def _plot_branch(ctx: RunContext, branch: SolutionBranch, barriers: BarrierSet) -> None:
    if branch.limit is None:
        return
    section = branch.label.value
    mesh = ctx.mesh
    if mesh.dimension == 1:
        svg = render_line_plot(
            mesh,
            branch_series(branch.limit.fields, barriers.u_lo, barriers.u_hi),
            f"{section} branch limit",
        )
        ctx.store.write_text(section, "limit.svg", svg)
        return
    for i, u in enumerate(branch.limit.fields, start=1):
        ctx.store.write_csv(section, f"limit_u{i}_grid.csv", grid_frame(mesh, u))
        ctx.store.write_text(section, f"limit_u{i}.svg", render_heatmap(mesh, u, f"{section} u{i}"))


def _check_box(model: ModelParams, box: BoxKind) -> None:
    if box is BoxKind.NODAL:
        problems = nodal_range_problems(model)
        if problems:
            raise InvalidArgument("nodal branch needs " + "; ".join(problems))


def solve_branch(
    ctx: RunContext, barriers: BarrierSet, box: BoxKind
) -> tuple[SolutionBranch, BranchSummary]:
    """Continue one branch along the ladder, classify its limit and write its artifacts.

    Raises:
        InvalidArgument: a nodal branch was requested for exponents that rule it out.
    """
    _check_box(ctx.model, box)
    branch = continuation(ctx.model, barriers, box, ctx.cfg.run.ladder_ns, ctx.opts)
    classification = None
    if branch.limit is not None:
        classification = classify_solution(branch.limit, barriers, ctx.model, ctx.opts)
    summary = branch.summary(classification, expected_kinds(box, ctx.model))
    _write_branch(ctx, branch, summary)
    _plot_branch(ctx, branch, barriers)
    logger.info(
        "%s branch: converged=%s class=%s",
        box.value,
        summary.converged,
        classification.kind.value if classification else "-",
    )
    return branch, summary


def run_solve(cfg: RunConfig, box: BoxKind, store: RunStore) -> BranchSummary:
    """Eigenpairs, calibration, then one branch continuation."""
    ctx = prepare(cfg, store)
    _check_box(ctx.model, box)
    eig = eigenpairs(ctx)
    barriers = calibrated_barriers(ctx, eig)
    _write_barriers(ctx, box.value, barriers)
    _, summary = solve_branch(ctx, barriers, box)
    return summary


def allowed_failures(model: ModelParams) -> list[str]:
    """Hypotheses a model is known not to satisfy; the decoupled family lacks sign coupling."""
    return [SIGN_COUPLING] if model.coupling is Coupling.DECOUPLED else []


def run_verify(cfg: RunConfig, store: RunStore) -> VerificationReport:
    """Hypotheses, calibration, barrier and homotopy checks, then all branches.

    Member failures are recorded in the report; the report is written to
    ``verify/report.json`` whatever the outcome.
    """
    ctx = prepare(cfg, store)
    report = VerificationReport(
        hypotheses=check_hypotheses(ctx.model, cfg.run.seed),
        allowed_hypothesis_failures=allowed_failures(ctx.model),
    )
    try:
        eig = eigenpairs(ctx)
        barriers = calibrated_barriers(ctx, eig)
    except (ConvergenceFailure, CalibrationFailure, InvalidArgument) as exc:
        report.errors.append(f"{type(exc).__name__}: {exc}")
        store.write_json("verify", "report.json", report)
        return report

    _write_barriers(ctx, "verify", barriers)
    report.barriers = verify_sub_super(ctx.model, barriers, eig)
    report.homotopy_bounds = check_fhat_lower_bounds(ctx.model, barriers, eig)

    nodal_problems = nodal_range_problems(ctx.model)
    boxes = [b for b in BRANCH_ORDER if b is not BoxKind.NODAL or not nodal_problems]
    if nodal_problems:
        report.errors.append("nodal branch skipped: " + "; ".join(nodal_problems))

    with ThreadPoolExecutor(max_workers=thread_cap()) as pool:
        futures = {box: pool.submit(solve_branch, ctx, barriers, box) for box in boxes}
        for box in boxes:
            _, summary = futures[box].result()
            report.branches[box.value] = summary

    store.write_json("verify", "report.json", report)
    logger.info("verification %s", "passed" if report.passed else "failed")
    return report
