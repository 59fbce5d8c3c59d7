"""Explicit sub- and supersolution barriers built from two auxiliary Dirichlet problems.

For each component i:

* y_i solves -Delta_p y = 1 + d^a_i + d^b_i,
* z_i solves -Delta_p z = d^ah_i + d^bh_i away from the boundary layer and -1 inside it,

and the barriers are u_lo_i = z_i / C, u_hi_i = C y_i. Sources are evaluated at
element centroids from the lattice centroid distance, so the d^a singularity
at the boundary is integrated but never evaluated.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .eigen import Eigenpair
from .errors import CalibrationFailure, ConvergenceFailure, InvalidArgument
from .mesh_domain import (
    BoundaryLayer,
    DistanceField,
    Mesh,
    boundary_layer,
    centroid_distance,
)
from .models import BarrierReport, InequalityCheck, ModelParams, SolverOpts
from .plap_core import solve_dirichlet
from .reactions import lower_range_problems, reaction, upper_range_problems

logger = logging.getLogger(__name__)

MAX_DELTA_HALVINGS = 10
MAX_DOUBLINGS = 20
CHAIN_TOL = 1e-12

FieldPair = tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True, eq=False)
class BarrierSet:
    """The rectangle [u_lo, u_hi] with the fields and constants it came from."""

    mesh: Mesh
    d: DistanceField
    layer: BoundaryLayer
    y: FieldPair
    z: FieldPair
    u_lo: FieldPair
    u_hi: FieldPair
    C: float
    c: float

    @property
    def delta(self) -> float:
        return self.layer.delta

    def with_C(self, C: float) -> BarrierSet:
        return build_barriers(self.y, self.z, C, mesh=self.mesh, d=self.d, layer=self.layer)


def _check_field_length(mesh: Mesh, d: DistanceField) -> None:
    if d.values.shape != (mesh.n_nodes,):
        raise InvalidArgument("distance field does not match the mesh")


def solve_y(
    mesh: Mesh,
    d: DistanceField,
    p: float,
    alpha: float,
    beta: float,
    opts: SolverOpts,
) -> np.ndarray:
    """Solve -Delta_p y = 1 + d^alpha + d^beta with zero boundary values."""
    _check_field_length(mesh, d)
    for name, e in (("alpha", alpha), ("beta", beta)):
        if not e > -1.0 or e == 0.0:
            raise InvalidArgument(f"{name} must be nonzero and > -1, got {e!r}")

    dc = centroid_distance(mesh)
    return solve_dirichlet(mesh, p, 1.0 + dc**alpha + dc**beta, opts)


def solve_z(
    mesh: Mesh,
    d: DistanceField,
    layer: BoundaryLayer,
    p: float,
    alpha_hat: float,
    beta_hat: float,
    opts: SolverOpts,
) -> np.ndarray:
    """Solve the piecewise problem: d^ah + d^bh off the layer, -1 inside it."""
    _check_field_length(mesh, d)
    if not alpha_hat + beta_hat > -min(1.0, p - 1.0):
        raise InvalidArgument(
            f"need alpha_hat + beta_hat > -min(1, p - 1), got {alpha_hat} + {beta_hat} at p={p}"
        )
    dc = centroid_distance(mesh)
    core = dc**alpha_hat + dc**beta_hat
    return solve_dirichlet(mesh, p, np.where(layer.element_mask(mesh), -1.0, core), opts)


def auxiliary_fields(
    model: ModelParams,
    mesh: Mesh,
    d: DistanceField,
    layer: BoundaryLayer,
    opts: SolverOpts,
) -> tuple[FieldPair, FieldPair, BoundaryLayer]:
    """Solve for y and z, halving delta until every z_i is positive inside the domain."""
    y = tuple(
        solve_y(mesh, d, model.p[i], model.alpha[i], model.beta[i], opts) for i in range(2)
    )
    interior = mesh.interior
    for attempt in range(MAX_DELTA_HALVINGS + 1):
        z = tuple(
            solve_z(mesh, d, layer, model.p[i], model.alpha_hat[i], model.beta_hat[i], opts)
            for i in range(2)
        )
        if all(np.all(zi[interior] > 0.0) for zi in z):
            return y, z, layer
        if attempt == MAX_DELTA_HALVINGS:
            break
        logger.warning("z not positive at delta=%g; halving", layer.delta)
        layer = boundary_layer(mesh, d, layer.delta / 2.0)
    raise CalibrationFailure(
        f"z stays nonpositive after {MAX_DELTA_HALVINGS} halvings of delta (now {layer.delta:g})"
    )


def comparability(y: FieldPair, z: FieldPair, d: DistanceField) -> float:
    """Smallest c >= 1 with d / c <= z_i and y_i <= c d at interior nodes."""
    interior = d.values > 0.0
    dv = d.values[interior]
    ratios = [1.0]
    for yi, zi in zip(y, z):
        ratios.append(float(np.max(dv / zi[interior])))
        ratios.append(float(np.max(yi[interior] / dv)))
    return max(ratios)


def build_barriers(
    y_pair: FieldPair,
    z_pair: FieldPair,
    C: float,
    *,
    mesh: Mesh,
    d: DistanceField,
    layer: BoundaryLayer,
) -> BarrierSet:
    """u_lo = z / C, u_hi = C y, and the comparability constant of the pair."""
    if not C > 1.0:
        raise InvalidArgument(f"C must exceed 1, got {C!r}")
    interior = mesh.interior
    for name, pair in (("y", y_pair), ("z", z_pair)):
        if any(np.any(f[interior] <= 0.0) for f in pair):
            raise InvalidArgument(f"{name} must be positive at interior nodes")
    y = tuple(np.asarray(f, dtype=float) for f in y_pair)
    z = tuple(np.asarray(f, dtype=float) for f in z_pair)
    return BarrierSet(
        mesh=mesh,
        d=d,
        layer=layer,
        y=y,
        z=z,
        u_lo=(z[0] / C, z[1] / C),
        u_hi=(C * y[0], C * y[1]),
        C=float(C),
        c=comparability(y, z, d),
    )


def _min_check(
    name: str, relation: str, margin: np.ndarray, nodes: np.ndarray, tol: float = 0.0
) -> InequalityCheck:
    k = int(np.argmin(margin))
    return InequalityCheck(
        name=name,
        relation=relation,
        worst_margin=float(margin[k]),
        passed=bool(margin[k] >= -tol),
        worst_node=int(nodes[k]),
    )


def _envelope(model: ModelParams, i: int, x, own, others: Sequence[np.ndarray]):
    """f_i with component i fixed at ``own`` and the other at each endpoint; (min, max)."""
    f = reaction(model, i)
    vals = [f(x, own, o) if i == 0 else f(x, o, own) for o in others]
    return np.minimum.reduce(vals), np.maximum.reduce(vals)


def chain_checks(barriers: BarrierSet) -> list[InequalityCheck]:
    """d / c <= z_i <= y_i <= c d and strict nesting u_lo_i < u_hi_i at interior nodes."""
    idx = barriers.mesh.interior
    d = barriers.d.values[idx]
    c = barriers.c
    out = []
    for i in range(2):
        y, z = barriers.y[i][idx], barriers.z[i][idx]
        scale = max(1.0, float(np.max(y)))
        margin = np.minimum.reduce([z - d / c, y - z, c * d - y])
        out.append(
            _min_check(
                f"comparability_{i + 1}",
                "d/c <= z_i <= y_i <= c d",
                margin,
                idx,
                tol=CHAIN_TOL * scale,
            )
        )
        gap = barriers.u_hi[i][idx] - barriers.u_lo[i][idx]
        check = _min_check(f"nesting_{i + 1}", "u_lo_i < u_hi_i", gap, idx)
        out.append(check.model_copy(update={"passed": check.worst_margin > 0.0}))
    return out


def verify_sub_super(
    model: ModelParams,
    barriers: BarrierSet,
    eig: Sequence[Eigenpair] | None = None,
) -> BarrierReport:
    """Nodewise sub/supersolution inequalities of both rectangles.

    The other component ranges over its interval and f_i is evaluated at both
    endpoints; the worst case enters each inequality. Margins are
    left-hand side minus right-hand side, oriented so that >= 0 passes.
    ``eig``, when given, adds phi_i >= u_lo_i.
    """
    mesh = barriers.mesh
    idx = mesh.interior
    x = mesh.coords[idx]
    d = barriers.d.values[idx]
    in_layer = barriers.layer.mask[idx]
    C = barriers.C
    checks = chain_checks(barriers)

    for i in range(2):
        j = 1 - i
        p = model.p[i]
        up = C ** (p - 1.0) * (1.0 + d ** model.alpha[i] + d ** model.beta[i])
        sub_src = np.where(
            in_layer, -1.0, d ** model.alpha_hat[i] + d ** model.beta_hat[i]
        ) * C ** (-(p - 1.0))
        lo_i, hi_i = barriers.u_lo[i][idx], barriers.u_hi[i][idx]
        ends = (barriers.u_lo[j][idx], barriers.u_hi[j][idx])
        neg_ends = (-ends[0], -ends[1])

        with np.errstate(divide="ignore", invalid="ignore"):
            _, f_hi = _envelope(model, i, x, hi_i, ends)
            f_lo, _ = _envelope(model, i, x, lo_i, ends)
            f_neg_hi, _ = _envelope(model, i, x, -hi_i, neg_ends)
            _, f_neg_lo = _envelope(model, i, x, -lo_i, neg_ends)

        n = i + 1
        checks += [
            _min_check(
                f"supersolution_{n}",
                f"C^(p-1)(1+d^a+d^b) >= f_{n}(u_hi_{n}, u_{j + 1} in [u_lo, u_hi])",
                up - f_hi,
                idx,
            ),
            _min_check(
                f"subsolution_{n}",
                f"C^-(p-1) z-source <= f_{n}(u_lo_{n}, u_{j + 1} in [u_lo, u_hi])",
                f_lo - sub_src,
                idx,
            ),
            _min_check(
                f"negative_subsolution_{n}",
                f"-C^(p-1)(1+d^a+d^b) <= f_{n}(-u_hi_{n}, u_{j + 1} in [-u_hi, -u_lo])",
                f_neg_hi + up,
                idx,
            ),
            _min_check(
                f"negative_supersolution_{n}",
                f"-C^-(p-1) z-source >= f_{n}(-u_lo_{n}, u_{j + 1} in [-u_hi, -u_lo])",
                -sub_src - f_neg_lo,
                idx,
            ),
        ]
        if eig is not None:
            all_nodes = np.arange(mesh.n_nodes)
            checks.append(
                _min_check(
                    f"eigen_floor_{n}",
                    f"phi_{n} >= u_lo_{n}",
                    eig[i].phi - barriers.u_lo[i],
                    all_nodes,
                )
            )

    for chk in checks:
        if not np.isfinite(chk.worst_margin):
            chk.passed = False
    return BarrierReport(C=C, c=barriers.c, delta=barriers.delta, checks=checks)


def calibrate_C(
    model: ModelParams,
    mesh: Mesh,
    d: DistanceField,
    layer: BoundaryLayer,
    eig_pair: Sequence[Eigenpair],
    opts: SolverOpts,
) -> tuple[float, BarrierSet]:
    """Smallest C in {2, 4, ..., 2^20} whose barriers pass every check.

    Raises:
        InvalidArgument: the growth-exponent ranges fail, so no C can work.
        CalibrationFailure: an auxiliary solve fails, or no tested C passes; in
            the latter case it carries the worst check at 2^20.
    """
    problems = upper_range_problems(model) + lower_range_problems(model)
    if problems:
        raise InvalidArgument("hypothesis pre-check failed: " + "; ".join(problems))

    try:
        y, z, layer = auxiliary_fields(model, mesh, d, layer, opts)
    except ConvergenceFailure as exc:
        raise CalibrationFailure(f"auxiliary barrier solve failed: {exc}") from exc
    report = None
    for k in range(1, MAX_DOUBLINGS + 1):
        C = float(2**k)
        barriers = build_barriers(y, z, C, mesh=mesh, d=d, layer=layer)
        report = verify_sub_super(model, barriers, eig_pair)
        if report.passed:
            logger.info("calibrated C=%g (c=%.4g, delta=%g)", C, barriers.c, layer.delta)
            return C, barriers
        worst = report.worst()
        logger.debug("C=%g rejected by %s (margin %.3e)", C, worst.name, worst.worst_margin)

    raise CalibrationFailure(
        f"no C <= 2^{MAX_DOUBLINGS} passes the barrier checks",
        worst=report.worst() if report else None,
    )
