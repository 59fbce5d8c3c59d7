"""Coupled solves of the regularized system, epsilon continuation and sign classification.

A solve alternates the two scalar Dirichlet problems (Gauss-Seidel Picard)
with the reactions frozen at the current iterate, clamping each update into
the order box. When the Picard loop stalls, a box-projected gradient method
minimizes the summed squared residual of both equations instead.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .barriers import BarrierSet
from .eigen import Eigenpair
from .errors import ConvergenceFailure, InvalidArgument
from .mesh_domain import Mesh
from .models import (
    BoxKind,
    BranchSummary,
    ContinuationDiagnostics,
    Coupling,
    ModelParams,
    OppositeSignTest,
    RungDiagnostics,
    SignClass,
    SignKind,
    SmallSet,
    SolverOpts,
)
from .plap_core import (
    assemble_residual,
    at_quadrature,
    c1_norm,
    dual_norm,
    gradient_energy,
    interpolation_matrix,
    jacobian_floor,
    quadrature_points,
    solve_dirichlet,
    tangent_matrix,
    w1p_seminorm,
)
from .reactions import gamma_eps, homotopy_F, homotopy_Fhat, reaction

logger = logging.getLogger(__name__)

BOX_TOL = 1e-12
STALL_WINDOW = 10
MIN_RELAXATION = 1.0 / 16.0
FD_REL_STEP = 1e-6
ARMIJO = 1e-4
MIN_TARGET = 0.1
SMALL_SET_LEVELS = (0.1, 0.05, 0.025)
LIMIT_EPS = 1e-10
LIMIT_TOL_FACTOR = 100.0
SWEEP_QUADRATURE = "gauss"

Fields = tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True, eq=False)
class SolutionPair:
    """A pair of nodal fields and the residual norms of the problem it solves.

    ``eps`` is 0 for a limit object, whose residual is measured against the
    unregularized system with the singular guard applied.
    """

    u1: np.ndarray
    u2: np.ndarray
    eps: float
    residual: tuple[float, float]
    box: BoxKind
    sweeps: int = 0
    phase: str = "picard"

    @property
    def fields(self) -> Fields:
        return self.u1, self.u2


@dataclass(frozen=True, eq=False)
class SolutionBranch:
    label: BoxKind
    ladder: list[SolutionPair]
    limit: SolutionPair | None
    diagnostics: ContinuationDiagnostics
    failure: str | None = None
    rung_ns: list[int] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.failure is None and self.limit is not None

    def summary(
        self, classification: SignClass | None, expected: Sequence[SignKind]
    ) -> BranchSummary:
        return BranchSummary(
            label=self.label,
            converged=self.converged,
            failed_rung=self.diagnostics.failed_rung,
            limit_residual=self.limit.residual if self.limit is not None else None,
            classification=classification,
            expected=list(expected),
            diagnostics=self.diagnostics,
        )


def box_bounds(barriers: BarrierSet, box: BoxKind) -> tuple[Fields, Fields]:
    """Nodewise (lower, upper) bounds of each component in the given box."""
    lo, hi = barriers.u_lo, barriers.u_hi
    if box is BoxKind.POSITIVE:
        return lo, hi
    if box is BoxKind.NEGATIVE:
        return (-hi[0], -hi[1]), (-lo[0], -lo[1])
    return (-lo[0], -lo[1]), lo


def box_init(barriers: BarrierSet, box: BoxKind) -> Fields:
    """Default starting pair: the inner barrier on the signed side, u_lo cos(pi x) when nodal."""
    lo = barriers.u_lo
    if box is BoxKind.POSITIVE:
        return lo[0].copy(), lo[1].copy()
    if box is BoxKind.NEGATIVE:
        return -lo[0], -lo[1]
    wave = np.cos(np.pi * barriers.mesh.coords[:, 0])
    return lo[0] * wave, lo[1] * wave


def expected_kinds(box: BoxKind, model: ModelParams) -> list[SignKind]:
    if box is BoxKind.POSITIVE:
        return [SignKind.POSITIVE]
    if box is BoxKind.NEGATIVE:
        return [SignKind.NEGATIVE]
    if model.coupling is Coupling.SIGN_COUPLED:
        return [SignKind.NODAL_SYNCHRONIZED]
    return [SignKind.NODAL_SYNCHRONIZED, SignKind.NODAL_OTHER]


class _CoupledResidual:
    """Residuals of both equations with reactions at shifted centroid values."""

    def __init__(self, mesh: Mesh, model: ModelParams, eps: float, opts: SolverOpts):
        self.mesh = mesh
        self.model = model
        self.eps = eps
        self.opts = opts
        self.P = interpolation_matrix(mesh, "centroid")
        self.x = mesh.centroids
        self.f = (reaction(model, 0), reaction(model, 1))
        self.best: tuple[Fields, tuple[float, float], str] | None = None

    def arguments(self, fields: Fields) -> Fields:
        out = []
        for u in fields:
            uc = self.P @ u
            out.append(uc + np.asarray(gamma_eps(self.eps, uc)))
        return out[0], out[1]

    def loads(self, fields: Fields) -> Fields:
        a1, a2 = self.arguments(fields)
        return self.f[0](self.x, a1, a2), self.f[1](self.x, a1, a2)

    def residuals(self, fields: Fields) -> Fields:
        g = self.loads(fields)
        return tuple(
            assemble_residual(self.mesh, self.model.p[i], fields[i], g[i]) for i in range(2)
        )

    def norms(self, fields: Fields) -> tuple[float, float]:
        r = self.residuals(fields)
        return dual_norm(self.mesh, r[0]), dual_norm(self.mesh, r[1])

    def track(self, fields: Fields, phase: str) -> tuple[float, float]:
        """Residual norms of ``fields``; keeps a copy when they beat the best so far."""
        norms = self.norms(fields)
        if all(np.isfinite(norms)) and (self.best is None or max(norms) < max(self.best[1])):
            self.best = ((fields[0].copy(), fields[1].copy()), norms, phase)
        return norms

    def objective(self, fields: Fields) -> tuple[float, Fields]:
        r = self.residuals(fields)
        return 0.5 * float(r[0] @ r[0] + r[1] @ r[1]), r

    def gradient(self, fields: Fields, r: Fields) -> Fields:
        """J^T r, with the reaction derivatives taken by central differences."""
        a = self.arguments(fields)
        vol = self.mesh.volumes
        Pr = [self.P @ ri for ri in r]
        grads = []
        for k in range(2):
            u = fields[k]
            K = tangent_matrix(
                self.mesh, self.model.p[k], u, jacobian_floor(self.mesh, u, self.opts)
            )
            grad = K @ r[k]
            step = FD_REL_STEP * np.abs(a[k])
            plus = list(a)
            minus = list(a)
            plus[k] = a[k] + step
            minus[k] = a[k] - step
            for i in range(2):
                dfi = (self.f[i](self.x, *plus) - self.f[i](self.x, *minus)) / (2.0 * step)
                grad = grad - self.P.T @ (vol * dfi * Pr[i])
            grad[self.mesh.boundary_mask] = 0.0
            grads.append(grad)
        return grads[0], grads[1]


def _check_init(init: Fields, lo: Fields, hi: Fields) -> None:
    for i in range(2):
        scale = max(1.0, float(np.abs(hi[i]).max()), float(np.abs(lo[i]).max()))
        if np.any(init[i] < lo[i] - BOX_TOL * scale) or np.any(init[i] > hi[i] + BOX_TOL * scale):
            raise InvalidArgument(f"init component {i + 1} leaves the box")


def _picard(
    problem: _CoupledResidual, fields: Fields, lo: Fields, hi: Fields
) -> tuple[Fields, bool, int, str]:
    """Damped Gauss-Seidel Picard sweeps; returns (fields, converged, sweeps, note)."""
    mesh, model, opts = problem.mesh, problem.model, problem.opts
    u = [fields[0].copy(), fields[1].copy()]
    omega = 1.0
    history: list[float] = []
    for sweep in range(1, opts.max_picard_iters + 1):
        update = 0.0
        for i in range(2):
            g = problem.loads((u[0], u[1]))[i]
            try:
                w = solve_dirichlet(mesh, model.p[i], g, opts, init=u[i])
            except ConvergenceFailure as exc:
                return (u[0], u[1]), False, sweep, f"inner solve failed: {exc}"
            new = np.clip((1.0 - omega) * u[i] + omega * w, lo[i], hi[i])
            update = max(update, float(np.abs(new - u[i]).max()))
            u[i] = new
        if history and update > history[-1]:
            omega = max(omega / 2.0, MIN_RELAXATION)
        history.append(update)
        problem.track((u[0], u[1]), "picard")
        logger.debug("eps=%g sweep=%d update=%.3e omega=%g", problem.eps, sweep, update, omega)
        if update < opts.tol_outer:
            return (u[0], u[1]), True, sweep, ""
        if len(history) > STALL_WINDOW and update >= history[-1 - STALL_WINDOW]:
            return (u[0], u[1]), False, sweep, "Picard stalled"
    return (u[0], u[1]), False, opts.max_picard_iters, "Picard budget exhausted"


def _minimize(
    problem: _CoupledResidual, fields: Fields, lo: Fields, hi: Fields
) -> tuple[Fields, int]:
    """Projected Barzilai-Borwein descent on half the summed squared residual."""
    opts = problem.opts
    target = MIN_TARGET * opts.accept_tol
    x = [np.clip(fields[i], lo[i], hi[i]) for i in range(2)]
    phi, r = problem.objective((x[0], x[1]))
    g = problem.gradient((x[0], x[1]), r)
    gmax = max(float(np.abs(gi).max()) for gi in g)
    step = 1.0 / gmax if gmax > 0.0 else 1.0
    it = 0
    for it in range(1, opts.max_min_iters + 1):
        if max(problem.track((x[0], x[1]), "minimization")) <= target:
            break
        s = step
        accepted = None
        while s > 1e-30:
            trial = [np.clip(x[i] - s * g[i], lo[i], hi[i]) for i in range(2)]
            dx = [trial[i] - x[i] for i in range(2)]
            slope = float(g[0] @ dx[0] + g[1] @ dx[1])
            if slope == 0.0:
                break
            phi_t, r_t = problem.objective((trial[0], trial[1]))
            if phi_t <= phi + ARMIJO * slope:
                accepted = (trial, dx, phi_t, r_t)
                break
            s *= opts.line_search_shrink
        if accepted is None:
            logger.debug("minimization stationary after %d iterations", it)
            break
        trial, dx, phi, r = accepted
        g_new = problem.gradient((trial[0], trial[1]), r)
        sy = float(sum(dx[i] @ (g_new[i] - g[i]) for i in range(2)))
        ss = float(sum(dx[i] @ dx[i] for i in range(2)))
        step = ss / sy if sy > 0.0 else 2.0 * s
        step = min(max(step, 1e-16), 1e16)
        x, g = trial, g_new
    problem.track((x[0], x[1]), "minimization")
    return (x[0], x[1]), it


def solve_regularized(
    model: ModelParams,
    barriers: BarrierSet,
    eps: float,
    box: BoxKind,
    init: SolutionPair | Fields | None,
    opts: SolverOpts,
) -> SolutionPair:
    """Solve the eps-regularized system inside ``box``.

    Raises:
        InvalidArgument: eps outside (0, 1) or init outside the box.
        ConvergenceFailure: residual above ``opts.accept_tol`` after both
            phases; ``last`` holds the best pair found.
    """
    if not 0.0 < eps < 1.0:
        raise InvalidArgument(f"eps must lie in (0, 1), got {eps!r}")
    box = BoxKind(box)
    mesh = barriers.mesh
    lo, hi = box_bounds(barriers, box)
    if init is None:
        start = box_init(barriers, box)
    elif isinstance(init, SolutionPair):
        start = init.fields
    else:
        start = (np.asarray(init[0], dtype=float), np.asarray(init[1], dtype=float))
    _check_init(start, lo, hi)
    start = tuple(np.clip(start[i], lo[i], hi[i]) for i in range(2))

    problem = _CoupledResidual(mesh, model, eps, opts)
    problem.track(start, "init")
    fields, converged, sweeps, note = _picard(problem, start, lo, hi)
    norms = problem.track(fields, "picard")
    if not converged or max(norms) > opts.accept_tol:
        logger.debug("eps=%g: %s, residual %.3e; minimizing", eps, note or "clamped", max(norms))
        _, m_iters = _minimize(problem, fields, lo, hi)
        sweeps += m_iters
    phase = "picard"
    if problem.best is not None:
        fields, norms, phase = problem.best

    pair = SolutionPair(
        u1=fields[0], u2=fields[1], eps=eps, residual=norms, box=box, sweeps=sweeps, phase=phase
    )
    if not all(np.isfinite(norms)) or max(norms) > opts.accept_tol:
        raise ConvergenceFailure(
            f"{box.value} box, eps={eps:g}: residual {max(norms):.3e} above {opts.accept_tol:g}",
            last=pair,
            residual=max(norms),
        )
    logger.debug("eps=%g %s solve: residual %.3e via %s", eps, box.value, max(norms), phase)
    return pair


def limit_residual(
    mesh: Mesh, model: ModelParams, fields: Fields, guard: float | None = None
) -> tuple[float, float]:
    """Residual norms against the unregularized system.

    Nodes where min(|u1|, |u2|) < ``guard`` (default 10 h) are left out of
    the norm, as are the vertices of elements where a reaction is singular.
    """
    guard = 10.0 * mesh.h if guard is None else guard
    P = interpolation_matrix(mesh, "centroid")
    uc = [P @ u for u in fields]
    skip = np.minimum(np.abs(fields[0]), np.abs(fields[1])) < guard
    out = []
    for i in range(2):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            g = reaction(model, i)(mesh.centroids, uc[0], uc[1])
        bad = ~np.isfinite(g) | (uc[0] == 0.0) | (uc[1] == 0.0)
        g = np.where(bad, 0.0, g)
        skip_i = skip.copy()
        skip_i[mesh.elements[bad].ravel()] = True
        r = assemble_residual(mesh, model.p[i], fields[i], g)
        keep = ~mesh.boundary_mask & ~skip_i
        out.append(float(np.linalg.norm(r[keep]) * mesh.h ** (-mesh.dimension / 2.0)))
    return out[0], out[1]


def _rung_record(
    mesh: Mesh,
    model: ModelParams,
    n: int,
    pair: SolutionPair,
    previous: SolutionPair | None,
    converged: bool,
    message: str = "",
) -> RungDiagnostics:
    gap = None
    if previous is not None:
        gap = sum(
            w1p_seminorm(mesh, model.p[i], pair.fields[i] - previous.fields[i]) for i in range(2)
        )
    interior = mesh.interior
    small = [
        SmallSet(
            mu=mu,
            measure=tuple(
                float(mesh.lumped_mass[np.abs(u) <= mu].sum()) for u in pair.fields
            ),
        )
        for mu in SMALL_SET_LEVELS
    ]
    return RungDiagnostics(
        n=n,
        eps=pair.eps,
        residual=pair.residual,
        converged=converged,
        cauchy_gap=gap,
        small_sets=small,
        min_abs_interior=tuple(float(np.abs(u[interior]).min()) for u in pair.fields),
        c1_norm=tuple(c1_norm(mesh, u) for u in pair.fields),
        message=message,
    )


def continuation(
    model: ModelParams,
    barriers: BarrierSet,
    box: BoxKind,
    ladder_ns: Sequence[int],
    opts: SolverOpts,
    init: SolutionPair | Fields | None = None,
) -> SolutionBranch:
    """Solve the regularized system for eps = 1/n along the ladder, warm-starting each rung.

    After the ladder, the limit is the solve at eps = 1e-10 started from the
    last rung, or the last rung itself when that solve fails. Its residual is
    measured against the unregularized system with the singular guard; a
    limit residual above 100 accept_tol marks the branch as failed.
    """
    ns = list(ladder_ns)
    if not ns or ns[0] < 2 or any(b <= a for a, b in zip(ns, ns[1:])):
        raise InvalidArgument(f"ladder must be strictly increasing integers >= 2, got {ns}")
    box = BoxKind(box)
    mesh = barriers.mesh
    diagnostics = ContinuationDiagnostics()
    ladder: list[SolutionPair] = []
    current: SolutionPair | Fields | None = init
    previous: SolutionPair | None = None

    for n in ns:
        eps = 1.0 / n
        try:
            pair = solve_regularized(model, barriers, eps, box, current, opts)
        except ConvergenceFailure as exc:
            if isinstance(exc.last, SolutionPair):
                diagnostics.rungs.append(
                    _rung_record(mesh, model, n, exc.last, previous, False, str(exc))
                )
            diagnostics.failed_rung = n
            logger.warning("%s branch failed at n=%d: %s", box.value, n, exc)
            return SolutionBranch(
                label=box,
                ladder=ladder,
                limit=None,
                diagnostics=diagnostics,
                failure=str(exc),
                rung_ns=ns[: len(ladder)],
            )
        diagnostics.rungs.append(_rung_record(mesh, model, n, pair, previous, True))
        logger.info("%s branch: n=%d residual=%.3e", box.value, n, max(pair.residual))
        ladder.append(pair)
        previous = current = pair

    try:
        polished = solve_regularized(model, barriers, LIMIT_EPS, box, previous, opts)
        fields, source = polished.fields, f"eps={LIMIT_EPS:g} solve"
    except ConvergenceFailure as exc:
        logger.info("%s limit solve failed (%s); using the last rung", box.value, exc)
        fields, source = previous.fields, f"rung n={ns[-1]}"

    residual = limit_residual(mesh, model, fields, opts.singular_guard)
    limit = SolutionPair(
        u1=fields[0], u2=fields[1], eps=0.0, residual=residual, box=box, phase=source
    )
    failure = None
    limit_tol = LIMIT_TOL_FACTOR * opts.accept_tol
    if not all(np.isfinite(residual)) or max(residual) > limit_tol:
        failure = f"limit residual {max(residual):.3e} above {limit_tol:g} ({source})"
        logger.warning("%s branch: %s", box.value, failure)
    return SolutionBranch(
        label=box,
        ladder=ladder,
        limit=limit,
        diagnostics=diagnostics,
        failure=failure,
        rung_ns=ns,
    )


def opposite_sign_test(mesh: Mesh, model: ModelParams, fields: Fields) -> OppositeSignTest:
    """Test the nonpositive component of an opposite-sign pair against -u_i^-.

    A solution needs int |grad u_i^-|^p_i = -int f_i u_i^-; the test fires
    when the pairing is negative while the gradient energy is positive.
    """
    u1, u2 = (np.asarray(u, dtype=float) for u in fields)
    if np.all(u2 <= 0.0) and np.all(u1 >= 0.0):
        i = 1
    elif np.all(u1 <= 0.0) and np.all(u2 >= 0.0):
        i = 0
    else:
        raise InvalidArgument("pair does not have components of opposite constant sign")
    neg = np.maximum(-(u1, u2)[i], 0.0)
    energy = gradient_energy(mesh, model.p[i], neg)
    uc = [at_quadrature(mesh, u)[:, 0] for u in (u1, u2)]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        f = reaction(model, i)(mesh.centroids, uc[0], uc[1])
    neg_c = at_quadrature(mesh, neg)[:, 0]
    f = np.where(neg_c > 0.0, f, 0.0)
    pairing = -float(np.sum(mesh.volumes * f * neg_c))
    return OppositeSignTest(
        component=i,
        gradient_energy=energy,
        reaction_pairing=pairing,
        fired=bool(energy > 0.0 and pairing < 0.0),
    )


def classify_solution(
    pair: SolutionPair | Fields,
    barriers: BarrierSet,
    model: ModelParams | None = None,
    opts: SolverOpts | None = None,
) -> SignClass:
    """Sign class of a pair relative to the barriers.

    ``tol`` is ``sign_tol_rel`` (1e-8) times the larger sup norm. The strict
    margin is min (u_i - u_lo_i) / d over interior nodes. With ``model``
    given, opposite-sign pairs also carry the test-function check.
    """
    u1, u2 = pair.fields if isinstance(pair, SolutionPair) else pair
    mesh = barriers.mesh
    if u1.shape != (mesh.n_nodes,) or u2.shape != (mesh.n_nodes,):
        raise InvalidArgument("pair does not live on the barrier mesh")
    idx = mesh.interior
    d = barriers.d.values[idx]
    scale = max(float(np.abs(u1).max()), float(np.abs(u2).max()))
    tol = (opts or SolverOpts()).sign_tol_rel * scale
    fields = (u1, u2)
    changes = tuple(bool(np.any(u > tol) and np.any(u < -tol)) for u in fields)
    sync = float(max(0.0, np.max(-u1 * u2)))
    base = {"sync_defect": sync, "changes_sign": changes, "tol": tol}

    small = [np.mean(np.abs(u[idx]) <= tol) for u in fields]
    if scale == 0.0 or max(small) > 0.5:
        return SignClass(kind=SignKind.DEGENERATE, **base)

    lo = [barriers.u_lo[i][idx] for i in range(2)]
    pos = [fields[i][idx] - lo[i] for i in range(2)]
    if all(np.all(m >= -tol) for m in pos):
        return SignClass(
            kind=SignKind.POSITIVE,
            weak_margin=float(min(m.min() for m in pos)),
            strict_margin=float(min((m / d).min() for m in pos)),
            **base,
        )
    neg = [-fields[i][idx] - lo[i] for i in range(2)]
    if all(np.all(m >= -tol) for m in neg):
        return SignClass(
            kind=SignKind.NEGATIVE,
            weak_margin=float(min(m.min() for m in neg)),
            strict_margin=float(min((m / d).min() for m in neg)),
            **base,
        )

    opposite = None
    if model is not None and not any(changes):
        try:
            opposite = opposite_sign_test(mesh, model, fields)
        except InvalidArgument:
            opposite = None
    kind = SignKind.NODAL_SYNCHRONIZED if all(changes) and sync <= tol else SignKind.NODAL_OTHER
    return SignClass(kind=kind, opposite_sign=opposite, **base)


def homotopy_sweep(
    model: ModelParams,
    barriers: BarrierSet,
    eig: Sequence[Eigenpair],
    kind: Literal["F", "Fhat"],
    t: float,
    eps: float,
    fields: Fields,
    opts: SolverOpts,
) -> Fields:
    """One Gauss-Seidel sweep of u = (-Delta_p)^{-1} F_t (``"F"``) or Fhat_t (``"Fhat"``).

    Reactions are evaluated at the two-point (segment) or three-point
    (triangle) Gauss rule, so at t = 0 the eigenfunction is a fixed point of
    the ``"Fhat"`` sweep up to the eigen solver's tolerance. No clamp is applied.
    """
    if kind not in ("F", "Fhat"):
        raise InvalidArgument(f"kind must be 'F' or 'Fhat', got {kind!r}")
    mesh = barriers.mesh
    q = SWEEP_QUADRATURE
    shape = at_quadrature(mesh, barriers.u_hi[0], q).shape
    x = quadrature_points(mesh, q).reshape(-1, mesh.dimension)
    hi = [at_quadrature(mesh, barriers.u_hi[k], q).ravel() for k in range(2)]
    u = [np.asarray(fields[0], dtype=float).copy(), np.asarray(fields[1], dtype=float).copy()]
    for i in range(2):
        uq = [at_quadrature(mesh, u[k], q).ravel() for k in range(2)]
        if kind == "F":
            g = homotopy_F(model, i, t, eps, x, uq[0], uq[1], hi[0], hi[1], eig[i].lam)
        else:
            phq = at_quadrature(mesh, eig[i].phi, q).ravel()
            g = homotopy_Fhat(model, i, t, eps, x, uq[0], uq[1], hi[0], hi[1], phq, eig[i].lam)
        g = np.asarray(g, dtype=float).reshape(shape)
        u[i] = solve_dirichlet(mesh, model.p[i], g, opts, quadrature=q, init=u[i])
    return u[0], u[1]
