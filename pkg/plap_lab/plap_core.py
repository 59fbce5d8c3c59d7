"""P1 finite elements for the Dirichlet p-Laplacian.

The principal term is integrated exactly (gradients are elementwise constant);
loads go through one of three quadrature rules:

* ``centroid``: one point per element,
* ``lumped``: the element vertices with equal weights (a lumped mass),
* ``gauss``: two points per segment, three interior points per triangle.

Loads may be given as nodal values (interpolated to the quadrature points),
as values at the quadrature points (``(n_elements,)`` for the centroid rule,
``(n_elements, n_points)`` otherwise) or as a callable of physical points.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import ConvergenceFailure, InvalidArgument
from .mesh_domain import Mesh
from .models import SolverOpts

logger = logging.getLogger(__name__)

Load = Union[np.ndarray, float, Callable[[np.ndarray], np.ndarray]]

KAPPA_MIN = 1e-12
ARMIJO = 1e-4
MIN_STEP = 1e-10
# Newton counts as stalled when the residual has not dropped by STALL_FACTOR
# over STALL_WINDOW steps.
STALL_WINDOW = 5
STALL_FACTOR = 0.5
ENERGY_SLACK = 1e-12


@dataclass(frozen=True)
class QuadratureRule:
    name: str
    barycentric: np.ndarray
    weights: np.ndarray

    @property
    def n_points(self) -> int:
        return int(self.weights.size)


@lru_cache(maxsize=None)
def quadrature_rule(name: str, dim: int) -> QuadratureRule:
    nv = dim + 1
    if name == "centroid":
        bary = np.full((1, nv), 1.0 / nv)
    elif name == "lumped":
        bary = np.eye(nv)
    elif name == "gauss" and dim == 1:
        a = 0.5 / np.sqrt(3.0)
        bary = np.array([[0.5 + a, 0.5 - a], [0.5 - a, 0.5 + a]])
    elif name == "gauss" and dim == 2:
        bary = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
    else:
        raise InvalidArgument(f"unknown quadrature {name!r} for dimension {dim}")
    weights = np.full(bary.shape[0], 1.0 / bary.shape[0])
    return QuadratureRule(name=name, barycentric=bary, weights=weights)


def _check_p(p: float) -> None:
    if not np.isfinite(p) or p <= 1.0:
        raise InvalidArgument(f"p must exceed 1, got {p!r}")


def _check_field(mesh: Mesh, u: np.ndarray, name: str = "u") -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (mesh.n_nodes,):
        raise InvalidArgument(f"{name} must have shape ({mesh.n_nodes},), got {u.shape}")
    return u


def at_quadrature(mesh: Mesh, u: np.ndarray, quadrature: str = "centroid") -> np.ndarray:
    """Interpolate a nodal field to the quadrature points, shape (n_elements, n_points)."""
    rule = quadrature_rule(quadrature, mesh.dimension)
    return u[mesh.elements] @ rule.barycentric.T


def quadrature_points(mesh: Mesh, quadrature: str = "centroid") -> np.ndarray:
    """Physical quadrature points, shape (n_elements, n_points, dim)."""
    rule = quadrature_rule(quadrature, mesh.dimension)
    return np.einsum("qk,ekd->eqd", rule.barycentric, mesh.coords[mesh.elements])


def interpolation_matrix(mesh: Mesh, quadrature: str = "centroid") -> sp.csr_matrix:
    """Sparse map from nodal values to quadrature-point values (row-major over elements)."""
    rule = quadrature_rule(quadrature, mesh.dimension)
    nq, nv = rule.barycentric.shape
    rows = np.repeat(np.arange(mesh.n_elements * nq), nv)
    cols = np.repeat(mesh.elements, nq, axis=0).ravel()
    data = np.tile(rule.barycentric.ravel(), mesh.n_elements)
    return sp.coo_matrix(
        (data, (rows, cols)), shape=(mesh.n_elements * nq, mesh.n_nodes)
    ).tocsr()


def quadrature_weights(mesh: Mesh, quadrature: str = "centroid") -> np.ndarray:
    """Element measure times rule weight, shape (n_elements, n_points)."""
    rule = quadrature_rule(quadrature, mesh.dimension)
    return mesh.volumes[:, None] * rule.weights[None, :]


def load_values(mesh: Mesh, g: Load, quadrature: str = "centroid") -> np.ndarray:
    """Resolve a load to its values at the quadrature points."""
    rule = quadrature_rule(quadrature, mesh.dimension)
    shape = (mesh.n_elements, rule.n_points)
    if callable(g):
        pts = quadrature_points(mesh, quadrature).reshape(-1, mesh.dimension)
        values = np.asarray(g(pts), dtype=float).reshape(shape)
    else:
        arr = np.asarray(g, dtype=float)
        if arr.ndim == 0:
            values = np.full(shape, float(arr))
        elif arr.shape == (mesh.n_nodes,):
            values = at_quadrature(mesh, arr, quadrature)
        elif arr.shape == shape:
            values = arr
        elif rule.n_points == 1 and arr.shape == (mesh.n_elements,):
            values = arr[:, None]
        else:
            raise InvalidArgument(
                f"load of shape {arr.shape} fits neither nodes nor {quadrature} points"
            )
    if not np.all(np.isfinite(values)):
        raise InvalidArgument("load has non-finite values at quadrature points")
    return values


def _scatter(mesh: Mesh, local: np.ndarray) -> np.ndarray:
    out = np.zeros(mesh.n_nodes)
    for k in range(mesh.nodes_per_element):
        out += np.bincount(mesh.elements[:, k], weights=local[:, k], minlength=mesh.n_nodes)
    return out


def load_vector(mesh: Mesh, g: Load, quadrature: str = "centroid") -> np.ndarray:
    """Entries approximating the integral of g against each hat function."""
    rule = quadrature_rule(quadrature, mesh.dimension)
    weighted = quadrature_weights(mesh, quadrature) * load_values(mesh, g, quadrature)
    return _scatter(mesh, weighted @ rule.barycentric)


def element_gradients(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """Elementwise gradient of the P1 interpolant, shape (n_elements, dim)."""
    return np.einsum("ekd,ek->ed", mesh.basis_gradients, u[mesh.elements])


def _flux_coefficient(norm: np.ndarray, p: float) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = norm ** (p - 2.0)
    return np.where(norm > 0.0, coef, 0.0)


def flux_vector(mesh: Mesh, p: float, u: np.ndarray) -> np.ndarray:
    """Entries of the integral of |grad u|^(p-2) grad u . grad phi_j."""
    grads = element_gradients(mesh, u)
    coef = _flux_coefficient(np.linalg.norm(grads, axis=1), p)
    flux = (mesh.volumes * coef)[:, None] * grads
    return _scatter(mesh, np.einsum("ekd,ed->ek", mesh.basis_gradients, flux))


def assemble_residual(
    mesh: Mesh,
    p: float,
    u: np.ndarray,
    g: Load,
    quadrature: str = "centroid",
) -> np.ndarray:
    """Weak-form residual of -Delta_p u = g; boundary entries are zero."""
    _check_p(p)
    u = _check_field(mesh, u)
    r = flux_vector(mesh, p, u) - load_vector(mesh, g, quadrature)
    r[mesh.boundary_mask] = 0.0
    return r


def _residual_from_load(mesh: Mesh, p: float, u: np.ndarray, load: np.ndarray) -> np.ndarray:
    r = flux_vector(mesh, p, u) - load
    r[mesh.boundary_mask] = 0.0
    return r


def gradient_energy(mesh: Mesh, p: float, u: np.ndarray) -> float:
    """Integral of |grad u|^p."""
    norm = np.linalg.norm(element_gradients(mesh, u), axis=1)
    return float(np.sum(mesh.volumes * norm**p))


def energy(
    mesh: Mesh,
    p: float,
    u: np.ndarray,
    g: Load,
    quadrature: str = "centroid",
) -> float:
    """(1/p) int |grad u|^p - int g u, with the load integrated as in the residual."""
    u = _check_field(mesh, u)
    return gradient_energy(mesh, p, u) / p - float(load_vector(mesh, g, quadrature) @ u)


def w1p_seminorm(mesh: Mesh, p: float, v: np.ndarray) -> float:
    return gradient_energy(mesh, p, v) ** (1.0 / p)


def c1_norm(mesh: Mesh, v: np.ndarray) -> float:
    """Max nodal value plus max element gradient."""
    grads = np.linalg.norm(element_gradients(mesh, v), axis=1)
    return float(np.abs(v).max() + grads.max())


def dual_norm(mesh: Mesh, r: np.ndarray) -> float:
    """Euclidean norm of the interior residual scaled by h^(-dim/2)."""
    return float(np.linalg.norm(r[mesh.interior]) * mesh.h ** (-mesh.dimension / 2.0))


def _assemble(mesh: Mesh, tensors: np.ndarray) -> sp.csr_matrix:
    """Global matrix of vol * B_a . A_e B_b for per-element tensors A_e."""
    B = mesh.basis_gradients
    AB = np.einsum("eij,ebj->ebi", tensors, B)
    local = mesh.volumes[:, None, None] * np.einsum("eai,ebi->eab", B, AB)
    nv = mesh.nodes_per_element
    rows = np.repeat(mesh.elements, nv, axis=1)
    cols = np.tile(mesh.elements, (1, nv))
    return sp.coo_matrix(
        (local.ravel(), (rows.ravel(), cols.ravel())), shape=(mesh.n_nodes, mesh.n_nodes)
    ).tocsr()


def stiffness_matrix(mesh: Mesh, coefficient: np.ndarray | float = 1.0) -> sp.csr_matrix:
    """Weighted Laplacian stiffness with an elementwise scalar coefficient."""
    coef = np.broadcast_to(np.asarray(coefficient, dtype=float), (mesh.n_elements,))
    eye = np.eye(mesh.dimension)
    return _assemble(mesh, coef[:, None, None] * eye[None, :, :])


def jacobian_floor(mesh: Mesh, u: np.ndarray, opts: SolverOpts) -> float:
    gmax = float(np.linalg.norm(element_gradients(mesh, u), axis=1).max(initial=0.0))
    return max(opts.jacobian_floor * gmax, KAPPA_MIN)


def tangent_matrix(mesh: Mesh, p: float, u: np.ndarray, kappa: float) -> sp.csr_matrix:
    """Jacobian of the flux regularized as (|grad u|^2 + kappa^2)^((p-2)/2) grad u."""
    grads = element_gradients(mesh, u)
    s = np.einsum("ed,ed->e", grads, grads) + kappa**2
    a = s ** ((p - 2.0) / 2.0)
    eye = np.eye(mesh.dimension)[None, :, :]
    outer = np.einsum("ei,ej->eij", grads, grads) / s[:, None, None]
    return _assemble(mesh, a[:, None, None] * (eye + (p - 2.0) * outer))


def solve_interior(mesh: Mesh, K: sp.spmatrix, rhs: np.ndarray) -> np.ndarray:
    """Solve K u = rhs on the interior nodes with u = 0 on the boundary."""
    idx = mesh.interior
    Kii = K[idx][:, idx].tocsc()
    u = np.zeros(mesh.n_nodes)
    u[idx] = spsolve(Kii, rhs[idx])
    return u


def solve_linear(mesh: Mesh, g: Load, quadrature: str = "centroid") -> np.ndarray:
    """The p = 2 Dirichlet problem as one sparse solve."""
    return solve_interior(mesh, stiffness_matrix(mesh), load_vector(mesh, g, quadrature))


def ray_scaled_guess(mesh: Mesh, p: float, load: np.ndarray) -> np.ndarray:
    """Minimize the energy along the ray through the p = 2 solution."""
    w = solve_interior(mesh, stiffness_matrix(mesh), load)
    b = float(load @ w)
    a = gradient_energy(mesh, p, w)
    if a == 0.0 or b == 0.0:
        return np.zeros(mesh.n_nodes)
    return np.sign(b) * abs(b / a) ** (1.0 / (p - 1.0)) * w


class _DirichletProblem:
    """Fixed load and exponent; caches the residual/energy evaluations a solve needs."""

    def __init__(self, mesh: Mesh, p: float, load: np.ndarray, opts: SolverOpts):
        self.mesh = mesh
        self.p = p
        self.load = load
        self.opts = opts

    def residual(self, u: np.ndarray) -> np.ndarray:
        return _residual_from_load(self.mesh, self.p, u, self.load)

    def energy(self, u: np.ndarray) -> float:
        return gradient_energy(self.mesh, self.p, u) / self.p - float(self.load @ u)

    def newton_step(self, u: np.ndarray, r: np.ndarray, res: float) -> np.ndarray | None:
        """Damped Newton step with an energy line search; None when no descent is found."""
        kappa = jacobian_floor(self.mesh, u, self.opts)
        J = tangent_matrix(self.mesh, self.p, u, kappa)
        delta = -solve_interior(self.mesh, J, r)
        slope = float(r @ delta)
        if not np.isfinite(slope) or slope >= 0.0:
            return None
        e0 = self.energy(u)
        s = 1.0
        while s > MIN_STEP:
            cand = u + s * delta
            if self.energy(cand) <= e0 + ARMIJO * s * slope:
                return cand
            # Near convergence energy differences drown in round-off; accept residual decrease.
            if dual_norm(self.mesh, self.residual(cand)) < (1.0 - ARMIJO * s) * res:
                return cand
            s *= self.opts.line_search_shrink
        return None

    def picard_step(self, u: np.ndarray) -> np.ndarray:
        """Frozen-coefficient (Kacanov) update."""
        kappa = jacobian_floor(self.mesh, u, self.opts)
        grads = element_gradients(self.mesh, u)
        coef = (np.einsum("ed,ed->e", grads, grads) + kappa**2) ** ((self.p - 2.0) / 2.0)
        return solve_interior(self.mesh, stiffness_matrix(self.mesh, coef), self.load)


def solve_dirichlet(
    mesh: Mesh,
    p: float,
    g: Load,
    opts: SolverOpts,
    *,
    quadrature: str = "centroid",
    init: np.ndarray | None = None,
) -> np.ndarray:
    """Solve -Delta_p u = g in the domain, u = 0 on the boundary.

    Damped Newton on the regularized operator. When the line search finds
    no descent, or when Newton stalls (the floored tangent is stiff where
    the gradient vanishes if p < 2), frozen-coefficient Picard updates take
    over for as long as they lower the energy.

    Args:
        mesh: The discrete domain.
        p: Exponent, > 1.
        g: Load (nodal values, quadrature values or a callable of points).
        opts: Tolerances and budgets.
        quadrature: Rule used for the load.
        init: Warm start; defaults to the ray-scaled p = 2 solution.

    Returns:
        Nodal values with dual residual norm <= ``opts.tol_residual``.

    Raises:
        ConvergenceFailure: budgets exhausted; carries the last iterate.
    """
    _check_p(p)
    problem = _DirichletProblem(mesh, p, load_vector(mesh, g, quadrature), opts)
    if init is None:
        u = ray_scaled_guess(mesh, p, problem.load)
    else:
        u = _check_field(mesh, init, "init").copy()
        u[mesh.boundary_mask] = 0.0

    newton = picard = 0
    history: list[float] = []
    use_picard = False
    e_prev = np.inf
    res = np.inf
    while True:
        r = problem.residual(u)
        res = dual_norm(mesh, r)
        if res <= opts.tol_residual:
            logger.debug(
                "p=%g solve converged: newton=%d picard=%d res=%.3e", p, newton, picard, res
            )
            return u
        if use_picard:
            e = problem.energy(u)
            if e > e_prev + ENERGY_SLACK * abs(e_prev):
                logger.debug("p=%g Picard raised the energy; back to Newton", p)
                use_picard = False
                history.clear()
            e_prev = e
        if not use_picard:
            history.append(res)
            if len(history) > STALL_WINDOW and res > STALL_FACTOR * history[-1 - STALL_WINDOW]:
                logger.debug("p=%g Newton stalled at res=%.3e; switching to Picard", p, res)
                use_picard = True
                e_prev = problem.energy(u)
        if not use_picard:
            if newton >= opts.max_newton_iters:
                break
            newton += 1
            step = problem.newton_step(u, r, res)
            if step is not None:
                u = step
                continue
            use_picard = True
            e_prev = problem.energy(u)
        if picard >= opts.max_picard_iters:
            break
        picard += 1
        u = problem.picard_step(u)

    raise ConvergenceFailure(
        f"p={p:g} Dirichlet solve stopped at residual {res:.3e} "
        f"after {newton} Newton and {picard} Picard steps",
        last=u,
        residual=res,
    )
