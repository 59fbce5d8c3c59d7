"""Principal Dirichlet eigenpair of the p-Laplacian by inverse power iteration."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceFailure, InvalidArgument
from .mesh_domain import DistanceField, Mesh, distance_field
from .models import EigenSummary, SolverOpts
from .plap_core import (
    at_quadrature,
    gradient_energy,
    quadrature_weights,
    solve_dirichlet,
)

logger = logging.getLogger(__name__)

# Mass integrals and eigen loads share this rule, so the computed pair is an
# exact fixed point of u -> (-Delta_p)^{-1}(lam |u|^(p-2) u) evaluated the same way.
EIGEN_QUADRATURE = "gauss"
EIGEN_REL_TOL = 1e-8
MAX_EIGEN_ITERS = 500


@dataclass(frozen=True, eq=False)
class Eigenpair:
    lam: float
    phi: np.ndarray
    c0: float
    p: float
    iterations: int = 0

    def summary(self) -> EigenSummary:
        return EigenSummary(p=self.p, lam=self.lam, c0=self.c0, iterations=self.iterations)


def lp_integral(mesh: Mesh, p: float, v: np.ndarray) -> float:
    """Integral of |v|^p with the eigen quadrature."""
    vq = at_quadrature(mesh, v, EIGEN_QUADRATURE)
    return float(np.sum(quadrature_weights(mesh, EIGEN_QUADRATURE) * np.abs(vq) ** p))


def rayleigh_quotient(mesh: Mesh, p: float, v: np.ndarray) -> float:
    """Integral of |grad v|^p over integral of |v|^p."""
    denom = lp_integral(mesh, p, v)
    if denom <= 0.0:
        raise InvalidArgument("Rayleigh quotient of the zero field")
    return gradient_energy(mesh, p, v) / denom


def eigen_load(mesh: Mesh, p: float, lam: float, phi: np.ndarray) -> np.ndarray:
    """lam |phi|^(p-2) phi at the eigen quadrature points."""
    phq = at_quadrature(mesh, phi, EIGEN_QUADRATURE)
    return lam * np.abs(phq) ** (p - 1.0) * np.sign(phq)


def comparability_constant(phi: np.ndarray, d: DistanceField) -> float:
    """Smallest c0 >= 1 with d / c0 <= phi <= c0 d at interior nodes."""
    interior = d.values > 0.0
    ph = np.asarray(phi, dtype=float)[interior]
    dv = d.values[interior]
    if np.any(ph <= 0.0):
        raise InvalidArgument("phi must be positive at every interior node")
    return max(1.0, float(np.max(ph / dv)), float(np.max(dv / ph)))


def principal_eigenpair(mesh: Mesh, p: float, opts: SolverOpts) -> Eigenpair:
    """Inverse power iteration started from the normalized torsion function.

    Each step solves -Delta_p w = lam_k phi_k^(p-1), renormalizes w to sup 1
    and updates lam by the Rayleigh quotient. Iteration stops once the
    relative change of lam drops below 1e-8 and phi moves by less than
    ``10 * opts.tol_residual`` in the sup norm.
    """
    torsion = solve_dirichlet(mesh, p, 1.0, opts, quadrature=EIGEN_QUADRATURE)
    phi = torsion / torsion.max()
    lam = rayleigh_quotient(mesh, p, phi)
    logger.debug("eigen p=%g: torsion start lam=%.10g", p, lam)

    for k in range(1, MAX_EIGEN_ITERS + 1):
        try:
            w = solve_dirichlet(
                mesh,
                p,
                eigen_load(mesh, p, lam, phi),
                opts,
                quadrature=EIGEN_QUADRATURE,
                init=phi,
            )
        except ConvergenceFailure as exc:
            raise ConvergenceFailure(
                f"eigen p={p:g}: inner solve failed at iteration {k}",
                last=(lam, phi),
                residual=exc.residual,
            ) from exc
        new_phi = w / w.max()
        new_lam = rayleigh_quotient(mesh, p, new_phi)
        dlam = abs(new_lam - lam) / lam
        dphi = float(np.abs(new_phi - phi).max())
        phi, lam = new_phi, new_lam
        logger.debug("eigen p=%g it=%d lam=%.12g dlam=%.2e dphi=%.2e", p, k, lam, dlam, dphi)
        if dlam < EIGEN_REL_TOL and dphi < 10.0 * opts.tol_residual:
            c0 = comparability_constant(phi, distance_field(mesh))
            logger.info("eigen p=%g converged: lambda=%.8g c0=%.4g (%d its)", p, lam, c0, k)
            return Eigenpair(lam=lam, phi=phi, c0=c0, p=p, iterations=k)

    raise ConvergenceFailure(
        f"eigen p={p:g}: no convergence in {MAX_EIGEN_ITERS} iterations",
        last=(lam, phi),
        residual=dlam,
    )
