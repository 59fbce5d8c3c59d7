"""Singular reaction families, truncations, homotopy reactions and hypothesis checks.

Components are indexed 0 and 1 throughout; ``f_i(x, s, t)`` takes the first
component as ``s`` and the second as ``t``. All evaluations are vectorized
over numpy arrays and follow ``sgn(0) = 0``.
"""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import InvalidArgument, SingularEvaluation
from .models import (
    Coupling,
    Family,
    HypothesisCheck,
    HypothesisReport,
    InequalityCheck,
    ModelConfig,
    ModelParams,
    Pair,
    Reaction,
)

if TYPE_CHECKING:
    from .barriers import BarrierSet
    from .eigen import Eigenpair

logger = logging.getLogger(__name__)

BLOWUP_THRESHOLD = 1e3
BLOWUP_DEPTHS = np.logspace(-2, -12, 11)
SAMPLE_GRID = np.logspace(-4, 0, 50)
N_RANDOM_SAMPLES = 1000
REL_SLACK = 1e-12
HOMOTOPY_TIMES = (0.0, 0.25, 0.5, 0.75, 1.0)

SINGULAR_BLOWUP = "singular_blowup"
UPPER_GROWTH = "upper_growth"
LOWER_GROWTH = "lower_growth"
LOCAL_BOUND = "local_bound"
SIGN_COUPLING = "sign_coupling"
NODAL_EXPONENTS = "nodal_exponents"


# --- reaction families -------------------------------------------------------


def sign_reaction(offset: float, gain: float, source: str, alpha: float, beta: float) -> Reaction:
    """(offset + gain sgn(w)) (|s|^alpha + |t|^beta) with w the ``source`` argument."""
    if source not in ("s", "t"):
        raise InvalidArgument(f"sign source must be 's' or 't', got {source!r}")

    def f(x, s, t):
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        w = s if source == "s" else t
        with np.errstate(divide="ignore"):
            return (offset + gain * np.sign(w)) * (np.abs(s) ** alpha + np.abs(t) ** beta)

    return f


def prefactor_bounds(offset: float, gain: float) -> tuple[float, float]:
    """Envelope constants (M, m) of the prefactor offset + gain sgn(w)."""
    positive = offset + gain
    negative = gain - offset
    return max(positive, negative), min(positive, negative)


def reaction(model: ModelParams, i: int) -> Reaction:
    if model.f is not None:
        return model.f[i]
    return sign_reaction(
        model.sign_offset[i],
        model.sign_gain[i],
        model.sign_source[i],
        model.alpha[i],
        model.beta[i],
    )


def _check_example_exponents(p: Pair, alpha: Pair, beta: Pair) -> None:
    a1, a2 = alpha
    b1, b2 = beta
    problems = []
    if not (-1.0 < a1 < 0.0 and -1.0 < b2 < 0.0):
        problems.append("need -1 < alpha_1, beta_2 < 0")
    if not (a2 > 0.0 and b1 > 0.0):
        problems.append("need alpha_2, beta_1 > 0")
    if not a2 < min(1.0, p[1] - 1.0):
        problems.append("need alpha_2 < min(1, p_2 - 1)")
    if not b1 < min(1.0, p[0] - 1.0):
        problems.append("need beta_1 < min(1, p_1 - 1)")
    for i in range(2):
        if not alpha[i] + beta[i] > -min(1.0, p[i] - 1.0):
            problems.append(f"need alpha_{i + 1} + beta_{i + 1} > -min(1, p_{i + 1} - 1)")
    if problems:
        raise InvalidArgument("example exponents rejected: " + "; ".join(problems))


def _example(
    family: Family,
    offset: float,
    sources: tuple[str, str],
    alpha: Pair,
    beta: Pair,
    p: Pair,
    alpha_hat: Pair | None,
    beta_hat: Pair | None,
    eta: Pair,
) -> ModelParams:
    if min(p) <= 1.0:
        raise InvalidArgument(f"exponents p must exceed 1, got {p}")
    _check_example_exponents(p, alpha, beta)
    M, m = prefactor_bounds(offset, 1.0)
    return ModelParams(
        family=family,
        p=p,
        alpha=alpha,
        beta=beta,
        alpha_hat=alpha if alpha_hat is None else alpha_hat,
        beta_hat=beta if beta_hat is None else beta_hat,
        M=(M, M),
        m=(m, m),
        eta=eta,
        coupling=Coupling.SIGN_COUPLED if sources == ("t", "s") else Coupling.DECOUPLED,
        sign_offset=(offset, offset),
        sign_gain=(1.0, 1.0),
        sign_source=sources,
    )


def example_family(
    alpha: Pair = (-0.5, 0.5),
    beta: Pair = (0.5, -0.5),
    p: Pair = (2.0, 2.0),
    *,
    alpha_hat: Pair | None = None,
    beta_hat: Pair | None = None,
    eta: Pair = (1.0, 1.0),
) -> ModelParams:
    """f_1 = (1/2 + sgn t)(|s|^a1 + |t|^b1), f_2 = (1/2 + sgn s)(|s|^a2 + |t|^b2)."""
    return _example(
        Family.EXAMPLE_COUPLED, 0.5, ("t", "s"), alpha, beta, p, alpha_hat, beta_hat, eta
    )


def example_decoupled(
    alpha: Pair = (-0.5, 0.5),
    beta: Pair = (0.5, -0.5),
    p: Pair = (2.0, 2.0),
    *,
    alpha_hat: Pair | None = None,
    beta_hat: Pair | None = None,
    eta: Pair = (1.0, 1.0),
) -> ModelParams:
    """The Example with each prefactor keyed on its own component's sign."""
    return _example(
        Family.EXAMPLE_DECOUPLED, 0.5, ("s", "t"), alpha, beta, p, alpha_hat, beta_hat, eta
    )


def example_odd(
    alpha: Pair = (-0.5, 0.5),
    beta: Pair = (0.5, -0.5),
    p: Pair = (2.0, 2.0),
    *,
    alpha_hat: Pair | None = None,
    beta_hat: Pair | None = None,
    eta: Pair = (1.0, 1.0),
) -> ModelParams:
    """sgn(t)(...) and sgn(s)(...): odd under (s, t) -> (-s, -t), M = m = 1."""
    return _example(
        Family.EXAMPLE_ODD, 0.0, ("t", "s"), alpha, beta, p, alpha_hat, beta_hat, eta
    )


def custom_family(
    p: Pair,
    alpha: Pair,
    beta: Pair,
    *,
    alpha_hat: Pair | None = None,
    beta_hat: Pair | None = None,
    sign_offset: Pair = (0.5, 0.5),
    sign_gain: Pair = (1.0, 1.0),
    sign_source: tuple[str, str] = ("t", "s"),
    eta: Pair = (1.0, 1.0),
) -> ModelParams:
    """Sign-prefactor family with free constants; ranges are left to check_hypotheses."""
    bounds = [prefactor_bounds(sign_offset[i], sign_gain[i]) for i in range(2)]
    return ModelParams(
        family=Family.CUSTOM,
        p=p,
        alpha=alpha,
        beta=beta,
        alpha_hat=alpha if alpha_hat is None else alpha_hat,
        beta_hat=beta if beta_hat is None else beta_hat,
        M=(bounds[0][0], bounds[1][0]),
        m=(bounds[0][1], bounds[1][1]),
        eta=eta,
        coupling=Coupling.SIGN_COUPLED if tuple(sign_source) == ("t", "s") else Coupling.DECOUPLED,
        sign_offset=sign_offset,
        sign_gain=sign_gain,
        sign_source=tuple(sign_source),
    )


def model_from_config(cfg: ModelConfig) -> ModelParams:
    common = dict(alpha_hat=cfg.alpha_hat, beta_hat=cfg.beta_hat, eta=cfg.eta)
    if cfg.family is Family.CUSTOM:
        return custom_family(
            cfg.p,
            cfg.alpha,
            cfg.beta,
            sign_offset=cfg.sign_offset,
            sign_gain=cfg.sign_gain,
            sign_source=cfg.sign_source,
            **common,
        )
    builder = {
        Family.EXAMPLE_COUPLED: example_family,
        Family.EXAMPLE_DECOUPLED: example_decoupled,
        Family.EXAMPLE_ODD: example_odd,
    }[cfg.family]
    return builder(cfg.alpha, cfg.beta, cfg.p, **common)


# --- truncations ---------------------------------------------------------------


def _out(value: np.ndarray):
    return float(value) if np.ndim(value) == 0 else value


def gamma_eps(eps: float, s):
    """eps (1/2 + sgn s)."""
    return _out(eps * (0.5 + np.sign(np.asarray(s, dtype=float))))


def truncate_T(eps: float, u, u_bar):
    """gamma_eps(u) plus u clamped to [-u_bar, u_bar]; eps = 0 gives the plain clamp."""
    u = np.asarray(u, dtype=float)
    u_bar = np.asarray(u_bar, dtype=float)
    return _out(eps * (0.5 + np.sign(u)) + np.clip(u, -u_bar, u_bar))


def chi_hat(phi_val, s):
    """3s/2 above phi, (1/2 + sgn s) phi on [-phi, phi], s/2 below -phi."""
    s = np.asarray(s, dtype=float)
    phi_val = np.asarray(phi_val, dtype=float)
    middle = (0.5 + np.sign(s)) * phi_val
    return _out(np.where(s >= phi_val, 1.5 * s, np.where(s <= -phi_val, 0.5 * s, middle)))


def chi_mu(mu: float, s):
    """Cutoff equal to 1 on |s| <= mu, 0 on |s| >= 2 mu, linear in between."""
    if mu <= 0.0:
        raise InvalidArgument(f"mu must be positive, got {mu!r}")
    a = np.abs(np.asarray(s, dtype=float))
    return _out(np.where(a <= mu, 1.0, np.where(a <= 2.0 * mu, 2.0 - a / mu, 0.0)))


# --- homotopy reactions -----------------------------------------------------------


def _check_homotopy_args(t: float, eps: float) -> None:
    if not 0.0 <= t <= 1.0:
        raise InvalidArgument(f"t must lie in [0, 1], got {t!r}")
    if not 0.0 <= eps < 1.0:
        raise InvalidArgument(f"eps must lie in [0, 1), got {eps!r}")


def _regularized_reaction(model, i, eps, x, u1, u2, u_hi1, u_hi2):
    a1 = np.asarray(truncate_T(eps, u1, u_hi1))
    a2 = np.asarray(truncate_T(eps, u2, u_hi2))
    if eps == 0.0 and (np.any(a1 == 0.0) or np.any(a2 == 0.0)):
        raise SingularEvaluation("reaction evaluated at a zero argument with eps = 0")
    return reaction(model, i)(x, a1, a2)


def homotopy_F(model, i, t, eps, x, u1, u2, u_hi1, u_hi2, lam):
    """t f_i(x, T_1(u1), T_2(u2)) + (1 - t)(lam T_{i,0}(u_i^+)^(p_i - 1) + 1)."""
    _check_homotopy_args(t, eps)
    p = model.p[i]
    ui = np.asarray(u1 if i == 0 else u2, dtype=float)
    ubar = np.asarray(u_hi1 if i == 0 else u_hi2, dtype=float)
    value = (1.0 - t) * (lam * np.minimum(np.maximum(ui, 0.0), ubar) ** (p - 1.0) + 1.0)
    if t > 0.0:
        value = value + t * _regularized_reaction(model, i, eps, x, u1, u2, u_hi1, u_hi2)
    return value


def homotopy_Fhat(model, i, t, eps, x, u1, u2, u_hi1, u_hi2, phi, lam):
    """t f_i(x, T_1(u1), T_2(u2)) + (1 - t)(2/3)^(p_i - 1) lam |chi|^(p_i - 2) chi."""
    _check_homotopy_args(t, eps)
    p = model.p[i]
    chi = np.asarray(chi_hat(phi, u1 if i == 0 else u2))
    value = (1.0 - t) * (2.0 / 3.0) ** (p - 1.0) * lam * np.abs(chi) ** (p - 1.0) * np.sign(chi)
    if t > 0.0:
        value = value + t * _regularized_reaction(model, i, eps, x, u1, u2, u_hi1, u_hi2)
    return value


def eval_F_t(
    model: ModelParams,
    i: int,
    t: float,
    eps: float,
    node,
    u1,
    u2,
    barriers: BarrierSet,
    eig: Sequence[Eigenpair],
):
    """F_{i,t} at mesh node(s) ``node`` for component values ``u1``, ``u2`` there."""
    x = barriers.mesh.coords[node]
    return _out(
        np.asarray(
            homotopy_F(
                model, i, t, eps, x, u1, u2,
                barriers.u_hi[0][node], barriers.u_hi[1][node], eig[i].lam,
            )
        )
    )


def eval_Fhat_t(
    model: ModelParams,
    i: int,
    t: float,
    eps: float,
    node,
    u1,
    u2,
    barriers: BarrierSet,
    eig: Sequence[Eigenpair],
):
    """The chi-hat homotopy reaction at mesh node(s) ``node``."""
    x = barriers.mesh.coords[node]
    return _out(
        np.asarray(
            homotopy_Fhat(
                model, i, t, eps, x, u1, u2,
                barriers.u_hi[0][node], barriers.u_hi[1][node],
                eig[i].phi[node], eig[i].lam,
            )
        )
    )


# --- hypothesis checks ---------------------------------------------------------


def _sample_points(model: ModelParams, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Signed log grid of 100 x 100 points plus seeded uniform points, all nonzero."""
    axes = [np.concatenate([-eta * SAMPLE_GRID[::-1], eta * SAMPLE_GRID]) for eta in model.eta]
    S, T = np.meshgrid(axes[0], axes[1], indexing="ij")
    rng = np.random.default_rng(seed)
    extra = rng.uniform(-1.0, 1.0, size=(N_RANDOM_SAMPLES, 2)) * np.asarray(model.eta)
    extra[extra == 0.0] = 1e-4
    return np.concatenate([S.ravel(), extra[:, 0]]), np.concatenate([T.ravel(), extra[:, 1]])


def _sampled(
    name: str, i: int, margin: np.ndarray, s: np.ndarray, t: np.ndarray, detail: str
) -> HypothesisCheck:
    if margin.size == 0 or np.all(margin >= 0.0):
        return HypothesisCheck(name=name, passed=True, component=i, detail=detail)
    k = int(np.argmin(margin))
    return HypothesisCheck(
        name=name,
        passed=False,
        component=i,
        detail=f"{detail}; worst margin {margin[k]:.3e}",
        witness=(0.5, float(s[k]), float(t[k])),
    )


def _exact(name: str, problems: list[str], component: int | None = None) -> HypothesisCheck | None:
    if not problems:
        return None
    return HypothesisCheck(name=name, passed=False, component=component, detail="; ".join(problems))


def upper_range_problems(model: ModelParams) -> list[str]:
    a1, a2 = model.alpha
    b1, b2 = model.beta
    p1, p2 = model.p
    out = []
    if not (-1.0 < a1 < 0.0 and -1.0 < b2 < 0.0):
        out.append("need -1 < alpha_1, beta_2 < 0")
    if not abs(b1) < min(1.0, p1 - 1.0):
        out.append("need |beta_1| < min(1, p_1 - 1)")
    if not abs(a2) < min(1.0, p2 - 1.0):
        out.append("need |alpha_2| < min(1, p_2 - 1)")
    if 0.0 in (*model.alpha, *model.beta):
        out.append("exponents must be nonzero")
    if min(model.M) <= 0.0:
        out.append("need M_i > 0")
    return out


def lower_range_problems(model: ModelParams) -> list[str]:
    out = []
    for i in range(2):
        ah, bh = model.alpha_hat[i], model.beta_hat[i]
        if not (model.alpha[i] >= ah and model.beta[i] >= bh):
            n = i + 1
            out.append(f"need alpha_{n} >= alpha_hat_{n} and beta_{n} >= beta_hat_{n}")
        if not ah + bh > -min(1.0, model.p[i] - 1.0):
            out.append(f"need alpha_hat_{i + 1} + beta_hat_{i + 1} > -min(1, p_{i + 1} - 1)")
        if ah == 0.0 or bh == 0.0:
            out.append("hat exponents must be nonzero")
    if min(model.m) <= 0.0:
        out.append("need m_i > 0")
    return out


def nodal_range_problems(model: ModelParams) -> list[str]:
    out = []
    if not model.alpha[1] >= model.alpha_hat[1] > 0.0:
        out.append("need alpha_2 >= alpha_hat_2 > 0")
    if not model.beta[0] >= model.beta_hat[0] > 0.0:
        out.append("need beta_1 >= beta_hat_1 > 0")
    return out


def _blowup(model: ModelParams, i: int) -> HypothesisCheck:
    """f_i * sgn(s_j) must exceed the threshold as s_i -> 0 from the side of sgn(s_j)."""
    f = reaction(model, i)
    j = 1 - i
    others = np.concatenate([-model.eta[j] * SAMPLE_GRID, model.eta[j] * SAMPLE_GRID])
    depths = np.sign(others)[:, None] * BLOWUP_DEPTHS[None, :]
    other_grid = np.broadcast_to(others[:, None], depths.shape)
    s, t = (depths, other_grid) if i == 0 else (other_grid, depths)
    with np.errstate(invalid="ignore", over="ignore"):
        signed = np.sign(other_grid) * f(None, s, t)
    innermost = signed[:, -1]
    trend = innermost - signed[:, 0]
    margin = np.minimum(innermost - BLOWUP_THRESHOLD, trend)
    margin = np.where(np.isfinite(margin), margin, -np.inf)
    return _sampled(
        SINGULAR_BLOWUP,
        i,
        margin,
        s[:, -1],
        t[:, -1],
        f"sgn(s_j) f_i > {BLOWUP_THRESHOLD:g} at |s_i| = {BLOWUP_DEPTHS[-1]:g}",
    )


def check_hypotheses(model: ModelParams, sampler_seed: int = 0) -> HypothesisReport:
    """Exact exponent-range checks plus sampled growth, bound and sign checks.

    Sampled checks use a signed logarithmic 100 x 100 grid over
    ([-eta, eta] minus 0)^2 and ``N_RANDOM_SAMPLES`` seeded uniform points.
    Failures never raise; a failed sampled check carries its witness.
    """
    s, t = _sample_points(model, sampler_seed)
    x = np.full((s.size, 1), 0.5)
    pos = (s > 0.0) & (t > 0.0)
    sp_, tp = s[pos], t[pos]
    checks: list[HypothesisCheck] = []

    upper_exact = _exact(UPPER_GROWTH, upper_range_problems(model))
    lower_exact = _exact(LOWER_GROWTH, lower_range_problems(model))

    for i in range(2):
        f = reaction(model, i)
        a, b = model.alpha[i], model.beta[i]
        ah, bh = model.alpha_hat[i], model.beta_hat[i]
        M, m = model.M[i], model.m[i]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            fp = f(x[pos], sp_, tp)
            fn = f(x[pos], -sp_, -tp)
            upper = M * (1.0 + sp_**a + tp**b)
            lower = m * (sp_**ah + tp**bh)
            fa = f(x, s, t)
            local = M * (1.0 + np.abs(s) ** a + np.abs(t) ** b)
            sj = np.sign(t if i == 0 else s)

        if upper_exact is None:
            margin = np.minimum(upper * (1 + REL_SLACK) - fp, fn + upper * (1 + REL_SLACK))
            checks.append(
                _sampled(UPPER_GROWTH, i, margin, sp_, tp, "f_i(s,t) <= M_i(1+s^a+t^b), mirrored")
            )
        if lower_exact is None:
            margin = np.minimum(fp - lower * (1 - REL_SLACK), -lower * (1 - REL_SLACK) - fn)
            checks.append(
                _sampled(LOWER_GROWTH, i, margin, sp_, tp, "f_i(s,t) >= m_i(s^ah+t^bh), mirrored")
            )
        margin = local * (1 + REL_SLACK) - np.abs(fa)
        checks.append(_sampled(LOCAL_BOUND, i, margin, s, t, "|f_i| <= M_i(1+|s|^a+|t|^b)"))
        checks.append(_sign_coupling(i, fa * sj, s, t))
        checks.append(_blowup(model, i))

    for exact in (upper_exact, lower_exact):
        if exact is not None:
            checks.append(exact)
    if min(model.eta) <= 0.0:
        checks.append(HypothesisCheck(name=LOCAL_BOUND, passed=False, detail="need eta_i > 0"))
    nodal = _exact(NODAL_EXPONENTS, nodal_range_problems(model))
    checks.append(nodal or HypothesisCheck(name=NODAL_EXPONENTS, passed=True))

    report = HypothesisReport(checks=sorted(checks, key=lambda c: (c.name, c.component or 0)))
    logger.info("hypotheses: failed=%s", sorted(report.failed_names()) or "none")
    return report


def _sign_coupling(i: int, signed: np.ndarray, s: np.ndarray, t: np.ndarray) -> HypothesisCheck:
    # Strict: a zero value fails as well.
    if np.all(signed > 0.0):
        return HypothesisCheck(
            name=SIGN_COUPLING, passed=True, component=i, detail="f_i sgn(s_j) > 0"
        )
    k = int(np.argmin(signed))
    return HypothesisCheck(
        name=SIGN_COUPLING,
        passed=False,
        component=i,
        detail=f"f_i sgn(s_j) > 0; worst value {signed[k]:.3e}",
        witness=(0.5, float(s[k]), float(t[k])),
    )


def check_fhat_lower_bounds(
    model: ModelParams,
    barriers: BarrierSet,
    eig: Sequence[Eigenpair],
    eps: float = 1.0 / 64.0,
    times: Sequence[float] = HOMOTOPY_TIMES,
) -> list[InequalityCheck]:
    """Floors of the chi-hat homotopy reaction at positive states.

    At every interior node and every t in ``times``, with each component
    sampled from {u_lo_i, phi_i, u_hi_i}:

    * away from the boundary layer, Fhat_{i,t} > C^-(p_i-1)(d^a^_i + d^b^_i);
    * inside the layer, Fhat_{i,t} > -C^-(p_i-1).
    """
    mesh = barriers.mesh
    idx = mesh.interior
    d = barriers.d.values[idx]
    in_layer = barriers.layer.mask[idx]
    x = mesh.coords[idx]
    states = [
        (barriers.u_lo[k][idx], eig[k].phi[idx], barriers.u_hi[k][idx]) for k in range(2)
    ]
    out: list[InequalityCheck] = []
    for i in range(2):
        scale = barriers.C ** (-(model.p[i] - 1.0))
        floor = np.where(
            in_layer, -scale, scale * (d ** model.alpha_hat[i] + d ** model.beta_hat[i])
        )
        worst = np.full(idx.size, np.inf)
        for t in times:
            for u1 in states[0]:
                for u2 in states[1]:
                    val = homotopy_Fhat(
                        model, i, t, eps, x, u1, u2,
                        barriers.u_hi[0][idx], barriers.u_hi[1][idx],
                        eig[i].phi[idx], eig[i].lam,
                    )
                    worst = np.minimum(worst, val - floor)
        for label, sel, relation in (
            ("core", ~in_layer, "Fhat_t > C^-(p-1)(d^a^ + d^b^) off the layer"),
            ("layer", in_layer, "Fhat_t > -C^-(p-1) in the layer"),
        ):
            if not np.any(sel):
                continue
            k = int(np.argmin(np.where(sel, worst, np.inf)))
            out.append(
                InequalityCheck(
                    name=f"homotopy_floor_{label}_{i + 1}",
                    relation=relation,
                    worst_margin=float(worst[k]),
                    passed=bool(worst[k] > 0.0),
                    worst_node=int(idx[k]),
                )
            )
    return out
