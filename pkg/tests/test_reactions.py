"""Tests for reaction families, truncations, homotopy reactions and hypothesis checks."""

import numpy as np
import pytest

from plap_lab.barriers import build_barriers
from plap_lab.eigen import Eigenpair
from plap_lab.errors import InvalidArgument, SingularEvaluation
from plap_lab.mesh_domain import boundary_layer, build_interval_mesh, distance_field
from plap_lab.models import Coupling, Family, ModelConfig
from plap_lab.reactions import (
    LOWER_GROWTH,
    NODAL_EXPONENTS,
    SIGN_COUPLING,
    SINGULAR_BLOWUP,
    UPPER_GROWTH,
    chi_hat,
    chi_mu,
    check_hypotheses,
    custom_family,
    eval_F_t,
    eval_Fhat_t,
    example_decoupled,
    example_family,
    example_odd,
    gamma_eps,
    homotopy_F,
    homotopy_Fhat,
    model_from_config,
    nodal_range_problems,
    prefactor_bounds,
    reaction,
    sign_reaction,
    truncate_T,
)

GRID = np.concatenate([-np.logspace(-6, 2, 400), [0.0], np.logspace(-6, 2, 400)])
EXACT = 1e-14


@pytest.fixture
def model():
    """The sign-coupled Example."""
    return example_family()


@pytest.fixture
def unit_barriers():
    """Barriers with u_hi = 1 at every interior node (C = 2, y = 1/2)."""
    mesh = build_interval_mesh(8)
    d = distance_field(mesh)
    y = np.where(mesh.boundary_mask, 0.0, 0.5)
    return build_barriers(
        (y, y), (0.5 * y, 0.5 * y), 2.0, mesh=mesh, d=d, layer=boundary_layer(mesh, d, 0.2)
    )


@pytest.fixture
def flat_eig(unit_barriers):
    """A flat stand-in eigenpair: lambda = 3, phi = 0.8 inside."""
    phi = np.where(unit_barriers.mesh.boundary_mask, 0.0, 0.8)
    pair = Eigenpair(lam=3.0, phi=phi, c0=2.0, p=2.0)
    return pair, pair


class TestFamilies:
    """Tests for the built-in reaction families."""

    def test_example_constants(self, model):
        assert model.M == (1.5, 1.5)
        assert model.m == (0.5, 0.5)
        assert model.coupling is Coupling.SIGN_COUPLED
        assert model.alpha_hat == model.alpha

    def test_example_values(self, model):
        f1, f2 = reaction(model, 0), reaction(model, 1)
        assert f1(None, 4.0, 9.0) == pytest.approx(1.5 * (0.5 + 3.0))
        assert f1(None, 4.0, -9.0) == pytest.approx(-0.5 * (0.5 + 3.0))
        assert f2(None, -4.0, 0.25) == pytest.approx(-0.5 * (2.0 + 2.0))

    def test_blows_up_at_zero(self, model):
        f1 = reaction(model, 0)
        assert f1(None, 1e-12, 1.0) > 1e5

    def test_decoupled_sources(self):
        model = example_decoupled()
        assert model.coupling is Coupling.DECOUPLED
        assert reaction(model, 0)(None, 1.0, -1.0) == pytest.approx(3.0)

    def test_odd_is_odd(self):
        model = example_odd()
        s = np.array([0.3, -0.7, 2.0])
        t = np.array([-0.1, 0.4, 5.0])
        for i in range(2):
            f = reaction(model, i)
            np.testing.assert_array_equal(f(None, -s, -t), -f(None, s, t))
        assert model.M == (1.0, 1.0)
        assert model.m == (1.0, 1.0)

    def test_example_rejects_bad_exponents(self):
        with pytest.raises(InvalidArgument):
            example_family(alpha=(-1.5, 0.5))

    def test_example_rejects_p(self):
        with pytest.raises(InvalidArgument):
            example_family(p=(1.0, 2.0))

    def test_prefactor_bounds(self):
        assert prefactor_bounds(0.5, 1.0) == (1.5, 0.5)

    def test_bad_sign_source(self):
        with pytest.raises(InvalidArgument):
            sign_reaction(0.5, 1.0, "x", -0.5, 0.5)

    @pytest.mark.parametrize("family", list(Family))
    def test_model_from_config(self, family):
        model = model_from_config(ModelConfig(family=family))
        assert model.family is family
        assert model.p == (2.0, 2.0)

    def test_custom_family_sources(self):
        model = custom_family((2.0, 2.0), (-0.5, 0.5), (0.5, -0.5), sign_source=("s", "t"))
        assert model.coupling is Coupling.DECOUPLED


class TestTruncations:
    """Tests for gamma_eps, truncate_T, chi_hat and chi_mu."""

    def test_gamma_values(self):
        assert gamma_eps(0.1, 2.0) == pytest.approx(0.15)
        assert gamma_eps(0.1, -3.0) == pytest.approx(-0.05)
        assert gamma_eps(0.1, 0.0) == pytest.approx(0.05)

    def test_truncate_values(self):
        assert truncate_T(0.1, 2.0, 1.0) == pytest.approx(1.15)
        assert truncate_T(0.1, -2.0, 1.0) == pytest.approx(-1.05)
        assert truncate_T(0.0, 0.3, 1.0) == 0.3

    def test_chi_hat_values(self):
        assert chi_hat(1.0, 2.0) == 3.0
        assert chi_hat(1.0, 0.0) == 0.5
        assert chi_hat(1.0, -2.0) == -1.0

    def test_chi_mu_values(self):
        assert chi_mu(1.0, 0.5) == 1.0
        assert chi_mu(1.0, 1.5) == 0.5
        assert chi_mu(1.0, -3.0) == 0.0

    def test_chi_mu_rejects_nonpositive_mu(self):
        with pytest.raises(InvalidArgument):
            chi_mu(0.0, 1.0)

    @pytest.mark.parametrize("eps", [0.5, 0.1, 1e-3])
    @pytest.mark.parametrize("u_bar", [0.2, 1.0, 7.0])
    def test_truncation_bounds(self, eps, u_bar):
        T = np.asarray(truncate_T(eps, GRID, u_bar))
        assert np.all(np.abs(T) >= eps / 2 - EXACT)
        assert np.all(np.abs(T) <= 1.5 * eps + u_bar + EXACT)
        nonzero = GRID != 0.0
        assert np.all(np.sign(T[nonzero]) == np.sign(GRID[nonzero]))
        assert truncate_T(eps, 0.0, u_bar) == pytest.approx(eps / 2)

    def test_truncation_is_shifted_clamp(self):
        eps, u_bar = 0.1, 1.0
        T = np.asarray(truncate_T(eps, GRID, u_bar))
        expected = np.clip(GRID, -u_bar, u_bar) + np.asarray(gamma_eps(eps, GRID))
        np.testing.assert_allclose(T, expected, atol=EXACT)

    def test_gamma_grid(self):
        g = np.asarray(gamma_eps(0.2, GRID))
        assert set(np.unique(np.round(g, 14))) == {-0.1, 0.1, 0.3}

    @pytest.mark.parametrize("phi", [0.3, 1.0, 4.0])
    def test_chi_hat_seams(self, phi):
        assert chi_hat(phi, phi) == pytest.approx(1.5 * phi, abs=EXACT)
        assert chi_hat(phi, -phi) == pytest.approx(-0.5 * phi, abs=EXACT)
        assert (2.0 / 3.0) * chi_hat(phi, phi) == pytest.approx(phi, abs=EXACT)
        inner = np.linspace(1e-9, phi * (1 - 1e-9), 50)
        np.testing.assert_allclose(chi_hat(phi, inner), 1.5 * phi, atol=EXACT)
        np.testing.assert_allclose(chi_hat(phi, -inner), -0.5 * phi, atol=EXACT)

    @pytest.mark.parametrize("mu", [0.01, 0.5, 2.0])
    def test_chi_mu_grid(self, mu):
        values = np.asarray(chi_mu(mu, GRID))
        assert np.all((values >= 0.0) & (values <= 1.0))
        assert chi_mu(mu, mu) == pytest.approx(1.0, abs=EXACT)
        assert chi_mu(mu, 2 * mu) == pytest.approx(0.0, abs=EXACT)
        neg_part = np.maximum(-GRID, 0.0)
        pos_part = np.maximum(GRID, 0.0)
        lhs = np.asarray(chi_mu(mu, -neg_part)) + np.asarray(chi_mu(mu, pos_part))
        np.testing.assert_allclose(lhs, 1.0 + values, atol=EXACT)


class TestHomotopy:
    """Tests for the homotopy reactions."""

    def test_F_at_t0(self, model):
        value = homotopy_F(model, 0, 0.0, 0.1, None, 0.5, -7.0, 1.0, 1.0, 3.0)
        assert value == pytest.approx(3.0 * 0.5 + 1.0)
        negative = homotopy_F(model, 0, 0.0, 0.1, None, -0.5, 1.0, 1.0, 1.0, 3.0)
        assert negative == pytest.approx(1.0)

    def test_F_at_t1(self, model):
        value = homotopy_F(model, 0, 1.0, 0.1, None, 0.5, 0.5, 1.0, 1.0, 3.0)
        assert value == pytest.approx(1.5 * (0.65**-0.5 + 0.65**0.5))
        assert value == pytest.approx(3.0698, abs=1e-4)

    def test_Fhat_fixes_phi(self, model):
        phi = np.linspace(0.1, 1.0, 10)
        value = homotopy_Fhat(model, 0, 0.0, 0.1, None, phi, phi, 2.0, 2.0, phi, 4.0)
        np.testing.assert_allclose(value, 4.0 * phi, atol=1e-14)

    def test_Fhat_at_zero_state(self, model):
        value = homotopy_Fhat(model, 1, 0.0, 0.1, None, 0.3, 0.0, 1.0, 1.0, 0.6, 4.0)
        assert value == pytest.approx((2.0 / 3.0) * 4.0 * 0.3)
        assert value > 0.0

    def test_Fhat_matches_F_at_t1(self, model):
        F = homotopy_F(model, 1, 1.0, 0.05, None, 0.2, -0.4, 1.0, 1.0, 3.0)
        Fhat = homotopy_Fhat(model, 1, 1.0, 0.05, None, 0.2, -0.4, 1.0, 1.0, 0.7, 3.0)
        assert Fhat == pytest.approx(F)

    def test_singular_at_eps_zero(self, model):
        with pytest.raises(SingularEvaluation):
            homotopy_F(model, 0, 0.5, 0.0, None, 0.0, 0.5, 1.0, 1.0, 3.0)

    def test_rejects_bad_t(self, model):
        with pytest.raises(InvalidArgument):
            homotopy_F(model, 0, 1.5, 0.1, None, 0.5, 0.5, 1.0, 1.0, 3.0)

    def test_eval_at_nodes(self, model, unit_barriers, flat_eig):
        value = eval_F_t(model, 0, 1.0, 0.1, 4, 0.5, 0.5, unit_barriers, flat_eig)
        assert value == pytest.approx(3.0698, abs=1e-4)
        nodes = np.array([2, 3, 4])
        vec = eval_F_t(model, 0, 1.0, 0.1, nodes, np.full(3, 0.5), 0.5, unit_barriers, flat_eig)
        np.testing.assert_allclose(vec, value)

    def test_eval_fhat_at_phi(self, model, unit_barriers, flat_eig):
        value = eval_Fhat_t(model, 1, 0.0, 0.1, 4, 0.1, 0.8, unit_barriers, flat_eig)
        assert value == pytest.approx(3.0 * 0.8)


class TestHypotheses:
    """Tests for check_hypotheses."""

    def test_example_passes(self, model):
        report = check_hypotheses(model)
        assert report.passed, report.failed_names()
        names = {c.name for c in report.checks}
        assert {SINGULAR_BLOWUP, UPPER_GROWTH, LOWER_GROWTH, SIGN_COUPLING} <= names

    def test_odd_passes(self):
        assert check_hypotheses(example_odd()).passed

    def test_alpha_out_of_range(self):
        model = custom_family((2.0, 2.0), (-1.5, 0.5), (0.5, -0.5))
        report = check_hypotheses(model)
        assert UPPER_GROWTH in report.failed_names()
        assert "alpha_1" in report.get(UPPER_GROWTH).detail

    def test_decoupled_fails_sign_coupling(self):
        report = check_hypotheses(example_decoupled())
        assert report.failed_names() == {SIGN_COUPLING}
        failed = [c for c in report.checks if c.name == SIGN_COUPLING and not c.passed]
        assert failed and failed[0].witness is not None

    def test_blowup_fails_for_regular_reaction(self):
        model = custom_family((2.0, 2.0), (0.5, 0.5), (0.5, 0.5))
        assert SINGULAR_BLOWUP in check_hypotheses(model).failed_names()

    def test_nodal_exponents(self):
        model = example_family(beta_hat=(-0.2, -0.5))
        assert nodal_range_problems(model)
        assert NODAL_EXPONENTS in check_hypotheses(model).failed_names()

    def test_deterministic(self, model):
        assert check_hypotheses(model, 5) == check_hypotheses(model, 5)
