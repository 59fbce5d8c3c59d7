"""Tests for the auxiliary problems, barrier construction and calibration."""

import numpy as np
import pytest

from plap_lab.barriers import (
    build_barriers,
    calibrate_C,
    chain_checks,
    solve_y,
    solve_z,
    verify_sub_super,
)
from plap_lab.eigen import principal_eigenpair
from plap_lab.errors import CalibrationFailure, ConvergenceFailure, InvalidArgument
from plap_lab.mesh_domain import boundary_layer, build_interval_mesh, distance_field
from plap_lab.models import SolverOpts
from plap_lab.reactions import check_fhat_lower_bounds, custom_family, example_family, example_odd
from tests.oracles import distance, green_center


@pytest.fixture(scope="module")
def opts():
    """Default 1D solver options."""
    return SolverOpts()


@pytest.fixture(scope="module")
def setup256():
    """Interval mesh with n = 256, its distance field and a delta = 0.1 layer."""
    mesh = build_interval_mesh(256)
    d = distance_field(mesh)
    return mesh, d, boundary_layer(mesh, d, 0.1)


@pytest.fixture(scope="module")
def model():
    """The sign-coupled Example."""
    return example_family()


@pytest.fixture(scope="module")
def eig(setup256, opts):
    """Shared p = 2 eigenpair for both components."""
    pair = principal_eigenpair(setup256[0], 2.0, opts)
    return pair, pair


@pytest.fixture(scope="module")
def calibrated(model, setup256, eig, opts):
    """Calibrated (C, barriers) for the Example."""
    mesh, d, layer = setup256
    return calibrate_C(model, mesh, d, layer, eig, opts)


class TestSolveY:
    """Tests for solve_y."""

    def test_regular_exponents(self, opts):
        mesh = build_interval_mesh(512)
        y = solve_y(mesh, distance_field(mesh), 2.0, 1.0, 1.0, opts)
        expected = green_center(lambda s: 1.0 + 2.0 * distance(s))
        assert expected == pytest.approx(5.0 / 24.0)
        assert y[256] == pytest.approx(expected, abs=1e-3)

    def test_singular_exponents(self, opts):
        mesh = build_interval_mesh(512)
        y = solve_y(mesh, distance_field(mesh), 2.0, -0.5, 0.5, opts)
        expected = green_center(lambda s: 1.0 + distance(s) ** -0.5 + distance(s) ** 0.5)
        assert y[256] == pytest.approx(expected, rel=1e-2)

    def test_positive_interior(self, setup256, opts):
        mesh, d, _ = setup256
        y = solve_y(mesh, d, 3.0, -0.5, 0.5, opts)
        assert np.all(y[mesh.interior] > 0.0)
        assert np.all(y[mesh.boundary_mask] == 0.0)

    @pytest.mark.parametrize("alpha", [-1.5, 0.0])
    def test_rejects_exponent(self, setup256, opts, alpha):
        mesh, d, _ = setup256
        with pytest.raises(InvalidArgument):
            solve_y(mesh, d, 2.0, alpha, 0.5, opts)


class TestSolveZ:
    """Tests for solve_z."""

    def test_piecewise_source(self, opts):
        mesh = build_interval_mesh(512)
        d = distance_field(mesh)
        z = solve_z(mesh, d, boundary_layer(mesh, d, 0.1), 2.0, 1.0, 1.0, opts)

        def source(s):
            return -1.0 if distance(s) < 0.1 else 2.0 * distance(s)

        assert z[256] == pytest.approx(green_center(source, breaks=(0.1,)), abs=1e-3)

    def test_below_y(self, setup256, opts):
        mesh, d, layer = setup256
        y = solve_y(mesh, d, 2.0, -0.5, 0.5, opts)
        z = solve_z(mesh, d, layer, 2.0, -0.5, 0.5, opts)
        assert np.all(z[mesh.interior] < y[mesh.interior])

    def test_positive_for_defaults(self, setup256, opts):
        mesh, d, layer = setup256
        for alpha_hat, beta_hat in ((-0.5, 0.5), (0.5, -0.5)):
            z = solve_z(mesh, d, layer, 2.0, alpha_hat, beta_hat, opts)
            assert np.all(z[mesh.interior] > 0.0)

    def test_rejects_exponents(self, setup256, opts):
        mesh, d, layer = setup256
        with pytest.raises(InvalidArgument):
            solve_z(mesh, d, layer, 2.0, -0.8, -0.5, opts)


class TestBuildBarriers:
    """Tests for build_barriers."""

    def test_ratio(self, setup256, opts):
        mesh, d, layer = setup256
        y = solve_y(mesh, d, 2.0, -0.5, 0.5, opts)
        barriers = build_barriers((y, y), (y, y), 2.0, mesh=mesh, d=d, layer=layer)
        idx = mesh.interior
        np.testing.assert_allclose(barriers.u_hi[0][idx] / barriers.u_lo[0][idx], 4.0)

    def test_ordering(self, calibrated):
        _, barriers = calibrated
        wide = barriers.with_C(10.0)
        for i in range(2):
            assert np.all(wide.u_lo[i] <= wide.u_hi[i])
        assert wide.C == 10.0

    def test_rejects_small_C(self, calibrated):
        _, barriers = calibrated
        with pytest.raises(InvalidArgument):
            barriers.with_C(1.0)

    def test_rejects_nonpositive_fields(self, setup256):
        mesh, d, layer = setup256
        zero = np.zeros(mesh.n_nodes)
        with pytest.raises(InvalidArgument):
            build_barriers((zero, zero), (zero, zero), 2.0, mesh=mesh, d=d, layer=layer)

    def test_comparability_constant(self, calibrated):
        _, barriers = calibrated
        assert 1.0 <= barriers.c <= 20.0

    def test_chain(self, calibrated):
        _, barriers = calibrated
        checks = chain_checks(barriers)
        assert {c.name for c in checks} == {
            "comparability_1",
            "comparability_2",
            "nesting_1",
            "nesting_2",
        }
        assert all(c.passed for c in checks)


class TestCalibration:
    """Tests for calibrate_C and verify_sub_super."""

    def test_auxiliary_failure_is_calibration_failure(self, model, setup256, eig):
        mesh, d, layer = setup256
        tight = SolverOpts(tol_residual=1e-30, max_newton_iters=1, max_picard_iters=1)
        with pytest.raises(CalibrationFailure, match="auxiliary") as info:
            calibrate_C(model, mesh, d, layer, eig, tight)
        assert isinstance(info.value.__cause__, ConvergenceFailure)

    def test_finds_C(self, calibrated, model, eig):
        C, barriers = calibrated
        assert 2.0 <= C <= 2.0**20
        report = verify_sub_super(model, barriers, eig)
        assert report.passed
        assert report.C == C

    def test_chain_holds_nodewise(self, calibrated):
        _, barriers = calibrated
        idx = barriers.mesh.interior
        d = barriers.d.values[idx]
        for i in range(2):
            y, z = barriers.y[i][idx], barriers.z[i][idx]
            assert np.all(d / barriers.c <= z * (1 + 1e-12))
            assert np.all(z <= y)
            assert np.all(y <= barriers.c * d * (1 + 1e-12))

    def test_eigen_floor(self, calibrated, eig):
        _, barriers = calibrated
        for i in range(2):
            assert np.all(eig[i].phi >= barriers.u_lo[i])

    def test_nested_boxes(self, calibrated):
        _, barriers = calibrated
        idx = barriers.mesh.interior
        for i in range(2):
            assert np.all(barriers.u_lo[i][idx] < barriers.u_hi[i][idx])

    def test_doubling_keeps_passing(self, calibrated, model, eig):
        C, barriers = calibrated
        assert verify_sub_super(model, barriers.with_C(2 * C), eig).passed

    def test_calibration_is_nontrivial(self, calibrated, model, eig):
        C, barriers = calibrated
        assert not verify_sub_super(model, barriers.with_C(1.01), eig).passed
        if C > 2.0:
            assert not verify_sub_super(model, barriers.with_C(C / 2), eig).passed

    def test_small_C_fails_supersolution(self, calibrated, model):
        _, barriers = calibrated
        report = verify_sub_super(model, barriers.with_C(1.01))
        failed = {c.name for c in report.checks if not c.passed}
        assert failed & {"supersolution_1", "supersolution_2"}

    def test_zero_lower_constant_rejected(self, setup256, eig, opts):
        mesh, d, layer = setup256
        model = custom_family((2.0, 2.0), (-0.5, 0.5), (0.5, -0.5), sign_offset=(1.0, 1.0))
        assert min(model.m) == 0.0
        with pytest.raises(InvalidArgument):
            calibrate_C(model, mesh, d, layer, eig, opts)

    def test_odd_model_mirror_margins(self, calibrated):
        _, barriers = calibrated
        report = verify_sub_super(example_odd(), barriers)
        margins = {c.name: c.worst_margin for c in report.checks}
        for n in (1, 2):
            assert margins[f"supersolution_{n}"] == pytest.approx(
                margins[f"negative_subsolution_{n}"], abs=1e-12
            )
            assert margins[f"subsolution_{n}"] == pytest.approx(
                margins[f"negative_supersolution_{n}"], abs=1e-12
            )

    def test_homotopy_floors(self, calibrated, model, eig):
        _, barriers = calibrated
        checks = check_fhat_lower_bounds(model, barriers, eig)
        assert {c.name for c in checks} >= {"homotopy_floor_core_1", "homotopy_floor_core_2"}
        assert all(c.passed for c in checks), [c for c in checks if not c.passed]
