"""Tests for the command bodies behind the CLI."""

from pathlib import Path

import pytest

from plap_lab.barriers import build_barriers
from plap_lab.config import build_model, load_config
from plap_lab.errors import InvalidArgument
from plap_lab.models import BoxKind, ContinuationDiagnostics, SignKind
from plap_lab.pipeline import (
    _plot_branch,
    _write_branch,
    allowed_failures,
    eigenpairs,
    prepare,
    run_eigen,
    run_solve,
)
from plap_lab.store import RunStore
from plap_lab.system_solver import SolutionBranch, SolutionPair

FIXTURES = Path(__file__).parent / "fixtures"


def _context(name, tmp_path):
    return prepare(load_config(FIXTURES / name), RunStore(tmp_path / "out"))


def _synthetic_branch(ctx, with_limit=True):
    """A one-rung branch whose fields are the distance function."""
    d = ctx.d.values
    pair = SolutionPair(u1=d, u2=0.5 * d, eps=0.0, residual=(0.0, 0.0), box=BoxKind.POSITIVE)
    branch = SolutionBranch(
        label=BoxKind.POSITIVE,
        ladder=[pair],
        limit=pair if with_limit else None,
        diagnostics=ContinuationDiagnostics(),
        rung_ns=[4],
    )
    barriers = build_barriers(
        (2 * d, 2 * d), (d, d), 2.0, mesh=ctx.mesh, d=ctx.d, layer=ctx.layer
    )
    return branch, barriers


class TestArtifacts:
    """Tests for branch artifact writing."""

    def test_write_branch(self, tmp_path):
        ctx = _context("small.toml", tmp_path)
        branch, _ = _synthetic_branch(ctx)
        _write_branch(ctx, branch, branch.summary(None, [SignKind.POSITIVE]))
        for name in ("rung_n004.csv", "diagnostics.json", "limit.csv"):
            assert ctx.store.exists("positive", name)

    def test_line_plot_1d(self, tmp_path):
        ctx = _context("small.toml", tmp_path)
        branch, barriers = _synthetic_branch(ctx)
        _plot_branch(ctx, branch, barriers)
        svg = (ctx.store.out_dir / "positive" / "limit.svg").read_text()
        assert svg.startswith("<svg")

    def test_heatmaps_2d(self, tmp_path):
        ctx = _context("square.toml", tmp_path)
        branch, barriers = _synthetic_branch(ctx)
        _plot_branch(ctx, branch, barriers)
        for name in ("limit_u1_grid.csv", "limit_u2_grid.csv", "limit_u1.svg", "limit_u2.svg"):
            assert ctx.store.exists("positive", name)
        assert not ctx.store.exists("positive", "limit.svg")

    def test_no_limit_no_plot(self, tmp_path):
        ctx = _context("small.toml", tmp_path)
        branch, barriers = _synthetic_branch(ctx, with_limit=False)
        _plot_branch(ctx, branch, barriers)
        assert not ctx.store.exists("positive")


class TestCommandBodies:
    """Tests for the run_* helpers."""

    def test_equal_exponents_share_one_solve(self, tmp_path):
        ctx = _context("small.toml", tmp_path)
        first, second = eigenpairs(ctx)
        assert first is second

    def test_run_eigen_writes_mesh(self, tmp_path):
        store = RunStore(tmp_path / "out")
        run_eigen(load_config(FIXTURES / "small.toml"), store)
        lines = (store.out_dir / "eigen" / "mesh.csv").read_text().splitlines()
        assert len(lines) == 66

    def test_nodal_rejected_before_solving(self, tmp_path):
        store = RunStore(tmp_path / "out")
        cfg = load_config(FIXTURES / "nodal_excluded.toml")
        with pytest.raises(InvalidArgument, match="beta_1"):
            run_solve(cfg, BoxKind.NODAL, store)
        assert not store.exists("nodal")
        assert not store.exists("eigen")

    @pytest.mark.parametrize(
        ("name", "allowed"),
        [("example.toml", []), ("decoupled.toml", ["sign_coupling"])],
    )
    def test_allowed_failures(self, name, allowed):
        assert allowed_failures(build_model(load_config(FIXTURES / name))) == allowed
