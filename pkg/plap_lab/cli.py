"""CLI interface for plap-lab.

Provides commands for eigen solves, single-branch continuations and the
full verification sweep. Exit codes: 0 ok, 1 configuration or argument
error, 2 eigen solver failure, 3 barrier calibration failure, 4 system
convergence failure or a branch that does not classify as expected.
"""

from __future__ import annotations

import logging
import sys

import click
from rich import box
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table

from . import __version__
from .config import load_config
from .errors import CalibrationFailure, ConfigError, ConvergenceFailure, InvalidArgument
from .models import BoxKind, BranchSummary, RunConfig, VerificationReport
from .pipeline import run_eigen, run_solve, run_verify
from .store import RunStore, dump_json

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_EIGEN = 2
EXIT_CALIBRATION = 3
EXIT_CONVERGENCE = 4

console = Console()
err_console = Console(stderr=True)


def _configure_logging(verbose: bool) -> None:
    logger = logging.getLogger("plap_lab")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    logger.addHandler(RichHandler(console=err_console, show_path=False))
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    logger.propagate = False


def _fail(code: int, exc: Exception) -> None:
    """Print a JSON error body and exit."""
    body = {"error": type(exc).__name__, "exit_code": code, "message": str(exc)}
    click.echo(dump_json(body), nl=False)
    sys.exit(code)


def _load(config_path: str, out: str | None) -> tuple[RunConfig, RunStore]:
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, exc)
    return cfg, RunStore(out or cfg.run.out)


def _branch_table(summaries: dict[str, BranchSummary]) -> Table:
    table = Table(title="Branches", box=box.ROUNDED, title_style="bold cyan")
    table.add_column("Branch", style="cyan")
    table.add_column("Converged", justify="center")
    table.add_column("Class")
    table.add_column("Limit residual", justify="right")
    table.add_column("Expected")
    for label, s in summaries.items():
        kind = s.classification.kind.value if s.classification else "[dim]-[/]"
        residual = f"{max(s.limit_residual):.2e}" if s.limit_residual else "[dim]-[/]"
        table.add_row(
            label,
            "[green]yes[/]" if s.converged else "[red]no[/]",
            kind,
            residual,
            ", ".join(k.value for k in s.expected),
        )
    return table


config_option = click.option(
    "--config", "-c", "config_path", required=True, help="Run configuration (TOML)."
)
out_option = click.option("--out", "-o", default=None, help="Output directory.")
verbose_option = click.option("--verbose", "-v", is_flag=True, help="Debug logging.")


@click.group()
@click.version_option(version=__version__, prog_name="lab")
def cli():
    """plap-lab: barriers, regularized solves and continuation for singular p-Laplacian systems."""


@cli.command()
@config_option
@out_option
@verbose_option
def eigen(config_path: str, out: str | None, verbose: bool):
    """Principal eigenpairs of both operators."""
    _configure_logging(verbose)
    cfg, store = _load(config_path, out)
    try:
        pairs = run_eigen(cfg, store)
    except InvalidArgument as exc:
        _fail(EXIT_CONFIG, exc)
    except ConvergenceFailure as exc:
        _fail(EXIT_EIGEN, exc)

    table = Table(title="Principal eigenpairs", box=box.ROUNDED, title_style="bold cyan")
    table.add_column("i", justify="right")
    table.add_column("p", justify="right")
    table.add_column("lambda", justify="right", style="green")
    table.add_column("c0", justify="right")
    table.add_column("iterations", justify="right")
    for i, pair in enumerate(pairs, start=1):
        table.add_row(
            str(i), f"{pair.p:g}", f"{pair.lam:.8g}", f"{pair.c0:.4g}", str(pair.iterations)
        )
    console.print(table)
    console.print(f"[dim]Artifacts:[/] {store.out_dir / 'eigen'}")


@cli.command()
@config_option
@click.option(
    "--branch",
    "-b",
    type=click.Choice([b.value for b in BoxKind]),
    default=BoxKind.POSITIVE.value,
    help="Which order box to continue in.",
)
@out_option
@verbose_option
def solve(config_path: str, branch: str, out: str | None, verbose: bool):
    """Calibrate the barriers and continue one branch along the eps ladder."""
    _configure_logging(verbose)
    cfg, store = _load(config_path, out)
    try:
        summary = run_solve(cfg, BoxKind(branch), store)
    except InvalidArgument as exc:
        _fail(EXIT_CONFIG, exc)
    except ConvergenceFailure as exc:
        _fail(EXIT_EIGEN, exc)
    except CalibrationFailure as exc:
        _fail(EXIT_CALIBRATION, exc)

    console.print(_branch_table({branch: summary}))
    if not summary.passed:
        reason = "did not converge" if not summary.converged else "classified unexpectedly"
        console.print(f"[red]{branch} branch {reason}.[/] Artifacts: {store.out_dir / branch}")
        sys.exit(EXIT_CONVERGENCE)
    console.print(f"[green]{branch} branch ok.[/] Artifacts: {store.out_dir / branch}")


def verify_exit_code(report: VerificationReport) -> int:
    if report.passed:
        return EXIT_OK
    for error in report.errors:
        if error.startswith(ConvergenceFailure.__name__):
            return EXIT_EIGEN
        if error.startswith(CalibrationFailure.__name__):
            return EXIT_CALIBRATION
        if error.startswith(InvalidArgument.__name__):
            return EXIT_CONFIG
    return EXIT_CONVERGENCE


@cli.command()
@config_option
@out_option
@verbose_option
def verify(config_path: str, out: str | None, verbose: bool):
    """Run every check and all three branches; write the consolidated report."""
    _configure_logging(verbose)
    cfg, store = _load(config_path, out)
    try:
        report = run_verify(cfg, store)
    except (InvalidArgument, ConfigError) as exc:
        _fail(EXIT_CONFIG, exc)

    failed = sorted(report.hypotheses.failed_names())
    lines = [
        f"[dim]Hypotheses failed:[/] {', '.join(failed) or 'none'}"
        f" (allowed: {', '.join(report.allowed_hypothesis_failures) or 'none'})",
    ]
    if report.barriers is not None:
        worst = report.barriers.worst()
        lines.append(
            f"[dim]Barriers:[/] C={report.barriers.C:g} c={report.barriers.c:.4g} "
            f"delta={report.barriers.delta:g} "
            f"{'[green]pass[/]' if report.barriers.passed else '[red]fail[/]'}"
            + (f" (worst {worst.name}: {worst.worst_margin:.3e})" if worst else "")
        )
    bounds_ok = all(c.passed for c in report.homotopy_bounds)
    lines.append(f"[dim]Homotopy floors:[/] {'[green]pass[/]' if bounds_ok else '[red]fail[/]'}")
    for error in report.errors:
        lines.append(f"[red]{error}[/]")
    console.print(
        Panel(
            "\n".join(lines),
            title="[bold]Verification[/]",
            border_style="green" if report.passed else "red",
        )
    )
    if report.branches:
        console.print(_branch_table(report.branches))
    console.print(f"[dim]Report:[/] {store.out_dir / 'verify' / 'report.json'}")
    sys.exit(verify_exit_code(report))


def main():
    """Entry point for the lab console script."""
    cli()


if __name__ == "__main__":
    main()
