"""
Spray Metrizer - Command Line Interface
=======================================

Verbs:
    check <scenario.json>        classify only
    reconstruct <scenario.json>  classify, reconstruct, compare
    example <name>               run a registry example
    examples                     list registry examples
    grid <scenario.json>         per-point CSV

Exit codes: 0 run OK and matching expectations, 1 mismatch, 2 input error,
3 numeric or domain failure.

Usage:
    python -m backend.cli example klein --dimension 3
    python -m backend.cli check data/scenarios/nonmetrizable2d.json --out report.json

Author: Alfred Munga
License: MIT
"""

import logging
import sys
from pathlib import Path
from typing import Callable, Optional

import typer
from rich.console import Console
from rich.table import Table

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.append(str(project_root))

from backend.config import get_settings
from backend.services.registry_service import get_example, list_examples
from backend.services.scenario_service import Scenario, load_scenario
from backend.utils.logger import configure_logging
from pipeline.orchestrator import MetrizationPipeline, RunReport, apply_overrides
from tools.errors import (
    DomainError,
    ExpressionSyntaxError,
    OrderError,
    RicciDegenerateError,
    SamplingExhausted,
    SchemaError,
    ToleranceError,
    VariableIndexError,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_INPUT = 2
EXIT_NUMERIC = 3

INPUT_ERRORS = (SchemaError, ExpressionSyntaxError, VariableIndexError, KeyError, FileNotFoundError)
NUMERIC_ERRORS = (DomainError, ToleranceError, SamplingExhausted, OrderError, RicciDegenerateError)

app = typer.Typer(help="Finsler metrizability checks for sprays.", add_completion=False)
console = Console(stderr=True)

SEED = typer.Option(None, "--seed", help="Override the sampling seed")
SAMPLES = typer.Option(None, "--samples", help="Override the sample count")
TOL = typer.Option(None, "--tol", help="Override all residual tolerances")
OUT = typer.Option(None, "--out", help="Write the JSON report (or CSV grid) here")
TIMINGS = typer.Option(False, "--timings", help="Include stage timings in the report")


@app.callback()
def main(verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging")) -> None:
    settings = get_settings()
    configure_logging("DEBUG" if verbose else settings.log_level, settings.log_json)


def _guarded(action: Callable[[], int]) -> None:
    """Run an action and translate failures into exit codes."""
    try:
        code = action()
    except INPUT_ERRORS as e:
        console.print(f"[red]❌ Input error:[/red] {e}")
        raise typer.Exit(code=EXIT_INPUT)
    except NUMERIC_ERRORS as e:
        console.print(f"[red]❌ Numeric failure:[/red] {e}")
        raise typer.Exit(code=EXIT_NUMERIC)
    except ValueError as e:
        console.print(f"[red]❌ Input error:[/red] {e}")
        raise typer.Exit(code=EXIT_INPUT)
    raise typer.Exit(code=code)


def _summary(report: RunReport) -> None:
    table = Table(title=f"{report.scenario.get('name', 'scenario')} (n={report.classification.n})")
    table.add_column("Check")
    table.add_column("Max residual", justify="right")
    table.add_column("Mean", justify="right")
    for name, stats in report.classification.residuals.items():
        table.add_row(
            name,
            "-" if stats.max is None else f"{stats.max:.3e}",
            "-" if stats.mean is None else f"{stats.mean:.3e}",
        )
    console.print(table)

    status = "[green]✅" if report.matches_expected else "[red]❌"
    expected = report.expected_verdict.value if report.expected_verdict else "-"
    console.print(f"{status} verdict {report.verdict.value}[/] (expected {expected})")
    for note in report.classification.notes:
        console.print(f"   note: {note}")
    if report.comparison is not None:
        comparison = report.comparison
        kappa = "-" if comparison.kappa_max_rel_error is None else f"{comparison.kappa_max_rel_error:.2e}"
        console.print(
            f"📊 gauge c={comparison.gauge_constant:.6g}  F err={comparison.F_max_rel_error:.2e}  kappa err={kappa}"
        )


def _emit(report: RunReport, out: Optional[Path], scenario: Scenario) -> int:
    """Print the summary, write or echo the report, and map the verdict to an exit code."""
    _summary(report)
    target = out or (Path(scenario.outputs.report) if scenario.outputs.report else None)
    text = report.to_json()
    if target is None:
        typer.echo(text)
    else:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text + "\n")
        console.print(f"✅ Report saved to {target}")
    return EXIT_OK if report.matches_expected else EXIT_MISMATCH


def _execute(scenario: Scenario, reconstruct: bool, out: Optional[Path], timings: bool) -> int:
    pipeline = MetrizationPipeline(record_timings=timings)
    return _emit(pipeline.run(scenario, reconstruct=reconstruct), out, scenario)


@app.command()
def check(
    scenario_path: Path = typer.Argument(..., help="Scenario JSON file"),
    seed: Optional[int] = SEED,
    samples: Optional[int] = SAMPLES,
    tol: Optional[float] = TOL,
    out: Optional[Path] = OUT,
    timings: bool = TIMINGS,
) -> None:
    """Classify a scenario's spray."""
    _guarded(lambda: _execute(
        apply_overrides(load_scenario(scenario_path), seed, samples, tol), False, out, timings
    ))


@app.command()
def reconstruct(
    scenario_path: Path = typer.Argument(..., help="Scenario JSON file"),
    seed: Optional[int] = SEED,
    samples: Optional[int] = SAMPLES,
    tol: Optional[float] = TOL,
    out: Optional[Path] = OUT,
    timings: bool = TIMINGS,
) -> None:
    """Classify, rebuild F for metrizable verdicts and compare to expected forms."""
    _guarded(lambda: _execute(
        apply_overrides(load_scenario(scenario_path), seed, samples, tol), True, out, timings
    ))


@app.command()
def example(
    name: str = typer.Argument(..., help="Registry example name"),
    dimension: Optional[int] = typer.Option(None, "--dimension", help="Dimension for generic examples"),
    variant: Optional[str] = typer.Option(None, "--variant", help="Variant for parameterized examples"),
    seed: Optional[int] = SEED,
    samples: Optional[int] = SAMPLES,
    tol: Optional[float] = TOL,
    out: Optional[Path] = OUT,
    timings: bool = TIMINGS,
) -> None:
    """Run a built-in example."""
    _guarded(lambda: _execute(
        apply_overrides(get_example(name, dimension, variant), seed, samples, tol), True, out, timings
    ))


@app.command()
def examples() -> None:
    """List built-in examples."""
    table = Table(title="Built-in examples")
    for column in ("name", "description", "dimensions", "variants", "expected"):
        table.add_column(column)
    for row in list_examples():
        table.add_row(*(row[c] for c in ("name", "description", "dimensions", "variants", "expected")))
    Console().print(table)


@app.command()
def grid(
    scenario_path: Path = typer.Argument(..., help="Scenario JSON file"),
    seed: Optional[int] = SEED,
    tol: Optional[float] = TOL,
    out: Optional[Path] = OUT,
) -> None:
    """Write the per-point CSV (x, y, rho, F, kappa, residuals, detV)."""

    def action() -> int:
        scenario = apply_overrides(load_scenario(scenario_path), seed=seed, tol=tol)
        path = MetrizationPipeline().grid_dump(scenario, str(out) if out else None)
        console.print(f"✅ Grid written to {path}")
        return EXIT_OK

    _guarded(action)


if __name__ == "__main__":
    app()
