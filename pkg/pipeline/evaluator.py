"""
Spray Metrizer - Evaluator
==========================

Compares reconstructions against expected closed forms and aggregates run
outcomes.

A reconstruction is defined up to one positive factor, so the comparison
first fixes the gauge constant c at an anchor point, F_expected(anchor) =
c F_reconstructed(anchor), and then compares c F and kappa / c^2 pointwise.

Author: Alfred Munga
License: MIT
"""

import logging
import os
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from backend.services.scenario_service import Scenario, evaluate_expected, sample_arrays
from tools.metrizability_tool import PointEvidence
from tools.reconstruction_tool import ReconstructedFinsler
from tools.spray_geometry_tool import PhasePoint

logger = logging.getLogger(__name__)


# ===========================
# Models
# ===========================

class ComparisonResult(BaseModel):
    """Gauge-normalized comparison on held-out points."""
    holdout: int = Field(..., ge=1)
    anchor: Dict[str, List[float]]
    gauge_constant: float = Field(..., gt=0)
    F_max_rel_error: Optional[float] = Field(default=None, description="max |c F - F_exp| / |F_exp|")
    F2_max_rel_error: Optional[float] = Field(default=None, description="Same for F^2")
    kappa_max_rel_error: Optional[float] = Field(
        default=None, description="max |kappa / c^2 - kappa_exp| / max(|kappa_exp|, 1)"
    )
    rtol: float
    passed: bool


# ===========================
# Gauge normalization
# ===========================

def gauge_constant(expected_anchor: float, reconstructed_anchor: float) -> float:
    """c with F_expected(anchor) = c F_reconstructed(anchor)."""
    if not (expected_anchor > 0 and reconstructed_anchor > 0):
        raise ValueError(
            f"Gauge anchor values must be positive, got {expected_anchor} and {reconstructed_anchor}"
        )
    return float(expected_anchor / reconstructed_anchor)


def relative_error(actual: np.ndarray, expected: np.ndarray, floor: float = 0.0) -> float:
    """max |actual - expected| / max(|expected|, floor)."""
    denominator = np.maximum(np.abs(expected), floor)
    return float(np.max(np.abs(actual - expected) / denominator))


def compare_to_expected(
    rf: ReconstructedFinsler,
    scenario: Scenario,
    x: np.ndarray,
    y: np.ndarray,
    anchor: Optional[PhasePoint] = None,
) -> ComparisonResult:
    """
    Compare the reconstruction to the scenario's expected F and kappa.

    Args:
        rf: Reconstruction
        scenario: Scenario carrying expected.F (required) and expected.kappa
        x, y: Held-out points, shape (B, n)
        anchor: Gauge anchor; defaults to the first held-out point
    """
    n = scenario.n
    expected = scenario.expected
    if expected.F is None:
        raise ValueError("Scenario has no expected F to compare against")
    anchor = anchor or PhasePoint.of(x[0], y[0])

    F_anchor, _ = rf.finsler_value(anchor.x_array, anchor.y_array)
    F_expected_anchor = float(evaluate_expected(expected.F, n, anchor.x_array[None], anchor.y_array[None])[0])
    c = gauge_constant(F_expected_anchor, F_anchor)

    F, kappa = rf.finsler_value(x, y)
    F_expected = evaluate_expected(expected.F, n, x, y)
    F_error = relative_error(c * F, F_expected)
    F2_error = relative_error((c * F) ** 2, F_expected ** 2)

    kappa_error = None
    if expected.kappa is not None:
        kappa_expected = evaluate_expected(expected.kappa, n, x, y)
        kappa_error = relative_error(kappa / c ** 2, kappa_expected, floor=1.0)

    rtol = scenario.reconstruction.compare_rtol
    passed = F_error <= rtol and (kappa_error is None or kappa_error <= rtol)
    status = "✅" if passed else "❌"
    logger.info(
        f"{status} Comparison on {len(x)} points: c={c:.6g}, F err {F_error:.2e}"
        + (f", kappa err {kappa_error:.2e}" if kappa_error is not None else "")
    )
    return ComparisonResult(
        holdout=int(len(x)),
        anchor=anchor.as_dict(),
        gauge_constant=c,
        F_max_rel_error=F_error,
        F2_max_rel_error=F2_error,
        kappa_max_rel_error=kappa_error,
        rtol=rtol,
        passed=passed,
    )


# ===========================
# Grid export
# ===========================

def grid_frame(
    evidence: PointEvidence,
    F: Optional[np.ndarray] = None,
    kappa: Optional[np.ndarray] = None,
) -> pd.DataFrame:
    """Per-point table with header x1..xn, y1..yn, rho, F, kappa, res_ii, res_iii, detV."""
    n = evidence.x.shape[-1]
    count = evidence.x.shape[0]
    columns: Dict[str, Any] = {}
    for i in range(n):
        columns[f"x{i + 1}"] = evidence.x[:, i]
    for i in range(n):
        columns[f"y{i + 1}"] = evidence.y[:, i]
    columns["rho"] = evidence.rho
    columns["F"] = F if F is not None else np.full(count, np.nan)
    columns["kappa"] = kappa if kappa is not None else np.full(count, np.nan)
    columns["res_ii"] = evidence.res_ii
    columns["res_iii"] = evidence.res_iii
    columns["detV"] = evidence.det_v
    return pd.DataFrame(columns)


def write_grid(frame: pd.DataFrame, output_path: str) -> str:
    """Write the grid frame as CSV, creating parent directories."""
    directory = os.path.dirname(output_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    frame.to_csv(output_path, index=False, float_format="%.12g")
    logger.info(f"✅ Grid with {len(frame)} rows saved to {output_path}")
    return output_path


def grid_points(scenario: Scenario) -> Sequence[np.ndarray]:
    """Grid points drawn from the scenario domain with the grid seed."""
    grid = scenario.outputs.grid
    count = grid.count if grid is not None else 50
    offset = grid.seed_offset if grid is not None else 2
    return sample_arrays(scenario, count=count, seed=scenario.samples.seed + offset)


# ===========================
# Aggregate metrics
# ===========================

def calculate_metrics(reports: Sequence[Any]) -> Dict[str, Any]:
    """
    Aggregate metrics over run reports.

    Metrics:
    - verdict_accuracy: share of runs whose verdict matches the expected one
    - comparison_pass_rate: share of compared runs within tolerance
    - worst F / kappa errors across compared runs
    """
    if not reports:
        return {"total_runs": 0, "verdict_accuracy": 0.0, "comparison_pass_rate": 0.0}

    with_expectation = [r for r in reports if r.expected_verdict is not None]
    verdict_hits = sum(1 for r in with_expectation if r.verdict == r.expected_verdict)
    compared = [r for r in reports if r.comparison is not None]
    comparison_passes = sum(1 for r in compared if r.comparison.passed)

    F_errors = [r.comparison.F_max_rel_error for r in compared if r.comparison.F_max_rel_error is not None]
    kappa_errors = [
        r.comparison.kappa_max_rel_error for r in compared if r.comparison.kappa_max_rel_error is not None
    ]
    breakdown: Dict[str, int] = {}
    for report in reports:
        breakdown[report.verdict.value] = breakdown.get(report.verdict.value, 0) + 1

    metrics = {
        "total_runs": len(reports),
        "verdict_accuracy": verdict_hits / len(with_expectation) if with_expectation else 0.0,
        "comparison_pass_rate": comparison_passes / len(compared) if compared else 0.0,
        "worst_F_error": max(F_errors) if F_errors else None,
        "worst_kappa_error": max(kappa_errors) if kappa_errors else None,
        "verdict_breakdown": breakdown,
    }
    logger.info(
        f"📊 Metrics: verdict accuracy={metrics['verdict_accuracy']:.1%}, "
        f"comparison pass rate={metrics['comparison_pass_rate']:.1%}"
    )
    return metrics
