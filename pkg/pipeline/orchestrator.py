"""
Spray Metrizer - Pipeline Orchestrator
======================================

Coordinates one metrizability run end to end:

```
Scenario
    ↓
[Sample phase points]          seed, count, domain predicate
    ↓
[Classify]                     homogeneity → isotropy → ρ → ii → iii → regularity
    ↓  (metrizable verdicts only)
[Reconstruct]                  f₀, ω₀, b, F = exp(f₀ − b), verification
    ↓  (expected F given)
[Compare]                      gauge-normalized against closed forms
    ↓
RunReport
```

Every stage is written to the RunLogger trace; the report itself carries no
run id or wall-clock data unless timings are requested.

Author: Alfred Munga
License: MIT
"""

import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.append(str(project_root))

from backend import __version__
from backend.config import Settings, get_settings
from backend.services.registry_service import get_example
from backend.services.scenario_service import Scenario, build_spray, evaluate_expected, sample_arrays
from backend.utils.logger import LOG_FORMAT, RunLogger
from pipeline.evaluator import (
    ComparisonResult,
    compare_to_expected,
    gauge_constant,
    grid_frame,
    grid_points,
    write_grid,
)
from tools.errors import MetrizerError, SchemaError
from tools.metrizability_tool import ClassificationReport, Verdict, classify_arrays
from tools.reconstruction_tool import ReconstructedFinsler, VerificationRecord

logger = logging.getLogger(__name__)

# Horizontal-form residuals are checked on this many leading samples.
HORIZONTAL_SAMPLES = 10

TOLERANCE_FIELDS = ("tol_iso", "tol_ii", "tol_iii", "tol_unit", "tol_c1", "tol_c2")


# ============================================================================
# Report models
# ============================================================================

class ReconstructionSummary(BaseModel):
    fiber_path: str
    y_ref: List[float]
    x_ref: List[float]
    basic_residual: float = Field(..., description="max variation of ω₀ over several fiber directions")
    closed_residual: float = Field(..., description="max antisymmetry of dω₀/dx")
    gauge_constant: Optional[float] = Field(default=None, description="c with F_exp(anchor) = c F(anchor)")
    verification: VerificationRecord


class RunReport(BaseModel):
    """Outcome of one run; deterministic given scenario, seed and version."""
    scenario: Dict[str, Any]
    verdict: Verdict
    expected_verdict: Optional[Verdict] = None
    matches_expected: bool
    classification: ClassificationReport
    reconstruction: Optional[ReconstructionSummary] = None
    comparison: Optional[ComparisonResult] = None
    version: str = __version__
    timings: Optional[Dict[str, float]] = None

    def to_json(self) -> str:
        exclude = None if self.timings is not None else {"timings"}
        return self.model_dump_json(indent=2, exclude=exclude)


def apply_overrides(
    scenario: Scenario,
    seed: Optional[int] = None,
    samples: Optional[int] = None,
    tol: Optional[float] = None,
) -> Scenario:
    """Scenario copy with command-line overrides of seed, sample count and residual tolerances."""
    update: Dict[str, Any] = {}
    sample_update: Dict[str, Any] = {}
    if seed is not None:
        sample_update["seed"] = seed
    if samples is not None:
        sample_update["count"] = samples
    if sample_update:
        update["samples"] = scenario.samples.model_copy(update=sample_update)
    if tol is not None:
        if tol <= 0:
            raise ValueError(f"Tolerance must be positive, got {tol}")
        update["tolerances"] = scenario.tolerances.model_copy(update={name: tol for name in TOLERANCE_FIELDS})
    return scenario.model_copy(update=update) if update else scenario


# ============================================================================
# Pipeline
# ============================================================================

class MetrizationPipeline:
    """
    Runs scenarios through classification, reconstruction and comparison.

    Attributes:
        settings: Process settings (workers, log directory)
        record_timings: Put per-stage wall-clock seconds into reports
    """

    def __init__(self, settings: Optional[Settings] = None, record_timings: bool = False):
        self.settings = settings or get_settings()
        self.record_timings = record_timings
        self.last_run: Optional[RunLogger] = None

    def run(self, scenario: Scenario, reconstruct: bool = True) -> RunReport:
        """
        Run one scenario.

        Args:
            scenario: Validated scenario
            reconstruct: Rebuild F for metrizable verdicts

        Returns:
            RunReport

        Raises:
            MetrizerError: numeric or domain failures, after an error trace entry
        """
        run_logger = RunLogger(log_dir=self.settings.log_dir)
        self.last_run = run_logger
        try:
            report = self._run(scenario, reconstruct, run_logger)
        except (MetrizerError, ValueError) as e:
            run_logger.log_error(str(e), {"scenario": scenario.name, "type": type(e).__name__})
            raise
        run_logger.log_stage("final", {
            "verdict": report.verdict.value,
            "matches_expected": report.matches_expected,
        }, metadata=run_logger.timings)
        return report

    def _run(self, scenario: Scenario, reconstruct: bool, run_logger: RunLogger) -> RunReport:
        spray = build_spray(scenario)

        with run_logger.timed("sample"):
            if scenario.tolerances.samples:
                x = np.array([p.x for p in scenario.tolerances.samples])
                y = np.array([p.y for p in scenario.tolerances.samples])
            else:
                x, y = sample_arrays(scenario, spray=spray)
        run_logger.log_stage("sample", {"count": int(len(x)), "seed": scenario.samples.seed})

        cfg = scenario.tolerances.model_copy(update={"workers": self.settings.workers})
        with run_logger.timed("classify"):
            classification, _ = classify_arrays(spray, x, y, cfg)
        run_logger.log_stage("classify", {
            "verdict": classification.verdict.value,
            "stage_counts": classification.stage_counts,
            "notes": classification.notes,
        })

        summary = None
        comparison = None
        spec = scenario.reconstruction
        if reconstruct and spec.enabled and classification.reconstructible:
            rf = ReconstructedFinsler(spray, spec.quadrature())
            with run_logger.timed("reconstruct"):
                summary = self._reconstruct(rf, x, y, spec.verify_points, cfg)
            run_logger.log_stage("reconstruct", {
                "basic_residual": summary.basic_residual,
                "closed_residual": summary.closed_residual,
                "hessian_label": summary.verification.hessian_label,
            })

            if scenario.expected.F is not None:
                with run_logger.timed("compare"):
                    hx, hy = sample_arrays(
                        scenario, count=spec.holdout, seed=scenario.samples.seed + 1, spray=spray
                    )
                    comparison = compare_to_expected(rf, scenario, hx, hy, anchor=spec.anchor)
                summary.gauge_constant = comparison.gauge_constant
                run_logger.log_stage("compare", comparison.model_dump())
        elif reconstruct and classification.reconstructible:
            logger.info("Reconstruction disabled by scenario")

        expected_verdict = scenario.expected.verdict
        matches = expected_verdict is None or classification.verdict == expected_verdict
        if comparison is not None:
            matches = matches and comparison.passed

        return RunReport(
            scenario=scenario.model_dump(mode="json"),
            verdict=classification.verdict,
            expected_verdict=expected_verdict,
            matches_expected=matches,
            classification=classification,
            reconstruction=summary,
            comparison=comparison,
            timings={k: round(v, 6) for k, v in run_logger.timings.items()} if self.record_timings else None,
        )

    @staticmethod
    def _reconstruct(rf: ReconstructedFinsler, x: np.ndarray, y: np.ndarray, verify_points: int, cfg) -> ReconstructionSummary:
        leading = slice(0, min(HORIZONTAL_SAMPLES, len(x)))
        form = rf.horizontal_form(x[leading], y[leading])
        count = min(verify_points, len(x))
        record = rf.verify(x[:count], y[:count], cfg)
        return ReconstructionSummary(
            fiber_path=rf.cfg.fiber_path,
            y_ref=rf.y_ref.tolist(),
            x_ref=rf.x_ref.tolist(),
            basic_residual=float(np.max(form.basic_residual)),
            closed_residual=float(np.max(form.closed_residual)),
            verification=record,
        )

    def run_example(
        self,
        name: str,
        dimension: Optional[int] = None,
        variant: Optional[str] = None,
        reconstruct: bool = True,
    ) -> RunReport:
        """Run a registry example by name."""
        return self.run(get_example(name, dimension, variant), reconstruct=reconstruct)

    def grid_dump(self, scenario: Scenario, output_path: Optional[str] = None) -> str:
        """
        Write the per-point CSV of a scenario's grid.

        F and kappa columns are filled for metrizable verdicts with reconstruction
        enabled, gauge-normalized when the scenario carries an expected F.
        """
        grid = scenario.outputs.grid
        path = output_path or (grid.path if grid is not None else None)
        if path is None:
            raise SchemaError("outputs.grid", "no grid path in scenario and none given")

        spray = build_spray(scenario)
        x, y = grid_points(scenario)
        cfg = scenario.tolerances.model_copy(update={"workers": self.settings.workers})
        classification, evidence = classify_arrays(spray, x, y, cfg)

        F = kappa = None
        spec = scenario.reconstruction
        if spec.enabled and classification.reconstructible:
            rf = ReconstructedFinsler(spray, spec.quadrature())
            F, kappa = rf.finsler_value(x, y)
            if scenario.expected.F is not None:
                anchor_x = spec.anchor.x_array if spec.anchor is not None else x[0]
                anchor_y = spec.anchor.y_array if spec.anchor is not None else y[0]
                F_anchor, _ = rf.finsler_value(anchor_x, anchor_y)
                expected = evaluate_expected(scenario.expected.F, scenario.n, anchor_x[None], anchor_y[None])
                c = gauge_constant(float(expected[0]), F_anchor)
                F, kappa = c * F, kappa / c ** 2

        return write_grid(grid_frame(evidence, F, kappa), path)


def run(scenario: Scenario, reconstruct: bool = True) -> RunReport:
    return MetrizationPipeline().run(scenario, reconstruct=reconstruct)


def run_example(name: str, dimension: Optional[int] = None, variant: Optional[str] = None) -> RunReport:
    return MetrizationPipeline().run_example(name, dimension, variant)


def grid_dump(scenario: Scenario, output_path: Optional[str] = None) -> str:
    return MetrizationPipeline().grid_dump(scenario, output_path)


# ============================================================================
# Example Usage
# ============================================================================

if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format=LOG_FORMAT)

    print("=" * 70)
    print("Spray Metrizer Pipeline Test")
    print("=" * 70)

    pipeline = MetrizationPipeline()
    for example in ("nonmetrizable2d", "degenerate2d"):
        print(f"\n▶ {example}")
        result = pipeline.run_example(example)
        status = "✅" if result.matches_expected else "❌"
        print(f"{status} verdict={result.verdict.value} expected={result.expected_verdict}")
        if result.comparison is not None:
            print(f"   F error {result.comparison.F_max_rel_error:.2e}, gauge c={result.comparison.gauge_constant:.6g}")

    print("\n" + "=" * 70)
    print("✅ Test complete!")
