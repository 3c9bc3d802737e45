"""End-to-end runs of the bundled scenarios and registry examples."""

import json

import pandas as pd
import pytest

from backend.services.registry_service import get_example
from backend.services.scenario_service import load_scenario
from pipeline.evaluator import calculate_metrics
from pipeline.orchestrator import MetrizationPipeline, apply_overrides
from tools.metrizability_tool import RICCI_FLAT_NOTE, Verdict

pytestmark = pytest.mark.slow


@pytest.fixture
def pipeline() -> MetrizationPipeline:
    return MetrizationPipeline()


def test_klein_reconstructs_constant_curvature(pipeline, scenario_dir):
    report = pipeline.run(load_scenario(scenario_dir / "klein.json"))
    assert report.verdict == Verdict.METRIZABLE_CONSTANT
    assert report.matches_expected
    assert report.comparison.F_max_rel_error <= 1e-6
    assert report.comparison.kappa_max_rel_error <= 1e-6
    assert report.reconstruction.verification.hessian_label == "regular"


def test_degenerate_example_end_to_end(pipeline, scenario_dir, tmp_path):
    scenario = load_scenario(scenario_dir / "degenerate2d.json")
    report = pipeline.run(scenario)
    assert report.verdict == Verdict.RANK_DEFICIENT_CANDIDATE
    assert report.matches_expected
    assert report.comparison.gauge_constant == pytest.approx(1.0, rel=1e-9)
    assert report.reconstruction.verification.hessian_label == "degenerate"

    path = pipeline.grid_dump(scenario, str(tmp_path / "grid.csv"))
    frame = pd.read_csv(path)
    assert (frame["detV"].abs() < 1e-8).all()


def test_nonmetrizable_example_stops_at_condition_iii(pipeline, scenario_dir):
    report = pipeline.run(load_scenario(scenario_dir / "nonmetrizable2d.json"))
    assert report.verdict == Verdict.FAILS_CONDITION_III
    assert report.reconstruction is None
    assert report.classification.residuals["condition_iii"].max >= 0.05


def test_numata_is_metrizable_with_scalar_curvature(pipeline, scenario_dir):
    report = pipeline.run(load_scenario(scenario_dir / "numata.json"))
    assert report.verdict == Verdict.METRIZABLE_SCALAR
    assert report.matches_expected
    assert report.comparison.passed


def test_shen_example_is_ricci_degenerate(pipeline, scenario_dir):
    report = pipeline.run(load_scenario(scenario_dir / "shen_ricciflat.json"))
    assert report.verdict == Verdict.RICCI_DEGENERATE
    assert RICCI_FLAT_NOTE in report.classification.notes


@pytest.mark.parametrize("variant, verdict", [
    ("half", Verdict.METRIZABLE_CONSTANT),
    ("square", Verdict.METRIZABLE_SCALAR),
])
def test_affine_variants(pipeline, variant, verdict):
    report = pipeline.run(apply_overrides(get_example("affine2d_g", variant=variant), samples=80))
    assert report.verdict == verdict
    assert report.matches_expected


@pytest.mark.parametrize("name", ["klein", "positive_cc", "numata"])
def test_projective_examples_in_three_dimensions(pipeline, name):
    report = pipeline.run(apply_overrides(get_example(name, dimension=3), samples=40))
    assert report.matches_expected


def test_registry_sweep_metrics(pipeline):
    reports = [
        pipeline.run(apply_overrides(get_example(name), samples=40), reconstruct=False)
        for name in ("flat", "degenerate2d", "nonmetrizable2d", "shen_ricciflat")
    ]
    metrics = calculate_metrics(reports)
    assert metrics["verdict_accuracy"] == 1.0
    assert metrics["verdict_breakdown"]["RicciDegenerate"] == 2


def test_reports_are_reproducible(pipeline, scenario_dir):
    scenario = apply_overrides(load_scenario(scenario_dir / "numata.json"), samples=30)
    first = json.loads(pipeline.run(scenario).to_json())
    second = json.loads(MetrizationPipeline().run(scenario).to_json())
    assert first == second
