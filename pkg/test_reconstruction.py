"""Tests for the Finsler reconstruction of metrizable sprays."""

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from pydantic import ValidationError

from backend.services.registry_service import get_example
from backend.services.scenario_service import build_spray, evaluate_expected, sample_arrays
from tools.errors import PathDomainError, ToleranceError
from tools.reconstruction_tool import (
    QuadratureConfig,
    ReconstructedFinsler,
    ReconstructionInput,
    ReconstructionTool,
    base_potential,
    fiber_potential,
    finsler_value,
    reconstruct,
    verify,
)
from tools.spray_geometry_tool import PhasePoint

REFERENCE = QuadratureConfig(y_ref=[1.0, 1.0], x_ref=[0.0, 0.0])

POINTS_X = np.array([[0.0, 0.0], [0.3, -0.4], [-0.8, 0.9], [0.5, 0.5]])
POINTS_Y = np.array([[1.0, 2.0], [-2.0, 0.5], [0.3, 3.0], [4.0, 1.5]])


@pytest.fixture
def degenerate_rf(degenerate_spray) -> ReconstructedFinsler:
    return reconstruct(degenerate_spray, REFERENCE)


# ============================================================================
# Closed forms for G = (y1 y2, -y2^2/2)
# ============================================================================

def test_fiber_potential_is_log_y2(degenerate_spray):
    value = fiber_potential(degenerate_spray, [0.2, 0.1], [0.5, 3.0], REFERENCE)
    assert isinstance(value, float)
    assert value == pytest.approx(np.log(3.0), abs=1e-10)


def test_base_potential_is_x2(degenerate_spray):
    assert base_potential(degenerate_spray, [0.3, 0.7], REFERENCE) == pytest.approx(0.7, abs=1e-10)


def test_finsler_function_and_curvature(degenerate_rf):
    F, kappa = degenerate_rf.finsler_value(POINTS_X, POINTS_Y)
    np.testing.assert_allclose(F, np.exp(-POINTS_X[:, 1]) * POINTS_Y[:, 1], rtol=1e-9)
    np.testing.assert_allclose(kappa, -2.0 * np.exp(2.0 * POINTS_X[:, 1]), rtol=1e-8)


def test_single_point_returns_floats(degenerate_spray):
    F, kappa = finsler_value(degenerate_spray, [0.0, 0.5], [1.0, 2.0], REFERENCE)
    assert isinstance(F, float) and isinstance(kappa, float)
    assert F == pytest.approx(2.0 * np.exp(-0.5), rel=1e-9)


def test_fiber_gradients(degenerate_rf):
    potential = degenerate_rf.fiber_potential(POINTS_X, POINTS_Y, gradients=True)
    np.testing.assert_allclose(potential.dx, 0.0, atol=1e-10)
    expected_dy = np.stack([np.zeros(4), 1.0 / POINTS_Y[:, 1]], axis=-1)
    np.testing.assert_allclose(potential.dy, expected_dy, rtol=1e-9, atol=1e-10)


def test_horizontal_form_is_basic_and_closed(degenerate_rf):
    form = degenerate_rf.horizontal_form(POINTS_X, POINTS_Y)
    np.testing.assert_allclose(form.omega, np.tile([0.0, 1.0], (4, 1)), atol=1e-9)
    assert form.basic_residual.max() < 1e-9
    assert form.closed_residual.max() < 1e-12


def test_energy_hessian_has_rank_one(degenerate_rf):
    hessian = degenerate_rf.energy_hessian([0.1, 0.2], [1.0, 2.0])
    assert hessian.shape == (2, 2)
    assert np.linalg.matrix_rank(hessian, tol=1e-8) == 1


def test_verification_record(degenerate_spray, degenerate_rf):
    points = [PhasePoint.of(x, y) for x, y in zip(POINTS_X, POINTS_Y)]
    record = verify(degenerate_spray, degenerate_rf, points)
    assert record.count == 4
    assert record.hessian_label == "degenerate"
    assert set(record.hessian_ranks) == {1}
    assert record.dh_residual < 1e-8
    assert record.euler_lagrange_residual < 1e-8
    assert record.flag_curvature_residual < 1e-8
    assert record.homogeneity_residual < 1e-9
    assert record.gradient_consistency < 1e-8


def test_verify_rejects_foreign_reconstruction(degenerate_rf, nonmetrizable_spray):
    with pytest.raises(ValueError):
        verify(nonmetrizable_spray, degenerate_rf, [PhasePoint.of([0, 0], [1, 1])])


# ============================================================================
# Gauge and path choices
# ============================================================================

def test_reference_choice_only_changes_a_constant_factor(degenerate_spray, degenerate_rf):
    other = reconstruct(degenerate_spray, QuadratureConfig(y_ref=[0.5, 3.0], x_ref=[0.2, -0.1]))
    F, _ = degenerate_rf.finsler_value(POINTS_X, POINTS_Y)
    F_other, _ = other.finsler_value(POINTS_X, POINTS_Y)
    ratio = F / F_other
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-9)
    assert ratio[0] == pytest.approx(3.0 * np.exp(0.1), rel=1e-9)


def test_waypoints_do_not_change_potential(degenerate_spray, degenerate_rf):
    detour = reconstruct(
        degenerate_spray,
        QuadratureConfig(y_ref=[1.0, 1.0], x_ref=[0.0, 0.0], waypoints=[[2.0, 0.5], [-1.0, 2.0]]),
    )
    direct = degenerate_rf.fiber_potential(POINTS_X, POINTS_Y).value
    np.testing.assert_allclose(detour.fiber_potential(POINTS_X, POINTS_Y).value, direct, atol=1e-9)


def test_arc_and_segment_paths_agree(degenerate_spray, degenerate_rf):
    arc = reconstruct(degenerate_spray, REFERENCE.model_copy(update={"fiber_path": "arc"}))
    np.testing.assert_allclose(
        arc.fiber_potential(POINTS_X, POINTS_Y).value,
        degenerate_rf.fiber_potential(POINTS_X, POINTS_Y).value,
        atol=1e-9,
    )


@pytest.mark.parametrize("factor", [0.5, 2.0, 5.0])
def test_finsler_function_is_positively_homogeneous(degenerate_rf, factor):
    F, _ = degenerate_rf.finsler_value(POINTS_X, POINTS_Y)
    F_scaled, _ = degenerate_rf.finsler_value(POINTS_X, factor * POINTS_Y)
    np.testing.assert_allclose(F_scaled, factor * F, rtol=1e-9)


def test_base_potential_cache(degenerate_rf):
    x = np.array([[0.1, 0.2], [0.3, 0.4]])
    first = degenerate_rf.base_potential(x)
    assert degenerate_rf.cache_size() == 2
    with ThreadPoolExecutor(max_workers=4) as pool:
        results = list(pool.map(lambda _: degenerate_rf.base_potential(x), range(8)))
    assert degenerate_rf.cache_size() == 2
    for result in results:
        np.testing.assert_array_equal(result, first)


# ============================================================================
# Failures
# ============================================================================

def test_reference_outside_domain(degenerate_spray):
    with pytest.raises(PathDomainError):
        reconstruct(degenerate_spray, QuadratureConfig(y_ref=[1.0, -1.0]))


def test_path_leaving_domain(degenerate_rf):
    with pytest.raises(PathDomainError):
        degenerate_rf.fiber_potential([0.0, 0.0], [1.0, -1.0])


def test_refinement_budget(degenerate_spray):
    rf = reconstruct(degenerate_spray, QuadratureConfig(y_ref=[1.0, 1.0], max_panels=2, target_abs_tol=1e-15))
    with pytest.raises(ToleranceError):
        rf.fiber_potential([0.0, 0.0], [1.0, 3.0])


def test_refinement_waits_for_gradient_sums(degenerate_rf):
    def unsettled(t, w):
        return [np.array([1.0]), np.array([[float(t.size)]])]

    def settled(t, w):
        return [np.array([1.0]), np.array([[2.0]])]

    with pytest.raises(ToleranceError):
        degenerate_rf._adaptive(unsettled, 1.0, "gradient sum")
    assert degenerate_rf._adaptive(settled, 1.0, "gradient sum")[1][0, 0] == 2.0


def test_fiber_dependent_horizontal_form_is_not_basic(degenerate_rf, monkeypatch):
    def unit(v):
        return v / np.linalg.norm(v, axis=-1, keepdims=True)

    monkeypatch.setattr(ReconstructedFinsler, "_omega", lambda self, xs, ys: unit(ys))
    monkeypatch.setattr(
        ReconstructedFinsler, "_omega_reference", lambda self, xs: np.broadcast_to(unit(self.y_ref), xs.shape)
    )
    # sample direction parallel to y_ref, so only the other fiber directions see the variation
    form = degenerate_rf.horizontal_form([0.1, 0.2], [2.0, 2.0])
    assert form.basic_residual[0] > 0.5


def test_reference_dimension_checked(degenerate_spray):
    with pytest.raises(ValueError):
        reconstruct(degenerate_spray, QuadratureConfig(y_ref=[1.0, 1.0, 1.0]))


def test_waypoints_must_be_finite():
    with pytest.raises(ValidationError):
        QuadratureConfig(waypoints=[[1.0, float("nan")]])


# ============================================================================
# Projective example
# ============================================================================

def test_randers_reconstruction_matches_closed_form():
    scenario = get_example("numata")
    spray = build_spray(scenario)
    rf = ReconstructedFinsler(spray, scenario.reconstruction.quadrature())
    x, y = sample_arrays(scenario, count=8, seed=11, spray=spray)

    form = rf.horizontal_form(x, y)
    assert form.basic_residual.max() < 1e-8
    assert form.closed_residual.max() < 1e-10

    F, kappa = rf.finsler_value(x, y)
    F_expected = evaluate_expected(scenario.expected.F, 2, x, y)
    ratio = F_expected / F
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-8)
    kappa_expected = evaluate_expected(scenario.expected.kappa, 2, x, y)
    np.testing.assert_allclose(kappa / ratio[0] ** 2, kappa_expected, rtol=1e-7)


# ============================================================================
# Tool
# ============================================================================

def test_tool_evaluates_points():
    result = ReconstructionTool().run(ReconstructionInput(
        coefficients=["y1*y2", "0 - 0.5*y2^2"],
        domain="y2",
        quadrature=REFERENCE,
        points=[PhasePoint.of([0.0, 1.0], [1.0, 2.0])],
    ))
    assert result["success"]
    assert result["F"] == pytest.approx([2.0 * np.exp(-1.0)], rel=1e-9)
    assert result["verification"]["hessian_label"] == "degenerate"


def test_tool_reports_failure():
    result = ReconstructionTool().run(ReconstructionInput(
        coefficients=["y1*y2", "0 - 0.5*y2^2"],
        domain="y2",
        quadrature=QuadratureConfig(y_ref=[1.0, -1.0]),
        points=[PhasePoint.of([0.0, 0.0], [1.0, 2.0])],
    ))
    assert not result["success"]
