"""Tests for projective deformations of the flat spray."""

import numpy as np
import pytest
from pydantic import ValidationError

from data.synthetic.spray_generator import random_generator
from tools.hilbert_tool import (
    GeneratorFunction,
    HilbertDeformationTool,
    HilbertInput,
    ProjectiveFactor,
    collinearity_defect,
    connection_shift_residual,
    deform_flat,
    dja_identity_residual,
    generator_conditions,
    geodesic_straightness,
    jacobi_projective,
    two_pipeline_residual,
)
from tools.spray_geometry_tool import PhasePoint

NUMATA_P = "0.5*yy/(sqrt(yy) + xy)"
KLEIN_G = "0 - ln(sqrt(1 - xx))"
POSITIVE_G = "0 - ln(sqrt(1 + xx))"


def _ball_points(rng, n, count, radius=0.45):
    points = []
    while len(points) < count:
        x = rng.uniform(-radius, radius, size=n)
        if x @ x < radius ** 2:
            y = rng.uniform(-2, 2, size=n)
            if np.linalg.norm(y) > 0.3:
                points.append(PhasePoint.of(x, y))
    return points


@pytest.fixture
def numata() -> ProjectiveFactor:
    return ProjectiveFactor.from_text(NUMATA_P, 2)


@pytest.fixture
def klein() -> GeneratorFunction:
    return GeneratorFunction.from_text(KLEIN_G, 2)


# ============================================================================
# Closed formulas
# ============================================================================

def test_randers_ricci_scalar(numata, rng):
    for point in _ball_points(rng, 2, 10):
        x, y = point.x_array, point.y_array
        P = 0.5 * (y @ y) / (np.linalg.norm(y) + x @ y)
        _, rho, _ = jacobi_projective(numata, point)
        assert rho == pytest.approx(3.0 * P ** 2, rel=1e-12)


def test_klein_ricci_scalar_at_origin(klein):
    y = np.array([1.5, -0.5])
    _, rho, alpha = jacobi_projective(ProjectiveFactor.from_generator(klein), PhasePoint.of([0, 0], y))
    assert rho == pytest.approx(-(y @ y), rel=1e-14)
    np.testing.assert_allclose(alpha, -y, rtol=1e-13, atol=1e-14)


def test_klein_ricci_scalar_is_minus_F_squared(klein, rng):
    factor = ProjectiveFactor.from_generator(klein)
    for point in _ball_points(rng, 2, 10):
        x, y = point.x_array, point.y_array
        one_minus = 1.0 - x @ x
        F2 = ((y @ y) * one_minus + (x @ y) ** 2) / one_minus ** 2
        _, rho, _ = jacobi_projective(factor, point)
        assert rho == pytest.approx(-F2, rel=1e-12)


@pytest.mark.parametrize("text", [KLEIN_G, POSITIVE_G])
def test_constant_curvature_generators(text, rng):
    generator = GeneratorFunction.from_text(text, 3)
    for point in _ball_points(rng, 3, 8):
        res_c1, res_c2 = generator_conditions(generator, point)
        assert res_c1 < 1e-13
        assert res_c2 < 1e-10


def test_generic_generator_fails_second_condition():
    generator = GeneratorFunction.from_text("0.5*x1^2*x2 + x2^3 - 0.3*x1", 2)
    res_c1, res_c2 = generator_conditions(generator, PhasePoint.of([0.3, 0.2], [1.0, 0.5]))
    # first condition holds for every basic generator
    assert res_c1 < 1e-13
    assert res_c2 > 1e-4


@pytest.mark.parametrize("text", [NUMATA_P, "x1*y1 + x2^2*y2", "sqrt(yy)*sin(x1) + xy"])
def test_dja_identity(text, rng):
    factor = ProjectiveFactor.from_text(text, 2)
    for point in _ball_points(rng, 2, 5):
        assert dja_identity_residual(factor, point) < 1e-11


@pytest.mark.parametrize("seed", range(5))
def test_dja_identity_for_random_generators(seed, rng):
    factor = ProjectiveFactor.from_generator(random_generator(3, seed=seed))
    for point in _ball_points(rng, 3, 3):
        assert dja_identity_residual(factor, point) < 1e-10


# ============================================================================
# Agreement with the general spray pipeline
# ============================================================================

def test_two_pipelines_agree_for_randers(numata, rng):
    for point in _ball_points(rng, 2, 10):
        assert two_pipeline_residual(numata, point) < 1e-10


def test_two_pipelines_agree_for_klein(klein, rng):
    factor = ProjectiveFactor.from_generator(klein)
    for point in _ball_points(rng, 2, 10):
        assert two_pipeline_residual(factor, point) < 1e-10


def test_connection_shift(numata, klein, rng):
    generated = ProjectiveFactor.from_generator(klein)
    for point in _ball_points(rng, 2, 5):
        assert connection_shift_residual(numata, point) < 1e-12
        assert connection_shift_residual(generated, point) < 1e-12


def test_deformed_spray_coefficients(numata):
    spray = deform_flat(numata, 2)
    values = spray.coefficient_values(np.array([0.1, 0.2]), np.array([1.0, 2.0]))
    P = 0.5 * 5.0 / (np.sqrt(5.0) + 0.5)
    np.testing.assert_allclose(values, [P, 2 * P], rtol=1e-14)
    assert spray.describe()[0].endswith("* y1)")


def test_deform_flat_checks_dimension(numata):
    with pytest.raises(ValueError):
        deform_flat(numata, 3)


# ============================================================================
# Geodesics
# ============================================================================

def test_projectively_flat_geodesics_are_straight(klein):
    spray = deform_flat(ProjectiveFactor.from_generator(klein), 2, label="klein")
    seeds = [PhasePoint.of([0.1, 0.0], [1.0, 0.5]), PhasePoint.of([-0.2, 0.3], [0.2, -1.0])]
    assert geodesic_straightness(spray, seeds) < 1e-7


def test_curved_geodesics_detected(nonmetrizable_spray):
    defect = geodesic_straightness(nonmetrizable_spray, [PhasePoint.of([0.0, 0.0], [1.0, 1.0])])
    assert defect > 1e-3


def test_collinearity_of_line():
    t = np.linspace(0, 1, 10)[:, None]
    assert collinearity_defect(t * np.array([[1.0, 2.0, -1.0]])) < 1e-14


# ============================================================================
# Generators and factors
# ============================================================================

def test_generator_kind_detection(klein):
    assert klein.kind == "basic"
    homogeneous = GeneratorFunction.from_text("y1/sqrt(yy)", 2)
    assert homogeneous.kind == "homogeneous"
    assert homogeneous.homogeneity_residual([0.1, 0.2], [1.0, 3.0]) < 1e-14


def test_basic_generator_must_not_depend_on_y():
    with pytest.raises(ValueError):
        GeneratorFunction.from_text("x1*y1", 2, "basic")


def test_factor_homogeneity(numata):
    assert numata.homogeneity_residual([0.1, 0.2], [1.0, -2.0]) < 1e-14
    assert ProjectiveFactor.from_text("yy", 2).homogeneity_residual([0.0, 0.0], [1.0, 1.0]) > 0.1


def test_factor_needs_exactly_one_source(klein):
    with pytest.raises(ValueError):
        ProjectiveFactor(n=2)
    assert ProjectiveFactor.from_generator(klein).describe().startswith("S0(")


# ============================================================================
# Tool
# ============================================================================

def test_input_requires_one_source():
    point = PhasePoint.of([0, 0], [1, 0])
    with pytest.raises(ValidationError):
        HilbertInput(n=2, P=NUMATA_P, g=KLEIN_G, points=[point])
    with pytest.raises(ValidationError):
        HilbertInput(n=2, points=[point])


def test_tool_with_generator():
    result = HilbertDeformationTool().run(
        HilbertInput(n=2, g=KLEIN_G, points=[PhasePoint.of([0.0, 0.0], [1.0, 0.0])])
    )
    assert result["success"]
    row = result["points"][0]
    assert row["rho"] == pytest.approx(-1.0)
    assert row["res_c1"] < 1e-13
    assert row["res_c2"] < 1e-10


def test_tool_with_factor():
    result = HilbertDeformationTool().run(
        HilbertInput(n=2, P=NUMATA_P, points=[PhasePoint.of([0.0, 0.0], [1.0, 0.0])])
    )
    assert result["success"]
    assert result["points"][0]["rho"] == pytest.approx(0.75)
    assert result["points"][0]["dja_residual"] < 1e-10
    assert "res_c1" not in result["points"][0]


def test_tool_reports_parse_failure():
    result = HilbertDeformationTool().run(HilbertInput(n=2, P="yy +", points=[PhasePoint.of([0, 0], [1, 0])]))
    assert not result["success"]
