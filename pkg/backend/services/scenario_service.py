"""
Spray Metrizer - Scenario Service
=================================

Scenario documents (JSON) describe what to test: the spray, where to sample,
tolerances, how to reconstruct and what to expect. This service validates
them, turns them into Spray objects and draws deterministic samples.

Author: Alfred Munga
License: MIT
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator

from backend.config import get_settings
from tools.errors import SamplingExhausted, SchemaError
from tools.expression_parser_tool import coordinate_binding, evaluate, optional_parse, parse
from tools.hilbert_tool import GeneratorFunction, ProjectiveFactor, deform_flat
from tools.metrizability_tool import TestConfig, Verdict
from tools.reconstruction_tool import QuadratureConfig
from tools.spray_geometry_tool import PhasePoint, Spray

logger = logging.getLogger(__name__)

# Rejection sampling gives up below this acceptance rate once MIN_DRAWS draws are spent.
MIN_ACCEPTANCE = 0.01
MIN_DRAWS = 100_000


# ============================================================================
# Scenario schema
# ============================================================================

Interval = Tuple[float, float]


class ExpressionsSpec(BaseModel):
    """Spray coefficients, projective factor or generator, depending on mode."""
    G: Optional[List[str]] = Field(default=None, description="Spray coefficients G^1..G^n")
    P: Optional[str] = Field(default=None, description="Projective factor, G^i = P y^i")
    g: Optional[str] = Field(default=None, description="Generator, P = S0(g)")
    kind: Optional[Literal["basic", "homogeneous"]] = Field(default=None, description="Generator kind")


class DomainSpec(BaseModel):
    x_box: List[Interval] = Field(..., description="Per-coordinate sampling interval for x")
    y_box: List[Interval] = Field(..., description="Per-coordinate sampling interval for y")
    y_norm: Optional[Interval] = Field(default=None, description="Accepted range of |y|")
    predicate: Optional[str] = Field(default=None, description="Admitted where the expression is > 0")

    @field_validator("x_box", "y_box")
    @classmethod
    def validate_box(cls, v):
        for low, high in v:
            if not low < high:
                raise ValueError(f"Degenerate interval [{low}, {high}]")
        return v

    @field_validator("y_norm")
    @classmethod
    def validate_norm(cls, v):
        if v is not None and not 0 <= v[0] < v[1]:
            raise ValueError(f"Invalid |y| range {v}")
        return v


class SamplesSpec(BaseModel):
    count: int = Field(
        default_factory=lambda: get_settings().default_samples, ge=1, description="Number of classification samples"
    )
    seed: int = Field(
        default_factory=lambda: get_settings().default_seed, description="Seed of numpy.random.default_rng"
    )


class GridSpec(BaseModel):
    path: str = Field(..., description="CSV output path")
    count: int = Field(default=50, ge=1, description="Grid points drawn from the domain")
    seed_offset: int = Field(default=2, description="Added to the sample seed for the grid draw")


class OutputSpec(BaseModel):
    report: Optional[str] = Field(default=None, description="JSON report path")
    grid: Optional[GridSpec] = None


class ReconstructionSpec(QuadratureConfig):
    """Quadrature settings plus the comparison protocol."""
    enabled: bool = Field(default=True, description="Run the reconstruction for metrizable verdicts")
    anchor: Optional[PhasePoint] = Field(default=None, description="Gauge anchor point")
    holdout: int = Field(default=100, ge=1, description="Held-out comparison points")
    verify_points: int = Field(default=20, ge=1, description="Points for the verification record")
    compare_rtol: float = Field(default=1e-6, gt=0, description="Relative tolerance against expected forms")

    def quadrature(self) -> QuadratureConfig:
        return QuadratureConfig(**self.model_dump(include=set(QuadratureConfig.model_fields)))


class ExpectedSpec(BaseModel):
    F: Optional[str] = None
    kappa: Optional[str] = None
    verdict: Optional[Verdict] = None


class Scenario(BaseModel):
    """A complete test scenario."""
    name: str = Field(default="scenario")
    n: int = Field(..., ge=2, le=6, description="Dimension")
    mode: Literal["spray", "projective", "generator"]
    expressions: ExpressionsSpec
    domain: DomainSpec
    samples: SamplesSpec = Field(default_factory=SamplesSpec)
    tolerances: TestConfig = Field(default_factory=TestConfig)
    reconstruction: ReconstructionSpec = Field(default_factory=ReconstructionSpec)
    expected: ExpectedSpec = Field(default_factory=ExpectedSpec)
    outputs: OutputSpec = Field(default_factory=OutputSpec)


# ============================================================================
# Loading and validation
# ============================================================================

def _first_error_path(error: ValidationError) -> Tuple[str, str]:
    """Dotted field path and message of the first pydantic error."""
    first = error.errors()[0]
    path = ".".join(str(part) for part in first["loc"]) or "scenario"
    return path, first["msg"]


def validate_scenario(data: Union[Dict[str, Any], Scenario]) -> Scenario:
    """
    Validate a scenario document and parse all of its expressions.

    Raises:
        SchemaError: schema violation, with the dotted path of the first field
        ExpressionSyntaxError / VariableIndexError: malformed expressions
    """
    if isinstance(data, Scenario):
        scenario = data
    else:
        try:
            scenario = Scenario.model_validate(data)
        except ValidationError as e:
            raise SchemaError(*_first_error_path(e)) from e

    n = scenario.n
    expressions = scenario.expressions
    if scenario.mode == "spray":
        if expressions.G is None:
            raise SchemaError("G", "mode 'spray' needs the coefficient list G")
        if len(expressions.G) != n:
            raise SchemaError("G", f"expected {n} coefficients, got {len(expressions.G)}")
    elif scenario.mode == "projective" and expressions.P is None:
        raise SchemaError("P", "mode 'projective' needs the factor P")
    elif scenario.mode == "generator" and expressions.g is None:
        raise SchemaError("g", "mode 'generator' needs the generator g")

    for name in ("x_box", "y_box"):
        if len(getattr(scenario.domain, name)) != n:
            raise SchemaError(f"domain.{name}", f"expected {n} intervals")

    spray = build_spray(scenario)
    for field_name in ("F", "kappa"):
        text = getattr(scenario.expected, field_name)
        if text is not None:
            parse(text, n)

    reconstruction = scenario.reconstruction
    for name in ("y_ref", "x_ref"):
        vector = getattr(reconstruction, name)
        if vector is not None and len(vector) != n:
            raise SchemaError(f"reconstruction.{name}", f"expected {n} components")
    anchor = reconstruction.anchor
    if anchor is not None:
        if anchor.n != n:
            raise SchemaError("reconstruction.anchor", f"expected {n} components")
        if not bool(spray.admits(anchor.x_array, anchor.y_array)):
            raise SchemaError("reconstruction.anchor", "anchor point is not admitted")
    if scenario.tolerances.samples and scenario.tolerances.samples[0].n != n:
        raise SchemaError("tolerances.samples", f"expected points of dimension {n}")
    return scenario


def load_scenario(path: Union[str, Path]) -> Scenario:
    """
    Read and validate a scenario JSON file.

    Example:
        >>> scenario = load_scenario("data/scenarios/klein.json")
        >>> scenario.mode
        'generator'
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise SchemaError("scenario", f"invalid JSON: {e}") from e
    scenario = validate_scenario(data)
    logger.info(f"✅ Loaded scenario '{scenario.name}' (n={scenario.n}, mode={scenario.mode})")
    return scenario


def build_spray(scenario: Scenario) -> Spray:
    """The spray a scenario describes, with the scenario predicate as its domain."""
    n = scenario.n
    expressions = scenario.expressions
    domain = optional_parse(scenario.domain.predicate, n)
    if scenario.mode == "spray":
        coefficients = tuple(parse(text, n) for text in expressions.G)
        return Spray(n=n, coefficients=coefficients, domain=domain, label=scenario.name)
    if scenario.mode == "projective":
        factor = ProjectiveFactor.from_text(expressions.P, n)
    else:
        factor = ProjectiveFactor.from_generator(
            GeneratorFunction.from_text(expressions.g, n, expressions.kind)
        )
    return deform_flat(factor, n, domain=domain, label=scenario.name)


# ============================================================================
# Sampling
# ============================================================================

def _admitted(spray: Spray, domain: DomainSpec, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Domain predicate mask, narrowed by the optional |y| band."""
    mask = spray.admits(x, y)
    if domain.y_norm is not None:
        norm = np.linalg.norm(y, axis=-1)
        mask &= (norm >= domain.y_norm[0]) & (norm <= domain.y_norm[1])
    return mask


def sample_arrays(
    scenario: Scenario,
    count: Optional[int] = None,
    seed: Optional[int] = None,
    spray: Optional[Spray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Deterministic rejection sampling from the scenario boxes.

    Returns:
        (x, y) arrays of shape (count, n)

    Raises:
        SamplingExhausted: acceptance below 1% after 10^5 draws
    """
    count = scenario.samples.count if count is None else count
    seed = scenario.samples.seed if seed is None else seed
    spray = spray or build_spray(scenario)
    n = scenario.n
    x_box = np.array(scenario.domain.x_box, dtype=float)
    y_box = np.array(scenario.domain.y_box, dtype=float)
    rng = np.random.default_rng(seed)

    xs: List[np.ndarray] = []
    ys: List[np.ndarray] = []
    accepted = 0
    draws = 0
    while accepted < count:
        batch = max(1024, 4 * (count - accepted))
        x = rng.uniform(x_box[:, 0], x_box[:, 1], size=(batch, n))
        y = rng.uniform(y_box[:, 0], y_box[:, 1], size=(batch, n))
        mask = _admitted(spray, scenario.domain, x, y)
        xs.append(x[mask])
        ys.append(y[mask])
        accepted += int(mask.sum())
        draws += batch
        if draws >= MIN_DRAWS and accepted < MIN_ACCEPTANCE * draws:
            raise SamplingExhausted(
                f"Only {accepted} of {draws} draws admitted for scenario '{scenario.name}'"
            )
    x = np.concatenate(xs)[:count]
    y = np.concatenate(ys)[:count]
    logger.debug(f"Sampled {count} points after {draws} draws")
    return x, y


def sample_points(scenario: Scenario) -> List[PhasePoint]:
    """Scenario samples as phase points."""
    x, y = sample_arrays(scenario)
    return [PhasePoint.of(a, b) for a, b in zip(x, y)]


def evaluate_expected(text: str, n: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Evaluate an expected closed form on a batch of points."""
    expression = parse(text, n)
    binding = coordinate_binding(np.moveaxis(x, -1, 0), np.moveaxis(y, -1, 0))
    return np.broadcast_to(evaluate(expression, binding), x.shape[:-1]).astype(float)
