"""
Spray Metrizer - Hilbert Deformation Tool
=========================================

Projective deformations S = S0 - 2P C of the flat spray S0 = y^i d/dx^i,
i.e. sprays with G^i = P y^i, and the closed formulas available for them:

    rho     = P^2 - S0(P)
    alpha_i = P dP/dy^i + d(S0 P)/dy^i - 3 dP/dx^i
    Phi     = rho delta - y (x) alpha

P is either an expression or derived from a generator g as P = S0(g). A
generator g solving the two constant-curvature conditions yields a
projectively flat metric of constant flag curvature, F^2 = |rho|.

Author: Alfred Munga
License: MIT
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from tools.errors import MetrizerError
from tools.expression_parser_tool import (
    Expression, combine, coordinate_binding, evaluate, parse, variable,
)
from tools.jet_calculus import Jet, derivative_tensors, lift_point
from tools.spray_geometry_tool import PhasePoint, Spray, connection, integrate_geodesic, jacobi

logger = logging.getLogger(__name__)


# ============================================================================
# Generators and projective factors
# ============================================================================

def _expression_jet(expression: Expression, seeds: Sequence[Jet], n: int) -> Jet:
    """Evaluate an expression on seed jets; constants become constant jets."""
    value = evaluate(expression, coordinate_binding(seeds[:n], seeds[n:]))
    if isinstance(value, Jet):
        return value
    first = seeds[0]
    return Jet.constant(first.m, first.order, value, first.batch_shape)


@dataclass(frozen=True)
class GeneratorFunction:
    """
    A generator g, either basic (depends on x only) or 0-homogeneous in y.

    Example:
        >>> klein = GeneratorFunction.from_text("0 - ln(sqrt(1 - xx))", 2)
        >>> klein.kind
        'basic'
    """
    g: Expression
    kind: Literal["basic", "homogeneous"] = "basic"

    def __post_init__(self):
        if self.kind == "basic" and self.g.depends_on_fiber():
            raise ValueError(f"Basic generator {self.g} depends on y")

    @classmethod
    def from_text(cls, text: str, n: int, kind: Optional[str] = None) -> "GeneratorFunction":
        g = parse(text, n)
        if kind is None:
            kind = "homogeneous" if g.depends_on_fiber() else "basic"
        return cls(g=g, kind=kind)

    @property
    def n(self) -> int:
        return self.g.n

    def jets(self, x, y, order: int) -> Jet:
        return _expression_jet(self.g, lift_point(x, y, order), self.n)

    def homogeneity_residual(self, x, y) -> float:
        """|C(g)| = |y^i dg/dy^i| (zero for a 0-homogeneous g)."""
        n = self.n
        tensors = derivative_tensors([self.jets(x, y, 1)], upto=1)
        euler = np.einsum("...j,...j->...", np.asarray(y, dtype=float), tensors[1][..., 0, n:])
        return float(np.max(np.abs(euler)))


@dataclass(frozen=True)
class ProjectiveFactor:
    """The 1-homogeneous factor P, from an expression or as S0(g)."""
    n: int
    expression: Optional[Expression] = None
    generator: Optional[GeneratorFunction] = None

    def __post_init__(self):
        if (self.expression is None) == (self.generator is None):
            raise ValueError("ProjectiveFactor needs exactly one of expression or generator")
        source = self.expression if self.expression is not None else self.generator.g
        if source.n != self.n:
            raise ValueError(f"Factor declared for dimension {source.n}, expected {self.n}")

    @classmethod
    def from_text(cls, text: str, n: int) -> "ProjectiveFactor":
        return cls(n=n, expression=parse(text, n))

    @classmethod
    def from_generator(cls, generator: GeneratorFunction) -> "ProjectiveFactor":
        return cls(n=generator.n, generator=generator)

    def describe(self) -> str:
        if self.expression is not None:
            return self.expression.to_text()
        return f"S0({self.generator.g.to_text()})"

    def jets(self, x, y, order: int) -> Jet:
        """P as a jet of the given order; a generator is lifted one order higher."""
        n = self.n
        if self.expression is not None:
            return _expression_jet(self.expression, lift_point(x, y, order), n)
        seeds = lift_point(x, y, order + 1)
        g = _expression_jet(self.generator.g, seeds, n)
        P = seeds[n] * g.derivative(0)
        for i in range(1, n):
            P = P + seeds[n + i] * g.derivative(i)
        return P

    def homogeneity_residual(self, x, y) -> float:
        """max |C(P) - P| / (1 + |P|)."""
        n = self.n
        D0, D1 = derivative_tensors([self.jets(x, y, 1)], upto=1)
        euler = np.einsum("...j,...j->...", np.asarray(y, dtype=float), D1[..., 0, n:])
        return float(np.max(np.abs(euler - D0[..., 0]) / (1.0 + np.abs(D0[..., 0]))))


@dataclass(frozen=True)
class ProjectiveSpray(Spray):
    """Spray with G^i = P y^i for a factor without an explicit expression."""
    factor: Optional[ProjectiveFactor] = None

    def _validate_coefficients(self) -> None:
        if self.factor is None or self.factor.n != self.n:
            raise ValueError("ProjectiveSpray needs a factor of matching dimension")

    def coefficient_jets(self, x, y, order: int) -> List[Jet]:
        n = self.n
        P = self.factor.jets(x, y, order)
        fiber = lift_point(x, y, order)[n:]
        return [P * y_i for y_i in fiber]

    def coefficient_values(self, x, y) -> np.ndarray:
        P = self.factor.jets(x, y, 0).value
        return np.asarray(P)[..., None] * np.asarray(y, dtype=float)

    def describe(self) -> List[str]:
        return [f"{self.factor.describe()}*y{i}" for i in range(1, self.n + 1)]


def deform_flat(factor: ProjectiveFactor, n: int, domain: Optional[Expression] = None, label: str = "projective") -> Spray:
    """
    The spray with G^i = P y^i, so that S = S0 - 2P C.

    An expression factor yields explicit coefficient expressions; a generator
    factor yields a ProjectiveSpray evaluated through jets of g.
    """
    if factor.n != n:
        raise ValueError(f"Factor dimension {factor.n} does not match n={n}")
    if factor.expression is None:
        return ProjectiveSpray(n=n, domain=domain, label=label, factor=factor)
    coefficients = tuple(
        combine("mul", factor.expression, variable("y", i, n)) for i in range(1, n + 1)
    )
    return Spray(n=n, coefficients=coefficients, domain=domain, label=label)


# ============================================================================
# Closed formulas
# ============================================================================

@dataclass(frozen=True)
class _ProjectiveJets:
    P: Jet
    S0P: Jet
    rho: Jet
    alpha: List[Jet]


def _projective_jets(factor: ProjectiveFactor, x, y, order: int) -> _ProjectiveJets:
    """P at `order`, S0(P) and rho one order lower, alpha two orders lower."""
    n = factor.n
    P = factor.jets(x, y, order)
    fiber = lift_point(x, y, order)[n:]
    S0P = sum((fiber[i] * P.derivative(i) for i in range(1, n)), fiber[0] * P.derivative(0))
    rho = P * P - S0P
    alpha = [
        P * P.derivative(n + j) + S0P.derivative(n + j) - 3.0 * P.derivative(j)
        for j in range(n)
    ]
    return _ProjectiveJets(P=P, S0P=S0P, rho=rho, alpha=alpha)


def jacobi_projective(factor: ProjectiveFactor, point: PhasePoint) -> Tuple[np.ndarray, float, np.ndarray]:
    """
    (Phi, rho, alpha) of the deformed spray from the closed formulas.

    Example:
        >>> numata = ProjectiveFactor.from_text("0.5*yy/(sqrt(yy)+xy)", 2)
        >>> Phi, rho, alpha = jacobi_projective(numata, PhasePoint.of([0, 0], [1, 0]))
        >>> round(rho, 12)
        0.75
    """
    jets = _projective_jets(factor, point.x_array, point.y_array, 2)
    rho = float(jets.rho.value)
    alpha = np.array([float(a.value) for a in jets.alpha])
    Phi = rho * np.eye(factor.n) - np.outer(point.y_array, alpha)
    return Phi, rho, alpha


def generator_conditions(generator: GeneratorFunction, point: PhasePoint) -> Tuple[float, float]:
    """
    Residuals of the constant-curvature generator conditions.

    res_c1 = max_i |dP/dy^i - dg/dx^i| with P = S0(g).
    res_c2 = max_i |d(E rho)/dx^i + 1/2 S0(E) drho/dy^i| / |E rho| with
    E = exp(-2g) and rho = S0(g)^2 - S0^2(g).
    """
    n = generator.n
    x, y = point.x_array, point.y_array
    factor = ProjectiveFactor.from_generator(generator)
    jets = _projective_jets(factor, x, y, 2)

    _, D1 = derivative_tensors([jets.P], upto=1)
    seeds = lift_point(x, y, 3)
    g = _expression_jet(generator.g, seeds, n)
    _, g1 = derivative_tensors([g], upto=1)
    res_c1 = float(np.max(np.abs(D1[0, n:] - g1[0, :n])))

    E = (g * -2.0).exp()
    S0E = sum((seeds[n + i] * E.derivative(i) for i in range(1, n)), seeds[n] * E.derivative(0))
    weighted = E * jets.rho
    _, w1 = derivative_tensors([weighted], upto=1)
    _, r1 = derivative_tensors([jets.rho], upto=1)
    c2 = w1[0, :n] + 0.5 * float(S0E.value) * r1[0, n:]
    scale = max(abs(float(weighted.value)), 1e-300)
    return res_c1, float(np.max(np.abs(c2)) / scale)


def dja_identity_residual(factor: ProjectiveFactor, point: PhasePoint) -> float:
    """max_{i,j} |dalpha_i/dy^j - dalpha_j/dy^i + 3(P_{x^i y^j} - P_{x^j y^i})|."""
    n = factor.n
    jets = _projective_jets(factor, point.x_array, point.y_array, 3)
    A = np.array([a.gradient()[n:] for a in jets.alpha])
    _, _, D2 = derivative_tensors([jets.P], upto=2)
    mixed = D2[0, :n, n:]
    defect = A - A.T + 3.0 * (mixed - mixed.T)
    return float(np.max(np.abs(defect)))


def connection_shift_residual(factor: ProjectiveFactor, point: PhasePoint) -> float:
    """max |N^i_j - (P delta^i_j + y^i dP/dy^j)| for the deformed spray."""
    n = factor.n
    N = connection(deform_flat(factor, n), point).N
    D0, D1 = derivative_tensors([factor.jets(point.x_array, point.y_array, 1)], upto=1)
    expected = D0[0] * np.eye(n) + np.outer(point.y_array, D1[0, n:])
    return float(np.max(np.abs(N - expected)))


def two_pipeline_residual(factor: ProjectiveFactor, point: PhasePoint) -> float:
    """Relative gap between closed-form Phi and the general spray pipeline."""
    Phi, _, _ = jacobi_projective(factor, point)
    general = jacobi(deform_flat(factor, factor.n), point).Phi
    scale = max(np.linalg.norm(general), 1e-300)
    return float(np.linalg.norm(Phi - general) / scale)


# ============================================================================
# Geodesics
# ============================================================================

def collinearity_defect(trajectory: np.ndarray) -> float:
    """Largest distance of trajectory points from their best-fit line, over the extent."""
    points = np.asarray(trajectory, dtype=float)
    centered = points - points.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    direction = vt[0]
    along = centered @ direction
    offsets = centered - np.outer(along, direction)
    extent = max(float(along.max() - along.min()), 1e-300)
    return float(np.linalg.norm(offsets, axis=-1).max() / extent)


def geodesic_straightness(
    spray: Spray, seeds: Sequence[PhasePoint], t_final: float = 0.5, samples: int = 40
) -> float:
    """Worst collinearity defect of base trajectories started at the seeds."""
    worst = 0.0
    for seed in seeds:
        _, xs, _ = integrate_geodesic(spray, seed.x, seed.y, t_final=t_final, samples=samples)
        worst = max(worst, collinearity_defect(xs))
    return worst


# ============================================================================
# Tool wrapper
# ============================================================================

class HilbertInput(BaseModel):
    """Input for HilbertDeformationTool: exactly one of P or g."""
    n: int = Field(..., ge=2, description="Dimension")
    P: Optional[str] = Field(default=None, description="Projective factor expression")
    g: Optional[str] = Field(default=None, description="Generator expression, P = S0(g)")
    points: List[PhasePoint] = Field(..., min_length=1)

    @model_validator(mode="after")
    def validate_source(self):
        if (self.P is None) == (self.g is None):
            raise ValueError("Give exactly one of P or g")
        return self


class HilbertDeformationTool:
    """Evaluate the projective closed formulas and generator conditions at points."""

    def run(self, input_data: HilbertInput) -> Dict[str, Any]:
        try:
            generator = None
            if input_data.g is not None:
                generator = GeneratorFunction.from_text(input_data.g, input_data.n)
                factor = ProjectiveFactor.from_generator(generator)
            else:
                factor = ProjectiveFactor.from_text(input_data.P, input_data.n)
            rows = []
            for point in input_data.points:
                _, rho, alpha = jacobi_projective(factor, point)
                row = {
                    "point": point.as_dict(),
                    "rho": rho,
                    "alpha": alpha.tolist(),
                    "dja_residual": dja_identity_residual(factor, point),
                }
                if generator is not None:
                    row["res_c1"], row["res_c2"] = generator_conditions(generator, point)
                rows.append(row)
        except (MetrizerError, ValueError) as e:
            logger.error(f"❌ Projective evaluation failed: {e}")
            return {"success": False, "error": str(e)}
        logger.info(f"✅ Evaluated P = {factor.describe()} at {len(rows)} points")
        return {"success": True, "factor": factor.describe(), "points": rows}
