"""
Spray Metrizer - Example Registry
=================================

Built-in scenarios with known outcomes. Dimension-generic entries accept
n in {2, 3}; the affine family accepts a variant selecting the function g.

Author: Alfred Munga
License: MIT
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

from backend.services.scenario_service import Scenario, validate_scenario
from tools.metrizability_tool import FLAT_NOTE, RICCI_FLAT_NOTE, Verdict

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RegistryEntry:
    name: str
    description: str
    expected_verdict: Verdict
    builder: Callable[[int, Optional[str]], dict]
    dimensions: Tuple[int, ...] = (2,)
    variants: Tuple[str, ...] = ()
    default_variant: Optional[str] = None
    note: str = ""


def _box(low: float, high: float, n: int) -> List[List[float]]:
    """The same [low, high] interval on every axis."""
    return [[low, high] for _ in range(n)]


def _unit(n: int) -> List[float]:
    return [1.0] + [0.0] * (n - 1)


# ============================================================================
# Scenario builders
# ============================================================================

def _flat(n: int, _variant: Optional[str]) -> dict:
    """G = 0 on the whole tangent bundle."""
    return {
        "name": "flat",
        "n": n,
        "mode": "spray",
        "expressions": {"G": ["0"] * n},
        "domain": {"x_box": _box(-1, 1, n), "y_box": _box(-10, 10, n), "y_norm": [0.1, 10]},
        "expected": {"verdict": Verdict.RICCI_DEGENERATE.value},
    }


def _klein(n: int, _variant: Optional[str]) -> dict:
    """Hilbert metric of the unit ball, generated by g = -ln sqrt(1 - |x|^2)."""
    return {
        "name": "klein",
        "n": n,
        "mode": "generator",
        "expressions": {"g": "0 - ln(sqrt(1 - xx))", "kind": "basic"},
        "domain": {
            "x_box": _box(-0.9, 0.9, n),
            "y_box": _box(-10, 10, n),
            "y_norm": [0.1, 10],
            "predicate": "0.81 - xx",
        },
        "reconstruction": {
            "fiber_path": "arc",
            "y_ref": _unit(n),
            "x_ref": [0.0] * n,
            "anchor": {"x": [0.1] + [0.0] * (n - 1), "y": _unit(n)},
        },
        "expected": {
            "F": "sqrt((yy*(1 - xx) + xy^2)/(1 - xx)^2)",
            "kappa": "-1",
            "verdict": Verdict.METRIZABLE_CONSTANT.value,
        },
    }


def _positive_cc(n: int, _variant: Optional[str]) -> dict:
    """Projectively flat metric of constant curvature +1, g = -ln sqrt(1 + |x|^2)."""
    return {
        "name": "positive_cc",
        "n": n,
        "mode": "generator",
        "expressions": {"g": "0 - ln(sqrt(1 + xx))", "kind": "basic"},
        "domain": {"x_box": _box(-1, 1, n), "y_box": _box(-10, 10, n), "y_norm": [0.1, 10]},
        "reconstruction": {
            "fiber_path": "arc",
            "y_ref": _unit(n),
            "x_ref": [0.0] * n,
            "anchor": {"x": [0.0] * n, "y": _unit(n)},
        },
        "expected": {
            "F": "sqrt((yy*(1 + xx) - xy^2)/(1 + xx)^2)",
            "kappa": "1",
            "verdict": Verdict.METRIZABLE_CONSTANT.value,
        },
    }


def _numata(n: int, _variant: Optional[str]) -> dict:
    """Randers metric |y| + <x, y> on the unit ball, given by its projective factor."""
    return {
        "name": "numata",
        "n": n,
        "mode": "projective",
        "expressions": {"P": "0.5*yy/(sqrt(yy) + xy)"},
        "domain": {
            "x_box": _box(-0.5, 0.5, n),
            "y_box": _box(-2, 2, n),
            "y_norm": [0.5, 2],
            "predicate": "0.25 - xx",
        },
        "reconstruction": {
            "fiber_path": "arc",
            "y_ref": _unit(n),
            "x_ref": [0.0] * n,
            "anchor": {"x": [0.0] * n, "y": _unit(n)},
        },
        "expected": {
            "F": "sqrt(yy) + xy",
            "kappa": "0.75*yy^2/(sqrt(yy) + xy)^4",
            "verdict": Verdict.METRIZABLE_SCALAR.value,
        },
    }


# g(t) with t = x1 + x2, spray coefficients G^i = (1/2) phi (y^i)^2, phi = -2 g'/g
_AFFINE_VARIANTS: Dict[str, dict] = {
    "half": {
        "G": ["0 - y1^2/(x1 + x2)", "0 - y2^2/(x1 + x2)"],
        "F": "2*sqrt(y1*y2)/(x1 + x2)",
        "kappa": "-1",
        "verdict": Verdict.METRIZABLE_CONSTANT,
    },
    "square": {
        "G": ["0 - 2*y1^2/(x1 + x2)", "0 - 2*y2^2/(x1 + x2)"],
        "F": "sqrt(y1*y2)/(x1 + x2)^2",
        "kappa": "0 - 8*(x1 + x2)^2",
        "verdict": Verdict.METRIZABLE_SCALAR,
    },
}


def _affine2d_g(_n: int, variant: Optional[str]) -> dict:
    """Affine spray on x1 + x2 > 0; the variant picks the coefficient of y_i^2."""
    variant = variant or "half"
    if variant not in _AFFINE_VARIANTS:
        raise ValueError(f"Unknown variant '{variant}', expected one of {sorted(_AFFINE_VARIANTS)}")
    spec = _AFFINE_VARIANTS[variant]
    return {
        "name": f"affine2d_g[{variant}]",
        "n": 2,
        "mode": "spray",
        "expressions": {"G": spec["G"]},
        "domain": {
            "x_box": _box(0.5, 1.5, 2),
            "y_box": _box(0.1, 10, 2),
            "predicate": "y1 + y2 - abs(y1 - y2)",
        },
        "reconstruction": {
            "fiber_path": "segment",
            "y_ref": [1.0, 1.0],
            "x_ref": [1.0, 1.0],
            "anchor": {"x": [1.0, 1.0], "y": [1.0, 1.0]},
        },
        "expected": {"F": spec["F"], "kappa": spec["kappa"], "verdict": spec["verdict"].value},
    }


def _degenerate2d(_n: int, _variant: Optional[str]) -> dict:
    """Metrizable by F = exp(-x2) y2, whose energy Hessian has rank one."""
    return {
        "name": "degenerate2d",
        "n": 2,
        "mode": "spray",
        "expressions": {"G": ["y1*y2", "0 - 0.5*y2^2"]},
        "domain": {"x_box": _box(-1, 1, 2), "y_box": [[-10, 10], [0.1, 10]], "predicate": "y2"},
        "reconstruction": {
            "fiber_path": "segment",
            "y_ref": [1.0, 1.0],
            "x_ref": [0.0, 0.0],
            "anchor": {"x": [0.0, 0.0], "y": [1.0, 1.0]},
        },
        "expected": {
            "F": "exp(0 - x2)*y2",
            "kappa": "0 - 2*exp(2*x2)",
            "verdict": Verdict.RANK_DEFICIENT_CANDIDATE.value,
        },
    }


def _nonmetrizable2d(_n: int, _variant: Optional[str]) -> dict:
    """Isotropic spray whose sigma is fiber-closed but not horizontally closed."""
    return {
        "name": "nonmetrizable2d",
        "n": 2,
        "mode": "spray",
        "expressions": {"G": ["0.5*(y1^2 + y2^2)", "2*y1*y2"]},
        "domain": {"x_box": _box(-1, 1, 2), "y_box": _box(-10, 10, 2), "y_norm": [0.1, 10]},
        "expected": {"verdict": Verdict.FAILS_CONDITION_III.value},
    }


def _shen_ricciflat(_n: int, _variant: Optional[str]) -> dict:
    """Ricci-flat spray, so the ladder stops at RicciDegenerate."""
    return {
        "name": "shen_ricciflat",
        "n": 2,
        "mode": "spray",
        "expressions": {"G": ["0.5*x2*y1^2", "0 - 0.5*x1*y2^2"]},
        "domain": {"x_box": _box(-1, 1, 2), "y_box": _box(-10, 10, 2), "y_norm": [0.1, 10]},
        "expected": {"verdict": Verdict.RICCI_DEGENERATE.value},
    }


REGISTRY: Dict[str, RegistryEntry] = {
    entry.name: entry
    for entry in (
        RegistryEntry("flat", "Flat spray G = 0", Verdict.RICCI_DEGENERATE, _flat,
                      dimensions=(2, 3), note=FLAT_NOTE),
        RegistryEntry("klein", "Klein metric on the ball |x| < 0.9, kappa = -1",
                      Verdict.METRIZABLE_CONSTANT, _klein, dimensions=(2, 3)),
        RegistryEntry("positive_cc", "Projectively flat metric with kappa = +1",
                      Verdict.METRIZABLE_CONSTANT, _positive_cc, dimensions=(2, 3)),
        RegistryEntry("numata", "Randers metric |y| + <x, y>, scalar curvature",
                      Verdict.METRIZABLE_SCALAR, _numata, dimensions=(2, 3)),
        RegistryEntry("affine2d_g", "Affine family phi = psi = -2g'/g on x1 + x2 in [1, 3]",
                      Verdict.METRIZABLE_CONSTANT, _affine2d_g,
                      variants=("half", "square"), default_variant="half"),
        RegistryEntry("degenerate2d", "Degenerate metric exp(-x2) y2",
                      Verdict.RANK_DEFICIENT_CANDIDATE, _degenerate2d),
        RegistryEntry("nonmetrizable2d", "Isotropic spray failing the horizontal test",
                      Verdict.FAILS_CONDITION_III, _nonmetrizable2d),
        RegistryEntry("shen_ricciflat", "Ricci-flat spray with nonzero Jacobi endomorphism",
                      Verdict.RICCI_DEGENERATE, _shen_ricciflat, note=RICCI_FLAT_NOTE),
    )
}


def list_examples() -> List[Dict[str, str]]:
    """Table rows: name, description, dimensions, variants, expected verdict, note."""
    rows = []
    for entry in REGISTRY.values():
        rows.append({
            "name": entry.name,
            "description": entry.description,
            "dimensions": ", ".join(str(d) for d in entry.dimensions),
            "variants": ", ".join(entry.variants) or "-",
            "expected": entry.expected_verdict.value,
            "note": entry.note,
        })
    return rows


def get_example(name: str, dimension: Optional[int] = None, variant: Optional[str] = None) -> Scenario:
    """
    Build the scenario of a registry entry.

    Raises:
        KeyError: unknown name
        ValueError: unsupported dimension or variant
    """
    if name not in REGISTRY:
        raise KeyError(f"Unknown example '{name}'; available: {', '.join(REGISTRY)}")
    entry = REGISTRY[name]
    n = dimension or entry.dimensions[0]
    if n not in entry.dimensions:
        raise ValueError(f"Example '{name}' supports dimensions {entry.dimensions}, got {n}")
    if variant is not None and variant not in entry.variants:
        raise ValueError(f"Example '{name}' has no variant '{variant}'")
    return validate_scenario(entry.builder(n, variant or entry.default_variant))


def expected_verdict(name: str, variant: Optional[str] = None) -> Verdict:
    """Expected verdict, taking the variant into account."""
    scenario = get_example(name, variant=variant)
    return scenario.expected.verdict or REGISTRY[name].expected_verdict
