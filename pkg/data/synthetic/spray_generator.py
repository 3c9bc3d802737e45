"""
Spray Metrizer - Random Spray Generator
=======================================

Generates random test inputs for property suites:
- Polynomial sprays G^i = sum c_ijk(x) y^j y^k, 2-homogeneous in y by construction
- Polynomial generator functions g(x) for projective deformations

Every generator takes an explicit seed so suites are reproducible.

Author: Alfred Munga
License: MIT
"""

import json
import os
from itertools import combinations_with_replacement
from typing import Dict, List, Optional, Sequence

import numpy as np

from tools.hilbert_tool import GeneratorFunction
from tools.spray_geometry_tool import Spray


# ============================================================================
# Helper Functions
# ============================================================================

def _term(coefficient: float, factors: Sequence[str]) -> str:
    """Monomial text: the coefficient rounded to 6 decimals times its factors."""
    return "*".join([repr(round(float(coefficient), 6)), *factors])


def random_polynomial(
    rng: np.random.Generator,
    names: Sequence[str],
    degree: int,
    scale: float = 1.0,
    density: float = 0.7,
) -> str:
    """
    Random polynomial in the given variables with all monomials up to degree.

    Args:
        rng: Random generator
        names: Variable names, e.g. ["x1", "x2"]
        degree: Maximum total degree
        scale: Coefficients are drawn uniformly from [-scale, scale]
        density: Probability of keeping each non-constant monomial
    """
    terms = [_term(rng.uniform(-scale, scale), [])]
    for d in range(1, degree + 1):
        for monomial in combinations_with_replacement(names, d):
            if rng.random() < density:
                terms.append(_term(rng.uniform(-scale, scale), monomial))
    return " + ".join(terms)


def random_spray_texts(
    n: int,
    rng: np.random.Generator,
    x_degree: int = 1,
    scale: float = 0.5,
) -> List[str]:
    """Coefficient texts G^1..G^n, quadratic in y with polynomial coefficients in x."""
    x_names = [f"x{i + 1}" for i in range(n)]
    texts = []
    for _ in range(n):
        terms = []
        for j, k in combinations_with_replacement(range(1, n + 1), 2):
            coefficient = random_polynomial(rng, x_names, x_degree, scale)
            terms.append(f"({coefficient})*y{j}*y{k}")
        texts.append(" + ".join(terms))
    return texts


def random_spray(n: int, seed: int, x_degree: int = 1) -> Spray:
    """A random polynomial spray."""
    rng = np.random.default_rng(seed)
    return Spray.from_texts(random_spray_texts(n, rng, x_degree), label=f"random_spray_{n}d_{seed}")


def random_generator_text(n: int, rng: np.random.Generator, degree: int = 3, scale: float = 0.5) -> str:
    """Polynomial g(x) of total degree at most `degree`."""
    return random_polynomial(rng, [f"x{i + 1}" for i in range(n)], degree, scale)


def random_generator(n: int, seed: int, degree: int = 3) -> GeneratorFunction:
    """A random basic generator function."""
    rng = np.random.default_rng(seed)
    return GeneratorFunction.from_text(random_generator_text(n, rng, degree), n, "basic")


def random_points(n: int, count: int, seed: int, x_range: float = 1.0, y_range: float = 2.0):
    """Phase points with |y| bounded away from zero."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-x_range, x_range, size=(count, n))
    y = rng.uniform(-y_range, y_range, size=(count, n))
    short = np.linalg.norm(y, axis=-1) < 0.2
    y[short] += 0.5
    return x, y


# ============================================================================
# Dataset Generation
# ============================================================================

def generate_dataset(count: int, n: int, seed: int = 0, output_path: Optional[str] = None) -> List[Dict]:
    """
    Generate random spray and generator records.

    Args:
        count: Number of records of each kind
        n: Dimension
        seed: Base seed; record i uses seed + i
        output_path: Optional JSON output path

    Returns:
        List of {"kind", "n", "seed", "expressions"} records
    """
    records = []
    for i in range(count):
        rng = np.random.default_rng(seed + i)
        records.append({"kind": "spray", "n": n, "seed": seed + i, "expressions": random_spray_texts(n, rng)})
        records.append({"kind": "generator", "n": n, "seed": seed + i, "expressions": [random_generator_text(n, rng)]})

    if output_path:
        directory = os.path.dirname(output_path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(output_path, "w") as f:
            json.dump(records, f, indent=2)
        print(f"✅ Generated {len(records)} records")
        print(f"📁 Saved to: {output_path}")
    return records


if __name__ == "__main__":
    print("=" * 70)
    print("Spray Metrizer - Random Spray Generator")
    print("=" * 70)

    script_dir = os.path.dirname(os.path.abspath(__file__))
    generate_dataset(10, 2, seed=20240101, output_path=os.path.join(script_dir, "random_sprays.json"))

    print("\n📋 Sample sprays:")
    for i in range(3):
        spray = random_spray(2, seed=i)
        print(f"  {i + 1}. {spray.describe()}")
