"""
Spray Metrizer - Spray Geometry Tool
====================================

Canonical geometric objects attached to a spray S = y^i d/dx^i - 2G^i d/dy^i,
evaluated at phase points from exact jet derivatives of the coefficients:

- nonlinear connection N^i_j = dG^i/dy^j and Berwald coefficients
- curvature R^i_jk = dN^i_j/dx^k - dN^i_k/dx^j (horizontal derivatives)
- Jacobi endomorphism Phi, Ricci scalar rho = Tr(Phi)/(n-1)
- isotropy decomposition Phi = rho*delta - y (x) alpha

All internal arrays carry a leading batch shape, so a whole sample set is
processed in one pass. Quantities that later need first derivatives are held
as "value + gradient" arrays whose last axis has length 1 + 2n: entry 0 is
the value, entries 1..2n the partials in (x^1..x^n, y^1..y^n).

Author: Alfred Munga
License: MIT
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from tools.errors import DomainError
from tools.expression_parser_tool import Expression, coordinate_binding, evaluate, parse
from tools.jet_calculus import Jet, derivative_tensors, lift_point

logger = logging.getLogger(__name__)


# ============================================================================
# Domain Types
# ============================================================================

@dataclass(frozen=True)
class PhasePoint:
    """A point (x, y) of the slit tangent space."""
    x: Tuple[float, ...]
    y: Tuple[float, ...]

    @classmethod
    def of(cls, x: Sequence[float], y: Sequence[float]) -> "PhasePoint":
        if len(x) != len(y):
            raise ValueError(f"x has {len(x)} components but y has {len(y)}")
        return cls(tuple(float(v) for v in x), tuple(float(v) for v in y))

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def x_array(self) -> np.ndarray:
        return np.array(self.x)

    @property
    def y_array(self) -> np.ndarray:
        return np.array(self.y)

    def scaled(self, factor: float) -> "PhasePoint":
        """Same base point, fiber coordinates multiplied by factor."""
        return PhasePoint(self.x, tuple(factor * v for v in self.y))

    def as_dict(self) -> dict:
        return {"x": list(self.x), "y": list(self.y)}


@dataclass(frozen=True)
class Spray:
    """
    A spray given by coefficient expressions G^i(x, y).

    Attributes:
        n: Dimension (>= 2)
        coefficients: Expressions G^1..G^n
        domain: Optional predicate expression, admitted where it is > 0
        label: Display name
    """
    n: int
    coefficients: Tuple[Expression, ...] = ()
    domain: Optional[Expression] = None
    label: str = "spray"

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"Spray dimension must be at least 2, got {self.n}")
        self._validate_coefficients()

    def _validate_coefficients(self) -> None:
        if len(self.coefficients) != self.n:
            raise ValueError(f"Expected {self.n} coefficients, got {len(self.coefficients)}")
        for expression in self.coefficients:
            if expression.n != self.n:
                raise ValueError(f"Coefficient {expression} declared for dimension {expression.n}")

    @classmethod
    def from_texts(
        cls, texts: Sequence[str], domain: Optional[str] = None, label: str = "spray"
    ) -> "Spray":
        n = len(texts)
        return cls(
            n=n,
            coefficients=tuple(parse(text, n) for text in texts),
            domain=None if domain is None else parse(domain, n),
            label=label,
        )

    @classmethod
    def flat(cls, n: int) -> "Spray":
        return cls.from_texts(["0"] * n, label="flat")

    def coefficient_jets(self, x, y, order: int) -> List[Jet]:
        """Jets of G^1..G^n at (x, y), batched along leading axes of x and y."""
        seeds = lift_point(x, y, order)
        binding = coordinate_binding(seeds[: self.n], seeds[self.n:])
        batch = seeds[0].batch_shape
        jets = []
        for expression in self.coefficients:
            value = evaluate(expression, binding)
            if not isinstance(value, Jet):
                value = Jet.constant(2 * self.n, order, value, batch)
            jets.append(value)
        return jets

    def coefficient_values(self, x, y) -> np.ndarray:
        """G^i values, shape batch + (n,)."""
        xs, ys = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        binding = coordinate_binding(np.moveaxis(xs, -1, 0), np.moveaxis(ys, -1, 0))
        batch = xs.shape[:-1]
        values = [np.broadcast_to(evaluate(g, binding), batch) for g in self.coefficients]
        return np.stack(values, axis=-1)

    def admits(self, x, y) -> np.ndarray:
        """Boolean mask: |y| > 0 and the domain predicate is positive."""
        xs, ys = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        admitted = np.linalg.norm(ys, axis=-1) > 0
        if self.domain is not None:
            binding = coordinate_binding(np.moveaxis(xs, -1, 0), np.moveaxis(ys, -1, 0))
            with np.errstate(invalid="ignore"):
                value = np.broadcast_to(evaluate(self.domain, binding, strict=False), admitted.shape)
                admitted = admitted & np.isfinite(value) & (value > 0)
        return admitted

    def describe(self) -> List[str]:
        return [g.to_text() for g in self.coefficients]


@dataclass(frozen=True)
class ConnectionData:
    """N^i_j = dG^i/dy^j and Berwald coefficients Gamma^i_jk = dN^i_j/dy^k."""
    N: np.ndarray
    gamma: np.ndarray


@dataclass(frozen=True)
class CurvatureData:
    """
    Curvature objects at a point.

    Attributes:
        Rten: R^i_jk = dN^i_j/dx^k - dN^i_k/dx^j with horizontal derivatives
        Phi: Jacobi endomorphism Phi^i_j
        rho: Ricci scalar Tr(Phi)/(n-1)
    """
    Rten: np.ndarray
    Phi: np.ndarray
    rho: float


@dataclass(frozen=True)
class IsotropyData:
    """Isotropy decomposition Phi = rho*delta - y (x) alpha with its residual."""
    rho: float
    alpha: np.ndarray
    residual: float
    isotropic: bool


# ============================================================================
# Value + gradient arithmetic
# ============================================================================

def _grad_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Product rule on [value, gradient] arrays."""
    value = a[..., :1] * b[..., :1]
    gradient = a[..., :1] * b[..., 1:] + b[..., :1] * a[..., 1:]
    return np.concatenate([value, gradient], axis=-1)


def _grad_div(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Quotient rule on [value, gradient] arrays."""
    quotient = a[..., :1] / b[..., :1]
    gradient = (a[..., 1:] - quotient * b[..., 1:]) / b[..., :1]
    return np.concatenate([quotient, gradient], axis=-1)


def _grad_einsum(subscripts: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Contraction of two value+gradient arrays following the product rule."""
    inputs, output = subscripts.split("->")
    left, right = inputs.split(",")
    value = np.einsum(f"...{left},...{right}->...{output}", a[..., 0], b[..., 0])
    gradient = np.einsum(f"...{left},...{right}z->...{output}z", a[..., 0], b[..., 1:])
    gradient = gradient + np.einsum(f"...{left}z,...{right}->...{output}z", a[..., 1:], b[..., 0])
    return np.concatenate([value[..., None], gradient], axis=-1)


# ============================================================================
# Local geometry (batched)
# ============================================================================

@dataclass(frozen=True)
class LocalGeometry:
    """
    Everything derived from one jet evaluation of G at a batch of points.

    Arrays with a trailing axis of length 1 + 2n hold value and gradient;
    gradients are exact only when `order >= 3`.
    """
    n: int
    order: int
    x: np.ndarray
    y: np.ndarray
    D0: np.ndarray
    D1: np.ndarray
    G: np.ndarray
    N: np.ndarray
    dNdx: np.ndarray
    gamma: np.ndarray
    phi: np.ndarray
    rho: np.ndarray
    alpha: np.ndarray

    @property
    def has_gradients(self) -> bool:
        return self.order >= 3

    @property
    def connection(self) -> ConnectionData:
        return ConnectionData(N=self.N[..., 0], gamma=self.gamma[..., 0])

    @property
    def Phi(self) -> np.ndarray:
        return self.phi[..., 0]

    def curvature_tensor(self) -> np.ndarray:
        N = self.N[..., 0]
        horizontal = self.dNdx[..., 0] - np.einsum("...mk,...ijm->...ijk", N, self.gamma[..., 0])
        return horizontal - np.swapaxes(horizontal, -1, -2)

    def isotropy_scale(self) -> np.ndarray:
        phi_norm = np.linalg.norm(self.Phi, axis=(-2, -1))
        rho_scale = np.abs(self.rho[..., 0]) * np.sqrt(self.n)
        return np.maximum(np.maximum(phi_norm, rho_scale), 1e-300)

    def isotropy_residual(self) -> np.ndarray:
        eye = np.eye(self.n)
        error = (
            self.Phi
            - self.rho[..., 0, None, None] * eye
            + self.y[..., :, None] * self.alpha[..., None, :, 0]
        )
        return np.linalg.norm(error, axis=(-2, -1)) / self.isotropy_scale()

    def homogeneity_residual(self) -> np.ndarray:
        euler = np.einsum("...j,...ij->...i", self.y, self.D1[..., :, self.n:])
        defect = np.abs(euler - 2.0 * self.D0) / (1.0 + np.abs(self.D0))
        return defect.max(axis=-1)

    def liouville_defect(self) -> np.ndarray:
        """Relative size of Phi^i_j y^j."""
        contracted = np.einsum("...ij,...j->...i", self.Phi, self.y)
        scale = self.isotropy_scale() * np.linalg.norm(self.y, axis=-1)
        return np.linalg.norm(contracted, axis=-1) / scale


def local_geometry(spray: Spray, x, y, order: int = 2) -> LocalGeometry:
    """
    Evaluate connection, curvature and isotropy data at one or many points.

    Args:
        spray: Spray under test
        x: Base coordinates, shape (n,) or batch + (n,)
        y: Fiber coordinates, same shape
        order: 2 for values, 3 when first derivatives of Phi, rho, alpha are needed

    Returns:
        LocalGeometry with batch shape x.shape[:-1]
    """
    if order not in (2, 3):
        raise ValueError(f"Geometry order must be 2 or 3, got {order}")
    n = spray.n
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    jets = spray.coefficient_jets(xs, ys, order)
    tensors = derivative_tensors(jets, upto=order)
    D0, D1, D2 = tensors[0], tensors[1], tensors[2]
    if order >= 3:
        D3 = tensors[3]
    else:
        D3 = np.zeros(D2.shape + (2 * n,))

    G = np.concatenate([D0[..., None], D1], axis=-1)
    dGdx = np.concatenate([D1[..., :, :n, None], D2[..., :, :n, :]], axis=-1)
    N = np.concatenate([D1[..., :, n:, None], D2[..., :, n:, :]], axis=-1)
    dNdx = np.concatenate([D2[..., :, n:, :n, None], D3[..., :, n:, :n, :]], axis=-1)
    gamma = np.concatenate([D2[..., :, n:, n:, None], D3[..., :, n:, n:, :]], axis=-1)

    batch = ys.shape[:-1]
    fiber_gradient = np.zeros(batch + (n, 2 * n))
    fiber_gradient[..., np.arange(n), n + np.arange(n)] = 1.0
    Y = np.concatenate([ys[..., None], fiber_gradient], axis=-1)

    # Phi^i_j = 2 dG^i/dx^j - S(N^i_j) - N^i_l N^l_j
    phi = (
        2.0 * dGdx
        - _grad_einsum("l,ijl->ij", Y, dNdx)
        + 2.0 * _grad_einsum("l,ijl->ij", G, gamma)
        - _grad_einsum("il,lj->ij", N, N)
    )
    rho = np.einsum("...iiz->...z", phi) / (n - 1)
    yy = _grad_einsum("l,l->", Y, Y)
    numerator = _grad_mul(rho[..., None, :], Y) - _grad_einsum("i,ij->j", Y, phi)
    alpha = _grad_div(numerator, yy[..., None, :])

    return LocalGeometry(
        n=n, order=order, x=xs, y=ys, D0=D0, D1=D1, G=G, N=N, dNdx=dNdx,
        gamma=gamma, phi=phi, rho=rho, alpha=alpha,
    )


# ============================================================================
# Pointwise operations
# ============================================================================

def connection(spray: Spray, point: PhasePoint) -> ConnectionData:
    """
    Nonlinear connection and Berwald coefficients at a point.

    Example:
        >>> s = Spray.from_texts(["y1*y2", "0 - y2^2/2"])
        >>> connection(s, PhasePoint.of([0, 0], [1, 2])).N
        array([[ 2.,  1.],
               [ 0., -2.]])
    """
    return local_geometry(spray, point.x_array, point.y_array, order=2).connection


def curvature(spray: Spray, point: PhasePoint) -> CurvatureData:
    """Curvature tensor together with Phi and rho."""
    geometry = local_geometry(spray, point.x_array, point.y_array, order=2)
    return CurvatureData(
        Rten=geometry.curvature_tensor(), Phi=geometry.Phi, rho=float(geometry.rho[0])
    )


def jacobi(spray: Spray, point: PhasePoint) -> CurvatureData:
    """Jacobi endomorphism and Ricci scalar (same record as curvature())."""
    return curvature(spray, point)


def isotropy(spray: Spray, point: PhasePoint, tol: float = 1e-7) -> IsotropyData:
    """Least-squares isotropy decomposition of Phi."""
    if not np.linalg.norm(point.y_array) > 0:
        raise DomainError("Isotropy requires |y| > 0")
    geometry = local_geometry(spray, point.x_array, point.y_array, order=2)
    residual = float(geometry.isotropy_residual())
    return IsotropyData(
        rho=float(geometry.rho[0]),
        alpha=geometry.alpha[..., 0].copy(),
        residual=residual,
        isotropic=residual <= tol,
    )


def homogeneity_residual(spray: Spray, point: PhasePoint) -> float:
    """max_i |y^j dG^i/dy^j - 2G^i| / (1 + |G^i|)."""
    jets = spray.coefficient_jets(point.x_array, point.y_array, 1)
    D0, D1 = derivative_tensors(jets, upto=1)
    euler = D1[:, spray.n:] @ point.y_array
    return float(np.max(np.abs(euler - 2.0 * D0) / (1.0 + np.abs(D0))))


def curvature_contraction(Rten: np.ndarray, y: np.ndarray, convention: str = "first") -> np.ndarray:
    """
    Contract the curvature tensor with y.

    convention "first" gives R^i_kj y^k, "second" gives R^i_jk y^k; the first
    reproduces Phi.
    """
    if convention == "first":
        return np.einsum("...ikj,...k->...ij", Rten, y)
    return np.einsum("...ijk,...k->...ij", Rten, y)


# ============================================================================
# Geodesics
# ============================================================================

def integrate_geodesic(
    spray: Spray,
    x0: Sequence[float],
    y0: Sequence[float],
    t_final: float = 1.0,
    samples: int = 50,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Integrate x'' + 2G(x, x') = 0 from (x0, y0).

    Returns:
        (t, x, y) with x and y of shape (samples, n)
    """
    n = spray.n

    def rhs(_t, state):
        position, velocity = state[:n], state[n:]
        acceleration = -2.0 * spray.coefficient_values(position, velocity)
        return np.concatenate([velocity, acceleration])

    times = np.linspace(0.0, t_final, samples)
    solution = solve_ivp(
        rhs, (0.0, t_final), np.concatenate([x0, y0]).astype(float),
        method="RK45", t_eval=times, rtol=rtol, atol=atol,
    )
    if not solution.success:
        raise DomainError(f"Geodesic integration failed: {solution.message}")
    states = solution.y.T
    return solution.t, states[:, :n], states[:, n:]
