"""
Spray Metrizer - Finsler Reconstruction Tool
============================================

Rebuilds a Finsler function for a spray that passed the metrizability tests:

    f0(x, y)  fiber potential, d_J f0 = sigma, f0(x, y_ref) = 0
    omega0    horizontal form d_h f0, basic in y
    b(x)      base potential, db = omega0, b(x_ref) = 0
    F         exp(f0 - b), flag curvature kappa = rho / F^2

All line integrals use composite Gauss-Legendre quadrature with panel
doubling. Every pass evaluates its nodes as one batch of jets, and
derivatives of the potentials come from differentiating under the integral
sign with the jet partials of sigma.

Author: Alfred Munga
License: MIT
"""

import logging
import threading
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from pydantic import BaseModel, Field, field_validator

from tools.errors import DomainError, MetrizerError, PathDomainError, ToleranceError
from tools.metrizability_tool import TestConfig, sigma_arrays
from tools.spray_geometry_tool import PhasePoint, Spray, local_geometry

logger = logging.getLogger(__name__)

# Largest number of phase points pushed through one jet evaluation.
NODE_CHUNK = 4096


# ============================================================================
# Configuration
# ============================================================================

class QuadratureConfig(BaseModel):
    """Quadrature and gauge settings for the reconstruction."""

    gauss_order: int = Field(default=16, ge=1, le=64, description="Gauss-Legendre nodes per panel")
    panels_per_unit_length: float = Field(default=4.0, gt=0, description="Initial panel density")
    target_abs_tol: float = Field(default=1e-10, gt=0, description="Panel-doubling stop criterion")
    max_panels: int = Field(default=512, ge=2, description="Refinement budget per path piece")
    y_ref: Optional[List[float]] = Field(default=None, description="Fiber reference point, f0(x, y_ref) = 0")
    x_ref: Optional[List[float]] = Field(default=None, description="Base reference point, b(x_ref) = 0")
    waypoints: List[List[float]] = Field(default_factory=list, description="Intermediate fiber points")
    fiber_path: Literal["segment", "arc"] = Field(
        default="segment", description="Straight segments or radial split with a great-circle arc"
    )

    @field_validator("waypoints")
    @classmethod
    def validate_waypoints(cls, v):
        if any(not np.all(np.isfinite(w)) for w in v):
            raise ValueError("waypoints must be finite")
        return v


# ============================================================================
# Result types
# ============================================================================

@dataclass(frozen=True)
class FiberPotential:
    """f0 with optional partials, batch-shaped."""
    value: np.ndarray
    dx: Optional[np.ndarray] = None
    dy: Optional[np.ndarray] = None


@dataclass(frozen=True)
class HorizontalForm:
    """
    omega0 with its consistency residuals.

    Attributes:
        omega: omega0_i = df0/dx^i - N^j_i sigma_j
        basic_residual: variation of omega0 over other fiber directions, relative
        closed_residual: antisymmetric part of domega0_i/dx^j at y_ref
    """
    omega: np.ndarray
    basic_residual: np.ndarray
    closed_residual: np.ndarray


class VerificationRecord(BaseModel):
    count: int
    dh_residual: float = Field(..., description="max |d_h F| / F")
    euler_lagrange_residual: float = Field(..., description="max |i_S dd_J F^2 + dF^2| / (2F^2)")
    flag_curvature_residual: float = Field(..., description="Relative defect of Phi = kappa(F^2 J - F d_JF (x) C)")
    homogeneity_residual: float = Field(..., description="max |F(x, ly) / (l F(x, y)) - 1|, l in {0.5, 2}")
    gradient_consistency: float = Field(..., description="max |y| |df0/dy - sigma|")
    hessian_ranks: List[int] = Field(default_factory=list)
    hessian_signatures: List[Tuple[int, int, int]] = Field(
        default_factory=list, description="(positive, negative, zero) eigenvalue counts"
    )
    hessian_label: str = Field(..., description="regular, pseudo or degenerate")


# ============================================================================
# Quadrature helpers
# ============================================================================

@lru_cache(maxsize=64)
def _panel_rule(panels: int, gauss_order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights on [0, 1]."""
    nodes, weights = leggauss(gauss_order)
    starts = np.arange(panels) / panels
    t = (starts[:, None] + (nodes[None, :] + 1.0) / (2.0 * panels)).ravel()
    w = np.tile(weights / (2.0 * panels), panels)
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


@dataclass(frozen=True)
class _Piece:
    """One leg of a batched path: straight segment or unit-sphere arc."""
    start: np.ndarray
    end: np.ndarray
    arc: bool = False

    def length(self) -> float:
        if self.arc:
            return float(np.max(self._angle()))
        return float(np.max(np.linalg.norm(self.end - self.start, axis=-1)))

    def _angle(self) -> np.ndarray:
        cosine = np.clip(np.einsum("bi,bi->b", self.start, self.end), -1.0, 1.0)
        return np.arccos(cosine)

    def at(self, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Positions and velocities, shape (B, K, n)."""
        a = self.start[:, None, :]
        b = self.end[:, None, :]
        if not self.arc:
            gamma = a + t[None, :, None] * (b - a)
            return gamma, np.broadcast_to(b - a, gamma.shape)
        theta = self._angle()[:, None]
        small = theta < 1e-12
        safe = np.where(small, 1.0, np.sin(theta))
        s = t[None, :]
        c0 = np.where(small, 1.0 - s, np.sin((1.0 - s) * theta) / safe)
        c1 = np.where(small, s, np.sin(s * theta) / safe)
        d0 = np.where(small, -1.0, -theta * np.cos((1.0 - s) * theta) / safe)
        d1 = np.where(small, 1.0, theta * np.cos(s * theta) / safe)
        gamma = c0[..., None] * a + c1[..., None] * b
        velocity = d0[..., None] * a + d1[..., None] * b
        return gamma, velocity


def _arc_midpoint(u0: np.ndarray, u1: np.ndarray) -> np.ndarray:
    """Unit midpoint of each arc, or an orthogonal waypoint for near-antipodal pairs."""
    total = u0 + u1
    norm = np.linalg.norm(total, axis=-1, keepdims=True)
    antipodal = norm[..., 0] < 1e-6
    midpoint = total / np.where(norm > 0, norm, 1.0)
    if antipodal.any():
        n = u0.shape[-1]
        for index in np.flatnonzero(antipodal):
            axis = np.eye(n)[int(np.argmin(np.abs(u0[index])))]
            orthogonal = axis - (axis @ u0[index]) * u0[index]
            midpoint[index] = orthogonal / np.linalg.norm(orthogonal)
    return midpoint


def _batch(x, y=None) -> Tuple[np.ndarray, Optional[np.ndarray], bool]:
    """(B, n) float arrays for x and y, plus whether the caller passed a single point."""
    xs = np.asarray(x, dtype=float)
    single = xs.ndim == 1 and (y is None or np.ndim(y) == 1)
    xs = np.atleast_2d(xs)
    ys = None
    if y is not None:
        ys = np.atleast_2d(np.asarray(y, dtype=float))
        ys = np.broadcast_to(ys, xs.shape if ys.shape[0] == 1 else ys.shape)
        xs = np.broadcast_to(xs, ys.shape)
    return xs, ys, single


def _unbatch(array: np.ndarray, single: bool):
    if not single:
        return array
    return float(array[0]) if array.ndim == 1 else array[0]


# ============================================================================
# Reconstructed Finsler function
# ============================================================================

class ReconstructedFinsler:
    """
    Evaluators for f0, omega0, b, F and kappa of one spray.

    b(x) values are memoized per base point; the cache is shared between
    threads behind a lock.

    Example:
        >>> spray = Spray.from_texts(["y1*y2", "0 - 0.5*y2^2"], domain="y2")
        >>> rf = ReconstructedFinsler(spray, QuadratureConfig(y_ref=[1, 1], x_ref=[0, 0]))
        >>> F, kappa = rf.finsler_value([0.0, 0.5], [1.0, 2.0])
    """

    def __init__(self, spray: Spray, cfg: Optional[QuadratureConfig] = None):
        self.spray = spray
        self.cfg = cfg or QuadratureConfig()
        n = spray.n
        self.y_ref = np.array(self.cfg.y_ref if self.cfg.y_ref is not None else np.ones(n), dtype=float)
        self.x_ref = np.array(self.cfg.x_ref if self.cfg.x_ref is not None else np.zeros(n), dtype=float)
        self.waypoints = [np.array(w, dtype=float) for w in self.cfg.waypoints]
        for name, vector in (("y_ref", self.y_ref), ("x_ref", self.x_ref), *(("waypoint", w) for w in self.waypoints)):
            if vector.shape != (n,):
                raise ValueError(f"{name} must have {n} components, got {vector.shape}")
        if not spray.admits(self.x_ref, self.y_ref):
            raise PathDomainError(f"Reference point x_ref={self.x_ref.tolist()}, y_ref={self.y_ref.tolist()} is not admitted")
        self._base_cache: Dict[Tuple[float, ...], Tuple[float, Optional[np.ndarray]]] = {}
        self._lock = threading.Lock()

    @property
    def n(self) -> int:
        return self.spray.n

    # ------------------------------------------------------------------
    # Field evaluation at quadrature nodes
    # ------------------------------------------------------------------

    def _field(self, x: np.ndarray, y: np.ndarray, order: int) -> Tuple[np.ndarray, np.ndarray]:
        """sigma and N (value+gradient arrays) at nodes of shape batch + (n,)."""
        n = self.n
        shape = y.shape[:-1]
        flat_x = np.broadcast_to(x, y.shape).reshape(-1, n)
        flat_y = y.reshape(-1, n)
        admitted = self.spray.admits(flat_x, flat_y)
        if not admitted.all():
            index = int(np.flatnonzero(~admitted)[0])
            raise PathDomainError(
                f"Quadrature node x={flat_x[index].tolist()}, y={flat_y[index].tolist()} leaves the domain",
                np.flatnonzero(~admitted),
            )
        sigmas, connections = [], []
        for start in range(0, flat_y.shape[0], NODE_CHUNK):
            stop = start + NODE_CHUNK
            try:
                geometry = local_geometry(self.spray, flat_x[start:stop], flat_y[start:stop], order)
            except DomainError as e:
                raise PathDomainError(f"Quadrature node evaluation failed: {e}", e.indices) from e
            sigmas.append(sigma_arrays(geometry))
            connections.append(geometry.N)
        sigma = np.concatenate(sigmas, axis=0)
        if not np.isfinite(sigma[..., 0]).all():
            raise PathDomainError("Ricci scalar vanishes at a quadrature node")
        N = np.concatenate(connections, axis=0)
        return sigma.reshape(shape + sigma.shape[1:]), N.reshape(shape + N.shape[1:])

    def _adaptive(self, rule: Callable, length: float, what: str) -> List[np.ndarray]:
        """Double panels until the value and every gradient sum settle to target_abs_tol."""
        cfg = self.cfg
        panels = max(1, int(np.ceil(cfg.panels_per_unit_length * length)))
        coarse = rule(*_panel_rule(panels, cfg.gauss_order))
        while 2 * panels <= cfg.max_panels:
            fine = rule(*_panel_rule(2 * panels, cfg.gauss_order))
            error = max(float(np.max(np.abs(f - c), initial=0.0)) for f, c in zip(fine, coarse))
            if error <= cfg.target_abs_tol:
                logger.debug(f"{what}: {2 * panels} panels, error {error:.2e}")
                return fine
            panels *= 2
            coarse = fine
        raise ToleranceError(
            f"{what}: no convergence to {cfg.target_abs_tol:g} within {cfg.max_panels} panels"
        )

    def _integrate_fiber(self, xs: np.ndarray, piece: _Piece, want_dx: bool, want_dy: bool) -> List[np.ndarray]:
        """Quadrature sums of sigma along one fiber piece: value, then d/dx and d/dy when asked."""
        n = self.n
        order = 3 if (want_dx or want_dy) else 2

        def rule(t, w):
            gamma, velocity = piece.at(t)
            sigma, _ = self._field(xs[:, None, :], gamma, order)
            values = sigma[..., 0]
            out = [np.einsum("k,bki,bki->b", w, values, velocity)]
            if want_dx:
                out.append(np.einsum("k,bki,bkij->bj", w, velocity, sigma[..., 1:n + 1]))
            if want_dy:
                out.append(
                    np.einsum("k,k,bki,bkij->bj", w, t, velocity, sigma[..., n + 1:])
                    + np.einsum("k,bkl->bl", w, values)
                )
            return out

        return self._adaptive(rule, piece.length(), "fiber potential")

    # ------------------------------------------------------------------
    # Potentials
    # ------------------------------------------------------------------

    def fiber_potential(self, x, y, gradients: bool = False) -> FiberPotential:
        """
        f0(x, y) as a line integral of sigma from y_ref to y.

        With gradients=True also returns df0/dx and df0/dy.
        """
        xs, ys, _ = _batch(x, y)
        if self.cfg.fiber_path == "arc":
            return self._fiber_arc(xs, ys, gradients)
        batch = xs.shape[0]
        nodes = [np.broadcast_to(self.y_ref, ys.shape)]
        nodes += [np.broadcast_to(w, ys.shape) for w in self.waypoints]
        nodes.append(ys)
        value = np.zeros(batch)
        dx = np.zeros((batch, self.n)) if gradients else None
        dy = None
        legs = list(zip(nodes[:-1], nodes[1:]))
        for index, (a, b) in enumerate(legs):
            last = index == len(legs) - 1
            sums = self._integrate_fiber(xs, _Piece(a, b), gradients, gradients and last)
            value += sums[0]
            if gradients:
                dx += sums[1]
                if last:
                    dy = sums[2]
        return FiberPotential(value=value, dx=dx, dy=dy)

    def _fiber_arc(self, xs: np.ndarray, ys: np.ndarray, gradients: bool) -> FiberPotential:
        norm_ref = np.linalg.norm(self.y_ref)
        norm_y = np.linalg.norm(ys, axis=-1)
        u0 = np.broadcast_to(self.y_ref / norm_ref, ys.shape).copy()
        u1 = ys / norm_y[:, None]
        midpoint = _arc_midpoint(u0, u1)
        value = np.log(norm_y / norm_ref)
        dx = np.zeros(ys.shape) if gradients else None
        for a, b in ((u0, midpoint), (midpoint, u1)):
            sums = self._integrate_fiber(xs, _Piece(a, b, arc=True), gradients, False)
            value = value + sums[0]
            if gradients:
                dx += sums[1]
        dy = None
        if gradients:
            sigma, _ = self._field(xs, ys, 2)
            dy = sigma[..., 0]
        return FiberPotential(value=value, dx=dx, dy=dy)

    def horizontal_form(self, x, y) -> HorizontalForm:
        """
        omega0 at (x, y) with basic and closed residuals.

        The basic residual compares omega0 against its value at y_ref over the
        sample direction, its opposite, a rotation of it and the coordinate
        axes. Directions outside the domain, or whose fiber path leaves it,
        are skipped.
        """
        xs, ys, _ = _batch(x, y)
        omega = self._omega(xs, ys)
        reference = self._omega_reference(xs)
        scale = 1.0 + np.abs(reference).max(axis=-1)
        basic = np.abs(omega - reference).max(axis=-1) / scale
        for direction in self._fiber_directions(ys):
            admitted = self.spray.admits(xs, direction)
            if not admitted.any():
                continue
            try:
                other = self._omega(xs[admitted], direction[admitted])
            except (PathDomainError, ToleranceError) as e:
                logger.debug(f"Skipping fiber direction for basic residual: {e}")
                continue
            variation = np.abs(other - reference[admitted]).max(axis=-1) / scale[admitted]
            basic[admitted] = np.maximum(basic[admitted], variation)
        closed = self._closed_residual(xs)
        return HorizontalForm(omega=omega, basic_residual=basic, closed_residual=closed)

    def _fiber_directions(self, ys: np.ndarray) -> List[np.ndarray]:
        """Fiber points independent of ys, at the same norm."""
        norm_y = np.linalg.norm(ys, axis=-1, keepdims=True)
        rotated = ys.copy()
        rotated[:, 0], rotated[:, 1] = -ys[:, 1], ys[:, 0]
        axes = [np.broadcast_to(norm_y * np.eye(self.n)[k], ys.shape).copy() for k in range(self.n)]
        return [-ys, rotated, *axes]

    def _omega(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        potential = self.fiber_potential(xs, ys, gradients=True)
        sigma, N = self._field(xs, ys, 2)
        return potential.dx - np.einsum("bmi,bm->bi", N[..., 0], sigma[..., 0])

    def _omega_reference(self, xs: np.ndarray) -> np.ndarray:
        # f0(x, y_ref) = 0 for every x, so omega0 = -N sigma there
        sigma, N = self._field(xs, np.broadcast_to(self.y_ref, xs.shape), 2)
        return -np.einsum("bmi,bm->bi", N[..., 0], sigma[..., 0])

    def _omega_gradient(self, N: np.ndarray, sigma: np.ndarray) -> np.ndarray:
        n = self.n
        return -(
            np.einsum("...mij,...m->...ij", N[..., 1:n + 1], sigma[..., 0])
            + np.einsum("...mi,...mj->...ij", N[..., 0], sigma[..., 1:n + 1])
        )

    def _closed_residual(self, xs: np.ndarray) -> np.ndarray:
        sigma, N = self._field(xs, np.broadcast_to(self.y_ref, xs.shape), 3)
        gradient = self._omega_gradient(N, sigma)
        return np.abs(gradient - np.swapaxes(gradient, -1, -2)).max(axis=(-2, -1))

    def base_potential(self, x, gradient: bool = False):
        """
        b(x) = integral of omega0(., y_ref) along the segment x_ref -> x.

        Returns b, or (b, db/dx) when gradient=True.
        """
        xs, _, single = _batch(x)
        keys = [tuple(float(v) for v in row) for row in xs]
        with self._lock:
            cached = {k: self._base_cache.get(k) for k in keys}
        missing = [
            i for i, k in enumerate(keys)
            if cached[k] is None or (gradient and cached[k][1] is None)
        ]
        if missing:
            values, grads = self._integrate_base(xs[missing], gradient)
            with self._lock:
                for j, i in enumerate(missing):
                    entry = (float(values[j]), None if grads is None else grads[j].copy())
                    self._base_cache[keys[i]] = entry
                    cached[keys[i]] = entry
        values = np.array([cached[k][0] for k in keys])
        if not gradient:
            return _unbatch(values, single)
        grads = np.array([cached[k][1] for k in keys])
        return _unbatch(values, single), _unbatch(grads, single)

    def _integrate_base(self, xs: np.ndarray, gradient: bool) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        """b and db/dx at each x by quadrature of omega0 along x_ref -> x."""
        n = self.n
        delta = xs - self.x_ref
        order = 3 if gradient else 2

        def rule(t, w):
            nodes = self.x_ref + t[None, :, None] * delta[:, None, :]
            sigma, N = self._field(nodes, np.broadcast_to(self.y_ref, nodes.shape), order)
            omega = -np.einsum("bkmi,bkm->bki", N[..., 0], sigma[..., 0])
            out = [np.einsum("k,bki,bi->b", w, omega, delta)]
            if gradient:
                domega = self._omega_gradient(N, sigma)
                out.append(
                    np.einsum("k,k,bi,bkij->bj", w, t, delta, domega)
                    + np.einsum("k,bkj->bj", w, omega)
                )
            return out

        length = float(np.max(np.linalg.norm(delta, axis=-1)))
        sums = self._adaptive(rule, length, "base potential")
        return sums[0], (sums[1] if gradient else None)

    def cache_size(self) -> int:
        with self._lock:
            return len(self._base_cache)

    # ------------------------------------------------------------------
    # Finsler function
    # ------------------------------------------------------------------

    def finsler_value(self, x, y):
        """(F, kappa) with F = exp(f0 - b) and kappa = rho / F^2."""
        xs, ys, single = _batch(x, y)
        f0 = self.fiber_potential(xs, ys).value
        b = self.base_potential(xs)
        F = np.exp(f0 - b)
        geometry = local_geometry(self.spray, xs, ys, order=2)
        kappa = geometry.rho[..., 0] / F ** 2
        return _unbatch(F, single), _unbatch(kappa, single)

    def energy_hessian(self, x, y) -> np.ndarray:
        """g_ij = 1/2 d^2 F^2 / dy^i dy^j = F^2 (dsigma_(i/dy^j) + 2 sigma_i sigma_j)."""
        xs, ys, single = _batch(x, y)
        F, _ = self.finsler_value(xs, ys)
        sigma = sigma_arrays(local_geometry(self.spray, xs, ys, order=3))
        return _unbatch(self._hessian(F, sigma), single)

    def _hessian(self, F: np.ndarray, sigma: np.ndarray) -> np.ndarray:
        n = self.n
        dy = sigma[..., n + 1:]
        values = sigma[..., 0]
        symmetric = 0.5 * (dy + np.swapaxes(dy, -1, -2))
        return (F ** 2)[:, None, None] * (symmetric + 2.0 * values[:, :, None] * values[:, None, :])

    def verify(self, x, y, cfg: Optional[TestConfig] = None) -> VerificationRecord:
        """Check that F is a Finsler function of scalar flag curvature for the spray."""
        cfg = cfg or TestConfig()
        n = self.n
        xs, ys, _ = _batch(x, y)
        potential = self.fiber_potential(xs, ys, gradients=True)
        b, db = self.base_potential(xs, gradient=True)
        b, db = np.atleast_1d(b), np.atleast_2d(db)
        F = np.exp(potential.value - b)
        geometry = local_geometry(self.spray, xs, ys, order=3)
        sigma = sigma_arrays(geometry)
        s0, sdx, sdy = sigma[..., 0], sigma[..., 1:n + 1], sigma[..., n + 1:]
        N = geometry.N[..., 0]
        G = geometry.D0
        rho = geometry.rho[..., 0]
        norm_y = np.linalg.norm(ys, axis=-1)

        w = potential.dx - db
        dF_dx = F[:, None] * w
        dF_dy = F[:, None] * potential.dy
        dh = np.abs(dF_dx - np.einsum("bji,bj->bi", N, dF_dy)).max(axis=-1) / F

        # Euler-Lagrange form of L = F^2 divided by 2L
        horizontal = (
            np.einsum("bj,bij->bi", ys, sdx)
            + 2.0 * s0 * np.einsum("bj,bj->b", w, ys)[:, None]
            - 2.0 * np.einsum("bj,bij->bi", G, sdy)
            - 4.0 * s0 * np.einsum("bj,bj->b", s0, G)[:, None]
            - w
        )
        vertical = (
            np.einsum("bj,bij->bi", ys, sdy)
            + 2.0 * s0 * np.einsum("bj,bj->b", s0, ys)[:, None]
            - s0
        )
        el = np.maximum(np.abs(horizontal).max(axis=-1), norm_y * np.abs(vertical).max(axis=-1))

        Phi = geometry.Phi
        model = rho[:, None, None] * (np.eye(n) - ys[:, :, None] * (dF_dy / F[:, None])[:, None, :])
        flag = np.linalg.norm(Phi - model, axis=(-2, -1)) / geometry.isotropy_scale()

        homogeneity = np.zeros(xs.shape[0])
        for factor in (0.5, 2.0):
            scaled = self.fiber_potential(xs, factor * ys).value
            homogeneity = np.maximum(homogeneity, np.abs(np.expm1(scaled - potential.value - np.log(factor))))

        consistency = norm_y * np.abs(potential.dy - s0).max(axis=-1)

        hessian = self._hessian(F, sigma)
        eigen = np.linalg.eigvalsh(hessian)
        cutoff = cfg.rank_rtol * np.abs(eigen).max(axis=-1, keepdims=True)
        positive = (eigen > cutoff).sum(axis=-1)
        negative = (eigen < -cutoff).sum(axis=-1)
        ranks = positive + negative
        if (ranks < n).any():
            label = "degenerate"
        elif (positive < n).any():
            label = "pseudo"
        else:
            label = "regular"

        record = VerificationRecord(
            count=int(xs.shape[0]),
            dh_residual=float(dh.max()),
            euler_lagrange_residual=float(el.max()),
            flag_curvature_residual=float(flag.max()),
            homogeneity_residual=float(homogeneity.max()),
            gradient_consistency=float(consistency.max()),
            hessian_ranks=[int(r) for r in ranks],
            hessian_signatures=[(int(p), int(q), int(n - p - q)) for p, q in zip(positive, negative)],
            hessian_label=label,
        )
        logger.info(
            f"📊 Verification: d_hF {record.dh_residual:.2e}, EL {record.euler_lagrange_residual:.2e}, "
            f"Hessian {label}"
        )
        return record


# ============================================================================
# Module-level operations
# ============================================================================

def reconstruct(spray: Spray, cfg: Optional[QuadratureConfig] = None) -> ReconstructedFinsler:
    return ReconstructedFinsler(spray, cfg)


def fiber_potential(spray: Spray, x, y, cfg: Optional[QuadratureConfig] = None):
    """f0(x, y); a float for a single point, an array for a batch."""
    xs, ys, single = _batch(x, y)
    return _unbatch(ReconstructedFinsler(spray, cfg).fiber_potential(xs, ys).value, single)


def horizontal_form(spray: Spray, x, y, cfg: Optional[QuadratureConfig] = None) -> HorizontalForm:
    return ReconstructedFinsler(spray, cfg).horizontal_form(x, y)


def base_potential(spray: Spray, x, cfg: Optional[QuadratureConfig] = None):
    return ReconstructedFinsler(spray, cfg).base_potential(x)


def finsler_value(spray: Spray, x, y, cfg: Optional[QuadratureConfig] = None):
    return ReconstructedFinsler(spray, cfg).finsler_value(x, y)


def verify(
    spray: Spray,
    rf: ReconstructedFinsler,
    points: Sequence[PhasePoint],
    cfg: Optional[TestConfig] = None,
) -> VerificationRecord:
    if rf.spray is not spray:
        raise ValueError("Reconstruction belongs to a different spray")
    x = np.array([p.x for p in points])
    y = np.array([p.y for p in points])
    return rf.verify(x, y, cfg)


# ============================================================================
# Tool wrapper
# ============================================================================

class ReconstructionInput(BaseModel):
    coefficients: List[str] = Field(..., min_length=2, description="Spray coefficients G^1..G^n")
    domain: Optional[str] = Field(default=None, description="Domain predicate")
    quadrature: QuadratureConfig = Field(default_factory=QuadratureConfig)
    points: List[PhasePoint] = Field(..., min_length=1, description="Where to evaluate F and kappa")


class ReconstructionTool:
    """Evaluate the reconstructed F and kappa at given points."""

    def run(self, input_data: ReconstructionInput) -> Dict[str, Any]:
        try:
            spray = Spray.from_texts(input_data.coefficients, input_data.domain)
            rf = ReconstructedFinsler(spray, input_data.quadrature)
            x = np.array([p.x for p in input_data.points])
            y = np.array([p.y for p in input_data.points])
            F, kappa = rf.finsler_value(x, y)
            record = rf.verify(x, y)
        except (MetrizerError, ValueError) as e:
            logger.error(f"❌ Reconstruction failed: {e}")
            return {"success": False, "error": str(e)}
        return {
            "success": True,
            "F": np.asarray(F).tolist(),
            "kappa": np.asarray(kappa).tolist(),
            "verification": record.model_dump(),
        }
