"""Tests for connection, curvature and isotropy data of sprays."""

import math

import numpy as np
import pytest

from data.synthetic.spray_generator import random_points, random_spray
from tools.errors import DomainError
from tools.spray_geometry_tool import (
    PhasePoint,
    Spray,
    connection,
    curvature,
    curvature_contraction,
    homogeneity_residual,
    integrate_geodesic,
    isotropy,
    jacobi,
    local_geometry,
)


# ============================================================================
# Worked example G = (y1 y2, -y2^2/2)
# ============================================================================

def test_connection_of_degenerate_spray(degenerate_spray):
    conn = connection(degenerate_spray, PhasePoint.of([0.0, 0.0], [1.0, 2.0]))
    np.testing.assert_allclose(conn.N, [[2.0, 1.0], [0.0, -2.0]], atol=1e-14)
    assert conn.gamma[0, 0, 1] == pytest.approx(1.0)
    assert conn.gamma[0, 1, 0] == pytest.approx(1.0)
    assert conn.gamma[1, 1, 1] == pytest.approx(-1.0)


def test_jacobi_of_degenerate_spray(degenerate_spray):
    data = jacobi(degenerate_spray, PhasePoint.of([0.3, -0.2], [1.0, 2.0]))
    np.testing.assert_allclose(data.Phi, [[-8.0, 4.0], [0.0, 0.0]], atol=1e-13)
    assert data.rho == pytest.approx(-8.0)


def test_isotropy_of_degenerate_spray(degenerate_spray):
    data = isotropy(degenerate_spray, PhasePoint.of([0.0, 0.0], [1.0, 2.0]))
    assert data.rho == pytest.approx(-8.0)
    np.testing.assert_allclose(data.alpha, [0.0, -4.0], atol=1e-13)
    assert data.isotropic
    assert data.residual < 1e-14


def test_curvature_of_degenerate_spray(degenerate_spray):
    data = curvature(degenerate_spray, PhasePoint.of([0.0, 0.0], [1.0, 2.0]))
    assert data.Rten[0, 0, 1] == pytest.approx(4.0)
    assert data.Rten[0, 1, 0] == pytest.approx(-4.0)
    np.testing.assert_allclose(data.Rten[1], 0.0, atol=1e-14)


def test_ricci_scalar_of_nonmetrizable_spray(nonmetrizable_spray, rng):
    x, y = rng.uniform(-1, 1, size=(25, 2)), rng.uniform(-3, 3, size=(25, 2))
    geometry = local_geometry(nonmetrizable_spray, x, y)
    np.testing.assert_allclose(geometry.rho[..., 0], -2 * y[:, 0] ** 2 - y[:, 1] ** 2, rtol=1e-12)
    expected_alpha = np.stack([-2 * y[:, 0], -y[:, 1]], axis=-1)
    np.testing.assert_allclose(geometry.alpha[..., 0], expected_alpha, rtol=1e-11, atol=1e-12)


# ============================================================================
# Structural identities
# ============================================================================

def test_flat_spray_has_no_curvature(flat2d):
    point = PhasePoint.of([0.5, -0.5], [1.0, 3.0])
    data = curvature(flat2d, point)
    assert not data.Rten.any()
    assert not data.Phi.any()
    assert data.rho == 0.0
    assert homogeneity_residual(flat2d, point) == 0.0


def test_flat_spray_isotropy_rejects_zero_fiber(flat2d):
    with pytest.raises(DomainError):
        isotropy(flat2d, PhasePoint.of([0.0, 0.0], [0.0, 0.0]))


@pytest.mark.parametrize("seed", range(10))
def test_curvature_is_antisymmetric(seed):
    spray = random_spray(3, seed=seed)
    x, y = random_points(3, 8, seed=seed)
    Rten = local_geometry(spray, x, y).curvature_tensor()
    np.testing.assert_allclose(Rten, -np.swapaxes(Rten, -1, -2), atol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_jacobi_is_curvature_contracted_with_y(seed):
    spray = random_spray(3, seed=seed, x_degree=2)
    x, y = random_points(3, 8, seed=seed + 100)
    geometry = local_geometry(spray, x, y)
    contracted = curvature_contraction(geometry.curvature_tensor(), y, convention="first")
    scale = np.abs(geometry.Phi).max() + 1.0
    np.testing.assert_allclose(contracted, geometry.Phi, atol=1e-11 * scale)


@pytest.mark.parametrize("seed", range(10))
def test_two_dimensional_sprays_are_isotropic(seed):
    spray = random_spray(2, seed=seed, x_degree=2)
    x, y = random_points(2, 10, seed=seed)
    geometry = local_geometry(spray, x, y)
    assert geometry.isotropy_residual().max() < 1e-10
    assert geometry.liouville_defect().max() < 1e-10


def test_random_sprays_are_homogeneous():
    spray = random_spray(3, seed=3)
    x, y = random_points(3, 20, seed=3)
    assert local_geometry(spray, x, y).homogeneity_residual().max() < 1e-12


def test_inhomogeneous_coefficient_detected():
    spray = Spray.from_texts(["y1 + y1^2", "0"])
    assert homogeneity_residual(spray, PhasePoint.of([0.0, 0.0], [1.0, 1.0])) > 0.1


def test_gradients_of_rho_match_finite_differences(nonmetrizable_spray):
    x0, y0 = np.array([0.2, 0.1]), np.array([1.2, -0.7])
    geometry = local_geometry(nonmetrizable_spray, x0, y0, order=3)
    h = 1e-6
    for j in range(2):
        step = np.zeros(2)
        step[j] = h
        up = local_geometry(nonmetrizable_spray, x0, y0 + step).rho[0]
        down = local_geometry(nonmetrizable_spray, x0, y0 - step).rho[0]
        assert geometry.rho[3 + j] == pytest.approx((up - down) / (2 * h), rel=1e-6)


def test_batched_geometry_matches_pointwise(shen_spray, rng):
    x, y = rng.uniform(-1, 1, size=(6, 2)), rng.uniform(-2, 2, size=(6, 2))
    batched = local_geometry(shen_spray, x, y, order=3)
    for k in range(6):
        single = local_geometry(shen_spray, x[k], y[k], order=3)
        np.testing.assert_allclose(batched.phi[k], single.phi, rtol=1e-13, atol=1e-13)


def test_geometry_order_is_validated(flat2d):
    with pytest.raises(ValueError):
        local_geometry(flat2d, [0.0, 0.0], [1.0, 0.0], order=4)


# ============================================================================
# Spray construction and domains
# ============================================================================

def test_spray_requires_matching_coefficient_count():
    with pytest.raises(ValueError):
        Spray.from_texts(["y1^2"])


def test_domain_predicate_mask(degenerate_spray):
    y = np.array([[1.0, 1.0], [1.0, -1.0], [0.0, 0.0]])
    mask = degenerate_spray.admits(np.zeros_like(y), y)
    assert mask.tolist() == [True, False, False]


def test_phase_point_helpers():
    point = PhasePoint.of([1, 2], [3, 4])
    assert point.n == 2
    assert point.scaled(2.0).y == (6.0, 8.0)
    assert point.as_dict() == {"x": [1.0, 2.0], "y": [3.0, 4.0]}
    with pytest.raises(ValueError):
        PhasePoint.of([1.0], [1.0, 2.0])


# ============================================================================
# Geodesics
# ============================================================================

def test_flat_geodesics_are_lines(flat2d):
    t, x, y = integrate_geodesic(flat2d, [0.0, 1.0], [2.0, -1.0], t_final=2.0, samples=5)
    np.testing.assert_allclose(x, np.outer(t, [2.0, -1.0]) + [0.0, 1.0], atol=1e-9)
    np.testing.assert_allclose(y, np.tile([2.0, -1.0], (5, 1)), atol=1e-9)


def test_geodesic_with_known_solution():
    # x1'' = -(x1')^2 gives x1 = ln(1 + t)
    spray = Spray.from_texts(["0.5*y1^2", "0"])
    t, x, y = integrate_geodesic(spray, [0.0, 0.0], [1.0, 1.0], t_final=1.0, samples=11)
    np.testing.assert_allclose(x[:, 0], np.log1p(t), atol=1e-8)
    np.testing.assert_allclose(y[:, 0], 1.0 / (1.0 + t), atol=1e-8)
    assert x[-1, 1] == pytest.approx(1.0)
    assert math.isclose(t[-1], 1.0)
