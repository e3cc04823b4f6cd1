"""Fiber quadrature, monomial bases, Gram assembly, orthonormalization.

Reference values used below, all classical:

* area of the unit disk = pi; integral of |z|^2 over it = pi/2,
* Gaussian radial moments over the unit disk,
      integral |z|^(2k) exp(-|z|^2) dA = pi * lowergamma(k+1, 1),
  which scipy provides as ``gammainc(k+1, 1) * k!`` (regularized times
  Gamma); spelled out, the first few are pi*(1-1/e), pi*(1-2/e), pi*(2-5/e),
* the unweighted disk kernel at the center: K(0,0) = 1/pi at every degree.
"""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import gammainc

from bergman_lab.fiber_numerics import (
    DegenerateBasisError,
    FiberDomain,
    GramIndefiniteError,
    build_quadrature,
    gram_matrix,
    monomial_basis,
    orthonormalize,
    vandermonde,
    weighted_inner_product,
)


def gaussian_moment(k: int) -> float:
    """pi * lowergamma(k+1, 1): the weighted norm^2 of z^k on the unit disk."""
    return math.pi * gammainc(k + 1, 1.0) * math.factorial(k)


class TestDomains:
    def test_volumes(self):
        assert FiberDomain.disk(1.0).volume == pytest.approx(math.pi, rel=1e-15)
        assert FiberDomain.polydisc(1.0, 1.0).volume == pytest.approx(math.pi**2, rel=1e-15)
        assert FiberDomain.annulus(0.5, 1.0).volume == pytest.approx(math.pi * 0.75, rel=1e-15)

    def test_validation(self):
        with pytest.raises(ValueError):
            FiberDomain("ball", (1.0,))
        with pytest.raises(ValueError):
            FiberDomain.polydisc(1.0, 1.0, 1.0)  # fiber dimension capped at 2
        with pytest.raises(ValueError):
            FiberDomain.annulus(1.0, 0.5)
        with pytest.raises(ValueError):
            FiberDomain.disk(-1.0)
        with pytest.raises(ValueError):
            FiberDomain("disk", (1.0,), (0.2,))

    def test_contains_margin(self):
        dom = FiberDomain.disk(1.0)
        pts = np.array([[0.0], [0.97 + 0j], [1.2 + 0j]])
        assert dom.contains(pts).tolist() == [True, True, False]
        assert dom.contains(pts, margin_frac=0.05).tolist() == [True, False, False]

    def test_contains_annulus(self):
        dom = FiberDomain.annulus(0.5, 1.0)
        pts = np.array([[0.6 + 0j], [0.4 + 0j], [0.51 + 0j]])
        assert dom.contains(pts).tolist() == [True, False, True]
        assert not dom.contains(pts, margin_frac=0.1)[2]


class TestQuadrature:
    def test_disk_area(self, disk_quad):
        assert disk_quad.weights.sum() == pytest.approx(math.pi, rel=1e-14)

    def test_disk_second_moment(self, disk_quad):
        val = np.sum(np.abs(disk_quad.points) ** 2 * disk_quad.weights)
        assert val == pytest.approx(math.pi / 2, rel=1e-13)

    def test_gaussian_moments(self, disk_quad):
        w = np.exp(-np.abs(disk_quad.points) ** 2)
        for k in range(6):
            val = np.sum(np.abs(disk_quad.points) ** (2 * k) * w * disk_quad.weights)
            assert val == pytest.approx(gaussian_moment(k), rel=1e-12)

    def test_angular_exactness(self, disk_quad):
        # z^a conj(z)^b integrates to zero unless a == b
        z = disk_quad.points
        for a, b in [(1, 0), (3, 1), (0, 2), (5, 2)]:
            val = np.sum(z**a * np.conj(z) ** b * disk_quad.weights)
            assert abs(val) < 1e-13

    def test_annulus_moments(self):
        quad = build_quadrature(FiberDomain.annulus(0.5, 1.0), n_radial=32, n_angular=64)
        assert quad.weights.sum() == pytest.approx(math.pi * 0.75, rel=1e-13)
        # integral of |z|^2: 2*pi*(R^4 - r^4)/4
        val = np.sum(np.abs(quad.points) ** 2 * quad.weights)
        assert val == pytest.approx(math.pi * (1 - 0.5**4) / 2, rel=1e-12)

    def test_polydisc_volume(self):
        quad = build_quadrature(FiberDomain.polydisc(1.0, 1.0), n_radial=12, n_angular=24)
        assert quad.weights.sum() == pytest.approx(math.pi**2, rel=1e-12)
        assert quad.nodes.shape == (quad.size, 2)
        with pytest.raises(ValueError):
            quad.points  # 1-d accessor is disk-only

    def test_polydisc_mixed_moment(self):
        quad = build_quadrature(FiberDomain.polydisc(1.0, 1.0), n_radial=12, n_angular=24)
        val = np.sum(np.abs(quad.nodes[:, 0]) ** 2 * np.abs(quad.nodes[:, 1]) ** 4 * quad.weights)
        assert val == pytest.approx((math.pi / 2) * (math.pi / 3), rel=1e-12)

    def test_resolution_floor(self):
        with pytest.raises(ValueError):
            build_quadrature(FiberDomain.disk(1.0), n_radial=3)
        with pytest.raises(ValueError):
            build_quadrature(FiberDomain.disk(1.0), n_angular=6)

    def test_grid_view_roundtrip(self, disk_quad):
        vals = np.arange(disk_quad.size, dtype=float)
        grid = disk_quad.grid_view(vals)
        assert grid.shape == (48, 96)
        assert np.array_equal(grid.ravel(), vals)


class TestMonomialBasis:
    def test_dimension_1d(self):
        basis = monomial_basis(5, fiber_dim=1)
        assert basis.dim == 6
        assert basis.exponents[:3] == ((0,), (1,), (2,))

    def test_dimension_2d_graded(self):
        basis = monomial_basis(2, fiber_dim=2)
        assert basis.dim == 6
        assert basis.exponents == ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))

    def test_truncated_dim(self):
        basis = monomial_basis(6, fiber_dim=2)
        assert basis.truncated_dim(4) == 15
        assert basis.truncated_dim(0) == 1

    @given(st.integers(0, 9), st.integers(1, 2))
    def test_dim_formula(self, n, d):
        assert monomial_basis(n, d).dim == math.comb(n + d, d)

    def test_vandermonde_values(self):
        basis = monomial_basis(2, fiber_dim=2)
        pts = np.array([[2.0 + 0j, 3.0 + 0j]])
        row = vandermonde(basis, pts)[0]
        assert np.allclose(row, [1, 2, 3, 4, 6, 9])

    def test_vandermonde_1d_accepts_flat(self):
        basis = monomial_basis(3)
        z = np.array([0.5 + 0.5j, -1j])
        V = vandermonde(basis, z)
        assert np.allclose(V[:, 2], z**2)


class TestInnerProduct:
    def test_matches_oracle(self, disk_quad):
        w = np.exp(-np.abs(disk_quad.points) ** 2)
        val = weighted_inner_product(lambda z: z, lambda z: z, w, disk_quad)
        assert val == pytest.approx(gaussian_moment(1), rel=1e-12)

    def test_conjugate_symmetry(self, disk_quad):
        w = np.exp(-np.abs(disk_quad.points) ** 2)
        a = weighted_inner_product(lambda z: z, lambda z: z**2 + 1, w, disk_quad)
        b = weighted_inner_product(lambda z: z**2 + 1, lambda z: z, w, disk_quad)
        assert a == pytest.approx(np.conj(b), abs=1e-14)

    def test_rejects_bad_weight(self, disk_quad):
        w = np.ones(disk_quad.size)
        w[0] = -1.0
        with pytest.raises(ValueError):
            weighted_inner_product(lambda z: z, lambda z: z, w, disk_quad)


class TestGram:
    def test_diagonal_matches_moments(self, disk_quad):
        basis = monomial_basis(4)
        w = np.exp(-np.abs(disk_quad.points) ** 2)
        G = gram_matrix(basis, w, disk_quad)
        for k in range(5):
            assert G[k, k] == pytest.approx(gaussian_moment(k), rel=1e-12)
        off = G - np.diag(np.diag(G))
        assert np.abs(off).max() < 1e-13

    def test_quadratic_form_is_norm(self, disk_quad, rng):
        basis = monomial_basis(3)
        w = np.exp(-np.abs(disk_quad.points) ** 2)
        G = gram_matrix(basis, w, disk_quad)
        v = rng.normal(size=4) + 1j * rng.normal(size=4)
        V = vandermonde(basis, disk_quad.points)
        direct = np.sum(np.abs(V @ v) ** 2 * w * disk_quad.weights)
        assert np.real(v.conj() @ G @ v) == pytest.approx(direct, rel=1e-12)

    def test_rank_deficiency_detected(self):
        # more basis elements (33) than quadrature nodes (4 * 8 = 32)
        quad = build_quadrature(FiberDomain.disk(1.0), n_radial=4, n_angular=8)
        basis = monomial_basis(32)
        w = np.ones(quad.size)
        with pytest.raises(GramIndefiniteError):
            gram_matrix(basis, w, quad)


class TestOrthonormalize:
    def test_contract(self, disk_quad):
        basis = monomial_basis(6)
        w = np.exp(-np.abs(disk_quad.points) ** 2)
        G = gram_matrix(basis, w, disk_quad)
        C, cond = orthonormalize(G)
        assert np.abs(C.conj().T @ G @ C - np.eye(basis.dim)).max() < 1e-10
        assert cond >= 1.0

    def test_unweighted_disk_coefficients(self, disk_quad):
        # flat weight: orthonormal frame is z^k * sqrt((k+1)/pi)
        basis = monomial_basis(5)
        G = gram_matrix(basis, np.ones(disk_quad.size), disk_quad)
        C, _ = orthonormalize(G)
        expect = np.diag([math.sqrt((k + 1) / math.pi) for k in range(6)])
        assert np.abs(np.abs(C) - expect).max() < 1e-12

    def test_triangular_nesting(self, disk_quad):
        # leading block orthonormalizes the leading sub-basis
        basis = monomial_basis(6)
        w = np.exp(-np.abs(disk_quad.points) ** 2)
        G = gram_matrix(basis, w, disk_quad)
        C, _ = orthonormalize(G)
        k = basis.truncated_dim(4)
        sub = C[:k, :k]
        assert np.abs(sub.conj().T @ G[:k, :k] @ sub - np.eye(k)).max() < 1e-10

    def test_degenerate_pivot_named(self):
        G = np.array([[1.0, 1.0], [1.0, 1.0]], dtype=complex)
        with pytest.raises(DegenerateBasisError, match="exponent"):
            orthonormalize(G, exponents=((0,), (1,)))

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            orthonormalize(np.array([[1.0, 2.0], [0.0, 1.0]], dtype=complex))

    @given(st.integers(2, 5), st.integers(0, 10_000))
    def test_random_spd_contract(self, n, seed):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        G = A @ A.conj().T + 0.1 * np.eye(n)
        C, _ = orthonormalize(G)
        assert np.abs(C.conj().T @ G @ C - np.eye(n)).max() < 1e-9
