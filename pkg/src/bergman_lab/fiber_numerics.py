"""Fiber-side numerics on product Reinhardt domains.

Quadrature is a tensor product, per complex fiber coordinate, of a
Gauss-Legendre rule in the radius (mapped to ``[r_inner, r_outer]``, with the
polar Jacobian folded into the weights) and a uniform trapezoid rule in the
angle.  On a periodic integrand the trapezoid rule integrates angular modes
``exp(i k theta)`` exactly for ``|k| < n_angular``, so monomials ``z^a
conj(z)^b`` are integrated exactly whenever ``a, b <= n_angular/2 - 1`` and
the radial polynomial degree stays within Gauss-Legendre exactness.

Inner products follow the convention ``<f, g> = sum f * conj(g) * w`` over
the nodes, ``w = exp(-phi) * quadrature weight``.  Gram matrices are stored
so that ``v^H G v`` is the squared norm of the coefficient vector ``v``
(entry ``G[j, k]`` pairs basis element ``k`` against the conjugate of basis
element ``j``); this is the layout under which the orthonormalizing
transform satisfies ``C^H G C = I``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

__all__ = [
    "FiberDomain",
    "QuadratureRule",
    "MonomialBasis",
    "GramIndefiniteError",
    "DegenerateBasisError",
    "build_quadrature",
    "monomial_basis",
    "vandermonde",
    "weighted_inner_product",
    "gram_matrix",
    "orthonormalize",
]

DOMAIN_KINDS = ("disk", "polydisc", "annulus")


class GramIndefiniteError(ArithmeticError):
    """Gram matrix failed positivity (quadrature too coarse for the degree)."""


class DegenerateBasisError(ArithmeticError):
    """Cholesky pivot collapsed: basis numerically dependent at some degree."""


@dataclass(frozen=True)
class FiberDomain:
    """Product Reinhardt fiber domain with at most two complex coordinates.

    ``radii`` holds the outer radius of each coordinate; ``inner_radii`` is
    zero except for the annulus kind, where it must be strictly between 0 and
    the outer radius coordinate-wise.
    """

    kind: str
    radii: tuple[float, ...]
    inner_radii: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise ValueError(f"unknown fiber domain kind {self.kind!r}")
        radii = tuple(float(r) for r in self.radii)
        inner = tuple(float(r) for r in self.inner_radii)
        if self.kind != "annulus":
            if inner and any(r != 0.0 for r in inner):
                raise ValueError("inner radii only make sense for the annulus kind")
            inner = (0.0,) * len(radii)
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "inner_radii", inner)
        d = len(radii)
        if not 1 <= d <= 2:
            raise ValueError(f"fiber dimension must be 1 or 2, got {d}")
        if self.kind == "disk" and d != 1:
            raise ValueError("disk domain has exactly one coordinate; use polydisc for d=2")
        if len(inner) != d:
            raise ValueError("inner radii must match the number of coordinates")
        if any(r <= 0 for r in radii):
            raise ValueError("outer radii must be positive")
        if self.kind == "annulus" and any(not 0 < ri < ro for ri, ro in zip(inner, radii)):
            raise ValueError("annulus needs 0 < inner radius < outer radius")

    @property
    def dim(self) -> int:
        return len(self.radii)

    @property
    def volume(self) -> float:
        v = 1.0
        for ro, ri in zip(self.radii, self.inner_radii):
            v *= math.pi * (ro * ro - ri * ri)
        return v

    @classmethod
    def disk(cls, radius: float = 1.0) -> "FiberDomain":
        return cls("disk", (radius,))

    @classmethod
    def polydisc(cls, *radii: float) -> "FiberDomain":
        return cls("polydisc", tuple(radii))

    @classmethod
    def annulus(cls, inner: float, outer: float) -> "FiberDomain":
        return cls("annulus", (outer,), (inner,))

    def contains(self, points: np.ndarray, margin_frac: float = 0.0) -> np.ndarray:
        """Coordinate-wise membership with a relative safety margin.

        ``points`` has shape ``(..., d)``.  The outer bound shrinks by
        ``margin_frac * outer``; the annulus inner bound grows by
        ``margin_frac * (outer - inner)``.
        """
        pts = np.asarray(points, dtype=complex)
        if pts.shape[-1] != self.dim:
            raise ValueError(f"points have {pts.shape[-1]} coordinates, domain has {self.dim}")
        ok = np.ones(pts.shape[:-1], dtype=bool)
        for c, (ro, ri) in enumerate(zip(self.radii, self.inner_radii)):
            r = np.abs(pts[..., c])
            ok &= r <= ro * (1.0 - margin_frac)
            if ri > 0:
                ok &= r >= ri + margin_frac * (ro - ri)
        return ok


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Flattened tensor-product polar rule over a :class:`FiberDomain`.

    ``nodes`` has shape ``(M, d)``; ``weights`` already include the polar
    Jacobian.  ``shape`` records ``(n_radial, n_angular)`` per coordinate and
    ``radial_nodes`` the per-coordinate radii, so grid-structured finite
    differences can reshape node-indexed fields to
    ``(nr_1, na_1, ..., nr_d, na_d)``.
    """

    domain: FiberDomain
    shape: tuple[tuple[int, int], ...]
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    radial_nodes: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def points(self) -> np.ndarray:
        """Nodes as a 1-d complex array (single-coordinate fibers only)."""
        if self.domain.dim != 1:
            raise ValueError("points is only available for one-dimensional fibers")
        return self.nodes[:, 0]

    def grid_view(self, values: np.ndarray) -> np.ndarray:
        """Reshape a node-indexed field to the full polar grid."""
        axes = tuple(n for pair in self.shape for n in pair)
        return np.asarray(values).reshape(axes)


def build_quadrature(domain: FiberDomain, n_radial: int = 64, n_angular: int = 128) -> QuadratureRule:
    """Tensor Gauss-Legendre (radius) x trapezoid (angle) rule on ``domain``.

    Node count grows as ``(n_radial * n_angular) ** d``; d = 2 fibers should
    use a much coarser per-coordinate resolution than the d = 1 default.
    """
    if n_radial < 4:
        raise ValueError(f"n_radial must be at least 4, got {n_radial}")
    if n_angular < 8:
        raise ValueError(f"n_angular must be at least 8, got {n_angular}")
    x, w = leggauss(n_radial)
    coord_nodes, coord_wts, radial = [], [], []
    for ro, ri in zip(domain.radii, domain.inner_radii):
        r = ri + (x + 1.0) * 0.5 * (ro - ri)
        wr = w * 0.5 * (ro - ri) * r  # polar Jacobian
        theta = 2.0 * np.pi * np.arange(n_angular) / n_angular
        wt = 2.0 * np.pi / n_angular
        z = r[:, None] * np.exp(1j * theta)[None, :]
        coord_nodes.append(z.ravel())
        coord_wts.append((wr[:, None] * np.full(n_angular, wt)[None, :]).ravel())
        radial.append(r)
    if domain.dim == 1:
        nodes = coord_nodes[0][:, None]
        weights = coord_wts[0]
    else:
        a, b = coord_nodes
        nodes = np.stack([np.repeat(a, b.size), np.tile(b, a.size)], axis=1)
        weights = np.repeat(coord_wts[0], b.size) * np.tile(coord_wts[1], a.size)
    rule = QuadratureRule(
        domain=domain,
        shape=tuple((n_radial, n_angular) for _ in range(domain.dim)),
        nodes=nodes,
        weights=weights,
        radial_nodes=tuple(radial),
    )
    vol = domain.volume
    if abs(weights.sum() - vol) > 1e-12 * vol:
        raise AssertionError("quadrature weights do not sum to the domain volume")
    return rule


@dataclass(frozen=True)
class MonomialBasis:
    """Monomials of total degree <= max_degree in graded lexicographic order."""

    fiber_dim: int
    max_degree: int
    exponents: tuple[tuple[int, ...], ...]

    @property
    def dim(self) -> int:
        return len(self.exponents)

    def truncated_dim(self, degree: int) -> int:
        """Number of leading exponents of total degree <= degree."""
        if degree < 0:
            raise ValueError("degree must be nonnegative")
        return math.comb(degree + self.fiber_dim, self.fiber_dim)


def monomial_basis(max_degree: int, fiber_dim: int = 1) -> MonomialBasis:
    if max_degree < 0:
        raise ValueError("max_degree must be nonnegative")
    if not 1 <= fiber_dim <= 2:
        raise ValueError("fiber_dim must be 1 or 2")
    exps = []
    for total in range(max_degree + 1):
        if fiber_dim == 1:
            exps.append((total,))
        else:
            exps.extend((total - j, j) for j in range(total + 1))
    basis = MonomialBasis(fiber_dim, max_degree, tuple(exps))
    assert basis.dim == math.comb(max_degree + fiber_dim, fiber_dim)
    return basis


def vandermonde(basis: MonomialBasis, nodes: np.ndarray) -> np.ndarray:
    """Matrix of monomial values, shape ``(n_nodes, basis.dim)``."""
    pts = np.asarray(nodes, dtype=complex)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[1] != basis.fiber_dim:
        raise ValueError("node coordinate count does not match the basis fiber_dim")
    # per-coordinate power tables, then product across coordinates
    out = np.ones((pts.shape[0], basis.dim), dtype=complex)
    for c in range(basis.fiber_dim):
        powers = pts[:, c, None] ** np.arange(basis.max_degree + 1)[None, :]
        idx = np.fromiter((e[c] for e in basis.exponents), dtype=int, count=basis.dim)
        out *= powers[:, idx]
    return out


def _values_on_nodes(f, quad: QuadratureRule) -> np.ndarray:
    if callable(f):
        arg = quad.points if quad.domain.dim == 1 else quad.nodes
        f = f(arg)
    vals = np.asarray(f, dtype=complex)
    if vals.shape == ():
        vals = np.full(quad.size, complex(vals))
    if vals.shape != (quad.size,):
        raise ValueError(f"expected {quad.size} node values, got shape {vals.shape}")
    return vals


def weighted_inner_product(f, g, weight_values, quad: QuadratureRule) -> complex:
    """Discrete ``integral of f * conj(g) * exp(-phi)``.

    ``f`` and ``g`` may be callables on the nodes or arrays of node values;
    ``weight_values`` are the values ``exp(-phi)`` at the nodes (must be
    positive and finite).
    """
    fv = _values_on_nodes(f, quad)
    gv = _values_on_nodes(g, quad)
    wv = np.asarray(weight_values, dtype=float)
    if wv.shape != (quad.size,):
        raise ValueError(f"expected {quad.size} weight values, got shape {wv.shape}")
    if not np.all(np.isfinite(wv)) or np.any(wv <= 0):
        raise ValueError("weight values must be finite and positive")
    return complex(np.sum(fv * np.conj(gv) * wv * quad.weights))


def gram_matrix(
    basis: MonomialBasis,
    weight_values: np.ndarray,
    quad: QuadratureRule,
    vander: np.ndarray | None = None,
) -> np.ndarray:
    """Weighted Gram matrix of the monomial basis.

    Entry ``G[j, k]`` pairs monomial ``k`` against the conjugate of monomial
    ``j``, so ``v^H G v = ||sum_j v_j m_j||^2``.  Raises
    :class:`GramIndefiniteError` when the assembled matrix fails positivity,
    which is the signature of a quadrature too coarse for the degree
    (angular aliasing makes distinct monomials collide on the nodes).
    """
    V = vandermonde(basis, quad.nodes) if vander is None else vander
    wv = np.asarray(weight_values, dtype=float)
    if wv.shape != (quad.size,):
        raise ValueError(f"expected {quad.size} weight values, got shape {wv.shape}")
    if not np.all(np.isfinite(wv)) or np.any(wv <= 0):
        raise ValueError("weight values must be finite and positive")
    G = V.conj().T @ (wv[:, None] * quad.weights[:, None] * V)
    G = 0.5 * (G + G.conj().T)  # symmetrize roundoff
    eigs = np.linalg.eigvalsh(G)
    # relative floor: exact rank deficiency lands at +-eps * max_eig
    if eigs[0] <= 1e-14 * eigs[-1]:
        raise GramIndefiniteError(
            f"Gram matrix is not positive definite (min eigenvalue {eigs[0]:.3e}); "
            f"degree {basis.max_degree} needs a finer quadrature than {quad.shape}"
        )
    return G


def orthonormalize(
    gram: np.ndarray,
    pivot_rtol: float = 1e-13,
    exponents: tuple[tuple[int, ...], ...] | None = None,
) -> tuple[np.ndarray, float]:
    """Cholesky-based orthonormalizing transform for a Hermitian Gram matrix.

    Returns ``(transform, condition)`` with ``transform^H G transform = I``;
    columns of ``transform`` are coefficient vectors of an orthonormal frame.
    Because the factorization is triangular, the leading principal block of
    the transform orthonormalizes the corresponding leading sub-basis, which
    keeps degree-truncation diagnostics cheap.

    A pivot below ``pivot_rtol * max(diag)`` aborts with
    :class:`DegenerateBasisError` naming the offending basis element.
    """
    G = np.array(gram, dtype=complex)
    dim = G.shape[0]
    if G.shape != (dim, dim):
        raise ValueError("gram must be square")
    scale = max(float(np.abs(G).max()), 1e-300)
    if float(np.abs(G - G.conj().T).max()) > 1e-12 * scale:
        raise ValueError("gram must be Hermitian")
    max_diag = float(np.real(np.diag(G)).max())
    L = np.zeros_like(G)
    for j in range(dim):
        pivot = float(np.real(G[j, j]) - np.real(L[j, :j] @ L[j, :j].conj()))
        if pivot <= pivot_rtol * max_diag:
            label = f"exponent {exponents[j]}" if exponents is not None else f"index {j}"
            raise DegenerateBasisError(
                f"degenerate basis: Cholesky pivot {pivot:.3e} at {label} "
                f"(threshold {pivot_rtol:.1e} * max diagonal {max_diag:.3e})"
            )
        L[j, j] = math.sqrt(pivot)
        if j + 1 < dim:
            L[j + 1 :, j] = (G[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j].conj()) / L[j, j]
    transform = np.linalg.inv(L).conj().T
    eigs = np.linalg.eigvalsh(G)
    condition = float(eigs[-1] / eigs[0]) if eigs[0] > 0 else math.inf
    return transform, condition
