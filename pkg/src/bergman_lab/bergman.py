"""Fiberwise Bergman kernels, section functionals, direct-image Grams.

At a fixed base point ``t`` the weighted Hilbert space is the span of the
monomials of degree <= N with inner product ``<f, g> = int f conj(g)
exp(-phi(t, .))``.  The orthonormalizing transform C of the Gram matrix G
(satisfying ``C^H G C = I``) yields the orthonormal frame ``u(x) = C^T
M(x)`` over the monomial column ``M(x)`` and the kernel

    K(z, w) = sum_i u_i(z) conj(u_i(w)) = M(z)^T (C C^H) conj(M(w)),

with ``C C^H = G^{-1}``.  Everything downstream (extremal values, section
functionals, the fields of the L2-estimate step) is linear algebra over
these objects.

Truncation bookkeeping: since C is triangular in the graded monomial
order, its leading principal block orthonormalizes the degree-(N-2)
sub-basis for free, which is how convergence of kernel diagonals in the
degree is diagnosed without a second Gram build.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exprs import expand_holomorphic_polynomial, parse_expr
from .fiber_numerics import (
    MonomialBasis,
    QuadratureRule,
    gram_matrix,
    monomial_basis,
    orthonormalize,
    vandermonde,
)
from .utils import as_complex_tuple
from .weights import BasePatch, WeightFamily

__all__ = [
    "HoloPoly",
    "SectionFamily",
    "BergmanBasis",
    "DirectImageGram",
    "SectionOutsideDomainError",
    "bergman_basis",
    "kernel_eval",
    "reproducing_residual",
    "extremal_check",
    "section_value",
    "section_value_pair",
    "direct_image_gram",
]

SECTION_MARGIN = 0.05
SECTION_MAX_DEGREE = 4


class SectionOutsideDomainError(ValueError):
    """A section left the fiber domain (or its safety margin)."""


@dataclass(frozen=True)
class HoloPoly:
    """Holomorphic polynomial in ``nvars`` complex variables (sparse)."""

    nvars: int
    coeffs: dict

    def __post_init__(self):
        clean = {}
        for exp, c in self.coeffs.items():
            exp = tuple(int(e) for e in exp)
            if len(exp) != self.nvars or any(e < 0 for e in exp):
                raise ValueError(f"bad exponent {exp} for {self.nvars} variables")
            if c != 0:
                clean[exp] = complex(c)
        object.__setattr__(self, "coeffs", clean)

    @classmethod
    def constant(cls, value: complex, nvars: int = 1) -> "HoloPoly":
        return cls(nvars, {(0,) * nvars: value})

    @classmethod
    def from_text(cls, text: str, variables: tuple[str, ...]) -> "HoloPoly":
        expr = parse_expr(text, variables)
        return cls(len(variables), expand_holomorphic_polynomial(expr, variables))

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.coeffs), default=0)

    def __call__(self, point):
        pts = np.asarray(point, dtype=complex)
        if pts.ndim == 0:
            pts = pts.reshape(1)
        if pts.shape[-1] != self.nvars:
            raise ValueError(f"point has {pts.shape[-1]} coordinates, expected {self.nvars}")
        out = np.zeros(pts.shape[:-1], dtype=complex)
        for exp, c in self.coeffs.items():
            term = np.full(pts.shape[:-1], c, dtype=complex)
            for a, e in enumerate(exp):
                if e:
                    term = term * pts[..., a] ** e
            out = out + term
        return complex(out) if out.shape == () else out


@dataclass(frozen=True)
class SectionFamily:
    """Sections s_i: base -> fiber with scalar amplitudes a_i(t).

    Both are polynomial in t of degree <= 4; together they define the
    Hermitian section functional  B_t<a, a> = sum a_i(t) conj(a_j(t))
    K_t(s_i(t), s_j(t)).
    """

    base_dim: int
    fiber_dim: int
    sections: tuple  # r entries, each a tuple of fiber_dim HoloPoly's in t
    amplitudes: tuple  # r HoloPoly's in t

    def __post_init__(self):
        if len(self.sections) != len(self.amplitudes):
            raise ValueError("need one amplitude per section")
        if not self.sections:
            raise ValueError("empty section family")
        for s in self.sections:
            if len(s) != self.fiber_dim:
                raise ValueError("section component count must equal fiber_dim")
            for comp in s:
                if comp.nvars != self.base_dim:
                    raise ValueError("section components are polynomials in the base variables")
                if comp.degree > SECTION_MAX_DEGREE:
                    raise ValueError(f"section degree {comp.degree} exceeds {SECTION_MAX_DEGREE}")
        for a in self.amplitudes:
            if a.nvars != self.base_dim:
                raise ValueError("amplitudes are polynomials in the base variables")
            if a.degree > SECTION_MAX_DEGREE:
                raise ValueError(f"amplitude degree {a.degree} exceeds {SECTION_MAX_DEGREE}")

    @property
    def rank(self) -> int:
        return len(self.sections)

    @classmethod
    def constant(cls, points, amps=None, base_dim: int = 1) -> "SectionFamily":
        """Family of t-independent sections at the given fiber points."""
        pts = np.atleast_2d(np.asarray(points, dtype=complex))
        r, d = pts.shape
        if amps is None:
            amps = [1.0] * r
        sections = tuple(
            tuple(HoloPoly.constant(pts[i, a], base_dim) for a in range(d)) for i in range(r)
        )
        amplitudes = tuple(HoloPoly.constant(complex(a), base_dim) for a in amps)
        return cls(base_dim, d, sections, amplitudes)

    def sections_at(self, t) -> np.ndarray:
        t = np.asarray(as_complex_tuple(t))
        return np.array([[comp(t) for comp in s] for s in self.sections], dtype=complex)

    def amplitudes_at(self, t) -> np.ndarray:
        t = np.asarray(as_complex_tuple(t))
        return np.array([a(t) for a in self.amplitudes], dtype=complex)

    def check_inside(self, domain, t, margin_frac: float = SECTION_MARGIN):
        pts = self.sections_at(t)
        ok = domain.contains(pts, margin_frac=margin_frac)
        if not ok.all():
            i = int(np.argmin(ok))
            raise SectionOutsideDomainError(
                f"section {i} evaluates to {pts[i].tolist()} at t={t}, outside the "
                f"fiber domain (margin {margin_frac})"
            )

    def validate_on_patch(self, domain, patch: BasePatch, margin_frac: float = SECTION_MARGIN):
        """Check the margin invariant over a deterministic patch sample."""
        for t in patch.sample(radii=(0.0, 0.5, 1.0), angles=8):
            self.check_inside(domain, tuple(t), margin_frac)


@dataclass(frozen=True, eq=False)
class BergmanBasis:
    """Orthonormalized truncated basis at one base point, with node caches."""

    t: tuple
    N: int
    basis: MonomialBasis
    transform: np.ndarray = field(repr=False)
    condition: float = 0.0
    weight_ref: str = ""
    gram: np.ndarray = field(default=None, repr=False)
    quad: QuadratureRule = field(default=None, repr=False)
    weight_vals: np.ndarray = field(default=None, repr=False)
    vander: np.ndarray = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.basis.dim

    def monomials_at(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=complex)
        single = pts.ndim == 0 or (pts.ndim == 1 and self.basis.fiber_dim > 1)
        if pts.ndim == 0:
            pts = pts.reshape(1, 1)
        elif pts.ndim == 1 and self.basis.fiber_dim == 1:
            pts = pts.reshape(-1, 1)
        elif pts.ndim == 1:
            pts = pts.reshape(1, -1)
        V = vandermonde(self.basis, pts)
        return V[0] if single else V

    def orthonormal_at(self, points) -> np.ndarray:
        """Values of the orthonormal frame, shape (..., dim)."""
        return self.monomials_at(points) @ self.transform

    def kernel_coefficients(self, w) -> np.ndarray:
        """Monomial coefficient vector of the holomorphic function K(., w)."""
        Mw = self.monomials_at(w)
        return self.transform @ (self.transform.conj().T @ np.conj(Mw))

    def kernel_column(self, w) -> np.ndarray:
        """K(node, w) over all quadrature nodes."""
        return self.vander @ self.kernel_coefficients(w)

    def kernel_diag(self, w, degree: int | None = None) -> float:
        """K(w, w), optionally truncated to a smaller degree sub-basis.

        Triangularity of the transform makes the leading k x k block the
        orthonormalizer of the leading sub-basis, so truncation is a slice.
        """
        u = self.orthonormal_at(w)
        if degree is not None:
            k = self.basis.truncated_dim(degree)
            Msub = self.monomials_at(w)[..., :k]
            u = Msub @ self.transform[:k, :k]
        return float(np.sum(np.abs(u) ** 2, axis=-1))

    def diag_convergence_gap(self, w) -> float:
        """Relative change of K(w,w) from degree N-2 to N."""
        full = self.kernel_diag(w)
        sub = self.kernel_diag(w, degree=max(self.N - 2, 0))
        return abs(full - sub) / max(abs(full), 1e-300)


def bergman_basis(w: WeightFamily, t, N: int, quad: QuadratureRule) -> BergmanBasis:
    """Orthonormalized degree-N basis for the weight slice phi(t, .)."""
    t = as_complex_tuple(t)
    basis = monomial_basis(N, quad.domain.dim)
    weight_vals = w.weight_values(t, quad)
    V = vandermonde(basis, quad.nodes)
    G = gram_matrix(basis, weight_vals, quad, vander=V)
    C, cond = orthonormalize(G, exponents=basis.exponents)
    return BergmanBasis(
        t=t,
        N=N,
        basis=basis,
        transform=C,
        condition=cond,
        weight_ref=w.label,
        gram=G,
        quad=quad,
        weight_vals=weight_vals,
        vander=V,
    )


def kernel_eval(b: BergmanBasis, z, w) -> complex:
    """K(z, w) = sum_i u_i(z) conj(u_i(w))."""
    uz = b.orthonormal_at(z)
    uw = b.orthonormal_at(w)
    return complex(np.sum(uz * np.conj(uw), axis=-1))


def reproducing_residual(b: BergmanBasis, h, w, quad: QuadratureRule) -> float:
    """|h(w) - <h, K(., w)>| for h in the truncated space.

    The inner product is evaluated by quadrature against the stored weight
    values, so this measures quadrature + orthonormalization error, not
    algebraic identity.
    """
    if quad.size != b.quad.size:
        raise ValueError("quadrature rule does not match the one the basis was built on")
    if callable(h):
        h_nodes = h(quad.points if quad.domain.dim == 1 else quad.nodes)
        h_at_w = h(w)
    else:
        raise TypeError("h must be callable on fiber points")
    col = b.kernel_column(w)
    integral = np.sum(h_nodes * np.conj(col) * b.weight_vals * quad.weights)
    return float(abs(h_at_w - integral))


def extremal_check(b: BergmanBasis, w) -> tuple[float, float]:
    """Kernel diagonal vs. the extremal value sup{|u(w)|^2 : ||u|| = 1}.

    The sup equals the squared norm of the evaluation functional, computed
    here through the Gram solve M(w)^T G^{-1} conj(M(w)) — an independent
    route from the transform-based diagonal.
    """
    diag = b.kernel_diag(w)
    Mw = b.monomials_at(w)
    y = np.linalg.solve(b.gram, np.conj(Mw))
    extremal = float(np.real(Mw @ y))
    return diag, extremal


def _section_vector(b: BergmanBasis, fam: SectionFamily, t) -> np.ndarray:
    """sum_i a_i(t) u(s_i(t)) in the orthonormal frame."""
    pts = fam.sections_at(t)
    amps = fam.amplitudes_at(t)
    U = b.orthonormal_at(pts)  # (r, dim)
    return amps @ U


def section_value(w: WeightFamily, fam: SectionFamily, t, N: int, quad: QuadratureRule) -> float:
    """The Hermitian section functional B_t<a, a> (a squared dual norm)."""
    t = as_complex_tuple(t)
    fam.check_inside(quad.domain, t)
    b = bergman_basis(w, t, N, quad)
    vec = _section_vector(b, fam, t)
    return float(np.sum(np.abs(vec) ** 2))


def section_value_pair(
    w: WeightFamily, fam: SectionFamily, t, N: int, quad: QuadratureRule
) -> tuple[float, float]:
    """(value at degree N, value at degree N-2) from a single basis build."""
    t = as_complex_tuple(t)
    fam.check_inside(quad.domain, t)
    b = bergman_basis(w, t, N, quad)
    vec = _section_vector(b, fam, t)
    full = float(np.sum(np.abs(vec) ** 2))
    k = b.basis.truncated_dim(max(N - 2, 0))
    pts = fam.sections_at(t)
    amps = fam.amplitudes_at(t)
    Usub = b.monomials_at(pts)[:, :k] @ b.transform[:k, :k]
    sub = float(np.sum(np.abs(amps @ Usub) ** 2))
    return full, sub


@dataclass(frozen=True, eq=False)
class DirectImageGram:
    """Gram field t -> G(t) of a fixed fiber-holomorphic frame.

    G(t)[j, k] pairs frame element k against the conjugate of element j in
    the weighted fiber inner product at t, the matrix of the varying L2
    metric in the frame.
    """

    w: WeightFamily
    frame: tuple  # HoloPoly's in the fiber variables
    patch: BasePatch
    quad: QuadratureRule
    frame_values: np.ndarray = field(default=None, repr=False)  # (nodes, r)

    @property
    def rank(self) -> int:
        return len(self.frame)

    def gram_at(self, t) -> np.ndarray:
        t = as_complex_tuple(t)
        wv = self.w.weight_values(t, self.quad) * self.quad.weights
        F = self.frame_values
        G = F.conj().T @ (wv[:, None] * F)
        return 0.5 * (G + G.conj().T)

    def neg_log_det(self, t) -> float:
        """-log det G(t): the local potential of the determinant metric."""
        sign, logabs = np.linalg.slogdet(self.gram_at(t))
        if sign.real <= 0:
            raise ArithmeticError(f"Gram determinant not positive at t={t}")
        return -float(logabs)


def direct_image_gram(
    w: WeightFamily, frame, patch: BasePatch, quad: QuadratureRule
) -> DirectImageGram:
    """Build the Gram field, validating frame independence at the center."""
    frame = tuple(frame)
    if not frame:
        raise ValueError("empty frame")
    F = np.stack([f(quad.nodes) for f in frame], axis=1)
    dig = DirectImageGram(w=w, frame=frame, patch=patch, quad=quad, frame_values=F)
    G0 = dig.gram_at(patch.center)
    eigs = np.linalg.eigvalsh(G0)
    if eigs[0] <= 1e-12 * max(eigs[-1], 1e-300):
        raise ValueError(
            f"frame numerically dependent: Gram eigenvalues at the patch center {eigs.tolist()}"
        )
    return dig
