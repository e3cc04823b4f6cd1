"""The L2-estimate step: derivative fields, orthogonality, the dbar identity.

For a family of sections s_i with amplitudes a_i and kernel K_t at base
point t, define on the fiber

    Gamma(xi)    = sum_i a_i(t0) K_{t0}(xi, s_i(t0)),
    Lambda_a(xi) = sum_i a_i(t0) [ d/dt_a - (d phi/dt_a) ] K_t(xi, s_i(t))   at t = t0,

the t-derivative taken by central complex differences (the section motion
rides along inside it) and the weight term analytically.  Three facts are
checked numerically:

* Lambda_a is orthogonal to every holomorphic function in the truncated
  space (this characterizes the weight-twisted derivative),
* dbar Lambda_a = -Gamma * (mixed Hessian row over the fiber indices),
  evaluated by grid differentiation in polar coordinates,
* the L2 bound ||Lambda_a||^2 <= int |Gamma|^2 (tf ff^{-1} tf^H)_{aa}
  e^{-phi}, and its assembly into the curvature lower bound for the
  section functional.

Angular derivatives use FFT differentiation (exact for the trigonometric
polynomials a truncated kernel produces on each ring); radial derivatives
use 3-point stencils on the Gauss-Legendre rings, with the outer two rings
excluded from residual norms to keep one-sided-stencil error out of the
contracts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bergman import BergmanBasis, SectionFamily, bergman_basis, section_value_pair
from .curvature import CheckConfig, Stencil, UnconvergedBasisError, fd_hessian, section_field
from .fiber_numerics import QuadratureRule
from .utils import as_complex_tuple
from .weights import FiberDegenerateError, WeightFamily, schur_trace_field

__all__ = [
    "HormanderData",
    "HormanderBoundReport",
    "AssembledReport",
    "build_hormander_data",
    "gamma_field",
    "lambda_field",
    "orthogonality_residual",
    "dbar_identity_residual",
    "hormander_bound_check",
    "assembled_lower_bound",
]

LAMBDA_FD_STEP = 1e-4  # t-differencing step; small enough that the O(h^2)
# error stays far below the 1e-6 orthogonality contract
CONVERGENCE_TOL = 1e-6
EDGE_RINGS = 2


def _kernel_combination(b: BergmanBasis, points, amps) -> np.ndarray:
    """sum_i amps_i K(node, points_i) over all quadrature nodes."""
    M = b.monomials_at(np.atleast_2d(np.asarray(points, dtype=complex)))
    rhs = np.conj(M).T @ np.asarray(amps, dtype=complex)
    coeffs = b.transform @ (b.transform.conj().T @ rhs)
    return b.vander @ coeffs


def _check_truncation(b: BergmanBasis, points):
    for p in np.atleast_2d(np.asarray(points, dtype=complex)):
        probe = p[0] if b.basis.fiber_dim == 1 else tuple(p)
        gap = b.diag_convergence_gap(probe)
        if gap > CONVERGENCE_TOL:
            raise UnconvergedBasisError(
                f"kernel truncation not converged at fiber point {p.tolist()}: "
                f"relative diagonal change {gap:.3e} from degree {b.N - 2} to {b.N}"
            )


@dataclass(frozen=True, eq=False)
class HormanderData:
    """Gamma, Lambda_a fields and the basis they were built on."""

    t0: tuple
    w: WeightFamily
    fam: SectionFamily
    basis: BergmanBasis
    gamma: np.ndarray = field(repr=False)
    directions: tuple = ()
    lambdas: tuple = field(default=(), repr=False)  # one node array per direction
    h_step: float = LAMBDA_FD_STEP

    @property
    def quad(self) -> QuadratureRule:
        return self.basis.quad

    @property
    def node_measure(self) -> np.ndarray:
        """e^{-phi} times quadrature weights."""
        return self.basis.weight_vals * self.quad.weights


def gamma_field(w: WeightFamily, fam: SectionFamily, t0, N: int, quad: QuadratureRule) -> np.ndarray:
    """Gamma on the quadrature nodes (holomorphic: a kernel combination)."""
    t0 = as_complex_tuple(t0)
    fam.check_inside(quad.domain, t0)
    b = bergman_basis(w, t0, N, quad)
    return _kernel_combination(b, fam.sections_at(t0), fam.amplitudes_at(t0))


def lambda_field(
    w: WeightFamily,
    fam: SectionFamily,
    t0,
    alpha: int,
    N: int,
    quad: QuadratureRule,
    h_step: float = LAMBDA_FD_STEP,
    include_weight_term: bool = True,
) -> np.ndarray:
    """Lambda_alpha on the nodes; set include_weight_term=False for the
    negative control (plain d/dt without the weight twist)."""
    t0 = as_complex_tuple(t0)
    b0 = bergman_basis(w, t0, N, quad)
    return _lambda_for_direction(
        w, fam, t0, b0, alpha, N, quad, h_step, include_weight_term
    )


def _lambda_for_direction(w, fam, t0, b0, alpha, N, quad, h_step, include_weight_term=True):
    if not 0 <= alpha < w.n:
        raise ValueError(f"direction index {alpha} out of range for base_dim {w.n}")
    amps0 = fam.amplitudes_at(t0)
    t0_arr = np.asarray(t0)

    def combo(tau: complex) -> np.ndarray:
        t = t0_arr.copy()
        t[alpha] += tau
        t = tuple(t)
        fam.check_inside(quad.domain, t)
        b = bergman_basis(w, t, N, quad)
        pts = fam.sections_at(t)
        _check_truncation(b, pts)
        return _kernel_combination(b, pts, amps0)

    h = h_step
    dK = (combo(h) - combo(-h) - 1j * (combo(1j * h) - combo(-1j * h))) / (4.0 * h)
    if not include_weight_term:
        return dK
    gamma = _kernel_combination(b0, fam.sections_at(t0), amps0)
    dphi = w.grad_base(t0, quad.nodes)[alpha]
    return dK - dphi * gamma


def build_hormander_data(
    w: WeightFamily,
    fam: SectionFamily,
    t0,
    N: int,
    quad: QuadratureRule,
    directions=None,
    h_step: float = LAMBDA_FD_STEP,
    include_weight_term: bool = True,
) -> HormanderData:
    t0 = as_complex_tuple(t0)
    fam.check_inside(quad.domain, t0)
    b0 = bergman_basis(w, t0, N, quad)
    _check_truncation(b0, fam.sections_at(t0))
    gamma = _kernel_combination(b0, fam.sections_at(t0), fam.amplitudes_at(t0))
    if directions is None:
        directions = tuple(range(w.n))
    lambdas = tuple(
        _lambda_for_direction(w, fam, t0, b0, a, N, quad, h_step, include_weight_term)
        for a in directions
    )
    return HormanderData(
        t0=t0,
        w=w,
        fam=fam,
        basis=b0,
        gamma=gamma,
        directions=tuple(directions),
        lambdas=lambdas,
        h_step=h_step,
    )


def _weighted_norm(vals: np.ndarray, measure: np.ndarray) -> float:
    return math.sqrt(float(np.sum(np.abs(vals) ** 2 * measure).real))


def orthogonality_residual(data: HormanderData) -> float:
    """max_i |<u_i, Lambda_a>| / ||Lambda_a||, worst over directions.

    Fields below 1e-7 ||Gamma|| count as zero: the t-differencing leaves
    O(h^2) ~ 1e-8 ||Gamma|| of junk in directions the weight does not
    couple, and a relative residual of junk is meaningless.
    """
    U = data.basis.vander @ data.basis.transform  # orthonormal frame on nodes
    measure = data.node_measure
    floor = 1e-7 * _weighted_norm(data.gamma, measure)
    worst = 0.0
    for lam in data.lambdas:
        norm = _weighted_norm(lam, measure)
        if norm <= floor:
            continue
        inner = U.conj().T @ (measure * lam)  # <lam, u_i> conj'd; magnitudes equal
        worst = max(worst, float(np.abs(inner).max()) / norm)
    return worst


def _radial_derivative_matrix(r: np.ndarray) -> np.ndarray:
    """3-point Lagrange first-derivative matrix on a nonuniform grid."""
    nr = len(r)
    D = np.zeros((nr, nr))
    for i in range(nr):
        j = min(max(i, 1), nr - 2)
        x0, x1, x2 = r[j - 1], r[j], r[j + 1]
        x = r[i]
        D[i, j - 1] = (2 * x - x1 - x2) / ((x0 - x1) * (x0 - x2))
        D[i, j] = (2 * x - x0 - x2) / ((x1 - x0) * (x1 - x2))
        D[i, j + 1] = (2 * x - x0 - x1) / ((x2 - x0) * (x2 - x1))
    return D


def _angular_derivative(grid: np.ndarray, axis: int) -> np.ndarray:
    na = grid.shape[axis]
    modes = np.fft.fftfreq(na, d=1.0 / na)
    if na % 2 == 0:
        modes[na // 2] = 0.0  # drop the ambiguous Nyquist mode
    shape = [1] * grid.ndim
    shape[axis] = na
    return np.fft.ifft(np.fft.fft(grid, axis=axis) * (1j * modes).reshape(shape), axis=axis)


def dbar_coordinate(vals: np.ndarray, quad: QuadratureRule, coord: int) -> np.ndarray:
    """d/d(conj xi_coord) of node values via polar-grid differentiation.

    Radial: 3-point stencils on the Gauss-Legendre rings (one-sided at the
    edge rings).  Angular: FFT differentiation, exact below the Nyquist
    mode.  In polar coordinates  d/d(conj xi) = (e^{i theta}/2)(d/dr +
    (i/r) d/dtheta).
    """
    g = quad.grid_view(np.asarray(vals, dtype=complex))
    axis_r, axis_t = 2 * coord, 2 * coord + 1
    nr, na = quad.shape[coord]
    r = quad.radial_nodes[coord]
    D = _radial_derivative_matrix(r)
    dr = np.moveaxis(np.tensordot(D, np.moveaxis(g, axis_r, 0), axes=(1, 0)), 0, axis_r)
    dt = _angular_derivative(g, axis_t)
    rshape = [1] * g.ndim
    rshape[axis_r] = nr
    tshape = [1] * g.ndim
    tshape[axis_t] = na
    theta = (2 * np.pi * np.arange(na) / na).reshape(tshape)
    rr = r.reshape(rshape)
    out = 0.5 * np.exp(1j * theta) * (dr + 1j / rr * dt)
    return out.reshape(-1)


def interior_mask(quad: QuadratureRule, edge_rings: int = EDGE_RINGS) -> np.ndarray:
    """Node mask excluding the outer ``edge_rings`` radial rings per coordinate."""
    shape = tuple(n for pair in quad.shape for n in pair)
    mask = np.ones(shape, dtype=bool)
    for c, (nr, _na) in enumerate(quad.shape):
        idx = [slice(None)] * len(shape)
        idx[2 * c] = slice(nr - edge_rings, nr)
        mask[tuple(idx)] = False
    return mask.reshape(-1)


def dbar_identity_residual(data: HormanderData, w: WeightFamily) -> float:
    """Relative L2 defect of  dbar Lambda_a + Gamma * (mixed Hessian row).

    The norm runs over interior nodes; the scale is ||Gamma|| times the
    largest mixed-Hessian entry (falling back to ||Gamma|| itself for
    weights with no base-fiber coupling, where both sides vanish).
    """
    quad = data.quad
    measure = data.node_measure
    mask = interior_mask(quad)
    _tt, tf, _ff = w.hessian_field(data.t0, quad.nodes)
    gnorm = _weighted_norm(data.gamma, measure)
    worst = 0.0
    for pos, a in enumerate(data.directions):
        lam = data.lambdas[pos]
        defect2 = 0.0
        coupling = 0.0
        for c in range(w.d):
            lhs = dbar_coordinate(lam, quad, c)
            rhs = data.gamma * tf[:, a, c]
            defect2 += np.sum(np.abs(lhs + rhs)[mask] ** 2 * measure[mask]).real
            coupling = max(coupling, float(np.abs(tf[:, a, c]).max()))
        scale = gnorm * coupling
        if scale < 1e-14 * max(gnorm, 1.0):
            scale = max(gnorm, 1e-300)
        worst = max(worst, math.sqrt(defect2) / scale)
    return worst


@dataclass(frozen=True)
class HormanderBoundReport:
    """Per-direction L2 bound lhs = ||Lambda_a||^2 vs the kernel-weighted rhs."""

    t0: tuple
    directions: tuple
    lhs: tuple
    rhs: tuple
    ratios: tuple
    max_ratio: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_ratio <= 1.0 + self.tolerance


def hormander_bound_check(
    data: HormanderData, w: WeightFamily, tolerance: float = 1e-4
) -> HormanderBoundReport:
    """||Lambda_a||^2 <= int |Gamma|^2 (tf ff^{-1} tf^H)_aa e^{-phi} per direction.

    Directions whose rhs vanishes below the numerical floor contribute
    ratio 0 when the lhs vanishes with them (separable weights), and a
    genuine violation otherwise.
    """
    quad = data.quad
    measure = data.node_measure
    _tt, tf, ff = w.hessian_field(data.t0, quad.nodes)
    eigs = np.linalg.eigvalsh(ff)
    if float(eigs[:, 0].min()) <= 0.0:
        raise FiberDegenerateError(
            "fiber Hessian block not positive definite on the nodes"
        )
    X = np.linalg.solve(ff, np.conj(np.swapaxes(tf, 1, 2)))  # (M, d, n)
    contraction = np.real(np.einsum("mad,mda->ma", tf, X))  # (M, n), >= 0
    gamma2 = np.abs(data.gamma) ** 2 * measure
    floor = 1e-12 * float(np.sum(gamma2).real)
    lhs_list, rhs_list, ratio_list = [], [], []
    for pos, a in enumerate(data.directions):
        lhs = float(np.sum(np.abs(data.lambdas[pos]) ** 2 * measure).real)
        rhs = float(np.sum(gamma2 * contraction[:, a]).real)
        if rhs <= floor:
            ratio = 0.0 if lhs <= floor else math.inf
        else:
            ratio = lhs / rhs
        lhs_list.append(lhs)
        rhs_list.append(rhs)
        ratio_list.append(ratio)
    return HormanderBoundReport(
        t0=data.t0,
        directions=data.directions,
        lhs=tuple(lhs_list),
        rhs=tuple(rhs_list),
        ratios=tuple(ratio_list),
        max_ratio=max(ratio_list) if ratio_list else 0.0,
        tolerance=tolerance,
    )


@dataclass(frozen=True)
class AssembledReport:
    """The assembled curvature lower bound at one base point.

    chain1: trace of the Hessian of B_t<a,a> >= int |Gamma|^2 *
    (Schur trace of the weight Hessian) * e^{-phi}; chain2: that integral
    >= n * eps0 * B(t0).
    """

    t0: tuple
    lhs_trace: float
    rhs_integral: float
    B0: float
    eps0: float
    chain1_margin: float
    chain2_margin: float
    tolerance: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.chain1_margin >= -self.tolerance and self.chain2_margin >= -self.tolerance


def assembled_lower_bound(
    w: WeightFamily,
    fam: SectionFamily,
    t0,
    cfg: CheckConfig,
    eps0: float = 0.0,
) -> AssembledReport:
    t0 = as_complex_tuple(t0)
    full, sub = section_value_pair(w, fam, t0, cfg.N, cfg.quad)
    gap = abs(full - sub) / max(abs(full), 1e-300)
    if gap > cfg.convergence_tol:
        raise UnconvergedBasisError(
            f"kernel truncation not converged at t0 (relative change {gap:.3e})"
        )
    data = build_hormander_data(w, fam, t0, cfg.N, cfg.quad)
    measure = data.node_measure
    schur = schur_trace_field(*w.hessian_field(t0, cfg.quad.nodes))
    rhs = float(np.sum(np.abs(data.gamma) ** 2 * schur * measure).real)
    B0_repro = float(np.sum(np.abs(data.gamma) ** 2 * measure).real)
    H = fd_hessian(section_field(w, fam, cfg.N, cfg.quad), Stencil(t0, cfg.h), threads=cfg.threads)
    lhs = float(np.real(np.trace(H)))
    tol = cfg.tolerance * max(1.0, full)
    return AssembledReport(
        t0=t0,
        lhs_trace=lhs,
        rhs_integral=rhs,
        B0=full,
        eps0=eps0,
        chain1_margin=lhs - rhs,
        chain2_margin=rhs - w.n * eps0 * full,
        tolerance=tol,
        diagnostics={
            "B0_reproduced": B0_repro,
            "reproduction_gap": abs(full - B0_repro) / max(full, 1e-300),
            "convergence_gap": gap,
        },
    )
