"""End-to-end acceptance battery.

Twelve numbered criteria (a1..a12) exercise the full stack at fixed
resolutions and tolerances, each with an explicit wall-clock budget:

  a1  separable weights reproduce the base curvature in the log trace
  a2  cross-term weights meet the certified trace bound (n = 1 and 2)
  a3  determinant metric of a rank-2 frame meets the scaled bound
  a4  Schur trace agrees with a bordered-determinant oracle
  a5  variational characterization of the Schur trace (upper bounds,
      equality at the optimizer)
  a6  field orthogonality and the L2 contraction bound
  a7  dbar transport identity, with a negative control
  a8  assembled two-step chain: trace >= integral >= n eps0 B
  a9  reproducing identity, flat-disk diagonal, extremal agreement
  a10 iteration bound ledger matches a recursive oracle and is met
  a11 base-Hessian spectrum of log B stays above the tolerance floor
  a12 distortion attenuation closed form and monotonicity

Each criterion returns a CriterionResult; `run_criterion` never raises, so
one broken criterion cannot mask the others in a suite run.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from itertools import product

import numpy as np

from .bergman import HoloPoly, SectionFamily, bergman_basis, direct_image_gram, \
    extremal_check, reproducing_residual
from .curvature import CheckConfig, Stencil, check_det_inequality, check_log_inequality, \
    fd_hessian, log_section_field
from .fiber_numerics import FiberDomain, build_quadrature
from .hormander import assembled_lower_bound, build_hormander_data, dbar_identity_residual, \
    hormander_bound_check, orthogonality_residual
from .iteration import run_iteration
from .weights import BasePatch, QuadraticWeight, distortion_margin, schur_trace_field

SEED = 20260814

_QUADS: dict = {}


def _quad(nr: int, na: int):
    key = (nr, na)
    if key not in _QUADS:
        _QUADS[key] = build_quadrature(FiberDomain.disk(1.0), nr, na)
    return _QUADS[key]


def _cfg(N: int, quad) -> CheckConfig:
    return CheckConfig(N=N, quad=quad, h=1e-2, tolerance=1e-3)


def _cross(lam: float) -> QuadraticWeight:
    H = np.array([[1.0, -lam], [-lam, 1.0]])
    return QuadraticWeight(1, 1, H, label=f"cross({lam})")


def _cross_n2(lam: float) -> QuadraticWeight:
    H = np.array([[1.0, 0.0, -lam], [0.0, 1.0, 0.0], [-lam, 0.0, 1.0]])
    return QuadraticWeight(2, 1, H, label=f"cross-n2({lam})")


def _origin_sections(n: int = 1) -> SectionFamily:
    return SectionFamily.constant([[0.0]], base_dim=n)


def _random_psd(rng, m: int) -> np.ndarray:
    A = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    return A.conj().T @ A + 1e-3 * np.eye(m)


@dataclass(frozen=True)
class CriterionResult:
    name: str
    passed: bool
    margin: float
    detail: str
    elapsed_s: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{self.name.upper()}: {tag} ({self.detail}; {self.elapsed_s:.1f}s)"


# --- criteria ----------------------------------------------------------

def a1():
    """Separable weights: the log trace equals the base curvature c."""
    quad = _quad(64, 128)
    cfg = _cfg(24, quad)
    fam = _origin_sections()
    worst = math.inf
    budget_ok = True
    for c in (0.5, 1.0, 2.0):
        start = time.perf_counter()
        rep = check_log_inequality(QuadraticWeight.separable(c), fam, (0.0,), c, cfg)
        budget_ok = budget_ok and (time.perf_counter() - start) <= 5.0
        worst = min(worst, 1e-3 - abs(rep.trace - c))
    detail = f"max |trace - c| = {1e-3 - worst:.2e} over c in 0.5/1/2"
    return worst >= 0 and budget_ok, worst, detail


def a2():
    """Cross-term weights meet the certified trace bound."""
    quad = _quad(64, 128)
    cfg = _cfg(24, quad)
    worst = math.inf
    budget_ok = True
    for lam in (0.3, 0.5, 0.7):
        start = time.perf_counter()
        rep = check_log_inequality(_cross(lam), _origin_sections(), (0.0,), 1 - lam**2, cfg)
        budget_ok = budget_ok and (time.perf_counter() - start) <= 30.0
        worst = min(worst, rep.margin + 1e-3)
    lam = 0.5
    start = time.perf_counter()
    rep2 = check_log_inequality(
        _cross_n2(lam), _origin_sections(2), (0.0, 0.0), (2 - lam**2) / 2, cfg
    )
    budget_ok = budget_ok and (time.perf_counter() - start) <= 30.0
    worst = min(worst, rep2.margin + 1e-3)
    detail = f"worst margin over bound {worst - 1e-3:+.2e} (n=1 and n=2)"
    return worst >= 0 and budget_ok, worst, detail


def a3():
    """Determinant metric of the frame {1, z} meets the rank-scaled bound."""
    quad = _quad(64, 128)
    cfg = _cfg(24, quad)
    patch = BasePatch(center=(0j,), radius=0.45)
    frame = (HoloPoly.constant(1.0, 1), HoloPoly(1, {(1,): 1.0}))
    start = time.perf_counter()

    c = 1.0
    dig = direct_image_gram(QuadraticWeight.separable(c), frame, patch, quad)
    rep = check_det_inequality(dig, (0.0,), c, 2, cfg)
    sep_gap = abs(rep.trace - 2 * c)

    lam = 0.5
    dig2 = direct_image_gram(_cross(lam), frame, patch, quad)
    rep2 = check_det_inequality(dig2, (0.0,), 1 - lam**2, 2, cfg)

    budget_ok = (time.perf_counter() - start) <= 30.0
    worst = min(1e-3 - sep_gap, rep2.margin + 1e-3)
    detail = f"separable |trace - 2c| = {sep_gap:.2e}, cross margin {rep2.margin:+.2e}"
    return worst >= 0 and budget_ok, worst, detail


def a4():
    """Schur trace vs. bordered-determinant oracle on random psd Hessians."""
    rng = np.random.default_rng(SEED)
    start = time.perf_counter()
    worst = math.inf
    for n, d in product((1, 2), (1, 2)):
        for _ in range(50):
            H = _random_psd(rng, n + d)
            tt, tf, ff = H[:n, :n], H[:n, n:], H[n:, n:]
            lib = float(schur_trace_field(tt[None], tf[None], ff[None])[0])
            det_ff = np.linalg.det(ff)
            oracle = 0.0
            for k in range(n):
                M = np.empty((d + 1, d + 1), dtype=complex)
                M[0, 0] = tt[k, k]
                M[0, 1:] = tf[k]
                M[1:, 0] = np.conj(tf[k])
                M[1:, 1:] = ff
                oracle += float(np.real(np.linalg.det(M) / det_ff))
            worst = min(worst, 1e-10 - abs(lib - oracle))
    budget_ok = (time.perf_counter() - start) <= 1.0
    detail = f"max |schur - oracle| = {1e-10 - worst:.2e} over 200 draws"
    return worst >= 0 and budget_ok, worst, detail


def a5():
    """The Schur trace is the minimum of its completion quadratic."""
    rng = np.random.default_rng(SEED + 1)
    start = time.perf_counter()
    worst = math.inf
    for _ in range(100):
        n = int(rng.integers(1, 3))
        d = int(rng.integers(1, 3))
        H = _random_psd(rng, n + d)
        tt, tf, ff = H[:n, :n], H[:n, n:], H[n:, n:]
        schur = float(schur_trace_field(tt[None], tf[None], ff[None])[0])

        def completion(V):
            # sum_k  tt_kk - 2 Re(tf_k . V_k) + V_k^H ff V_k
            q = 0.0
            for k in range(n):
                v = V[:, k]
                q += float(
                    np.real(tt[k, k] - 2 * np.real(tf[k] @ v) + v.conj() @ ff @ v)
                )
            return q

        V_rand = rng.normal(size=(d, n)) + 1j * rng.normal(size=(d, n))
        worst = min(worst, completion(V_rand) - schur + 1e-12)
        V_opt = np.linalg.solve(ff, tf.conj().T)
        worst = min(worst, 1e-12 - abs(completion(V_opt) - schur))
    budget_ok = (time.perf_counter() - start) <= 1.0
    detail = f"worst optimality gap {1e-12 - worst:.2e} over 100 pairs"
    return worst >= 0 and budget_ok, worst, detail


def a6():
    """Field orthogonality and the L2 contraction bound, all couplings."""
    quad = _quad(48, 96)
    fam = _origin_sections()
    start = time.perf_counter()
    worst_orth = -math.inf
    worst_ratio = -math.inf
    for lam in (0.3, 0.5, 0.7):
        data = build_hormander_data(_cross(lam), fam, (0.0,), 16, quad)
        worst_orth = max(worst_orth, orthogonality_residual(data))
        worst_ratio = max(worst_ratio, hormander_bound_check(data, _cross(lam)).max_ratio)
    budget_ok = (time.perf_counter() - start) <= 60.0
    margin = min(1e-6 - worst_orth, (1 + 1e-4) - worst_ratio)
    detail = f"orthogonality <= {worst_orth:.2e}, ratio <= {worst_ratio:.6f}"
    return margin >= 0 and budget_ok, margin, detail


def a7():
    """dbar transport identity holds; dropping the transport term breaks it."""
    quad = _quad(48, 96)
    fam = _origin_sections()
    w = _cross(0.5)
    start = time.perf_counter()
    proper = dbar_identity_residual(build_hormander_data(w, fam, (0.0,), 16, quad), w)
    control = dbar_identity_residual(
        build_hormander_data(w, fam, (0.0,), 16, quad, include_weight_term=False), w
    )
    budget_ok = (time.perf_counter() - start) <= 30.0
    margin = min(1e-4 - proper, control - 1e-2)
    detail = f"residual {proper:.2e}, control {control:.2e}"
    return margin >= 0 and budget_ok, margin, detail


def a8():
    """Assembled chain: trace >= weighted integral >= n eps0 B, all couplings."""
    quad = _quad(48, 96)
    cfg = _cfg(16, quad)
    fam = _origin_sections()
    start = time.perf_counter()
    worst = math.inf
    for lam in (0.3, 0.5, 0.7):
        rep = assembled_lower_bound(_cross(lam), fam, (0.0,), cfg, eps0=1 - lam**2)
        worst = min(worst, rep.chain1_margin + rep.tolerance, rep.chain2_margin + rep.tolerance)
    budget_ok = (time.perf_counter() - start) <= 60.0
    detail = f"worst chain margin {worst:+.2e} over couplings"
    return worst >= 0 and budget_ok, worst, detail


def a9():
    """Kernel infrastructure: reproducing identity, flat diagonal, extremal."""
    start = time.perf_counter()
    quad = _quad(64, 128)
    b = bergman_basis(_cross(0.5), (0.0,), 24, quad)
    probe = 0.35 * np.exp(0.4j)
    h = lambda z: 1.0 + 0.25 * np.asarray(z) ** 2
    repro = reproducing_residual(b, h, complex(probe), quad)
    diag, extremal = extremal_check(b, complex(probe))
    ext_gap = abs(diag - extremal) / max(abs(diag), 1e-300)

    flat = QuadraticWeight(1, 1, np.zeros((2, 2)))
    b0 = bergman_basis(flat, (0.0,), 12, _quad(48, 96))
    diag_gap = abs(b0.kernel_diag(0j) - 1 / math.pi)

    budget_ok = (time.perf_counter() - start) <= 5.0
    margin = min(1e-8 - repro, 1e-6 - diag_gap, 1e-10 - ext_gap)
    detail = f"reproducing {repro:.2e}, |K(0,0) - 1/pi| = {diag_gap:.2e}, extremal {ext_gap:.2e}"
    return margin >= 0 and budget_ok, margin, detail


def a10():
    """Iteration ledger: closed-form bounds vs. a recursive oracle, bound met."""
    quad = _quad(48, 96)
    cfg = _cfg(16, quad)
    start = time.perf_counter()
    worst_oracle = math.inf
    worst_step = math.inf
    for m in (2, 3):
        ledger = run_iteration(QuadraticWeight.separable(1.0), m, 8, cfg)
        b = 0.0
        for rec in ledger.steps:
            b = b * (1 - 1 / m) + ledger.eps0 / m
            worst_oracle = min(worst_oracle, 1e-15 - abs(b - rec.certified_bound))
            worst_step = min(
                worst_step,
                rec.measured_trace - ledger.base_dim * rec.certified_bound + 1e-3,
            )
        if ledger.aborted or not ledger.satisfies(1e-3):
            worst_step = min(worst_step, -1.0)
    budget_ok = (time.perf_counter() - start) <= 300.0
    margin = min(worst_oracle / 1e-15, worst_step)  # oracle gap in units of its tolerance
    detail = (
        f"bound oracle gap {1e-15 - worst_oracle:.1e}, "
        f"worst measured margin {worst_step - 1e-3:+.2e} (m = 2, 3; K = 8)"
    )
    return worst_oracle >= 0 and worst_step >= 0 and budget_ok, margin, detail


def a11():
    """Base-Hessian spectrum of log B stays above -1e-6 * scale."""
    quad = _quad(48, 96)
    start = time.perf_counter()
    cases = [
        (QuadraticWeight.separable(1.0), _origin_sections(), (0.0,)),
        (_cross(0.5), _origin_sections(), (0.0,)),
        (_cross_n2(0.5), _origin_sections(2), (0.0, 0.0)),
    ]
    worst = math.inf
    for w, fam, t0 in cases:
        fn = log_section_field(w, fam, 16, quad)
        H = fd_hessian(fn, Stencil(t0, 1e-2))
        eigs = np.linalg.eigvalsh(H)
        scale = max(1.0, float(np.max(np.abs(H))))
        worst = min(worst, float(eigs[0]) + 1e-6 * scale)
    budget_ok = (time.perf_counter() - start) <= 60.0
    detail = f"worst floored eigenvalue {worst:+.2e} over 3 scenarios"
    return worst >= 0 and budget_ok, worst, detail


def a12():
    """Distortion attenuation: closed form at n=2, delta=0.1, monotone."""
    start = time.perf_counter()
    val = distortion_margin(2, 0.1, 1.0)
    closed = 0.9**2 / 1.1**4
    gap = abs(val - closed)
    rounded_ok = f"{val:.6f}" == "0.553241"
    grid = [distortion_margin(2, delta, 1.0) for delta in (0.0, 0.05, 0.1, 0.2, 0.4)]
    monotone = all(a > b for a, b in zip(grid, grid[1:]))
    linear = abs(distortion_margin(2, 0.1, 0.6) - 0.6 * val) < 1e-15
    budget_ok = (time.perf_counter() - start) <= 1.0
    margin = 1e-12 - gap
    ok = margin >= 0 and rounded_ok and monotone and linear and budget_ok
    detail = f"|value - closed form| = {gap:.1e}, value {val:.6f}, monotone {monotone}"
    return ok, margin, detail


_CRITERIA = {
    "a1": a1, "a2": a2, "a3": a3, "a4": a4, "a5": a5, "a6": a6,
    "a7": a7, "a8": a8, "a9": a9, "a10": a10, "a11": a11, "a12": a12,
}


def criterion_names() -> list:
    return list(_CRITERIA)


def run_criterion(name: str) -> CriterionResult:
    fn = _CRITERIA[name]
    start = time.perf_counter()
    try:
        passed, margin, detail = fn()
    except Exception as exc:  # a crash is a failure, not a suite abort
        passed, margin, detail = False, -math.inf, f"{type(exc).__name__}: {exc}"
    return CriterionResult(
        name=name,
        passed=bool(passed),
        margin=float(margin),
        detail=detail,
        elapsed_s=time.perf_counter() - start,
    )


def run_all(names=None) -> list:
    return [run_criterion(n) for n in (names or criterion_names())]
