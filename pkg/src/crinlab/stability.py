"""Jacobian-based stability analysis and characteristic-polynomial factors.

The Jacobian of the population model is assembled analytically in the block
layout [[A, B], [C, D]] (virus block first).  For the closed-form fixed
point families the characteristic polynomial factors into explicit linear
roots times a lower-degree residual polynomial whose coefficients are
closed-form expressions in the parameters; verify_factorization checks any
such factorization against an LU-based determinant evaluation at random
complex sample points, guarding the transcriptions.

Polynomial coefficient vectors are in descending powers (numpy convention).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dynamics import DENOM_FLOOR, SystemState, _rhs_arrays
from .fixedpoints import (
    InfeasibleParamsError,
    StarFamilyPoint,
    symmetric_fixed_point,
    star_family,
)
from .network import ImmuneMatrices, ModelParams, build_matrices, catalog
from .rng import SplitMix64

# Eigenvalues within this absolute tolerance of zero count as the structural
# zero eigenvalue of the neutral families.
ZERO_TOL = 1e-9

# Samples closer than this to a declared root are redrawn in
# verify_factorization (both sides vanish there).
ROOT_EXCLUSION_RADIUS = 1e-6


class StabilityClass(str, Enum):
    STABLE = "stable"
    MARGINALLY_STABLE = "marginally_stable"
    UNSTABLE = "unstable"


class EigensolverError(RuntimeError):
    """The QR iteration failed to converge."""


@dataclass(frozen=True)
class JacobianMatrix:
    """2n x 2n Jacobian; guarded_rows marks stimulation rows treated as zero.

    flagged_columns is set by the finite-difference path when a perturbation
    crossed the stimulation guard, invalidating those columns.
    """

    matrix: np.ndarray
    guarded_rows: np.ndarray
    flagged_columns: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0] // 2


@dataclass(frozen=True)
class StabilityReport:
    eigenvalues: tuple[complex, ...]
    classification: StabilityClass
    zero_eig_count: int
    max_real_part: float
    factorization_residual: float | None = None


@dataclass(frozen=True)
class CharPolyFactors:
    """Explicit linear roots plus the residual polynomial factor.

    det(lambda*I - J) = prod(lambda - root) * residual_poly(lambda).
    coefficients_positive reports whether the residual factor, after
    removing any structural zero root, has strictly positive coefficients
    (which rules out non-negative real roots).
    """

    linear_roots: tuple[float, ...]
    residual_poly: np.ndarray
    coefficients_positive: bool


# ---------------------------------------------------------------------------
# Jacobian assembly
# ---------------------------------------------------------------------------

def jacobian_analytic(
    state: SystemState, params: ModelParams, matrices: ImmuneMatrices
) -> JacobianMatrix:
    """Exact Jacobian of the model at the given state.

    Blocks (s_j = sum_k v_jk r_k, w_j = x_j / s_j, zero for guarded rows):
      A_ii = f_i - p sum_j u_ji r_j          B_ij = -p x_i u_ji
      C_ij = c v_ji r_i / s_j
      D_il = delta_il (c sum_j v_ji w_j - b) - c r_i sum_j v_ji v_jl x_j / s_j^2
    """
    n = state.n
    if params.n != n or matrices.n != n:
        raise ValueError("dimension mismatch between state, params and matrices")
    x, r = state.x, state.r
    u, v = matrices.U, matrices.V
    p, c, b = params.p, params.c, params.b

    s = v @ r
    guarded = s <= DENOM_FLOOR
    safe_s = np.where(guarded, 1.0, s)
    w = np.where(guarded, 0.0, x) / safe_s
    q = np.where(guarded, 0.0, x) / safe_s ** 2

    a_block = np.diag(params.f - p * (u.T @ r))
    b_block = -p * x[:, None] * u.T
    c_block = c * (v * r[None, :]).T / safe_s[None, :]
    c_block[:, guarded] = 0.0
    d_block = np.diag(c * (v.T @ w) - b) - c * r[:, None] * (v.T @ (v * q[:, None]))

    jac = np.block([[a_block, b_block], [c_block, d_block]])
    jac.flags.writeable = False
    return JacobianMatrix(matrix=jac, guarded_rows=guarded)


def jacobian_fd(
    state: SystemState,
    params: ModelParams,
    matrices: ImmuneMatrices,
    h: float = 1e-6,
) -> JacobianMatrix:
    """Central-difference Jacobian, the oracle for the analytic assembly.

    Columns whose +/- h perturbation flips a stimulation-row guard are
    flagged: the derivative is one-sided there and not trustworthy.
    """
    if h <= 0.0:
        raise ValueError(f"step h must be > 0, got {h}")
    n = state.n
    f, p, c, b = params.f, params.p, params.c, params.b
    u_t, v, v_t = matrices.U.T, matrices.V, matrices.V.T

    def eval_at(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x, r = z[:n], z[n:]
        xdot, rdot = _rhs_arrays(x, r, f, p, c, b, u_t, v, v_t)
        return np.concatenate([xdot, rdot]), (v @ r) <= DENOM_FLOOR

    z0 = np.concatenate([state.x, state.r])
    _, base_guard = eval_at(z0)
    jac = np.empty((2 * n, 2 * n))
    flagged = np.zeros(2 * n, dtype=bool)
    for k in range(2 * n):
        zp = z0.copy()
        zm = z0.copy()
        zp[k] += h
        zm[k] -= h
        fp, gp = eval_at(zp)
        fm, gm = eval_at(zm)
        jac[:, k] = (fp - fm) / (2.0 * h)
        flagged[k] = bool(np.any(gp != base_guard) or np.any(gm != base_guard))
    jac.flags.writeable = False
    return JacobianMatrix(matrix=jac, guarded_rows=base_guard, flagged_columns=flagged)


# ---------------------------------------------------------------------------
# Eigenvalues and classification
# ---------------------------------------------------------------------------

def eigenvalues(jacobian: JacobianMatrix | np.ndarray) -> np.ndarray:
    """All eigenvalues with multiplicity, sorted by real part descending."""
    m = jacobian.matrix if isinstance(jacobian, JacobianMatrix) else np.asarray(jacobian)
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite entries")
    try:
        eigs = np.linalg.eigvals(m)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(f"eigenvalue iteration did not converge: {exc}") from exc
    order = np.lexsort((-eigs.imag, -eigs.real))
    return eigs[order]


def classify_stability(eigs, zero_tol: float = ZERO_TOL) -> StabilityReport:
    """Label a spectrum stable / marginally_stable / unstable.

    stable: every real part < -zero_tol.  unstable: some real part >
    zero_tol.  marginally_stable: the spectrum touches the tolerance band
    around the imaginary axis without crossing it (in particular the
    structural zero eigenvalue of the neutral families).
    """
    eigs = tuple(complex(e) for e in eigs)
    if not eigs:
        raise ValueError("empty eigenvalue list")
    max_real = max(e.real for e in eigs)
    zero_count = sum(1 for e in eigs if abs(e) <= zero_tol)
    if max_real > zero_tol:
        label = StabilityClass.UNSTABLE
    elif max_real < -zero_tol:
        label = StabilityClass.STABLE
    else:
        label = StabilityClass.MARGINALLY_STABLE
    return StabilityReport(
        eigenvalues=eigs,
        classification=label,
        zero_eig_count=zero_count,
        max_real_part=max_real,
    )


def match_eigenvalue(eigs, target: complex) -> complex:
    """The eigenvalue nearest to an analytically known one."""
    eigs = np.asarray(eigs)
    return complex(eigs[np.argmin(np.abs(eigs - target))])


# ---------------------------------------------------------------------------
# Closed-form characteristic-polynomial factors
# ---------------------------------------------------------------------------

def symmetric_factors(params: ModelParams) -> CharPolyFactors:
    """Characteristic-polynomial factorization at the symmetric fixed point.

    det(lambda*I - J) = (lambda - lambda1)(lambda - lambda2) P(lambda) with
    P quartic; its five coefficients are closed forms in the parameters and
    are all strictly positive on the feasible region.
    """
    point = symmetric_fixed_point(params)
    if not point.feasible:
        raise InfeasibleParamsError(
            f"symmetric fixed point infeasible; violated: {point.violated}"
        )
    f1 = float(params.f[0])
    p, c, b, alpha = params.p, params.c, params.b, params.alpha
    r2, r3 = float(point.state.r[1]), float(point.state.r[2])
    x3 = float(point.state.x[2])

    s = alpha * r2 + r3
    k = 1.0 - alpha
    coeffs = np.array([
        1.0,
        b + b * r3 * k / s,
        b * f1 + b * b * r3 * k / s + p * c * x3 * r3 / s,
        (b * r3 * k / s) * (b * f1 + p * c * x3),
        b * b * p * f1 * k * r3,
    ])
    return CharPolyFactors(
        linear_roots=(point.lambda1, point.lambda2),
        residual_poly=coeffs,
        coefficients_positive=bool(np.all(coeffs > 0.0)),
    )


def symmetric_residual_summands(params: ModelParams) -> list[np.ndarray]:
    """The four summands of the symmetric residual quartic, as coefficient vectors.

    Their polynomial sum must equal symmetric_factors(...).residual_poly;
    kept separate so tests can cross-check the expanded closed form.
    """
    point = symmetric_fixed_point(params)
    f1 = float(params.f[0])
    p, c, b, alpha = params.p, params.c, params.b, params.alpha
    r2, r3 = float(point.state.r[1]), float(point.state.r[2])
    x3 = float(point.state.x[2])
    s = alpha * r2 + r3
    k = 1.0 - alpha
    return [
        np.array([alpha * b * f1, 0.0, 0.0]),
        b * f1 * k * np.array([1.0, b * r3 / s, b * p * r3]),
        np.polymul(np.polymul([1.0, 0.0, 0.0], [1.0, b]), [1.0, b * r3 * k / s]),
        p * x3 * np.polymul([1.0, 0.0], [c * r3 / s, b * c * r3 * k / s]),
    ]


def two_node_factors(params: ModelParams, x1: float) -> CharPolyFactors:
    """Factorization on the 2-node family: lambda (lambda - lambda1) [quadratic]."""
    point = star_family(params, 2, x1)
    p, c, b, beta = params.p, params.c, params.b, params.beta
    x2 = float(point.state.x[1])
    quad = np.array([1.0, b, c * p * (x2 + beta * x1)])
    return CharPolyFactors(
        linear_roots=(0.0, point.lambda1),
        residual_poly=quad,
        coefficients_positive=bool(np.all(quad > 0.0)),
    )


def three_node_star_factors(params: ModelParams, x1: float) -> CharPolyFactors:
    """Factorization on the 3-node star family.

    det(lambda*I - J) = (lambda - lambda1) [lambda D1(lambda) + p x2 D2(lambda)];
    the bracket is a quintic with zero constant term (the structural zero
    eigenvalue) whose quartic cofactor has strictly positive coefficients.
    """
    point = star_family(params, 3, x1)
    p, c, b, beta = params.p, params.c, params.b, params.beta
    x2, x3 = float(point.state.x[1]), float(point.state.x[2])
    r2, r3 = float(point.state.r[1]), float(point.state.r[2])
    rt = r2 + r3

    d1 = np.polyadd(
        np.polymul(
            np.polymul([1.0, 0.0], [1.0, b - c * x1 / rt]),
            [1.0, b, c * p * beta * x1],
        ),
        c * p * x3 * np.array([
            1.0,
            b - c * x1 * r3 / rt ** 2,
            c * p * beta * x1 * r2 / rt,
        ]),
    )
    d2 = np.polyadd(
        np.polymul([c, 0.0], [1.0, b - c * x1 * r2 / rt ** 2, c * p * x3]),
        np.array([c * p * beta * x1 * c * r3 / rt, 0.0]),
    )
    quintic = np.polyadd(np.polymul([1.0, 0.0], d1), p * x2 * d2)
    return CharPolyFactors(
        linear_roots=(point.lambda1,),
        residual_poly=quintic,
        coefficients_positive=bool(np.all(quintic[:-1] > 0.0)),
    )


def residual_roots(factors: CharPolyFactors) -> np.ndarray:
    """Roots of the residual polynomial via its companion matrix."""
    return np.roots(factors.residual_poly)


def factored_spectrum(factors: CharPolyFactors) -> np.ndarray:
    """Full eigenvalue multiset implied by a factorization, sorted like eigenvalues()."""
    eigs = np.concatenate([
        np.asarray(factors.linear_roots, dtype=complex),
        residual_roots(factors).astype(complex),
    ])
    order = np.lexsort((-eigs.imag, -eigs.real))
    return eigs[order]


# ---------------------------------------------------------------------------
# Zero eigenvector and factorization verification
# ---------------------------------------------------------------------------

def star_zero_eigenvector(point: StarFamilyPoint) -> np.ndarray:
    """Null vector (N_r, -r_2, ..., -r_n, 0, ..., 0) of the family Jacobian.

    Its virus part spans the line segment the family lives on; the antibody
    part is zero, so every family member shares the same antibody profile.
    """
    u = np.concatenate([[point.N_r], -point.state.r[1:]])
    return np.concatenate([u, np.zeros(point.n)])


def lu_det(m: np.ndarray) -> complex:
    """Determinant by partially pivoted LU elimination in complex arithmetic."""
    a = np.array(m, dtype=complex)
    order = a.shape[0]
    det = 1.0 + 0.0j
    for col in range(order):
        pivot = col + int(np.argmax(np.abs(a[col:, col])))
        if a[pivot, col] == 0.0:
            return 0.0 + 0.0j
        if pivot != col:
            a[[col, pivot]] = a[[pivot, col]]
            det = -det
        det *= a[col, col]
        a[col + 1:, col:] -= np.outer(a[col + 1:, col] / a[col, col], a[col, col:])
    return det


def verify_factorization(
    jacobian: JacobianMatrix | np.ndarray,
    factors: CharPolyFactors,
    sample_count: int = 20,
    box_halfwidth: float = 5.0,
    seed: int = 0x5EED,
) -> float:
    """Max relative deviation between det(lambda*I - J) and the factored form.

    Evaluated at sample_count random complex points from the square
    [-w, w] x [-iw, iw]; points landing within ROOT_EXCLUSION_RADIUS of a
    declared root are redrawn (both sides vanish there).
    """
    m = jacobian.matrix if isinstance(jacobian, JacobianMatrix) else np.asarray(jacobian)
    order = m.shape[0]
    degree = len(factors.linear_roots) + (len(factors.residual_poly) - 1)
    if degree != order:
        raise ValueError(
            f"factors describe a degree-{degree} polynomial but the matrix is {order}x{order}"
        )
    all_roots = np.concatenate([
        np.asarray(factors.linear_roots, dtype=complex),
        residual_roots(factors).astype(complex),
    ])

    rng = SplitMix64(seed)
    eye = np.eye(order)
    worst = 0.0
    for _ in range(sample_count):
        while True:
            lam = complex(
                rng.uniform(-box_halfwidth, box_halfwidth),
                rng.uniform(-box_halfwidth, box_halfwidth),
            )
            if all_roots.size == 0 or np.min(np.abs(all_roots - lam)) > ROOT_EXCLUSION_RADIUS:
                break
        lhs = lu_det(lam * eye - m)
        rhs_val = np.polyval(factors.residual_poly, lam)
        for root in factors.linear_roots:
            rhs_val *= lam - root
        scale = max(abs(lhs), abs(rhs_val))
        deviation = abs(lhs - rhs_val) / scale if scale > 0.0 else abs(lhs - rhs_val)
        worst = max(worst, deviation)
    return worst


def lambda1_crossing_bisect(
    params: ModelParams,
    n: int,
    tol: float = 1e-6,
    matrices: ImmuneMatrices | None = None,
) -> float:
    """Locate the x1 where the family's branch eigenvalue crosses zero.

    Bisects on the real part of the Jacobian eigenvalue matched to the
    analytic lambda1, over the open family segment.  The analytic crossing
    sits at alpha * (b/c) * N_r.
    """
    if matrices is None:
        matrices = build_matrices(catalog("star", n), params)
    n_r = float(np.sum(params.f[1:] / params.p))
    hi_end = (params.b / params.c) * n_r

    def matched_real(x1: float) -> float:
        point = star_family(params, n, x1)
        jac = jacobian_analytic(point.state, params, matrices)
        return match_eigenvalue(eigenvalues(jac), complex(point.lambda1)).real

    lo, hi = 1e-9 * hi_end, (1.0 - 1e-9) * hi_end
    flo, fhi = matched_real(lo), matched_real(hi)
    if flo >= 0.0 or fhi <= 0.0:
        raise ValueError("branch eigenvalue does not change sign on the family segment")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if matched_real(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
