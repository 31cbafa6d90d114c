"""Closed-form fixed-point families with local immunodeficiency.

Two families are covered:

* the symmetric 3-node network (one persistent, one altruistic, one neutral
  node), an isolated fixed point that can be genuinely stable;
* star networks of any size n >= 2 (one persistent node fed by n-1 neutral
  nodes), a line segment of fixed points parametrized by the persistent
  virus concentration x1, existing only on the parameter subspace
  f_1 = beta * sum_{j>=2} f_j.

Node index convention: persistent node is index 0; 1-based labels used in
figures map to index = label - 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import SystemState, rhs
from .network import ImmuneMatrices, ModelParams, build_matrices, catalog

# Relative tolerance for the family subspace constraint f1 = beta * sum f_j.
CONSTRAINT_RTOL = 1e-12

STABLE_BRANCH = "stable_branch"
UNSTABLE_BRANCH = "unstable_branch"


class FamilyConstraintError(ValueError):
    """Parameters violate a family's existence constraint or range."""


class InfeasibleParamsError(ValueError):
    """Symmetric fixed point requested for parameters where it is infeasible."""


@dataclass(frozen=True)
class SymmetricFixedPoint:
    """Local-immunodeficiency fixed point of the symmetric 3-node network.

    lambda1 = f2 - f1/beta and lambda2 = b/alpha - 2b are the two eigenvalues
    of the Jacobian that split off as linear factors.  feasible means the
    point exists and both split eigenvalues are negative:
    beta*f2 < f1 < f3 and alpha > 1/2.  state is None when the closed form
    leaves the positive orthant (f3 < f1).
    """

    state: SystemState | None
    lambda1: float
    lambda2: float
    feasible: bool
    violated: tuple[str, ...]
    residual: float | None
    swapped: bool = False


@dataclass(frozen=True)
class StarFamilyPoint:
    """One member of the marginally stable star-family line segment.

    N_r is the total neutral antibody mass sum_{j>=2} r_j; the family exists
    for 0 < x1 < (b/c) N_r and sits on the stable branch when
    x1 < alpha (b/c) N_r (lambda1 < 0).
    """

    n: int
    x1: float
    state: SystemState
    N_r: float
    lambda1: float
    branch: str
    residual: float


def constrained_f1(f_rest, beta: float) -> float:
    """The f1 value that puts star-family parameters on the existence subspace."""
    return float(beta) * float(np.sum(np.asarray(f_rest, dtype=float)))


def verify_fixed_point(
    state: SystemState,
    params: ModelParams,
    matrices: ImmuneMatrices,
    tol: float = 1e-10,
) -> float:
    """Sup norm of the model derivative at the state; a fixed point passes when < tol."""
    xdot, rdot = rhs(state, params, matrices)
    return float(max(np.max(np.abs(xdot)), np.max(np.abs(rdot))))


def symmetric_fixed_point(
    params: ModelParams, swap_roles: bool = False
) -> SymmetricFixedPoint:
    """Closed-form fixed point of the symmetric 3-node network.

    Default roles: node 0 persistent, node 1 altruistic, node 2 neutral.
    With swap_roles the symmetric counterpart (node 2 persistent, node 0
    neutral) is returned.  Infeasible parameters yield feasible=False with
    the violated conditions named, never an exception, so parameter scans
    can tabulate feasibility regions.
    """
    if params.n != 3:
        raise ValueError(f"symmetric network has 3 nodes, params carry n={params.n}")
    f1, f2, f3 = (float(v) for v in params.f)
    if swap_roles:
        f1, f3 = f3, f1
    p, c, b, alpha, beta = params.p, params.c, params.b, params.alpha, params.beta

    r2 = f1 / (p * beta)
    r3 = (f3 - f1) / p
    x1 = (b / c) * r2 * (1.0 - alpha)
    x3 = (b / c) * (alpha * r2 + r3)
    lambda1 = f2 - f1 / beta
    lambda2 = b / alpha - 2.0 * b

    violated = []
    if not beta * f2 < f1:
        violated.append("beta*f2 < f1")
    if not f1 < f3:
        violated.append("f1 < f3")
    if not alpha > 0.5:
        violated.append("alpha > 1/2")
    feasible = not violated

    state: SystemState | None = None
    residual: float | None = None
    if r3 >= 0.0:
        x = np.array([x1, 0.0, x3])
        r = np.array([0.0, r2, r3])
        if swap_roles:
            x = x[::-1].copy()
            r = r[::-1].copy()
        state = SystemState(x, r)
        matrices = build_matrices(catalog("symmetric3"), params)
        residual = verify_fixed_point(state, params, matrices)

    return SymmetricFixedPoint(
        state=state,
        lambda1=lambda1,
        lambda2=lambda2,
        feasible=feasible,
        violated=tuple(violated),
        residual=residual,
        swapped=swap_roles,
    )


def star_family(params: ModelParams, n: int, x1: float) -> StarFamilyPoint:
    """Family point of the size-n star at persistent-virus concentration x1.

    Requires f1 = beta * sum_{j>=2} f_j (within CONSTRAINT_RTOL relative)
    and 0 < x1 < (b/c) N_r.  The returned state has r1 = 0, r_i = f_i / p
    and x_i = (b/c) r_i - (r_i / N_r) x1 for i >= 2.
    """
    if n < 2:
        raise ValueError(f"star family needs n >= 2, got {n}")
    if params.n != n:
        raise ValueError(f"params carry {params.n} rates but n={n}")
    f = params.f
    p, c, b, alpha, beta = params.p, params.c, params.b, params.alpha, params.beta

    f1_required = constrained_f1(f[1:], beta)
    if abs(float(f[0]) - f1_required) > CONSTRAINT_RTOL * max(abs(f1_required), 1.0):
        raise FamilyConstraintError(
            f"family requires f1 = beta*sum(f_2..f_n) = {f1_required!r}, got f1={float(f[0])!r}"
        )

    r_rest = f[1:] / p
    n_r = float(np.sum(r_rest))
    x1_max = (b / c) * n_r
    if not 0.0 < x1 < x1_max:
        raise FamilyConstraintError(
            f"x1 must lie in (0, (b/c)*N_r) = (0, {x1_max!r}), got {x1!r}"
        )

    x = np.empty(n)
    r = np.empty(n)
    x[0] = x1
    r[0] = 0.0
    x[1:] = (b / c) * r_rest - (r_rest / n_r) * x1
    r[1:] = r_rest
    state = SystemState(x, r)

    lambda1 = c * x1 / (alpha * n_r) - b
    branch = STABLE_BRANCH if x1 < alpha * x1_max else UNSTABLE_BRANCH
    matrices = build_matrices(catalog("star", n), params)
    residual = verify_fixed_point(state, params, matrices)

    return StarFamilyPoint(
        n=n, x1=float(x1), state=state, N_r=n_r,
        lambda1=lambda1, branch=branch, residual=residual,
    )


def two_node_family(params: ModelParams, x1: float) -> StarFamilyPoint:
    """Size-2 special case: one persistent node supported by one neutral node."""
    return star_family(params, 2, x1)
