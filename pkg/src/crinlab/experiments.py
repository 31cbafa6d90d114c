"""Batch experiments: random dandelion networks and family threshold sweeps.

The dandelion experiment attaches a minimal 3-node network as a tail to a
random ball, integrates the population model from random initial conditions
with randomly sampled parameters, and checks whether local immunodeficiency
(LI) emerges on the tail at equilibrium: the middle tail node altruistic
with at least one of the other two tail nodes persistent.

All randomness is keyed off a master seed; run k uses
derive_seed(master, k), from which a graph seed (sub-stream 0) and a
parameter seed (sub-stream 1) are derived, so any run can be reproduced in
isolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    ClassificationThresholds,
    NodeRole,
    SystemState,
    Termination,
    classify_nodes,
    integrate,
    rhs,
)
from .fixedpoints import star_family
from .network import ModelParams, build_matrices, catalog, random_dandelion
from .rng import SplitMix64, derive_seed
from .stability import (
    StabilityClass,
    classify_stability,
    eigenvalues,
    jacobian_analytic,
    match_eigenvalue,
)

PARAM_RANGES = {
    "f": (0.0, 1.0),
    "f_special": (1.0, 2.0),
    "p": (0.0, 1.0),
    "b": (0.0, 5.0),
    "c": (0.0, 5.0),
    "alpha": (0.5, 1.0),
    "x0": (0.0, 0.1),
    "r0": (0.0, 0.1),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Dandelion experiment settings; defaults target the 100-node setup.

    special_index is the node whose replication rate is drawn from the
    elevated U(1,2) range; the default is the tail attachment node
    (ball_size - 1).  That placement realizes the ordering the
    local-immunodeficiency fixed points require: the fast replicator ends
    up supporting the tail rather than playing the altruistic role.  The
    extinction switch eliminates any virus that ever falls below its
    initial concentration; without it the dense ball keeps every tail
    variant alive and local immunodeficiency rarely forms.
    """

    seed: int
    runs: int = 20
    ball_size: int = 98
    edge_prob: float = 0.5
    tail: str = "branch_cycle3"
    scheme: str = "euler"
    dt: float = 1e-3
    max_steps: int = 2_000_000
    eq_tol: float = 1e-9
    extinction: bool = True
    sample_stride: int = 1000
    special_index: int | None = None
    thresholds: ClassificationThresholds = field(default_factory=ClassificationThresholds)

    def __post_init__(self) -> None:
        if self.runs < 1:
            raise ValueError(f"runs must be >= 1, got {self.runs}")
        if self.special_index is not None and not 0 <= self.special_index < self.ball_size + 2:
            raise ValueError(f"special_index {self.special_index} outside the node range")

    @property
    def resolved_special_index(self) -> int:
        return self.ball_size - 1 if self.special_index is None else self.special_index


@dataclass(frozen=True)
class RunRecord:
    run_index: int
    run_seed: int
    terminated_by: Termination
    reached_equilibrium: bool
    t_final: float
    roles: tuple[NodeRole, ...]
    tail_roles: tuple[NodeRole, NodeRole, NodeRole]
    li_on_tail: bool
    x_total: float
    r_total: float
    x_max: float
    r_max: float
    residual: float


@dataclass(frozen=True)
class ExperimentReport:
    config: ExperimentConfig
    records: tuple[RunRecord, ...]
    fraction_li_on_tail: float
    runs_at_equilibrium: int
    fraction_li_at_equilibrium: float | None


def sample_params(
    run_seed: int, n: int, special_index: int | None = None
) -> tuple[ModelParams, SystemState]:
    """Random parameters and initial state for one run.

    Draw order (one SplitMix64 stream): f_0..f_{n-1}, p, b, c, alpha, then
    x(0) and r(0) componentwise.  All f_i ~ U(0,1) except the one at
    special_index ~ U(1,2); alpha ~ U(0.5,1) and beta = alpha^2, so
    0 < beta < alpha always holds.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if special_index is not None and not 0 <= special_index < n:
        raise ValueError(f"special_index {special_index} out of range for n={n}")
    rng = SplitMix64(run_seed)
    f = np.empty(n)
    for i in range(n):
        lo, hi = PARAM_RANGES["f_special"] if i == special_index else PARAM_RANGES["f"]
        f[i] = rng.uniform(lo, hi)
    p = rng.uniform(*PARAM_RANGES["p"])
    b = rng.uniform(*PARAM_RANGES["b"])
    c = rng.uniform(*PARAM_RANGES["c"])
    alpha = rng.uniform(*PARAM_RANGES["alpha"])
    x0 = np.array([rng.uniform(*PARAM_RANGES["x0"]) for _ in range(n)])
    r0 = np.array([rng.uniform(*PARAM_RANGES["r0"]) for _ in range(n)])
    params = ModelParams(f=f, p=p, c=c, b=b, alpha=alpha, beta=alpha ** 2)
    return params, SystemState(x0, r0)


def _check_ranges(params: ModelParams, state0: SystemState, special_index: int) -> None:
    for i, fi in enumerate(params.f):
        lo, hi = PARAM_RANGES["f_special"] if i == special_index else PARAM_RANGES["f"]
        if not lo < fi < hi:
            raise AssertionError(f"f[{i}]={fi} outside ({lo}, {hi})")
    for name in ("p", "b", "c", "alpha"):
        lo, hi = PARAM_RANGES[name]
        v = getattr(params, name)
        if not lo < v < hi:
            raise AssertionError(f"{name}={v} outside ({lo}, {hi})")
    if params.beta != params.alpha ** 2:
        raise AssertionError("beta must equal alpha^2")
    for vec, name in ((state0.x, "x0"), (state0.r, "r0")):
        lo, hi = PARAM_RANGES[name]
        if not np.all((lo < vec) & (vec < hi)):
            raise AssertionError(f"{name} outside ({lo}, {hi})")


def li_on_tail(tail_roles) -> bool:
    """LI predicate: middle tail node altruistic, another tail node persistent."""
    left, mid, right = tail_roles
    return mid == NodeRole.ALTRUISTIC and NodeRole.PERSISTENT in (left, right)


def run_dandelion(config: ExperimentConfig, trajectory_sink=None) -> ExperimentReport:
    """Run the full dandelion experiment and aggregate LI statistics.

    Divergent or non-equilibrated runs are recorded, not fatal; the LI
    fraction over all runs counts them by their final-state classification,
    and the equilibrium-only fraction is reported separately.
    trajectory_sink(run_index, trajectory), when given, receives every
    run's sampled trajectory (large; used by the CLI dump flag).
    """
    records = []
    tail_nodes = (config.ball_size - 1, config.ball_size, config.ball_size + 1)
    special = config.resolved_special_index
    for run_index in range(config.runs):
        run_seed = derive_seed(config.seed, run_index)
        graph = random_dandelion(
            derive_seed(run_seed, 0), config.ball_size, config.edge_prob, config.tail
        )
        params, state0 = sample_params(
            derive_seed(run_seed, 1), graph.n, special_index=special
        )
        _check_ranges(params, state0, special)
        matrices = build_matrices(graph, params)
        traj = integrate(
            state0,
            params,
            matrices,
            scheme=config.scheme,
            dt=config.dt,
            max_steps=config.max_steps,
            eq_tol=config.eq_tol,
            extinction_threshold="initial" if config.extinction else None,
            sample_stride=config.sample_stride,
        )
        if trajectory_sink is not None:
            trajectory_sink(run_index, traj)
        final = traj.final_state
        roles = classify_nodes(final, config.thresholds)
        tail_roles = tuple(roles[i] for i in tail_nodes)
        xdot, rdot = rhs(final, params, matrices)
        records.append(RunRecord(
            run_index=run_index,
            run_seed=run_seed,
            terminated_by=traj.terminated_by,
            reached_equilibrium=traj.terminated_by == Termination.EQUILIBRIUM,
            t_final=float(traj.times[-1]),
            roles=tuple(roles),
            tail_roles=tail_roles,
            li_on_tail=li_on_tail(tail_roles),
            x_total=float(np.sum(final.x)),
            r_total=float(np.sum(final.r)),
            x_max=float(np.max(final.x)),
            r_max=float(np.max(final.r)),
            residual=float(max(np.max(np.abs(xdot)), np.max(np.abs(rdot)))),
        ))

    li_count = sum(1 for rec in records if rec.li_on_tail)
    eq_records = [rec for rec in records if rec.reached_equilibrium]
    eq_li = sum(1 for rec in eq_records if rec.li_on_tail)
    return ExperimentReport(
        config=config,
        records=tuple(records),
        fraction_li_on_tail=li_count / len(records),
        runs_at_equilibrium=len(eq_records),
        fraction_li_at_equilibrium=eq_li / len(eq_records) if eq_records else None,
    )


@dataclass(frozen=True)
class SweepPoint:
    x1: float
    lambda1_formula: float
    lambda1_matched: complex
    classification: StabilityClass
    zero_eig_count: int


@dataclass(frozen=True)
class SweepResult:
    """Per-point stability along a star family plus the threshold estimates.

    threshold_formula = alpha (b/c) N_r is where lambda1 changes sign;
    threshold_empirical interpolates the sign change of the matched
    Jacobian eigenvalue between adjacent grid points (None if the grid
    does not straddle it).
    """

    n: int
    points: tuple[SweepPoint, ...]
    threshold_formula: float
    threshold_empirical: float | None


def sweep_x1(params: ModelParams, n: int, grid) -> SweepResult:
    """Stability classification of star-family points along an x1 grid."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1:
        raise ValueError("grid must be a non-empty vector of x1 values")
    matrices = build_matrices(catalog("star", n), params)
    n_r = float(np.sum(params.f[1:] / params.p))
    threshold_formula = params.alpha * (params.b / params.c) * n_r

    points = []
    for x1 in grid:
        point = star_family(params, n, float(x1))
        eigs = eigenvalues(jacobian_analytic(point.state, params, matrices))
        report = classify_stability(eigs)
        points.append(SweepPoint(
            x1=float(x1),
            lambda1_formula=point.lambda1,
            lambda1_matched=match_eigenvalue(eigs, complex(point.lambda1)),
            classification=report.classification,
            zero_eig_count=report.zero_eig_count,
        ))

    threshold_empirical = None
    for prev, cur in zip(points, points[1:]):
        a, b_ = prev.lambda1_matched.real, cur.lambda1_matched.real
        if a < 0.0 <= b_:
            threshold_empirical = prev.x1 + (cur.x1 - prev.x1) * (-a) / (b_ - a)
            break
    return SweepResult(
        n=n,
        points=tuple(points),
        threshold_formula=threshold_formula,
        threshold_empirical=threshold_empirical,
    )
