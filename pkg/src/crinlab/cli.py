"""Command-line interface.

Subcommands emit JSON reports (compact, 17-significant-digit floats) or CSV
time series to stdout, or to --out when given.  Exit codes: 0 success,
1 validation error, 2 numerical failure.  Errors are single-line JSON on
stderr.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from . import serialize
from .dynamics import SystemState, Termination, integrate
from .experiments import ExperimentConfig, run_dandelion, sample_params, sweep_x1
from .fixedpoints import (
    FamilyConstraintError,
    InfeasibleParamsError,
    constrained_f1,
    star_family,
    symmetric_fixed_point,
    two_node_family,
)
from .network import ModelParams, NetworkError, build_matrices, catalog
from .serialize import ValidationError
from .stability import (
    EigensolverError,
    classify_stability,
    eigenvalues,
    jacobian_analytic,
    symmetric_factors,
    three_node_star_factors,
    two_node_factors,
    verify_factorization,
)

SEED_ENV_VAR = "CRINLAB_SEED"


def _emit(text: str, out_path: str | None) -> None:
    if out_path is None:
        print(text)
    else:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def _fail(kind: str, message: str, code: int) -> int:
    print(serialize.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def _parse_grid(grid_arg: str, count_hint: str = "lo:hi:steps") -> np.ndarray:
    try:
        lo_s, hi_s, steps_s = grid_arg.split(":")
        lo, hi, steps = float(lo_s), float(hi_s), int(steps_s)
    except ValueError as exc:
        raise ValidationError(f"grid must be {count_hint}, got {grid_arg!r}") from exc
    if steps < 1 or not hi > lo:
        raise ValidationError(f"grid needs hi > lo and steps >= 1, got {grid_arg!r}")
    # steps interior points of (lo, hi): endpoints are excluded because the
    # family exists only on the open segment.
    k = np.arange(1, steps + 1)
    return lo + (hi - lo) * k / (steps + 1)


def _load_params(path: str, solve_f1: bool) -> ModelParams:
    data = serialize.load_json(path)
    if solve_f1:
        if not isinstance(data, dict) or "f" not in data or "alpha" not in data:
            raise ValidationError("--solve-f1 needs a params object with f and alpha")
        beta = float(data["beta"]) if "beta" in data else float(data["alpha"]) ** int(data.get("k", 2))
        f = [float(v) for v in data["f"]]
        f[0] = constrained_f1(f[1:], beta)
        data = dict(data, f=f)
    return serialize.params_from_dict(data)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_catalog(args) -> int:
    graph = catalog(args.name, n=args.n)
    _emit(serialize.dumps(serialize.network_dict(graph)), args.out)
    return 0


def _cmd_simulate(args) -> int:
    graph = serialize.network_from_dict(serialize.load_json(args.net))
    if args.params is not None:
        params = _load_params(args.params, solve_f1=False)
        if args.x0 is None:
            raise ValidationError("simulate with --params also needs --x0 <state json>")
        state_data = serialize.load_json(args.x0)
        try:
            state0 = SystemState(np.asarray(state_data["x"], dtype=float),
                                 np.asarray(state_data["r"], dtype=float))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"state JSON must be {{x:[], r:[]}}: {exc}") from exc
    else:
        if args.seed is None:
            raise ValidationError("simulate needs --params or --seed")
        params, state0 = sample_params(args.seed, graph.n)
    matrices = build_matrices(graph, params)
    traj = integrate(
        state0, params, matrices,
        scheme=args.scheme, dt=args.dt, max_steps=args.steps,
        eq_tol=args.eq_tol,
        extinction_threshold="initial" if args.extinction else None,
        sample_stride=args.stride,
    )
    _emit("\n".join(serialize.trajectory_csv_lines(traj)), args.out)
    if traj.terminated_by == Termination.DIVERGENCE:
        return _fail("numerical", f"trajectory diverged at t={traj.times[-1]!r}", 2)
    return 0


def _fixed_point_report(args) -> dict:
    params = _load_params(args.params, args.solve_f1)
    if args.topology == "symmetric3":
        point = symmetric_fixed_point(params, swap_roles=args.swap_roles)
        return serialize.symmetric_point_dict(point, params)
    if args.topology in ("two_node", "star"):
        if args.x1 is None:
            raise ValidationError(f"{args.topology} family needs --x1")
        if args.topology == "two_node":
            point = two_node_family(params, args.x1)
            return serialize.star_point_dict(point, params, "two_node")
        if args.n is None:
            raise ValidationError("star family needs --n")
        point = star_family(params, args.n, args.x1)
        return serialize.star_point_dict(point, params, "star")
    raise ValidationError(
        f"no closed-form fixed point family for topology {args.topology!r}"
    )


def _cmd_fixed_point(args) -> int:
    _emit(serialize.dumps(_fixed_point_report(args)), args.out)
    return 0


def _cmd_stability(args) -> int:
    params = _load_params(args.params, args.solve_f1)
    factors = None
    if args.topology == "symmetric3":
        point = symmetric_fixed_point(params, swap_roles=args.swap_roles)
        if point.state is None:
            raise ValidationError(
                f"fixed point leaves the positive orthant; violated: {point.violated}"
            )
        state = point.state
        graph = catalog("symmetric3")
        if args.verify_factorization:
            factors = symmetric_factors(params)
    elif args.topology in ("two_node", "star"):
        if args.x1 is None:
            raise ValidationError(f"{args.topology} family needs --x1")
        n = 2 if args.topology == "two_node" else args.n
        if n is None:
            raise ValidationError("star family needs --n")
        point = star_family(params, n, args.x1)
        state = point.state
        graph = catalog("star", n)
        if args.verify_factorization:
            if n == 2:
                factors = two_node_factors(params, args.x1)
            elif n == 3:
                factors = three_node_star_factors(params, args.x1)
            else:
                raise ValidationError(
                    "closed-form factorization is available for star sizes 2 and 3 only"
                )
    else:
        raise ValidationError(
            f"no closed-form fixed point for topology {args.topology!r}"
        )

    matrices = build_matrices(graph, params)
    jac = jacobian_analytic(state, params, matrices)
    report = classify_stability(eigenvalues(jac))
    if factors is not None:
        report = replace(report, factorization_residual=verify_factorization(jac, factors))
    _emit(serialize.dumps(serialize.stability_report_dict(report)), args.out)
    return 0


def _cmd_sweep(args) -> int:
    if args.topology != "star":
        raise ValidationError("sweep supports --topology star only")
    params = _load_params(args.params, args.solve_f1)
    grid = _parse_grid(args.grid)
    result = sweep_x1(params, args.n, grid)
    if args.csv is not None:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("\n".join(serialize.sweep_csv_lines(result)) + "\n")
    _emit(serialize.dumps(serialize.sweep_result_dict(result)), args.out)
    return 0


def _cmd_experiment(args) -> int:
    seed = args.seed
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError as exc:
            raise ValidationError(f"{SEED_ENV_VAR} must be an integer: {env_seed!r}") from exc
    if seed is None:
        raise ValidationError(f"experiment needs --seed or {SEED_ENV_VAR}")
    config = ExperimentConfig(
        seed=seed,
        runs=args.runs,
        ball_size=args.ball_size,
        edge_prob=args.edge_prob,
        tail=args.tail,
        scheme=args.scheme,
        dt=args.dt,
        max_steps=args.max_steps,
        eq_tol=args.eq_tol,
        extinction=args.extinction,
        sample_stride=args.stride,
        special_index=args.special_index,
    )
    sink = None
    if args.dump_trajectories is not None:
        os.makedirs(args.dump_trajectories, exist_ok=True)

        def sink(run_index, traj):
            path = os.path.join(args.dump_trajectories, f"run_{run_index}.csv")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write("\n".join(serialize.trajectory_csv_lines(traj)) + "\n")

    report = run_dandelion(config, trajectory_sink=sink)
    _emit(serialize.dumps(serialize.experiment_report_dict(report)), args.out)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crinlab",
        description="Cross-immunoreactivity network laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_cat = sub.add_parser("catalog", help="emit a named topology as network JSON")
    p_cat.add_argument("name")
    p_cat.add_argument("--n", type=int, default=None, help="node count (star only)")
    p_cat.add_argument("--out", default=None)
    p_cat.set_defaults(func=_cmd_catalog)

    p_sim = sub.add_parser("simulate", help="integrate the model, emit trajectory CSV")
    p_sim.add_argument("--net", required=True, help="network JSON file")
    p_sim.add_argument("--params", default=None, help="params JSON file")
    p_sim.add_argument("--x0", default=None, help="initial state JSON file {x:[],r:[]}")
    p_sim.add_argument("--seed", type=int, default=None,
                       help="sample params and initial state instead of files")
    p_sim.add_argument("--scheme", choices=("euler", "rk4"), default="euler")
    p_sim.add_argument("--dt", type=float, default=1e-3)
    p_sim.add_argument("--steps", type=int, default=2_000_000)
    p_sim.add_argument("--eq-tol", type=float, default=1e-9)
    p_sim.add_argument("--stride", type=int, default=1000)
    p_sim.add_argument("--extinction", action="store_true",
                       help="zero a virus permanently once below its initial concentration")
    p_sim.add_argument("--out", default=None)
    p_sim.set_defaults(func=_cmd_simulate)

    p_fp = sub.add_parser("fixed-point", help="closed-form fixed point report JSON")
    p_fp.add_argument("--topology", required=True)
    p_fp.add_argument("--params", required=True)
    p_fp.add_argument("--x1", type=float, default=None)
    p_fp.add_argument("--n", type=int, default=None)
    p_fp.add_argument("--swap-roles", action="store_true",
                      help="symmetric3: swap persistent and neutral roles")
    p_fp.add_argument("--solve-f1", action="store_true",
                      help="replace f1 with beta*sum(f_2..f_n) before solving")
    p_fp.add_argument("--out", default=None)
    p_fp.set_defaults(func=_cmd_fixed_point)

    p_st = sub.add_parser("stability", help="Jacobian stability report JSON")
    p_st.add_argument("--topology", required=True)
    p_st.add_argument("--params", required=True)
    p_st.add_argument("--x1", type=float, default=None)
    p_st.add_argument("--n", type=int, default=None)
    p_st.add_argument("--swap-roles", action="store_true")
    p_st.add_argument("--solve-f1", action="store_true")
    p_st.add_argument("--verify-factorization", action="store_true",
                      help="check det(lambda I - J) against the closed-form factors")
    p_st.add_argument("--out", default=None)
    p_st.set_defaults(func=_cmd_stability)

    p_sw = sub.add_parser("sweep", help="stability along a star family x1 grid")
    p_sw.add_argument("--topology", required=True)
    p_sw.add_argument("--n", type=int, required=True)
    p_sw.add_argument("--params", required=True)
    p_sw.add_argument("--grid", required=True,
                      help="lo:hi:steps; steps interior points of (lo, hi)")
    p_sw.add_argument("--solve-f1", action="store_true")
    p_sw.add_argument("--csv", default=None, help="write per-point CSV here")
    p_sw.add_argument("--out", default=None)
    p_sw.set_defaults(func=_cmd_sweep)

    p_ex = sub.add_parser("experiment", help="random dandelion batch, report JSON")
    p_ex.add_argument("--seed", type=int, default=None,
                      help=f"master seed (overridden by ${SEED_ENV_VAR})")
    p_ex.add_argument("--runs", type=int, default=20)
    p_ex.add_argument("--tail", choices=("branch_cycle3", "symmetric3"),
                      default="branch_cycle3")
    p_ex.add_argument("--ball-size", type=int, default=98)
    p_ex.add_argument("--edge-prob", type=float, default=0.5)
    p_ex.add_argument("--scheme", choices=("euler", "rk4"), default="euler")
    p_ex.add_argument("--dt", type=float, default=1e-3)
    p_ex.add_argument("--max-steps", type=int, default=2_000_000)
    p_ex.add_argument("--eq-tol", type=float, default=1e-9)
    p_ex.add_argument("--stride", type=int, default=1000)
    p_ex.add_argument("--extinction", action=argparse.BooleanOptionalAction, default=True,
                      help="eliminate a virus once it falls below its initial concentration")
    p_ex.add_argument("--special-index", type=int, default=None,
                      help="node with replication rate from U(1,2); default: tail attachment node")
    p_ex.add_argument("--dump-trajectories", default=None, metavar="DIR",
                      help="write run_<k>.csv trajectory files here (large)")
    p_ex.add_argument("--out", default=None)
    p_ex.set_defaults(func=_cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, NetworkError, FamilyConstraintError,
            InfeasibleParamsError, ValueError) as exc:
        return _fail("validation", str(exc), 1)
    except (EigensolverError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return _fail("numerical", str(exc), 2)


if __name__ == "__main__":
    sys.exit(main())
