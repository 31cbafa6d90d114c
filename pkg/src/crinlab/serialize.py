"""Bit-exact serialization for networks, parameters, reports and trajectories.

All floats are written with 17 significant digits (%.17g), which round-trips
every double exactly, so regenerating a report from the same inputs is
byte-identical.  JSON is emitted compactly (no whitespace) with keys in
construction order.
"""

from __future__ import annotations

import json
import math
from enum import Enum
from typing import Any

import numpy as np

from .dynamics import Trajectory
from .experiments import ExperimentReport, SweepResult
from .fixedpoints import StarFamilyPoint, SymmetricFixedPoint
from .network import CrnGraph, ModelParams
from .stability import StabilityReport


class ValidationError(ValueError):
    """Malformed input file or schema violation."""


def format_float(value: float) -> str:
    if not math.isfinite(value):
        raise ValueError(f"cannot serialize non-finite value {value!r}")
    return f"{value:.17g}"


def dumps(obj: Any) -> str:
    """Compact JSON with deterministic float formatting."""
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, Enum):
        return dumps(obj.value)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(float(obj))
    if isinstance(obj, (complex, np.complexfloating)):
        raise TypeError("serialize complex values as {re, im} dicts explicitly")
    if isinstance(obj, dict):
        items = ",".join(f"{json.dumps(str(k))}:{dumps(v)}" for k, v in obj.items())
        return "{" + items + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ",".join(dumps(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize object of type {type(obj).__name__}")


# ---------------------------------------------------------------------------
# Dict builders (JSON-ready, deterministic key order)
# ---------------------------------------------------------------------------

def network_dict(graph: CrnGraph) -> dict:
    return {"n": graph.n, "edges": [[i, j] for i, j in graph.edges]}


def params_dict(params: ModelParams) -> dict:
    return {
        "f": [float(v) for v in params.f],
        "p": params.p,
        "c": params.c,
        "b": params.b,
        "alpha": params.alpha,
        "beta": params.beta,
    }


def _complex_dict(value: complex) -> dict:
    return {"re": value.real, "im": value.imag}


def state_dict(state) -> dict:
    return {"x": [float(v) for v in state.x], "r": [float(v) for v in state.r]}


def symmetric_point_dict(point: SymmetricFixedPoint, params: ModelParams) -> dict:
    return {
        "topology": "symmetric3",
        "params": params_dict(params),
        "state": state_dict(point.state) if point.state is not None else None,
        "lambda1": point.lambda1,
        "lambda2": point.lambda2,
        "feasible": point.feasible,
        "violated": list(point.violated),
        "swapped": point.swapped,
        "residual": point.residual,
    }


def star_point_dict(point: StarFamilyPoint, params: ModelParams, topology: str) -> dict:
    return {
        "topology": topology,
        "params": params_dict(params),
        "state": state_dict(point.state),
        "x1": point.x1,
        "N_r": point.N_r,
        "lambda1": point.lambda1,
        "branch": point.branch,
        "feasible": True,
        "residual": point.residual,
    }


def stability_report_dict(report: StabilityReport) -> dict:
    return {
        "eigenvalues": [_complex_dict(e) for e in report.eigenvalues],
        "classification": report.classification,
        "zero_eig_count": report.zero_eig_count,
        "max_real_part": report.max_real_part,
        "factorization_residual": report.factorization_residual,
    }


def experiment_report_dict(report: ExperimentReport) -> dict:
    cfg = report.config
    return {
        "config": {
            "seed": cfg.seed,
            "runs": cfg.runs,
            "ball_size": cfg.ball_size,
            "edge_prob": cfg.edge_prob,
            "tail": cfg.tail,
            "scheme": cfg.scheme,
            "dt": cfg.dt,
            "max_steps": cfg.max_steps,
            "eq_tol": cfg.eq_tol,
            "extinction": cfg.extinction,
            "sample_stride": cfg.sample_stride,
            "special_index": cfg.resolved_special_index,
        },
        "runs": [
            {
                "run_index": rec.run_index,
                "run_seed": rec.run_seed,
                "terminated_by": rec.terminated_by,
                "reached_equilibrium": rec.reached_equilibrium,
                "t_final": rec.t_final,
                "tail_roles": [role for role in rec.tail_roles],
                "roles": [role for role in rec.roles],
                "li_on_tail": rec.li_on_tail,
                "x_total": rec.x_total,
                "r_total": rec.r_total,
                "x_max": rec.x_max,
                "r_max": rec.r_max,
                "residual": rec.residual,
            }
            for rec in report.records
        ],
        "fraction_li_on_tail": report.fraction_li_on_tail,
        "runs_at_equilibrium": report.runs_at_equilibrium,
        "fraction_li_at_equilibrium": report.fraction_li_at_equilibrium,
    }


def sweep_result_dict(result: SweepResult) -> dict:
    return {
        "n": result.n,
        "threshold_formula": result.threshold_formula,
        "threshold_empirical": result.threshold_empirical,
        "points": [
            {
                "x1": pt.x1,
                "lambda1_formula": pt.lambda1_formula,
                "lambda1_matched": _complex_dict(pt.lambda1_matched),
                "classification": pt.classification,
                "zero_eig_count": pt.zero_eig_count,
            }
            for pt in result.points
        ],
    }


# ---------------------------------------------------------------------------
# Parsers
# ---------------------------------------------------------------------------

def network_from_dict(data: dict) -> CrnGraph:
    try:
        n = int(data["n"])
        edges = tuple((int(i), int(j)) for i, j in data["edges"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"network JSON must be {{n, edges}}: {exc}") from exc
    return CrnGraph(n, edges)


def params_from_dict(data: dict) -> ModelParams:
    """Parse {f, p, c, b, alpha, beta? | k?}; beta defaults to alpha**k (k=2)."""
    if not isinstance(data, dict):
        raise ValidationError("params JSON must be an object")
    unknown = set(data) - {"f", "p", "c", "b", "alpha", "beta", "k"}
    if unknown:
        raise ValidationError(f"unknown params keys: {sorted(unknown)}")
    try:
        f = [float(v) for v in data["f"]]
        p = float(data["p"])
        c = float(data["c"])
        b = float(data["b"])
        alpha = float(data["alpha"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"params JSON must carry f, p, c, b, alpha: {exc}") from exc
    try:
        if "beta" in data:
            return ModelParams(f=np.asarray(f), p=p, c=c, b=b, alpha=alpha,
                               beta=float(data["beta"]))
        return ModelParams.from_exponent(f, p=p, c=c, b=b, alpha=alpha,
                                         k=int(data.get("k", 2)))
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc


def load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read JSON file {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def trajectory_csv_lines(traj: Trajectory):
    """Header then one row per sample: t, x_0.., r_0.., full double precision."""
    n = traj.n
    header = ",".join(["t"] + [f"x_{i}" for i in range(n)] + [f"r_{i}" for i in range(n)])
    yield header
    for t, x_row, r_row in zip(traj.times, traj.x, traj.r):
        values = [t, *x_row, *r_row]
        yield ",".join(format_float(float(v)) for v in values)


def sweep_csv_lines(result: SweepResult):
    yield "x1,lambda1_formula,lambda1_matched_re,lambda1_matched_im,classification,zero_eig_count"
    for pt in result.points:
        yield ",".join([
            format_float(pt.x1),
            format_float(pt.lambda1_formula),
            format_float(pt.lambda1_matched.real),
            format_float(pt.lambda1_matched.imag),
            pt.classification.value,
            str(pt.zero_eig_count),
        ])
