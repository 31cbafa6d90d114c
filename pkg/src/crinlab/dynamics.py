"""Evolution dynamics of virus/antibody populations on a CR network.

The state couples n virus concentrations x to n antibody concentrations r:

    dx_i/dt = f_i x_i - p x_i sum_j u_ji r_j
    dr_i/dt = c sum_j x_j g_ji - b r_i,   g_ji = v_ji r_i / sum_k v_jk r_k

g_ji is the probability that variant j stimulates response i; each row of g
sums to 1, encoding preferential stimulation of preexisting cross-reactive
responses.  Rows whose denominator falls to zero (no stimulable antibody
mass) contribute no stimulation at all; see DENOM_FLOOR.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .network import ImmuneMatrices, ModelParams

# Stimulation denominators at or below this floor are treated as zero rows.
DENOM_FLOOR = 1e-15
# Any component beyond this magnitude terminates integration as divergent.
OVERFLOW_GUARD = 1e12
# Integration flushes components below the smallest normal double to zero:
# exponential decay otherwise parks them on subnormals, which stalls the
# decay and slows the arithmetic by an order of magnitude.
FLUSH_FLOOR = float(np.finfo(float).tiny)

DEFAULT_DT = 1e-3
DEFAULT_MAX_STEPS = 2_000_000
DEFAULT_EQ_TOL = 1e-9
DEFAULT_SAMPLE_STRIDE = 1000


class NodeRole(str, Enum):
    PERSISTENT = "persistent"   # high virus, no immune response
    ALTRUISTIC = "altruistic"   # no virus, high immune response
    NEUTRAL = "neutral"         # both positive
    EXTINCT = "extinct"         # both gone


class Termination(str, Enum):
    MAX_STEPS = "max_steps"
    EQUILIBRIUM = "equilibrium"
    DIVERGENCE = "divergence"


@dataclass(frozen=True)
class SystemState:
    """Virus concentrations x and antibody concentrations r at one instant."""

    x: np.ndarray
    r: np.ndarray

    def __post_init__(self) -> None:
        x = np.array(self.x, dtype=float)
        r = np.array(self.r, dtype=float)
        if x.ndim != 1 or r.ndim != 1 or x.size != r.size:
            raise ValueError("x and r must be vectors of equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(r))):
            raise ValueError("state contains non-finite entries")
        if np.any(x < 0.0) or np.any(r < 0.0):
            raise ValueError("concentrations must be non-negative")
        x.flags.writeable = False
        r.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "r", r)

    @property
    def n(self) -> int:
        return self.x.size


@dataclass(frozen=True)
class StimulationMatrix:
    """Row-stochastic stimulation probabilities; guarded rows are all-zero."""

    g: np.ndarray
    guarded: np.ndarray  # boolean per row j: denominator at or below floor


@dataclass(frozen=True)
class Trajectory:
    """Sampled integration output.  times[k] pairs with (x[k], r[k])."""

    times: np.ndarray
    x: np.ndarray
    r: np.ndarray
    terminated_by: Termination

    @property
    def final_state(self) -> SystemState:
        return SystemState(self.x[-1], self.r[-1])

    @property
    def n(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class ClassificationThresholds:
    """Relative bands for node-role classification.

    lo/hi cutoffs are fractions of the population maximum of the respective
    vector; the maximum itself is floored at abs_floor so all-zero vectors
    classify as extinct.
    """

    lo_rel: float = 1e-4
    hi_rel: float = 1e-2
    abs_floor: float = 1e-8


def _stimulation_terms(
    x: np.ndarray, r: np.ndarray, v: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-variant stimulation weights w_j = x_j / s_j with guarded rows zeroed."""
    s = v @ r
    guarded = s <= DENOM_FLOOR
    w = np.where(guarded, 0.0, x) / np.where(guarded, 1.0, s)
    return w, guarded


def _rhs_arrays(
    x: np.ndarray,
    r: np.ndarray,
    f: np.ndarray,
    p: float,
    c: float,
    b: float,
    u_t: np.ndarray,
    v: np.ndarray,
    v_t: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    # dr_i = c r_i sum_j v_ji x_j / s_j - b r_i, with zero-row guard folded into w.
    w, _ = _stimulation_terms(x, r, v)
    xdot = x * (f - p * (u_t @ r))
    rdot = c * r * (v_t @ w) - b * r
    return xdot, rdot


# Compiled stepping kernel.  It mirrors _python_loop operation for
# operation; integrate() falls back to the Python loop when numba is absent.
_KERNEL_ENABLED = True
try:
    from numba import njit as _njit

    @_njit(cache=True)
    def _kernel(x, r, f, p, c, b, u_t, v, v_t, dt, max_steps, eq_tol, use_rk4,
                has_threshold, threshold, stride, times_buf, xs_buf, rs_buf):
        n = x.size
        extinct = np.zeros(n, dtype=np.bool_)
        times_buf[0] = 0.0
        xs_buf[0] = x
        rs_buf[0] = r
        nsamp = 1
        term_code = 0
        step = 0
        last_sampled = 0

        while step < max_steps:
            s = np.dot(v, r)
            w = np.empty(n)
            for j in range(n):
                w[j] = 0.0 if s[j] <= DENOM_FLOOR else x[j] / s[j]
            xdot = x * (f - p * np.dot(u_t, r))
            rdot = c * r * np.dot(v_t, w) - b * r

            sup = 0.0
            for i in range(n):
                ax = abs(xdot[i])
                ar = abs(rdot[i])
                if ax > sup:
                    sup = ax
                if ar > sup:
                    sup = ar
            if sup < eq_tol:
                term_code = 1
                break

            if not use_rk4:
                x = x + dt * xdot
                r = r + dt * rdot
            else:
                half = 0.5 * dt
                x2 = x + half * xdot
                r2 = r + half * rdot
                s = np.dot(v, r2)
                for j in range(n):
                    w[j] = 0.0 if s[j] <= DENOM_FLOOR else x2[j] / s[j]
                k2x = x2 * (f - p * np.dot(u_t, r2))
                k2r = c * r2 * np.dot(v_t, w) - b * r2
                x3 = x + half * k2x
                r3 = r + half * k2r
                s = np.dot(v, r3)
                for j in range(n):
                    w[j] = 0.0 if s[j] <= DENOM_FLOOR else x3[j] / s[j]
                k3x = x3 * (f - p * np.dot(u_t, r3))
                k3r = c * r3 * np.dot(v_t, w) - b * r3
                x4 = x + dt * k3x
                r4 = r + dt * k3r
                s = np.dot(v, r4)
                for j in range(n):
                    w[j] = 0.0 if s[j] <= DENOM_FLOOR else x4[j] / s[j]
                k4x = x4 * (f - p * np.dot(u_t, r4))
                k4r = c * r4 * np.dot(v_t, w) - b * r4
                sixth = dt / 6.0
                x = x + sixth * (xdot + 2.0 * (k2x + k3x) + k4x)
                r = r + sixth * (rdot + 2.0 * (k2r + k3r) + k4r)

            for i in range(n):
                if x[i] < 0.0:
                    x[i] = 0.0
                if r[i] < 0.0:
                    r[i] = 0.0
                if x[i] < FLUSH_FLOOR:
                    x[i] = 0.0
                if r[i] < FLUSH_FLOOR:
                    r[i] = 0.0
            if has_threshold:
                for i in range(n):
                    if x[i] < threshold[i]:
                        extinct[i] = True
                    if extinct[i]:
                        x[i] = 0.0
            step += 1

            peak = 0.0
            for i in range(n):
                if x[i] > peak:
                    peak = x[i]
                if r[i] > peak:
                    peak = r[i]
            diverged = peak > OVERFLOW_GUARD
            if step % stride == 0 or diverged:
                times_buf[nsamp] = step * dt
                xs_buf[nsamp] = x
                rs_buf[nsamp] = r
                nsamp += 1
                last_sampled = step
            if diverged:
                term_code = 2
                break

        if step != last_sampled:
            times_buf[nsamp] = step * dt
            xs_buf[nsamp] = x
            rs_buf[nsamp] = r
            nsamp += 1
        return nsamp, term_code

except ImportError:  # pragma: no cover - numba is a declared dependency
    _kernel = None


def rhs(
    state: SystemState, params: ModelParams, matrices: ImmuneMatrices
) -> tuple[np.ndarray, np.ndarray]:
    """Time derivative (dx, dr) of the population model at the given state."""
    if state.n != matrices.n or params.n != matrices.n:
        raise ValueError(
            f"dimension mismatch: state n={state.n}, params n={params.n}, "
            f"matrices n={matrices.n}"
        )
    return _rhs_arrays(
        state.x, state.r, params.f, params.p, params.c, params.b,
        matrices.U.T, matrices.V, matrices.V.T,
    )


def stimulation_probabilities(
    state: SystemState, matrices: ImmuneMatrices
) -> StimulationMatrix:
    """Matrix g with g[j, i] = v_ji r_i / sum_k v_jk r_k; guarded rows all-zero."""
    if state.n != matrices.n:
        raise ValueError(f"state has n={state.n}, matrices n={matrices.n}")
    v = matrices.V
    s = v @ state.r
    guarded = s <= DENOM_FLOOR
    denom = np.where(guarded, 1.0, s)
    g = (v * state.r[None, :]) / denom[:, None]
    g[guarded, :] = 0.0
    g.flags.writeable = False
    return StimulationMatrix(g=g, guarded=guarded)


def integrate(
    state0: SystemState,
    params: ModelParams,
    matrices: ImmuneMatrices,
    scheme: str = "euler",
    dt: float = DEFAULT_DT,
    max_steps: int = DEFAULT_MAX_STEPS,
    eq_tol: float = DEFAULT_EQ_TOL,
    extinction_threshold: float | np.ndarray | str | None = None,
    sample_stride: int = DEFAULT_SAMPLE_STRIDE,
) -> Trajectory:
    """Fixed-step integration with forward Euler or classic RK4.

    Components that would step negative are clamped to 0.  When
    extinction_threshold is set, any virus concentration falling below its
    threshold is zeroed permanently; pass "initial" to use each virus's
    starting concentration as its own threshold.  Integration stops early
    once the sup norm of the derivative drops below eq_tol (equilibrium) or
    any component exceeds OVERFLOW_GUARD (divergence).
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if max_steps < 1:
        raise ValueError(f"max_steps must be >= 1, got {max_steps}")
    if sample_stride < 1:
        raise ValueError(f"sample_stride must be >= 1, got {sample_stride}")
    if scheme not in ("euler", "rk4"):
        raise ValueError(f"scheme must be 'euler' or 'rk4', got {scheme!r}")
    if state0.n != matrices.n or params.n != matrices.n:
        raise ValueError("dimension mismatch between state, params and matrices")

    x = state0.x.copy()
    r = state0.r.copy()
    threshold: np.ndarray | None
    if extinction_threshold is None:
        threshold = None
    elif isinstance(extinction_threshold, str):
        if extinction_threshold != "initial":
            raise ValueError(
                f"extinction_threshold string must be 'initial', got {extinction_threshold!r}"
            )
        threshold = x.copy()
    else:
        threshold = np.broadcast_to(
            np.asarray(extinction_threshold, dtype=float), x.shape
        ).copy()
        if np.any(threshold < 0.0) or not np.all(np.isfinite(threshold)):
            raise ValueError("extinction thresholds must be finite and non-negative")

    f, p, c, b = params.f, params.p, params.c, params.b
    u_t = np.ascontiguousarray(matrices.U.T)
    v = np.ascontiguousarray(matrices.V)
    v_t = np.ascontiguousarray(v.T)

    loop = _numba_loop if (_KERNEL_ENABLED and _kernel is not None) else _python_loop
    times, xs, rs, term_code = loop(
        x, r, f, p, c, b, u_t, v, v_t, dt, int(max_steps), eq_tol,
        scheme == "rk4", threshold, int(sample_stride),
    )
    return Trajectory(
        times=times, x=xs, r=rs,
        terminated_by=(Termination.MAX_STEPS, Termination.EQUILIBRIUM,
                       Termination.DIVERGENCE)[term_code],
    )


def _python_loop(x, r, f, p, c, b, u_t, v, v_t, dt, max_steps, eq_tol,
                 use_rk4, threshold, stride):
    """Reference stepping loop; the compiled kernel mirrors it exactly."""
    extinct = np.zeros(x.size, dtype=bool)
    times = [0.0]
    xs = [x.copy()]
    rs = [r.copy()]
    term_code = 0
    step = 0
    last_sampled = 0

    while step < max_steps:
        xdot, rdot = _rhs_arrays(x, r, f, p, c, b, u_t, v, v_t)
        if max(np.max(np.abs(xdot)), np.max(np.abs(rdot))) < eq_tol:
            term_code = 1
            break
        if not use_rk4:
            x = x + dt * xdot
            r = r + dt * rdot
        else:
            half = 0.5 * dt
            k2x, k2r = _rhs_arrays(x + half * xdot, r + half * rdot, f, p, c, b, u_t, v, v_t)
            k3x, k3r = _rhs_arrays(x + half * k2x, r + half * k2r, f, p, c, b, u_t, v, v_t)
            k4x, k4r = _rhs_arrays(x + dt * k3x, r + dt * k3r, f, p, c, b, u_t, v, v_t)
            sixth = dt / 6.0
            x = x + sixth * (xdot + 2.0 * (k2x + k3x) + k4x)
            r = r + sixth * (rdot + 2.0 * (k2r + k3r) + k4r)
        np.maximum(x, 0.0, out=x)
        np.maximum(r, 0.0, out=r)
        x[x < FLUSH_FLOOR] = 0.0
        r[r < FLUSH_FLOOR] = 0.0
        if threshold is not None:
            extinct |= x < threshold
            x[extinct] = 0.0
        step += 1
        diverged = max(np.max(x), np.max(r)) > OVERFLOW_GUARD
        if step % stride == 0 or diverged:
            times.append(step * dt)
            xs.append(x.copy())
            rs.append(r.copy())
            last_sampled = step
        if diverged:
            term_code = 2
            break

    if step != last_sampled:
        times.append(step * dt)
        xs.append(x.copy())
        rs.append(r.copy())
    return np.asarray(times), np.asarray(xs), np.asarray(rs), term_code


def _numba_loop(x, r, f, p, c, b, u_t, v, v_t, dt, max_steps, eq_tol,
                use_rk4, threshold, stride):
    capacity = max_steps // stride + 2
    n = x.size
    times_buf = np.empty(capacity)
    xs_buf = np.empty((capacity, n))
    rs_buf = np.empty((capacity, n))
    has_threshold = threshold is not None
    thr = threshold if has_threshold else np.empty(0)
    nsamp, term_code = _kernel(
        x, r, f, p, c, b, u_t, v, v_t, dt, max_steps, eq_tol, use_rk4,
        has_threshold, thr, stride, times_buf, xs_buf, rs_buf,
    )
    return (times_buf[:nsamp].copy(), xs_buf[:nsamp].copy(),
            rs_buf[:nsamp].copy(), term_code)


def classify_nodes(
    state: SystemState,
    thresholds: ClassificationThresholds = ClassificationThresholds(),
) -> list[NodeRole]:
    """Assign a role to every node from its equilibrium concentrations.

    Bands are relative to the population maxima so that exact-zero fixed
    points and slightly perturbed integrated states classify alike.
    """
    x_scale = max(float(np.max(state.x)), thresholds.abs_floor)
    r_scale = max(float(np.max(state.r)), thresholds.abs_floor)
    x_lo, x_hi = thresholds.lo_rel * x_scale, thresholds.hi_rel * x_scale
    r_lo, r_hi = thresholds.lo_rel * r_scale, thresholds.hi_rel * r_scale

    roles = []
    for xi, ri in zip(state.x, state.r):
        if xi >= x_hi and ri <= r_lo:
            roles.append(NodeRole.PERSISTENT)
        elif xi <= x_lo and ri >= r_hi:
            roles.append(NodeRole.ALTRUISTIC)
        elif xi <= x_lo and ri <= r_lo:
            roles.append(NodeRole.EXTINCT)
        else:
            roles.append(NodeRole.NEUTRAL)
    return roles
