from __future__ import annotations

import numpy as np
import pytest

from crinlab.dynamics import (
    ClassificationThresholds,
    NodeRole,
    SystemState,
    Termination,
    classify_nodes,
    integrate,
    rhs,
    stimulation_probabilities,
)
from crinlab.fixedpoints import star_family, symmetric_fixed_point
from crinlab.network import CrnGraph, ModelParams, build_matrices, catalog, random_dandelion

SET1 = ModelParams(f=np.array([2.0, 3.0, 3.0]), p=2.0, c=1.0, b=3.0, alpha=2 / 3, beta=4 / 9)


def _single_node_setup():
    g = CrnGraph(1, ())
    params = ModelParams(f=np.array([1.0]), p=1.0, c=1.0, b=1.0, alpha=0.5, beta=0.25)
    return g, params, build_matrices(g, params)


def _random_state(rng, n, lo=0.1, hi=2.0):
    return SystemState(rng.uniform(lo, hi, n), rng.uniform(lo, hi, n))


# ---------------------------------------------------------------------------
# rhs
# ---------------------------------------------------------------------------

def test_single_node_no_cr_equilibrium():
    _, params, m = _single_node_setup()
    xdot, rdot = rhs(SystemState([1.0], [1.0]), params, m)
    assert xdot == pytest.approx(0.0, abs=1e-15)
    assert rdot == pytest.approx(0.0, abs=1e-15)


def test_rhs_vanishes_at_symmetric_closed_form_point():
    point = symmetric_fixed_point(SET1)
    m = build_matrices(catalog("symmetric3"), SET1)
    xdot, rdot = rhs(point.state, SET1, m)
    assert max(np.max(np.abs(xdot)), np.max(np.abs(rdot))) < 1e-10


def test_zero_virus_gives_pure_antibody_decay():
    g = catalog("symmetric3")
    m = build_matrices(g, SET1)
    state = SystemState(np.zeros(3), np.array([0.5, 1.0, 2.0]))
    xdot, rdot = rhs(state, SET1, m)
    assert np.array_equal(xdot, np.zeros(3))
    assert np.allclose(rdot, -SET1.b * state.r, atol=1e-15)


def test_no_cr_reduction_matches_per_node_two_equation_model():
    # With no edges the model decouples into dx = fx - pxr, dr = cx - br.
    rng = np.random.default_rng(11)
    g = CrnGraph(4, ())
    params = ModelParams(f=rng.uniform(0.5, 2, 4), p=1.3, c=0.7, b=2.1, alpha=0.6, beta=0.3)
    m = build_matrices(g, params)
    state = _random_state(rng, 4)
    xdot, rdot = rhs(state, params, m)
    assert np.allclose(xdot, params.f * state.x - params.p * state.x * state.r, atol=1e-14)
    assert np.allclose(rdot, params.c * state.x - params.b * state.r, atol=1e-14)


def test_rhs_dimension_mismatch():
    _, params, m = _single_node_setup()
    with pytest.raises(ValueError):
        rhs(SystemState([1.0, 1.0], [1.0, 1.0]), params, m)


def test_state_validation_rejects_bad_input():
    with pytest.raises(ValueError):
        SystemState([1.0, np.nan], [1.0, 1.0])
    with pytest.raises(ValueError):
        SystemState([-0.5], [1.0])
    with pytest.raises(ValueError):
        SystemState([1.0], [1.0, 2.0])


# ---------------------------------------------------------------------------
# stimulation probabilities
# ---------------------------------------------------------------------------

def test_single_node_self_stimulation():
    _, params, m = _single_node_setup()
    sm = stimulation_probabilities(SystemState([2.0], [0.7]), m)
    assert np.array_equal(sm.g, [[1.0]])
    assert not sm.guarded[0]


def test_symmetric3_row_with_zero_first_antibody():
    m = build_matrices(catalog("symmetric3"), SET1)
    sm = stimulation_probabilities(SystemState([1.0, 1.0, 1.0], [0.0, 0.8, 0.6]), m)
    # variant 0 stimulates only response 1 (v row (1, alpha, 0), r_0 = 0)
    assert np.allclose(sm.g[0], [0.0, 1.0, 0.0], atol=1e-15)


def test_all_zero_antibodies_guard_every_row():
    m = build_matrices(catalog("symmetric3"), SET1)
    sm = stimulation_probabilities(SystemState([1.0, 1.0, 1.0], np.zeros(3)), m)
    assert np.all(sm.guarded)
    assert np.array_equal(sm.g, np.zeros((3, 3)))


def test_rows_sum_to_one_over_random_networks_and_states():
    rng = np.random.default_rng(23)
    for _ in range(50):
        g = random_dandelion(int(rng.integers(0, 2**63)), int(rng.integers(2, 10)), 0.4)
        params = ModelParams(f=rng.uniform(0.5, 2, g.n), p=1.0, c=1.0, b=1.0,
                             alpha=0.7, beta=0.3)
        m = build_matrices(g, params)
        sm = stimulation_probabilities(_random_state(rng, g.n, lo=0.01), m)
        sums = sm.g.sum(axis=1)
        assert np.all(np.abs(sums[~sm.guarded] - 1.0) <= 1e-12)
        assert np.all((sm.g >= 0.0) & (sm.g <= 1.0))


def test_aggregate_antibody_flow_identity():
    # sum_i dr_i == c * sum of x_j over unguarded rows - b * sum_i r_i
    rng = np.random.default_rng(29)
    for _ in range(50):
        g = random_dandelion(int(rng.integers(0, 2**63)), int(rng.integers(2, 8)), 0.5)
        params = ModelParams(f=rng.uniform(0.5, 2, g.n), p=0.8, c=1.7, b=0.9,
                             alpha=0.8, beta=0.4)
        m = build_matrices(g, params)
        state = _random_state(rng, g.n, lo=0.0, hi=2.0)
        _, rdot = rhs(state, params, m)
        sm = stimulation_probabilities(state, m)
        expected = params.c * np.sum(state.x[~sm.guarded]) - params.b * np.sum(state.r)
        assert abs(np.sum(rdot) - expected) < 1e-10


# ---------------------------------------------------------------------------
# integrate
# ---------------------------------------------------------------------------

def test_exact_fixed_point_stays_put():
    _, params, m = _single_node_setup()
    traj = integrate(SystemState([1.0], [1.0]), params, m, dt=1e-3, max_steps=5000,
                     eq_tol=0.0, sample_stride=100)
    assert np.all(np.abs(traj.x - 1.0) < 1e-9)
    assert np.all(np.abs(traj.r - 1.0) < 1e-9)


def test_equilibrium_termination_at_fixed_point():
    _, params, m = _single_node_setup()
    traj = integrate(SystemState([1.0], [1.0]), params, m, dt=1e-3, max_steps=10)
    assert traj.terminated_by == Termination.EQUILIBRIUM
    assert traj.times[-1] == 0.0


def test_perturbed_symmetric_point_converges_back():
    point = symmetric_fixed_point(SET1)
    m = build_matrices(catalog("symmetric3"), SET1)
    state0 = SystemState(point.state.x + 1e-3, point.state.r + 1e-3)
    traj = integrate(state0, SET1, m, dt=1e-3, max_steps=200_000, eq_tol=0.0)
    gap = max(np.max(np.abs(traj.x[-1] - point.state.x)),
              np.max(np.abs(traj.r[-1] - point.state.r)))
    assert traj.times[-1] == pytest.approx(200.0)
    assert gap < 1e-4


def test_euler_and_rk4_agree_on_perturbation_run():
    point = symmetric_fixed_point(SET1)
    m = build_matrices(catalog("symmetric3"), SET1)
    state0 = SystemState(point.state.x + 1e-3, point.state.r + 1e-3)
    kwargs = dict(dt=1e-3, max_steps=200_000, eq_tol=0.0, sample_stride=200_000)
    te = integrate(state0, SET1, m, scheme="euler", **kwargs)
    tr = integrate(state0, SET1, m, scheme="rk4", **kwargs)
    assert te.times[-1] == pytest.approx(200.0)
    gap = max(np.max(np.abs(te.x[-1] - tr.x[-1])), np.max(np.abs(te.r[-1] - tr.r[-1])))
    assert gap < 1e-3


def test_integrate_never_emits_negative_components():
    rng = np.random.default_rng(31)
    g = catalog("branch_cycle3")
    params = ModelParams(f=rng.uniform(0.5, 2, 3), p=1.0, c=2.0, b=4.0, alpha=0.9, beta=0.5)
    m = build_matrices(g, params)
    traj = integrate(_random_state(rng, 3, lo=0.0, hi=0.1), params, m,
                     dt=1e-2, max_steps=20_000, sample_stride=50)
    assert np.all(traj.x >= 0.0)
    assert np.all(traj.r >= 0.0)


def test_divergence_detection():
    g = CrnGraph(1, ())
    params = ModelParams(f=np.array([5.0]), p=1.0, c=1e-6, b=5.0, alpha=0.5, beta=0.25)
    m = build_matrices(g, params)
    traj = integrate(SystemState([1.0], [0.0]), params, m, dt=1e-2, max_steps=2_000_000)
    assert traj.terminated_by == Termination.DIVERGENCE
    assert np.max(traj.x[-1]) > 1e12


def test_extinction_threshold_zeroes_permanently():
    # decaying virus crosses its own initial value immediately and dies
    g = CrnGraph(1, ())
    params = ModelParams(f=np.array([1.0]), p=1.0, c=1.0, b=1.0, alpha=0.5, beta=0.25)
    m = build_matrices(g, params)
    traj = integrate(SystemState([0.5], [2.0]), params, m, dt=1e-3, max_steps=5000,
                     extinction_threshold="initial", sample_stride=10)
    assert traj.x[-1][0] == 0.0
    assert np.all(traj.x[1:, 0] == 0.0)


def test_extinction_scalar_threshold():
    g = CrnGraph(1, ())
    params = ModelParams(f=np.array([1.0]), p=1.0, c=1.0, b=1.0, alpha=0.5, beta=0.25)
    m = build_matrices(g, params)
    traj = integrate(SystemState([0.5], [2.0]), params, m, dt=1e-3, max_steps=50_000,
                     extinction_threshold=0.4, eq_tol=0.0)
    assert traj.x[-1][0] == 0.0


def test_trajectory_sampling_grid_and_monotone_times():
    _, params, m = _single_node_setup()
    traj = integrate(SystemState([0.9], [1.1]), params, m, dt=1e-3, max_steps=2500,
                     eq_tol=0.0, sample_stride=1000)
    assert np.all(np.diff(traj.times) > 0.0)
    assert traj.times[0] == 0.0
    assert traj.times[-1] == pytest.approx(2.5)
    assert len(traj.times) == 4  # t = 0, 1, 2, 2.5


def test_antibody_sum_finite_difference_matches_aggregate_identity():
    # d/dt sum(r) via consecutive samples ~ c*sum(x) - b*sum(r) to O(dt)
    g = catalog("symmetric3")
    m = build_matrices(g, SET1)
    dt = 1e-3
    traj = integrate(SystemState([1.0, 0.5, 2.0], [0.3, 0.8, 1.2]), SET1, m,
                     dt=dt, max_steps=1000, eq_tol=0.0, sample_stride=1)
    r_sum = traj.r.sum(axis=1)
    x_sum = traj.x.sum(axis=1)
    fd = np.diff(r_sum) / dt
    predicted = SET1.c * x_sum[:-1] - SET1.b * r_sum[:-1]
    assert np.max(np.abs(fd - predicted)) < 50 * dt


def test_integrate_validation():
    _, params, m = _single_node_setup()
    state = SystemState([1.0], [1.0])
    with pytest.raises(ValueError):
        integrate(state, params, m, dt=0.0)
    with pytest.raises(ValueError):
        integrate(state, params, m, scheme="heun")
    with pytest.raises(ValueError):
        integrate(state, params, m, extinction_threshold="final")
    with pytest.raises(ValueError):
        integrate(state, params, m, extinction_threshold=-1.0)


def test_compiled_kernel_matches_reference_loop(monkeypatch):
    import crinlab.dynamics as dyn
    if dyn._kernel is None:
        pytest.skip("numba unavailable")
    rng = np.random.default_rng(37)
    g = random_dandelion(21, 8, 0.5)
    params = ModelParams(f=rng.uniform(0.5, 2, g.n), p=0.9, c=1.4, b=1.1,
                         alpha=0.8, beta=0.4)
    m = build_matrices(g, params)
    state0 = SystemState(rng.uniform(0, 0.1, g.n), rng.uniform(0, 0.1, g.n))
    for scheme in ("euler", "rk4"):
        for ext in (None, "initial"):
            kwargs = dict(scheme=scheme, dt=1e-2, max_steps=3000, eq_tol=1e-9,
                          extinction_threshold=ext, sample_stride=500)
            fast = integrate(state0, params, m, **kwargs)
            monkeypatch.setattr(dyn, "_KERNEL_ENABLED", False)
            slow = integrate(state0, params, m, **kwargs)
            monkeypatch.setattr(dyn, "_KERNEL_ENABLED", True)
            assert fast.terminated_by == slow.terminated_by
            assert np.array_equal(fast.times, slow.times)
            assert np.array_equal(fast.x, slow.x)
            assert np.array_equal(fast.r, slow.r)


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

def test_classify_symmetric_fixed_point_roles():
    point = symmetric_fixed_point(SET1)
    roles = classify_nodes(point.state)
    assert roles == [NodeRole.PERSISTENT, NodeRole.ALTRUISTIC, NodeRole.NEUTRAL]


def test_classify_all_neutral():
    state = SystemState([1.0, 1.0, 1.0], [1.0, 1.0, 1.0])
    assert classify_nodes(state) == [NodeRole.NEUTRAL] * 3


def test_classify_star_family_point_roles():
    params = ModelParams(f=np.array([0.5, 0.25, 0.25, 0.25, 0.25]),
                         p=1.0, c=1.0, b=1.0, alpha=0.75, beta=0.5)
    point = star_family(params, 5, x1=0.3)
    roles = classify_nodes(point.state)
    assert roles[0] == NodeRole.PERSISTENT
    assert roles[1:] == [NodeRole.NEUTRAL] * 4


def test_classify_extinct_and_zero_state():
    state = SystemState([0.0, 1.0], [0.0, 1.0])
    assert classify_nodes(state) == [NodeRole.EXTINCT, NodeRole.NEUTRAL]
    zero = SystemState([0.0], [0.0])
    assert classify_nodes(zero) == [NodeRole.EXTINCT]


def test_classification_thresholds_are_relative():
    thresholds = ClassificationThresholds()
    state = SystemState([100.0, 1e-3, 50.0], [1e-5, 10.0, 5.0])
    roles = classify_nodes(state, thresholds)
    assert roles == [NodeRole.PERSISTENT, NodeRole.ALTRUISTIC, NodeRole.NEUTRAL]
