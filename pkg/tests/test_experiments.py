from __future__ import annotations

import numpy as np
import pytest

from crinlab.dynamics import NodeRole
from crinlab.experiments import (
    ExperimentConfig,
    li_on_tail,
    run_dandelion,
    sample_params,
    sweep_x1,
)
from crinlab.fixedpoints import constrained_f1
from crinlab.network import ModelParams
from crinlab.rng import derive_seed
from crinlab.serialize import dumps, experiment_report_dict


# ---------------------------------------------------------------------------
# sample_params
# ---------------------------------------------------------------------------

def test_sample_params_ranges_and_beta():
    for seed in (0, 1, 12345, 2**63 - 1):
        params, state0 = sample_params(seed, 100, special_index=98)
        assert params.beta == params.alpha ** 2
        assert 0.5 < params.alpha < 1.0
        assert 0.0 < params.p < 1.0
        assert 0.0 < params.b < 5.0
        assert 0.0 < params.c < 5.0
        special = params.f[98]
        assert 1.0 < special < 2.0
        rest = np.delete(params.f, 98)
        assert np.all((0.0 < rest) & (rest < 1.0))
        assert np.all((0.0 < state0.x) & (state0.x < 0.1))
        assert np.all((0.0 < state0.r) & (state0.r < 0.1))


def test_sample_params_exactly_one_special_entry():
    params, _ = sample_params(7, 50, special_index=10)
    outside = np.flatnonzero(params.f >= 1.0)
    assert list(outside) == [10]


def test_sample_params_deterministic_and_seed_sensitive():
    a1, s1 = sample_params(42, 10, special_index=3)
    a2, s2 = sample_params(42, 10, special_index=3)
    assert a1 == a2
    assert np.array_equal(s1.x, s2.x) and np.array_equal(s1.r, s2.r)
    b1, _ = sample_params(43, 10, special_index=3)
    assert not np.array_equal(a1.f, b1.f)


def test_sample_params_without_special_index():
    params, _ = sample_params(3, 5)
    assert np.all((0.0 < params.f) & (params.f < 1.0))


def test_sample_params_validation():
    with pytest.raises(ValueError):
        sample_params(1, 0)
    with pytest.raises(ValueError):
        sample_params(1, 5, special_index=5)


# ---------------------------------------------------------------------------
# LI predicate
# ---------------------------------------------------------------------------

def test_li_predicate():
    P, A, N, E = (NodeRole.PERSISTENT, NodeRole.ALTRUISTIC,
                  NodeRole.NEUTRAL, NodeRole.EXTINCT)
    assert li_on_tail((P, A, N))
    assert li_on_tail((N, A, P))
    assert li_on_tail((P, A, P))
    assert not li_on_tail((P, N, P))   # middle not altruistic
    assert not li_on_tail((N, A, N))   # nobody persistent
    assert not li_on_tail((A, P, A))   # roles inverted
    assert not li_on_tail((E, E, E))


# ---------------------------------------------------------------------------
# run_dandelion
# ---------------------------------------------------------------------------

def _tiny_config(**kwargs):
    defaults = dict(seed=11, runs=2, ball_size=1, dt=1e-2, max_steps=50_000,
                    eq_tol=1e-9, extinction=True)
    defaults.update(kwargs)
    return ExperimentConfig(**defaults)


def test_degenerate_ball_runs_complete_and_classify():
    report = run_dandelion(_tiny_config())
    assert len(report.records) == 2
    for rec in report.records:
        assert len(rec.roles) == 3
        assert len(rec.tail_roles) == 3
        assert rec.terminated_by.value in ("max_steps", "equilibrium", "divergence")
        assert all(isinstance(role, NodeRole) for role in rec.tail_roles)
    assert 0.0 <= report.fraction_li_on_tail <= 1.0
    assert report.runs_at_equilibrium <= len(report.records)


def test_run_seeds_derived_from_master():
    report = run_dandelion(_tiny_config())
    assert [rec.run_seed for rec in report.records] == [
        derive_seed(11, 0), derive_seed(11, 1)]


def test_report_is_reproducible_byte_identical():
    r1 = run_dandelion(_tiny_config())
    r2 = run_dandelion(_tiny_config())
    assert dumps(experiment_report_dict(r1)) == dumps(experiment_report_dict(r2))


def test_different_master_seed_changes_report():
    r1 = run_dandelion(_tiny_config())
    r2 = run_dandelion(_tiny_config(seed=12))
    assert dumps(experiment_report_dict(r1)) != dumps(experiment_report_dict(r2))


def test_small_ball_with_tails_runs():
    for tail in ("branch_cycle3", "symmetric3"):
        report = run_dandelion(_tiny_config(ball_size=4, runs=1, tail=tail))
        assert len(report.records[0].roles) == 6


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(seed=1, runs=0)


# ---------------------------------------------------------------------------
# sweep_x1
# ---------------------------------------------------------------------------

def _family_params(n=2, beta=0.5, alpha=0.75, f_rest=(2.0,)):
    f = np.concatenate([[constrained_f1(f_rest, beta)], f_rest])
    return ModelParams(f=f, p=1.0, c=1.0, b=1.0, alpha=alpha, beta=beta)


def test_sweep_two_node_threshold_detection():
    params = _family_params()
    grid = np.linspace(0.03, 1.97, 98)  # avoids landing exactly on the threshold
    result = sweep_x1(params, 2, grid)
    assert result.threshold_formula == pytest.approx(1.5)
    assert result.threshold_empirical == pytest.approx(1.5, abs=0.02)
    for pt in result.points:
        assert pt.zero_eig_count == 1
        expected = "marginally_stable" if pt.x1 < 1.5 else "unstable"
        assert pt.classification.value == expected
        assert pt.lambda1_matched.real == pytest.approx(pt.lambda1_formula, abs=1e-9)


def test_sweep_star5_threshold_formula():
    params = _family_params(f_rest=(1.0, 1.0, 1.0, 1.0), beta=0.125)
    grid = np.linspace(0.1, 3.9, 39)
    result = sweep_x1(params, 5, grid)
    assert result.threshold_formula == pytest.approx(0.75 * 4.0)
    assert result.threshold_empirical == pytest.approx(3.0, abs=0.1)


def test_sweep_grid_outside_family_segment_fails():
    params = _family_params()
    with pytest.raises(ValueError):
        sweep_x1(params, 2, [0.5, 2.5])


def test_sweep_all_below_threshold_has_no_empirical_crossing():
    params = _family_params()
    result = sweep_x1(params, 2, np.linspace(0.1, 1.0, 10))
    assert result.threshold_empirical is None
    assert all(pt.classification.value == "marginally_stable" for pt in result.points)
