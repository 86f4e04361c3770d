"""Simulation loop: exact dynamics, batching equivalences, safety rails."""

import numpy as np
import pytest

from fedregret.core import ExperimentConfig, StepSizePolicy, UNBOUNDED
from fedregret.engine import (
    DivergenceError,
    apply_sync,
    consensus_error,
    project,
    run_batch,
    run_replicate,
)
from fedregret.harness import build_problem


def make_config(**overrides):
    base = dict(
        num_clients=2, horizon=16, sync_period=2, dimension=2,
        step_size_policy=StepSizePolicy("constant", eta=0.05),
        loss_spec={"family": "mean_quadratic"},
        adversary_spec={"kind": "static_iid", "mean": [1.0, 0.0], "variance": 1.0},
        replicates=5, seed=17)
    base.update(overrides)
    return ExperimentConfig(**base)


def run_single(config, replicate=0, **kwargs):
    s = build_problem(config)
    return run_replicate(config, s.model, s.schedule, s.oracle, s.etas,
                         replicate, **kwargs)


def run_rows(config, rows, **kwargs):
    s = build_problem(config)
    return run_batch(config, s.model, s.schedule, s.oracle, s.etas, rows, **kwargs)


# ---------------------------------------------------------------------------
# geometry helpers

def test_project_onto_ball():
    assert np.allclose(project(np.array([3.0, 4.0]), 1.0), [0.6, 0.8])
    inside = np.array([0.3, 0.4])
    assert np.array_equal(project(inside, 1.0), inside)
    assert np.array_equal(project(inside, UNBOUNDED), inside)
    # batched: trailing axis is projected row by row
    batch = np.array([[3.0, 4.0], [0.0, 0.5]])
    out = project(batch, 1.0)
    assert np.allclose(out, [[0.6, 0.8], [0.0, 0.5]])


def test_apply_sync_averages_and_is_idempotent():
    X = np.array([[1.0, 0.0], [3.0, 2.0]])
    assert np.array_equal(apply_sync(X), [[2.0, 1.0], [2.0, 1.0]])
    rng = np.random.default_rng(1)
    for M in (2, 4):
        Y = rng.normal(size=(3, M, 2))
        once = apply_sync(Y)
        assert np.array_equal(apply_sync(once), once)
    # at M = 8 the reduction adds identical values sequentially and the 3v
    # partial sum can round, so idempotence holds only to an ulp
    Y = rng.normal(size=(3, 8, 2))
    once = apply_sync(Y)
    assert np.allclose(apply_sync(once), once, rtol=0, atol=1e-15)


def test_consensus_error_values():
    X = np.array([[1.0, 0.0], [-1.0, 0.0]])
    assert consensus_error(X) == 1.0
    assert consensus_error(apply_sync(X)) == 0.0
    batch = np.stack([X, 2 * X])
    assert np.allclose(consensus_error(batch), [1.0, 4.0])


# ---------------------------------------------------------------------------
# exact dynamics

def test_single_client_one_step_update():
    config = make_config(
        num_clients=1, horizon=2, sync_period=1, dimension=1,
        step_size_policy=StepSizePolicy("constant", eta=0.1),
        adversary_spec={"kind": "dirac_adversarial", "points": [[0.0]]},
        initial_point=(1.0,), replicates=1)
    trace = run_single(config, record_iterates=True)
    # x2 = x1 - eta (x1 - xi) = 1 - 0.1 * 1
    assert trace.iterates[0, 0, 0] == 1.0
    assert trace.iterates[1, 0, 0] == 0.9
    assert trace.final_iterates[0, 0] == pytest.approx(0.9 * 0.9)


def test_two_client_deterministic_consensus():
    config = make_config(
        horizon=3, sync_period=2, dimension=1,
        step_size_policy=StepSizePolicy("constant", eta=0.1),
        adversary_spec={"kind": "static_heterogeneous",
                        "means": [[1.0], [-1.0]], "variances": [0.0, 0.0]},
        replicates=1)
    trace = run_single(config, record_iterates=True)
    # sync fires after steps 1 and 3; gradients are exactly -/+ 1 from zero
    assert np.array_equal(trace.sync_flag, [True, False, True])
    assert np.allclose(trace.iterates[:, 0, 0], [0.0, 0.0, 0.1])
    assert np.allclose(trace.iterates[:, 1, 0], [0.0, 0.0, -0.1])
    assert np.allclose(trace.consensus, [0.0, 0.0, 0.01])
    # global losses: f_t(x) = 0.5 x^2 + 0.5 (client spread = 1)
    assert trace.expected_virtual[2] == pytest.approx(0.5)
    assert trace.expected_losses[2].mean() == pytest.approx(0.505)


def test_consensus_zero_at_start_and_after_sync():
    config = make_config(horizon=10, sync_period=3, replicates=1)
    trace = run_single(config)
    assert trace.consensus[0] == 0.0
    synced = np.flatnonzero(trace.sync_flag)  # averaging ran after these steps
    for idx in synced:
        if idx + 1 < config.horizon:
            assert trace.consensus[idx + 1] == 0.0
    not_synced = [i for i in range(1, config.horizon)
                  if not trace.sync_flag[i - 1]]
    assert any(trace.consensus[i] > 0 for i in not_synced)


def test_smoothness_split_is_equality_for_quadratic():
    summary = run_rows(make_config(), range(5))
    assert summary.decomp_absgap_max < 1e-12
    # client-average expected loss equals virtual loss plus half consensus
    lhs = summary.step_sum_expected_clients
    rhs = summary.step_sum_expected_virtual + 0.5 * summary.step_sum_consensus
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


# ---------------------------------------------------------------------------
# batching equivalences

def test_batch_rows_match_single_replicates_bitwise():
    config = make_config()
    whole = run_rows(config, range(5))
    for r in range(5):
        single = run_single(config, replicate=r)
        assert np.array_equal(single.final_iterates, whole.final_iterates[r])


def test_chunked_rows_match_whole_block_bitwise():
    config = make_config(replicates=7)
    whole = run_rows(config, range(7))
    front = run_rows(config, range(4))
    back = run_rows(config, range(4, 7))
    assert np.array_equal(front.final_iterates, whole.final_iterates[:4])
    assert np.array_equal(back.final_iterates, whole.final_iterates[4:])
    joined = np.concatenate([front.rep_sum_expected_clients,
                             back.rep_sum_expected_clients])
    assert np.array_equal(joined, whole.rep_sum_expected_clients)


def test_freeze_captures_pre_update_state():
    config = make_config(horizon=8)
    summary = run_rows(config, range(3), freeze_at={1, 5})
    assert [s.t for s in summary.states] == [1, 5]
    first = summary.states[0]
    assert first.replicate == 0
    assert np.array_equal(first.client_iterates, np.zeros((2, 2)))
    assert np.array_equal(first.virtual_average, np.zeros(2))
    assert first.eta_t == 0.05


def test_debug_checks_pass_on_clean_run():
    config = make_config(horizon=12, sync_period=3)
    trace = run_single(config, debug_checks=True)
    assert np.isfinite(trace.realized_losses).all()


# ---------------------------------------------------------------------------
# safety rails

def test_divergence_raises():
    config = make_config(
        horizon=400, num_clients=1, dimension=1,
        step_size_policy=StepSizePolicy("constant", eta=5.0, unsafe=True),
        adversary_spec={"kind": "static_iid", "mean": [1.0], "variance": 1.0},
        replicates=1)
    with pytest.raises(DivergenceError, match="diverged"):
        run_single(config)


def test_projection_keeps_iterates_in_ball():
    config = make_config(
        horizon=30, num_clients=1, dimension=2, sync_period=1,
        step_size_policy=StepSizePolicy("constant", eta=0.1),
        adversary_spec={"kind": "dirac_adversarial", "points": [[5.0, 0.0]]},
        projection_radius=0.5, replicates=1)
    trace = run_single(config, record_iterates=True)
    norms = np.linalg.norm(trace.iterates, axis=-1)
    assert norms.max() <= 0.5 * (1 + 1e-12)
    assert trace.projected.any()


def test_oracle_optional():
    config = make_config(horizon=4, replicates=1)
    s = build_problem(config)
    trace = run_replicate(config, s.model, s.schedule, None, s.etas, 0)
    assert np.isnan(trace.expected_losses).all()
    assert np.isfinite(trace.realized_losses).all()


def test_bad_rows_rejected():
    config = make_config()
    with pytest.raises(ValueError):
        run_rows(config, [])
    with pytest.raises(ValueError):
        run_rows(config, [-1])
