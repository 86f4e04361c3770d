"""Bound templates, burn-in cutoffs, audits, and the regret split."""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedregret.adversary import make_schedule
from fedregret.bounds import (
    AuditPreconditionError,
    audit_consensus_drift,
    audit_mean_gradient_norm,
    audit_smoothness_decomposition,
    burn_in_cutoff,
    burn_in_cutoff_ceiling,
    evaluate_convex_bound,
    evaluate_strong_bound,
    split_optimality_gap,
)
from fedregret.core import RngStream
from fedregret.engine import SimState
from fedregret.losses import make_loss_model
from fedregret.oracles import (
    HeterogeneityProfile,
    InsufficientBudgetError,
    QuadraticOracle,
)


# ---------------------------------------------------------------------------
# bound templates

def test_convex_bound_frozen_example():
    # hand computation: D^2/eta = 20, T eta sigma^2/M = 100*0.05*0.25 = 1.25,
    # no drift terms at tau = 1
    terms = evaluate_convex_bound(
        horizon=100, num_clients=4, sync_period=1, eta=0.05,
        L=1.0, D=1.0, sigma_bar_sq=1.0, zeta_bar_sq=0.0, k_bar_sq=0.0)
    assert terms.init_term == pytest.approx(20.0)
    assert terms.variance_term == pytest.approx(1.25)
    assert terms.spatial_drift_term == 0.0
    assert terms.temporal_drift_term == 0.0
    assert terms.total == pytest.approx(21.25)


def test_convex_bound_drift_terms():
    terms = evaluate_convex_bound(
        horizon=10, num_clients=2, sync_period=3, eta=0.01,
        L=2.0, D=1.0, sigma_bar_sq=1.0, zeta_bar_sq=0.5, k_bar_sq=0.25)
    assert terms.spatial_drift_term == pytest.approx(
        10 * 0.01 ** 2 * 2.0 * 2 * (1.0 + 2 * 0.5))
    assert terms.temporal_drift_term == pytest.approx(
        10 * 0.01 ** 2 * 4.0 * 4 * 0.25)
    with pytest.raises(ValueError):
        evaluate_convex_bound(10, 2, 1, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0)


def test_burn_in_cutoff_values():
    # tau = 1: condition is 4/t < 1/2, first true at t = 9
    assert burn_in_cutoff(1.0, 1.0, 1) == 9
    # closed-form ceiling variant lands at 8 for the same constants
    assert burn_in_cutoff_ceiling(1.0, 1.0, 1) == 8
    with pytest.raises(ValueError):
        burn_in_cutoff(1.0, 0.0, 1)


@settings(max_examples=80, deadline=None)
@given(L=st.floats(0.25, 8.0), mu_frac=st.floats(0.05, 1.0), tau=st.integers(1, 12))
def test_burn_in_cutoff_is_smallest_satisfying_t(L, mu_frac, tau):
    mu = L * mu_frac
    t0 = burn_in_cutoff(L, mu, tau)

    def cond(t):
        # exact rational arithmetic: immune to float association order
        lhs = (Fraction(4) * Fraction(L) / (Fraction(mu) * t)
               + Fraction(288) * Fraction(L) ** 3 * (tau - 1) ** 2
               / (Fraction(mu) ** 3 * t * t))
        return lhs < Fraction(1, 2)

    assert cond(t0)
    if t0 > 1:
        assert not cond(t0 - 1)


def test_strong_bound_terms_and_head():
    gaps = np.array([3.0, -1.0, 2.0] + [0.1] * 17)
    terms = evaluate_strong_bound(
        horizon=20, num_clients=4, sync_period=1, L=1.0, mu=1.0,
        sigma_max_sq=2.0, zeta_max_sq=0.0, k_max_sq=0.0,
        mean_virtual_gap=gaps)
    assert terms.burn_in == 9
    assert terms.burn_in_ceiling == 8
    assert terms.log_term == pytest.approx(0.5 * (1 + math.log(20)))
    # tau = 1 leaves only the variance part of the drift term
    assert terms.drift_term == pytest.approx(2.0)
    # head sums positive parts of the first t0 - 1 gaps
    # gaps[:t0 - 1] covers eight entries: 3, -1 (clipped), 2, then five 0.1
    assert terms.head_error == pytest.approx(3.0 + 2.0 + 0.1 * 5)
    assert terms.head_error_cap is None
    capped = evaluate_strong_bound(
        horizon=20, num_clients=4, sync_period=1, L=1.0, mu=1.0,
        sigma_max_sq=2.0, zeta_max_sq=0.0, k_max_sq=0.0,
        mean_virtual_gap=gaps, D=2.0, bounded=True)
    assert capped.head_error_cap == pytest.approx(8 * 0.5 * 4.0)


def test_strong_bound_drift_with_local_steps():
    terms = evaluate_strong_bound(
        horizon=16, num_clients=2, sync_period=3, L=2.0, mu=0.5,
        sigma_max_sq=1.0, zeta_max_sq=0.5, k_max_sq=0.25,
        mean_virtual_gap=np.zeros(16))
    want = (4.0 * 3 / 0.125) * (1.0 + 2 * 0.5 + 2 * 2.0 * 0.25)
    assert terms.drift_term == pytest.approx(want)
    with pytest.raises(ValueError):
        evaluate_strong_bound(16, 2, 1, 1.0, 0.0, 1.0, 0.0, 0.0, np.zeros(16))


# ---------------------------------------------------------------------------
# audits

def test_smoothness_audit_thresholds():
    ok = audit_smoothness_decomposition(1e-12, 1e-12, "mean_quadratic")
    assert ok.passed
    assert ok.detail["equality_checked"]
    signed_bad = audit_smoothness_decomposition(1e-6, 1e-6, "gaussian_linreg")
    assert not signed_bad.passed
    # quadratic losses must satisfy the split with equality, both directions
    eq_bad = audit_smoothness_decomposition(1e-12, 1e-6, "mean_quadratic")
    assert not eq_bad.passed
    loose_ok = audit_smoothness_decomposition(-1e-3, 1e-3, "gaussian_linreg")
    assert loose_ok.passed


def grad_audit_fixture(variance=1.0):
    schedule = make_schedule(
        {"kind": "static_heterogeneous", "means": [[1.0, 0.0], [-1.0, 0.0]],
         "variances": variance}, 2, 2, 4)
    model = make_loss_model({"family": "mean_quadratic"}, 2)
    centers = schedule.tables()[0].mean(axis=1)
    spread = np.ones(4)
    offsets = 0.5 * spread + 0.5 * variance
    oracle = QuadraticOracle(1.0, centers, offsets)
    min_values = oracle.values_at(np.zeros(2))
    state = SimState(t=2, replicate=0,
                     client_iterates=np.array([[0.5, 0.2], [-0.1, 0.4]]),
                     virtual_average=np.array([0.2, 0.3]), eta_t=0.05)
    return model, schedule, state, oracle, min_values


def test_mean_gradient_audit_passes():
    model, schedule, state, oracle, min_values = grad_audit_fixture()
    prof = HeterogeneityProfile.from_arrays(
        np.ones(4), np.zeros(4), np.ones(4), {})
    v = audit_mean_gradient_norm(model, schedule, state, oracle, prof,
                                 min_values, budget=60_000, stream=RngStream(3))
    assert v.passed
    assert v.lhs <= v.rhs + 5 * v.se
    assert v.detail["t"] == 2
    assert v.detail["budget"] == 60_000


def test_mean_gradient_audit_insufficient_budget():
    model, schedule, state, oracle, min_values = grad_audit_fixture()
    # a profile that understates the variance makes the RHS tiny relative to
    # the Monte Carlo error, which must be reported, not silently passed
    tiny = HeterogeneityProfile.from_arrays(
        np.zeros(4), np.zeros(4), np.full(4, 1e-8), {})
    near_opt = SimState(t=2, replicate=0,
                        client_iterates=np.array([[1e-5, 0.0], [-1e-5, 0.0]]),
                        virtual_average=np.zeros(2), eta_t=0.05)
    with pytest.raises(InsufficientBudgetError):
        audit_mean_gradient_norm(model, schedule, near_opt, oracle, tiny,
                                 min_values, budget=100, stream=RngStream(3))


def test_mean_gradient_audit_is_deterministic():
    model, schedule, state, oracle, min_values = grad_audit_fixture()
    prof = HeterogeneityProfile.from_arrays(np.ones(4), np.zeros(4), np.ones(4), {})
    a = audit_mean_gradient_norm(model, schedule, state, oracle, prof,
                                 min_values, budget=30_000, stream=RngStream(3))
    b = audit_mean_gradient_norm(model, schedule, state, oracle, prof,
                                 min_values, budget=30_000, stream=RngStream(3))
    assert a.lhs == b.lhs and a.se == b.se


def test_consensus_drift_preconditions():
    prof = HeterogeneityProfile.from_arrays(np.ones(8), np.zeros(8), np.ones(8), {})
    good = np.full(40, 0.001)
    with pytest.raises(AuditPreconditionError, match="32 replicates"):
        audit_consensus_drift(good[:10], np.full(8, 0.01), 2, 1.0, prof, 0.0)
    with pytest.raises(AuditPreconditionError, match="constant"):
        audit_consensus_drift(good, 0.01 / np.arange(1, 9), 2, 1.0, prof, 0.0)
    with pytest.raises(AuditPreconditionError, match="drift cap"):
        audit_consensus_drift(good, np.full(8, 0.3), 2, 1.0, prof, 0.0)
    v = audit_consensus_drift(good, np.full(8, 0.01), 2, 1.0, prof, 1.0)
    want = 4 * 0.01 ** 2 * 1 * (1.0 + 3 * 1.0) * 8 + 12 * 0.01 ** 2 * 1 * 1.0 * 1.0
    assert v.rhs == pytest.approx(want)
    assert v.passed
    # tau = 1 collapses the bound to zero, so any positive drift fails
    flat = audit_consensus_drift(good, np.full(8, 0.01), 1, 1.0, prof, 1.0)
    assert flat.rhs == 0.0
    assert not flat.passed


# ---------------------------------------------------------------------------
# regret split

def test_split_identity_exact():
    virtual = np.array([1.0, 2.0, 3.0])
    at_star = np.array([0.5, 0.5, 0.5])
    mins = np.array([0.25, 0.5, 0.25])
    s = split_optimality_gap(virtual, at_star, mins)
    assert s.virtual_regret_sum == pytest.approx(4.5)
    assert s.instant_gap_sum == pytest.approx(5.0)
    assert s.comparator_gap_sum == pytest.approx(0.5)
    assert s.identity_error < 1e-15
