"""Regret-bound evaluators and inequality audits.

The two bound evaluators plug measured problem constants into the guarantee
templates with unit leading constants, term by term, so each term can be
compared against its empirical counterpart. The audits check the three
workhorse inequalities on simulated data: the smoothness decomposition of the
client-average loss, the mean-gradient-norm bound at frozen states, and the
consensus-drift sum bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import losses as losses_mod
from .core import RngStream
from .oracles import InsufficientBudgetError


class AuditPreconditionError(ValueError):
    """The run does not satisfy the inequality's hypotheses."""


@dataclass
class AuditVerdict:
    name: str
    passed: bool
    lhs: float
    rhs: float
    slack: float          # rhs (+ tolerance) - lhs; negative means violated
    se: float = 0.0
    detail: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# bound templates

@dataclass
class ConvexBoundTerms:
    """Constant-step guarantee, unit constants:
    D^2/eta + T eta (sigma_bar^2/M + L K_bar^2)
    + T eta^2 L (tau-1)(sigma_bar^2 + (tau-1) zeta_bar^2)
    + T eta^2 L^2 (tau-1)^2 K_bar^2
    """

    init_term: float
    variance_term: float
    spatial_drift_term: float
    temporal_drift_term: float
    total: float


def evaluate_convex_bound(horizon: int, num_clients: int, sync_period: int,
                          eta: float, L: float, D: float,
                          sigma_bar_sq: float, zeta_bar_sq: float,
                          k_bar_sq: float) -> ConvexBoundTerms:
    if eta <= 0:
        raise ValueError("eta must be positive")
    T, M, tau = horizon, num_clients, sync_period
    init = D * D / eta
    variance = T * eta * (sigma_bar_sq / M + L * k_bar_sq)
    spatial = T * eta * eta * L * (tau - 1) * (sigma_bar_sq + (tau - 1) * zeta_bar_sq)
    temporal = T * eta * eta * L * L * (tau - 1) ** 2 * k_bar_sq
    return ConvexBoundTerms(init, variance, spatial, temporal,
                            init + variance + spatial + temporal)


def _ceil_snapped(x: float) -> int:
    # round-before-ceil so 4.000000000000001 style float dust does not
    # push the integer up a notch
    return int(math.ceil(x - 1e-9)) if x > 0 else 0


def burn_in_cutoff(L: float, mu: float, sync_period: int) -> int:
    """Smallest t >= 1 with 4L/(mu t) + 288 L^3 (tau-1)^2 / (mu^3 t^2) < 1/2.

    The condition is evaluated in exact rational arithmetic over the binary64
    inputs, so the cutoff cannot flip on boundary cases where two float
    orderings of the same expression round differently.
    """
    if mu <= 0:
        raise ValueError("burn-in cutoff needs mu > 0")
    b = Fraction(4) * Fraction(L) / Fraction(mu)
    c = Fraction(288) * Fraction(L) ** 3 * (sync_period - 1) ** 2 / Fraction(mu) ** 3
    half = Fraction(1, 2)

    def cond(t: int) -> bool:
        return b / t + c / (t * t) < half

    t = max(1, int(float(b) + math.sqrt(float(b) ** 2 + 2.0 * float(c))))
    while not cond(t):
        t += 1
    while t > 1 and cond(t - 1):
        t -= 1
    return t

def burn_in_cutoff_ceiling(L: float, mu: float, sync_period: int) -> int:
    """Closed-form variant: max of two ceilings, reported alongside the
    defining-inequality value (they differ by strictness bookkeeping)."""
    if mu <= 0:
        raise ValueError("burn-in cutoff needs mu > 0")
    tau = sync_period
    a = _ceil_snapped(8.0 * L * (tau - 1) ** 2 / mu)
    bterm = _ceil_snapped((4.0 * L / mu) * (1.0 + math.sqrt(1.0 + 36.0 * L * (tau - 1) ** 2 / mu)))
    return max(a, bterm, 1)


@dataclass
class StrongBoundTerms:
    """Decaying-step guarantee, unit constants:
    (sigma_max^2/M + L K_max^2)(1 + log T)/mu
    + L^2 tau (sigma_max^2 + (tau-1) zeta_max^2 + (tau-1) L K_max^2)/mu^3
    + head error accumulated before the burn-in cutoff t0.
    """

    log_term: float
    drift_term: float
    head_error: float
    head_error_cap: float | None
    burn_in: int
    burn_in_ceiling: int
    total: float


def evaluate_strong_bound(horizon: int, num_clients: int, sync_period: int,
                          L: float, mu: float,
                          sigma_max_sq: float, zeta_max_sq: float, k_max_sq: float,
                          mean_virtual_gap: np.ndarray,
                          D: float | None = None,
                          bounded: bool = False) -> StrongBoundTerms:
    if mu <= 0:
        raise ValueError("strongly convex bound needs mu > 0")
    T, M, tau = horizon, num_clients, sync_period
    log_term = (sigma_max_sq / M + L * k_max_sq) * (1.0 + math.log(T)) / mu
    drift = (L * L * tau / mu ** 3) * (
        sigma_max_sq + (tau - 1) * zeta_max_sq + (tau - 1) * L * k_max_sq)
    t0 = burn_in_cutoff(L, mu, tau)
    t0_alt = burn_in_cutoff_ceiling(L, mu, tau)
    gaps = np.asarray(mean_virtual_gap, dtype=float)
    head = float(np.maximum(gaps[: min(t0 - 1, T)], 0.0).sum())
    cap = None
    if bounded and D is not None:
        # with projection every per-step gap is at most L D_domain^2 / 2;
        # D here is the comparator distance, so use it as the scale
        cap = (t0 - 1) * 0.5 * L * D * D
    return StrongBoundTerms(log_term, drift, head, cap, t0, t0_alt,
                            log_term + drift + head)


# ---------------------------------------------------------------------------
# audits

def audit_smoothness_decomposition(decomp_gap_max: float, decomp_absgap_max: float,
                                   family: str, tol: float = 1e-9) -> AuditVerdict:
    """Average client loss vs virtual loss plus (L/2) V_t, every step and replicate.

    Gaps arrive pre-reduced from the engine as max (LHS-RHS)/(1+|RHS|).
    Families with exactly quadratic expected losses must also satisfy the
    split with equality.
    """
    passed = decomp_gap_max <= tol
    detail = {"relative_gap_max": decomp_gap_max, "relative_absgap_max": decomp_absgap_max}
    if family == "mean_quadratic":
        passed = passed and decomp_absgap_max <= tol
        detail["equality_checked"] = True
    return AuditVerdict(
        name="smoothness_decomposition",
        passed=bool(passed),
        lhs=decomp_gap_max,
        rhs=0.0,
        slack=tol - decomp_gap_max,
        detail=detail,
    )


def audit_mean_gradient_norm(model, schedule, state, oracle, profile, min_values,
                             budget: int, stream: RngStream,
                             se_multiplier: float = 5.0) -> AuditVerdict:
    """E || (1/M) sum_m grad f(x_{t,m}, xi_{t,m}) ||^2 at a frozen state
    against 10 sigma_t^2/M + 2 L^2 V_t + 4 L (f_t(xbar_t) - f_t(x_t*)).

    Fresh samples are drawn at the frozen iterates with audit-specific keys.
    Raises InsufficientBudgetError when the Monte Carlo error exceeds 10% of
    the right-hand side.
    """
    if budget < 2:
        raise AuditPreconditionError("audit budget must be at least 2")
    t = state.t
    X = np.asarray(state.client_iterates, dtype=float)
    M, d = X.shape
    means, variances = schedule.tables()

    chunk = 1 << 14
    n = 0
    s1 = 0.0
    s2 = 0.0
    piece = 0
    remaining = int(budget)
    Xb = np.broadcast_to(X, (chunk, M, d))
    while remaining > 0:
        k = min(chunk, remaining)
        samples = losses_mod.draw_step_batch(
            model, stream, ("audit-grad", state.replicate, t, piece), k, slice(None),
            means[t - 1], variances[t - 1])
        _, grads = losses_mod.evaluate_batch(model, Xb[:k], samples)
        g = grads.mean(axis=1)
        y = (g * g).sum(axis=1)
        s1 += float(y.sum())
        s2 += float((y * y).sum())
        n += k
        remaining -= k
        piece += 1
    lhs = s1 / n
    se = math.sqrt(max(s2 / n - lhs * lhs, 0.0) / n)

    xbar = X.mean(axis=0)
    V = float(((X - xbar) ** 2).sum() / M)
    inst_gap = float(oracle.value(t, xbar)) - float(min_values[t - 1])
    L = model.L
    sigma_sq = float(profile.sigma_sq[t - 1])
    rhs = 10.0 * sigma_sq / M + 2.0 * L * L * V + 4.0 * L * max(inst_gap, 0.0)

    if rhs > 0 and se > 0.1 * rhs:
        raise InsufficientBudgetError(
            f"mean-gradient audit at t={t}: std error {se:g} exceeds 10% of RHS {rhs:g}; "
            "raise the budget")
    tol = se_multiplier * se
    return AuditVerdict(
        name="mean_gradient_norm",
        passed=bool(lhs <= rhs + tol),
        lhs=lhs,
        rhs=rhs,
        slack=rhs + tol - lhs,
        se=se,
        detail={"t": t, "V_t": V, "instant_gap": inst_gap,
                "sigma_sq": sigma_sq, "budget": n},
    )


def audit_consensus_drift(rep_sum_consensus: np.ndarray, etas: np.ndarray,
                          sync_period: int, L: float, profile,
                          mean_instant_gap_sum: float,
                          se_multiplier: float = 5.0) -> AuditVerdict:
    """Replicate-mean sum_t V_t against the drift bound
    4 eta^2 (tau-1) sum_t (sigma_t^2 + 3 (tau-1) zeta_t^2)
    + 12 eta^2 (tau-1)^2 L sum_t E[f_t(xbar_t) - f_t(x_t*)].

    Preconditions: constant eta <= 1/(4 L (tau-1)) when tau > 1, and at
    least 32 replicates for a usable standard error.
    """
    reps = np.asarray(rep_sum_consensus, dtype=float)
    if reps.size < 32:
        raise AuditPreconditionError("consensus drift audit needs >= 32 replicates")
    etas = np.asarray(etas, dtype=float)
    if float(np.ptp(etas)) != 0.0:
        raise AuditPreconditionError("consensus drift audit needs a constant step size")
    eta = float(etas[0])
    tau = sync_period
    if tau > 1 and eta > 1.0 / (4.0 * L * (tau - 1)) * (1 + 1e-12):
        raise AuditPreconditionError(
            f"eta={eta:g} violates the drift cap 1/(4 L (tau-1)) = {1.0/(4.0*L*(tau-1)):g}")

    lhs = float(reps.mean())
    se = float(reps.std(ddof=1) / math.sqrt(reps.size)) if reps.size > 1 else 0.0
    rhs = (4.0 * eta * eta * (tau - 1)
           * float((profile.sigma_sq + 3.0 * (tau - 1) * profile.zeta_sq).sum())
           + 12.0 * eta * eta * (tau - 1) ** 2 * L * max(mean_instant_gap_sum, 0.0))
    tol = se_multiplier * se
    return AuditVerdict(
        name="consensus_drift",
        passed=bool(lhs <= rhs + tol),
        lhs=lhs,
        rhs=rhs,
        slack=rhs + tol - lhs,
        se=se,
        detail={"eta": eta, "replicates": int(reps.size),
                "mean_instant_gap_sum": mean_instant_gap_sum},
    )


# ---------------------------------------------------------------------------
# regret split

@dataclass
class GapSplit:
    """Virtual regret split into the moving-target and tracking parts.

    sum_t [f_t(xbar_t) - f_t(x*)]  =  sum_t [f_t(xbar_t) - f_t(x_t*)]
                                      - sum_t [f_t(x*) - f_t(x_t*)]
    """

    virtual_regret_sum: float
    instant_gap_sum: float
    comparator_gap_sum: float
    identity_error: float


def split_optimality_gap(mean_virtual: np.ndarray, value_at_xstar: np.ndarray,
                         min_values: np.ndarray) -> GapSplit:
    mean_virtual = np.asarray(mean_virtual, dtype=float)
    value_at_xstar = np.asarray(value_at_xstar, dtype=float)
    min_values = np.asarray(min_values, dtype=float)
    virtual = float((mean_virtual - value_at_xstar).sum())
    instant = float((mean_virtual - min_values).sum())
    comparator = float((value_at_xstar - min_values).sum())
    scale = 1.0 + abs(virtual) + abs(instant) + abs(comparator)
    err = abs(virtual + comparator - instant) / scale
    return GapSplit(virtual, instant, comparator, err)


# ---------------------------------------------------------------------------
# aggregate report

@dataclass
class BoundReport:
    """Everything the result document says about theory vs measurement."""

    convex: ConvexBoundTerms | None
    strong: StrongBoundTerms | None
    empirical_regret: float
    empirical_regret_se: float
    bound_total: float | None
    bound_ratio: float | None          # empirical / bound_total
    audits: dict = field(default_factory=dict)
    projected_steps: int = 0

    def to_dict(self) -> dict:
        def verdict_dict(v: AuditVerdict) -> dict:
            return {
                "name": v.name, "passed": v.passed, "lhs": v.lhs, "rhs": v.rhs,
                "slack": v.slack, "se": v.se, "detail": v.detail,
            }

        out: dict = {
            "empirical_regret": self.empirical_regret,
            "empirical_regret_se": self.empirical_regret_se,
            "bound_total": self.bound_total,
            "bound_ratio": self.bound_ratio,
            "projected_steps": self.projected_steps,
            "audits": {k: verdict_dict(v) for k, v in self.audits.items()},
        }
        if self.convex is not None:
            out["convex_terms"] = {
                "init_term": self.convex.init_term,
                "variance_term": self.convex.variance_term,
                "spatial_drift_term": self.convex.spatial_drift_term,
                "temporal_drift_term": self.convex.temporal_drift_term,
                "total": self.convex.total,
            }
        if self.strong is not None:
            out["strong_terms"] = {
                "log_term": self.strong.log_term,
                "drift_term": self.strong.drift_term,
                "head_error": self.strong.head_error,
                "head_error_cap": self.strong.head_error_cap,
                "burn_in": self.strong.burn_in,
                "burn_in_ceiling": self.strong.burn_in_ceiling,
                "total": self.strong.total,
            }
        return out
