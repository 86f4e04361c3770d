"""Simulation loop for federated online SGD with periodic averaging.

Each step t: every client plays its iterate, draws one sample from the
schedule's (t, m) distribution, and takes a projected SGD step; when the
sync predicate fires ((t - 1 - sync_phase) mod tau == 0) the updated
iterates are replaced by their across-client mean.

Replicates run as rows of one vectorized block. Draws are keyed by
("data", t) with replicate rows indexed into a fixed counter block, so any
partition of replicates into chunks produces bit-identical trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import losses as losses_mod
from .core import ExperimentConfig, UNBOUNDED

DIVERGENCE_LIMIT = 1e12


class DivergenceError(RuntimeError):
    """Iterates left the trust region; step size too large or domain unbounded."""


# ---------------------------------------------------------------------------
# geometry helpers

def project(x: np.ndarray, radius) -> np.ndarray:
    """Euclidean projection of the trailing axis onto the origin-centered ball.

    radius may be core.UNBOUNDED, in which case x is returned unchanged.
    """
    if radius == UNBOUNDED:
        return np.asarray(x, dtype=float)
    x = np.asarray(x, dtype=float)
    radius = float(radius)
    norms = np.sqrt((x * x).sum(axis=-1, keepdims=True))
    factor = np.where(norms > radius, radius / np.maximum(norms, 1e-300), 1.0)
    return x * factor


def apply_sync(X: np.ndarray) -> np.ndarray:
    """Replace every client iterate by the across-client mean.

    X has shape (..., M, d); averaging runs over the M axis.
    """
    mean = X.mean(axis=-2, keepdims=True)
    return np.broadcast_to(mean, X.shape).copy()


def consensus_error(X: np.ndarray) -> np.ndarray | float:
    """V = (1/M) sum_m ||x_m - xbar||^2 over the trailing (M, d) axes."""
    X = np.asarray(X, dtype=float)
    M = X.shape[-2]
    dev = X - X.mean(axis=-2, keepdims=True)
    out = (dev * dev).sum(axis=(-2, -1)) / M
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# trace containers

@dataclass
class SimState:
    """Snapshot of one replicate just before the step-t update."""

    t: int
    replicate: int
    client_iterates: np.ndarray   # (M, d)
    virtual_average: np.ndarray   # (d,)
    eta_t: float


@dataclass
class TraceRecord:
    """Full per-step record of a single replicate."""

    replicate: int
    eta: np.ndarray               # (T,)
    sync_flag: np.ndarray         # (T,) bool; averaging ran after this step
    projected: np.ndarray         # (T,) bool; some client hit the boundary
    realized_losses: np.ndarray   # (T, M) sampled f(x_{t,m}, xi_{t,m})
    expected_losses: np.ndarray   # (T, M) f_t(x_{t,m}) under the oracle
    expected_virtual: np.ndarray  # (T,)   f_t(virtual average)
    consensus: np.ndarray         # (T,)   V_t
    final_iterates: np.ndarray    # (M, d) x_{T+1}
    iterates: np.ndarray | None = None   # (T, M, d) played iterates, optional
    states: list[SimState] = field(default_factory=list)


@dataclass
class BatchSummary:
    """Reduced trace over a block of replicates; memory stays O(R + T)."""

    rows: tuple[int, ...]
    eta: np.ndarray                    # (T,)
    sync_flag: np.ndarray              # (T,)
    step_sum_expected_clients: np.ndarray   # (T,) sum over rows of mean_m f_t(x_{t,m})
    step_sum_expected_virtual: np.ndarray   # (T,) sum over rows of f_t(xbar_t)
    step_sum_consensus: np.ndarray          # (T,) sum over rows of V_t
    step_sum_realized: np.ndarray           # (T,) sum over rows of mean_m sampled loss
    rep_sum_expected_clients: np.ndarray    # (R,) sum over t of mean_m f_t(x_{t,m})
    rep_sum_expected_virtual: np.ndarray    # (R,)
    rep_sum_consensus: np.ndarray           # (R,)
    decomp_gap_max: float              # max over (r, t) of (LHS - RHS) / (1 + |RHS|)
    decomp_absgap_max: float           # max over (r, t) of |LHS - RHS| / (1 + |RHS|)
    projected_steps: int
    final_iterates: np.ndarray         # (R, M, d)
    states: list[SimState] = field(default_factory=list)


# ---------------------------------------------------------------------------
# main loop

def _simulate(config: ExperimentConfig, model, schedule, oracle, etas: np.ndarray,
              rows: Sequence[int], *, full: bool, record_iterates: bool,
              freeze_at: Iterable[int], debug_checks: bool):
    T, M, d = config.horizon, config.num_clients, config.dimension
    rows = tuple(int(r) for r in rows)
    if not rows or any(r < 0 for r in rows):
        raise ValueError("replicate rows must be a nonempty list of indices >= 0")
    R = len(rows)
    block_rows = max(rows) + 1
    row_idx = np.asarray(rows, dtype=np.intp)
    etas = np.asarray(etas, dtype=float)
    if etas.shape != (T,):
        raise ValueError("step size schedule length must equal the horizon")

    stream = config.stream()
    means, variances = schedule.tables()
    sync = config.sync_steps()
    bounded = config.bounded
    radius = config.radius if bounded else None
    freeze_at = frozenset(int(t) for t in freeze_at)
    L = model.L

    X = np.tile(config.start_point(), (R, M, 1))
    if bounded:
        X = project(X, radius)

    step_exp_clients = np.zeros(T)
    step_exp_virtual = np.zeros(T)
    step_consensus = np.zeros(T)
    step_realized = np.zeros(T)
    rep_exp_clients = np.zeros(R)
    rep_exp_virtual = np.zeros(R)
    rep_consensus = np.zeros(R)
    decomp_gap_max = -np.inf
    decomp_absgap_max = 0.0
    projected_steps = 0
    states: list[SimState] = []

    if full:
        realized_full = np.zeros((T, R, M))
        expected_full = np.full((T, R, M), np.nan)
        virtual_full = np.full((T, R), np.nan)
        consensus_full = np.zeros((T, R))
        projected_full = np.zeros((T, R), dtype=bool)
        iterates_full = np.zeros((T, R, M, d)) if record_iterates else None

    for t in range(1, T + 1):
        eta_t = etas[t - 1]
        if t in freeze_at:
            xbar0 = X[0].mean(axis=0)
            states.append(SimState(t, rows[0], X[0].copy(), xbar0, float(eta_t)))

        samples = losses_mod.draw_step_batch(
            model, stream, ("data", t), block_rows, row_idx, means[t - 1], variances[t - 1])
        floss, grads = losses_mod.evaluate_batch(model, X, samples)

        xbar = X.mean(axis=1)
        dev = X - xbar[:, None, :]
        V = (dev * dev).sum(axis=(1, 2)) / M
        realized_mean = floss.mean(axis=1)

        if oracle is not None:
            exp_clients = oracle.value(t, X)          # (R, M)
            exp_virtual = oracle.value(t, xbar)       # (R,)
            cm = exp_clients.mean(axis=1)
            rhs = exp_virtual + 0.5 * L * V
            rel = (cm - rhs) / (1.0 + np.abs(rhs))
            decomp_gap_max = max(decomp_gap_max, float(rel.max()))
            decomp_absgap_max = max(decomp_absgap_max, float(np.abs(rel).max()))
            step_exp_clients[t - 1] = cm.sum()
            step_exp_virtual[t - 1] = exp_virtual.sum()
            rep_exp_clients += cm
            rep_exp_virtual += exp_virtual
        step_consensus[t - 1] = V.sum()
        step_realized[t - 1] = realized_mean.sum()
        rep_consensus += V

        if full:
            realized_full[t - 1] = floss
            consensus_full[t - 1] = V
            if oracle is not None:
                expected_full[t - 1] = exp_clients
                virtual_full[t - 1] = exp_virtual
            if record_iterates:
                iterates_full[t - 1] = X

        Xn = X - eta_t * grads
        hit = False
        if bounded:
            norms_sq = (Xn * Xn).sum(axis=-1)
            hit_mask = norms_sq > radius * radius
            if hit_mask.any():
                hit = True
                projected_steps += int(hit_mask.any(axis=1).sum())
                Xn = project(Xn, radius)
                if full:
                    projected_full[t - 1] = hit_mask.any(axis=1)
        if debug_checks and not hit:
            # virtual recursion: the across-client mean follows plain SGD on
            # the averaged gradients whenever no projection interferes
            want = xbar - eta_t * grads.mean(axis=1)
            got = Xn.mean(axis=1)
            err = np.abs(got - want).max()
            if err > 1e-12 * (1.0 + np.abs(want).max()):
                raise AssertionError(f"virtual average recursion broke at t={t}: err={err:g}")
        if sync[t - 1]:
            Xn = apply_sync(Xn)
        peak = float(np.abs(Xn).max())
        if not peak < DIVERGENCE_LIMIT:
            raise DivergenceError(
                f"iterates diverged at step t={t} (max |coordinate| = {peak:g}); "
                "reduce the step size or enable projection")
        X = Xn

    if full:
        out = []
        for i, r in enumerate(rows):
            out.append(TraceRecord(
                replicate=r,
                eta=etas.copy(),
                sync_flag=sync.copy(),
                projected=projected_full[:, i].copy(),
                realized_losses=realized_full[:, i],
                expected_losses=expected_full[:, i],
                expected_virtual=virtual_full[:, i],
                consensus=consensus_full[:, i],
                final_iterates=X[i].copy(),
                iterates=iterates_full[:, i] if record_iterates else None,
                states=[s for s in states if s.replicate == r],
            ))
        return out

    return BatchSummary(
        rows=rows,
        eta=etas.copy(),
        sync_flag=sync.copy(),
        step_sum_expected_clients=step_exp_clients,
        step_sum_expected_virtual=step_exp_virtual,
        step_sum_consensus=step_consensus,
        step_sum_realized=step_realized,
        rep_sum_expected_clients=rep_exp_clients,
        rep_sum_expected_virtual=rep_exp_virtual,
        rep_sum_consensus=rep_consensus,
        decomp_gap_max=float(decomp_gap_max),
        decomp_absgap_max=float(decomp_absgap_max),
        projected_steps=projected_steps,
        final_iterates=X.copy(),
        states=states,
    )


def run_batch(config: ExperimentConfig, model, schedule, oracle, etas, rows,
              freeze_at=(), debug_checks: bool = False) -> BatchSummary:
    """Simulate the replicate rows in one vectorized pass; reduced output."""
    return _simulate(config, model, schedule, oracle, etas, rows,
                     full=False, record_iterates=False,
                     freeze_at=freeze_at, debug_checks=debug_checks)


def run_replicate(config: ExperimentConfig, model, schedule, oracle, etas, replicate: int,
                  record_iterates: bool = False, freeze_at=(),
                  debug_checks: bool = False) -> TraceRecord:
    """Simulate a single replicate; full per-step trace."""
    traces = _simulate(config, model, schedule, oracle, etas, [replicate],
                       full=True, record_iterates=record_iterates,
                       freeze_at=freeze_at, debug_checks=debug_checks)
    return traces[0]
