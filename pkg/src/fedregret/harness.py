"""Experiment orchestration: runs, sweeps, scaling fits, studies, reports.

run_experiment builds the problem (schedule, loss model, oracles, step
sizes), simulates all replicates in fixed-size chunks, and reduces traces in
chunk-index order so results are byte-stable for any thread count. Sweeps
and studies parallelize across cells the same way.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import adversary as adversary_mod
from . import bounds as bounds_mod
from . import engine as engine_mod
from . import losses as losses_mod
from . import oracles as oracles_mod
from .core import ConfigError, ExperimentConfig, TheoryConstants, resolve_step_sizes

CHUNK_ROWS = 64
MAX_SWEEP_CELLS = 10_000
SWEEPABLE_FIELDS = ("horizon", "sync_period", "num_clients", "dimension",
                    "seed", "replicates")


# ---------------------------------------------------------------------------
# problem assembly

@dataclass
class ProblemSetup:
    config: ExperimentConfig
    schedule: adversary_mod.AdversarySchedule
    model: losses_mod.LossModel
    oracle: object
    comparators: oracles_mod.ComparatorSet
    profile: oracles_mod.HeterogeneityProfile
    constants: TheoryConstants
    etas: np.ndarray


def build_problem(config: ExperimentConfig) -> ProblemSetup:
    schedule = adversary_mod.make_schedule(
        config.adversary_spec, config.num_clients, config.dimension, config.horizon)
    model = losses_mod.make_loss_model(config.loss_spec, config.dimension, schedule)
    stream = config.stream()
    oracle = oracles_mod.make_global_oracle(model, schedule, config.projection_radius, stream)
    comparators = oracles_mod.compute_comparators(oracle, config.projection_radius)
    profile = oracles_mod.compute_profile(
        model, schedule, config.projection_radius, comparators, oracle, stream)
    D = float(np.linalg.norm(config.start_point() - comparators.xstar))
    constants = TheoryConstants(
        L=model.L, mu=model.mu, D=D,
        sigma_bar_sq=profile.sigma_bar_sq, k_bar_sq=profile.k_bar_sq)
    etas = resolve_step_sizes(
        config.step_size_policy, config.horizon, config.sync_period,
        config.num_clients, constants)
    return ProblemSetup(config, schedule, model, oracle, comparators, profile,
                        constants, etas)


# ---------------------------------------------------------------------------
# experiment execution

@dataclass
class ExperimentResult:
    config: ExperimentConfig
    config_hash: str
    etas: np.ndarray
    sync_flag: np.ndarray
    regret_increments: np.ndarray     # (T,) replicate-mean per-step regret
    regret_curve: np.ndarray          # (T,) cumulative
    regret: float
    regret_se: float
    rep_final_regret: np.ndarray      # (R,)
    rep_sum_consensus: np.ndarray     # (R,)
    mean_virtual_gap: np.ndarray      # (T,) E[f_t(xbar_t)] - f_t(x*)
    mean_consensus: np.ndarray        # (T,)
    split: bounds_mod.GapSplit
    bound_report: bounds_mod.BoundReport
    decomp_gap_max: float
    decomp_absgap_max: float
    projected_steps: int
    sync_count: int
    setup: ProblemSetup
    states: list = field(default_factory=list)

    @property
    def profile(self) -> oracles_mod.HeterogeneityProfile:
        return self.setup.profile

    @property
    def comparators(self) -> oracles_mod.ComparatorSet:
        return self.setup.comparators

    @property
    def constants(self) -> TheoryConstants:
        return self.setup.constants


def _replicate_chunks(total: int) -> list[list[int]]:
    return [list(range(i, min(i + CHUNK_ROWS, total)))
            for i in range(0, total, CHUNK_ROWS)]


def run_experiment(config: ExperimentConfig, threads: int = 1,
                   freeze_at=()) -> ExperimentResult:
    """Run all replicates and reduce to replicate-mean curves and reports."""
    setup = build_problem(config)
    T, R = config.horizon, config.replicates
    chunks = _replicate_chunks(R)

    def run_chunk(i: int, rows: list[int]) -> engine_mod.BatchSummary:
        fz = freeze_at if i == 0 else ()
        return engine_mod.run_batch(config, setup.model, setup.schedule,
                                    setup.oracle, setup.etas, rows, freeze_at=fz)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(run_chunk, i, rows) for i, rows in enumerate(chunks)]
            summaries = [f.result() for f in futures]
    else:
        summaries = [run_chunk(i, rows) for i, rows in enumerate(chunks)]

    step_clients = np.zeros(T)
    step_virtual = np.zeros(T)
    step_consensus = np.zeros(T)
    rep_clients = np.concatenate([s.rep_sum_expected_clients for s in summaries])
    rep_virtual = np.concatenate([s.rep_sum_expected_virtual for s in summaries])
    rep_consensus = np.concatenate([s.rep_sum_consensus for s in summaries])
    decomp_gap = -np.inf
    decomp_absgap = 0.0
    projected = 0
    states = []
    for s in summaries:
        step_clients += s.step_sum_expected_clients
        step_virtual += s.step_sum_expected_virtual
        step_consensus += s.step_sum_consensus
        decomp_gap = max(decomp_gap, s.decomp_gap_max)
        decomp_absgap = max(decomp_absgap, s.decomp_absgap_max)
        projected += s.projected_steps
        states.extend(s.states)

    comp = setup.comparators
    value_at_xstar = comp.value_at_xstar
    mean_clients = step_clients / R
    regret_increments = mean_clients - value_at_xstar
    regret_curve = np.cumsum(regret_increments)
    regret = float(regret_curve[-1])
    rep_final = rep_clients - float(value_at_xstar.sum())
    regret_se = float(rep_final.std(ddof=1) / math.sqrt(R)) if R > 1 else 0.0
    mean_virtual = step_virtual / R
    mean_virtual_gap = mean_virtual - value_at_xstar
    mean_consensus = step_consensus / R

    split = bounds_mod.split_optimality_gap(mean_virtual, value_at_xstar, comp.min_values)
    mean_instant_gap_sum = split.instant_gap_sum

    audits = {
        "smoothness_decomposition": bounds_mod.audit_smoothness_decomposition(
            float(decomp_gap), float(decomp_absgap), setup.model.family),
    }
    try:
        audits["consensus_drift"] = bounds_mod.audit_consensus_drift(
            rep_consensus, setup.etas, config.sync_period, setup.model.L,
            setup.profile, mean_instant_gap_sum)
    except bounds_mod.AuditPreconditionError:
        pass  # non-constant schedule or too few replicates; audit not defined

    constants = setup.constants
    profile = setup.profile
    convex = None
    strong = None
    if float(np.ptp(setup.etas)) == 0.0:
        convex = bounds_mod.evaluate_convex_bound(
            T, config.num_clients, config.sync_period, float(setup.etas[0]),
            constants.L, constants.D, profile.sigma_bar_sq, profile.zeta_bar_sq,
            profile.k_bar_sq)
    if constants.mu > 0 and config.step_size_policy.kind == "decaying_strongly_convex":
        strong = bounds_mod.evaluate_strong_bound(
            T, config.num_clients, config.sync_period, constants.L, constants.mu,
            profile.sigma_max_sq, profile.zeta_max_sq, profile.k_max_sq,
            mean_virtual_gap, D=constants.D, bounded=config.bounded)

    if config.step_size_policy.kind == "decaying_strongly_convex" and strong is not None:
        bound_total = strong.total
    elif convex is not None:
        bound_total = convex.total
    else:
        bound_total = None
    ratio = (regret / bound_total) if bound_total and bound_total > 0 else None

    report = bounds_mod.BoundReport(
        convex=convex, strong=strong,
        empirical_regret=regret, empirical_regret_se=regret_se,
        bound_total=bound_total, bound_ratio=ratio,
        audits=audits, projected_steps=projected)

    return ExperimentResult(
        config=config,
        config_hash=config.config_hash(),
        etas=setup.etas,
        sync_flag=summaries[0].sync_flag,
        regret_increments=regret_increments,
        regret_curve=regret_curve,
        regret=regret,
        regret_se=regret_se,
        rep_final_regret=rep_final,
        rep_sum_consensus=rep_consensus,
        mean_virtual_gap=mean_virtual_gap,
        mean_consensus=mean_consensus,
        split=split,
        bound_report=report,
        decomp_gap_max=float(decomp_gap),
        decomp_absgap_max=float(decomp_absgap),
        projected_steps=projected,
        sync_count=int(summaries[0].sync_flag.sum()),
        setup=setup,
        states=states,
    )


def audit_run(config: ExperimentConfig, state_count: int = 5,
              budget: int = 100_000, threads: int = 1) -> dict:
    """Run the experiment and all inequality audits, including the
    mean-gradient-norm check at frozen states."""
    T = config.horizon
    ts = np.unique(np.clip(np.round(np.linspace(1, T, state_count)).astype(int), 1, T))
    result = run_experiment(config, threads=threads, freeze_at=set(int(t) for t in ts))
    verdicts = dict(result.bound_report.audits)
    stream = config.stream()
    for state in result.states:
        v = bounds_mod.audit_mean_gradient_norm(
            result.setup.model, result.setup.schedule, state, result.setup.oracle,
            result.profile, result.comparators.min_values, budget, stream)
        verdicts[f"mean_gradient_norm@t{state.t}"] = v
    identity_ok = result.split.identity_error <= 1e-9
    return {
        "result": result,
        "verdicts": verdicts,
        "split_identity_ok": identity_ok,
        "all_passed": identity_ok and all(v.passed for v in verdicts.values()),
    }


# ---------------------------------------------------------------------------
# scaling fits

@dataclass
class FitResult:
    kind: str               # "power": y = coef * T^exponent; "log": y = slope*ln T + intercept
    params: dict
    r_squared: float
    stderr: dict
    n: int

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params),
                "r_squared": self.r_squared, "stderr": dict(self.stderr), "n": self.n}


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float, float]:
    """slope, intercept, r_squared, stderr_slope for y = slope*x + intercept."""
    n = x.size
    mx, my = float(x.mean()), float(y.mean())
    sxx = float(((x - mx) ** 2).sum())
    if sxx == 0:
        raise ConfigError("scaling fit needs at least two distinct x values")
    sxy = float(((x - mx) * (y - my)).sum())
    slope = sxy / sxx
    intercept = my - slope * mx
    resid = y - (slope * x + intercept)
    ss_res = float((resid ** 2).sum())
    ss_tot = float(((y - my) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    se = math.sqrt(ss_res / (n - 2) / sxx) if n > 2 else float("nan")
    return slope, intercept, r2, se


def fit_power_law(horizons, values) -> FitResult:
    """Least squares for y = coef * T^exponent in log-log space."""
    x = np.asarray(horizons, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.size != y.size or x.size < 3:
        raise ConfigError("power-law fit needs at least 3 (T, value) pairs")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ConfigError("power-law fit needs positive horizons and values")
    slope, intercept, r2, se = _ols(np.log(x), np.log(y))
    return FitResult(
        kind="power",
        params={"exponent": slope, "coefficient": math.exp(intercept)},
        r_squared=r2,
        stderr={"exponent": se},
        n=int(x.size),
    )


def fit_log_law(horizons, values) -> FitResult:
    """Least squares for y = slope * ln T + intercept (linear space)."""
    x = np.asarray(horizons, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.size != y.size or x.size < 3:
        raise ConfigError("log-law fit needs at least 3 (T, value) pairs")
    if np.any(x <= 0):
        raise ConfigError("log-law fit needs positive horizons")
    slope, intercept, r2, se = _ols(np.log(x), y)
    return FitResult(
        kind="log",
        params={"slope": slope, "intercept": intercept},
        r_squared=r2,
        stderr={"slope": se},
        n=int(x.size),
    )


# ---------------------------------------------------------------------------
# sweeps and studies

@dataclass
class CellResult:
    overrides: dict
    result: ExperimentResult


@dataclass
class SweepResult:
    base_config: ExperimentConfig
    axes: dict
    cells: list[CellResult]
    fits: dict


def _run_cells(configs: list[ExperimentConfig], threads: int) -> list[ExperimentResult]:
    if threads > 1 and len(configs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(run_experiment, c, 1) for c in configs]
            return [f.result() for f in futures]
    return [run_experiment(c, threads) for c in configs]


def sweep(base_config: ExperimentConfig, axes: dict, threads: int = 1) -> SweepResult:
    """Cartesian sweep over config fields; fits scaling laws on a horizon axis."""
    if not axes:
        raise ConfigError("sweep needs at least one axis")
    for key in axes:
        if key not in SWEEPABLE_FIELDS:
            raise ConfigError(f"cannot sweep over {key!r}; allowed: {SWEEPABLE_FIELDS}")
        if not isinstance(axes[key], (list, tuple)) or not axes[key]:
            raise ConfigError(f"sweep axis {key!r} must be a nonempty list")
    keys = sorted(axes)
    combos = list(itertools.product(*(axes[k] for k in keys)))
    if len(combos) > MAX_SWEEP_CELLS:
        raise ConfigError(f"sweep of {len(combos)} cells exceeds the cap of {MAX_SWEEP_CELLS}")
    overrides = [dict(zip(keys, combo)) for combo in combos]
    configs = [base_config.with_overrides(**ov) for ov in overrides]
    results = _run_cells(configs, threads)
    cells = [CellResult(ov, res) for ov, res in zip(overrides, results)]

    fits = {}
    if keys == ["horizon"] and len(cells) >= 3:
        hs = [c.overrides["horizon"] for c in cells]
        ys = [c.result.regret for c in cells]
        if all(y > 0 for y in ys):
            fits["power"] = fit_power_law(hs, ys)
            fits["log"] = fit_log_law(hs, ys)
    return SweepResult(base_config, dict(axes), cells, fits)


@dataclass
class SpeedupStudy:
    rows: list[dict]
    baseline_clients: int
    strictly_decreasing_2se: bool
    results: list[ExperimentResult] = field(default_factory=list, repr=False)


def speedup_study(base_config: ExperimentConfig, client_counts, threads: int = 1) -> SpeedupStudy:
    """Regret as a function of the client count, with variance-reduction ratios.

    Flags configurations where theory says averaging no longer buys anything
    because the temporal-heterogeneity term dominates sigma^2/M.
    """
    counts = list(client_counts)
    if sorted(set(counts)) != counts:
        raise ConfigError("client counts must be strictly increasing")
    configs = [base_config.with_overrides(num_clients=int(m)) for m in counts]
    results = _run_cells(configs, threads)
    base = results[0]
    rows = []
    for m, res in zip(counts, results):
        c = res.constants
        prof = res.profile
        dominated = prof.sigma_bar_sq / m < c.L * prof.k_bar_sq
        rows.append({
            "num_clients": int(m),
            "regret": res.regret,
            "regret_se": res.regret_se,
            "ratio_vs_baseline": res.regret / base.regret if base.regret > 0 else float("nan"),
            "eta": float(res.etas[0]),
            "sync_count": res.sync_count,
            "temporal_dominated": bool(dominated),
        })
    decreasing = all(
        rows[i]["regret"] - rows[i + 1]["regret"]
        > 2.0 * math.hypot(rows[i]["regret_se"], rows[i + 1]["regret_se"])
        for i in range(len(rows) - 1)
    )
    return SpeedupStudy(rows=rows, baseline_clients=int(counts[0]),
                        strictly_decreasing_2se=decreasing, results=results)


def recommended_sync_period(horizon: int, num_clients: int) -> int:
    """tau* = ceil(T^(1/4) / M^(3/4)), snapped before the ceiling so float
    dust cannot bump an exact integer up a notch."""
    x = horizon ** 0.25 / num_clients ** 0.75
    return max(1, int(math.ceil(round(x, 9))))


@dataclass
class TauStudy:
    rows: list[dict]
    recommended: int
    results: list[ExperimentResult] = field(default_factory=list, repr=False)


def tau_study(base_config: ExperimentConfig, sync_periods, threads: int = 1) -> TauStudy:
    """Regret across sync periods plus the theory-suggested tau*."""
    taus = [int(t) for t in sync_periods]
    if sorted(set(taus)) != taus or taus[0] < 1:
        raise ConfigError("sync periods must be strictly increasing and >= 1")
    configs = [base_config.with_overrides(sync_period=t) for t in taus]
    results = _run_cells(configs, threads)
    rows = []
    for tau, res in zip(taus, results):
        rows.append({
            "sync_period": tau,
            "regret": res.regret,
            "regret_se": res.regret_se,
            "eta": float(res.etas[0]),
            "eta_last": float(res.etas[-1]),
            "sync_count": res.sync_count,
        })
    rec = recommended_sync_period(base_config.horizon, base_config.num_clients)
    return TauStudy(rows=rows, recommended=rec, results=results)


# ---------------------------------------------------------------------------
# report emission

def _py(value):
    """Recursively convert numpy scalars/arrays so json can serialize them."""
    if isinstance(value, np.ndarray):
        return [_py(v) for v in value.tolist()]
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, dict):
        return {k: _py(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_py(v) for v in value]
    return value


def _fmt(value) -> str:
    """Full round-trip decimal formatting for CSV floats."""
    return repr(float(value))


def write_trace_csv(path: str, result: ExperimentResult) -> None:
    """Replicate-mean trace: one row per step with the profile columns."""
    prof = result.profile
    sync = result.sync_flag.astype(int)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "regret_cum", "V_t", "zeta_sq", "K_sq",
                         "sigma_sq", "eta_t", "sync_flag"])
        for i in range(result.config.horizon):
            writer.writerow([
                str(i + 1),
                _fmt(result.regret_curve[i]),
                _fmt(result.mean_consensus[i]),
                _fmt(prof.zeta_sq[i]),
                _fmt(prof.k_sq[i]),
                _fmt(prof.sigma_sq[i]),
                _fmt(result.etas[i]),
                str(int(sync[i])),
            ])


def result_document(result: ExperimentResult) -> dict:
    comp = result.comparators
    prof = result.profile
    c = result.constants
    doc = {
        "config": result.config.to_dict(),
        "config_hash": result.config_hash,
        "regret": result.regret,
        "regret_se": result.regret_se,
        "eta_first": float(result.etas[0]),
        "eta_last": float(result.etas[-1]),
        "sync_count": result.sync_count,
        "comparator": {
            "xstar": comp.xstar,
            "method": comp.method,
            "residual_xstar": comp.residual_xstar,
            "residual_per_step": comp.residual_per_step,
        },
        "constants": {"L": c.L, "mu": c.mu, "D": c.D},
        "profile": {
            "zeta_bar_sq": prof.zeta_bar_sq,
            "k_bar_sq": prof.k_bar_sq,
            "sigma_bar_sq": prof.sigma_bar_sq,
            "zeta_max_sq": prof.zeta_max_sq,
            "k_max_sq": prof.k_max_sq,
            "sigma_max_sq": prof.sigma_max_sq,
            "methods": prof.methods,
        },
        "split": {
            "virtual_regret_sum": result.split.virtual_regret_sum,
            "instant_gap_sum": result.split.instant_gap_sum,
            "comparator_gap_sum": result.split.comparator_gap_sum,
            "identity_error": result.split.identity_error,
        },
        "bound_report": result.bound_report.to_dict(),
    }
    return _py(doc)


def write_json(path: str, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_py(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")


def emit_run(result: ExperimentResult, out_dir: str, plots: bool = True) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    trace_path = os.path.join(out_dir, "trace.csv")
    write_trace_csv(trace_path, result)
    paths.append(trace_path)
    json_path = os.path.join(out_dir, "result.json")
    write_json(json_path, result_document(result))
    paths.append(json_path)
    if plots:
        from . import plots as plots_mod
        paths.append(plots_mod.render_regret_curve(
            result, os.path.join(out_dir, "regret_curve.svg")))
    return paths


def _cell_label(overrides: dict) -> str:
    return "_".join(f"{k}{v}" for k, v in sorted(overrides.items()))


def sweep_document(res: SweepResult) -> dict:
    return _py({
        "base_config": res.base_config.to_dict(),
        "base_config_hash": res.base_config.config_hash(),
        "axes": res.axes,
        "cells": [{
            "overrides": cell.overrides,
            "config_hash": cell.result.config_hash,
            "regret": cell.result.regret,
            "regret_se": cell.result.regret_se,
            "eta_first": float(cell.result.etas[0]),
            "bound_total": cell.result.bound_report.bound_total,
            "bound_ratio": cell.result.bound_report.bound_ratio,
        } for cell in res.cells],
        "fits": {k: f.to_dict() for k, f in res.fits.items()},
    })


def emit_sweep(res: SweepResult, out_dir: str, plots: bool = True,
               cell_traces: bool = True) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    csv_path = os.path.join(out_dir, "sweep.csv")
    keys = sorted(res.axes)
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(keys + ["regret", "regret_se", "eta_first", "bound_total"])
        for cell in res.cells:
            bt = cell.result.bound_report.bound_total
            writer.writerow(
                [str(cell.overrides[k]) for k in keys]
                + [_fmt(cell.result.regret), _fmt(cell.result.regret_se),
                   _fmt(cell.result.etas[0]), "" if bt is None else _fmt(bt)])
    paths.append(csv_path)
    json_path = os.path.join(out_dir, "result.json")
    write_json(json_path, sweep_document(res))
    paths.append(json_path)
    if cell_traces:
        for cell in res.cells:
            p = os.path.join(out_dir, f"trace_{_cell_label(cell.overrides)}.csv")
            write_trace_csv(p, cell.result)
            paths.append(p)
    if plots and "power" in res.fits:
        from . import plots as plots_mod
        paths.append(plots_mod.render_scaling(
            res, os.path.join(out_dir, "scaling.svg")))
    return paths


def emit_speedup(study: SpeedupStudy, out_dir: str, plots: bool = True) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    csv_path = os.path.join(out_dir, "speedup.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["num_clients", "regret", "regret_se", "ratio_vs_baseline",
                         "eta", "sync_count", "temporal_dominated"])
        for row in study.rows:
            writer.writerow([
                str(row["num_clients"]), _fmt(row["regret"]), _fmt(row["regret_se"]),
                _fmt(row["ratio_vs_baseline"]), _fmt(row["eta"]),
                str(row["sync_count"]), str(int(row["temporal_dominated"]))])
    paths.append(csv_path)
    json_path = os.path.join(out_dir, "result.json")
    write_json(json_path, {
        "rows": study.rows,
        "baseline_clients": study.baseline_clients,
        "strictly_decreasing_2se": study.strictly_decreasing_2se,
    })
    paths.append(json_path)
    if plots:
        from . import plots as plots_mod
        paths.append(plots_mod.render_speedup(
            study, os.path.join(out_dir, "speedup.svg")))
    return paths


def emit_tau(study: TauStudy, out_dir: str, plots: bool = True) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    csv_path = os.path.join(out_dir, "tau.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sync_period", "regret", "regret_se", "eta",
                         "eta_last", "sync_count"])
        for row in study.rows:
            writer.writerow([
                str(row["sync_period"]), _fmt(row["regret"]), _fmt(row["regret_se"]),
                _fmt(row["eta"]), _fmt(row["eta_last"]), str(row["sync_count"])])
    paths.append(csv_path)
    json_path = os.path.join(out_dir, "result.json")
    write_json(json_path, {"rows": study.rows, "recommended_sync_period": study.recommended})
    paths.append(json_path)
    if plots:
        from . import plots as plots_mod
        paths.append(plots_mod.render_tau(
            study, os.path.join(out_dir, "tau.svg")))
    return paths
