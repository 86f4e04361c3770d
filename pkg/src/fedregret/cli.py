"""Command line entry points.

Verbs:
  run        simulate one configuration, write trace.csv / result.json / plots
  sweep      run a grid over config fields, write sweep.csv, fits and plots
  speedup    vary the client count at fixed horizon
  tau-study  vary the sync period at fixed horizon
  audit      re-check the per-step bounds on frozen states of one run
  selftest   run the built-in acceptance scenarios

Exit codes: 0 success, 2 bad configuration, 3 numerical divergence,
4 an audit or acceptance criterion failed.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import acceptance as acceptance_mod
from . import harness as harness_mod
from .bounds import AuditPreconditionError
from .core import ConfigError, ExperimentConfig, load_config
from .engine import DivergenceError
from .oracles import InsufficientBudgetError


def _add_common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("--config", required=config_required,
                   help="path to a JSON experiment configuration")
    p.add_argument("--out", default="./out", help="output directory")
    p.add_argument("--replicates", type=int, default=None,
                   help="override the replicate count")
    p.add_argument("--seed", type=int, default=None, help="override the seed")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads for replicate chunks")
    p.add_argument("--plots", choices=("on", "off"), default="on",
                   help="render SVG figures next to the data files")


def _load(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config)
    overrides = {}
    if args.replicates is not None:
        overrides["replicates"] = args.replicates
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        config = config.with_overrides(**overrides)
    return config


def _parse_int_list(text: str, label: str) -> list[int]:
    try:
        values = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"{label} must be a comma separated integer list") from exc
    if not values:
        raise ConfigError(f"{label} is empty")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedregret",
        description="simulate and audit federated online learning runs")
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="simulate one configuration")
    _add_common(p_run)

    p_sweep = sub.add_parser("sweep", help="run a grid of configurations")
    _add_common(p_sweep)

    p_speed = sub.add_parser("speedup", help="vary the client count")
    _add_common(p_speed)
    p_speed.add_argument("--clients", default="1,4,16",
                         help="comma separated client counts")

    p_tau = sub.add_parser("tau-study", help="vary the sync period")
    _add_common(p_tau)
    p_tau.add_argument("--taus", default="1,4,16,64",
                       help="comma separated sync periods")

    p_audit = sub.add_parser("audit", help="re-check bounds on frozen states")
    _add_common(p_audit)
    p_audit.add_argument("--states", type=int, default=5,
                         help="number of frozen states to audit")
    p_audit.add_argument("--budget", type=int, default=100_000,
                         help="Monte Carlo samples per audited quantity")

    p_self = sub.add_parser("selftest", help="run the acceptance scenarios")
    p_self.add_argument("--threads", type=int, default=1)

    return parser


def _cmd_run(args) -> int:
    config = _load(args)
    result = harness_mod.run_experiment(config, threads=args.threads)
    paths = harness_mod.emit_run(result, args.out, plots=args.plots == "on")
    for path in paths:
        print(path)
    return 0


def _cmd_sweep(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict) or "base" not in raw or "axes" not in raw:
        raise ConfigError("sweep config must be an object with 'base' and 'axes'")
    base = ExperimentConfig.from_dict(raw["base"])
    if args.replicates is not None:
        base = base.with_overrides(replicates=args.replicates)
    if args.seed is not None:
        base = base.with_overrides(seed=args.seed)
    result = harness_mod.sweep(base, raw["axes"], threads=args.threads)
    paths = harness_mod.emit_sweep(result, args.out, plots=args.plots == "on")
    for path in paths:
        print(path)
    return 0


def _cmd_speedup(args) -> int:
    config = _load(args)
    clients = _parse_int_list(args.clients, "--clients")
    study = harness_mod.speedup_study(config, clients, threads=args.threads)
    paths = harness_mod.emit_speedup(study, args.out, plots=args.plots == "on")
    for path in paths:
        print(path)
    return 0


def _cmd_tau(args) -> int:
    config = _load(args)
    taus = _parse_int_list(args.taus, "--taus")
    study = harness_mod.tau_study(config, taus, threads=args.threads)
    paths = harness_mod.emit_tau(study, args.out, plots=args.plots == "on")
    for path in paths:
        print(path)
    return 0


def _cmd_audit(args) -> int:
    config = _load(args)
    audit = harness_mod.audit_run(config, state_count=args.states,
                                  budget=args.budget, threads=args.threads)
    for name, verdict in sorted(audit["verdicts"].items()):
        status = "PASS" if verdict.passed else "FAIL"
        print(f"[{status}] {name}: lhs={verdict.lhs:.6g} rhs={verdict.rhs:.6g} "
              f"slack={verdict.slack:.6g}")
    print(f"split identity ok: {audit['split_identity_ok']}")
    return 0 if audit["all_passed"] else 4


def _cmd_selftest(args) -> int:
    results = acceptance_mod.run_all(threads=args.threads)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return 0 if not failed else 4


_DISPATCH = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "speedup": _cmd_speedup,
    "tau-study": _cmd_tau,
    "audit": _cmd_audit,
    "selftest": _cmd_selftest,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _DISPATCH[args.verb](args)
    except (ConfigError, AuditPreconditionError, InsufficientBudgetError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
