"""Command-line entry point: ``nonholo <subcommand> [flags]``.

Exit status is 0 only when config validation passed and no step failed.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from typing import Optional, Sequence

import numpy as np

from . import harness
from .errors import NonholoError
from .harness import ExperimentConfig
from .systems import CATALOG, get_system
from .verify import SUITES, run_suites

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="JSON config file; flags override its values")
    p.add_argument("--system", metavar="NAME", help=f"one of: {', '.join(CATALOG)}")
    p.add_argument("--method", metavar="NAME", help=f"one of: {', '.join(harness.METHODS)}")
    p.add_argument("--h", type=float, help="step size")
    p.add_argument("--t-end", dest="t_end", type=float, help="final time")
    p.add_argument("--seed", type=int, metavar="U64", help="seed for random initial states")
    p.add_argument("--out", metavar="PATH", help="output CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nonholo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("integrate", help="integrate one trajectory to CSV")
    _common(p)

    p = sub.add_parser("order-study", help="global error against a fine reference, with slope")
    _common(p)
    p.add_argument("--h-list", type=float, nargs="+", help="step sizes (at least 3)")
    p.add_argument("--reference-factor", type=int, help="h_ref = min(h) / factor (default 20)")

    p = sub.add_parser("variance-study", help="h^4-scaled ensemble variance of the energy error")
    _common(p)
    p.add_argument("--ensemble", type=int, help="number of random initial states")
    p.add_argument("--h-list", type=float, nargs="+", help="step sizes (default 0.1 0.05)")

    p = sub.add_parser("sleigh-stability", help="sleigh equilibria and the step-size bound")
    _common(p)
    p.add_argument("--rho2", type=float, help="rho2 on the equilibrium branch (default -0.6)")
    p.add_argument("--rho1", type=float, nargs="+", help="initial rho1 values (default 0.001 -0.001)")
    p.add_argument("--steps", type=int, help="number of steps (default 2000)")

    sub.add_parser("list-systems", help="show the system catalog")

    p = sub.add_parser("verify", help="run the invariant suites")
    p.add_argument("--suite", nargs="+", choices=list(SUITES), help="subset of suites")
    p.add_argument("--seed", type=int, default=0)
    return parser


# per-subcommand defaults applied beneath the config file
DEFAULTS = {
    "sleigh-stability": dict(system="chaplygin-sleigh", h=0.5),
    "order-study": dict(t_end=10.0),
    "variance-study": dict(method="dla", t_end=200.0),
}


def load_config(args) -> ExperimentConfig:
    data = dict(DEFAULTS.get(args.command, {}))
    if args.config:
        with open(args.config) as fh:
            data.update(json.load(fh))
    base = ExperimentConfig.from_dict(data)
    kw = dict(system=args.system, method=args.method, h=args.h, t_end=args.t_end,
              seed=args.seed, out=args.out)
    for key in ("ensemble", "reference_factor", "h_list", "rho2", "steps"):
        kw[key] = getattr(args, key, None)
    if getattr(args, "rho1", None) is not None:
        kw["rho1_list"] = args.rho1
    return base.override(**kw)


def _cmd_integrate(config: ExperimentConfig) -> int:
    traj = harness.run_integrate(config)
    summary = dict(steps=len(traj.times) - 1, max_rel_energy_err=traj.max_rel_energy_error,
                   out=config.out)
    if traj.constraint is not None:
        summary["max_constraint_res"] = float(np.max(np.abs(traj.constraint)))
    if traj.discrete_constraint is not None:
        summary["max_discrete_constraint"] = float(np.max(np.abs(traj.discrete_constraint)))
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _cmd_order(config: ExperimentConfig) -> int:
    res = harness.run_order_study(config)
    for h, e in zip(res.h, res.errors):
        print(f"h={h:<10g} error={e:.6e}")
    print("slope=degenerate" if res.degenerate else f"slope={res.slope:.4f}")
    return EXIT_OK


def _cmd_variance(config: ExperimentConfig) -> int:
    table = harness.run_variance_study(config)
    for row in harness.variance_summary(table):
        print(json.dumps(row, sort_keys=True))
    return EXIT_OK


def _cmd_sleigh(config: ExperimentConfig) -> int:
    p = dict(m=1.0, a=1.0, J=8.0)
    p.update(config.params if config.system == "chaplygin-sleigh" else {})
    method = config.method if config.method in harness.REDUCED_METHODS else "dg-gonzalez"
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = harness.run_sleigh_stability(
            J=p["J"], a=p["a"], m=p["m"], h=config.h,
            rho2=config.rho2, rho1_list=config.rho1_list, steps=config.steps, q0=config.q0,
            method=method, out=config.out, solver=config.solver)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(json.dumps(report.to_dict(), sort_keys=True))
    return EXIT_OK


def _cmd_list() -> int:
    for name in CATALOG:
        e = get_system(name)
        forms = [f for f, present in (("canonical", e.mechanical), ("reduced", e.reduced)) if present is not None]
        params = ", ".join(f"{k}={v:g}" if isinstance(v, float) else f"{k}={v}" for k, v in e.params.items())
        print(f"{name:<18} forms={'+'.join(forms):<18} {params}")
        print(f"{'':<18} {e.description}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    results = run_suites(args.suite, seed=args.seed)
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_FAILED


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-systems":
        return _cmd_list()
    if args.command == "verify":
        return _cmd_verify(args)
    try:
        config = load_config(args)
        if args.command != "sleigh-stability":
            config.validate()
    except (OSError, ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    handlers = {
        "integrate": _cmd_integrate,
        "order-study": _cmd_order,
        "variance-study": _cmd_variance,
        "sleigh-stability": _cmd_sleigh,
    }
    try:
        return handlers[args.command](config)
    except (ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonholoError as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
