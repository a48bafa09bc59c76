"""Command-line front end.

Subcommands: analyze (estimates from a unit-level CSV), simulate (Monte Carlo
metrics for a built-in scenario or a user science table), frt (Fisher
randomization test), diagnose (cluster-size regularity report).

Exit codes: 0 success, 2 usage/validation, 3 data insufficiency, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import data as d
from . import simulate as sim
from .errors import (EnumerationCapError, InsufficientDataError,
                     NumericalError, SchemaError)
from .estimators import REGISTRY, estimate_named
from .oracle import fisher_randomization_test, regularity_diagnostics

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INSUFFICIENT = 3
EXIT_NUMERICAL = 4

DEFAULT_ANALYZE = ("tau_i", "tau_i_adj", "tau_t", "tau_t_adj_nx")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _emit(rows: list[dict], fmt: str, output) -> None:
    """Write rows as an aligned table, CSV, or JSON."""
    out = sys.stdout if output is None else open(output, "w")
    try:
        if fmt == "json":
            json.dump(rows, out, indent=2)
            out.write("\n")
        elif fmt == "csv":
            cols = list(rows[0]) if rows else []
            out.write(",".join(cols) + "\n")
            for row in rows:
                out.write(",".join(repr(v) if isinstance(v, float) else str(v)
                                   for v in row.values()) + "\n")
        else:
            cols = list(rows[0]) if rows else []
            cells = [[_fmt(row[c]) for c in cols] for row in rows]
            widths = [max(len(c), *(len(r[j]) for r in cells)) if cells else len(c)
                      for j, c in enumerate(cols)]
            out.write("  ".join(c.ljust(w) for c, w in zip(cols, widths)).rstrip()
                      + "\n")
            for r in cells:
                out.write("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip()
                          + "\n")
    finally:
        if output is not None:
            out.close()


def _resolve_pi(sample: d.ClusteredSample, choice: str):
    if choice == "column":
        if sample.pi is None:
            raise SchemaError("--weights column requires a 'pi' column in the CSV")
        return sample.pi
    return d.resolve_weights(sample, choice)


def _estimator_list(arg: str | None, default) -> list[str]:
    names = list(default) if arg is None else [s.strip() for s in arg.split(",")
                                               if s.strip()]
    for name in names:
        if name not in REGISTRY:
            raise ValueError(f"unknown estimator {name!r}; choose from "
                             f"{sorted(REGISTRY)}")
    return names


def cmd_analyze(args) -> int:
    sample = d.load_sample_csv(args.input)
    names = _estimator_list(args.estimators, DEFAULT_ANALYZE)
    pi = _resolve_pi(sample, args.weights)
    rows = []
    for name in names:
        rep = estimate_named(sample, name, pi=pi, level=args.level)
        rows.append({"estimator": name, "estimate": rep.estimate,
                     "se": rep.se, "se_flavor": rep.se_flavor,
                     "ci_low": rep.ci_low, "ci_high": rep.ci_high,
                     "level": rep.level,
                     "recommended": bool(rep.recommended)})
    _emit(rows, args.format, args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = {}
    if args.config:
        cfg = sim.parse_scenario_config(args.config)
    scenario_id = args.id or cfg.get("id")
    r = args.R if args.R is not None else int(cfg.get("r", 1000))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    est_arg = args.estimators or cfg.get("estimators")
    names = _estimator_list(est_arg, sim.DEFAULT_ESTIMATORS)
    if r < 1:
        raise ValueError("--R must be >= 1")

    if args.science:
        science = d.load_science_csv(args.science)
        if args.e is None:
            raise ValueError("--science requires --e (treated cluster fraction)")
        e = args.e
    else:
        if scenario_id is None:
            raise ValueError("provide --id SCENARIO or --science CSV")
        science, meta = sim.make_scenario(scenario_id, seed=seed,
                                          m=args.M or
                                          (int(cfg["m"]) if "m" in cfg else None))
        e = args.e if args.e is not None else meta.e

    pi = np.full(science.m, 1.0 / science.m) if args.weights == "uniform" \
        else science.omega if args.weights == "omega" else science.pi
    metrics = sim.run_monte_carlo(science, e, names, r=r, seed=seed, pi=pi,
                                  level=args.level)
    _emit([m.as_dict() for m in metrics], args.format, args.output)
    return EXIT_OK


def cmd_frt(args) -> int:
    sample = d.load_sample_csv(args.input)
    if args.estimator not in REGISTRY:
        raise ValueError(f"unknown estimator {args.estimator!r}")
    res = fisher_randomization_test(sample, args.estimator, draws=args.R,
                                    exact=args.exact, seed=args.seed)
    rows = [{"estimator": args.estimator, "p_value": res.p_value,
             "statistic": res.statistic, "n_reference": res.n_reference,
             "mode": "exact" if res.exact else "monte_carlo",
             "zero_se_count": res.zero_se_count,
             "seed": -1 if res.seed is None else res.seed}]
    _emit(rows, args.format, args.output)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    sample = d.load_sample_csv(args.input)
    rep = regularity_diagnostics(sample)
    rows = [{"M": sample.m, "N": sample.n_total,
             "omega_max": rep.omega_max,
             "omega_tilde_max": rep.omega_tilde_max,
             "omega_tilde_second_moment": rep.omega_tilde_second_moment,
             "omega_tilde_fourth_moment": rep.omega_tilde_fourth_moment,
             "flags": ";".join(rep.flags) or "none"}]
    _emit(rows, args.format, args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clusterrct",
        description="Design-based analysis of cluster-randomized experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--format", choices=("table", "csv", "json"),
                       default="table")
        p.add_argument("--output", default=None, help="output path (default stdout)")
        p.add_argument("--level", type=float, default=0.95,
                       help="confidence level (default 0.95)")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("analyze", help="estimate treatment effects from a CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--estimators", default=None,
                   help="comma-separated registry names")
    p.add_argument("--weights", choices=("omega", "uniform", "column"),
                   default="uniform",
                   help="weight source for the pi-weighted estimators")
    common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="run a Monte Carlo scenario")
    p.add_argument("--id", choices=sim.SCENARIO_IDS, default=None)
    p.add_argument("--science", default=None,
                   help="user-supplied science-table CSV")
    p.add_argument("--e", type=float, default=None,
                   help="treated cluster fraction")
    p.add_argument("--M", type=int, default=None, help="override cluster count")
    p.add_argument("--R", type=int, default=None, help="replications")
    p.add_argument("--estimators", default=None)
    p.add_argument("--weights", choices=("omega", "uniform"),
                   default="uniform")
    p.add_argument("--config", default=None, help="key=value scenario config")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("frt", help="Fisher randomization test")
    p.add_argument("--input", required=True)
    p.add_argument("--estimator", default="tau_i")
    p.add_argument("--R", type=int, default=1000, help="Monte Carlo draws")
    p.add_argument("--exact", action="store_true",
                   help="enumerate every assignment")
    common(p)
    p.set_defaults(func=cmd_frt)

    p = sub.add_parser("diagnose", help="cluster-size regularity report")
    p.add_argument("--input", required=True)
    common(p)
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not 0 < args.level < 1:
        print("error: --level must be in (0, 1)", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (SchemaError, ValueError, EnumerationCapError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InsufficientDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
