"""Command-line interface.

Verbs:

* ``qaoi solve``     - solve a scenario's policies and write policy files
* ``qaoi simulate``  - simulate a previously solved policy file
* ``qaoi run``       - solve + simulate + write all outputs (or rerun a manifest)
* ``qaoi analytic``  - tabulate the closed-form feedback-free laws
* ``qaoi compare``   - join two runs' metrics into per-point deltas

``QAOI_OUT_DIR`` and ``QAOI_JOBS`` override the default output directory
and worker count when the corresponding flags are not given.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import scenario as sc
from ._version import __version__
from .analytic import (
    SimpleCaseParams,
    ccdf_from_pmf,
    pmf_pq_aoi,
    pmf_pq_qaoi,
    pmf_qapa_aoi,
    pmf_qapa_qaoi,
    tabulate_pmf,
)
from .errors import IndexMismatch
from .model import CostKind
from .simulate import SimConfig, simulate_policy, simulate_policy_seeds
from .solver import load_policy, policy_iteration, save_policy

ANALYTIC_SCHEMA = "qaoi.analytic.v1"


def _add_sim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--horizon", type=int, default=1_000_000,
                   help="slots per seed (default 1e6)")
    p.add_argument("--seeds", type=int, default=10,
                   help="number of seeds (default 10)")
    p.add_argument("--seed", type=int, default=0,
                   help="root seed; seed i of the run is seed+i (default 0)")
    p.add_argument("--burn-in", type=int, default=None,
                   help="slots dropped from statistics (default: 10 query periods)")
    p.add_argument("--jobs", type=int, default=None,
                   help="parallel seed workers (default: QAOI_JOBS or 1)")
    p.add_argument("--trace", action="store_true",
                   help="record and write the first seed's full trajectory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qaoi",
        description="Query-aware age-of-information scheduling toolkit",
    )
    parser.add_argument("--version", action="version", version=f"qaoi {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a scenario's policies")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--out-dir", default=None, help="where to put policy files")
    p.add_argument("--tol", type=float, default=1e-9)

    p = sub.add_parser("simulate", help="simulate a solved policy file")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--policy", required=True, help="policy file from solve/run")
    p.add_argument("--epsilon", type=float, default=None,
                   help="sweep value the policy was solved at (if any)")
    p.add_argument("--out-dir", default=None)
    _add_sim_flags(p)

    p = sub.add_parser("run", help="solve, simulate, and write all outputs")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", help="scenario JSON file")
    src.add_argument("--from-manifest",
                     help="run directory (or its manifest.json) to reproduce")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--no-policies", action="store_true",
                   help="skip writing per-point policy files")
    _add_sim_flags(p)

    p = sub.add_parser("analytic", help="tabulate the closed-form laws")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--query-period", type=int, required=True)
    p.add_argument("--duty-cycle", type=float, required=True)
    p.add_argument("--spacing", type=int, default=None)
    p.add_argument("--offset", type=int, default=0)
    p.add_argument("--t-max", type=int, default=400)
    p.add_argument("--out", default="-", help="output CSV path (default stdout)")

    p = sub.add_parser("compare", help="per-point deltas between two runs")
    p.add_argument("run_a")
    p.add_argument("run_b")
    p.add_argument("--policy-a", default="PQ")
    p.add_argument("--policy-b", default="QAPA")
    p.add_argument("--out", default="-", help="output CSV path (default stdout)")

    return parser


def _cmd_solve(args) -> int:
    spec = sc.load_scenario(args.scenario)
    out = sc.resolve_out_dir(args.out_dir, spec.name)
    out.mkdir(parents=True, exist_ok=True)
    for cost in spec.cost_kinds():
        warm = None
        for eps in spec.sweep_values():
            model = sc.build_model(spec, cost, eps)
            solve = policy_iteration(
                model,
                tol=args.tol,
                v0=None if warm is None else warm.value.values,
                policy0=None if warm is None else warm.policy.actions,
            )
            warm = solve
            path = out / f"policy_{cost.value}_{sc._point_tag(eps)}.txt"
            save_policy(path, model, solve.policy, solve.value)
            print(f"{path}  rounds={solve.iterations} sweeps={solve.eval_sweeps}")
    return 0


def _cmd_simulate(args) -> int:
    spec = sc.load_scenario(args.scenario)
    loaded = load_policy(args.policy)
    cost = CostKind(loaded.meta["cost_kind"])
    model = sc.build_model(spec, cost, args.epsilon)
    if loaded.meta.get("config_hash") != model.config_hash():
        raise IndexMismatch(
            "policy file does not match this scenario point; check --epsilon"
        )
    sim = SimConfig(
        horizon=args.horizon, burn_in=args.burn_in, seed=args.seed,
        record_trace=args.trace,
    )
    seeds = [args.seed + i for i in range(args.seeds)]
    report = simulate_policy_seeds(
        model, loaded.policy, sim, seeds, jobs=sc.resolve_jobs(args.jobs)
    )
    out = sc.resolve_out_dir(args.out_dir, spec.name)
    out.mkdir(parents=True, exist_ok=True)
    tag = sc._point_tag(args.epsilon)
    sc.write_phase_pmf_csv(out / f"phase_pmf_{cost.value}_{tag}.csv", report)
    sc.write_ccdf_csv(out / f"ccdf_{cost.value}_{tag}.csv", report)
    if args.trace:
        traced = simulate_policy(
            model, loaded.policy,
            SimConfig(horizon=args.horizon, burn_in=args.burn_in,
                      seed=seeds[0], record_trace=True),
        )
        sc.write_trace_csv(out / f"trace_{cost.value}_{tag}.csv", traced)
    print(f"avg_aoi={report.avg_aoi!r} avg_qaoi={report.avg_qaoi!r} "
          f"n_queries={report.n_queries}")
    return 0


def _cmd_run(args) -> int:
    if args.from_manifest:
        src = Path(args.from_manifest)
        if src.name == "manifest.json":
            src = src.parent
        out = sc.resolve_out_dir(args.out_dir, src.name + "_rerun")
        result = sc.rerun_from_manifest(src, out, jobs=args.jobs)
    else:
        spec = sc.load_scenario(args.scenario)
        sim = SimConfig(
            horizon=args.horizon, burn_in=args.burn_in, seed=args.seed,
            record_trace=args.trace,
        )
        result = sc.run_scenario(
            spec, sim,
            out_dir=args.out_dir,
            n_seeds=args.seeds,
            jobs=args.jobs,
            tol=args.tol,
            write_policies=not args.no_policies,
        )
    for row in result.metrics_rows:
        print(
            f"{row['scenario']} {row['policy']:4s} eps={row['epsilon']!s:>6} "
            f"avg_aoi={row['avg_aoi']:.4f} avg_qaoi={row['avg_qaoi']:.4f}"
        )
    print(f"outputs in {result.out_dir}")
    return 0


def _cmd_analytic(args) -> int:
    params = SimpleCaseParams(
        epsilon=args.epsilon,
        query_period=args.query_period,
        duty_cycle=args.duty_cycle,
        spacing=args.spacing,
        offset=args.offset,
    )
    laws = [
        ("pq_aoi", pmf_pq_aoi),
        ("pq_qaoi", pmf_pq_qaoi),
        ("qapa_aoi", pmf_qapa_aoi),
        ("qapa_qaoi", pmf_qapa_qaoi),
    ]
    lines = [f"# {ANALYTIC_SCHEMA}", "law,age,pmf,ccdf"]
    for name, fn in laws:
        table = tabulate_pmf(fn, params, args.t_max)
        ccdf = ccdf_from_pmf(table)
        for age in range(1, args.t_max + 1):
            lines.append(f"{name},{age},{float(table[age])!r},{float(ccdf[age])!r}")
    text = "\n".join(lines) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    return 0


def _cmd_compare(args) -> int:
    rows = sc.compare_policies(
        args.run_a, args.run_b,
        policy_a=args.policy_a, policy_b=args.policy_b,
        out_path=None if args.out == "-" else args.out,
    )
    if args.out == "-":
        for row in rows:
            print(
                f"eps={row['epsilon']:>6} "
                f"aoi {row['avg_aoi_a']:.4f} vs {row['avg_aoi_b']:.4f} "
                f"(gap {row['aoi_gap']:+.4f})  "
                f"qaoi {row['avg_qaoi_a']:.4f} vs {row['avg_qaoi_b']:.4f} "
                f"(gap {row['qaoi_gap']:+.4f})"
            )
    return 0


_COMMANDS = {
    "solve": _cmd_solve,
    "simulate": _cmd_simulate,
    "run": _cmd_run,
    "analytic": _cmd_analytic,
    "compare": _cmd_compare,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"qaoi: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
