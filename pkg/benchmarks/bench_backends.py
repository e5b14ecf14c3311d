#!/usr/bin/env python3
"""Time the compiled and pure-numpy backends on the same solver and
simulator workloads.

Backend selection happens at import time via QAOI_BACKEND, so each
measurement runs in its own subprocess; the parent collects the numbers
and prints a comparison table.  JIT compilation is absorbed by a small
warmup problem before anything is timed.

Usage: python3 benchmarks/bench_backends.py [--horizon N] [--tq N]
"""

import argparse
import json
import os
import subprocess
import sys
import time


def _build(tq):
    from qaoi import (
        CostKind,
        ModelConfig,
        build_constant_error,
        build_periodic_query,
    )

    return ModelConfig(
        delta_max=10 * tq,
        bucket_size=10,
        token_rate=0.05,
        discount=0.75,
        cost_kind=CostKind.QAPA,
        error_chain=build_constant_error(0.2),
        query_chain=build_periodic_query(tq),
    )


def measure(tq, horizon):
    import qaoi
    from qaoi import SimConfig, policy_iteration, simulate_policy

    warm = _build(4)
    policy_iteration(warm)
    simulate_policy(warm, policy_iteration(warm).policy, SimConfig(horizon=2000))

    model = _build(tq)
    t0 = time.perf_counter()
    sol = policy_iteration(model)
    solve_s = time.perf_counter() - t0

    t0 = time.perf_counter()
    rep = simulate_policy(model, sol.policy, SimConfig(horizon=horizon, seed=0))
    sim_s = time.perf_counter() - t0

    return {
        "backend": qaoi.BACKEND,
        "n_states": model.n_states,
        "solve_s": solve_s,
        "eval_sweeps": sol.eval_sweeps,
        "sim_s": sim_s,
        "slots_per_s": horizon / sim_s,
        "avg_qaoi": rep.avg_qaoi,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tq", type=int, default=40, help="query period (default 40)")
    ap.add_argument(
        "--horizon", type=int, default=2_000_000, help="simulated slots (default 2e6)"
    )
    ap.add_argument("--measure", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()

    if args.measure:
        json.dump(measure(args.tq, args.horizon), sys.stdout)
        return 0

    rows = []
    for backend in ("numba", "numpy"):
        env = dict(os.environ, QAOI_BACKEND=backend)
        cmd = [
            sys.executable, __file__, "--measure",
            "--tq", str(args.tq), "--horizon", str(args.horizon),
        ]
        out = subprocess.run(cmd, env=env, capture_output=True, text=True)
        if out.returncode != 0:
            sys.stderr.write(out.stderr)
            return out.returncode
        rows.append(json.loads(out.stdout))

    nb, np_ = rows
    if abs(nb["avg_qaoi"] - np_["avg_qaoi"]) > 1e-12:
        print("WARNING: backends disagree on simulated avg_qaoi", file=sys.stderr)

    print(f"model: {nb['n_states']} states, horizon {args.horizon} slots")
    print(f"{'':10s} {'solve':>10s} {'sweeps':>8s} {'simulate':>10s} {'slots/s':>12s}")
    for r in rows:
        print(
            f"{r['backend']:10s} {r['solve_s']:9.2f}s {r['eval_sweeps']:8d} "
            f"{r['sim_s']:9.2f}s {r['slots_per_s']:12,.0f}"
        )
    print(
        f"speedup    {np_['solve_s'] / nb['solve_s']:9.1f}x "
        f"{'':8s} {np_['sim_s'] / nb['sim_s']:9.1f}x"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
