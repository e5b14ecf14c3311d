"""Scenario configs, batch runs, output files, and run comparison.

A scenario is a single JSON file naming the query and error chains (by
builder recipe or explicit matrix), the token bucket, the discount, which
cost convention(s) to solve, and an optional sweep over the error chain's
erasure parameter.  :func:`run_scenario` solves and simulates every
(cost, sweep value) point and writes, under one output directory:

* ``policy_<COST>_<tag>.txt``  - the solved policy (and values) per point,
* ``metrics.csv``              - one row per point with the headline stats,
* ``phase_pmf_<COST>_<tag>.csv`` and ``ccdf_<COST>_<tag>.csv``,
* ``trace_<COST>_<tag>.csv``   - first seed's trajectory, when tracing,
* ``manifest.json``            - everything needed to reproduce the run.

Numbers in the CSVs are written with round-trip float formatting, so a
rerun from the manifest (same package, same backend) reproduces the files
byte for byte.
"""

from __future__ import annotations

import csv
import json
import os
import platform
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from ._backend import BACKEND
from ._version import __version__
from .chains import chain_from_descriptor
from .errors import ManifestMismatch
from .model import CostKind, ModelConfig
from .simulate import MetricsReport, SimConfig, simulate_policy, simulate_policy_seeds
from .solver import (
    SolveReport,
    policy_iteration,
    save_policy,
)

MANIFEST_SCHEMA = "qaoi.manifest.v1"
METRICS_SCHEMA = "qaoi.metrics.v1"
PHASE_PMF_SCHEMA = "qaoi.phase_pmf.v1"
CCDF_SCHEMA = "qaoi.ccdf.v1"
TRACE_SCHEMA = "qaoi.trace.v1"
COMPARE_SCHEMA = "qaoi.compare.v1"

METRICS_COLUMNS = [
    "scenario", "policy", "epsilon", "n_seeds", "horizon", "burn_in",
    "avg_aoi", "avg_qaoi", "n_queries", "transmit_rate", "delivery_rate",
    "token_mean", "clamp_occupancy", "iterations", "eval_sweeps", "converged",
]

_SWEEPABLE_KINDS = ("constant_error", "satellite_error")


@dataclass(frozen=True)
class ScenarioSpec:
    """Parsed scenario config; see the module docstring for the file layout."""

    name: str
    query_chain: dict[str, Any]
    error_chain: dict[str, Any]
    token_rate: float = 0.05
    bucket_size: int = 10
    delta_max_factor: int = 10
    discount: float = 0.75
    cost: str = "both"
    sweep: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.cost not in ("PQ", "QAPA", "both"):
            raise ValueError(f"cost must be PQ, QAPA, or both, got {self.cost!r}")
        if int(self.delta_max_factor) < 1:
            raise ValueError("delta_max_factor must be >= 1")
        object.__setattr__(self, "sweep", tuple(float(x) for x in self.sweep))
        object.__setattr__(self, "query_chain", dict(self.query_chain))
        object.__setattr__(self, "error_chain", dict(self.error_chain))
        if self.sweep and self.error_chain.get("kind") not in _SWEEPABLE_KINDS:
            raise ValueError(
                "sweeps substitute the erasure parameter and need a "
                f"{' or '.join(_SWEEPABLE_KINDS)} error chain"
            )
        chain_from_descriptor(self.query_chain)  # fail early on bad configs
        chain_from_descriptor(self.error_chain)

    def cost_kinds(self) -> list[CostKind]:
        if self.cost == "both":
            return [CostKind.PQ, CostKind.QAPA]
        return [CostKind(self.cost)]

    def sweep_values(self) -> list[float | None]:
        return list(self.sweep) if self.sweep else [None]

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "query_chain": dict(self.query_chain),
            "error_chain": dict(self.error_chain),
            "token_rate": self.token_rate,
            "bucket_size": self.bucket_size,
            "delta_max_factor": self.delta_max_factor,
            "discount": self.discount,
            "cost": self.cost,
            "sweep": list(self.sweep),
        }

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "ScenarioSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        missing = {"name", "query_chain", "error_chain"} - set(raw)
        if missing:
            raise ValueError(f"scenario config lacks keys: {sorted(missing)}")
        return cls(**raw)


def load_scenario(path: str | Path) -> ScenarioSpec:
    with open(path) as fh:
        return ScenarioSpec.from_dict(json.load(fh))


def save_scenario(spec: ScenarioSpec, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(spec.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def build_model(
    spec: ScenarioSpec, cost_kind: CostKind, epsilon: float | None = None
) -> ModelConfig:
    """Instantiate the decision process for one (cost, sweep value) point."""
    error_desc = dict(spec.error_chain)
    if epsilon is not None:
        if error_desc.get("kind") not in _SWEEPABLE_KINDS:
            raise ValueError("this error chain has no erasure parameter to sweep")
        error_desc["epsilon"] = float(epsilon)
    query = chain_from_descriptor(spec.query_chain)
    return ModelConfig(
        delta_max=spec.delta_max_factor * query.n_states,
        bucket_size=spec.bucket_size,
        token_rate=spec.token_rate,
        discount=spec.discount,
        cost_kind=cost_kind,
        error_chain=chain_from_descriptor(error_desc),
        query_chain=query,
    )


# ---------------------------------------------------------------------------
# CSV writers/readers (fixed, versioned schemas)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: Path, schema: str, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {schema}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def read_csv(path: str | Path) -> tuple[str, list[dict[str, str]]]:
    """Read any of the package CSVs; returns (schema line, rows as dicts)."""
    with open(path) as fh:
        schema = fh.readline().strip().lstrip("# ")
        return schema, list(csv.DictReader(fh))


def write_metrics_csv(path: str | Path, rows: list[dict[str, Any]]) -> None:
    _write_csv(
        Path(path), METRICS_SCHEMA, METRICS_COLUMNS,
        ([row[c] for c in METRICS_COLUMNS] for row in rows),
    )


def write_phase_pmf_csv(path: str | Path, report: MetricsReport) -> None:
    """Age distribution conditioned on slots-since-query; zero rows omitted."""
    def rows():
        for phase, pmf in sorted(report.phase_pmfs().items()):
            for age in np.nonzero(pmf)[0]:
                yield phase, int(age), pmf[age]

    _write_csv(Path(path), PHASE_PMF_SCHEMA, ["phase", "age", "probability"], rows())


def write_ccdf_csv(path: str | Path, report: MetricsReport) -> None:
    """P(age > d) for both metrics, d = 0..delta_max."""
    def rows():
        for metric, ccdf in (("aoi", report.aoi_ccdf), ("qaoi", report.qaoi_ccdf)):
            for d in range(report.delta_max + 1):
                yield metric, d, ccdf[d]

    _write_csv(Path(path), CCDF_SCHEMA, ["metric", "age", "probability"], rows())


def write_trace_csv(path: str | Path, report: MetricsReport) -> None:
    trace = report.trace
    if trace is None:
        raise ValueError("report carries no trace; simulate with record_trace")

    def rows():
        for i in range(len(trace.age)):
            yield (
                i + 1, trace.age[i], trace.tokens[i], trace.err_state[i],
                trace.query_state[i], trace.action[i], trace.delivered[i],
                trace.is_query[i],
            )

    _write_csv(
        Path(path), TRACE_SCHEMA,
        ["t", "age", "tokens", "err_state", "query_state", "action",
         "delivered", "is_query"],
        rows(),
    )


# ---------------------------------------------------------------------------
# batch runs


@dataclass
class RunResult:
    out_dir: Path
    manifest: dict[str, Any]
    metrics_rows: list[dict[str, Any]]
    solves: dict[tuple[str, str], SolveReport] = field(default_factory=dict)
    reports: dict[tuple[str, str], MetricsReport] = field(default_factory=dict)


def _point_tag(epsilon: float | None) -> str:
    return "base" if epsilon is None else f"eps{epsilon:g}"


def _effective_epsilon(spec: ScenarioSpec, epsilon: float | None):
    if epsilon is not None:
        return epsilon
    return spec.error_chain.get("epsilon", "")


def resolve_jobs(jobs: int | None) -> int:
    if jobs is not None:
        return max(1, int(jobs))
    env = os.environ.get("QAOI_JOBS")
    return max(1, int(env)) if env else 1


def resolve_out_dir(out_dir: str | Path | None, default_name: str) -> Path:
    if out_dir is not None:
        return Path(out_dir)
    env = os.environ.get("QAOI_OUT_DIR")
    if env:
        return Path(env)
    return Path("runs") / default_name


def run_scenario(
    spec: ScenarioSpec,
    sim: SimConfig,
    out_dir: str | Path | None = None,
    seeds: list[int] | None = None,
    n_seeds: int = 10,
    jobs: int | None = None,
    tol: float = 1e-9,
    write_policies: bool = True,
) -> RunResult:
    """Solve and simulate every scenario point; write the output files.

    ``seeds`` defaults to ``sim.seed, sim.seed + 1, ...`` (``n_seeds`` of
    them).  Solves warm-start from the previous sweep point.  With
    ``sim.record_trace`` the first seed's full trajectory is written per
    point.  Returns the in-memory results alongside the file paths.
    """
    out = resolve_out_dir(out_dir, spec.name)
    out.mkdir(parents=True, exist_ok=True)
    jobs = resolve_jobs(jobs)
    if seeds is None:
        seeds = [sim.seed + i for i in range(n_seeds)]
    if len(set(seeds)) != len(seeds):
        raise ValueError("seeds must be distinct")

    result = RunResult(out_dir=out, manifest={}, metrics_rows=[])
    points = []
    for cost in spec.cost_kinds():
        warm: SolveReport | None = None
        for eps in spec.sweep_values():
            model = build_model(spec, cost, eps)
            solve = policy_iteration(
                model,
                tol=tol,
                v0=None if warm is None else warm.value.values,
                policy0=None if warm is None else warm.policy.actions,
            )
            warm = solve
            tag = _point_tag(eps)
            key = (cost.value, tag)
            result.solves[key] = solve

            runs = []
            rest = seeds
            if sim.record_trace:
                traced = simulate_policy(
                    model, solve.policy, replace(sim, seed=seeds[0], record_trace=True)
                )
                runs.append(traced)
                rest = seeds[1:]
            if rest:
                runs.append(
                    simulate_policy_seeds(model, solve.policy, sim, list(rest), jobs=jobs)
                )
            report = runs[0] if len(runs) == 1 else MetricsReport.merge(runs)
            result.reports[key] = report

            files: dict[str, str] = {}
            if write_policies:
                fname = f"policy_{cost.value}_{tag}.txt"
                save_policy(out / fname, model, solve.policy, solve.value)
                files["policy"] = fname
            fname = f"phase_pmf_{cost.value}_{tag}.csv"
            write_phase_pmf_csv(out / fname, report)
            files["phase_pmf"] = fname
            fname = f"ccdf_{cost.value}_{tag}.csv"
            write_ccdf_csv(out / fname, report)
            files["ccdf"] = fname
            if sim.record_trace:
                fname = f"trace_{cost.value}_{tag}.csv"
                write_trace_csv(out / fname, runs[0])
                files["trace"] = fname

            result.metrics_rows.append({
                "scenario": spec.name,
                "policy": cost.value,
                "epsilon": _effective_epsilon(spec, eps),
                "n_seeds": len(seeds),
                "horizon": sim.horizon,
                "burn_in": report.burn_in,
                "avg_aoi": report.avg_aoi,
                "avg_qaoi": report.avg_qaoi,
                "n_queries": report.n_queries,
                "transmit_rate": report.transmit_rate,
                "delivery_rate": report.delivery_rate,
                "token_mean": report.token_mean,
                "clamp_occupancy": report.clamp_occupancy,
                "iterations": solve.iterations,
                "eval_sweeps": solve.eval_sweeps,
                "converged": solve.converged,
            })
            points.append({
                "policy": cost.value,
                "tag": tag,
                "epsilon": None if eps is None else float(eps),
                "config_hash": model.config_hash(),
                "files": files,
            })

    write_metrics_csv(out / "metrics.csv", result.metrics_rows)

    try:
        import numba
        numba_version = numba.__version__
    except ImportError:  # pragma: no cover
        numba_version = None
    result.manifest = {
        "schema": MANIFEST_SCHEMA,
        "package": {"name": "qaoi", "version": __version__},
        "backend": BACKEND,
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "numba": numba_version,
        },
        "scenario": spec.to_dict(),
        "sim": {
            "horizon": sim.horizon,
            "burn_in": sim.burn_in,
            "record_trace": sim.record_trace,
        },
        "seeds": [int(s) for s in seeds],
        "tol": tol,
        "write_policies": write_policies,
        "metrics_file": "metrics.csv",
        "points": points,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(result.manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return result


def load_manifest(run_dir: str | Path) -> dict[str, Any]:
    path = Path(run_dir)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.exists():
        raise ManifestMismatch(f"no manifest.json under {run_dir}")
    with open(path) as fh:
        manifest = json.load(fh)
    if manifest.get("schema") != MANIFEST_SCHEMA:
        raise ManifestMismatch(f"unsupported manifest schema {manifest.get('schema')!r}")
    return manifest


def rerun_from_manifest(
    run_dir: str | Path,
    out_dir: str | Path,
    jobs: int | None = None,
) -> RunResult:
    """Repeat a recorded run into ``out_dir``; CSV outputs are bit-identical."""
    manifest = load_manifest(run_dir)
    spec = ScenarioSpec.from_dict(manifest["scenario"])
    sim = SimConfig(
        horizon=manifest["sim"]["horizon"],
        burn_in=manifest["sim"]["burn_in"],
        seed=manifest["seeds"][0],
        record_trace=manifest["sim"]["record_trace"],
    )
    return run_scenario(
        spec,
        sim,
        out_dir=out_dir,
        seeds=list(manifest["seeds"]),
        jobs=jobs,
        tol=manifest["tol"],
        write_policies=manifest["write_policies"],
    )


# ---------------------------------------------------------------------------
# run comparison


def _comparable_axes(manifest: dict[str, Any]) -> dict[str, Any]:
    scenario = dict(manifest["scenario"])
    scenario.pop("name", None)
    scenario.pop("cost", None)  # which policies were solved may differ
    return {
        "scenario": scenario,
        "sim": manifest["sim"],
        "seeds": manifest["seeds"],
    }


def compare_policies(
    run_a: str | Path,
    run_b: str | Path,
    policy_a: str = "PQ",
    policy_b: str = "QAPA",
    out_path: str | Path | None = None,
) -> list[dict[str, Any]]:
    """Per-sweep-point deltas between a policy of run A and one of run B.

    The two runs must agree on every scenario axis (chains, bucket,
    discount, sweep grid) and on the simulation setup; pass the same
    directory twice to compare the PQ and QAPA policies of a single run.
    Positive gaps mean policy A did worse (higher age).
    """
    man_a = load_manifest(run_a)
    man_b = load_manifest(run_b)
    if _comparable_axes(man_a) != _comparable_axes(man_b):
        raise ManifestMismatch(
            "runs disagree on scenario axes, simulation setup, or seeds"
        )

    def rows_for(run_dir, manifest, policy):
        _, rows = read_csv(Path(run_dir) / manifest["metrics_file"])
        picked = {r["epsilon"]: r for r in rows if r["policy"] == policy}
        if not picked:
            raise ManifestMismatch(
                f"run {run_dir} has no rows for policy {policy!r}"
            )
        return picked

    rows_a = rows_for(run_a, man_a, policy_a)
    rows_b = rows_for(run_b, man_b, policy_b)
    if set(rows_a) != set(rows_b):
        raise ManifestMismatch("runs cover different sweep points")

    out_rows = []
    seen = []
    for point in man_a["points"]:  # manifest order = sweep order
        eps_key = str(_effective_epsilon(
            ScenarioSpec.from_dict(man_a["scenario"]), point["epsilon"]
        ))
        if eps_key in seen or eps_key not in rows_a:
            continue
        seen.append(eps_key)
        ra, rb = rows_a[eps_key], rows_b[eps_key]
        out_rows.append({
            "epsilon": eps_key,
            "policy_a": policy_a,
            "policy_b": policy_b,
            "avg_aoi_a": float(ra["avg_aoi"]),
            "avg_aoi_b": float(rb["avg_aoi"]),
            "avg_qaoi_a": float(ra["avg_qaoi"]),
            "avg_qaoi_b": float(rb["avg_qaoi"]),
            "aoi_gap": float(ra["avg_aoi"]) - float(rb["avg_aoi"]),
            "qaoi_gap": float(ra["avg_qaoi"]) - float(rb["avg_qaoi"]),
        })
    if out_path is not None:
        header = list(out_rows[0].keys())
        _write_csv(
            Path(out_path), COMPARE_SCHEMA, header,
            ([row[c] for c in header] for row in out_rows),
        )
    return out_rows
