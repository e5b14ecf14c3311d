"""Optimal transmission policies for the discounted scheduling process.

The main entry point is :func:`policy_iteration`; :func:`value_iteration`
and :func:`brute_force_optimal` compute the same optimum by different
routes and exist mostly as cross-checks.  Policies map every state to an
action, transmissions are inadmissible on an empty bucket, and action-value
ties resolve to staying silent.

Permanently-queried (PQ) models have costs and dynamics that ignore the
query component entirely, so by default the solvers collapse the query
chain to a single state, solve the reduced model, and broadcast the result
back over the query axis.  Pass ``exploit_pq_structure=False`` to force the
direct solve; both give the same table.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import _kernels
from ._backend import NUMBA_ENABLED
from ._vectorized import VectorizedBackup
from .chains import build_periodic_query
from .errors import IndexMismatch, InvalidAction, NonConvergence, TooLarge
from .model import (
    CostKind,
    KernelArrays,
    ModelConfig,
    enumerate_states,
    kernel_arrays,
    successors,
)

DEFAULT_TOL = 1e-9
SWEEP_CAP = 100_000
ROUND_CAP = 200
BRUTE_FORCE_STATE_CAP = 20


@dataclass(frozen=True, eq=False)
class Policy:
    """Action (0 or 1) per state, indexed canonically."""

    actions: np.ndarray

    def __post_init__(self) -> None:
        a = np.ascontiguousarray(np.asarray(self.actions), dtype=np.int8)
        if a.ndim != 1:
            raise ValueError("actions must be a flat array")
        a.setflags(write=False)
        object.__setattr__(self, "actions", a)

    def __len__(self) -> int:
        return len(self.actions)


@dataclass(frozen=True, eq=False)
class ValueFunction:
    """Expected discounted cost-to-go per state, indexed canonically."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.ascontiguousarray(np.asarray(self.values), dtype=np.float64)
        if v.ndim != 1:
            raise ValueError("values must be a flat array")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class SolveReport:
    policy: Policy
    value: ValueFunction
    iterations: int  # improvement rounds (or sweeps, for value iteration)
    eval_sweeps: int  # total backup sweeps spent
    converged: bool


def validate_policy(model: ModelConfig, policy: Policy) -> np.ndarray:
    """Check indexing and admissibility; returns the raw action array."""
    acts = policy.actions
    if len(acts) != model.n_states:
        raise IndexMismatch(
            f"policy has {len(acts)} entries, model has {model.n_states} states"
        )
    if np.any((acts != 0) & (acts != 1)):
        raise InvalidAction("policy actions must be 0 or 1")
    nE = model.error_chain.n_states
    nQ = model.query_chain.n_states
    grid = acts.reshape(model.delta_max, model.bucket_size + 1, nE, nQ)
    if np.any(grid[:, 0, :, :] == 1):
        raise InvalidAction("policy transmits in states with an empty token bucket")
    return acts


class _Engine:
    """Backend dispatch for repeated backups on one model."""

    def __init__(self, ka: KernelArrays):
        self.ka = ka
        self.args = (
            ka.eps,
            ka.pe_indptr, ka.pe_indices, ka.pe_probs,
            ka.pq_indptr, ka.pq_indices, ka.pq_probs,
            ka.qmass, ka.token_rate, ka.discount, ka.qapa,
        )
        self.vec = None if NUMBA_ENABLED else VectorizedBackup(ka)

    def _shape(self):
        ka = self.ka
        return (ka.delta_max, ka.bucket_size + 1, len(ka.eps), len(ka.qflag))

    def evaluate(self, pol, v0, tol, max_sweeps):
        ka = self.ka
        if NUMBA_ENABLED:
            v = v0.copy()
            for sweep in range(1, max_sweeps + 1):
                resid = _kernels.eval_sweep(v, pol, ka.delta_max, ka.bucket_size, *self.args)
                if resid <= tol:
                    return v, sweep
        else:
            v4 = v0.reshape(self._shape()).copy()
            pol4 = pol.reshape(self._shape())
            for sweep in range(1, max_sweeps + 1):
                v4, resid = self.vec.eval_step(v4, pol4)
                if resid <= tol:
                    return v4.reshape(-1), sweep
        raise NonConvergence(
            f"policy evaluation still at residual {resid:.3e} after {max_sweeps} sweeps"
        )

    def value_sweeps(self, v0, tol, max_sweeps):
        ka = self.ka
        if NUMBA_ENABLED:
            v = v0.copy()
            for sweep in range(1, max_sweeps + 1):
                resid = _kernels.vi_sweep(v, ka.delta_max, ka.bucket_size, *self.args)
                if resid <= tol:
                    return v, sweep
        else:
            v4 = v0.reshape(self._shape()).copy()
            for sweep in range(1, max_sweeps + 1):
                v4, resid = self.vec.vi_step(v4)
                if resid <= tol:
                    return v4.reshape(-1), sweep
        raise NonConvergence(
            f"value iteration still at residual {resid:.3e} after {max_sweeps} sweeps"
        )

    def greedy(self, v):
        ka = self.ka
        if NUMBA_ENABLED:
            pol = np.empty(ka.n_states, dtype=np.int8)
            _kernels.greedy_sweep(v, pol, ka.delta_max, ka.bucket_size, *self.args)
            return pol
        return self.vec.greedy(v.reshape(self._shape())).reshape(-1)

    def qvalues(self, v):
        ka = self.ka
        if NUMBA_ENABLED:
            q0 = np.empty(ka.n_states)
            q1 = np.empty(ka.n_states)
            _kernels.q_sweep(v, q0, q1, ka.delta_max, ka.bucket_size, *self.args)
            return q0, q1
        q0, q1 = self.vec.action_values(v.reshape(self._shape()))
        return q0.reshape(-1), q1.reshape(-1)


# ---------------------------------------------------------------------------
# PQ reduction helpers


def _reducible(model: ModelConfig, exploit: bool) -> bool:
    return (
        exploit
        and model.cost_kind is CostKind.PQ
        and model.query_chain.n_states > 1
    )


def _reduced_model(model: ModelConfig) -> ModelConfig:
    return replace(model, query_chain=build_periodic_query(1))


def _project(model: ModelConfig, flat: np.ndarray | None) -> np.ndarray | None:
    """Keep one query column of a full-space table (PQ tables are constant in q)."""
    if flat is None:
        return None
    nQ = model.query_chain.n_states
    if len(flat) == model.n_states // nQ:
        return flat
    return np.ascontiguousarray(flat.reshape(-1, nQ)[:, 0])


def _expand(model: ModelConfig, flat: np.ndarray) -> np.ndarray:
    """Tile a reduced-space table over the (fastest-varying) query axis."""
    return np.repeat(flat, model.query_chain.n_states)


# ---------------------------------------------------------------------------
# public solver API


def evaluate_policy(
    model: ModelConfig,
    policy: Policy,
    tol: float = DEFAULT_TOL,
    max_sweeps: int = SWEEP_CAP,
    v0: np.ndarray | None = None,
) -> ValueFunction:
    """Fixed point of the policy's backup operator, to sup-norm change ``tol``."""
    acts = validate_policy(model, policy)
    engine = _Engine(kernel_arrays(model))
    start = np.zeros(model.n_states) if v0 is None else np.asarray(v0, dtype=np.float64)
    if len(start) != model.n_states:
        raise IndexMismatch("v0 length does not match the model")
    v, _ = engine.evaluate(acts, start, tol, max_sweeps)
    return ValueFunction(v)


def improve_policy(model: ModelConfig, value: ValueFunction) -> Policy:
    """Greedy policy against ``value``; ties go to staying silent."""
    if len(value) != model.n_states:
        raise IndexMismatch("value length does not match the model")
    engine = _Engine(kernel_arrays(model))
    return Policy(engine.greedy(value.values))


def action_values(model: ModelConfig, value: ValueFunction) -> np.ndarray:
    """``(n_states, 2)`` table of backed-up action values; inadmissible = inf."""
    if len(value) != model.n_states:
        raise IndexMismatch("value length does not match the model")
    engine = _Engine(kernel_arrays(model))
    q0, q1 = engine.qvalues(value.values)
    return np.stack([q0, q1], axis=1)


def bellman_residual(model: ModelConfig, value: ValueFunction) -> float:
    """Sup-norm distance of ``value`` from one optimality backup of itself."""
    q = action_values(model, value)
    return float(np.max(np.abs(np.min(q, axis=1) - value.values)))


def policy_iteration(
    model: ModelConfig,
    tol: float = DEFAULT_TOL,
    max_sweeps: int = SWEEP_CAP,
    max_rounds: int = ROUND_CAP,
    exploit_pq_structure: bool = True,
    v0: np.ndarray | None = None,
    policy0: np.ndarray | None = None,
) -> SolveReport:
    """Howard iteration from the all-silent policy (or a warm start).

    Stops when improvement returns the evaluated policy unchanged, or when
    every state that still flips has an action-value gap below ``10 * tol``
    (tie churn at the evaluation noise floor).  Raises
    :class:`NonConvergence` after ``max_rounds`` improvement rounds.
    """
    if _reducible(model, exploit_pq_structure):
        red = policy_iteration(
            _reduced_model(model),
            tol=tol,
            max_sweeps=max_sweeps,
            max_rounds=max_rounds,
            exploit_pq_structure=False,
            v0=_project(model, v0),
            policy0=_project(model, policy0),
        )
        return SolveReport(
            policy=Policy(_expand(model, red.policy.actions)),
            value=ValueFunction(_expand(model, red.value.values)),
            iterations=red.iterations,
            eval_sweeps=red.eval_sweeps,
            converged=red.converged,
        )

    n = model.n_states
    engine = _Engine(kernel_arrays(model))
    v = np.zeros(n) if v0 is None else np.asarray(v0, dtype=np.float64).copy()
    if policy0 is not None:
        pol = np.ascontiguousarray(policy0, dtype=np.int8)
    elif v0 is not None:
        pol = engine.greedy(v)
    else:
        pol = np.zeros(n, dtype=np.int8)
    if len(v) != n or len(pol) != n:
        raise IndexMismatch("warm start does not match the model")

    total_sweeps = 0
    for rounds in range(1, max_rounds + 1):
        v, sweeps = engine.evaluate(pol, v, tol, max_sweeps)
        total_sweeps += sweeps
        new_pol = engine.greedy(v)
        if np.array_equal(new_pol, pol):
            return SolveReport(Policy(pol), ValueFunction(v), rounds, total_sweeps, True)
        changed = new_pol != pol
        q0, q1 = engine.qvalues(v)
        gap = np.max(np.abs(q0[changed] - q1[changed]))
        if gap <= 10.0 * tol:
            # remaining flips are ties at the noise floor; settle on the
            # greedy (silence-preferring) one
            v, sweeps = engine.evaluate(new_pol, v, tol, max_sweeps)
            total_sweeps += sweeps
            return SolveReport(
                Policy(new_pol), ValueFunction(v), rounds, total_sweeps, True
            )
        pol = new_pol
    raise NonConvergence(f"policy iteration did not settle within {max_rounds} rounds")


def value_iteration(
    model: ModelConfig,
    tol: float = DEFAULT_TOL,
    max_sweeps: int = SWEEP_CAP,
    exploit_pq_structure: bool = True,
    v0: np.ndarray | None = None,
) -> SolveReport:
    """Optimality-operator sweeps to residual ``tol``, then greedy extraction."""
    if _reducible(model, exploit_pq_structure):
        red = value_iteration(
            _reduced_model(model),
            tol=tol,
            max_sweeps=max_sweeps,
            exploit_pq_structure=False,
            v0=_project(model, v0),
        )
        return SolveReport(
            policy=Policy(_expand(model, red.policy.actions)),
            value=ValueFunction(_expand(model, red.value.values)),
            iterations=red.iterations,
            eval_sweeps=red.eval_sweeps,
            converged=red.converged,
        )
    n = model.n_states
    engine = _Engine(kernel_arrays(model))
    v = np.zeros(n) if v0 is None else np.asarray(v0, dtype=np.float64).copy()
    if len(v) != n:
        raise IndexMismatch("warm start does not match the model")
    v, sweeps = engine.value_sweeps(v, tol, max_sweeps)
    return SolveReport(Policy(engine.greedy(v)), ValueFunction(v), sweeps, sweeps, True)


def brute_force_optimal(
    model: ModelConfig, max_states: int = BRUTE_FORCE_STATE_CAP
) -> SolveReport:
    """Enumerate every deterministic policy and solve each linearly.

    Only viable on tiny models; raises :class:`TooLarge` beyond
    ``max_states`` states.  Ties resolve to the first policy enumerated,
    which orders silence before transmission.
    """
    n = model.n_states
    if n > max_states:
        raise TooLarge(f"{n} states exceeds the enumeration cap of {max_states}")
    states = enumerate_states(model)
    lam = model.discount
    succ: list[dict[int, list]] = []
    for st in states:
        by_action = {0: successors(model, st, 0)}
        if st.tokens >= 1:
            by_action[1] = successors(model, st, 1)
        succ.append(by_action)
    free = [i for i, st in enumerate(states) if st.tokens >= 1]

    best_actions = None
    best_v = None
    best_total = np.inf
    count = 0
    eye = np.eye(n)
    for assignment in itertools.product((0, 1), repeat=len(free)):
        acts = np.zeros(n, dtype=np.int8)
        for i, a in zip(free, assignment):
            acts[i] = a
        p = np.zeros((n, n))
        c = np.zeros(n)
        for i in range(n):
            for nxt, prob, cost in succ[i][int(acts[i])]:
                p[i, model.state_index(nxt)] += prob
                c[i] += prob * cost
        v = np.linalg.solve(eye - lam * p, c)
        count += 1
        total = float(v.sum())
        if total < best_total - 1e-12:
            best_total = total
            best_actions = acts
            best_v = v
    return SolveReport(
        Policy(best_actions), ValueFunction(best_v), count, 0, True
    )


# ---------------------------------------------------------------------------
# policy file round-trip

POLICY_SCHEMA = "qaoi.policy.v1"


class LoadedPolicy(NamedTuple):
    meta: dict[str, str]
    policy: Policy
    value: ValueFunction | None


def save_policy(
    path: str | Path,
    model: ModelConfig,
    policy: Policy,
    value: ValueFunction | None = None,
) -> None:
    """Write one line per state: index, state components, action[, value]."""
    acts = validate_policy(model, policy)
    vals = None
    if value is not None:
        if len(value) != model.n_states:
            raise IndexMismatch("value length does not match the model")
        vals = value.values
    cols = "index age tokens err_state query_state action" + (
        " value" if vals is not None else ""
    )
    nE = model.error_chain.n_states
    nQ = model.query_chain.n_states
    header = (
        f"# {POLICY_SCHEMA}\n"
        f"# config_hash: {model.config_hash()}\n"
        f"# cost_kind: {model.cost_kind.value}\n"
        f"# delta_max: {model.delta_max}\n"
        f"# bucket_size: {model.bucket_size}\n"
        f"# n_err_states: {nE}\n"
        f"# n_query_states: {nQ}\n"
        f"# n_states: {model.n_states}\n"
        f"# columns: {cols}\n"
    )
    with open(path, "w") as fh:
        fh.write(header)
        i = 0
        for age in range(1, model.delta_max + 1):
            for tok in range(model.bucket_size + 1):
                for er in range(1, nE + 1):
                    for qu in range(1, nQ + 1):
                        line = f"{i} {age} {tok} {er} {qu} {acts[i]}"
                        if vals is not None:
                            line += f" {vals[i]:.17g}"
                        fh.write(line + "\n")
                        i += 1


def load_policy(path: str | Path, model: ModelConfig | None = None) -> LoadedPolicy:
    """Read a policy file; verify it against ``model`` when given."""
    meta: dict[str, str] = {}
    with open(path) as fh:
        first = fh.readline().strip()
        if first != f"# {POLICY_SCHEMA}":
            raise ValueError(f"unrecognized policy file header: {first!r}")
        pos = fh.tell()
        line = fh.readline()
        while line.startswith("#"):
            key, _, val = line[1:].partition(":")
            meta[key.strip()] = val.strip()
            pos = fh.tell()
            line = fh.readline()
        fh.seek(pos)
        data = np.loadtxt(fh, ndmin=2)
    n = int(meta["n_states"])
    if data.shape[0] != n:
        raise IndexMismatch(f"file lists {data.shape[0]} states, header says {n}")
    order = np.argsort(data[:, 0])
    data = data[order]
    actions = data[:, 5].astype(np.int8)
    value = ValueFunction(data[:, 6]) if data.shape[1] > 6 else None
    if model is not None:
        if n != model.n_states:
            raise IndexMismatch(
                f"policy file has {n} states, model has {model.n_states}"
            )
        if meta.get("config_hash") != model.config_hash():
            raise IndexMismatch("policy file was generated for a different config")
    return LoadedPolicy(meta, Policy(actions), value)
