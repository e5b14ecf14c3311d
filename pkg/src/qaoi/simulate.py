"""Monte Carlo simulation of scheduling policies and fixed schedules.

:func:`simulate_policy` runs one seeded trajectory of a solved (or
hand-built) policy on a :class:`~qaoi.model.ModelConfig` and returns a
:class:`MetricsReport` of freshness statistics; :func:`simulate_fixed` does
the same for open-loop schedules that transmit on a fixed pattern within
each query period.  All randomness comes from per-seed counter streams
drawn once per slot in a fixed order, so runs with equal seeds are
directly comparable across policies and bit-identical across backends.

Reported quantities distinguish the always-relevant age (AoI, averaged
over every slot after burn-in) from the query-aware age (QAoI, the age
sampled only in query slots).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels, _sim_fallback
from ._backend import NUMBA_ENABLED
from ._rng import derive_streams
from .chains import build_constant_error, build_periodic_query, query_phase_map
from .errors import InvalidStrategy
from .model import CostKind, ModelConfig, SystemState, kernel_arrays
from .solver import Policy, validate_policy

DEFAULT_BURN_IN_PERIODS = 10


@dataclass(frozen=True)
class SimConfig:
    """Length, burn-in, seed, and trace switch for one simulation run.

    ``burn_in`` slots are excluded from every statistic; ``None`` picks ten
    query-chain periods.  The full trajectory is stored only when
    ``record_trace`` is set.
    """

    horizon: int
    burn_in: int | None = None
    seed: int = 0
    record_trace: bool = False

    def __post_init__(self) -> None:
        if int(self.horizon) < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.burn_in is not None and int(self.burn_in) < 0:
            raise ValueError(f"burn_in must be >= 0, got {self.burn_in}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")
        object.__setattr__(self, "horizon", int(self.horizon))
        if self.burn_in is not None:
            object.__setattr__(self, "burn_in", int(self.burn_in))
        object.__setattr__(self, "seed", int(self.seed))

    def resolve_burn_in(self, query_period: int) -> int:
        burn = (
            DEFAULT_BURN_IN_PERIODS * query_period
            if self.burn_in is None
            else self.burn_in
        )
        if burn >= self.horizon:
            raise ValueError(f"burn_in {burn} must be below horizon {self.horizon}")
        return burn


@dataclass(frozen=True)
class TraceRecord:
    """Per-slot trajectory of one run (burn-in slots included)."""

    age: np.ndarray
    tokens: np.ndarray
    err_state: np.ndarray
    query_state: np.ndarray
    action: np.ndarray
    delivered: np.ndarray
    is_query: np.ndarray

    @property
    def t(self) -> np.ndarray:
        return np.arange(1, len(self.age) + 1, dtype=np.int64)


@dataclass(frozen=True)
class MetricsReport:
    """Aggregated freshness statistics of one or more merged runs.

    Histograms hold raw slot counts so reports merge exactly; every
    derived quantity below is computed from them on demand.
    """

    delta_max: int
    bucket_size: int
    horizon_per_seed: int
    burn_in: int
    seeds: tuple[int, ...]
    n_recorded: int
    age_hist: np.ndarray  # (delta_max+1,), slot counts per age
    qstate_age_hist: np.ndarray  # (nQ, delta_max+1)
    token_hist: np.ndarray  # (bucket_size+1,)
    aoi_total: int
    qaoi_total: int
    n_queries: int
    n_transmissions: int
    n_deliveries: int
    query_flags: np.ndarray  # (nQ,), 1 on query states
    phase_map: np.ndarray  # (nQ,), slots-since-query label per state
    trace: TraceRecord | None = None

    # -- scalar summaries ---------------------------------------------------

    @property
    def avg_aoi(self) -> float:
        return self.aoi_total / self.n_recorded

    @property
    def avg_qaoi(self) -> float:
        return self.qaoi_total / self.n_queries if self.n_queries else float("nan")

    @property
    def transmit_rate(self) -> float:
        return self.n_transmissions / self.n_recorded

    @property
    def delivery_rate(self) -> float:
        return self.n_deliveries / self.n_recorded

    @property
    def clamp_occupancy(self) -> float:
        """Fraction of recorded slots spent at the age truncation level."""
        return float(self.age_hist[self.delta_max]) / self.n_recorded

    @property
    def token_mean(self) -> float:
        levels = np.arange(self.bucket_size + 1)
        return float(levels @ self.token_hist) / self.n_recorded

    def token_quantile(self, p: float) -> int:
        cdf = np.cumsum(self.token_hist) / self.n_recorded
        return int(np.searchsorted(cdf, p, side="left"))

    # -- distributions ------------------------------------------------------

    @property
    def aoi_pmf(self) -> np.ndarray:
        """P(age = d) over recorded slots, indexed by d in 0..delta_max."""
        return self.age_hist / self.n_recorded

    @property
    def aoi_ccdf(self) -> np.ndarray:
        """P(age > d), indexed by d in 0..delta_max."""
        return 1.0 - np.cumsum(self.aoi_pmf)

    @property
    def qaoi_hist(self) -> np.ndarray:
        return self.qstate_age_hist[self.query_flags == 1].sum(axis=0)

    @property
    def qaoi_pmf(self) -> np.ndarray:
        return self.qaoi_hist / self.n_queries

    @property
    def qaoi_ccdf(self) -> np.ndarray:
        return 1.0 - np.cumsum(self.qaoi_pmf)

    def phase_pmfs(self) -> dict[int, np.ndarray]:
        """Age distribution conditioned on the slots-since-query phase."""
        out: dict[int, np.ndarray] = {}
        for phase in np.unique(self.phase_map):
            rows = self.qstate_age_hist[self.phase_map == phase]
            counts = rows.sum(axis=0)
            total = counts.sum()
            out[int(phase)] = counts / total if total else counts.astype(float)
        return out

    # -- merging ------------------------------------------------------------

    @classmethod
    def merge(cls, reports: "list[MetricsReport]") -> "MetricsReport":
        """Pool runs of the same model; order-independent up to seed listing."""
        first = reports[0]
        for r in reports[1:]:
            same = (
                r.delta_max == first.delta_max
                and r.bucket_size == first.bucket_size
                and r.horizon_per_seed == first.horizon_per_seed
                and r.burn_in == first.burn_in
                and r.qstate_age_hist.shape == first.qstate_age_hist.shape
                and np.array_equal(r.query_flags, first.query_flags)
                and np.array_equal(r.phase_map, first.phase_map)
            )
            if not same:
                raise ValueError("cannot merge reports from different setups")
        seeds = tuple(s for r in reports for s in r.seeds)
        if len(set(seeds)) != len(seeds):
            raise ValueError("cannot merge reports with repeated seeds")
        return cls(
            delta_max=first.delta_max,
            bucket_size=first.bucket_size,
            horizon_per_seed=first.horizon_per_seed,
            burn_in=first.burn_in,
            seeds=seeds,
            n_recorded=sum(r.n_recorded for r in reports),
            age_hist=sum(r.age_hist for r in reports),
            qstate_age_hist=sum(r.qstate_age_hist for r in reports),
            token_hist=sum(r.token_hist for r in reports),
            aoi_total=sum(r.aoi_total for r in reports),
            qaoi_total=sum(r.qaoi_total for r in reports),
            n_queries=sum(r.n_queries for r in reports),
            n_transmissions=sum(r.n_transmissions for r in reports),
            n_deliveries=sum(r.n_deliveries for r in reports),
            query_flags=first.query_flags,
            phase_map=first.phase_map,
            trace=None,
        )


def simulate_policy(
    model: ModelConfig,
    policy: Policy,
    sim: SimConfig,
    init_state: SystemState | None = None,
) -> MetricsReport:
    """One seeded trajectory of ``policy`` on ``model``.

    Starts at age 1 (as if a delivery landed in slot 0) with an empty
    bucket and both chains in state 1, unless ``init_state`` overrides it.
    """
    acts = validate_policy(model, policy)
    ka = kernel_arrays(model)
    nQ = model.query_chain.n_states
    burn = sim.resolve_burn_in(nQ)
    init = init_state if init_state is not None else SystemState(1, 0, 1, 1)
    model.state_index(init)  # bounds check

    streams = derive_streams(sim.seed)
    rs = np.ascontiguousarray(streams[:, 0])
    gammas = np.ascontiguousarray(streams[:, 1])

    D, B = model.delta_max, model.bucket_size
    age_hist = np.zeros(D + 1, dtype=np.int64)
    qage_hist = np.zeros(nQ * (D + 1), dtype=np.int64)
    tok_hist = np.zeros(B + 1, dtype=np.int64)
    if sim.record_trace:
        tr_age = np.zeros(sim.horizon, dtype=np.int32)
        tr_tok = np.zeros(sim.horizon, dtype=np.int32)
        tr_err = np.zeros(sim.horizon, dtype=np.int32)
        tr_qry = np.zeros(sim.horizon, dtype=np.int32)
        tr_act = np.zeros(sim.horizon, dtype=np.int8)
        tr_del = np.zeros(sim.horizon, dtype=np.int8)
    else:
        tr_age = tr_tok = tr_err = tr_qry = np.zeros(0, dtype=np.int32)
        tr_act = tr_del = np.zeros(0, dtype=np.int8)

    loop = _kernels.sim_loop if NUMBA_ENABLED else _sim_fallback.sim_loop
    out = loop(
        acts, D, B,
        ka.eps, ka.pe_indptr, ka.pe_indices, ka.pe_probs,
        ka.pq_indptr, ka.pq_indices, ka.pq_probs, ka.qflag, ka.token_rate,
        sim.horizon, burn,
        init.age, init.tokens, init.err_state - 1, init.query_state - 1,
        rs, gammas,
        age_hist, qage_hist, tok_hist,
        sim.record_trace, tr_age, tr_tok, tr_err, tr_qry, tr_act, tr_del,
    )
    aoi_sum, qaoi_sum, n_query, n_tx, n_del = (int(x) for x in out[:5])

    trace = None
    if sim.record_trace:
        is_query = ka.qflag[tr_qry - 1].astype(np.int8)
        trace = TraceRecord(
            age=tr_age, tokens=tr_tok, err_state=tr_err, query_state=tr_qry,
            action=tr_act, delivered=tr_del, is_query=is_query,
        )
    return MetricsReport(
        delta_max=D,
        bucket_size=B,
        horizon_per_seed=sim.horizon,
        burn_in=burn,
        seeds=(sim.seed,),
        n_recorded=sim.horizon - burn,
        age_hist=age_hist,
        qstate_age_hist=qage_hist.reshape(nQ, D + 1),
        token_hist=tok_hist,
        aoi_total=aoi_sum,
        qaoi_total=qaoi_sum,
        n_queries=n_query,
        n_transmissions=n_tx,
        n_deliveries=n_del,
        query_flags=ka.qflag,
        phase_map=query_phase_map(model.query_chain),
        trace=trace,
    )


def simulate_policy_seeds(
    model: ModelConfig,
    policy: Policy,
    sim: SimConfig,
    seeds: list[int],
    jobs: int = 1,
) -> MetricsReport:
    """Independent runs per seed, merged in listed-seed order.

    Traces are not kept on merged reports.  With ``jobs > 1`` the runs
    execute on a thread pool (the compiled kernel releases the GIL); the
    result is identical to the sequential merge.
    """
    if not seeds:
        raise ValueError("need at least one seed")
    base = replace(sim, record_trace=False)
    if jobs <= 1 or len(seeds) == 1:
        reports = [simulate_policy(model, policy, replace(base, seed=s)) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(simulate_policy, model, policy, replace(base, seed=s))
                for s in seeds
            ]
            reports = [f.result() for f in futures]
    return MetricsReport.merge(reports)


# ---------------------------------------------------------------------------
# fixed duty-cycle schedules


@dataclass(frozen=True)
class EquallySpaced:
    """Transmit every ``spacing`` slots, the last attempt one slot before a query."""

    spacing: int


@dataclass(frozen=True)
class PreQueryBurst:
    """Transmit in the ``count`` slots leading up to each query."""

    count: int


FixedStrategy = EquallySpaced | PreQueryBurst


def _attempt_states(
    strategy: FixedStrategy, query_period: int, duty_cycle: float
) -> set[int]:
    budget_f = duty_cycle * query_period
    budget = round(budget_f)
    if abs(budget_f - budget) > 1e-9 or budget < 1:
        raise InvalidStrategy(
            f"duty cycle {duty_cycle} times period {query_period} must be a "
            f"positive whole number of transmissions"
        )
    if isinstance(strategy, EquallySpaced):
        spacing = int(strategy.spacing)
        if spacing < 1 or query_period % spacing != 0:
            raise InvalidStrategy(
                f"spacing {spacing} does not divide the query period {query_period}"
            )
        if query_period // spacing != budget:
            raise InvalidStrategy(
                f"spacing {spacing} gives {query_period // spacing} transmissions "
                f"per period, duty cycle allows {budget}"
            )
        return {s for s in range(1, query_period + 1) if s % spacing == spacing - 1}
    if isinstance(strategy, PreQueryBurst):
        count = int(strategy.count)
        if count != budget:
            raise InvalidStrategy(
                f"burst of {count} transmissions differs from the duty-cycle "
                f"budget of {budget}"
            )
        return {(query_period - off - 1) % query_period + 1 for off in range(1, count + 1)}
    raise InvalidStrategy(f"unknown strategy {strategy!r}")


def simulate_fixed(
    strategy: FixedStrategy,
    epsilon: float,
    query_period: int,
    duty_cycle: float,
    sim: SimConfig,
    delta_max: int | None = None,
) -> MetricsReport:
    """Open-loop schedule on a memoryless channel, queried every ``query_period``.

    The schedule has no feedback and no token constraint; it simply spends
    its per-period budget of ``duty_cycle * query_period`` transmissions on
    the slots the strategy picks.  Queries land every ``query_period``
    slots, right after the strategy's last attempt of the period.  Ages are
    tracked up to ``delta_max`` (default: 100 periods, far past any mass
    these schedules can produce).
    """
    attempts = _attempt_states(strategy, int(query_period), duty_cycle)
    if delta_max is None:
        delta_max = 100 * int(query_period)
    model = ModelConfig(
        delta_max=delta_max,
        bucket_size=1,
        token_rate=1.0,  # bucket refills every slot: transmissions never blocked
        discount=0.5,  # irrelevant to simulation
        cost_kind=CostKind.QAPA,
        error_chain=build_constant_error(epsilon),
        query_chain=build_periodic_query(int(query_period)),
    )
    grid = np.zeros((delta_max, 2, 1, int(query_period)), dtype=np.int8)
    for s in attempts:
        grid[:, 1, :, s - 1] = 1
    policy = Policy(grid.reshape(-1))
    return simulate_policy(
        model, policy, sim, init_state=SystemState(1, 1, 1, 1)
    )
