"""The transmission-scheduling decision process.

A monitored source sends status updates over an erasure channel to keep the
information at a receiver fresh.  The decision process tracks four
quantities per slot:

* ``age``: slots since the newest delivered update was generated, clamped
  at ``delta_max``,
* ``tokens``: transmission credits in a bucket of size ``bucket_size``,
  refilled with probability ``token_rate`` per slot,
* ``err_state``: state of the channel-error chain (labels carry the
  current erasure probability),
* ``query_state``: state of the query chain (labels mark slots in which
  the receiver is actually queried).

Each slot the scheduler either stays silent (action 0) or spends one token
on a transmission (action 1).  A transmission that survives erasure resets
the age to 1 in the next slot.  Costs are charged on the *landing* slot:
under :attr:`CostKind.PQ` every slot pays the new age; under
:attr:`CostKind.QAPA` only slots in which the query chain lands on a query
state pay.  Discounted total cost is the solve objective.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, NamedTuple

import numpy as np

from .chains import MarkovProcess, to_descriptor
from .errors import InvalidAction

Action = int  # 0 = stay silent, 1 = transmit
SILENT: Action = 0
TRANSMIT: Action = 1


class CostKind(str, Enum):
    """Which slots are charged for staleness."""

    PQ = "PQ"  # every slot pays the age (permanently queried)
    QAPA = "QAPA"  # only query slots pay (query-aware)


class SystemState(NamedTuple):
    age: int
    tokens: int
    err_state: int
    query_state: int


class TransitionEntry(NamedTuple):
    state: SystemState
    probability: float
    cost: float


@dataclass(frozen=True)
class ModelConfig:
    """Immutable description of one decision-process instance.

    Attributes:
        delta_max: truncation level for the age component (>= 1).
        bucket_size: token bucket capacity (>= 1).
        token_rate: per-slot token refill probability.
        discount: discount factor in (0, 1).
        cost_kind: which slots pay the age cost.
        error_chain: channel process; must carry erasure labels.
        query_chain: query process; must have a non-empty query set.
    """

    delta_max: int
    bucket_size: int
    token_rate: float
    discount: float
    cost_kind: CostKind
    error_chain: MarkovProcess
    query_chain: MarkovProcess

    def __post_init__(self) -> None:
        if int(self.delta_max) < 1:
            raise ValueError(f"delta_max must be >= 1, got {self.delta_max}")
        if int(self.bucket_size) < 1:
            raise ValueError(f"bucket_size must be >= 1, got {self.bucket_size}")
        if not 0.0 <= float(self.token_rate) <= 1.0:
            raise ValueError(f"token_rate must lie in [0, 1], got {self.token_rate}")
        if not 0.0 < float(self.discount) < 1.0:
            raise ValueError(f"discount must lie in (0, 1), got {self.discount}")
        object.__setattr__(self, "delta_max", int(self.delta_max))
        object.__setattr__(self, "bucket_size", int(self.bucket_size))
        object.__setattr__(self, "token_rate", float(self.token_rate))
        object.__setattr__(self, "discount", float(self.discount))
        object.__setattr__(self, "cost_kind", CostKind(self.cost_kind))
        if self.error_chain.erasure is None:
            raise ValueError("error_chain must carry per-state erasure probabilities")
        if not self.query_chain.query_states:
            raise ValueError("query_chain must mark at least one query state")

    @property
    def n_states(self) -> int:
        return (
            self.delta_max
            * (self.bucket_size + 1)
            * self.error_chain.n_states
            * self.query_chain.n_states
        )

    def state_index(self, state: SystemState) -> int:
        """Canonical flat index, lexicographic in (age, tokens, err, query)."""
        age, tok, er, qu = state
        nE = self.error_chain.n_states
        nQ = self.query_chain.n_states
        if not 1 <= age <= self.delta_max:
            raise ValueError(f"age out of range: {age}")
        if not 0 <= tok <= self.bucket_size:
            raise ValueError(f"tokens out of range: {tok}")
        if not 1 <= er <= nE:
            raise ValueError(f"err_state out of range: {er}")
        if not 1 <= qu <= nQ:
            raise ValueError(f"query_state out of range: {qu}")
        return (((age - 1) * (self.bucket_size + 1) + tok) * nE + (er - 1)) * nQ + (qu - 1)

    def state_at(self, index: int) -> SystemState:
        """Inverse of :meth:`state_index`."""
        if not 0 <= index < self.n_states:
            raise ValueError(f"index out of range: {index}")
        nE = self.error_chain.n_states
        nQ = self.query_chain.n_states
        index, qu = divmod(index, nQ)
        index, er = divmod(index, nE)
        age_m1, tok = divmod(index, self.bucket_size + 1)
        return SystemState(age_m1 + 1, tok, er + 1, qu + 1)

    def config_hash(self) -> str:
        """SHA-256 over the full canonical content, for file headers."""
        payload = {
            "delta_max": self.delta_max,
            "bucket_size": self.bucket_size,
            "token_rate": self.token_rate,
            "discount": self.discount,
            "cost_kind": self.cost_kind.value,
            "error_transition": self.error_chain.transition.tolist(),
            "erasure": self.error_chain.erasure.tolist(),
            "query_transition": self.query_chain.transition.tolist(),
            "query_states": sorted(self.query_chain.query_states),
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_dict(self) -> dict:
        """JSON-ready form (chains serialized as descriptors)."""
        return {
            "delta_max": self.delta_max,
            "bucket_size": self.bucket_size,
            "token_rate": self.token_rate,
            "discount": self.discount,
            "cost_kind": self.cost_kind.value,
            "error_chain": to_descriptor(self.error_chain),
            "query_chain": to_descriptor(self.query_chain),
        }


def enumerate_states(config: ModelConfig) -> list[SystemState]:
    """All states in canonical order: ``state_index`` of item ``i`` is ``i``."""
    return list(iter_states(config))


def iter_states(config: ModelConfig) -> Iterator[SystemState]:
    nE = config.error_chain.n_states
    nQ = config.query_chain.n_states
    for age in range(1, config.delta_max + 1):
        for tok in range(config.bucket_size + 1):
            for er in range(1, nE + 1):
                for qu in range(1, nQ + 1):
                    yield SystemState(age, tok, er, qu)


def admissible_actions(config: ModelConfig, state: SystemState) -> tuple[Action, ...]:
    """(0,) when the bucket is empty, else (0, 1)."""
    return (SILENT,) if state.tokens == 0 else (SILENT, TRANSMIT)


def successors(
    config: ModelConfig, state: SystemState, action: Action
) -> list[TransitionEntry]:
    """One-step distribution with per-successor costs.

    Returns every reachable ``(state', probability, cost)`` with positive
    probability, merged over coinciding successors and sorted by state
    index.  Raises :class:`InvalidAction` for a transmission without
    tokens.
    """
    age, tok, er, qu = state
    config.state_index(state)  # bounds check
    if action not in (SILENT, TRANSMIT):
        raise InvalidAction(f"action must be 0 or 1, got {action}")
    if action == TRANSMIT and tok == 0:
        raise InvalidAction("cannot transmit with an empty token bucket")

    eps = float(config.error_chain.erasure[er - 1])
    p_fresh = (1.0 - eps) if action == TRANSMIT else 0.0
    age_up = min(age + 1, config.delta_max)
    age_branches = [(1, p_fresh), (age_up, 1.0 - p_fresh)]

    mu = config.token_rate
    tok_up = min(tok - action + 1, config.bucket_size)
    tok_dn = tok - action
    tok_branches = [(tok_up, mu), (tok_dn, 1.0 - mu)]

    err_row = config.error_chain.transition[er - 1]
    qry_row = config.query_chain.transition[qu - 1]
    query_set = config.query_chain.query_states
    qapa = config.cost_kind is CostKind.QAPA

    merged: dict[SystemState, float] = {}
    for age2, p_a in age_branches:
        if p_a <= 0.0:
            continue
        for tok2, p_t in tok_branches:
            if p_t <= 0.0:
                continue
            for er2 in np.nonzero(err_row)[0]:
                p_e = err_row[er2]
                for qu2 in np.nonzero(qry_row)[0]:
                    p = p_a * p_t * p_e * qry_row[qu2]
                    if p <= 0.0:
                        continue
                    nxt = SystemState(age2, tok2, int(er2) + 1, int(qu2) + 1)
                    merged[nxt] = merged.get(nxt, 0.0) + p

    def _cost(nxt: SystemState) -> float:
        if qapa and nxt.query_state not in query_set:
            return 0.0
        return float(nxt.age)

    entries = [TransitionEntry(s, p, _cost(s)) for s, p in merged.items()]
    entries.sort(key=lambda e: config.state_index(e.state))
    return entries


def expected_cost(config: ModelConfig, state: SystemState, action: Action) -> float:
    """Mean one-step cost of taking ``action`` in ``state``."""
    return sum(p * c for _, p, c in successors(config, state, action))


# ---------------------------------------------------------------------------
# flat arrays consumed by the solver and simulator kernels


def _csr(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-compressed (indptr, indices, probs) of a dense stochastic matrix."""
    n = matrix.shape[0]
    indptr = np.zeros(n + 1, dtype=np.int64)
    indices = []
    probs = []
    for i in range(n):
        nz = np.nonzero(matrix[i])[0]
        indices.append(nz)
        probs.append(matrix[i, nz])
        indptr[i + 1] = indptr[i] + len(nz)
    return (
        indptr,
        np.concatenate(indices).astype(np.int64),
        np.concatenate(probs).astype(np.float64),
    )


@dataclass(frozen=True)
class KernelArrays:
    """Flat, 0-based view of a :class:`ModelConfig` for the numeric kernels."""

    delta_max: int
    bucket_size: int
    token_rate: float
    discount: float
    qapa: bool
    eps: np.ndarray  # per error-state erasure prob
    pe_indptr: np.ndarray
    pe_indices: np.ndarray
    pe_probs: np.ndarray
    pq_indptr: np.ndarray
    pq_indices: np.ndarray
    pq_probs: np.ndarray
    qflag: np.ndarray  # uint8, 1 where the query-state label is set
    qmass: np.ndarray  # per query-state: P(next state is a query state)

    @property
    def n_states(self) -> int:
        return (
            self.delta_max * (self.bucket_size + 1) * len(self.eps) * len(self.qflag)
        )


def kernel_arrays(config: ModelConfig) -> KernelArrays:
    pe = _csr(config.error_chain.transition)
    pq = _csr(config.query_chain.transition)
    nQ = config.query_chain.n_states
    qflag = np.zeros(nQ, dtype=np.uint8)
    for s in config.query_chain.query_states:
        qflag[s - 1] = 1
    qmass = config.query_chain.transition @ qflag.astype(np.float64)
    return KernelArrays(
        delta_max=config.delta_max,
        bucket_size=config.bucket_size,
        token_rate=config.token_rate,
        discount=config.discount,
        qapa=config.cost_kind is CostKind.QAPA,
        eps=np.ascontiguousarray(config.error_chain.erasure, dtype=np.float64),
        pe_indptr=pe[0],
        pe_indices=pe[1],
        pe_probs=pe[2],
        pq_indptr=pq[0],
        pq_indices=pq[1],
        pq_probs=pq[2],
        qflag=qflag,
        qmass=np.ascontiguousarray(qmass, dtype=np.float64),
    )
