"""Finite Markov chains that drive the query and channel-error processes.

A :class:`MarkovProcess` is a row-stochastic matrix over states labeled
``1..n`` plus optional per-state attributes: an erasure probability (for
error chains) and a set of query states (for query chains).  Builders are
provided for the four standard processes:

* :func:`build_periodic_query` - a query exactly every ``period`` slots,
* :func:`build_uniform_query` - i.i.d. inter-query gaps uniform on
  ``{min_gap, ..., max_gap}``,
* :func:`build_constant_error` - memoryless channel with fixed erasure rate,
* :func:`build_satellite_error` - cyclic channel that is usable only during
  a short visibility window each pass and erases everything otherwise.

State labels are 1-based everywhere in this module's public interface;
``transition[i, j]`` holds the probability of moving from state ``i+1`` to
state ``j+1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MarkovProcess:
    """A finite, row-stochastic process with optional state labels.

    Attributes:
        transition: ``(n, n)`` float array, each row summing to one.
        erasure: optional length-``n`` array of per-state erasure
            probabilities in ``[0, 1]``; present on error chains.
        query_states: 1-based labels of the states in which a query is
            raised; non-empty on query chains.
        descriptor: serializable recipe that rebuilds this process, kept
            for config round-trips.  ``None`` for hand-built instances.
    """

    transition: np.ndarray
    erasure: np.ndarray | None = None
    query_states: frozenset[int] = frozenset()
    descriptor: dict[str, Any] | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        t = np.asarray(self.transition, dtype=np.float64)
        if t.ndim != 2 or t.shape[0] != t.shape[1] or t.shape[0] < 1:
            raise ValueError(f"transition must be square and non-empty, got shape {t.shape}")
        if np.any(t < 0.0) or np.any(t > 1.0):
            raise ValueError("transition entries must lie in [0, 1]")
        rows = t.sum(axis=1)
        bad = np.abs(rows - 1.0) > ROW_SUM_TOL
        if np.any(bad):
            raise ValueError(
                f"rows {np.nonzero(bad)[0] + 1} do not sum to 1 within {ROW_SUM_TOL}"
            )
        t = t.copy()
        t.setflags(write=False)
        object.__setattr__(self, "transition", t)

        if self.erasure is not None:
            e = np.asarray(self.erasure, dtype=np.float64)
            if e.shape != (t.shape[0],):
                raise ValueError("erasure must have one entry per state")
            if np.any(e < 0.0) or np.any(e > 1.0):
                raise ValueError("erasure probabilities must lie in [0, 1]")
            e = e.copy()
            e.setflags(write=False)
            object.__setattr__(self, "erasure", e)

        qs = frozenset(int(s) for s in self.query_states)
        if any(s < 1 or s > t.shape[0] for s in qs):
            raise ValueError("query_states must be 1-based state labels")
        object.__setattr__(self, "query_states", qs)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    def __repr__(self) -> str:
        tags = []
        if self.erasure is not None:
            tags.append("erasure")
        if self.query_states:
            tags.append(f"query_states={sorted(self.query_states)}")
        inner = ", ".join([f"n_states={self.n_states}"] + tags)
        return f"MarkovProcess({inner})"


def build_periodic_query(period: int) -> MarkovProcess:
    """Deterministic cycle ``1 -> 2 -> ... -> period -> 1``.

    The query is raised in state ``period``, so consecutive queries are
    exactly ``period`` slots apart.
    """
    period = int(period)
    if period < 1:
        raise ValueError(f"period must be >= 1, got {period}")
    t = np.zeros((period, period))
    for s in range(period):
        t[s, (s + 1) % period] = 1.0
    return MarkovProcess(
        t,
        query_states=frozenset({period}),
        descriptor={"kind": "periodic_query", "period": period},
    )


def build_uniform_query(min_gap: int, max_gap: int) -> MarkovProcess:
    """Renewal chain whose inter-query gaps are uniform on {min_gap..max_gap}.

    State ``s`` counts the slots since the last query.  Below ``min_gap``
    the count increments deterministically; from ``min_gap`` on, the chain
    resets to state 1 with hazard ``1 / (max_gap - s + 1)``, which makes
    every gap length in the window equally likely.  State 1 (the slot of
    the reset) is the query state.
    """
    min_gap, max_gap = int(min_gap), int(max_gap)
    if not 1 <= min_gap <= max_gap:
        raise ValueError(f"need 1 <= min_gap <= max_gap, got ({min_gap}, {max_gap})")
    n = max_gap
    t = np.zeros((n, n))
    for s in range(1, n + 1):
        if s < min_gap:
            t[s - 1, s] = 1.0
        elif s < max_gap:
            h = 1.0 / (max_gap - s + 1)
            t[s - 1, 0] = h
            t[s - 1, s] = 1.0 - h
        else:
            t[s - 1, 0] = 1.0
    return MarkovProcess(
        t,
        query_states=frozenset({1}),
        descriptor={"kind": "uniform_query", "min_gap": min_gap, "max_gap": max_gap},
    )


def build_constant_error(epsilon: float) -> MarkovProcess:
    """Single-state channel that erases each packet with probability epsilon."""
    epsilon = float(epsilon)
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    return MarkovProcess(
        np.ones((1, 1)),
        erasure=np.array([epsilon]),
        descriptor={"kind": "constant_error", "epsilon": epsilon},
    )


def build_satellite_error(
    period: int, epsilon: float, window: int | None = None
) -> MarkovProcess:
    """Cyclic channel for a ground station served by a passing satellite.

    The chain walks a ``period``-state cycle.  During the first ``window``
    states (the pass) packets get through with erasure probability
    ``epsilon``; in the remaining states the satellite is out of sight and
    the erasure probability is 1.  ``window`` defaults to 2 states, clamped
    to the period.
    """
    period = int(period)
    if period < 1:
        raise ValueError(f"period must be >= 1, got {period}")
    if window is None:
        window = min(2, period)
    window = int(window)
    if not 1 <= window <= period:
        raise ValueError(f"need 1 <= window <= period, got window={window}")
    epsilon = float(epsilon)
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    t = np.zeros((period, period))
    for s in range(period):
        t[s, (s + 1) % period] = 1.0
    eras = np.ones(period)
    eras[:window] = epsilon
    return MarkovProcess(
        t,
        erasure=eras,
        descriptor={
            "kind": "satellite_error",
            "period": period,
            "epsilon": epsilon,
            "window": window,
        },
    )


def sample_next(process: MarkovProcess, state: int, rng: np.random.Generator) -> int:
    """Draw the successor of ``state`` (1-based) using ``rng``.

    Consumes exactly one uniform variate.  Deterministic rows return their
    unique successor for any draw.
    """
    n = process.n_states
    state = int(state)
    if not 1 <= state <= n:
        raise ValueError(f"state must lie in 1..{n}, got {state}")
    row = process.transition[state - 1]
    u = rng.random()
    acc = 0.0
    last = -1
    for j in range(n):
        p = row[j]
        if p > 0.0:
            acc += p
            last = j
            if u < acc:
                return j + 1
    # u fell into the slack the row sum leaves below 1.0; charge it to the
    # last reachable successor
    return last + 1


def query_phase_map(process: MarkovProcess) -> np.ndarray:
    """Slots-since-query label for each state of a query chain.

    For a chain with a single query state ``q*`` the phase of state ``s``
    is ``(s - q*) mod n``: phase 0 is the query slot itself, phase 1 the
    slot right after, and so on.  Chains with several query states have no
    canonical clock, so states are labeled by ``s - 1`` instead.
    """
    if not process.query_states:
        raise ValueError("not a query chain: no query states")
    n = process.n_states
    states = np.arange(1, n + 1, dtype=np.int64)
    if len(process.query_states) == 1:
        (qstar,) = process.query_states
        return (states - qstar) % n
    return states - 1


def to_descriptor(process: MarkovProcess) -> dict[str, Any]:
    """A JSON-ready recipe that rebuilds ``process`` via :func:`chain_from_descriptor`."""
    if process.descriptor is not None:
        return dict(process.descriptor)
    d: dict[str, Any] = {
        "kind": "explicit",
        "transition": process.transition.tolist(),
    }
    if process.erasure is not None:
        d["erasure"] = process.erasure.tolist()
    if process.query_states:
        d["query_states"] = sorted(process.query_states)
    return d


def chain_from_descriptor(descriptor: dict[str, Any]) -> MarkovProcess:
    """Rebuild a process from the output of :func:`to_descriptor`."""
    d = dict(descriptor)
    kind = d.pop("kind", None)
    builders = {
        "periodic_query": build_periodic_query,
        "uniform_query": build_uniform_query,
        "constant_error": build_constant_error,
        "satellite_error": build_satellite_error,
    }
    if kind in builders:
        return builders[kind](**d)
    if kind == "explicit":
        return MarkovProcess(
            np.asarray(d["transition"], dtype=np.float64),
            erasure=None if d.get("erasure") is None else np.asarray(d["erasure"]),
            query_states=frozenset(d.get("query_states", ())),
        )
    raise ValueError(f"unknown chain kind {kind!r}")
