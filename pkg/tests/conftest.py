"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np

from qaoi import (
    CostKind,
    MarkovProcess,
    ModelConfig,
    build_constant_error,
    build_periodic_query,
    build_uniform_query,
)


def make_model(
    delta_max: int = 12,
    bucket_size: int = 2,
    token_rate: float = 0.3,
    discount: float = 0.75,
    cost_kind: CostKind = CostKind.QAPA,
    epsilon: float = 0.2,
    query_period: int = 4,
    error_chain: MarkovProcess | None = None,
    query_chain: MarkovProcess | None = None,
) -> ModelConfig:
    """Small default instance; every knob overridable per test."""
    return ModelConfig(
        delta_max=delta_max,
        bucket_size=bucket_size,
        token_rate=token_rate,
        discount=discount,
        cost_kind=cost_kind,
        error_chain=error_chain or build_constant_error(epsilon),
        query_chain=query_chain or build_periodic_query(query_period),
    )


def random_query_chain(rng: np.random.Generator) -> MarkovProcess:
    kind = rng.integers(3)
    if kind == 0:
        return build_periodic_query(int(rng.integers(1, 4)))
    if kind == 1:
        hi = int(rng.integers(1, 4))
        return build_uniform_query(int(rng.integers(1, hi + 1)), hi)
    # fully random stochastic rows, query raised in state 1
    n = int(rng.integers(2, 4))
    t = rng.dirichlet(np.ones(n), size=n)
    return MarkovProcess(t / t.sum(axis=1, keepdims=True), query_states=frozenset({1}))


def random_tiny_model(rng: np.random.Generator, max_states: int = 20) -> ModelConfig:
    """Randomized instance small enough for exhaustive policy enumeration."""
    while True:
        query = random_query_chain(rng)
        delta_max = int(rng.integers(2, 6))
        bucket = int(rng.integers(1, 3))
        n = delta_max * (bucket + 1) * query.n_states
        if n <= max_states:
            break
    return ModelConfig(
        delta_max=delta_max,
        bucket_size=bucket,
        token_rate=float(rng.uniform(0.05, 1.0)),
        discount=float(rng.uniform(0.3, 0.9)),
        cost_kind=CostKind.PQ if rng.integers(2) == 0 else CostKind.QAPA,
        error_chain=build_constant_error(float(rng.uniform(0.0, 0.95))),
        query_chain=query,
    )
