"""Chain builders: exact inter-query laws, stochasticity, sampling, round-trips."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from qaoi import (
    MarkovProcess,
    build_constant_error,
    build_periodic_query,
    build_satellite_error,
    build_uniform_query,
    chain_from_descriptor,
    query_phase_map,
    sample_next,
    to_descriptor,
)

EXACT = 1e-12


def first_return_law(chain: MarkovProcess, horizon: int) -> np.ndarray:
    """Exact first-return-time distribution to the single query state.

    Absorbing-chain recursion: propagate the state distribution, reading off
    and zeroing the mass that lands on the query state after each step.
    """
    (q,) = chain.query_states
    law = np.zeros(horizon + 1)
    x = chain.transition[q - 1].copy()
    for k in range(1, horizon + 1):
        law[k] = x[q - 1]
        x[q - 1] = 0.0
        x = x @ chain.transition
    return law


# ---------------------------------------------------------------------------
# periodic query chain


def test_periodic_t3_matrix_exact():
    chain = build_periodic_query(3)
    expected = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], dtype=float)
    assert np.array_equal(chain.transition, expected)
    assert chain.query_states == {3}
    assert chain.erasure is None


def test_periodic_t1_self_loop():
    chain = build_periodic_query(1)
    assert np.array_equal(chain.transition, [[1.0]])
    assert chain.query_states == {1}


def test_periodic_t40_shape():
    chain = build_periodic_query(40)
    assert chain.n_states == 40
    assert chain.query_states == {40}
    assert np.array_equal(chain.transition.sum(axis=1), np.ones(40))


@pytest.mark.parametrize("period", [1, 2, 5, 8, 40])
def test_periodic_cycle_property(period):
    chain = build_periodic_query(period)
    power = np.linalg.matrix_power(chain.transition, period)
    assert np.array_equal(power, np.eye(period))


def test_periodic_rejects_zero():
    with pytest.raises(ValueError):
        build_periodic_query(0)


# ---------------------------------------------------------------------------
# uniform inter-query chain


def test_uniform_hazard_rows_exact():
    chain = build_uniform_query(21, 40)
    t = chain.transition
    # below min_gap the count just increments
    assert t[19, 20] == 1.0 and t[19, 0] == 0.0
    # at s=21 the reset hazard is exactly 1/20
    assert t[20, 0] == 1.0 / 20.0
    assert t[20, 21] == 1.0 - 1.0 / 20.0
    # the last state always resets
    assert t[39, 0] == 1.0
    assert chain.query_states == {1}


@pytest.mark.parametrize("lo,hi", [(1, 1), (2, 3), (1, 4), (5, 5), (21, 40), (3, 17)])
def test_uniform_gap_law_is_uniform(lo, hi):
    chain = build_uniform_query(lo, hi)
    law = first_return_law(chain, hi + 5)
    width = hi - lo + 1
    for k in range(1, hi + 6):
        want = 1.0 / width if lo <= k <= hi else 0.0
        assert abs(law[k] - want) < EXACT, (k, law[k], want)


def test_uniform_degenerate_equals_periodic_up_to_rotation():
    k = 4
    uni = build_uniform_query(k, k)
    per = build_periodic_query(k)
    # rotate labels so the query states line up (1 -> k)
    sigma = lambda s: (s - 2) % k + 1
    for i in range(1, k + 1):
        for j in range(1, k + 1):
            assert uni.transition[i - 1, j - 1] == per.transition[sigma(i) - 1, sigma(j) - 1]
    assert {sigma(s) for s in uni.query_states} == per.query_states


def test_uniform_rejects_bad_gaps():
    with pytest.raises(ValueError):
        build_uniform_query(0, 3)
    with pytest.raises(ValueError):
        build_uniform_query(5, 4)


def test_uniform_mc_gap_frequencies():
    # 10^6 chain steps; gaps of the (2,3) chain split about evenly
    chain = build_uniform_query(2, 3)
    rng = np.random.default_rng(20260815)
    state = 1
    last_visit = 0
    gaps = {2: 0, 3: 0}
    for t in range(1, 1_000_000 + 1):
        state = sample_next(chain, state, rng)
        if state == 1:
            gap = t - last_visit
            last_visit = t
            gaps[gap] = gaps.get(gap, 0) + 1
    assert set(gaps) == {2, 3}
    total = gaps[2] + gaps[3]
    assert abs(gaps[2] / total - 0.5) < 0.01
    assert abs(gaps[3] / total - 0.5) < 0.01


# ---------------------------------------------------------------------------
# error chains


def test_constant_error_labels():
    for eps in (0.0, 0.2, 1.0):
        chain = build_constant_error(eps)
        assert chain.n_states == 1
        assert np.array_equal(chain.transition, [[1.0]])
        assert chain.erasure[0] == eps
        assert not chain.query_states


@pytest.mark.parametrize("eps", [-0.1, 1.5])
def test_constant_error_rejects_bad_probability(eps):
    with pytest.raises(ValueError):
        build_constant_error(eps)


def test_satellite_pass_labels():
    chain = build_satellite_error(10, 0.2, window=2)
    assert chain.n_states == 10
    assert np.array_equal(chain.erasure[:2], [0.2, 0.2])
    assert np.array_equal(chain.erasure[2:], np.ones(8))
    # deterministic cycle
    power = np.linalg.matrix_power(chain.transition, 10)
    assert np.array_equal(power, np.eye(10))


def test_satellite_zero_error_window():
    chain = build_satellite_error(5, 0.0, window=2)
    assert np.array_equal(chain.erasure, [0.0, 0.0, 1.0, 1.0, 1.0])


def test_satellite_single_state_equals_constant():
    sat = build_satellite_error(1, 0.3)
    const = build_constant_error(0.3)
    assert np.array_equal(sat.transition, const.transition)
    assert np.array_equal(sat.erasure, const.erasure)


def test_satellite_window_defaults_and_bounds():
    assert build_satellite_error(1, 0.5).erasure[0] == 0.5  # window clamps to 1
    assert np.array_equal(build_satellite_error(3, 0.5).erasure, [0.5, 0.5, 1.0])
    with pytest.raises(ValueError):
        build_satellite_error(3, 0.5, window=4)
    with pytest.raises(ValueError):
        build_satellite_error(3, 0.5, window=0)
    with pytest.raises(ValueError):
        build_satellite_error(3, 1.5)


# ---------------------------------------------------------------------------
# sampling


def test_sample_next_deterministic_rows():
    chain = build_periodic_query(5)
    rng = np.random.default_rng(1)
    assert all(sample_next(chain, 3, rng) == 4 for _ in range(20))
    assert all(sample_next(chain, 5, rng) == 1 for _ in range(20))


def test_sample_next_hazard_one_state():
    chain = build_uniform_query(21, 40)
    rng = np.random.default_rng(2)
    assert all(sample_next(chain, 40, rng) == 1 for _ in range(20))


def test_sample_next_rejects_out_of_range():
    chain = build_periodic_query(3)
    rng = np.random.default_rng(0)
    for bad in (0, 4, -1):
        with pytest.raises(ValueError):
            sample_next(chain, bad, rng)


def test_sample_next_frequencies_match_row():
    # 10^6 draws from the half/half row of the (2,3) chain
    chain = build_uniform_query(2, 3)
    rng = np.random.default_rng(7)
    counts = {1: 0, 3: 0}
    n = 1_000_000
    for _ in range(n):
        counts[sample_next(chain, 2, rng)] += 1
    assert set(counts) == {1, 3}
    assert abs(counts[1] / n - 0.5) < 0.005
    # chi-square sanity against the exact row
    chi = stats.chisquare([counts[1], counts[3]], [n / 2, n / 2])
    assert chi.pvalue > 1e-3


# ---------------------------------------------------------------------------
# validation and immutability


def test_rejects_non_square_matrix():
    with pytest.raises(ValueError):
        MarkovProcess(np.ones((2, 3)) / 3)


def test_rejects_bad_row_sums():
    with pytest.raises(ValueError):
        MarkovProcess(np.array([[0.5, 0.4], [0.5, 0.5]]))


def test_rejects_entries_outside_unit_interval():
    with pytest.raises(ValueError):
        MarkovProcess(np.array([[1.5, -0.5], [0.5, 0.5]]))


def test_rejects_bad_erasure():
    with pytest.raises(ValueError):
        MarkovProcess(np.eye(2), erasure=np.array([0.5]))
    with pytest.raises(ValueError):
        MarkovProcess(np.eye(2), erasure=np.array([0.5, 1.5]))


def test_rejects_out_of_range_query_states():
    with pytest.raises(ValueError):
        MarkovProcess(np.eye(2), query_states=frozenset({3}))


def test_arrays_are_read_only():
    chain = build_uniform_query(2, 3)
    with pytest.raises(ValueError):
        chain.transition[0, 0] = 0.5
    sat = build_satellite_error(4, 0.2)
    with pytest.raises(ValueError):
        sat.erasure[0] = 0.9


# ---------------------------------------------------------------------------
# phase labels and serialization


def test_query_phase_map_periodic():
    # the query state itself is phase 0, the following slot phase 1, ...
    assert np.array_equal(query_phase_map(build_periodic_query(5)), [1, 2, 3, 4, 0])


def test_query_phase_map_uniform():
    assert np.array_equal(query_phase_map(build_uniform_query(2, 4)), [0, 1, 2, 3])


def test_query_phase_map_multiple_query_states():
    chain = MarkovProcess(
        np.array([[0.0, 1.0], [1.0, 0.0]]), query_states=frozenset({1, 2})
    )
    assert np.array_equal(query_phase_map(chain), [0, 1])


def test_query_phase_map_rejects_error_chain():
    with pytest.raises(ValueError):
        query_phase_map(build_constant_error(0.2))


@pytest.mark.parametrize(
    "chain",
    [
        build_periodic_query(7),
        build_uniform_query(3, 9),
        build_constant_error(0.35),
        build_satellite_error(6, 0.1, window=3),
    ],
)
def test_descriptor_round_trip(chain):
    rebuilt = chain_from_descriptor(to_descriptor(chain))
    assert np.array_equal(rebuilt.transition, chain.transition)
    assert rebuilt.query_states == chain.query_states
    if chain.erasure is None:
        assert rebuilt.erasure is None
    else:
        assert np.array_equal(rebuilt.erasure, chain.erasure)


def test_descriptor_round_trip_explicit():
    chain = MarkovProcess(
        np.array([[0.25, 0.75], [0.6, 0.4]]),
        erasure=np.array([0.1, 0.9]),
        query_states=frozenset({2}),
    )
    desc = to_descriptor(chain)
    assert desc["kind"] == "explicit"
    rebuilt = chain_from_descriptor(desc)
    assert np.array_equal(rebuilt.transition, chain.transition)
    assert np.array_equal(rebuilt.erasure, chain.erasure)
    assert rebuilt.query_states == {2}


def test_descriptor_rejects_unknown_kind():
    with pytest.raises(ValueError):
        chain_from_descriptor({"kind": "lorenz"})


# ---------------------------------------------------------------------------
# properties


@given(lo=st.integers(1, 30), extra=st.integers(0, 30))
@settings(max_examples=60, deadline=None)
def test_uniform_rows_stochastic(lo, extra):
    chain = build_uniform_query(lo, lo + extra)
    rows = chain.transition.sum(axis=1)
    assert np.all(np.abs(rows - 1.0) < EXACT)
    assert np.all(chain.transition >= 0.0) and np.all(chain.transition <= 1.0)


@given(lo=st.integers(1, 12), extra=st.integers(0, 12))
@settings(max_examples=40, deadline=None)
def test_uniform_gap_law_property(lo, extra):
    hi = lo + extra
    law = first_return_law(build_uniform_query(lo, hi), hi)
    assert np.all(np.abs(law[lo : hi + 1] - 1.0 / (hi - lo + 1)) < EXACT)
    assert np.all(law[:lo] == 0.0)


@given(period=st.integers(1, 25), window=st.integers(1, 25), eps=st.floats(0, 1))
@settings(max_examples=60, deadline=None)
def test_satellite_rows_stochastic(period, window, eps):
    if window > period:
        window = period
    chain = build_satellite_error(period, eps, window=window)
    assert np.all(np.abs(chain.transition.sum(axis=1) - 1.0) < EXACT)
    assert np.all((chain.erasure >= 0.0) & (chain.erasure <= 1.0))
