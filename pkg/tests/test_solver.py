"""Solvers: evaluation against linear algebra, optimality against enumeration."""

from __future__ import annotations

import numpy as np
import pytest

from qaoi import (
    CostKind,
    IndexMismatch,
    InvalidAction,
    MarkovProcess,
    NonConvergence,
    Policy,
    TooLarge,
    ValueFunction,
    action_values,
    bellman_residual,
    brute_force_optimal,
    evaluate_policy,
    improve_policy,
    policy_iteration,
    save_policy,
    load_policy,
    value_iteration,
)
from qaoi.model import admissible_actions, enumerate_states, expected_cost, successors
from qaoi.solver import validate_policy

from conftest import make_model, random_tiny_model


def dense_mdp(model, actions):
    """(P, c) of the chosen actions, assembled from the one-step listings."""
    n = model.n_states
    p = np.zeros((n, n))
    c = np.zeros(n)
    for i, state in enumerate(enumerate_states(model)):
        for nxt, prob, cost in successors(model, state, int(actions[i])):
            p[i, model.state_index(nxt)] += prob
            c[i] += prob * cost
    return p, c


def linear_value(model, actions):
    p, c = dense_mdp(model, actions)
    return np.linalg.solve(np.eye(model.n_states) - model.discount * p, c)


def all_silent(model) -> Policy:
    return Policy(np.zeros(model.n_states, dtype=np.int8))


# ---------------------------------------------------------------------------
# policy evaluation


def test_unit_age_cost_is_geometric_series():
    # age pinned at 1: every slot costs 1, so v = 1 / (1 - discount) = 4
    model = make_model(delta_max=1, bucket_size=2, discount=0.75,
                       cost_kind=CostKind.PQ, epsilon=0.2, query_period=1)
    report = policy_iteration(model)
    assert np.all(np.abs(report.value.values - 4.0) < 1e-8)
    assert np.all(report.policy.actions == 0)  # ties settle on silence
    assert report.converged


def test_evaluation_matches_direct_linear_solve():
    model = make_model(delta_max=4, bucket_size=2, token_rate=0.4, epsilon=0.3,
                       discount=0.8, query_period=3)
    rng = np.random.default_rng(11)
    for trial in range(3):
        acts = (rng.integers(2, size=model.n_states)).astype(np.int8)
        grid = acts.reshape(model.delta_max, model.bucket_size + 1, 1, -1)
        grid[:, 0] = 0  # keep the policy admissible
        value = evaluate_policy(model, Policy(acts), tol=1e-12)
        assert np.max(np.abs(value.values - linear_value(model, acts))) < 1e-9


def test_evaluation_rejects_bad_inputs():
    model = make_model()
    with pytest.raises(IndexMismatch):
        evaluate_policy(model, Policy(np.zeros(3, dtype=np.int8)))
    with pytest.raises(IndexMismatch):
        evaluate_policy(model, all_silent(model), v0=np.zeros(5))
    bad = np.zeros(model.n_states, dtype=np.int8)
    bad[0] = 1  # state 0 has an empty bucket
    with pytest.raises(InvalidAction):
        evaluate_policy(model, Policy(bad))
    with pytest.raises(InvalidAction):
        validate_policy(model, Policy(np.full(model.n_states, 2, dtype=np.int8)))


def test_single_improvement_never_hurts():
    for seed in (0, 1, 2):
        model = random_tiny_model(np.random.default_rng(seed))
        v0 = evaluate_policy(model, all_silent(model), tol=1e-11)
        better = improve_policy(model, v0)
        v1 = evaluate_policy(model, better, tol=1e-11, v0=v0.values)
        assert np.all(v1.values <= v0.values + 1e-8)


def test_greedy_and_action_values_match_reference():
    model = make_model(delta_max=4, bucket_size=2, epsilon=0.25, token_rate=0.5,
                       discount=0.7, query_period=2)
    value = policy_iteration(model, tol=1e-11).value
    q = action_values(model, value)
    states = enumerate_states(model)
    lam = model.discount
    for i, state in enumerate(states):
        ref = {}
        for a in admissible_actions(model, state):
            ref[a] = sum(
                prob * (cost + lam * value.values[model.state_index(nxt)])
                for nxt, prob, cost in successors(model, state, a)
            )
        assert abs(q[i, 0] - ref[0]) < 1e-9
        if 1 in ref:
            assert abs(q[i, 1] - ref[1]) < 1e-9
        else:
            assert q[i, 1] == np.inf
    greedy = improve_policy(model, value).actions
    gap = q[:, 1] - q[:, 0]
    decisive = np.abs(gap) > 1e-9
    assert np.array_equal(greedy[decisive], (gap[decisive] < 0).astype(np.int8))


# ---------------------------------------------------------------------------
# optimality


def small_fixed_model():
    return make_model(delta_max=3, bucket_size=1, token_rate=0.5, epsilon=0.3,
                      discount=0.6, cost_kind=CostKind.QAPA, query_period=2)


def assert_same_optimum(model, got, reference, tol=1e-8):
    assert np.max(np.abs(got.value.values - reference.value.values)) < tol
    q = action_values(model, reference.value)
    gap = np.abs(q[:, 1] - q[:, 0])
    decisive = np.isfinite(gap) & (gap > 10 * tol)
    assert np.array_equal(
        got.policy.actions[decisive], reference.policy.actions[decisive]
    )


def test_policy_iteration_matches_brute_force():
    model = small_fixed_model()
    assert model.n_states == 12
    bf = brute_force_optimal(model)
    pi = policy_iteration(model, tol=1e-10)
    assert_same_optimum(model, pi, bf)
    assert bellman_residual(model, pi.value) < 1e-8


def test_random_models_match_brute_force():
    for seed in (7, 8, 9, 10):
        model = random_tiny_model(np.random.default_rng(seed))
        bf = brute_force_optimal(model)
        pi = policy_iteration(model, tol=1e-10)
        assert_same_optimum(model, pi, bf)


def test_value_iteration_agrees_with_policy_iteration():
    model = small_fixed_model()
    pi = policy_iteration(model, tol=1e-10)
    vi = value_iteration(model, tol=1e-10)
    assert_same_optimum(model, vi, pi, tol=1e-7)
    assert vi.iterations == vi.eval_sweeps > 1


def test_nearly_myopic_discount_greedy_on_immediate_cost():
    model = make_model(delta_max=6, bucket_size=2, token_rate=0.3, epsilon=0.2,
                       discount=0.01, cost_kind=CostKind.PQ, query_period=2)
    policy = policy_iteration(model, tol=1e-12).policy.actions
    for i, state in enumerate(enumerate_states(model)):
        if state.tokens == 0:
            continue
        gap = expected_cost(model, state, 0) - expected_cost(model, state, 1)
        # future term is bounded by discount * delta_max / (1 - discount) < 0.1
        if abs(gap) > 0.5:
            assert policy[i] == (1 if gap > 0 else 0), state


def test_brute_force_guards_and_tie_breaking():
    with pytest.raises(TooLarge):
        brute_force_optimal(make_model())  # 144 states
    tiny = make_model(delta_max=2, bucket_size=1, query_period=1,
                      cost_kind=CostKind.PQ)
    with pytest.raises(TooLarge):
        brute_force_optimal(tiny, max_states=3)

    report = brute_force_optimal(tiny)
    assert report.iterations == 4  # two free states, four deterministic policies

    # a dead channel makes every policy cost the same; first enumerated wins
    dead = make_model(delta_max=2, bucket_size=1, token_rate=0.0, epsilon=1.0,
                      query_period=1, cost_kind=CostKind.PQ)
    assert np.all(brute_force_optimal(dead).policy.actions == 0)


def test_free_channel_transmits_everywhere():
    model = make_model(delta_max=5, bucket_size=2, token_rate=1.0, epsilon=0.0,
                       cost_kind=CostKind.PQ, query_period=1)
    policy = policy_iteration(model).policy.actions
    for i, state in enumerate(enumerate_states(model)):
        assert policy[i] == (1 if state.tokens >= 1 else 0), state


# ---------------------------------------------------------------------------
# structure exploitation


def test_query_blind_cost_solves_on_collapsed_chain():
    model = make_model(delta_max=5, bucket_size=2, epsilon=0.3, token_rate=0.4,
                       cost_kind=CostKind.PQ, query_period=5)
    fast = policy_iteration(model, tol=1e-10)
    full = policy_iteration(model, tol=1e-10, exploit_pq_structure=False)
    assert np.max(np.abs(fast.value.values - full.value.values)) < 1e-8
    assert np.array_equal(fast.policy.actions, full.policy.actions)
    # the collapsed tables are constant along the query axis
    v = fast.value.values.reshape(-1, 5)
    assert np.all(v == v[:, :1])

    vi_fast = value_iteration(model, tol=1e-10)
    vi_full = value_iteration(model, tol=1e-10, exploit_pq_structure=False)
    assert np.max(np.abs(vi_fast.value.values - vi_full.value.values)) < 1e-8


def test_memoryless_queries_scale_the_query_blind_solution():
    # if every slot is a query independently w.p. 0.3, charging only query
    # slots scales all costs by 0.3 and leaves the argmin untouched
    bern = MarkovProcess(
        np.array([[0.3, 0.7], [0.3, 0.7]]), query_states=frozenset({1})
    )
    qapa = make_model(delta_max=4, bucket_size=1, epsilon=0.25, token_rate=0.6,
                      discount=0.8, cost_kind=CostKind.QAPA, query_chain=bern)
    pq = make_model(delta_max=4, bucket_size=1, epsilon=0.25, token_rate=0.6,
                    discount=0.8, cost_kind=CostKind.PQ, query_chain=bern)
    r_qapa = policy_iteration(qapa, tol=1e-11)
    r_pq = policy_iteration(pq, tol=1e-11)
    assert np.max(np.abs(r_qapa.value.values - 0.3 * r_pq.value.values)) < 1e-8
    assert np.array_equal(r_qapa.policy.actions, r_pq.policy.actions)


# ---------------------------------------------------------------------------
# convergence control and warm starts


def test_sweep_and_round_caps_raise():
    model = make_model()
    with pytest.raises(NonConvergence):
        value_iteration(model, tol=1e-12, max_sweeps=1)
    with pytest.raises(NonConvergence):
        policy_iteration(model, max_rounds=0)
    with pytest.raises(NonConvergence):
        evaluate_policy(model, all_silent(model), tol=1e-12, max_sweeps=1)


def test_warm_start_settles_immediately():
    model = small_fixed_model()
    cold = policy_iteration(model, tol=1e-10)
    warm = policy_iteration(model, tol=1e-10, v0=cold.value.values,
                            policy0=cold.policy.actions)
    assert warm.iterations == 1
    assert np.array_equal(warm.policy.actions, cold.policy.actions)
    assert np.max(np.abs(warm.value.values - cold.value.values)) < 1e-9
    with pytest.raises(IndexMismatch):
        policy_iteration(model, v0=np.zeros(3))


# ---------------------------------------------------------------------------
# policy files


def test_policy_file_round_trip(tmp_path):
    model = small_fixed_model()
    report = policy_iteration(model, tol=1e-10)
    path = tmp_path / "optimal.policy"
    save_policy(path, model, report.policy, report.value)

    loaded = load_policy(path, model)
    assert np.array_equal(loaded.policy.actions, report.policy.actions)
    assert np.array_equal(loaded.value.values, report.value.values)  # %.17g exact
    assert loaded.meta["config_hash"] == model.config_hash()
    assert loaded.meta["n_states"] == str(model.n_states)

    # data row order is immaterial: the loader re-sorts by index
    lines = path.read_text().splitlines()
    head = [l for l in lines if l.startswith("#")]
    rows = [l for l in lines if not l.startswith("#")]
    path.write_text("\n".join(head + rows[::-1]) + "\n")
    again = load_policy(path, model)
    assert np.array_equal(again.policy.actions, report.policy.actions)
    assert np.array_equal(again.value.values, report.value.values)


def test_policy_file_without_values(tmp_path):
    model = small_fixed_model()
    path = tmp_path / "bare.policy"
    save_policy(path, model, all_silent(model))
    loaded = load_policy(path, model)
    assert loaded.value is None
    assert np.all(loaded.policy.actions == 0)


def test_policy_file_error_paths(tmp_path):
    model = small_fixed_model()
    path = tmp_path / "p.policy"
    save_policy(path, model, all_silent(model))

    other = make_model(delta_max=3, bucket_size=1, token_rate=0.51, epsilon=0.3,
                       discount=0.6, cost_kind=CostKind.QAPA, query_period=2)
    assert other.n_states == model.n_states
    with pytest.raises(IndexMismatch):
        load_policy(path, other)

    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")  # drop one state row
    with pytest.raises(IndexMismatch):
        load_policy(path)

    bad = tmp_path / "bad.policy"
    bad.write_text("not a policy file\n")
    with pytest.raises(ValueError):
        load_policy(bad)

    with pytest.raises(IndexMismatch):
        save_policy(tmp_path / "x.policy", model, all_silent(model),
                    ValueFunction(np.zeros(3)))
