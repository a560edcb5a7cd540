import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from asml import ic
from asml.bruteforce import (
    PropertyReport,
    check_adaptive_monotonicity,
    check_adaptive_submodularity,
    coverage_instance,
    enumerate_partial_realizations,
    optimal_continuation,
    optimal_two_phase,
    product_prior,
    two_task_instance,
    training_average_objective,
)
from asml.core import ExplicitPrior, PartialRealization, Realization, Task, f_avg
from asml.estimation import ExactEstimator, marginal_item_exact
from asml.exceptions import TooLarge
from asml.policies import (
    baseline_gt,
    baseline_random,
    baseline_rmg,
    pi_a,
    pi_b,
    tgp_policy,
    tgp_train,
    trgp_mixture,
)

PR = PartialRealization


def deterministic_task(values):
    n = len(values)
    prior = ExplicitPrior([Realization((0,) * n)], [1.0])
    return Task(lambda items, phi: float(sum(values[e] for e in items)) - 0.5 * (len(items) > 2), n), prior


def test_continuation_budget_zero_is_current_value():
    tasks, prior = coverage_instance(4, 2, 1, seed=1)
    psi = PR([(2, prior.realizations[3].state(2))])
    assert math.isclose(optimal_continuation(tasks[0], prior, psi, 0), prior.expected_value(tasks[0], {2}, psi))


def test_continuation_deterministic_states_is_exhaustive_search():
    task, prior = deterministic_task([1.0, 2.0, 0.5, 3.0, 0.2])
    phi = prior.realizations[0]
    for b in range(4):
        direct = max(task(S, phi) for r in range(b + 1) for S in itertools.combinations(range(5), r))
        assert math.isclose(optimal_continuation(task, prior, PR(), b), direct)


def test_continuation_budget_one_is_one_step_bellman():
    tasks, prior = coverage_instance(4, 2, 1, seed=2)
    psi = PR([(0, prior.realizations[0].state(0))])
    here = prior.expected_value(tasks[0], {0}, psi)
    best = max(here + marginal_item_exact(tasks[0], prior, psi, e).mean for e in (1, 2, 3))
    assert math.isclose(optimal_continuation(tasks[0], prior, psi, 1), best)


@given(st.integers(0, 10_000), st.integers(1, 3))
def test_bellman_consistency(seed, budget):
    tasks, prior = coverage_instance(4, 2, 1, seed=seed, monotone=bool(seed % 2))
    task = tasks[0]
    for psi in enumerate_partial_realizations(prior, max_size=1):
        v = optimal_continuation(task, prior, psi, budget)
        stop = optimal_continuation(task, prior, psi, budget - 1)
        options = [stop]
        for e in range(4):
            if e in psi:
                continue
            options.append(
                sum(q * optimal_continuation(task, prior, psi.extend(e, s), budget - 1) for s, q in prior.state_distribution(e, psi))
            )
        assert math.isclose(v, max(options), abs_tol=1e-9)


def test_guard_raises():
    big = product_prior([[1.0]] * 7)
    task = Task(lambda items, phi: 0.0, 7)
    with pytest.raises(TooLarge):
        optimal_continuation(task, big, PR(), 1)
    tasks, prior = coverage_instance(3, 2, 1, seed=0)
    with pytest.raises(TooLarge):
        optimal_continuation(tasks[0], prior, PR(), 5)
    wide = product_prior([[0.25] * 4] * 5)
    with pytest.raises(TooLarge):
        check_adaptive_submodularity(Task(lambda items, phi: 0.0, 5), wide)
    narrow_support = product_prior([[0.25] * 4])
    assert check_adaptive_submodularity(Task(lambda items, phi: 0.0, 1), narrow_support).holds


def test_two_phase_examples(two_tasks):
    tasks, prior = two_tasks
    opt = optimal_two_phase(tasks, prior, 1, 2)
    assert opt.value == 1.0 and len(opt.S_o) == 1
    many, p = coverage_instance(4, 2, 2, seed=3)
    full = optimal_two_phase(many, p, 3, 3)
    best = max(np.mean([p.expected_value(t, S) for t in many]) for S in itertools.combinations(range(4), 3))
    assert math.isclose(full.value, best)
    one = optimal_two_phase(many, p, 1, 1)
    best1 = max(np.mean([p.expected_value(t, {e}) for t in many]) for e in range(4))
    assert math.isclose(one.value, best1)


@given(st.integers(0, 10_000))
def test_oracle_dominates_every_policy(seed):
    monotone = bool(seed % 2)
    tasks, prior = coverage_instance(4, 2, 2, seed=seed, monotone=monotone)
    est = ExactEstimator(prior)
    opt = {(l, k): optimal_two_phase(tasks, prior, l, k).value for l, k in [(1, 3), (2, 3), (1, 2), (2, 4), (3, 3)]}
    candidates = {
        (1, 3): [tgp_policy(tgp_train(tasks, est, 1), 3, est), trgp_mixture(tasks, est, 1, 3), pi_b(3, est)],
        (2, 3): [pi_a(tasks, est, 3), tgp_policy(tgp_train(tasks, est, 2), 3, est), baseline_rmg(tasks, est, 2, 3)],
        (1, 2): [pi_b(2, est)],
        (2, 4): [trgp_mixture(tasks, est, 2, 4)],
        (3, 3): [baseline_gt(tasks, est, 3), baseline_random(3)],
    }
    for cell, pols in candidates.items():
        for pol in pols:
            assert f_avg(pol, tasks, prior) <= opt[cell] + 1e-9


def test_modular_independent_states_is_adaptive_submodular():
    prior = product_prior([[0.3, 0.7], [0.5, 0.5], [0.9, 0.1]])
    task = Task(lambda items, phi: float(sum(1 + 2 * phi.state(e) for e in items)), 3)
    assert check_adaptive_submodularity(task, prior).holds
    assert check_adaptive_monotonicity(task, prior).holds


def test_ic_four_node_task_is_adaptive_submodular():
    g = ic.DiGraph(4, ((0, 1), (1, 2), (0, 2), (2, 3), (3, 1)))
    task = ic.as_task(ic.ICTask(g, np.array([0.5, 0.3, 0.6, 0.4, 0.7])))
    rep = check_adaptive_submodularity(task)
    assert rep.holds and rep.checked > 0
    assert check_adaptive_monotonicity(task).holds


def test_training_average_violation_pair():
    task, prior = training_average_objective()
    rep = check_adaptive_submodularity(task, prior)
    assert not rep.holds
    assert rep.pairs() == [(0.5, 1.0)]
    small, big, e, d, d2 = rep.violations[0]
    assert len(small) == 0 and e not in big and (d, d2) == (0.5, 1.0)
    doc = json.loads(rep.to_json())
    assert doc["holds"] is False and doc["violation_pairs"] == [[0.5, 1.0]]


def test_training_average_fixture_values(two_tasks):
    tasks, prior = two_tasks
    phi = prior.realizations[0]
    assert tasks[1]({0, 1}, phi) == 2.0
    assert tasks[0]({0}, phi) == 0.0
    assert np.mean([prior.expected_value(t, {0}) - prior.expected_value(t, ()) for t in tasks]) == 0.5


def test_monotonicity_checker():
    tasks, prior = coverage_instance(4, 2, 1, seed=0)
    assert check_adaptive_monotonicity(tasks[0], prior).holds
    pair = ExplicitPrior([Realization((0, 0))], [1.0])
    penalized = Task(lambda items, phi: {0: 0.0, 1: 2.0, 2: 1.0}[len(items)], 2)
    rep = check_adaptive_monotonicity(penalized, pair)
    assert not rep.holds
    assert all(e < 2 for _, _, e, _, _ in rep.violations)
    assert {e for _, _, e, _, _ in rep.violations} == {0, 1}


def test_generator_outputs_have_declared_properties():
    for seed in range(10):
        tasks, prior = coverage_instance(4, 2, 2, seed=seed, monotone=False)
        for t in tasks:
            assert check_adaptive_submodularity(t, prior).holds
            assert min(t(S, phi) for r in range(5) for S in itertools.combinations(range(4), r) for phi in prior.realizations) >= -1e-12


def test_enumerate_partial_realizations_counts():
    prior = product_prior([[0.5, 0.5], [0.5, 0.5]])
    psis = enumerate_partial_realizations(prior)
    assert len(psis) == 1 + 2 + 2 + 4
    assert len(enumerate_partial_realizations(prior, max_size=1)) == 5


def test_property_report_holds_iff_empty():
    assert PropertyReport("x").holds
    assert not PropertyReport("x", [(PR(), PR(), 0, 0.0, 1.0)]).holds
