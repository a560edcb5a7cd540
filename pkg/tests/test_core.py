import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from asml.bruteforce import coverage_instance, two_task_instance
from asml.core import (
    ConcatPolicy,
    EmptyPolicy,
    ExplicitPrior,
    GenerativePrior,
    MixturePolicy,
    PartialRealization,
    Realization,
    Task,
    TwoPhasePolicy,
    concat,
    conditional_prior,
    dump_instance,
    expected_utility_exact,
    expected_utility_mc,
    f_avg,
    is_consistent,
    is_subrealization,
    load_instance,
    run_policy,
    truncate,
)
from asml.estimation import ExactEstimator
from asml.exceptions import BudgetExceeded, EmptyTaskSet, NotEnumerable, ZeroMassCondition
from asml.policies import FixedSetPolicy, GreedyPolicy, tgp_policy, tgp_train

PR = PartialRealization


def uniform_prior(*rows):
    return ExplicitPrior([Realization(tuple(r)) for r in rows], [1 / len(rows)] * len(rows))


class Repeat(TwoPhasePolicy):
    """Keeps choosing item 0."""

    def adaptive_rule(self, task, psi, history):
        return [(0, 1.0)]


# --- partial realizations ----------------------------------------------------


def test_subrealization_examples():
    assert is_subrealization(PR(), PR([(1, 0), (2, 1)]))
    assert is_subrealization(PR([(1, 0)]), PR([(1, 0), (2, 1)]))
    assert not is_subrealization(PR([(1, 0)]), PR([(1, 1), (2, 1)]))


def test_consistency_examples():
    phi = Realization((1, 0, 1))
    assert is_consistent(PR(), phi)
    assert is_consistent(PR([(1, 0)]), phi)
    assert not is_consistent(PR([(1, 0)]), Realization((0, 1, 1)))


psis = st.dictionaries(st.integers(0, 4), st.integers(0, 1), max_size=5).map(lambda d: PR(d.items()))


@given(psis, psis, psis)
def test_subrealization_is_a_partial_order(a, b, c):
    assert is_subrealization(a, a)
    if is_subrealization(a, b) and is_subrealization(b, a):
        assert dict(a) == dict(b)
    if is_subrealization(a, b) and is_subrealization(b, c):
        assert is_subrealization(a, c)


def test_partial_realization_rejects_conflicts_and_keeps_order():
    psi = PR([(3, 1), (0, 0)])
    assert psi.pairs == ((3, 1), (0, 0))
    assert psi.dom == {0, 3}
    assert PR([(3, 1), (3, 1)]).pairs == ((3, 1),)
    with pytest.raises(ValueError):
        PR([(3, 1), (3, 0)])
    assert hash(PR([(3, 1), (0, 0)])) == hash(PR([(0, 0), (3, 1)]))


# --- priors ------------------------------------------------------------------


def test_conditioning_examples():
    p = uniform_prior((0, 0), (1, 1))
    point = conditional_prior(p, PR([(0, 1)]))
    assert point.support_size == 1 and point.realizations[0].states == (1, 1)
    assert conditional_prior(p, PR()) is p
    four = uniform_prior((0, 0), (0, 1), (1, 0), (1, 1))
    two = conditional_prior(four, PR([(0, 1)]))
    assert sorted(r.states for r in two.realizations) == [(1, 0), (1, 1)]
    assert np.allclose(two.probs, [0.5, 0.5])


def test_zero_mass_condition_raises():
    p = uniform_prior((0, 0), (1, 1))
    with pytest.raises(ZeroMassCondition):
        conditional_prior(p, PR([(0, 0), (1, 1)]))
    with pytest.raises(ZeroMassCondition):
        p.weights(PR([(0, 2)]))


def test_explicit_prior_validates_probabilities():
    with pytest.raises(ValueError):
        ExplicitPrior([Realization((0,))], [0.9])
    with pytest.raises(ValueError):
        ExplicitPrior([Realization((0,)), Realization((1,))], [1.5, -0.5])


@given(st.integers(0, 2**32 - 1))
def test_conditioning_then_marginalizing_recovers_prior(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    rows = [tuple(int(x) for x in rng.integers(0, 2, size=n)) for _ in range(int(rng.integers(1, 6)))]
    rows = sorted(set(rows))
    probs = rng.dirichlet(np.ones(len(rows)))
    p = ExplicitPrior([Realization(r) for r in rows], probs)
    items = list(range(int(rng.integers(0, n + 1))))
    mixed: dict = {}
    seen = set()
    for phi in p.realizations:
        psi = PR((e, phi.state(e)) for e in items)
        if psi.key() in seen:
            continue
        seen.add(psi.key())
        mass = p.mass(psi)
        for phi2, q in conditional_prior(p, psi).items():
            mixed[phi2.states] = mixed.get(phi2.states, 0.0) + mass * q
    for phi, q in p.items():
        assert math.isclose(mixed.get(phi.states, 0.0), q, abs_tol=1e-12)


def test_generative_prior_rejection_and_conditional():
    p = GenerativePrior(lambda rng: Realization((int(rng.integers(2)), int(rng.integers(2)))), n_items=2)
    for s in range(20):
        phi = p.sample_conditional(PR([(0, 1)]), s)
        assert phi.states[0] == 1
    nested = p.conditional(PR([(0, 1)]))
    assert nested.sample_conditional(PR([(1, 0)]), 3).states == (1, 0)
    stuck = GenerativePrior(lambda rng: Realization((0,)), n_items=1, max_rejections=10)
    with pytest.raises(ZeroMassCondition):
        stuck.sample_conditional(PR([(0, 1)]), 0)


# --- tasks and policy execution ------------------------------------------------


def test_dummies_are_stripped_from_utility(two_tasks):
    tasks, prior = two_tasks
    phi = prior.realizations[0]
    assert tasks[1]({0, 5, 7}, phi) == tasks[1]({0}, phi) == 1.0
    assert tasks[1]({0, 1}, phi) == 2.0
    assert tasks[0]({0}, phi) == 0.0


def test_run_policy_fixed_set_reads_states():
    p = uniform_prior((1, 0, 1))
    task = Task(lambda items, phi: float(len(items)), 3)
    trace = run_policy(FixedSetPolicy((2, 0, 1), 3), task, p.realizations[0], seed=0)
    assert trace.steps == ((2, 1), (0, 1), (1, 0))
    assert len(trace) == 3


def test_run_policy_two_task_greedy_selects_other_item(two_tasks):
    tasks, prior = two_tasks
    est = ExactEstimator(prior)
    trace = run_policy(GreedyPolicy((1,), 2, est), tasks[1], prior.realizations[0], seed=0)
    assert trace.items == (1, 0)


def test_run_policy_replays_identically():
    tasks, prior = coverage_instance(4, 2, 1, seed=3, monotone=False)
    from asml.policies import pi_b

    pol = pi_b(3, ExactEstimator(prior))
    phi = prior.realizations[5]
    a = [run_policy(pol, tasks[0], phi, seed=s).steps for s in range(10)]
    b = [run_policy(pol, tasks[0], phi, seed=s).steps for s in range(10)]
    assert a == b


def test_reselection_raises_budget_exceeded():
    p = uniform_prior((0, 0))
    task = Task(lambda items, phi: float(len(items)), 2)
    with pytest.raises(BudgetExceeded):
        run_policy(Repeat((0,), 2), task, p.realizations[0])


def test_two_phase_rejects_oversized_initial_set():
    with pytest.raises(ValueError):
        FixedSetPolicy((0, 1, 2), 2)


# --- exact evaluation --------------------------------------------------------


def test_exact_examples_two_tasks(two_tasks):
    tasks, prior = two_tasks
    est = ExactEstimator(prior)
    assert expected_utility_exact(FixedSetPolicy((0,), 2), tasks[0], prior) == 0.0
    assert expected_utility_exact(GreedyPolicy((1,), 2, est), tasks[1], prior) == 2.0
    assert f_avg(FixedSetPolicy((0,), 1), tasks, prior) == 0.5


def test_constant_task_has_constant_value():
    tasks, prior = coverage_instance(4, 2, 1, seed=0)
    const = Task(lambda items, phi: 3.25, 4)
    from asml.policies import pi_b, trgp_mixture

    for pol in (FixedSetPolicy((1,), 3), pi_b(3, ExactEstimator(prior)), trgp_mixture([const], prior, 1, 3)):
        assert math.isclose(expected_utility_exact(pol, const, prior), 3.25)


def test_exact_requires_explicit_prior():
    gen = GenerativePrior(lambda rng: Realization((0,)), n_items=1)
    task = Task(lambda items, phi: 1.0, 1)
    with pytest.raises(NotEnumerable):
        expected_utility_exact(FixedSetPolicy((0,), 1), task, gen)


def test_f_avg_examples(two_tasks):
    tasks, prior = two_tasks
    pol = GreedyPolicy((0,), 2, ExactEstimator(prior))
    single = f_avg(pol, tasks[1:], prior)
    assert single == expected_utility_exact(pol, tasks[1], prior)
    assert f_avg(pol, tasks + tasks, prior) == f_avg(pol, tasks, prior)
    with pytest.raises(EmptyTaskSet):
        f_avg(pol, [], prior)


@given(st.integers(0, 10_000), st.permutations(range(3)))
def test_f_avg_permutation_invariant(seed, perm):
    tasks, prior = coverage_instance(4, 2, 3, seed=seed)
    pol = tgp_policy(tgp_train(tasks, prior, 1), 3, prior)
    assert math.isclose(f_avg(pol, tasks, prior), f_avg(pol, [tasks[i] for i in perm], prior), abs_tol=1e-9)


def test_exact_matches_monte_carlo():
    tasks, prior = coverage_instance(4, 2, 1, seed=11, monotone=False)
    from asml.policies import pi_a

    pol = pi_a(tasks, ExactEstimator(prior), 3)
    exact = expected_utility_exact(pol, tasks[0], prior)
    mean, se = expected_utility_mc(pol, tasks[0], prior, n_samples=4000, seed=1)
    assert abs(mean - exact) < 4 * se


def test_mixture_validation():
    a, b = FixedSetPolicy((0,), 2), FixedSetPolicy((1,), 2)
    with pytest.raises(ValueError):
        MixturePolicy([(0.5, a), (0.4, b)])
    with pytest.raises(ValueError):
        MixturePolicy([(0.5, a), (0.5, FixedSetPolicy((1,), 3))])
    nested = MixturePolicy([(0.5, a), (0.5, MixturePolicy([(0.5, a), (0.5, b)]))])
    assert sorted(w for w, _ in nested.branches()) == [0.25, 0.25, 0.5]


# --- concatenation and truncation -------------------------------------------------


def test_concat_examples(two_tasks):
    tasks, prior = two_tasks
    pi = GreedyPolicy((0,), 2, ExactEstimator(prior))
    cat = concat(pi, EmptyPolicy())
    assert cat.k == 2
    assert expected_utility_exact(cat, tasks[1], prior) == expected_utility_exact(pi, tasks[1], prior)
    one, two = FixedSetPolicy((0,), 1), FixedSetPolicy((1,), 1)
    assert expected_utility_exact(concat(one, two), tasks[1], prior) == 2.0


def test_concat_ignores_first_observations_and_dedupes():
    tasks, prior = coverage_instance(4, 2, 1, seed=5)
    est = ExactEstimator(prior)
    pi = GreedyPolicy((), 2, est)
    both = ConcatPolicy(pi, pi)
    assert expected_utility_exact(both, tasks[0], prior) >= expected_utility_exact(pi, tasks[0], prior) - 1e-9
    for phi in prior.realizations[:6]:
        t1 = run_policy(pi, tasks[0], phi).items
        t2 = run_policy(both, tasks[0], phi).items
        assert t2 == t1 + t1


def test_truncation_examples():
    tasks, prior = coverage_instance(3, 2, 1, seed=2)
    task = tasks[0]
    est = ExactEstimator(prior)
    pi = GreedyPolicy((2,), 3, est)
    assert expected_utility_exact(truncate(pi, 3), task, prior) == expected_utility_exact(pi, task, prior)
    assert expected_utility_exact(truncate(pi, 0), task, prior) == prior.expected_value(task, ())
    assert math.isclose(expected_utility_exact(truncate(pi, 1), task, prior), prior.expected_value(task, {2}))
    with pytest.raises(ValueError):
        truncate(pi, 4)


@given(st.integers(0, 10_000))
def test_truncation_monotone_in_level(seed):
    tasks, prior = coverage_instance(4, 2, 1, seed=seed)
    pi = GreedyPolicy((1,), 4, ExactEstimator(prior))
    vals = [expected_utility_exact(truncate(pi, t), tasks[0], prior) for t in range(5)]
    assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))


# --- instance files ---------------------------------------------------------------


def test_instance_json_round_trip(tmp_path):
    tasks, prior = coverage_instance(3, 2, 2, seed=4)
    doc = dump_instance(tasks, prior)
    path = tmp_path / "inst.json"
    path.write_text(json.dumps(doc))
    tasks2, prior2 = load_instance(path)
    assert prior2 == prior
    for t, t2 in zip(tasks, tasks2):
        for items in ((), (0,), (0, 2), (0, 1, 2)):
            for phi in prior.realizations:
                assert math.isclose(t(items, phi), t2(items, phi))


def test_instance_missing_entries_default_to_zero():
    doc = {"n": 2, "states": 1, "realizations": [{"states": [0, 0], "prob": 1.0}], "tasks": [{"utilities": {"0|0": 1.5}}]}
    tasks, prior = load_instance(doc)
    phi = prior.realizations[0]
    assert tasks[0]({0}, phi) == 1.5 and tasks[0]({1}, phi) == 0.0
    with pytest.raises(ValueError):
        load_instance({"n": 1, "states": 1, "realizations": [{"states": [3], "prob": 1.0}], "tasks": []})
