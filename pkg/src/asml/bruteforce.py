"""Exact optimal two-phase policies and adaptive-property checkers for tiny instances.

Everything here enumerates the prior, so every entry point enforces a size
guard and raises :class:`~asml.exceptions.TooLarge` instead of truncating.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any

import numpy as np

from .core import (
    DUMMY_STATE,
    ExplicitPrior,
    PartialRealization,
    Realization,
    Task,
    as_rng,
    resolve_prior,
)
from .exceptions import EmptyTaskSet, NotEnumerable, TooLarge

MAX_ITEMS = 6
MAX_STATES = 3
MAX_BUDGET = 4
TOL = 1e-9


def _explicit(task: Task, prior) -> ExplicitPrior:
    prior = resolve_prior(task, prior)
    if not isinstance(prior, ExplicitPrior):
        raise NotEnumerable("the brute-force oracle needs an explicit prior")
    return prior


def check_guard(prior: ExplicitPrior, budget: int = 0):
    # a wide state alphabet is fine when the support itself is no larger than the cap's worst case
    alphabet_ok = prior.n_states <= MAX_STATES or prior.support_size <= MAX_STATES**MAX_ITEMS
    if prior.n_items > MAX_ITEMS or not alphabet_ok or budget > MAX_BUDGET:
        raise TooLarge(
            f"instance too large for exhaustive search: n={prior.n_items} (max {MAX_ITEMS}), "
            f"states={prior.n_states} (max {MAX_STATES}), budget={budget} (max {MAX_BUDGET})"
        )


class _Solver:
    """Memoized optimal adaptive continuation for one task.

    Values are totals E[f(final set)], so stopping early (selecting dummies)
    is always an option and the value never decreases with the budget.
    """

    def __init__(self, task: Task, prior: ExplicitPrior):
        self.task = task
        self.prior = prior
        self.memo: dict[tuple, float] = {}
        self.choice: dict[tuple, int | None] = {}

    def value(self, psi: PartialRealization, budget: int) -> float:
        key = (psi.key(), budget)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        best = self.prior.expected_value(self.task, psi.dom, psi)
        arg = None
        if budget > 0:
            for e in range(self.task.n_items):
                if e in psi:
                    continue
                v = sum(
                    q * self.value(psi.extend(e, s), budget - 1)
                    for s, q in self.prior.state_distribution(e, psi)
                )
                if v > best + TOL:
                    best, arg = v, e
        self.memo[key] = best
        self.choice[key] = arg
        return best


def optimal_continuation(task: Task, prior, psi=None, budget: int = 0) -> float:
    """Best expected final utility reachable from ``psi`` with ``budget`` more picks."""
    prior = _explicit(task, prior)
    check_guard(prior, budget)
    psi = psi if isinstance(psi, PartialRealization) else PartialRealization((psi or {}).items())
    return _Solver(task, prior).value(psi, budget)


def _outcomes(prior: ExplicitPrior, S, psi=None, p=1.0):
    """Partial realizations of ``S`` with their probabilities."""
    psi = PartialRealization() if psi is None else psi
    if not S:
        yield psi, p
        return
    e, rest = S[0], S[1:]
    for s, q in prior.state_distribution(e, psi):
        yield from _outcomes(prior, rest, psi.extend(e, s), p * q)


@dataclass
class OptimalValue:
    value: float
    initial_set: tuple[int, ...]
    continuation: dict = field(default_factory=dict, repr=False)

    @property
    def S_o(self) -> tuple[int, ...]:
        return self.initial_set


def optimal_two_phase(tasks, prior, l: int, k: int) -> OptimalValue:
    """Optimum of the two-phase problem over initial sets of at most ``l`` real items.

    Slots of the initial set left empty are filled with dummies, so the
    continuation budget is always ``k - l``.
    """
    tasks = list(tasks)
    if not tasks:
        raise EmptyTaskSet("optimal_two_phase needs at least one task")
    if not 0 <= l <= k:
        raise ValueError(f"need 0 <= l <= k (l={l}, k={k})")
    solvers = []
    for t in tasks:
        p = _explicit(t, prior)
        check_guard(p, k - l)
        solvers.append(_Solver(t, p))
    n = tasks[0].n_items
    best, best_S = -np.inf, ()
    for size in range(min(l, n) + 1):
        for S in combinations(range(n), size):
            total = 0.0
            for sv in solvers:
                total += sum(q * sv.value(psi, k - l) for psi, q in _outcomes(sv.prior, S))
            total /= len(tasks)
            if total > best + TOL:
                best, best_S = total, S
    continuation = {}
    for i, sv in enumerate(solvers):
        for (key, budget), e in sv.choice.items():
            if e is not None:
                continuation[(i, key, budget)] = e
    return OptimalValue(float(best), tuple(best_S), continuation)


# ---------------------------------------------------------------------------
# property checkers


def enumerate_partial_realizations(prior: ExplicitPrior, max_size: int | None = None) -> list[PartialRealization]:
    """Every partial realization with positive mass, smallest domains first."""
    n = prior.n_items
    top = n if max_size is None else min(n, max_size)
    seen: set = set()
    out = []
    support = [phi for phi, q in prior.items() if q > 0]
    for size in range(top + 1):
        for dom in combinations(range(n), size):
            for phi in support:
                psi = PartialRealization((e, phi.state(e)) for e in dom)
                key = psi.key()
                if key not in seen:
                    seen.add(key)
                    out.append(psi)
    return out


def _json_state(s):
    if isinstance(s, (int, np.integer)):
        return int(s)
    if isinstance(s, float):
        return s
    return repr(s)


def _json_psi(psi: PartialRealization):
    return [[int(e), _json_state(s)] for e, s in psi.key()]


@dataclass
class PropertyReport:
    """Outcome of a checker; violations are ``(psi, psi', e, delta, delta')``."""

    property: str
    violations: list = field(default_factory=list)
    checked: int = 0

    @property
    def holds(self) -> bool:
        return not self.violations

    def pairs(self) -> list[tuple[float, float]]:
        """Distinct ``(delta, delta')`` value pairs among the violations."""
        return sorted({(round(a, 12), round(b, 12)) for _, _, _, a, b in self.violations})

    def to_dict(self) -> dict:
        return {
            "property": self.property,
            "holds": self.holds,
            "checked": self.checked,
            "violation_pairs": [list(p) for p in self.pairs()],
            "violations": [
                {"psi": _json_psi(a), "psi_prime": _json_psi(b), "item": int(e), "delta": float(d), "delta_prime": float(d2)}
                for a, b, e, d, d2 in self.violations
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


class _Marginals:
    def __init__(self, task, prior):
        self.task = task
        self.prior = prior
        self.cache: dict = {}

    def __call__(self, psi: PartialRealization, e: int) -> float:
        key = (psi.key(), e)
        v = self.cache.get(key)
        if v is None:
            if e >= self.task.n_items or e in psi:
                v = 0.0
            else:
                dom = psi.dom
                v = self.prior.expected_value(self.task, dom | {e}, psi) - self.prior.expected_value(self.task, dom, psi)
            self.cache[key] = v
        return v


def _restrictions(psi: PartialRealization):
    pairs = psi.key()
    for size in range(len(pairs) + 1):
        for sub in combinations(pairs, size):
            yield PartialRealization(sub)


def check_adaptive_submodularity(task: Task, prior=None, tol: float = TOL, include_dummy: bool = True) -> PropertyReport:
    """Checks Delta(e | psi) >= Delta(e | psi') for every psi below psi' and e outside dom(psi')."""
    prior = _explicit(task, prior)
    check_guard(prior)
    delta = _Marginals(task, prior)
    n = task.n_items
    report = PropertyReport("adaptive_submodularity")
    items = list(range(n)) + ([n] if include_dummy else [])
    for big in enumerate_partial_realizations(prior):
        for small in _restrictions(big):
            for e in items:
                if e in big:
                    continue
                report.checked += 1
                d, d2 = delta(small, e), delta(big, e)
                if d < d2 - tol:
                    report.violations.append((small, big, e, d, d2))
    return report


def check_adaptive_monotonicity(task: Task, prior=None, tol: float = TOL, include_dummy: bool = True) -> PropertyReport:
    """Checks Delta(e | psi) >= 0 for every psi with positive mass."""
    prior = _explicit(task, prior)
    check_guard(prior)
    delta = _Marginals(task, prior)
    n = task.n_items
    report = PropertyReport("adaptive_monotonicity")
    items = list(range(n)) + ([n] if include_dummy else [])
    for psi in enumerate_partial_realizations(prior):
        for e in items:
            if e in psi:
                continue
            report.checked += 1
            d = delta(psi, e)
            if d < -tol:
                report.violations.append((psi, psi, e, d, d))
    return report


# ---------------------------------------------------------------------------
# fixtures


def _two_task_value(task_id: int, items: frozenset) -> float:
    if task_id == 0:
        return 0.0
    return float(len(items))


def two_task_instance() -> tuple[list[Task], ExplicitPrior]:
    """Two items, two tasks, one state: task 0 is identically zero, task 1 counts items.

    Items are numbered 0 and 1.
    """
    prior = ExplicitPrior([Realization((DUMMY_STATE, DUMMY_STATE))], [1.0])
    tasks = [
        Task(lambda items, phi, i=i: _two_task_value(i, items), 2, True, True, name=f"task{i}")
        for i in range(2)
    ]
    return tasks, prior


def training_average_objective() -> tuple[Task, ExplicitPrior]:
    """The task-averaged objective seen before the task is known.

    Which task is active is itself random (uniform), and every selected item
    reveals it: both items carry the task id as their state.
    """
    prior = ExplicitPrior([Realization((0, 0)), Realization((1, 1))], [0.5, 0.5])
    task = Task(lambda items, phi: _two_task_value(phi.states[0], items), 2, True, False, name="training-average")
    return task, prior


class CoverageUtility:
    """Weighted coverage of ``cover[item][state]`` minus a modular item penalty."""

    def __init__(self, weights, cover, penalty=None):
        self.weights = np.asarray(weights, dtype=float)
        self.cover = cover
        self.penalty = None if penalty is None else np.asarray(penalty, dtype=float)

    def __call__(self, items, phi) -> float:
        covered = 0
        for e in items:
            covered |= self.cover[e][phi.state(e)]
        value = float(sum(w for j, w in enumerate(self.weights) if covered >> j & 1))
        if self.penalty is not None:
            value -= float(sum(self.penalty[e] for e in items))
        return value


def product_prior(probs_per_item) -> ExplicitPrior:
    """Independent item states; ``probs_per_item[e]`` is the state distribution of item e."""
    reals, probs = [()], [1.0]
    for dist in probs_per_item:
        reals = [r + (s,) for r in reals for s in range(len(dist))]
        probs = [p * q for p in probs for q in dist]
    return ExplicitPrior([Realization(r) for r in reals], probs, n_items=len(probs_per_item))


def coverage_instance(n: int, n_states: int, m: int, seed=0, monotone: bool = True, universe: int = 6, max_value: float = 10.0, max_penalty: float = 3.0):
    """Random tasks sharing a product prior; coverage utilities in [0, max_value].

    Non-monotone tasks subtract item penalties drawn from [0, max_penalty],
    scaled down just enough that no utility value is negative.
    """
    rng = as_rng(seed)
    dists = []
    for _ in range(n):
        w = rng.uniform(0.2, 1.0, size=n_states)
        dists.append(w / w.sum())
    prior = product_prior(dists)
    tasks = []
    for i in range(m):
        weights = rng.uniform(0.0, 1.0, size=universe)
        weights *= rng.uniform(0.5, 1.0) * max_value / weights.sum()
        cover = [[int(rng.integers(1, 1 << universe)) for _ in range(n_states)] for _ in range(n)]
        penalty = None
        if not monotone:
            penalty = rng.uniform(0.0, max_penalty, size=n)
            base = CoverageUtility(weights, cover)
            scale = 1.0
            for size in range(1, n + 1):
                for Y in combinations(range(n), size):
                    cost = penalty[list(Y)].sum()
                    if cost <= 0:
                        continue
                    for phi in prior.realizations:
                        scale = min(scale, base(Y, phi) / cost)
            penalty = penalty * scale
        utility = CoverageUtility(weights, cover, penalty)
        tasks.append(Task(utility, n, adaptive_monotone=monotone, adaptive_submodular=True, name=f"task{i}"))
    return tasks, prior


__all__ = [
    "CoverageUtility",
    "OptimalValue",
    "PropertyReport",
    "check_adaptive_monotonicity",
    "check_adaptive_submodularity",
    "check_guard",
    "coverage_instance",
    "enumerate_partial_realizations",
    "optimal_continuation",
    "optimal_two_phase",
    "product_prior",
    "two_task_instance",
    "training_average_objective",
]
