"""Conditional expected marginal utilities of items, sets and policies.

Two families of oracles live here:

* free functions (``marginal_item_exact`` and friends) answering one query;
* estimator objects (``ExactEstimator``, ``MonteCarloEstimator``) that the
  policies call once per round for a whole candidate list. The Monte Carlo
  estimator scores every candidate of a round on the same draws (common
  random numbers), so the argmax is not dominated by sampling noise between
  candidates.
"""
from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

import numpy as np

from .core import (
    ExplicitPrior,
    PartialRealization,
    Policy,
    Task,
    as_rng,
    expected_utility_exact,
    expected_utility_mc,
    resolve_prior,
)
from .exceptions import EmptyTaskSet, NotEnumerable

DEFAULT_SAMPLES = 1000
EXACT_SUPPORT_LIMIT = 4096


@dataclass(frozen=True)
class MarginalEstimate:
    mean: float
    stderr: float = 0.0
    samples_used: int = 0

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("stderr must be non-negative")

    def __float__(self):
        return float(self.mean)


def _as_psi(psi) -> PartialRealization:
    if isinstance(psi, PartialRealization):
        return psi
    if psi is None:
        return PartialRealization()
    if isinstance(psi, Mapping):
        return PartialRealization(psi.items())
    return PartialRealization(psi)


def _explicit(task: Task, prior) -> ExplicitPrior:
    prior = resolve_prior(task, prior)
    if not isinstance(prior, ExplicitPrior):
        raise NotEnumerable("exact marginals need an explicit prior")
    return prior


def _sample_stats(values: np.ndarray) -> MarginalEstimate:
    n = len(values)
    stderr = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return MarginalEstimate(float(values.mean()), stderr, n)


def marginal_item_exact(task: Task, prior, psi, e: int) -> MarginalEstimate:
    """E[f(dom(psi) + e, Phi) - f(dom(psi), Phi) | Phi ~ psi] by enumeration."""
    prior = _explicit(task, prior)
    psi = _as_psi(psi)
    w = prior.weights(psi)
    if e >= task.n_items or e in psi:
        return MarginalEstimate(0.0)
    dom = psi.dom
    gain = prior.value_vector(task, dom | {e}) - prior.value_vector(task, dom)
    return MarginalEstimate(float(w @ gain))


def marginal_item_mc(task: Task, prior, psi, e: int, n_samples: int = DEFAULT_SAMPLES, seed=0) -> MarginalEstimate:
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    prior = resolve_prior(task, prior)
    psi = _as_psi(psi)
    rng = as_rng(seed)
    if e >= task.n_items or e in psi:
        return MarginalEstimate(0.0, 0.0, n_samples)
    dom = psi.dom
    with_e = dom | {e}
    if isinstance(prior, ExplicitPrior):
        idx = prior.sample_many(n_samples, psi, rng)
        gain = prior.value_vector(task, with_e) - prior.value_vector(task, dom)
        return _sample_stats(gain[idx])
    values = np.empty(n_samples)
    for j in range(n_samples):
        phi = prior.sample_conditional(psi, rng)
        values[j] = task(with_e, phi) - task(dom, phi)
    return _sample_stats(values)


def marginal_set_avg(tasks: Sequence[Task], prior, S: Iterable[int], e: int, estimator=None) -> float:
    """Task-averaged gain (1/m) sum_i f^i(S + e) - f^i(S) of the expected set values."""
    tasks = list(tasks)
    if not tasks:
        raise EmptyTaskSet("marginal_set_avg needs at least one task")
    est = estimator if estimator is not None else make_estimator(prior)
    S = frozenset(S)
    return float(np.mean([est.set_gains(t, S, [e])[0] for t in tasks]))


def _shifted(task: Task, Y: frozenset) -> Task:
    base = task.utility
    n = task.n_items

    def utility(items, phi):
        return base(frozenset(items) | Y, phi) - base(Y, phi)

    return Task(utility, n, name=f"{task.name}|{sorted(Y)}", prior=task.prior, data=task.data)


def marginal_policy(task: Task, prior, Y: Iterable[int], policy: Policy, n_samples: int | None = None, seed=0) -> MarginalEstimate:
    """E[f(Y + E(policy, Phi), Phi) - f(Y, Phi)]; the policy does not observe Y."""
    Y = frozenset(e for e in Y if e < task.n_items)
    shifted = _shifted(task, Y)
    p = resolve_prior(task, prior)
    if policy.k == 0:
        return MarginalEstimate(0.0)
    if isinstance(p, ExplicitPrior) and n_samples is None:
        return MarginalEstimate(expected_utility_exact(policy, shifted, p))
    mean, se = expected_utility_mc(policy, shifted, p, n_samples or DEFAULT_SAMPLES, seed)
    return MarginalEstimate(mean, se, n_samples or DEFAULT_SAMPLES)


# ---------------------------------------------------------------------------
# estimator objects


class MarginalOracle(Protocol):
    def set_value(self, task: Task, items: Iterable[int]) -> float: ...

    def set_gains(self, task: Task, items: Iterable[int], candidates: Sequence[int]) -> np.ndarray: ...

    def item_gains(self, task: Task, psi: PartialRealization, candidates: Sequence[int]) -> np.ndarray: ...


class ExactEstimator:
    """Marginals by enumerating an explicit prior."""

    exact = True

    def __init__(self, prior=None):
        self.prior = prior

    def set_value(self, task, items):
        task.access["estimator"] += 1
        return _explicit(task, self.prior).expected_value(task, items)

    def set_gains(self, task, items, candidates):
        task.access["estimator"] += 1
        prior = _explicit(task, self.prior)
        S = frozenset(e for e in items if e < task.n_items)
        base = prior.expected_value(task, S)
        out = np.zeros(len(candidates))
        for j, e in enumerate(candidates):
            if e < task.n_items and e not in S:
                out[j] = prior.expected_value(task, S | {e}) - base
        return out

    def item_gains(self, task, psi, candidates):
        task.access["estimator"] += 1
        prior = _explicit(task, self.prior)
        psi = _as_psi(psi)
        w = prior.weights(psi)
        dom = psi.dom
        base = prior.value_vector(task, dom)
        out = np.zeros(len(candidates))
        for j, e in enumerate(candidates):
            if e < task.n_items and e not in dom:
                out[j] = w @ (prior.value_vector(task, dom | {e}) - base)
        return out


class MonteCarloEstimator:
    """Sampled marginals with common random numbers across the candidates of a round.

    The draws for a round depend only on ``(seed, |psi|)``, so replays are
    deterministic; nothing is cached between calls.
    """

    exact = False

    def __init__(self, prior=None, n_samples: int = DEFAULT_SAMPLES, seed: int = 0):
        if n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        self.prior = prior
        self.n_samples = int(n_samples)
        self.seed = int(seed)

    def _draws(self, task, psi, stream):
        prior = resolve_prior(task, self.prior)
        rng = as_rng([self.seed, stream])
        if isinstance(prior, ExplicitPrior):
            return prior, prior.sample_many(self.n_samples, psi, rng)
        return prior, [prior.sample_conditional(psi, rng) for _ in range(self.n_samples)]

    def _values(self, task, prior, draws, items) -> np.ndarray:
        if isinstance(prior, ExplicitPrior):
            return prior.value_vector(task, items)[draws]
        return np.array([task(items, phi) for phi in draws])

    def set_value(self, task, items):
        task.access["estimator"] += 1
        prior, draws = self._draws(task, PartialRealization(), 0)
        return float(self._values(task, prior, draws, frozenset(items)).mean())

    def set_gains(self, task, items, candidates):
        task.access["estimator"] += 1
        prior, draws = self._draws(task, PartialRealization(), 0)
        S = frozenset(e for e in items if e < task.n_items)
        base = self._values(task, prior, draws, S)
        out = np.zeros(len(candidates))
        for j, e in enumerate(candidates):
            if e < task.n_items and e not in S:
                out[j] = (self._values(task, prior, draws, S | {e}) - base).mean()
        return out

    def item_gains(self, task, psi, candidates):
        task.access["estimator"] += 1
        psi = _as_psi(psi)
        prior, draws = self._draws(task, psi, 1 + len(psi))
        dom = psi.dom
        base = self._values(task, prior, draws, dom)
        out = np.zeros(len(candidates))
        for j, e in enumerate(candidates):
            if e < task.n_items and e not in dom:
                out[j] = (self._values(task, prior, draws, dom | {e}) - base).mean()
        return out


def make_estimator(prior=None, n_samples: int = DEFAULT_SAMPLES, seed: int = 0, max_support: int = EXACT_SUPPORT_LIMIT):
    """Exact estimator for small explicit priors, Monte Carlo otherwise.

    Passing an estimator object returns it unchanged.
    """
    if hasattr(prior, "item_gains"):
        return prior
    if isinstance(prior, ExplicitPrior) and prior.support_size <= max_support:
        return ExactEstimator(prior)
    if prior is None:
        return ExactEstimator(None)
    return MonteCarloEstimator(prior, n_samples, seed)
