"""Scikit-learn style wrappers: ``fit`` on training tasks, ``predict`` a selection for one task."""
from __future__ import annotations

from sklearn.base import BaseEstimator

from . import policies as P
from .core import f_avg, run_policy
from .estimation import make_estimator
from .exceptions import WrongRegime
from .validation import check_budget, check_is_fitted, check_tasks


class _PolicyEstimator(BaseEstimator):
    algorithm = ""

    def _oracle(self, prior):
        return make_estimator(prior if self.oracle is None else self.oracle)

    def fit(self, tasks, prior=None):
        tasks = check_tasks(tasks)
        self.n_items_ = tasks[0].n_items
        self.policy_ = self._build(tasks, self._oracle(prior))
        self.initial_set_ = tuple(getattr(self.policy_, "initial_set", ()))
        return self

    def predict(self, task, realization, seed=0) -> tuple[int, ...]:
        """Items selected on ``task`` when its realization is ``realization``."""
        check_is_fitted(self, "policy_")
        return run_policy(self.policy_, task, realization, seed).items

    def score(self, tasks, prior=None, n_samples=1000, seed=0) -> float:
        """Average expected utility; exact on explicit priors."""
        check_is_fitted(self, "policy_")
        return f_avg(self.policy_, check_tasks(tasks), prior, n_samples=n_samples, seed=seed)

    def to_json(self) -> str:
        check_is_fitted(self, "policy_")
        return P.initial_set_to_json(self.algorithm, self.initial_set_, self.k, getattr(self, "seed", 0) or 0)


class TwoPhaseGreedy(_PolicyEstimator):
    algorithm = "TGP"

    def __init__(self, l=1, k=2, oracle=None):
        self.l = l
        self.k = k
        self.oracle = oracle

    def _build(self, tasks, est):
        check_budget(self.l, self.k, self.n_items_)
        return P.tgp_policy(P.tgp_train(tasks, est, self.l), self.k, est)


class TwoPhaseRandomizedGreedy(_PolicyEstimator):
    """With ``seed=None`` the training randomness is kept as an exact mixture."""

    algorithm = "TRGP"

    def __init__(self, l=1, k=2, oracle=None, seed=0):
        self.l = l
        self.k = k
        self.oracle = oracle
        self.seed = seed

    def _build(self, tasks, est):
        check_budget(self.l, self.k)
        if self.l >= self.k:
            raise WrongRegime(f"randomized two-phase greedy needs l < k (got l={self.l}, k={self.k})")
        if self.seed is None:
            return P.trgp_mixture(tasks, est, self.l, self.k)
        return P.trgp_policy(P.trgp_train(tasks, est, self.l, self.seed), self.k, est)


class GreedyTrain(_PolicyEstimator):
    algorithm = "GT"

    def __init__(self, k=2, oracle=None):
        self.k = k
        self.oracle = oracle

    def _build(self, tasks, est):
        check_budget(self.k, self.k, self.n_items_)
        return P.baseline_gt(tasks, est, self.k)


class RandomizedMetaGreedy(_PolicyEstimator):
    algorithm = "RMG"

    def __init__(self, l=1, k=2, oracle=None, seed=0):
        self.l = l
        self.k = k
        self.oracle = oracle
        self.seed = seed

    def _build(self, tasks, est):
        check_budget(self.l, self.k)
        return P.baseline_rmg(tasks, est, self.l, self.k, self.seed)


class FullyAdaptiveGreedy(_PolicyEstimator):
    algorithm = "FULLY_ADAPTIVE"

    def __init__(self, k=2, monotone=True, oracle=None):
        self.k = k
        self.monotone = monotone
        self.oracle = oracle

    def _build(self, tasks, est):
        return P.baseline_fully_adaptive(est, self.k, self.monotone)


class PiA(_PolicyEstimator):
    algorithm = "PI_A"

    def __init__(self, k=2, oracle=None, seed=None, weights=None):
        self.k = k
        self.oracle = oracle
        self.seed = seed
        self.weights = weights

    def _build(self, tasks, est):
        return P.pi_a(tasks, est, self.k, seed=self.seed, weights=self.weights)


class PiB(_PolicyEstimator):
    algorithm = "PI_B"

    def __init__(self, k=2, oracle=None):
        self.k = k
        self.oracle = oracle

    def _build(self, tasks, est):
        return P.pi_b(self.k, est)


class UniformRandom(_PolicyEstimator):
    algorithm = "RANDOM"

    def __init__(self, k=2, oracle=None):
        self.k = k
        self.oracle = oracle

    def _build(self, tasks, est):
        return P.baseline_random(self.k)


__all__ = [
    "FullyAdaptiveGreedy",
    "GreedyTrain",
    "PiA",
    "PiB",
    "RandomizedMetaGreedy",
    "TwoPhaseGreedy",
    "TwoPhaseRandomizedGreedy",
    "UniformRandom",
]
