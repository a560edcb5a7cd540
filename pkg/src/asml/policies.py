"""Two-phase policies and the baselines they are compared against.

Training routines return ordered initial sets; policy classes turn an
initial set into an executable :class:`~asml.core.Policy`. Every ranking
breaks ties by lowest item id, with dummy items ranked after real items of
equal marginal value.
"""
from __future__ import annotations

import json
import math
from typing import Sequence

import numpy as np

from .core import (
    MixturePolicy,
    Policy,
    Task,
    TwoPhasePolicy,
    as_rng,
    next_dummy,
)
from .estimation import make_estimator
from .exceptions import EmptyTaskSet, InfeasibleBudget, WrongRegime

RANK_DECIMALS = 12


def _rank(gains, candidates: Sequence[int], n: int) -> list[int]:
    order = sorted(
        range(len(candidates)),
        key=lambda j: (-round(float(gains[j]), RANK_DECIMALS), candidates[j] >= n, candidates[j]),
    )
    return [candidates[j] for j in order]


def _argmax(gains, candidates, n) -> int:
    return _rank(gains, candidates, n)[0]


def _top(gains, candidates, size, n) -> list[int]:
    return _rank(gains, candidates, n)[:size]


def _tasks(tasks) -> list[Task]:
    tasks = list(tasks)
    if not tasks:
        raise EmptyTaskSet("training needs at least one task")
    sizes = {t.n_items for t in tasks}
    if len(sizes) != 1:
        raise ValueError(f"tasks disagree on the ground set size: {sorted(sizes)}")
    return tasks


def _avg_set_gains(tasks, est, S, candidates) -> np.ndarray:
    return np.mean([est.set_gains(t, S, candidates) for t in tasks], axis=0)


# ---------------------------------------------------------------------------
# training


def greedy_sequence(tasks, estimator, length: int) -> tuple[int, ...]:
    """Classic greedy on the task-averaged expected set value.

    The sequence for a smaller ``length`` is always a prefix of a longer one.
    """
    tasks = _tasks(tasks)
    est = make_estimator(estimator)
    n = tasks[0].n_items
    if length > n:
        raise InfeasibleBudget(f"cannot pick {length} items from {n}")
    S: list[int] = []
    for _ in range(length):
        candidates = [e for e in range(n) if e not in S]
        S.append(_argmax(_avg_set_gains(tasks, est, S, candidates), candidates, n))
    return tuple(S)


def tgp_train(tasks, estimator, l: int) -> tuple[int, ...]:
    return greedy_sequence(tasks, estimator, l)


def _pool(gains, real: Sequence[int], size: int, n: int) -> tuple[list[int], int]:
    """Top-``size`` set over ``real`` plus an unlimited supply of zero-gain dummies.

    Returns the real members and the number of dummy slots. Dummies are
    interchangeable, so only their count matters.
    """
    candidates = list(real) + list(range(n, n + size))
    U = _top(np.concatenate([np.asarray(gains, dtype=float), np.zeros(size)]), candidates, size, n)
    members = [e for e in U if e < n]
    return members, len(U) - len(members)


def _random_greedy_pool(tasks, est, S, pool: int, n: int) -> tuple[list[int], int]:
    real = [e for e in range(n) if e not in S]
    gains = _avg_set_gains(tasks, est, S, real) if real else []
    return _pool(gains, real, pool, n)


def _with_dummy(members: list[int], n_dummy: int, n: int, history) -> list[tuple[int, float]]:
    size = len(members) + n_dummy
    dist = [(e, 1.0 / size) for e in members]
    if n_dummy:
        dist.append((next_dummy(n, history), n_dummy / size))
    return dist


def trgp_train(tasks, estimator, l: int, seed=0, pool: int | None = None) -> tuple[int, ...]:
    """Random greedy: each round picks uniformly from the top-``pool`` items (default ``l``).

    Dummy items are candidates, so items with negative average marginal
    value are never picked. A picked dummy gets the lowest unused dummy id.
    """
    tasks = _tasks(tasks)
    est = make_estimator(estimator)
    n = tasks[0].n_items
    pool = l if pool is None else pool
    rng = as_rng(seed)
    S: list[int] = []
    for _ in range(l):
        members, n_dummy = _random_greedy_pool(tasks, est, S, pool, n)
        j = int(rng.integers(len(members) + n_dummy))
        S.append(members[j] if j < len(members) else next_dummy(n, [(e, 0) for e in S]))
    return tuple(S)


def trgp_train_distribution(tasks, estimator, l: int, pool: int | None = None) -> list[tuple[tuple[int, ...], float]]:
    """Every initial set ``trgp_train`` can return, with its probability."""
    tasks = _tasks(tasks)
    est = make_estimator(estimator)
    n = tasks[0].n_items
    pool = l if pool is None else pool
    out: dict[tuple[int, ...], float] = {}

    def expand(S: list[int], prob: float):
        if len(S) == l:
            key = tuple(sorted(S))
            out[key] = out.get(key, 0.0) + prob
            return
        members, n_dummy = _random_greedy_pool(tasks, est, S, pool, n)
        for e, q in _with_dummy(members, n_dummy, n, [(e, 0) for e in S]):
            expand(S + [e], prob * q)

    expand([], 1.0)
    return sorted(out.items())


# ---------------------------------------------------------------------------
# policy classes


class GreedyPolicy(TwoPhasePolicy):
    """After the initial set, picks the real item with the largest Delta(e | psi)."""

    def __init__(self, initial_set, k, estimator):
        super().__init__(initial_set, k)
        self.estimator = make_estimator(estimator)

    def adaptive_rule(self, task, psi, history):
        candidates = [e for e in range(task.n_items) if e not in psi]
        if not candidates:
            return [(next_dummy(task.n_items, history), 1.0)]
        gains = self.estimator.item_gains(task, psi, candidates)
        return [(_argmax(gains, candidates, task.n_items), 1.0)]


class RandomizedGreedyPolicy(TwoPhasePolicy):
    """After the initial set, picks uniformly from the top-``pool_size`` items of E + D.

    The pool is ranked against as many dummies as it has slots, so a real
    item with negative marginal value never enters it.

    Runs ``rounds`` adaptive rounds (default ``k - l``) and pads the rest of
    the budget with dummies.
    """

    def __init__(self, initial_set, k, estimator, pool_size: int | None = None, rounds: int | None = None):
        super().__init__(initial_set, k)
        self.estimator = make_estimator(estimator)
        self.pool_size = self.k - self.l if pool_size is None else int(pool_size)
        self.rounds = self.k - self.l if rounds is None else int(rounds)
        if self.pool_size < 1 and self.rounds > 0:
            raise ValueError("pool size must be positive")

    def adaptive_rule(self, task, psi, history):
        n = task.n_items
        if len(history) >= self.l + self.rounds:
            return [(next_dummy(n, history), 1.0)]
        real = [e for e in range(n) if e not in psi]
        gains = self.estimator.item_gains(task, psi, real) if real else []
        members, n_dummy = _pool(gains, real, self.pool_size, n)
        return _with_dummy(members, n_dummy, n, history)


class NonAdaptiveCompletionPolicy(TwoPhasePolicy):
    """Completes the initial set by greedy on f^i(S); observed states are ignored."""

    def __init__(self, initial_set, k, estimator):
        super().__init__(initial_set, k)
        self.estimator = make_estimator(estimator)

    def adaptive_rule(self, task, psi, history):
        S = [e for e, _ in history]
        candidates = [e for e in range(task.n_items) if e not in psi]
        if not candidates:
            return [(next_dummy(task.n_items, history), 1.0)]
        gains = self.estimator.set_gains(task, S, candidates)
        return [(_argmax(gains, candidates, task.n_items), 1.0)]


class FixedSetPolicy(TwoPhasePolicy):
    """Selects a fixed set and pads the remaining budget with dummies."""


class BestSingletonPolicy(Policy):
    """Selects argmax_e f^i({e}) over real items and one dummy, then pads."""

    def __init__(self, k, estimator):
        self.k = int(k)
        self.estimator = make_estimator(estimator)

    def decide(self, task, history):
        n = task.n_items
        if history:
            return [(next_dummy(n, history), 1.0)]
        candidates = list(range(n)) + [n]
        gains = self.estimator.set_gains(task, (), candidates)
        return [(_argmax(gains, candidates, n), 1.0)]

    def __repr__(self):
        return f"BestSingletonPolicy(k={self.k})"


class UniformRandomPolicy(TwoPhasePolicy):
    """Uniform choice among the real items not yet selected."""

    def __init__(self, k):
        super().__init__((), k)

    def adaptive_rule(self, task, psi, history):
        candidates = [e for e in range(task.n_items) if e not in psi]
        if not candidates:
            return [(next_dummy(task.n_items, history), 1.0)]
        return [(e, 1.0 / len(candidates)) for e in candidates]


# ---------------------------------------------------------------------------
# constructors


def tgp_policy(S_g, k: int, estimator) -> GreedyPolicy:
    return GreedyPolicy(S_g, k, estimator)


def trgp_policy(S_r, k: int, estimator) -> RandomizedGreedyPolicy:
    if len(S_r) >= k:
        raise WrongRegime(f"randomized greedy needs l < k (l={len(S_r)}, k={k})")
    return RandomizedGreedyPolicy(S_r, k, estimator)


def trgp_mixture(tasks, estimator, l: int, k: int) -> MixturePolicy:
    """The randomized two-phase greedy with its training randomness made explicit."""
    est = make_estimator(estimator)
    return MixturePolicy([(p, trgp_policy(S, k, est)) for S, p in trgp_train_distribution(tasks, est, l)])


def default_pi_a_weights() -> tuple[float, float]:
    """Branch weights (fixed-set branch, best-singleton branch)."""
    return math.e / (1 + math.e), 1 / (1 + math.e)


def pi_a(tasks, estimator, k: int, seed=None, weights: tuple[float, float] | None = None, l: int | None = None) -> MixturePolicy:
    """Mixture for the ``l = k - 1`` regime.

    One branch selects a random-greedy set of size ``k - 1`` fixed at
    training time; the other selects the best singleton of the incoming task.
    With ``seed=None`` every outcome of the random greedy is enumerated.
    """
    if l is not None and l != k - 1:
        raise WrongRegime(f"pi_a needs l = k - 1 (got l={l}, k={k})")
    if k < 2:
        raise WrongRegime("pi_a needs k >= 2")
    est = make_estimator(estimator)
    w_fixed, w_single = default_pi_a_weights() if weights is None else weights
    if seed is None:
        sets = trgp_train_distribution(tasks, est, k - 1)
        fixed: Policy = MixturePolicy([(p, FixedSetPolicy(S, k)) for S, p in sets])
    else:
        fixed = FixedSetPolicy(trgp_train(tasks, est, k - 1, seed), k)
    return MixturePolicy([(w_fixed, fixed), (w_single, BestSingletonPolicy(k, est))])


def pi_b(k: int, estimator, l: int = 1) -> MixturePolicy:
    """Uniform mixture for the ``l = 1`` regime; nothing is selected at training time.

    One branch runs ``k - 1`` adaptive random-greedy rounds with pools of
    size ``k - 1``; the other selects the best singleton.
    """
    if l != 1:
        raise WrongRegime(f"pi_b needs l = 1 (got {l})")
    if k < 2:
        raise WrongRegime("pi_b needs k >= 2")
    est = make_estimator(estimator)
    adaptive = RandomizedGreedyPolicy((), k, est, pool_size=k - 1, rounds=k - 1)
    return MixturePolicy([(0.5, adaptive), (0.5, BestSingletonPolicy(k, est))])


def baseline_gt(tasks, estimator, k: int) -> FixedSetPolicy:
    """Greedy Train: all ``k`` items chosen at training time."""
    return FixedSetPolicy(greedy_sequence(tasks, estimator, k), k)


def baseline_rmg(tasks, estimator, l: int, k: int, seed=0) -> NonAdaptiveCompletionPolicy:
    """Randomized meta-greedy: random-greedy initial set, non-adaptive per-task completion."""
    if not 0 <= l <= k:
        raise InfeasibleBudget(f"need 0 <= l <= k (l={l}, k={k})")
    est = make_estimator(estimator)
    S = trgp_train(tasks, est, l, seed) if l else ()
    return NonAdaptiveCompletionPolicy(S, k, est)


def baseline_fully_adaptive(estimator, k: int, monotone: bool = True) -> TwoPhasePolicy:
    """Empty initial set; adaptive greedy (monotone) or top-``k`` random greedy."""
    if monotone:
        return GreedyPolicy((), k, estimator)
    return RandomizedGreedyPolicy((), k, estimator, pool_size=k)


def baseline_random(k: int) -> UniformRandomPolicy:
    return UniformRandomPolicy(k)


def initial_set_to_json(algorithm: str, initial_set, k: int, seed: int = 0) -> str:
    doc = {"algorithm": algorithm, "l": len(initial_set), "k": int(k), "seed": int(seed), "initial_set": [int(e) for e in initial_set]}
    return json.dumps(doc, sort_keys=True)


def initial_set_from_json(text: str) -> dict:
    doc = json.loads(text)
    for key in ("algorithm", "l", "k", "seed", "initial_set"):
        if key not in doc:
            raise ValueError(f"trained set document lacks {key!r}")
    if len(doc["initial_set"]) != doc["l"] or doc["l"] > doc["k"]:
        raise ValueError("initial set size disagrees with l or exceeds k")
    doc["initial_set"] = tuple(int(e) for e in doc["initial_set"])
    return doc


__all__ = [
    "BestSingletonPolicy",
    "FixedSetPolicy",
    "GreedyPolicy",
    "NonAdaptiveCompletionPolicy",
    "RandomizedGreedyPolicy",
    "UniformRandomPolicy",
    "baseline_fully_adaptive",
    "baseline_gt",
    "baseline_random",
    "baseline_rmg",
    "default_pi_a_weights",
    "greedy_sequence",
    "initial_set_from_json",
    "initial_set_to_json",
    "pi_a",
    "pi_b",
    "tgp_policy",
    "tgp_train",
    "trgp_mixture",
    "trgp_policy",
    "trgp_train",
    "trgp_train_distribution",
]
