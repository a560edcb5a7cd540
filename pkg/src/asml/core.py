"""Ground-set model, priors, policy execution and exact policy evaluation.

Items are integers. Ids ``0..n-1`` are the real items of a task; ids ``>= n``
are dummy items whose state is always :data:`DUMMY_STATE` and which never
change a utility value.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from collections.abc import Mapping
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .exceptions import (
    BudgetExceeded,
    EmptyTaskSet,
    NotEnumerable,
    ZeroMassCondition,
)

DUMMY_STATE = 0
PROB_TOL = 1e-12


def as_rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# realizations


class PartialRealization(Mapping):
    """Observed item -> state pairs, kept in observation order.

    Re-observing an item in the same state is a no-op; a conflicting state
    raises ``ValueError``.
    """

    __slots__ = ("_pairs", "_map")

    def __init__(self, pairs: Iterable[tuple[int, Any]] = ()):
        mapping: dict[int, Any] = {}
        ordered = []
        for item, state in pairs:
            item = int(item)
            if item in mapping:
                if mapping[item] != state:
                    raise ValueError(f"item {item} observed in two different states")
                continue
            mapping[item] = state
            ordered.append((item, state))
        self._pairs = tuple(ordered)
        self._map = mapping

    def __getitem__(self, item):
        return self._map[item]

    def __iter__(self):
        return iter(self._map)

    def __len__(self):
        return len(self._map)

    def __hash__(self):
        return hash(frozenset(self._map.items()))

    def __repr__(self):
        body = ", ".join(f"{e}->{s!r}" for e, s in self._pairs)
        return f"PartialRealization({{{body}}})"

    @property
    def pairs(self) -> tuple[tuple[int, Any], ...]:
        return self._pairs

    @property
    def dom(self) -> frozenset[int]:
        return frozenset(self._map)

    def extend(self, item: int, state) -> "PartialRealization":
        return PartialRealization(self._pairs + ((item, state),))

    def key(self) -> tuple:
        """Order-independent canonical encoding."""
        return tuple(sorted(self._pairs, key=lambda p: p[0]))


@dataclass(frozen=True)
class Realization:
    """A state for every real item."""

    states: tuple

    def state(self, item: int):
        if item < len(self.states):
            return self.states[item]
        return DUMMY_STATE

    @property
    def n_items(self) -> int:
        return len(self.states)


def is_subrealization(psi: Mapping, other: Mapping) -> bool:
    return all(item in other and other[item] == state for item, state in psi.items())


def is_consistent(psi: Mapping, phi) -> bool:
    return all(phi.state(item) == state for item, state in psi.items())


# ---------------------------------------------------------------------------
# priors


class ExplicitPrior:
    """Finite list of realizations with probabilities.

    Item states are interned to integer codes per item so that conditioning on
    a partial realization is a vectorised comparison.
    """

    def __init__(self, realizations: Sequence, probs: Sequence[float], n_items: int | None = None):
        realizations = list(realizations)
        probs = np.asarray(probs, dtype=float)
        if not realizations or len(realizations) != len(probs):
            raise ValueError("need one probability per realization")
        if np.any(probs < 0):
            raise ValueError("probabilities must be non-negative")
        total = probs.sum()
        if abs(total - 1.0) > PROB_TOL * max(1, len(probs)):
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        self._realizations = realizations
        self._probs = probs / total
        n = realizations[0].n_items if n_items is None else int(n_items)
        self.n_items = n
        self._codebooks: list[dict] = [{} for _ in range(n)]
        table = np.empty((len(realizations), n), dtype=np.int64)
        for r, phi in enumerate(realizations):
            for e in range(n):
                book = self._codebooks[e]
                table[r, e] = book.setdefault(phi.state(e), len(book))
        self._table = table
        self._states = [list(book) for book in self._codebooks]
        self._weight_cache: dict = {}
        self._value_cache: dict = {}

    @property
    def realizations(self) -> list:
        return list(self._realizations)

    @property
    def probs(self) -> np.ndarray:
        return self._probs.copy()

    @property
    def support_size(self) -> int:
        return int(np.count_nonzero(self._probs))

    @property
    def n_states(self) -> int:
        return max((len(b) for b in self._codebooks), default=1)

    def items(self):
        return zip(self._realizations, self._probs)

    def _mask(self, psi: Mapping) -> np.ndarray:
        mask = np.ones(len(self._realizations), dtype=bool)
        for item, state in psi.items():
            if item >= self.n_items:
                if state != DUMMY_STATE:
                    mask[:] = False
                continue
            code = self._codebooks[item].get(state)
            if code is None:
                mask[:] = False
                break
            mask &= self._table[:, item] == code
        return mask

    def mass(self, psi: Mapping) -> float:
        return float(self._probs[self._mask(psi)].sum())

    def weights(self, psi: Mapping | None = None) -> np.ndarray:
        """Conditional probability of every listed realization given ``psi``."""
        psi = psi if isinstance(psi, PartialRealization) else PartialRealization((psi or {}).items())
        key = psi.key()
        w = self._weight_cache.get(key)
        if w is None:
            w = np.where(self._mask(psi), self._probs, 0.0)
            total = w.sum()
            if total <= 0:
                raise ZeroMassCondition(f"no realization with positive mass is consistent with {psi!r}")
            w = w / total
            self._weight_cache[key] = w
        return w

    def conditional(self, psi: Mapping) -> "ExplicitPrior":
        if not psi:
            return self
        w = self.weights(psi)
        keep = np.nonzero(w > 0)[0]
        return ExplicitPrior([self._realizations[i] for i in keep], w[keep], n_items=self.n_items)

    def state_distribution(self, item: int, psi: Mapping | None = None) -> list[tuple[Any, float]]:
        """Distribution of the state of ``item`` given ``psi``."""
        if item >= self.n_items:
            return [(DUMMY_STATE, 1.0)]
        if psi and item in psi:
            return [(psi[item], 1.0)]
        w = self.weights(psi)
        mass = np.bincount(self._table[:, item], weights=w, minlength=len(self._states[item]))
        return [(self._states[item][c], float(m)) for c, m in enumerate(mass) if m > 0]

    def value_vector(self, task: "Task", items: Iterable[int]) -> np.ndarray:
        real = frozenset(e for e in items if e < task.n_items)
        key = (task, real)
        vec = self._value_cache.get(key)
        if vec is None:
            vec = np.array([task(real, phi) for phi in self._realizations], dtype=float)
            self._value_cache[key] = vec
        return vec

    def expected_value(self, task: "Task", items: Iterable[int], psi: Mapping | None = None) -> float:
        """E[f(items, Phi) | Phi ~ psi]."""
        return float(self.weights(psi) @ self.value_vector(task, items))

    def sample(self, rng=None):
        rng = as_rng(rng)
        return self._realizations[rng.choice(len(self._probs), p=self._probs)]

    def sample_conditional(self, psi: Mapping, rng=None):
        rng = as_rng(rng)
        w = self.weights(psi)
        return self._realizations[rng.choice(len(w), p=w)]

    def sample_many(self, n: int, psi: Mapping | None = None, rng=None) -> np.ndarray:
        """Indices of ``n`` realizations drawn from the conditional distribution."""
        rng = as_rng(rng)
        w = self.weights(psi)
        return rng.choice(len(w), size=n, p=w)

    def __eq__(self, other):
        if not isinstance(other, ExplicitPrior):
            return NotImplemented
        mine = Counter()
        for phi, p in self.items():
            if p > 0:
                mine[phi] += p
        theirs = Counter()
        for phi, p in other.items():
            if p > 0:
                theirs[phi] += p
        if set(mine) != set(theirs):
            return False
        return all(abs(mine[k] - theirs[k]) <= 1e-12 for k in mine)

    __hash__ = object.__hash__


class GenerativePrior:
    """A prior that can only be sampled.

    ``conditional_sampler(psi, rng)`` must return a realization consistent
    with ``psi``; without one, conditioning falls back to rejection sampling.
    """

    def __init__(
        self,
        sampler: Callable[[np.random.Generator], Any],
        conditional_sampler: Callable[[Mapping, np.random.Generator], Any] | None = None,
        n_items: int | None = None,
        max_rejections: int = 100_000,
    ):
        self._sampler = sampler
        self._conditional_sampler = conditional_sampler
        self.n_items = n_items
        self.max_rejections = max_rejections

    def sample(self, rng=None):
        return self._sampler(as_rng(rng))

    def sample_conditional(self, psi: Mapping, rng=None):
        rng = as_rng(rng)
        if not psi:
            return self._sampler(rng)
        if self._conditional_sampler is not None:
            return self._conditional_sampler(psi, rng)
        for _ in range(self.max_rejections):
            phi = self._sampler(rng)
            if is_consistent(psi, phi):
                return phi
        raise ZeroMassCondition(f"no consistent draw for {psi!r} after {self.max_rejections} tries")

    def conditional(self, psi: Mapping) -> "GenerativePrior":
        if not psi:
            return self
        frozen = PartialRealization(psi.items())

        def sampler(rng):
            return self.sample_conditional(frozen, rng)

        def nested(more, rng):
            return self.sample_conditional(PartialRealization(frozen.pairs + tuple(more.items())), rng)

        return GenerativePrior(sampler, nested, self.n_items, self.max_rejections)


def conditional_prior(prior, psi: Mapping):
    return prior.conditional(psi)


# ---------------------------------------------------------------------------
# tasks and traces


@dataclass(frozen=True, eq=False)
class Task:
    """Utility oracle ``f(items, realization) -> float >= 0`` for one task.

    Dummy ids are stripped before the oracle is called. ``prior`` optionally
    overrides the shared prior for this task; ``access`` counts oracle and
    estimator queries.
    """

    utility: Callable[[frozenset, Any], float]
    n_items: int
    adaptive_monotone: bool = False
    adaptive_submodular: bool = False
    name: str = ""
    prior: Any = None
    data: Any = None
    access: Counter = field(default_factory=Counter, repr=False)

    def __call__(self, items: Iterable[int], phi) -> float:
        self.access["utility"] += 1
        real = frozenset(e for e in items if e < self.n_items)
        return float(self.utility(real, phi))

    def scaled(self, factor: float) -> "Task":
        base = self.utility
        return Task(
            lambda items, phi: factor * base(items, phi),
            self.n_items,
            self.adaptive_monotone,
            self.adaptive_submodular,
            self.name,
            self.prior,
            self.data,
        )


def resolve_prior(task: Task, prior=None):
    if task.prior is not None:
        return task.prior
    if prior is None:
        raise ValueError(f"task {task.name!r} has no prior and none was given")
    return prior


@dataclass(frozen=True)
class Trace:
    steps: tuple[tuple[int, Any], ...]
    task: str
    seed: int

    @property
    def items(self) -> tuple[int, ...]:
        return tuple(e for e, _ in self.steps)

    def __len__(self):
        return len(self.steps)


# ---------------------------------------------------------------------------
# policies


def next_dummy(n_items: int, history: Sequence[tuple[int, Any]]) -> int:
    used = {e for e, _ in history}
    d = n_items
    while d in used:
        d += 1
    return d


class Policy:
    """Decision rule selecting ``k`` items one at a time.

    ``decide`` maps the observation history (a tuple of ``(item, state)``
    pairs) to a finite distribution ``[(item, prob), ...]`` over the next
    item. Randomness that is fixed for a whole execution lives in
    ``branches``.
    """

    k: int = 0

    def branches(self) -> list[tuple[float, "Policy"]]:
        return [(1.0, self)]

    def decide(self, task: Task, history: tuple) -> list[tuple[int, float]]:
        raise NotImplementedError


class TwoPhasePolicy(Policy):
    """Selects ``initial_set`` in order, then follows ``adaptive_rule``."""

    def __init__(self, initial_set: Sequence[int], k: int):
        self.initial_set = tuple(int(e) for e in initial_set)
        self.k = int(k)
        if len(self.initial_set) > self.k:
            raise ValueError(f"initial set of size {len(self.initial_set)} exceeds budget {self.k}")

    @property
    def l(self) -> int:
        return len(self.initial_set)

    def decide(self, task, history):
        t = len(history)
        if t < self.l:
            return [(self.initial_set[t], 1.0)]
        psi = PartialRealization(history)
        dist = self.adaptive_rule(task, psi, history)
        for item, q in dist:
            if q > 0 and item < task.n_items and item in psi:
                raise BudgetExceeded(f"{type(self).__name__} re-selected item {item}")
        return dist

    def adaptive_rule(self, task, psi: PartialRealization, history: tuple) -> list[tuple[int, float]]:
        return [(next_dummy(task.n_items, history), 1.0)]

    def __repr__(self):
        return f"{type(self).__name__}(initial_set={self.initial_set}, k={self.k})"


class EmptyPolicy(Policy):
    k = 0

    def decide(self, task, history):
        raise RuntimeError("empty policy selects nothing")


class MixturePolicy(Policy):
    """Follows branch ``b`` with probability ``w_b`` for the whole execution."""

    def __init__(self, branches: Sequence[tuple[float, Policy]]):
        branches = [(float(w), p) for w, p in branches]
        total = sum(w for w, _ in branches)
        if not branches or abs(total - 1.0) > PROB_TOL or any(w < 0 for w, _ in branches):
            raise ValueError(f"mixture weights must be non-negative and sum to 1 (got {total!r})")
        ks = {p.k for _, p in branches}
        if len(ks) != 1:
            raise ValueError(f"mixture branches disagree on the budget: {sorted(ks)}")
        self._branches = branches
        self.k = ks.pop()

    def branches(self):
        out = []
        for w, p in self._branches:
            for w2, q in p.branches():
                if w * w2 > 0:
                    out.append((w * w2, q))
        return out

    def decide(self, task, history):
        raise RuntimeError("pick a branch with branches() before executing a mixture")


class ConcatPolicy(Policy):
    """Runs ``first``, then ``second`` from an empty observation history."""

    def __init__(self, first: Policy, second: Policy):
        self.first = first
        self.second = second
        self.k = first.k + second.k

    def branches(self):
        out = []
        for w1, p1 in self.first.branches():
            for w2, p2 in self.second.branches():
                pol = self if (p1 is self.first and p2 is self.second) else ConcatPolicy(p1, p2)
                out.append((w1 * w2, pol))
        return out

    def decide(self, task, history):
        if len(history) < self.first.k:
            return self.first.decide(task, history)
        return self.second.decide(task, history[self.first.k:])


class TruncatedPolicy(Policy):
    """First ``t`` selections of ``policy``, then dummy padding up to its budget."""

    def __init__(self, policy: Policy, t: int):
        self.policy = policy
        self.t = int(t)
        self.k = policy.k

    def branches(self):
        out = []
        for w, p in self.policy.branches():
            out.append((w, self if p is self.policy else TruncatedPolicy(p, self.t)))
        return out

    def decide(self, task, history):
        if len(history) < self.t:
            return self.policy.decide(task, history)
        return [(next_dummy(task.n_items, history), 1.0)]


def concat(policy: Policy, other: Policy) -> Policy:
    return ConcatPolicy(policy, other)


def truncate(policy: Policy, t: int) -> Policy:
    if not 0 <= t <= policy.k:
        raise ValueError(f"truncation level {t} outside [0, {policy.k}]")
    return TruncatedPolicy(policy, t)


def _draw(dist: Sequence[tuple[Any, float]], rng: np.random.Generator):
    if len(dist) == 1:
        return dist[0][0]
    u = rng.random()
    acc = 0.0
    for value, q in dist:
        acc += q
        if u < acc:
            return value
    return dist[-1][0]


def run_policy(policy: Policy, task: Task, phi, seed: int = 0) -> Trace:
    """Execute ``policy`` on ``task`` under the realization ``phi``."""
    rng = as_rng(seed)
    branch = _draw([(p, w) for w, p in policy.branches()], rng)
    history: list[tuple[int, Any]] = []
    for _ in range(branch.k):
        item = int(_draw(branch.decide(task, tuple(history)), rng))
        state = DUMMY_STATE if item >= task.n_items else phi.state(item)
        history.append((item, state))
    return Trace(tuple(history), task.name, seed)


def trace_utility(task: Task, trace: Trace, phi) -> float:
    return task(trace.items, phi)


# ---------------------------------------------------------------------------
# exact evaluation


def _exact_branch(policy: Policy, task: Task, prior: ExplicitPrior) -> float:
    n = task.n_items
    memo: dict[tuple, float] = {}

    def value(history: tuple, psi: PartialRealization) -> float:
        if len(history) == policy.k:
            return prior.expected_value(task, [e for e, _ in history], psi)
        cached = memo.get(history)
        if cached is not None:
            return cached
        total = 0.0
        for item, q in policy.decide(task, history):
            if q <= 0:
                continue
            if item >= n or item in psi:
                state = DUMMY_STATE if item >= n else psi[item]
                total += q * value(history + ((item, state),), psi)
                continue
            for state, ps in prior.state_distribution(item, psi):
                total += q * ps * value(history + ((item, state),), psi.extend(item, state))
        memo[history] = total
        return total

    return value((), PartialRealization())


def expected_utility_exact(policy: Policy, task: Task, prior=None) -> float:
    """Expected utility over realizations and every random branch of ``policy``."""
    prior = resolve_prior(task, prior)
    if not isinstance(prior, ExplicitPrior):
        raise NotEnumerable("exact evaluation needs an explicit prior")
    return sum(w * _exact_branch(p, task, prior) for w, p in policy.branches())


def expected_utility_mc(policy: Policy, task: Task, prior=None, n_samples: int = 1000, seed=0) -> tuple[float, float]:
    """Monte Carlo estimate ``(mean, stderr)`` of the policy's expected utility."""
    prior = resolve_prior(task, prior)
    rng = as_rng(seed)
    values = np.empty(n_samples)
    for j in range(n_samples):
        phi = prior.sample(rng)
        trace = run_policy(policy, task, phi, int(rng.integers(2**63)))
        values[j] = task(trace.items, phi)
    stderr = values.std(ddof=1) / math.sqrt(n_samples) if n_samples > 1 else 0.0
    return float(values.mean()), float(stderr)


def f_avg(policy: Policy, tasks: Sequence[Task], prior=None, *, n_samples: int = 1000, seed=0, return_stderr=False):
    """Average expected utility of ``policy`` over ``tasks``.

    Exact whenever a task's prior is explicit, Monte Carlo otherwise.
    """
    tasks = list(tasks)
    if not tasks:
        raise EmptyTaskSet("f_avg needs at least one task")
    means, variances = [], []
    for i, task in enumerate(tasks):
        p = resolve_prior(task, prior)
        if isinstance(p, ExplicitPrior):
            means.append(expected_utility_exact(policy, task, p))
            variances.append(0.0)
        else:
            mean, se = expected_utility_mc(policy, task, p, n_samples, [int(seed), i])
            means.append(mean)
            variances.append(se * se)
    mean = float(np.mean(means))
    if return_stderr:
        return mean, float(math.sqrt(sum(variances)) / len(tasks))
    return mean


# ---------------------------------------------------------------------------
# JSON instance format


class TableUtility:
    """Utility read from a ``(item set, realization index) -> value`` table."""

    def __init__(self, table: dict[tuple[frozenset, int], float], index: dict[tuple, int]):
        self.table = table
        self.index = index

    def __call__(self, items, phi) -> float:
        return self.table.get((frozenset(items), self.index[tuple(phi.states)]), 0.0)


def _set_key(items: Iterable[int]) -> str:
    return ",".join(str(e) for e in sorted(items))


def load_instance(source) -> tuple[list[Task], ExplicitPrior]:
    """Read tasks and an explicit prior from a JSON document, path or dict."""
    if isinstance(source, Mapping):
        doc = source
    else:
        text = str(source)
        doc = json.loads(text) if text.lstrip().startswith("{") else json.loads(Path(source).read_text())
    n = int(doc["n"])
    n_states = int(doc.get("states", 1))
    realizations, probs = [], []
    for entry in doc["realizations"]:
        states = tuple(int(s) for s in entry["states"])
        if len(states) != n or any(not 0 <= s < n_states for s in states):
            raise ValueError(f"bad realization {entry!r} for n={n}, states={n_states}")
        realizations.append(Realization(states))
        probs.append(float(entry["prob"]))
    prior = ExplicitPrior(realizations, probs, n_items=n)
    index = {phi.states: r for r, phi in enumerate(realizations)}
    if len(index) != len(realizations):
        raise ValueError("duplicate realizations")
    tasks = []
    for t, spec in enumerate(doc["tasks"]):
        table = {}
        for key, value in spec.get("utilities", {}).items():
            set_part, sep, r_part = key.partition("|")
            if not sep:
                raise ValueError(f"utility key {key!r} lacks '|<realization>'")
            items = frozenset(int(x) for x in set_part.split(",") if x.strip())
            table[(items, int(r_part))] = float(value)
        tasks.append(
            Task(
                TableUtility(table, index),
                n,
                adaptive_monotone=bool(spec.get("monotone", False)),
                adaptive_submodular=bool(spec.get("submodular", False)),
                name=spec.get("name", f"task{t}"),
            )
        )
    return tasks, prior


def dump_instance(tasks: Sequence[Task], prior: ExplicitPrior) -> dict:
    """Tabulate ``tasks`` over every item set and realization (small n only)."""
    n = prior.n_items
    reals = prior.realizations
    n_states = max(max(phi.states) for phi in reals) + 1 if n else 1
    doc: dict[str, Any] = {
        "n": n,
        "states": int(n_states),
        "realizations": [{"states": list(phi.states), "prob": float(p)} for phi, p in zip(reals, prior.probs)],
        "tasks": [],
    }
    subsets = [frozenset(c) for r in range(n + 1) for c in combinations(range(n), r)]
    for task in tasks:
        utilities = {}
        for items in subsets:
            for r, phi in enumerate(reals):
                v = task(items, phi)
                if v != 0:
                    utilities[f"{_set_key(items)}|{r}"] = v
        doc["tasks"].append(
            {
                "name": task.name,
                "monotone": task.adaptive_monotone,
                "submodular": task.adaptive_submodular,
                "utilities": utilities,
            }
        )
    return doc
