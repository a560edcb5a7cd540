"""Approximation-ratio checks of every policy against the exact two-phase optimum."""
from __future__ import annotations

import math

import numpy as np

from .bruteforce import (
    TOL,
    check_adaptive_monotonicity,
    check_adaptive_submodularity,
    coverage_instance,
    optimal_two_phase,
)
from .core import f_avg
from .estimation import ExactEstimator
from .policies import pi_a, pi_b, tgp_policy, tgp_train, trgp_mixture

REGIMES = ("monotone", "nonmonotone", "kl1", "l1")


def trgp_bound(l: int, k: int) -> float:
    r = k - l
    return 0.5 * (1 - 1 / l) ** l * (1 - 1 / r) ** r


def regime_bound(regime: str, l: int, k: int) -> float:
    if regime == "monotone":
        return 0.5
    if regime == "nonmonotone":
        return trgp_bound(l, k)
    if regime == "kl1":
        return 1 / (1 + math.e)
    if regime == "l1":
        return 1 / (2 * math.e)
    raise ValueError(f"unknown regime {regime!r}; choose from {list(REGIMES)}")


def draw_instance(regime: str, rng: np.random.Generator):
    """Random tiny instance and budgets ``(tasks, prior, l, k)`` for a regime."""
    n_states = int(rng.integers(1, 3))
    m = int(rng.integers(1, 4))
    if regime == "monotone":
        n = int(rng.integers(3, 6))
        k = int(rng.integers(2, min(4, n) + 1))
        l = int(rng.integers(1, k))
    elif regime == "nonmonotone":
        n = int(rng.integers(4, 6))
        k = int(rng.integers(4, 6))
        l = int(rng.integers(2, k - 1))
    elif regime == "kl1":
        n = int(rng.integers(3, 6))
        k = int(rng.integers(2, min(4, n) + 1))
        l = k - 1
    elif regime == "l1":
        n = int(rng.integers(3, 6))
        k = int(rng.integers(2, min(4, n) + 1))
        l = 1
    else:
        raise ValueError(f"unknown regime {regime!r}; choose from {list(REGIMES)}")
    seed = int(rng.integers(2**31))
    tasks, prior = coverage_instance(n, n_states, m, seed=seed, monotone=regime == "monotone")
    return tasks, prior, l, k


def regime_policy(regime: str, tasks, prior, l: int, k: int):
    est = ExactEstimator(prior)
    if regime == "monotone":
        return tgp_policy(tgp_train(tasks, est, l), k, est)
    if regime == "nonmonotone":
        return trgp_mixture(tasks, est, l, k)
    if regime == "kl1":
        return pi_a(tasks, est, k, l=l)
    return pi_b(k, est, l=l)


def check_instance(regime: str, tasks, prior, l: int, k: int, validate: bool = True) -> dict:
    if validate:
        for t in tasks:
            if not check_adaptive_submodularity(t, prior).holds:
                raise AssertionError(f"generated task {t.name} is not adaptive submodular")
            if regime == "monotone" and not check_adaptive_monotonicity(t, prior).holds:
                raise AssertionError(f"generated task {t.name} is not adaptive monotone")
    value = f_avg(regime_policy(regime, tasks, prior, l, k), tasks, prior)
    opt = optimal_two_phase(tasks, prior, l, k).value
    ratio = 1.0 if opt <= TOL else value / opt
    bound = regime_bound(regime, l, k)
    return {
        "n": tasks[0].n_items,
        "m": len(tasks),
        "l": l,
        "k": k,
        "value": value,
        "optimum": opt,
        "ratio": ratio,
        "bound": bound,
        "violated": value < bound * opt - TOL,
    }


def verify_ratios(count: int, seed: int = 0, regime: str = "monotone", validate: bool = True) -> dict:
    """Exact policy value over the exact optimum on ``count`` random instances."""
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}; choose from {list(REGIMES)}")
    if count < 1:
        raise ValueError("count must be positive")
    results = []
    for i in range(count):
        rng = np.random.default_rng([int(seed), i])
        tasks, prior, l, k = draw_instance(regime, rng)
        results.append(check_instance(regime, tasks, prior, l, k, validate))
    ratios = [r["ratio"] for r in results]
    violations = [dict(r, instance=i) for i, r in enumerate(results) if r["violated"]]
    return {
        "regime": regime,
        "count": count,
        "seed": int(seed),
        "min_ratio": min(ratios),
        "mean_ratio": float(np.mean(ratios)),
        "min_bound": min(r["bound"] for r in results),
        "violations": violations,
        "passed": not violations,
    }


__all__ = ["REGIMES", "check_instance", "draw_instance", "regime_bound", "regime_policy", "trgp_bound", "verify_ratios"]
