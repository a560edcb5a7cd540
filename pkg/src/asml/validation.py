"""Argument checks shared by the estimator wrappers."""
from __future__ import annotations

from sklearn.utils.validation import check_is_fitted

from .core import Task
from .exceptions import EmptyTaskSet, InfeasibleBudget


def check_tasks(tasks) -> list[Task]:
    tasks = list(tasks)
    if not tasks:
        raise EmptyTaskSet("need at least one task")
    for t in tasks:
        if not isinstance(t, Task):
            raise TypeError(f"expected Task, got {type(t).__name__}")
    sizes = {t.n_items for t in tasks}
    if len(sizes) != 1:
        raise ValueError(f"tasks disagree on the ground set size: {sorted(sizes)}")
    return tasks


def check_budget(l: int, k: int, n: int | None = None, strict: bool = False):
    """0 <= l <= k (l < k when ``strict``) and l <= n."""
    if k < 1 or l < 0 or l > k or (strict and l == k):
        raise InfeasibleBudget(f"infeasible budgets l={l}, k={k}")
    if n is not None and l > n:
        raise InfeasibleBudget(f"cannot pick {l} items from {n}")


__all__ = ["check_budget", "check_is_fitted", "check_tasks"]
