"""Train/test experiments on Independent Cascade tasks.

A repetition samples fresh training and test tasks from one graph, trains
every (algorithm, l, k) cell on the training tasks only, and then runs every
trained policy on the same test tasks and the same realizations, so cells
within a repetition are paired.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import ic as icm
from .core import run_policy
from .exceptions import ConfigError
from .policies import (
    baseline_fully_adaptive,
    baseline_random,
    baseline_rmg,
    FixedSetPolicy,
    greedy_sequence,
    pi_a,
    pi_b,
    tgp_policy,
    trgp_policy,
    trgp_train,
)

ALGORITHMS = ("TGP", "TRGP", "RMG", "GT", "FULLY_ADAPTIVE", "RANDOM", "PI_A", "PI_B")
CSV_SCHEMA = "#schema=1"
CSV_HEADER = ("algorithm", "l", "k", "repetition", "mean_utility", "stderr", "wall_ms")

# stream ids under (master seed, repetition)
_TRAIN, _TEST, _REALIZE, _WORLDS, _EXECUTE, _TRAIN_RANDOM = range(1, 7)


def _seed(*words) -> int:
    return int(np.random.SeedSequence([int(w) for w in words]).generate_state(1, np.uint64)[0] >> np.uint64(1))


def resolve_l(algorithm: str, l: int, k: int) -> int:
    """Initial-set size each algorithm actually uses at a sweep point."""
    if algorithm in ("GT", "RANDOM"):
        return k
    if algorithm == "FULLY_ADAPTIVE":
        return 0
    if algorithm == "PI_A":
        return k - 1
    if algorithm == "PI_B":
        return 1
    return min(max(l, 1), k - 1)


@dataclass
class Sweep:
    name: str
    k: list
    l: list | None = None
    l_fraction: float | None = None

    def points(self) -> list[tuple[int, int]]:
        out = []
        for k in self.k:
            if self.l_fraction is not None:
                out.append((math.floor(self.l_fraction * k + 0.5), k))
            else:
                out.extend((l, k) for l in self.l)
        return out

    @property
    def x(self) -> str:
        return "k" if self.l_fraction is not None or len(self.k) > 1 else "l"


@dataclass
class ExperimentConfig:
    sweeps: list
    algorithms: list = field(default_factory=lambda: ["TGP", "RMG", "GT"])
    graph: dict = field(default_factory=lambda: {"kind": "ba", "nodes": 200, "attach": 2, "seed": 0})
    m_train: int = 20
    m_test: int = 20
    choices: list = field(default_factory=lambda: [0.1, 0.01])
    repetitions: int = 100
    seed: int = 0
    n_worlds: int = 200
    record_wall_time: bool = False
    n_jobs: int | None = None

    def __post_init__(self):
        self.sweeps = [s if isinstance(s, Sweep) else Sweep(**s) for s in self.sweeps]
        self.validate()

    def validate(self):
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise ConfigError(f"unknown algorithms {bad}; choose from {list(ALGORITHMS)}")
        if not self.algorithms or not self.sweeps:
            raise ConfigError("need at least one algorithm and one sweep")
        for name in ("m_train", "m_test", "repetitions", "n_worlds"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be positive")
        if not self.choices or any(not 0 < c <= 1 for c in self.choices):
            raise ConfigError("choices must be probabilities in (0, 1]")
        for s in self.sweeps:
            if (s.l is None) == (s.l_fraction is None):
                raise ConfigError(f"sweep {s.name!r}: give exactly one of l and l_fraction")
            if s.l_fraction is not None and not 0 < s.l_fraction <= 1:
                raise ConfigError(f"sweep {s.name!r}: l_fraction must lie in (0, 1]")
            for l, k in s.points():
                if k < 2 or not 0 <= l <= k:
                    raise ConfigError(f"sweep {s.name!r}: need 0 <= l <= k and k >= 2 (got l={l}, k={k})")
        if "path" not in self.graph and self.graph.get("kind") not in icm.GRAPH_KINDS:
            raise ConfigError(f"graph needs a 'path' or a 'kind' in {sorted(icm.GRAPH_KINDS)}")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        if "sweeps" not in doc:
            raise ConfigError("config lacks 'sweeps'")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, source) -> "ExperimentConfig":
        text = str(source)
        try:
            doc = json.loads(text) if text.lstrip().startswith("{") else json.loads(Path(source).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return asdict(self)

    def build_graph(self) -> icm.DiGraph:
        if "path" in self.graph:
            return icm.load_edge_list(self.graph["path"])
        spec = dict(self.graph)
        try:
            return icm.make_graph(**spec)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad graph spec {spec}: {exc}") from None

    def cells(self) -> list[tuple[str, int, int]]:
        """Distinct (algorithm, l, k) cells in sweep order."""
        out = []
        for s in self.sweeps:
            for l, k in s.points():
                for a in self.algorithms:
                    cell = (a, resolve_l(a, l, k), k)
                    if cell not in out:
                        out.append(cell)
        return out


@dataclass(frozen=True)
class Row:
    algorithm: str
    l: int
    k: int
    repetition: int
    mean_utility: float
    stderr: float
    wall_ms: float = 0.0


@dataclass
class ExperimentTable:
    rows: list
    sweeps: list = field(default_factory=list)

    def summarize(self) -> list[dict]:
        """Mean over repetitions with its standard error, one entry per cell."""
        groups: dict = {}
        for r in self.rows:
            groups.setdefault((r.algorithm, r.l, r.k), []).append(r.mean_utility)
        out = []
        for (a, l, k), vals in groups.items():
            v = np.asarray(vals)
            se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
            out.append({"algorithm": a, "l": l, "k": k, "mean": float(v.mean()), "stderr": se, "repetitions": len(v)})
        return out

    def lookup(self) -> dict:
        return {(s["algorithm"], s["l"], s["k"]): s for s in self.summarize()}

    def to_dict(self, include_wall: bool = False) -> dict:
        rows = []
        for r in self.rows:
            d = asdict(r)
            if not include_wall:
                d.pop("wall_ms")
            rows.append(d)
        return {"rows": rows, "summary": self.summarize(), "sweeps": self.sweeps}

    def to_json(self, include_wall: bool = False) -> str:
        return json.dumps(self.to_dict(include_wall), sort_keys=True)


def _train(cell, train, est, config, rep, greedy):
    a, l, k = cell
    if a in ("TGP", "GT"):
        return tgp_policy(greedy[:l], k, est) if a == "TGP" else FixedSetPolicy(greedy[:k], k)
    seed = _seed(config.seed, rep, _TRAIN_RANDOM, l, k)
    if a == "TRGP":
        return trgp_policy(trgp_train(train, est, l, seed), k, est)
    if a == "RMG":
        return baseline_rmg(train, est, l, k, seed)
    if a == "FULLY_ADAPTIVE":
        return baseline_fully_adaptive(est, k, monotone=True)
    if a == "RANDOM":
        return baseline_random(k)
    if a == "PI_A":
        return pi_a(train, est, k, seed=seed)
    return pi_b(k, est)


def run_repetition(config: ExperimentConfig, rep: int, graph=None) -> list[Row]:
    graph = config.build_graph() if graph is None else graph
    train = [
        icm.as_task(icm.sample_task(graph, config.choices, _seed(config.seed, rep, _TRAIN, i)), f"train{i}", explicit=False)
        for i in range(config.m_train)
    ]
    test = [
        icm.as_task(icm.sample_task(graph, config.choices, _seed(config.seed, rep, _TEST, i)), f"test{i}", explicit=False)
        for i in range(config.m_test)
    ]
    est = icm.ICEstimator(config.n_worlds, _seed(config.seed, rep, _WORLDS))
    cells = config.cells()
    longest = max((k if a == "GT" else l) for a, l, k in cells if a in ("TGP", "GT")) if any(
        a in ("TGP", "GT") for a, _, _ in cells
    ) else 0

    t0 = time.perf_counter()
    greedy = greedy_sequence(train, est, longest) if longest else ()
    shared_ms = (time.perf_counter() - t0) * 1000
    policies, train_ms = {}, {}
    for cell in cells:
        t0 = time.perf_counter()
        policies[cell] = _train(cell, train, est, config, rep, greedy)
        train_ms[cell] = (time.perf_counter() - t0) * 1000 + (shared_ms if cell[0] in ("TGP", "GT") else 0.0)
    touched = [t.name for t in test if t.access]
    if touched:
        raise RuntimeError(f"test tasks queried during training: {touched}")

    draws = [icm.sample_live(t.data, _seed(config.seed, rep, _REALIZE, j)) for j, t in enumerate(test)]
    values = {cell: np.empty(len(test)) for cell in cells}
    test_ms = {cell: 0.0 for cell in cells}
    for j, (task, phi) in enumerate(zip(test, draws)):
        for c, cell in enumerate(cells):
            t0 = time.perf_counter()
            trace = run_policy(policies[cell], task, phi, _seed(config.seed, rep, _EXECUTE, j, c))
            values[cell][j] = task(trace.items, phi)
            test_ms[cell] += (time.perf_counter() - t0) * 1000
        est.forget(task)

    rows = []
    for cell in cells:
        v = values[cell]
        se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
        wall = train_ms[cell] + test_ms[cell] if config.record_wall_time else 0.0
        rows.append(Row(cell[0], cell[1], cell[2], rep, float(v.mean()), se, round(wall, 3)))
    return rows


def _sweep_meta(config: ExperimentConfig) -> list[dict]:
    out = []
    for s in config.sweeps:
        cells = {a: [[l, resolve_l(a, l, k), k] for l, k in s.points()] for a in config.algorithms}
        out.append({"name": s.name, "x": s.x, "cells": cells})
    return out


def _jobs(config) -> int:
    if config.n_jobs is not None:
        return max(1, int(config.n_jobs))
    return max(1, int(os.environ.get("ASML_JOBS", "1")))


def run_experiment(config: ExperimentConfig) -> ExperimentTable:
    if isinstance(config, dict):
        config = ExperimentConfig.from_dict(config)
    graph = config.build_graph()
    reps = range(config.repetitions)
    jobs = _jobs(config)
    if jobs == 1:
        chunks = [run_repetition(config, r, graph) for r in reps]
    else:
        with ProcessPoolExecutor(jobs) as pool:
            chunks = list(pool.map(run_repetition, [config] * len(reps), reps, [graph] * len(reps)))
    rows = [row for chunk in chunks for row in chunk]
    return ExperimentTable(rows, _sweep_meta(config))


# ---------------------------------------------------------------------------
# output


def table_to_csv(table: ExperimentTable) -> str:
    if not table.rows:
        raise ValueError("cannot write an empty table")
    buf = io.StringIO()
    buf.write(CSV_SCHEMA + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in table.rows:
        w.writerow([r.algorithm, r.l, r.k, r.repetition, repr(r.mean_utility), repr(r.stderr), repr(r.wall_ms)])
    return buf.getvalue()


def emit_csv(table: ExperimentTable, path):
    Path(path).write_text(table_to_csv(table))


def parse_csv(text: str) -> ExperimentTable:
    lines = text.splitlines()
    if not lines or lines[0] != CSV_SCHEMA:
        raise ValueError(f"missing {CSV_SCHEMA!r} line")
    reader = csv.reader(lines[1:])
    if tuple(next(reader)) != CSV_HEADER:
        raise ValueError("unexpected CSV header")
    rows = [Row(a, int(l), int(k), int(rep), float(m), float(se), float(w)) for a, l, k, rep, m, se, w in reader]
    return ExperimentTable(rows)


def read_csv(path) -> ExperimentTable:
    return parse_csv(Path(path).read_text())


def plot_data(table: ExperimentTable) -> dict:
    """One panel per sweep; within it one series per algorithm keyed by the swept variable."""
    summary = table.lookup()
    panels = []
    for s in table.sweeps:
        series = {}
        for a, cells in s["cells"].items():
            pts = []
            for nominal, l, k in cells:
                hit = summary.get((a, l, k))
                if hit is not None:
                    x = k if s["x"] == "k" else nominal
                    pts.append({"x": x, "l": l, "k": k, "mean": hit["mean"], "stderr": hit["stderr"]})
            series[a] = pts
        panels.append({"name": s["name"], "x": s["x"], "series": series})
    return {"panels": panels}


def emit_plot_data(table: ExperimentTable, path):
    Path(path).write_text(json.dumps(plot_data(table), sort_keys=True, indent=1) + "\n")


__all__ = [
    "ALGORITHMS",
    "ExperimentConfig",
    "ExperimentTable",
    "Row",
    "Sweep",
    "emit_csv",
    "emit_plot_data",
    "parse_csv",
    "plot_data",
    "read_csv",
    "resolve_l",
    "run_experiment",
    "run_repetition",
    "table_to_csv",
]
