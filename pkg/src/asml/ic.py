"""Adaptive influence maximization under the Independent Cascade model.

A realization is a live-edge draw: every edge is live independently with its
task-specific probability. Seeding a node reveals its whole cascade and the
live/blocked status of every edge leaving an activated node (full-adoption
feedback), which is what :class:`CascadeState` records.

:class:`ICEstimator` answers marginal queries on a fixed sample of worlds per
task. Reachability for all nodes of all worlds is computed at once as uint64
bitsets, so a query costs a few array passes instead of one traversal per
candidate.
"""
from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import networkx as nx
import numpy as np

from .core import ExplicitPrior, GenerativePrior, Task, as_rng
from .exceptions import InconsistentObservation, ParseError

EXPLICIT_EDGE_LIMIT = 12
DEFAULT_WORLDS = 1000
_ONE = np.uint64(1)


@dataclass(frozen=True, eq=False)
class DiGraph:
    """Directed graph on nodes ``0..node_count-1``; edges sorted, unique, loop-free."""

    node_count: int
    edges: tuple

    def __post_init__(self):
        edges = tuple(sorted({(int(u), int(v)) for u, v in self.edges if u != v}))
        for u, v in edges:
            if not (0 <= u < self.node_count and 0 <= v < self.node_count):
                raise ValueError(f"edge ({u}, {v}) outside [0, {self.node_count})")
        object.__setattr__(self, "edges", edges)
        src = np.array([u for u, _ in edges], dtype=np.int64)
        dst = np.array([v for _, v in edges], dtype=np.int64)
        out: list[list[int]] = [[] for _ in range(self.node_count)]
        for j, (u, _) in enumerate(edges):
            out[u].append(j)
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dst", dst)
        object.__setattr__(self, "out_edges", tuple(tuple(o) for o in out))

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def __eq__(self, other):
        if not isinstance(other, DiGraph):
            return NotImplemented
        return self.node_count == other.node_count and self.edges == other.edges

    def __hash__(self):
        return hash((self.node_count, self.edges))

    def to_edge_list(self) -> str:
        lines = [f"nodes {self.node_count}"] + [f"{u} {v}" for u, v in self.edges]
        return "\n".join(lines) + "\n"


def parse_edge_list(text: str) -> DiGraph:
    node_count = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "nodes":
            if len(parts) != 2 or not parts[1].isdigit():
                raise ParseError(f"line {lineno}: bad header {raw!r}")
            node_count = int(parts[1])
            continue
        if len(parts) != 2:
            raise ParseError(f"line {lineno}: expected 'source target', got {raw!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"line {lineno}: non-integer node id in {raw!r}") from None
        if u < 0 or v < 0:
            raise ParseError(f"line {lineno}: negative node id in {raw!r}")
        edges.append((u, v))
    inferred = 1 + max((max(u, v) for u, v in edges), default=-1)
    if node_count is None:
        node_count = inferred
    elif node_count < inferred:
        raise ParseError(f"header declares {node_count} nodes but ids reach {inferred - 1}")
    return DiGraph(node_count, tuple(edges))


def make_graph(kind: str, nodes: int, edges: int | None = None, attach: int = 2, seed=0) -> DiGraph:
    if kind == "gnm":
        return gnm_graph(nodes, 4 * nodes if edges is None else edges, seed)
    if kind == "ba":
        return ba_graph(nodes, attach, seed)
    if kind in ("path", "star"):
        return GRAPH_KINDS[kind](nodes)
    raise ValueError(f"unknown graph kind {kind!r}")


def load_edge_list(path) -> DiGraph:
    return parse_edge_list(Path(path).read_text())


def gnm_graph(n: int, m: int, seed=0) -> DiGraph:
    """Uniform random directed graph with ``n`` nodes and ``m`` edges."""
    g = nx.gnm_random_graph(n, m, seed=int(seed), directed=True)
    return DiGraph(n, tuple(g.edges()))


def ba_graph(n: int, attach: int = 2, seed=0) -> DiGraph:
    """Preferential-attachment graph with every undirected edge in both directions."""
    g = nx.barabasi_albert_graph(n, attach, seed=int(seed))
    return DiGraph(n, tuple(g.to_directed().edges()))


def path_graph(n: int) -> DiGraph:
    return DiGraph(n, tuple((i, i + 1) for i in range(n - 1)))


def star_graph(n: int) -> DiGraph:
    """Hub 0 with an edge to every other node."""
    return DiGraph(n, tuple((0, i) for i in range(1, n)))


GRAPH_KINDS = {"gnm": gnm_graph, "ba": ba_graph, "path": path_graph, "star": star_graph}


# ---------------------------------------------------------------------------
# tasks and realizations


@dataclass(frozen=True, eq=False)
class ICTask:
    graph: DiGraph
    edge_prob: np.ndarray
    seed: int | None = None
    choices: tuple = ()

    def __post_init__(self):
        p = np.asarray(self.edge_prob, dtype=float)
        if p.shape != (self.graph.edge_count,):
            raise ValueError(f"need {self.graph.edge_count} edge probabilities, got shape {p.shape}")
        if np.any(p <= 0) or np.any(p > 1):
            raise ValueError("edge probabilities must lie in (0, 1]")
        p.setflags(write=False)
        object.__setattr__(self, "edge_prob", p)

    def to_json(self, explicit: bool = False) -> str:
        doc = {"seed": self.seed, "choices": list(self.choices)}
        if explicit or self.seed is None:
            doc["edge_probs"] = [float(x) for x in self.edge_prob]
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str, graph: DiGraph) -> "ICTask":
        doc = json.loads(text)
        if doc.get("edge_probs") is not None:
            return cls(graph, np.asarray(doc["edge_probs"], dtype=float), doc.get("seed"), tuple(doc.get("choices", ())))
        return sample_task(graph, doc["choices"], doc["seed"])


def sample_task(graph: DiGraph, choices: Sequence[float], seed) -> ICTask:
    """Each edge probability drawn uniformly from ``choices``."""
    choices = tuple(float(c) for c in choices)
    if not choices or any(not 0 < c <= 1 for c in choices):
        raise ValueError("choices must be non-empty probabilities in (0, 1]")
    rng = as_rng(seed)
    probs = np.asarray(choices)[rng.integers(len(choices), size=graph.edge_count)]
    return ICTask(graph, probs, seed if isinstance(seed, int) else None, choices)


@dataclass(frozen=True)
class CascadeState:
    """What seeding one node reveals: the activated nodes and the live edges leaving them."""

    reached: frozenset
    live_out: frozenset

    def __repr__(self):
        return f"CascadeState(reached={sorted(self.reached)}, live_out={sorted(self.live_out)})"


def _reach(graph: DiGraph, live, seeds) -> set:
    seen = set(seeds)
    queue = deque(seen)
    while queue:
        u = queue.popleft()
        for j in graph.out_edges[u]:
            if live[j]:
                v = int(graph.dst[j])
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
    return seen


@dataclass(frozen=True)
class LiveEdgeDraw:
    graph: DiGraph = field(compare=False, hash=False, repr=False)
    live: tuple
    _cache: dict = field(default_factory=dict, compare=False, hash=False, repr=False)

    @property
    def n_items(self) -> int:
        return self.graph.node_count

    @property
    def states(self) -> tuple:
        return tuple(self.state(v) for v in range(self.n_items))

    def state(self, v: int):
        if v >= self.graph.node_count:
            return 0
        s = self._cache.get(v)
        if s is None:
            reached = frozenset(_reach(self.graph, self.live, [v]))
            live_out = frozenset(j for u in reached for j in self.graph.out_edges[u] if self.live[j])
            s = CascadeState(reached, live_out)
            self._cache[v] = s
        return s


def spread(seeds, draw: LiveEdgeDraw) -> int:
    seeds = [int(v) for v in seeds if v < draw.graph.node_count]
    if not seeds:
        return 0
    return len(_reach(draw.graph, draw.live, seeds))


@dataclass(frozen=True)
class CascadeObservation:
    activated: frozenset
    revealed: dict

    @classmethod
    def from_partial(cls, graph: DiGraph, psi) -> "CascadeObservation":
        """Merge the cascade states in ``psi``; conflicting revelations raise."""
        revealed: dict[int, bool] = {}
        activated: set = set()
        for v, state in psi.items():
            if v >= graph.node_count:
                continue
            if not isinstance(state, CascadeState) or v not in state.reached:
                raise InconsistentObservation(f"node {v} must belong to its own cascade")
            frontier = {j for u in state.reached for j in graph.out_edges[u]}
            if not state.live_out <= frontier:
                raise InconsistentObservation(f"node {v}: live edges outside the cascade frontier")
            for j in frontier:
                status = j in state.live_out
                if revealed.setdefault(j, status) != status:
                    raise InconsistentObservation(f"edge {graph.edges[j]} revealed both live and blocked")
            live = np.zeros(graph.edge_count, dtype=bool)
            live[list(state.live_out)] = True
            if _reach(graph, live, [v]) != set(state.reached):
                raise InconsistentObservation(f"node {v}: activated set is not closed under its live edges")
            activated |= state.reached
        return cls(frozenset(activated), revealed)


def sample_live(ic: ICTask, rng) -> LiveEdgeDraw:
    rng = as_rng(rng)
    return LiveEdgeDraw(ic.graph, tuple(bool(x) for x in rng.random(ic.graph.edge_count) < ic.edge_prob))


def sample_live_conditioned(ic: ICTask, obs: CascadeObservation, seed) -> LiveEdgeDraw:
    """Revealed edges keep their status; the others are drawn independently."""
    rng = as_rng(seed)
    live = rng.random(ic.graph.edge_count) < ic.edge_prob
    for j, status in obs.revealed.items():
        live[j] = status
    return LiveEdgeDraw(ic.graph, tuple(bool(x) for x in live))


def explicit_prior(ic: ICTask) -> ExplicitPrior:
    """All 2^|edges| live-edge draws with positive probability."""
    g = ic.graph
    if g.edge_count > EXPLICIT_EDGE_LIMIT:
        raise ValueError(f"{g.edge_count} edges exceed the enumeration limit {EXPLICIT_EDGE_LIMIT}")
    draws, probs = [], []
    for bits in itertools.product((False, True), repeat=g.edge_count):
        p = float(np.prod([q if b else 1 - q for b, q in zip(bits, ic.edge_prob)]))
        if p > 0:
            draws.append(LiveEdgeDraw(g, bits))
            probs.append(p)
    total = sum(probs)
    return ExplicitPrior(draws, [p / total for p in probs], n_items=g.node_count)


def generative_prior(ic: ICTask) -> GenerativePrior:
    def conditional(psi, rng):
        return sample_live_conditioned(ic, CascadeObservation.from_partial(ic.graph, psi), rng)

    return GenerativePrior(lambda rng: sample_live(ic, rng), conditional, n_items=ic.graph.node_count)


def _spread_utility(items, phi) -> float:
    return float(spread(items, phi))


def as_task(ic: ICTask, name: str = "", explicit: bool | None = None) -> Task:
    """Core task whose utility is the spread; the prior is explicit for small graphs."""
    if explicit is None:
        explicit = ic.graph.edge_count <= EXPLICIT_EDGE_LIMIT
    prior = explicit_prior(ic) if explicit else generative_prior(ic)
    return Task(_spread_utility, ic.graph.node_count, True, True, name=name, prior=prior, data=ic)


# ---------------------------------------------------------------------------
# vectorized estimator


class _Worlds:
    """Sampled live-edge worlds of one task, with bitset reachability."""

    def __init__(self, ic: ICTask, n_worlds: int, rng):
        g = ic.graph
        self.n = g.node_count
        self.R = n_worlds
        self.W = max(1, -(-self.n // 64))
        live = rng.random((n_worlds, g.edge_count)) < ic.edge_prob
        wi, ei = np.nonzero(live)
        # graph edges are sorted by source, so rows come out sorted by (world, source)
        self.wi, self.src, self.dst = wi, g.src[ei], g.dst[ei]
        self._full = None

    def closure(self, removed: np.ndarray | None = None):
        """Reach bitsets of every (world, source node) pair after deleting ``removed`` nodes."""
        n, W = self.n, self.W
        wi, s, d = self.wi, self.src, self.dst
        if removed is not None and removed.any():
            ok = ~(removed[s] | removed[d])
            wi, s, d = wi[ok], s[ok], d[ok]
        gs = wi * n + s
        gd = wi * n + d
        if len(gs) == 0:
            return gs, np.zeros((0, W), dtype=np.uint64)
        first = np.r_[True, gs[1:] != gs[:-1]]
        rows = gs[first]
        srow = np.cumsum(first) - 1
        nr = len(rows)
        drow = np.searchsorted(rows, gd)
        hit = drow < nr
        hit[hit] = rows[drow[hit]] == gd[hit]
        reach = np.zeros((nr, W), dtype=np.uint64)
        node = rows % n
        reach[np.arange(nr), node // 64] = _ONE << (node % 64).astype(np.uint64)
        dn = gd % n
        np.bitwise_or.at(reach, (srow, dn // 64), _ONE << (dn % 64).astype(np.uint64))
        es, ed = srow[hit], drow[hit]
        changed = np.ones(nr, dtype=bool)
        # semi-naive fixed point: only edges into rows that changed last pass
        while len(es):
            sel = changed[ed]
            if not sel.any():
                break
            a, b = es[sel], ed[sel]
            before = reach[a].copy()
            np.bitwise_or.at(reach, a, reach[b])
            changed = np.zeros(nr, dtype=bool)
            changed[a[(reach[a] != before).any(axis=1)]] = True
        return rows, reach

    def full(self):
        if self._full is None:
            self._full = self.closure()
        return self._full

    def coverage(self, S) -> np.ndarray:
        """Per-world bitset of nodes reached from ``S``."""
        n = self.n
        cov = np.zeros((self.R, self.W), dtype=np.uint64)
        S = np.asarray(sorted(S), dtype=np.int64)
        if len(S) == 0:
            return cov
        for v in S:
            cov[:, v // 64] |= _ONE << np.uint64(v % 64)
        rows, reach = self.full()
        inS = np.zeros(n, dtype=bool)
        inS[S] = True
        sel = inS[rows % n]
        np.bitwise_or.at(cov, rows[sel] // n, reach[sel])
        return cov

    def set_value(self, S) -> float:
        return float(np.bitwise_count(self.coverage(S)).sum() / self.R)

    def set_gains(self, S) -> np.ndarray:
        """E|reach(v) minus reach(S)| for every node v."""
        n, R = self.n, self.R
        cov = self.coverage(S)
        covered = np.unpackbits(cov.view(np.uint8), axis=1, bitorder="little")[:, :n].sum(axis=0)
        rows, reach = self.full()
        w, node = rows // n, rows % n
        fresh = np.bitwise_count(reach & ~cov[w]).sum(axis=1).astype(np.int64)
        own = (cov[w, node // 64] >> (node % 64).astype(np.uint64)) & _ONE
        extra = fresh - (1 - own.astype(np.int64))
        g = (R - covered) + np.bincount(node, weights=extra, minlength=n)
        return g / R

    def residual_gains(self, activated) -> np.ndarray:
        """E|reach of v with the activated nodes deleted|, zero on activated nodes."""
        n, R = self.n, self.R
        removed = np.zeros(n, dtype=bool)
        removed[list(activated)] = True
        rows, reach = self.closure(removed)
        size = np.bitwise_count(reach).sum(axis=1).astype(np.int64)
        g = R + np.bincount(rows % n, weights=size - 1, minlength=n)
        g[removed] = 0
        return g / R


class ICEstimator:
    """Marginal oracle for IC tasks built by :func:`as_task`.

    Each task gets ``n_worlds`` live-edge worlds drawn once from a stream
    derived from ``(seed, task seed)``; all queries on that task reuse them.
    Conditioning on an observation deletes the activated nodes: edges out of
    them are revealed and edges into them cannot add spread.
    """

    exact = False

    def __init__(self, n_worlds: int = DEFAULT_WORLDS, seed: int = 0):
        if n_worlds < 1:
            raise ValueError("n_worlds must be at least 1")
        self.n_worlds = int(n_worlds)
        self.seed = int(seed)
        self._worlds: dict[int, tuple] = {}

    def worlds(self, task: Task) -> _Worlds:
        ic = task.data
        if not isinstance(ic, ICTask):
            raise TypeError("ICEstimator needs a task built by asml.ic.as_task")
        hit = self._worlds.get(id(ic))
        if hit is None or hit[0] is not ic:
            stream = [self.seed, 0 if ic.seed is None else int(ic.seed)]
            hit = (ic, _Worlds(ic, self.n_worlds, as_rng(stream)))
            self._worlds[id(ic)] = hit
        return hit[1]

    def forget(self, task: Task):
        self._worlds.pop(id(task.data), None)

    @staticmethod
    def _pick(gains: np.ndarray, candidates) -> np.ndarray:
        n = len(gains)
        return np.array([gains[e] if e < n else 0.0 for e in candidates], dtype=float)

    def set_value(self, task, items):
        task.access["estimator"] += 1
        return self.worlds(task).set_value(e for e in items if e < task.n_items)

    def set_gains(self, task, items, candidates):
        task.access["estimator"] += 1
        S = [e for e in items if e < task.n_items]
        return self._pick(self.worlds(task).set_gains(S), candidates)

    def item_gains(self, task, psi, candidates):
        task.access["estimator"] += 1
        obs = CascadeObservation.from_partial(task.data.graph, psi)
        return self._pick(self.worlds(task).residual_gains(obs.activated), candidates)


__all__ = [
    "CascadeObservation",
    "CascadeState",
    "DiGraph",
    "GRAPH_KINDS",
    "ICEstimator",
    "ICTask",
    "LiveEdgeDraw",
    "as_task",
    "ba_graph",
    "explicit_prior",
    "generative_prior",
    "gnm_graph",
    "load_edge_list",
    "make_graph",
    "parse_edge_list",
    "path_graph",
    "sample_live",
    "sample_live_conditioned",
    "sample_task",
    "spread",
    "star_graph",
]
