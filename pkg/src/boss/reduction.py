"""CLIQUE -> BOSS reduction: instance construction, witnesses and exhaustive checks.

For a graph with ``n`` vertices and ``m`` edges and a clique size ``k`` the
constructed classifier has one ReLU per vertex (bias eps - 1) feeding output 1
and one ReLU per edge (bias eps - 2, fed by both endpoints) feeding output 2,
followed by a two-way softmax. A binary indicator of a k-clique lights up
``k`` vertex units and ``k(k-1)/2`` edge units, each emitting exactly ``eps``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from boss.autodiff import ComputeGraph, Layer
from boss.errors import BudgetError, ConfigError, SchemaError, StructuralError
from boss.metrics import mse
from boss.models import ClassifierModel

PMF_TOL = 1e-9
MAX_BRUTE_FORCE_N = 16


@dataclass
class Graph:
    n: int
    edges: list = field(default_factory=list)

    def __post_init__(self):
        if self.n < 1:
            raise StructuralError("graph needs at least one vertex")
        seen = set()
        clean = []
        for u, v in self.edges:
            u, v = int(u), int(v)
            if u == v:
                raise StructuralError(f"self-loop at vertex {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise StructuralError(f"edge ({u}, {v}) has an endpoint outside [0, {self.n})")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise StructuralError(f"duplicate edge {key}")
            seen.add(key)
            clean.append(key)
        self.edges = clean
        self._adj = seen

    @property
    def m(self):
        return len(self.edges)

    def has_edge(self, u, v):
        return (min(u, v), max(u, v)) in self._adj

    def is_clique(self, vertices):
        return all(self.has_edge(u, v) for u, v in itertools.combinations(vertices, 2))

    @classmethod
    def complete(cls, n):
        return cls(n, list(itertools.combinations(range(n), 2)))

    @classmethod
    def cycle(cls, n):
        return cls(n, [(i, (i + 1) % n) for i in range(n)])

    @classmethod
    def path(cls, n):
        return cls(n, [(i, i + 1) for i in range(n - 1)])


def parse_dimacs(text):
    """Read ``p edge n m`` / ``e u v`` (1-indexed) into a Graph."""
    n, declared, edges = None, None, []
    for lineno, raw in enumerate(text.splitlines(), 1):
        parts = raw.split()
        if not parts or parts[0] == "c":
            continue
        try:
            if parts[0] == "p":
                if len(parts) != 4 or parts[1] not in ("edge", "col"):
                    raise SchemaError(f"line {lineno}: expected 'p edge n m'")
                n, declared = int(parts[2]), int(parts[3])
            elif parts[0] == "e":
                if n is None:
                    raise SchemaError(f"line {lineno}: edge before problem line")
                edges.append((int(parts[1]) - 1, int(parts[2]) - 1))
            else:
                raise SchemaError(f"line {lineno}: unknown record {parts[0]!r}")
        except (ValueError, IndexError) as exc:
            raise SchemaError(f"line {lineno}: {exc}") from exc
    if n is None:
        raise SchemaError("missing 'p edge' line")
    if declared != len(edges):
        raise SchemaError(f"header declares {declared} edges, found {len(edges)}")
    try:
        return Graph(n, edges)
    except StructuralError as exc:
        raise SchemaError(str(exc)) from exc


def read_dimacs(path):
    return parse_dimacs(Path(path).read_text())


def to_dimacs(graph):
    lines = [f"p edge {graph.n} {graph.m}"]
    lines += [f"e {u + 1} {v + 1}" for u, v in graph.edges]
    return "\n".join(lines) + "\n"


def clique_epsilon(k):
    return 1.0 - math.sqrt(1.0 - 1.0 / (k + 1))


def target_pmf(k, eps):
    """Two-way softmax of (eps*k, eps*k(k-1)/2), written in closed form."""
    a = math.exp(eps * k)
    b = math.exp(eps * k * (k - 1) / 2)
    return np.array([a / (b + a), b / (b + a)])


@dataclass
class BossInstance:
    classifier: ClassifierModel
    x_d: np.ndarray
    p_d: np.ndarray
    delta_s: float
    delta_c: float
    k: int
    eps: float
    d_metric: str = "mse"


def reduce(graph, k):
    if not 1 <= k <= graph.n:
        raise ConfigError(f"clique size k={k} must satisfy 1 <= k <= n={graph.n}")
    n, m = graph.n, graph.m
    eps = clique_epsilon(k)
    w_hidden = np.zeros((n + m, n))
    w_hidden[np.arange(n), np.arange(n)] = 1.0
    for j, (u, v) in enumerate(graph.edges):
        w_hidden[n + j, u] = 1.0
        w_hidden[n + j, v] = 1.0
    b_hidden = np.concatenate([np.full(n, eps - 1.0), np.full(m, eps - 2.0)])
    w_out = np.zeros((2, n + m))
    w_out[0, :n] = 1.0
    w_out[1, n:] = 1.0
    net = ComputeGraph([
        Layer("dense", n, n + m, weights=w_hidden, bias=b_hidden),
        Layer("relu", n + m),
        Layer("dense", n + m, 2, weights=w_out, bias=np.zeros(2)),
        Layer("softmax", 2),
    ])
    return BossInstance(classifier=ClassifierModel(net), x_d=np.zeros(n), p_d=target_pmf(k, eps),
                        delta_s=k / n, delta_c=0.0, k=k, eps=eps)


def witness_to_x(graph, clique_vertices, k=None):
    vertices = sorted(set(int(v) for v in clique_vertices))
    if not vertices:
        raise ConfigError("a witness needs at least one vertex")
    if k is not None and len(vertices) != k:
        raise ConfigError(f"witness has {len(vertices)} vertices, expected {k}")
    if any(not 0 <= v < graph.n for v in vertices):
        raise ConfigError(f"witness vertices {vertices} outside [0, {graph.n})")
    if not graph.is_clique(vertices):
        raise ConfigError(f"vertices {vertices} do not form a clique")
    x = np.zeros(graph.n)
    x[vertices] = 1.0
    return x


@dataclass
class Feasibility:
    feasible: bool
    violations: list
    d: float
    output: np.ndarray


def check_feasible(instance, x):
    """Check both constraints; ``d <= delta_s`` is non-strict and ``D <= 0`` means equal PMFs."""
    x = np.asarray(x, dtype=np.float64)
    violations = []
    if np.any(x < 0.0) or np.any(x > 1.0):
        violations.append("domain: x must lie in [0, 1]^n")
    d = mse(x, instance.x_d)
    if d > instance.delta_s:
        violations.append(f"input: d={d!r} exceeds delta_s={instance.delta_s!r}")
    out = instance.classifier.predict(x)
    gap = float(np.max(np.abs(out - instance.p_d)))
    if gap > PMF_TOL:
        violations.append(f"output: |p(x) - p_d|_inf={gap!r} exceeds {PMF_TOL}")
    return Feasibility(feasible=not violations, violations=violations, d=d, output=out)


def brute_force_clique(graph, k):
    """First k-subset (lexicographic) that forms a clique, or None."""
    for combo in itertools.combinations(range(graph.n), k):
        if graph.is_clique(combo):
            return set(combo)
    return None


def binary_vectors(n):
    """All of {0,1}^n as rows, in lexicographic order."""
    return np.array(list(itertools.product((0.0, 1.0), repeat=n)))


def brute_force_binary_feasibility(instance):
    """First feasible binary x (lexicographic), or None. Limited to n <= 16."""
    n = instance.x_d.size
    if n > MAX_BRUTE_FORCE_N:
        raise BudgetError(f"refusing to enumerate 2^{n} vectors (limit n <= {MAX_BRUTE_FORCE_N})")
    xs = binary_vectors(n)
    d = np.mean((xs - instance.x_d) ** 2, axis=1)
    out = instance.classifier.predict(xs)
    ok = (d <= instance.delta_s) & (np.max(np.abs(out - instance.p_d), axis=1) <= PMF_TOL)
    hits = np.flatnonzero(ok)
    return xs[hits[0]] if hits.size else None
