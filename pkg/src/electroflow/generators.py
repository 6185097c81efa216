"""Random feasible instance families with per-instance random substreams."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import FlowInstance, RngStream

FAMILIES = ("random", "grid", "regular")


@dataclass(frozen=True)
class GeneratorSpec:
    family: str = "random"
    n: int = 10
    m: int = 20
    U: int = 10
    W: int = 10
    count: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {', '.join(FAMILIES)}")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.U < 1 or self.W < 1:
            raise ValueError("U and W must be at least 1")


def _spanning_tree(n: int, gen: np.random.Generator) -> list[tuple[int, int]]:
    """Random tree: each vertex after the first attaches to an earlier one, in a random order."""
    order = gen.permutation(n)
    edges = []
    for i in range(1, n):
        j = int(gen.integers(0, i))
        a, b = int(order[i]), int(order[j])
        edges.append((a, b) if gen.integers(0, 2) else (b, a))
    return edges


def _random_edges(n: int, m: int, gen: np.random.Generator) -> list[tuple[int, int]]:
    edges = _spanning_tree(n, gen)
    while len(edges) < m:
        a, b = (int(x) for x in gen.integers(0, n, size=2))
        if a != b:
            edges.append((a, b))
    return edges


def _grid_edges(n: int, m: int, gen: np.random.Generator) -> list[tuple[int, int]]:
    w = max(1, int(round(np.sqrt(n))))
    edges = []
    for v in range(n):
        for u in (v + 1 if (v + 1) % w else None, v + w):
            if u is not None and u < n:
                edges.append((v, u) if gen.integers(0, 2) else (u, v))
    if not edges:
        edges = _spanning_tree(n, gen)
    # connect a ragged last row if needed
    covered = {v for e in edges for v in e}
    for v in range(1, n):
        if v not in covered:
            edges.append((v - 1, v))
    while len(edges) < m:
        a, b = (int(x) for x in gen.integers(0, n, size=2))
        if a != b:
            edges.append((a, b))
    return edges


def _regular_edges(n: int, m: int, gen: np.random.Generator) -> list[tuple[int, int]]:
    """Union of random perfect-ish matchings over a Hamiltonian cycle: an expander-like graph."""
    perm = gen.permutation(n)
    edges = [(int(perm[i]), int(perm[(i + 1) % n])) for i in range(n if n > 2 else 1)]
    while len(edges) < m:
        p = gen.permutation(n)
        for i in range(0, n - 1, 2):
            if len(edges) >= m:
                break
            edges.append((int(p[i]), int(p[i + 1])))
    return edges


def generate_instance(family: str, n: int, m: int, U: int, W: int, rng) -> FlowInstance:
    """Connected instance whose demands come from routing on a random spanning tree.

    Capacities and costs are uniform in [1, U] and [1, W]. A flow between 0
    and the capacity is drawn on the arcs of a random spanning tree of the
    graph; its divergence is the demand vector, so the instance is feasible.
    """
    gen = rng.generator() if isinstance(rng, RngStream) else np.random.default_rng(rng)
    builder = {"random": _random_edges, "grid": _grid_edges, "regular": _regular_edges}[family]
    edges = np.array(builder(n, max(m, n - 1), gen), dtype=np.int64)
    mm = edges.shape[0]
    cap = gen.integers(1, U + 1, size=mm)
    cost = gen.integers(1, W + 1, size=mm)
    # route flow on a random spanning tree of the generated edges
    parent = np.arange(n)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    f = np.zeros(mm, dtype=np.int64)
    for e in gen.permutation(mm):
        a, b = find(edges[e, 0]), find(edges[e, 1])
        if a != b:
            parent[a] = b
            f[e] = gen.integers(0, cap[e] + 1)
    demand = np.bincount(edges[:, 0], f, n).astype(np.int64) - np.bincount(edges[:, 1], f, n).astype(np.int64)
    return FlowInstance(n, edges[:, 0], edges[:, 1], cost, cap, demand)


def generate_suite(spec: GeneratorSpec) -> list[FlowInstance]:
    """spec.count instances; instance i uses its own substream so earlier ones never change."""
    root = RngStream(spec.seed, f"suite/{spec.family}/{spec.n}/{spec.m}/{spec.U}/{spec.W}")
    return [generate_instance(spec.family, spec.n, spec.m, spec.U, spec.W, root.child(str(i)))
            for i in range(spec.count)]
