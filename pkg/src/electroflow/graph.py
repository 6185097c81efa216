"""Flow instances, incidence operators, DIMACS I/O and seeded random streams.

Sign convention: for an edge e = (tail, head), (B phi)_e = phi_tail - phi_head.
Consequently (B^T g)_v = sum of g over edges leaving v minus sum over edges
entering v, and a flow f routes demand d when B^T f = d (d_v > 0 is a supply).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, ParseError


@dataclass(frozen=True)
class FlowInstance:
    """Directed graph with integer costs, capacities and vertex demands."""

    n: int
    tails: np.ndarray
    heads: np.ndarray
    cost: np.ndarray
    cap: np.ndarray
    demand: np.ndarray
    names: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        tails = np.ascontiguousarray(self.tails, dtype=np.int64)
        heads = np.ascontiguousarray(self.heads, dtype=np.int64)
        cost = np.ascontiguousarray(self.cost, dtype=np.int64)
        cap = np.ascontiguousarray(self.cap, dtype=np.int64)
        demand = np.ascontiguousarray(self.demand, dtype=np.int64)
        m = tails.shape[0]
        if heads.shape != (m,) or cost.shape != (m,) or cap.shape != (m,):
            raise DimensionError("edge arrays must share one length")
        if demand.shape != (self.n,):
            raise DimensionError(f"demand has length {demand.shape[0]}, expected {self.n}")
        if m and (tails.min() < 0 or heads.min() < 0 or max(tails.max(), heads.max()) >= self.n):
            raise DimensionError("edge endpoint out of range")
        if m and np.any(tails == heads):
            raise ValueError("self loops are not supported")
        for arr in (tails, heads, cost, cap, demand):
            arr.setflags(write=False)
        object.__setattr__(self, "tails", tails)
        object.__setattr__(self, "heads", heads)
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "cap", cap)
        object.__setattr__(self, "demand", demand)

    @property
    def m(self) -> int:
        return int(self.tails.shape[0])

    @property
    def edges(self) -> list[tuple[int, int]]:
        return list(zip(self.tails.tolist(), self.heads.tolist()))

    @property
    def max_cap(self) -> int:
        return int(self.cap.max()) if self.m else 1

    @property
    def max_cost(self) -> int:
        return int(np.abs(self.cost).max()) if self.m else 0

    def validate(self) -> None:
        """Check the integrality and balance invariants."""
        if int(self.demand.sum()) != 0:
            raise ValueError("demands must sum to zero")
        if self.m and self.cap.min() < 1:
            raise ValueError("capacities must be at least 1")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FlowInstance):
            return NotImplemented
        return self.n == other.n and all(
            np.array_equal(a, b)
            for a, b in zip(
                (self.tails, self.heads, self.cost, self.cap, self.demand),
                (other.tails, other.heads, other.cost, other.cap, other.demand),
            )
        )

    def __hash__(self) -> int:
        return hash((self.n, self.tails.tobytes(), self.heads.tobytes(), self.cost.tobytes()))


def make_instance(n: int, edges, cost, cap, demand) -> FlowInstance:
    """Convenience constructor from Python sequences."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    return FlowInstance(n, edges[:, 0], edges[:, 1], np.asarray(cost), np.asarray(cap), np.asarray(demand))


def incidence_apply(inst: FlowInstance, phi: np.ndarray) -> np.ndarray:
    """Return B phi, the potential difference across every edge."""
    phi = np.asarray(phi)
    if phi.shape[0] != inst.n:
        raise DimensionError(f"potential has length {phi.shape[0]}, expected n={inst.n}")
    return phi[inst.tails] - phi[inst.heads]


def incidence_transpose_apply(inst: FlowInstance, g: np.ndarray) -> np.ndarray:
    """Return B^T g, the net outflow at every vertex."""
    g = np.asarray(g, dtype=float)
    if g.shape[0] != inst.m:
        raise DimensionError(f"edge vector has length {g.shape[0]}, expected m={inst.m}")
    return np.bincount(inst.tails, g, inst.n) - np.bincount(inst.heads, g, inst.n)


def incidence_matrix(inst: FlowInstance):
    """Sparse m x n incidence matrix B in CSR form."""
    import scipy.sparse as sp

    m = inst.m
    rows = np.repeat(np.arange(m), 2)
    cols = np.column_stack([inst.tails, inst.heads]).ravel()
    vals = np.tile([1.0, -1.0], m)
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, inst.n))


def is_connected(n: int, tails: np.ndarray, heads: np.ndarray) -> bool:
    """Whether the undirected graph on n vertices is connected."""
    return n <= 1 or components(n, tails, heads)[0] == 1


def components(n: int, tails: np.ndarray, heads: np.ndarray) -> tuple[int, np.ndarray]:
    """Connected component count and labels of the underlying undirected graph."""
    import scipy.sparse as sp
    from scipy.sparse.csgraph import connected_components

    adj = sp.coo_matrix((np.ones(len(tails)), (tails, heads)), shape=(n, n))
    return connected_components(adj, directed=False)


# ---------------------------------------------------------------- randomness


@dataclass(frozen=True)
class RngStream:
    """Named, reproducible random stream derived from a 64-bit seed.

    Streams are keyed by (seed, label), so two components asking for
    different labels never share draws, and adding a new consumer never
    perturbs existing ones.
    """

    seed: int
    label: str = "root"

    def child(self, label: str) -> "RngStream":
        return RngStream(self.seed, f"{self.label}/{label}")

    def generator(self) -> np.random.Generator:
        digest = hashlib.blake2b(f"{self.seed}:{self.label}".encode(), digest_size=16).digest()
        key = np.frombuffer(digest, dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def as_generator(rng) -> np.random.Generator:
    """Accept an RngStream, a Generator or an int seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if rng is None:
        return RngStream(0).generator()
    return RngStream(int(rng)).generator()


# ---------------------------------------------------------------- DIMACS I/O


def parse_dimacs(text: str) -> FlowInstance:
    """Parse DIMACS min-cost-flow text. Node ids are 1-based in the file."""
    n = m = None
    supplies: dict[int, int] = {}
    arcs: list[tuple[int, int, int, int]] = []
    arc_lines: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        parts = line.split()
        tag = parts[0]
        try:
            if tag == "p":
                if n is not None:
                    raise ParseError("duplicate problem line", lineno)
                if len(parts) != 4 or parts[1] != "min":
                    raise ParseError("expected 'p min N M'", lineno)
                n, m = int(parts[2]), int(parts[3])
                if n < 0 or m < 0:
                    raise ParseError("negative size in problem line", lineno)
            elif tag == "n":
                if n is None:
                    raise ParseError("node line before problem line", lineno)
                if len(parts) != 3:
                    raise ParseError("expected 'n id supply'", lineno)
                vid, supply = int(parts[1]), int(parts[2])
                if not 1 <= vid <= n:
                    raise ParseError(f"dangling node id {vid}", lineno)
                if vid in supplies:
                    raise ParseError(f"duplicate node line for {vid}", lineno)
                supplies[vid] = supply
            elif tag == "a":
                if n is None:
                    raise ParseError("arc line before problem line", lineno)
                if len(parts) != 6:
                    raise ParseError("expected 'a u v low cap cost'", lineno)
                a, b, low, cap, cost = (int(x) for x in parts[1:])
                for vid in (a, b):
                    if not 1 <= vid <= n:
                        raise ParseError(f"dangling node id {vid}", lineno)
                if low != 0:
                    raise ParseError(f"nonzero lower bound {low} is not supported", lineno)
                if cap < 1:
                    raise ParseError(f"capacity {cap} must be at least 1", lineno)
                if a == b:
                    raise ParseError("self loop", lineno)
                arcs.append((a - 1, b - 1, cap, cost))
                arc_lines.append(lineno)
            else:
                raise ParseError(f"unknown line type {tag!r}", lineno)
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"malformed number in {line!r}", lineno) from exc
    if n is None:
        raise ParseError("missing problem line")
    if len(arcs) != m:
        raise ParseError(f"problem line declares {m} arcs, found {len(arcs)}")
    demand = np.zeros(n, dtype=np.int64)
    for vid, supply in supplies.items():
        demand[vid - 1] = supply
    if int(demand.sum()) != 0:
        raise ParseError("supplies do not sum to zero")
    arr = np.array(arcs, dtype=np.int64).reshape(-1, 4)
    return FlowInstance(n, arr[:, 0], arr[:, 1], arr[:, 3], arr[:, 2], demand)


def read_dimacs(path) -> FlowInstance:
    return parse_dimacs(Path(path).read_text())


def format_dimacs(inst: FlowInstance) -> str:
    lines = [f"p min {inst.n} {inst.m}"]
    for v in np.flatnonzero(inst.demand):
        lines.append(f"n {v + 1} {int(inst.demand[v])}")
    for t, h, u, c in zip(inst.tails, inst.heads, inst.cap, inst.cost):
        lines.append(f"a {t + 1} {h + 1} 0 {u} {c}")
    return "\n".join(lines) + "\n"


def write_dimacs(path, inst: FlowInstance) -> None:
    Path(path).write_text(format_dimacs(inst))


def format_flow(inst: FlowInstance, f: np.ndarray) -> str:
    f = np.asarray(f)
    lines = [f"f {t + 1} {h + 1} {int(x)}" for t, h, x in zip(inst.tails, inst.heads, f)]
    lines.append(f"s {int(np.dot(inst.cost, f.astype(np.int64)))}")
    return "\n".join(lines) + "\n"


def write_flow(path, inst: FlowInstance, f: np.ndarray) -> None:
    """Write one 'f u v value' line per arc and a final 's cost' line."""
    Path(path).write_text(format_flow(inst, f))


def parse_flow(text: str) -> tuple[np.ndarray, int]:
    values, cost = [], None
    for line in text.splitlines():
        parts = line.split()
        if parts and parts[0] == "f":
            values.append(int(parts[3]))
        elif parts and parts[0] == "s":
            cost = int(parts[1])
    return np.array(values, dtype=np.int64), cost
