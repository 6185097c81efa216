"""Weighted random walks, hitting probabilities, congestion-reduction subsets and walk pools.

A walk at vertex x moves along an incident edge e with probability
proportional to 1/r_e and stops at its first visit to the terminal set C.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ResourceError, WalkCapExceeded
from .graph import FlowInstance, as_generator

STEP_CAP = 10**7
POOL_ENTRY_LIMIT = 10**8


class TransitionTable:
    """Cumulative transition probabilities laid out so one searchsorted serves every walker.

    Neighbor slots of vertex x carry keys in (x, x + 1]; a uniform U in [0, 1)
    then picks the first slot whose key exceeds x + U.
    """

    def __init__(self, n: int, tails: np.ndarray, heads: np.ndarray, r: np.ndarray):
        self.n = n
        src = np.concatenate([tails, heads])
        dst = np.concatenate([heads, tails])
        eid = np.concatenate([np.arange(len(tails)), np.arange(len(tails))])
        w = np.concatenate([1.0 / r, 1.0 / r])
        order = np.argsort(src, kind="stable")
        self.src, self.dst, self.eid = src[order], dst[order], eid[order]
        w = w[order]
        self.deg = np.bincount(self.src, minlength=n)
        self.start = np.concatenate([[0], np.cumsum(self.deg)])
        tot = np.bincount(self.src, w, n)
        csum = np.cumsum(w)
        base = np.concatenate([[0.0], csum])[self.start[:-1]]
        within = (csum - base[self.src]) / tot[self.src]
        last = self.start[1:] - 1
        within[last[self.deg > 0]] = 1.0
        self.keys = self.src + within

    def step(self, cur: np.ndarray, U: np.ndarray) -> np.ndarray:
        slot = np.searchsorted(self.keys, cur + U, side="right")
        return self.dst[slot]


def _membership(n: int, C) -> np.ndarray:
    if isinstance(C, np.ndarray) and C.dtype == bool:
        return C
    mask = np.zeros(n, dtype=bool)
    mask[np.asarray(list(C) if not isinstance(C, np.ndarray) else C, dtype=np.int64)] = True
    return mask


def _transition_matrix(table: TransitionTable) -> np.ndarray:
    P = np.zeros((table.n, table.n))
    prob = np.diff(np.concatenate([[0.0], table.keys - table.src]))
    prob[table.start[:-1][table.deg > 0]] = (table.keys - table.src)[table.start[:-1][table.deg > 0]]
    np.add.at(P, (table.src, table.dst), prob)
    return P


def _finish_by_exits(P: np.ndarray, x: int, visited: np.ndarray, inC: np.ndarray,
                     gen: np.random.Generator) -> list[int]:
    """Remaining first visits of a walk at x, skipping returns to already visited vertices.

    The next new vertex is drawn from the exact exit distribution of the walk
    from its visited set, so the order of first visits and the end vertex
    have the same law as in the step-by-step walk.
    """
    out = []
    S = visited.copy()
    while True:
        idx = np.flatnonzero(S)
        rest = np.flatnonzero(~S)
        A = np.eye(idx.size) - P[np.ix_(idx, idx)]
        i = int(np.searchsorted(idx, x))
        rhs = P[np.ix_(idx, rest)]
        try:
            X = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError:
            raise WalkCapExceeded("walk cannot leave its visited set") from None
        p = np.clip(X[i], 0.0, None)
        tot = p.sum()
        if not tot > 1e-12:
            raise WalkCapExceeded("walk cannot reach the terminal set")
        cdf = np.cumsum(p / tot)
        j = min(int(np.searchsorted(cdf, gen.random(), side="right")), rest.size - 1)
        x = int(rest[j])
        out.append(x)
        if inC[x]:
            return out
        S[x] = True


def step_budget(n: int) -> int:
    """Steps simulated one by one before a walk switches to exit sampling."""
    return 64 + 8 * n


def simulate_walks(table: TransitionTable, starts: np.ndarray, inC: np.ndarray, gen: np.random.Generator,
                   record: bool = True, cap: int = STEP_CAP, max_entries: int | None = None):
    """Run independent walks from each start until they hit inC.

    With record=True returns (flat vertex array, offsets) so that walk i is
    flat[offsets[i]:offsets[i+1]]; otherwise returns the end vertices. Walks
    still running after step_budget(n) steps continue by exit sampling, which
    records only their further first visits.
    """
    starts = np.asarray(starts, dtype=np.int64)
    cur = starts.copy()
    ids = np.flatnonzero(~inC[cur])
    if ids.size and np.any(table.deg[cur[ids]] == 0):
        raise WalkCapExceeded("walk starts at an isolated vertex")
    rec_ids, rec_v = ([np.arange(starts.size)], [starts.copy()]) if record else (None, None)
    rec_pos = [np.zeros(starts.size, dtype=np.int64)] if record else None
    entries = starts.size
    steps = 0
    budget = min(cap, step_budget(table.n))
    while ids.size and steps < budget:
        nxt = table.step(cur[ids], gen.random(ids.size))
        cur[ids] = nxt
        if record:
            rec_ids.append(ids)
            rec_v.append(nxt)
            rec_pos.append(np.full(ids.size, steps + 1, dtype=np.int64))
            entries += ids.size
            if max_entries is not None and entries > max_entries:
                raise ResourceError("walk storage budget exceeded", entries, max_entries)
        ids = ids[~inC[nxt]]
        steps += 1
    if ids.size:
        if steps >= cap:
            raise WalkCapExceeded(f"{ids.size} walks exceeded {cap} steps without reaching the terminal set")
        P = _transition_matrix(table)
        # vertices each remaining walk has visited so far
        seen = np.zeros((ids.size, table.n), dtype=bool)
        slot = np.full(starts.size, -1, dtype=np.int64)
        slot[ids] = np.arange(ids.size)
        seen[np.arange(ids.size), starts[ids]] = True
        if record:
            for a, v in zip(rec_ids[1:], rec_v[1:]):
                sl = slot[a]
                ok = sl >= 0
                seen[sl[ok], v[ok]] = True
        for j, w in enumerate(ids.tolist()):
            if record:
                visited = seen[j]
            else:
                # only the end vertex is needed, so any visited set containing cur works
                visited = np.zeros(table.n, dtype=bool)
                visited[cur[w]] = True
            tail = _finish_by_exits(P, int(cur[w]), visited & ~inC, inC, gen)
            cur[w] = tail[-1]
            if record:
                rec_ids.append(np.full(len(tail), w, dtype=np.int64))
                rec_v.append(np.array(tail, dtype=np.int64))
                rec_pos.append(steps + 1 + np.arange(len(tail), dtype=np.int64))
                entries += len(tail)
    if not record:
        return cur
    all_ids = np.concatenate(rec_ids)
    all_v = np.concatenate(rec_v)
    # every record knows its position in its walk, so scatter instead of sorting
    offsets = np.concatenate([[0], np.cumsum(np.bincount(all_ids, minlength=starts.size))])
    flat = np.empty(all_v.size, dtype=np.int32)
    flat[offsets[all_ids] + np.concatenate(rec_pos)] = all_v
    return flat, offsets


def sample_walk(inst: FlowInstance, u: int, C, r: np.ndarray, rng, cap: int = STEP_CAP) -> list[int]:
    """One walk from u to its first vertex in C."""
    inC = _membership(inst.n, C)
    if inC[u]:
        return [int(u)]
    table = TransitionTable(inst.n, inst.tails, inst.heads, np.asarray(r, dtype=float))
    gen = as_generator(rng)
    flat, off = simulate_walks(table, np.array([u]), inC, gen, cap=cap)
    return flat.tolist()


def hitting_probabilities_exact(inst: FlowInstance, C, r: np.ndarray, u: int) -> np.ndarray:
    """p_v(u) for v in C: probability the walk from u first enters C at v. Zero off C."""
    from .linalg import laplacian_dense

    n = inst.n
    inC = _membership(n, C)
    if not inC.any():
        raise ValueError("terminal set must be nonempty")
    out = np.zeros(n)
    if inC[u]:
        out[u] = 1.0
        return out
    L = laplacian_dense(n, inst.tails, inst.heads, 1.0 / np.asarray(r, dtype=float))
    F = np.flatnonzero(~inC)
    Cv = np.flatnonzero(inC)
    e = np.zeros(F.size)
    e[np.searchsorted(F, u)] = 1.0
    x = np.linalg.solve(L[np.ix_(F, F)], e)
    out[Cv] = -L[np.ix_(Cv, F)] @ x
    return out


# ------------------------------------------------- congestion reduction subsets


@dataclass
class CongestionReductionSubset:
    """Terminal set C with the random edges and correction vertices that produced it."""

    C: np.ndarray
    beta: float
    sampled_edges: np.ndarray
    corrections: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def mask(self, n: int) -> np.ndarray:
        return _membership(n, self.C)

    def __len__(self) -> int:
        return int(self.C.size)


def visit_threshold(n: int, beta: float, const: float = 1.0) -> float:
    """Allowed number of walks visiting one outside vertex: const * beta^-2 * log2(n)^3."""
    return const * beta**-2 * max(1.0, math.log2(max(n, 2))) ** 3


def _visit_counts(table: TransitionTable, inst: FlowInstance, inC: np.ndarray, gen, cap: int) -> np.ndarray:
    """Number of walks (deg(u) from each outside u) visiting each vertex before C."""
    outside = np.flatnonzero(~inC)
    starts = np.repeat(outside, table.deg[outside])
    counts = np.zeros(inst.n)
    if starts.size == 0:
        return counts
    flat, off = simulate_walks(table, starts, inC, gen, cap=cap)
    walk_id = np.repeat(np.arange(starts.size), np.diff(off))
    keep = ~inC[flat]
    pairs = np.unique(walk_id[keep].astype(np.int64) * inst.n + flat[keep])
    np.add.at(counts, pairs % inst.n, 1.0)
    return counts


def build_congestion_reduction_subset(inst: FlowInstance, r: np.ndarray, beta: float, rng,
                                      const: float = 1.0, max_rounds: int = 20,
                                      cap: int = STEP_CAP) -> CongestionReductionSubset:
    """Endpoints of ceil(beta m) uniform edges plus vertices that absorb too many walks."""
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    gen = as_generator(rng)
    m = inst.m
    k = min(m, int(math.ceil(beta * m)))
    sampled = np.sort(gen.choice(m, size=k, replace=False)) if k else np.zeros(0, dtype=np.int64)
    inC = np.zeros(inst.n, dtype=bool)
    inC[inst.tails[sampled]] = True
    inC[inst.heads[sampled]] = True
    if not inC.any():
        inC[0] = True
    corrections = []
    table = TransitionTable(inst.n, inst.tails, inst.heads, np.asarray(r, dtype=float))
    limit = visit_threshold(inst.n, beta, const)
    for _ in range(max_rounds):
        if inC.all():
            break
        counts = _visit_counts(table, inst, inC, gen, cap)
        over = np.flatnonzero(counts > limit)
        if over.size == 0:
            break
        worst = over[np.argsort(-counts[over], kind="stable")][: max(1, over.size // 2)]
        inC[worst] = True
        corrections.extend(worst.tolist())
    return CongestionReductionSubset(np.flatnonzero(inC), beta, sampled, np.array(sorted(corrections), dtype=np.int64))


@dataclass
class CongestionReport:
    size: int
    size_limit: float
    size_ok: bool
    distinct_limit: int
    hitting_failures: int
    hitting_trials: int
    hitting_ok: bool
    max_visits: float
    visit_limit: float
    visits_ok: bool

    @property
    def ok(self) -> bool:
        return self.size_ok and self.hitting_ok and self.visits_ok


def check_congestion_reduction(inst: FlowInstance, C, r: np.ndarray, beta: float = 0.5, budget: int = 4,
                               rng=0, size_const: float = 2.0, hit_const: float = 4.0,
                               visit_const: float = 1.0) -> CongestionReport:
    """Monte Carlo report on the three defining properties of a congestion-reduction subset.

    size: |C| <= size_const * beta * m (plus the rounding of ceil).
    hitting: walks from every vertex that have visited hit_const * log(n)/beta
    distinct vertices have already hit C (budget walks per vertex).
    visits: deg(u) walks from every outside u visit any fixed outside vertex
    at most visit_threshold(n, beta, visit_const) times in total.
    """
    gen = as_generator(rng)
    n, m = inst.n, inst.m
    inC = _membership(n, C)
    size = int(inC.sum())
    size_limit = size_const * math.ceil(beta * m)
    table = TransitionTable(n, inst.tails, inst.heads, np.asarray(r, dtype=float))
    distinct_limit = int(math.ceil(hit_const * math.log(max(n, 2)) / beta))
    step_budget = 50 * distinct_limit + 10 * n
    starts = np.repeat(np.arange(n), budget)
    cur = starts.copy()
    seen = np.zeros((starts.size, n), dtype=bool)
    seen[np.arange(starts.size), cur] = True
    nseen = np.ones(starts.size, dtype=np.int64)
    done = inC[cur].copy()
    failed = np.zeros(starts.size, dtype=bool)
    for _ in range(step_budget):
        act = np.flatnonzero(~done & ~failed)
        if act.size == 0:
            break
        nxt = table.step(cur[act], gen.random(act.size))
        cur[act] = nxt
        fresh = ~seen[act, nxt]
        seen[act, nxt] = True
        nseen[act] += fresh
        done[act] |= inC[nxt]
        failed[act] |= (~inC[nxt]) & (nseen[act] >= distinct_limit)
    failed |= ~done
    visits = _visit_counts(table, inst, inC, gen, STEP_CAP) if inC.any() and not inC.all() else np.zeros(n)
    visit_limit = visit_threshold(n, beta, visit_const)
    return CongestionReport(
        size, size_limit, size <= size_limit, distinct_limit, int(failed.sum()), int(starts.size),
        not failed.any(), float(visits.max(initial=0.0)), visit_limit, bool(visits.max(initial=0.0) <= visit_limit),
    )


# ------------------------------------------------------------ walk pool


class WalkPool:
    """h stored walks for every pair (u, e) with u an endpoint of e and u outside C.

    Walks live in one flat vertex array; ``lengths`` is the only mutable part,
    so shortcutting a walk at v just shrinks its length to the first occurrence
    of v. The per-vertex index lists (walk, first position) for every vertex a
    walk touches.
    """

    def __init__(self, n: int, h: int, pair_vertex: np.ndarray, pair_edge: np.ndarray, pair_sign: np.ndarray,
                 walk_pair: np.ndarray, flat: np.ndarray, offsets: np.ndarray):
        self.n = n
        self.h = h
        self.pair_vertex = pair_vertex
        self.pair_edge = pair_edge
        self.pair_sign = pair_sign
        self.walk_pair = walk_pair
        self.flat = flat
        self.offsets = offsets
        self.lengths = np.diff(offsets).astype(np.int64)
        self._build_index()

    def _build_index(self) -> None:
        nwalks = self.offsets.size - 1
        walk_id = np.repeat(np.arange(nwalks, dtype=np.int64), np.diff(self.offsets))
        pos = np.arange(self.flat.size, dtype=np.int64) - self.offsets[walk_id]
        key = walk_id * self.n + self.flat
        # first occurrence of each vertex in each walk; entries are already in
        # position order, so a stable sort on the key keeps earlier positions first
        order = np.argsort(key, kind="stable")
        sk = key[order]
        first = np.ones(order.size, dtype=bool)
        first[1:] = sk[1:] != sk[:-1]
        sel = order[first]
        verts = self.flat[sel].astype(np.int64)
        small = verts.astype(np.int16) if self.n < 2**15 else verts  # radix sort for small ids
        by_vertex = np.argsort(small, kind="stable")
        sel = sel[by_vertex]
        self.index_walk = walk_id[sel]
        self.index_pos = pos[sel]
        self.index_start = np.concatenate([[0], np.cumsum(np.bincount(verts, minlength=self.n))])

    @property
    def walk_count(self) -> int:
        return self.offsets.size - 1

    def occurrences(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.index_start[v], self.index_start[v + 1]
        return self.index_walk[a:b], self.index_pos[a:b]

    def walk(self, i: int, lengths: np.ndarray | None = None) -> np.ndarray:
        lens = self.lengths if lengths is None else lengths
        return self.flat[self.offsets[i]: self.offsets[i] + lens[i]]

    def containing(self, v: int, lengths: np.ndarray | None = None) -> np.ndarray:
        """Ids of walks that currently visit v."""
        lens = self.lengths if lengths is None else lengths
        w, p = self.occurrences(v)
        return w[p < lens[w]]

    def shortcut(self, v: int, lengths: np.ndarray | None = None) -> np.ndarray:
        """Truncate every walk at its first visit of v. Returns the ids of walks that changed."""
        lens = self.lengths if lengths is None else lengths
        w, p = self.occurrences(v)
        hit = p + 1 < lens[w]
        lens[w[hit]] = p[hit] + 1
        return w[hit]

    def endpoints(self, lengths: np.ndarray | None = None) -> np.ndarray:
        lens = self.lengths if lengths is None else lengths
        return self.flat[self.offsets[:-1] + lens - 1]

    # ---- spill to disk: magic, then for each array a uint64 byte length,
    # a one-byte dtype code and the raw little-endian bytes.

    _MAGIC = b"EFWPOOL1"
    _CODES = {b"q": np.int64, b"i": np.int32, b"b": np.int8}

    def save(self, path) -> None:
        arrays = [
            (b"q", np.array([self.n, self.h], dtype=np.int64)),
            (b"q", self.pair_vertex.astype(np.int64)),
            (b"q", self.pair_edge.astype(np.int64)),
            (b"b", self.pair_sign.astype(np.int8)),
            (b"q", self.walk_pair.astype(np.int64)),
            (b"i", self.flat.astype(np.int32)),
            (b"q", self.offsets.astype(np.int64)),
            (b"q", self.lengths.astype(np.int64)),
        ]
        with open(path, "wb") as fh:
            fh.write(self._MAGIC)
            for code, arr in arrays:
                raw = arr.astype(arr.dtype.newbyteorder("<")).tobytes()
                fh.write(struct.pack("<Q", len(raw)))
                fh.write(code)
                fh.write(raw)

    @classmethod
    def load(cls, path) -> "WalkPool":
        data = Path(path).read_bytes()
        if not data.startswith(cls._MAGIC):
            raise ValueError("not a walk pool file")
        pos = len(cls._MAGIC)
        arrays = []
        while pos < len(data):
            (size,) = struct.unpack_from("<Q", data, pos)
            code = data[pos + 8: pos + 9]
            pos += 9
            dtype = np.dtype(cls._CODES[code]).newbyteorder("<")
            arrays.append(np.frombuffer(data[pos: pos + size], dtype=dtype).astype(cls._CODES[code]))
            pos += size
        header, pv, pe, ps, wp, flat, off, lens = arrays
        pool = cls(int(header[0]), int(header[1]), pv, pe, ps, wp, flat, off)
        pool.lengths = lens.copy()
        return pool


def pool_pairs(inst: FlowInstance, inC: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All (u, e, sign) with u an endpoint of e outside C; sign is +1 when u is the tail."""
    e = np.arange(inst.m)
    tail_out = ~inC[inst.tails]
    head_out = ~inC[inst.heads]
    pv = np.concatenate([inst.tails[tail_out], inst.heads[head_out]])
    pe = np.concatenate([e[tail_out], e[head_out]])
    ps = np.concatenate([np.ones(tail_out.sum(), dtype=np.int8), -np.ones(head_out.sum(), dtype=np.int8)])
    order = np.lexsort((pv, pe))
    return pv[order], pe[order], ps[order]


def build_walk_pool(inst: FlowInstance, C, r: np.ndarray, h: int, rng, table: TransitionTable | None = None,
                    max_entries: int = POOL_ENTRY_LIMIT, cap: int = STEP_CAP) -> WalkPool:
    """Simulate h independent walks to C for every (u, e) pair with u outside C."""
    inC = _membership(inst.n, C)
    gen = as_generator(rng)
    if table is None:
        table = TransitionTable(inst.n, inst.tails, inst.heads, np.asarray(r, dtype=float))
    pv, pe, ps = pool_pairs(inst, inC)
    walk_pair = np.repeat(np.arange(pv.size, dtype=np.int64), h)
    starts = pv[walk_pair]
    if starts.size:
        flat, offsets = simulate_walks(table, starts, inC, gen, cap=cap, max_entries=max_entries)
    else:
        flat, offsets = np.zeros(0, dtype=np.int32), np.zeros(1, dtype=np.int64)
    return WalkPool(inst.n, h, pv, pe, ps, walk_pair, flat, offsets)
