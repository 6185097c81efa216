"""Exact reference solvers: successive shortest paths, brute force, dense electrical steps."""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .graph import FlowInstance


@dataclass
class OracleResult:
    flow: np.ndarray | None
    cost: int | None
    feasible: bool


def flow_cost(inst: FlowInstance, f: np.ndarray) -> int:
    return int(np.dot(inst.cost, np.asarray(f, dtype=np.int64)))


def is_feasible_integral(inst: FlowInstance, f: np.ndarray) -> bool:
    f = np.asarray(f)
    if not np.all(np.equal(np.mod(f, 1), 0)):
        return False
    f = f.astype(np.int64)
    if np.any(f < 0) or np.any(f > inst.cap):
        return False
    net = np.bincount(inst.tails, f, inst.n) - np.bincount(inst.heads, f, inst.n)
    return bool(np.array_equal(net.astype(np.int64), inst.demand))


def ssp_min_cost_flow(inst: FlowInstance) -> OracleResult:
    """Successive shortest paths with Dijkstra on reduced costs.

    Negative-cost arcs are saturated first so the residual graph starts with
    nonnegative costs and zero potentials are valid.
    """
    n, m = inst.n, inst.m
    tails, heads = inst.tails.tolist(), inst.heads.tolist()
    cap, cost = inst.cap.tolist(), inst.cost.tolist()
    flow = [cap[e] if cost[e] < 0 else 0 for e in range(m)]
    excess = inst.demand.astype(np.int64).tolist()  # supply still to send out
    for e in range(m):
        if flow[e]:
            excess[tails[e]] -= flow[e]
            excess[heads[e]] += flow[e]
    # residual arcs: 2e forward (tail->head), 2e+1 backward
    S, T = n, n + 1
    N = n + 2
    adj: list[list[int]] = [[] for _ in range(N)]
    to, rescap, rcost = [], [], []

    def add_arc(a, b, c_ab, cost_ab):
        adj[a].append(len(to))
        to.append(b)
        rescap.append(c_ab)
        rcost.append(cost_ab)
        adj[b].append(len(to))
        to.append(a)
        rescap.append(0)
        rcost.append(-cost_ab)

    for e in range(m):
        add_arc(tails[e], heads[e], cap[e], cost[e])
        # account for pre-saturated arcs
        a = 2 * e
        rescap[a] -= flow[e]
        rescap[a + 1] += flow[e]
    need = 0
    for v in range(n):
        if excess[v] > 0:
            add_arc(S, v, excess[v], 0)
            need += excess[v]
        elif excess[v] < 0:
            add_arc(v, T, -excess[v], 0)
    pot = [0] * N
    sent = 0
    INF = math.inf
    while sent < need:
        dist = [INF] * N
        prev = [-1] * N
        dist[S] = 0
        heap = [(0, S)]
        while heap:
            dv, v = heapq.heappop(heap)
            if dv > dist[v]:
                continue
            for a in adj[v]:
                if rescap[a] > 0:
                    w = to[a]
                    nd = dv + rcost[a] + pot[v] - pot[w]
                    if nd < dist[w]:
                        dist[w] = nd
                        prev[w] = a
                        heapq.heappush(heap, (nd, w))
        if dist[T] == INF:
            return OracleResult(None, None, False)
        for v in range(N):
            if dist[v] < INF:
                pot[v] += dist[v]
        push = need - sent
        v = T
        while v != S:
            a = prev[v]
            push = min(push, rescap[a])
            v = to[a ^ 1]
        v = T
        while v != S:
            a = prev[v]
            rescap[a] -= push
            rescap[a ^ 1] += push
            v = to[a ^ 1]
        sent += push
    f = np.array([rescap[2 * e + 1] for e in range(m)], dtype=np.int64)
    return OracleResult(f, flow_cost(inst, f), True)


BRUTE_FORCE_LIMIT = 2_000_000


def brute_force_min_cost_flow(inst: FlowInstance) -> OracleResult:
    """Enumerate every integral flow; only for tiny instances."""
    if inst.m > 8 or (inst.m and inst.cap.max() > 4):
        raise ValueError("brute force is limited to m <= 8 and capacities <= 4")
    total = int(np.prod(inst.cap + 1)) if inst.m else 1
    if total > BRUTE_FORCE_LIMIT:
        raise ValueError("too many candidate flows")
    if inst.m == 0:
        ok = not inst.demand.any()
        return OracleResult(np.zeros(0, dtype=np.int64), 0, True) if ok else OracleResult(None, None, False)
    grids = np.array(list(itertools.product(*[range(int(u) + 1) for u in inst.cap])), dtype=np.int64)
    Bt = np.zeros((inst.m, inst.n), dtype=np.int64)
    Bt[np.arange(inst.m), inst.tails] = 1
    Bt[np.arange(inst.m), inst.heads] = -1
    ok = np.all(grids @ Bt == inst.demand[None, :], axis=1)
    if not ok.any():
        return OracleResult(None, None, False)
    cand = grids[ok]
    costs = cand @ inst.cost
    i = int(np.argmin(costs))
    return OracleResult(cand[i].copy(), int(costs[i]), True)


def dense_laplacian_pinv(inst: FlowInstance, r: np.ndarray) -> np.ndarray:
    B = np.zeros((inst.m, inst.n))
    B[np.arange(inst.m), inst.tails] = 1.0
    B[np.arange(inst.m), inst.heads] = -1.0
    L = B.T @ (B / r[:, None])
    return np.linalg.pinv(L, hermitian=True)


def dense_electrical_step(inst: FlowInstance, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Step f~* = delta g - delta R^{-1} B L^+ B^T g and its congestion sqrt(r) f~*, via a dense pseudoinverse."""
    f = np.asarray(f, dtype=float)
    sp_, sm = inst.cap - f, f
    r = 1.0 / sp_**2 + 1.0 / sm**2
    g = (1.0 / sp_ - 1.0 / sm) / r
    delta = 1.0 / math.sqrt(inst.m)
    B = np.zeros((inst.m, inst.n))
    B[np.arange(inst.m), inst.tails] = 1.0
    B[np.arange(inst.m), inst.heads] = -1.0
    Lp = dense_laplacian_pinv(inst, r)
    step = delta * g - delta * (B @ (Lp @ (B.T @ g))) / r
    return step, np.sqrt(r) * step


def cycle_basis_matrix(inst: FlowInstance) -> np.ndarray:
    """Columns span the circulations (kernel of B^T)."""
    B = np.zeros((inst.m, inst.n))
    B[np.arange(inst.m), inst.tails] = 1.0
    B[np.arange(inst.m), inst.heads] = -1.0
    u, s, vt = np.linalg.svd(B.T)
    rank = int((s > 1e-10 * s.max()).sum()) if s.size else 0
    return vt[rank:].T


def circulation_residual_dense(inst: FlowInstance, f: np.ndarray, mu: float) -> float:
    """||C^T h||_{(C^T R C)^+} with an explicit circulation basis C."""
    f = np.asarray(f, dtype=float)
    sp_, sm = inst.cap - f, f
    r = 1.0 / sp_**2 + 1.0 / sm**2
    h = inst.cost / mu + 1.0 / sp_ - 1.0 / sm
    Cb = cycle_basis_matrix(inst)
    if Cb.shape[1] == 0:
        return 0.0
    y = Cb.T @ h
    M = Cb.T @ (Cb * r[:, None])
    return float(math.sqrt(max(0.0, y @ np.linalg.pinv(M, hermitian=True) @ y)))


def find_negative_cycle(inst: FlowInstance, f: np.ndarray) -> list[tuple[int, int]] | None:
    """Bellman-Ford on the residual graph of an integral flow.

    Returns a negative-cost residual cycle as (edge, direction) pairs, where
    direction +1 means pushing along the edge and -1 against it, or None.
    """
    f = np.asarray(f, dtype=np.int64)
    e = np.arange(inst.m)
    fwd = f < inst.cap
    bwd = f > 0
    src = np.concatenate([inst.tails[fwd], inst.heads[bwd]])
    dst = np.concatenate([inst.heads[fwd], inst.tails[bwd]])
    c = np.concatenate([inst.cost[fwd], -inst.cost[bwd]]).astype(np.int64)
    arc_edge = np.concatenate([e[fwd], e[bwd]])
    arc_dir = np.concatenate([np.ones(fwd.sum(), dtype=np.int64), -np.ones(bwd.sum(), dtype=np.int64)])
    n = inst.n
    dist = np.zeros(n, dtype=np.int64)
    pred = np.full(n, -1, dtype=np.int64)
    last = -1
    for it in range(n):
        cand = dist[src] + c
        better = cand < dist[dst]
        if not better.any():
            return None
        idx = np.flatnonzero(better)
        # best candidate per target vertex
        order = np.lexsort((cand[idx], dst[idx]))
        idx = idx[order]
        first = np.ones(idx.size, dtype=bool)
        first[1:] = dst[idx][1:] != dst[idx][:-1]
        idx = idx[first]
        dist[dst[idx]] = cand[idx]
        pred[dst[idx]] = idx
        last = int(dst[idx[0]])
    # a relaxation in round n means a negative cycle reachable through pred
    v = last
    for _ in range(n):
        v = int(src[pred[v]])
    cycle = []
    start = v
    while True:
        a = int(pred[v])
        cycle.append((int(arc_edge[a]), int(arc_dir[a])))
        v = int(src[a])
        if v == start:
            break
    cycle.reverse()
    return cycle
