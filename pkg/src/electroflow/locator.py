"""Locator: finds the edges that the next electrical step congests, using only local work per update.

The step congestion is rho = delta sqrt(r) g(s) - delta R^{-1/2} B L^+ B^T g(s)
with delta = 1/sqrt(m). The locator measures rho through a heavy-hitter sketch:
each sketch row q has a demand projection pi(q) maintained by walk estimates,
and <q, R^{-1/2} B L^+ pi_old> = <pi(q), SC^+ pi_old> where pi_old is a snapshot
of the projected step demand refreshed by batch updates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceeded, ContractViolation
from .graph import FlowInstance, RngStream, incidence_transpose_apply
from .linalg import sketch_resistance_to_set
from .projection import ProjectorConfig, SketchProjector, fresh_walk_count, pool_walk_count
from .schur import SchurState
from .sketch import make_sketch, recover_signal
from .walks import TransitionTable, build_congestion_reduction_subset, build_walk_pool


def slacks(inst: FlowInstance, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    f = np.asarray(f, dtype=float)
    return inst.cap - f, f


def resistances(s_plus: np.ndarray, s_minus: np.ndarray) -> np.ndarray:
    return 1.0 / (s_plus * s_plus) + 1.0 / (s_minus * s_minus)


def g_from_slacks(s_plus: np.ndarray, s_minus: np.ndarray) -> np.ndarray:
    return (1.0 / s_plus - 1.0 / s_minus) / resistances(s_plus, s_minus)


def important_edges(inst: FlowInstance, r: np.ndarray, gamma: float, resist_estimates: np.ndarray) -> np.ndarray:
    """Mask of edges with min(R~(C,u), R~(C,w)) <= r_e / gamma^2.

    With vertex estimates within a factor 2 the edge estimate is within a
    factor 4 of R_eff(C, e), and the mask lies between the 2 gamma-important
    and the gamma/2-important edges. Edges inside C always qualify.
    """
    Re = np.minimum(resist_estimates[inst.tails], resist_estimates[inst.heads])
    return Re * gamma * gamma <= r


@dataclass
class LocatorParams:
    alpha: float = 16.0
    beta: float = 0.3
    eps: float = 0.01
    eps_hat: float | None = None  # default eps / (8 sqrt(alpha))
    gamma: float | None = None  # default eps / (4 alpha)
    h_max: int = 32
    h_fresh_max: int = 64
    walk_const: float = 1.0
    kappa: float = 1.0
    cong_const: float = 1.0
    resist_eps: float = 0.5
    resist_method: str = "sketch"
    include_local: bool = True
    size_const: float = 64.0
    rep_const: float = 4.0
    bucket_const: float = 16.0
    touch_budget: float = 4.0  # distinct touched edges allowed, in units of ceil(beta m)
    extra_terminals: tuple = field(default_factory=tuple)

    @property
    def eps_hat_value(self) -> float:
        return self.eps_hat if self.eps_hat is not None else self.eps / (8.0 * math.sqrt(self.alpha))

    @property
    def gamma_value(self) -> float:
        return self.gamma if self.gamma is not None else self.eps / (4.0 * self.alpha)

    @property
    def insert_budget(self) -> int:
        """AddTerminal calls tolerated before the projections are refreshed exactly."""
        return max(1, int(math.floor(self.eps / (self.eps_hat_value * math.sqrt(self.alpha)))))


class Locator:
    """Maintains C, the important edges, the sketch-row projections and pi_old."""

    def __init__(self, inst: FlowInstance, f: np.ndarray, params: LocatorParams, rng: RngStream):
        self.inst = inst
        self.p = params
        self.rng = rng
        self.delta = 1.0 / math.sqrt(inst.m)
        self.counters = {"solve": 0, "update": 0, "batch_update": 0, "add_terminal": 0, "initialize": 0}
        self.initialize(f)

    # ---------------------------------------------------------------- setup

    def initialize(self, f: np.ndarray) -> None:
        inst, p = self.inst, self.p
        sp_, sm = slacks(inst, f)
        if np.any(sp_ <= 0) or np.any(sm <= 0):
            raise ContractViolation("flow must lie strictly inside its capacities")
        self.counters["initialize"] += 1
        epoch = self.counters["initialize"]
        rng = self.rng.child(f"init{epoch}")
        self.s_plus, self.s_minus = sp_.copy(), sm.copy()
        self.r = resistances(sp_, sm)
        subset = build_congestion_reduction_subset(inst, self.r, p.beta, rng.child("subset"), const=p.cong_const)
        C = np.union1d(subset.C, np.asarray(p.extra_terminals, dtype=np.int64))
        self.subset = subset
        self.schur = SchurState(inst, C, self.r, beta=p.beta, record=False)
        self.sketch = make_sketch(inst.m, p.eps, rng.child("sketch"), p.rep_const, p.bucket_const)
        eh, ga = p.eps_hat_value, p.gamma_value
        self.h = max(1, min(p.h_max, pool_walk_count(eh, p.beta, ga, p.walk_const)))
        self.h_fresh = max(1, min(p.h_fresh_max, fresh_walk_count(eh, p.beta, ga, p.walk_const)))
        self.pcfg = ProjectorConfig(eh, p.beta, ga, p.alpha, self.h_fresh, p.kappa)
        self.table = TransitionTable(inst.n, inst.tails, inst.heads, self.r)
        self.pool = build_walk_pool(inst, self.schur.inC, self.r, self.h, rng.child("pool"), table=self.table)
        self.lengths = self.pool.lengths
        self.walk_gen = rng.child("fresh").generator()
        self.resist_gen = rng.child("resist").generator()
        self.touched = np.zeros(inst.m, dtype=bool)
        self.budget = int(math.ceil(p.touch_budget * math.ceil(p.beta * inst.m)))
        self.batch_update(np.zeros(0, dtype=np.int64), f)

    def _resistance_estimates(self) -> np.ndarray:
        if self.p.resist_method == "exact":
            out = np.zeros(self.inst.n)
            F = self.schur.F
            out[F] = np.diag(self.schur.inv)
            out[self.schur.unreachable] = np.inf
            return out
        return sketch_resistance_to_set(self.inst, self.schur.r, self.schur.inC, self.p.resist_eps, self.resist_gen)

    def _add_terminals_of(self, edges: np.ndarray, with_projector: bool) -> None:
        inC = self.schur.inC
        ends = np.concatenate([self.inst.tails[edges], self.inst.heads[edges]])
        if inC[ends].all():
            return
        for x in ends.tolist():
            if not inC[x]:
                R = self.schur.add_terminal(x)
                self.counters["add_terminal"] += 1
                if with_projector:
                    self.projector.add_terminal(x, R)
                else:
                    self.pool.shortcut(x, self.lengths)

    def _set_edges(self, edges: np.ndarray, f_new: np.ndarray) -> np.ndarray:
        sp_ = self.inst.cap[edges] - f_new
        sm = np.asarray(f_new, dtype=float)
        if np.any(sp_ <= 0) or np.any(sm <= 0):
            raise ContractViolation("flow must lie strictly inside its capacities")
        r_new = resistances(sp_, sm)
        self.s_plus[edges], self.s_minus[edges] = sp_, sm
        self.r[edges] = r_new
        self.local[edges] = self.delta * (1.0 / sp_ - 1.0 / sm) / np.sqrt(r_new)
        return r_new

    # ---------------------------------------------------------------- operations

    def batch_update(self, Z, f: np.ndarray) -> None:
        """Exact refresh: apply updates on Z, then recompute S, all projections and pi_old."""
        inst = self.inst
        Z = np.unique(np.asarray(Z, dtype=np.int64))
        self.counters["batch_update"] += 1
        if Z.size:
            self._add_terminals_of(Z, with_projector=False)
            r_new = self._set_edges(Z, np.asarray(f, dtype=float)[Z])
            self.schur.update_many(Z, r_new)
            self.touched[Z] = True
        else:
            self.local = self.delta * (1.0 / self.s_plus - 1.0 / self.s_minus) / np.sqrt(self.r)
        self.resist = self._resistance_estimates()
        self.S = important_edges(inst, self.r, self.p.eps / (100.0 * self.p.alpha), self.resist)
        sch = self.schur
        self.projector = SketchProjector(inst, sch.inC, sch.inv, sch.F, sch.L, self.r, self.S, self.pool,
                                         self.lengths, self.table, self.pcfg, self.walk_gen)
        g = g_from_slacks(self.s_plus, self.s_minus)
        self.pi_old = self.delta * sch.project(incidence_transpose_apply(inst, g))
        self.C0 = sch.terminals.copy()
        self.r_lo = self.r.copy()
        self.r_hi = self.r.copy()
        self.T = 0

    def update_many(self, edges, f_new) -> None:
        """Locator.Update for several distinct edges, applied in order."""
        edges = np.asarray(edges, dtype=np.int64)
        if edges.size == 0:
            return
        f_new = np.asarray(f_new, dtype=float)
        self.counters["update"] += edges.size
        newly = edges[~self.touched[edges]]
        if newly.size and int(self.touched.sum()) + newly.size > self.budget:
            raise BudgetExceeded(f"locator touched more than {self.budget} edges; re-initialize it")
        sp_ = self.inst.cap[edges] - f_new
        if np.any(sp_ <= 0) or np.any(f_new <= 0):
            raise ContractViolation("flow must lie strictly inside its capacities")
        r_try = resistances(sp_, f_new)
        lo = np.minimum(self.r_lo[edges], r_try)
        hi = np.maximum(self.r_hi[edges], r_try)
        if np.any(hi > self.p.alpha * lo * (1 + 1e-12)):
            raise ContractViolation(f"resistance left its window of ratio {self.p.alpha}")
        t0 = self.projector.t
        self._add_terminals_of(edges, with_projector=True)
        self.T += self.projector.t - t0
        self.r_lo[edges], self.r_hi[edges] = lo, hi
        r_new = self._set_edges(edges, f_new)
        self.schur.update_many(edges, r_new)
        self.projector.update_many(edges, r_new)
        self.touched[edges] = True
        if self.T > self.p.insert_budget:
            self.batch_update(np.zeros(0, dtype=np.int64), self.s_minus)

    def update(self, e: int, f_e: float) -> None:
        self.update_many(np.array([e]), np.array([f_e]))

    def signal(self) -> np.ndarray:
        """The vector whose large entries the sketch recovers."""
        sch = self.schur
        Cv = sch.terminals
        phi = np.zeros(self.inst.n)
        phi[Cv] = sch.sc_solve(self.pi_old[Cv])
        w = self.projector.adjoint(phi)
        return self.local - w if self.p.include_local else -w

    def solve(self) -> np.ndarray:
        """Edges whose step congestion may reach eps, as a sorted index array."""
        self.counters["solve"] += 1
        p = self.p
        max_size = int(math.floor(p.size_const / (p.eps * p.eps)))
        return recover_signal(self.sketch, self.signal(), p.eps / 100.0, max_size)

    @property
    def terminals(self) -> np.ndarray:
        return self.schur.terminals

    def state_flow(self) -> np.ndarray:
        return self.s_minus.copy()


def loc_initialize(inst: FlowInstance, f: np.ndarray, params: LocatorParams, rng: RngStream) -> Locator:
    return Locator(inst, f, params, rng)


def loc_update(state: Locator, e: int, f_e: float) -> None:
    state.update(e, f_e)


def loc_batch_update(state: Locator, Z, f: np.ndarray) -> None:
    state.batch_update(Z, f)


def loc_solve(state: Locator) -> np.ndarray:
    return state.solve()
