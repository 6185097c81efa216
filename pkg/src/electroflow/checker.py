"""Checker: recomputes the step value of individual edges to sanitize locator output.

For an edge e the checker returns
    f~_e = delta g_e(s) - (phi_tail - phi_head) / r_e,   phi = SC(G, C')^+ pi_old,
where C' is its terminal set with e's endpoints temporarily added and pi_old
is its snapshot of delta pi^C(B^T g(s)), kept current under updates. Values
whose congestion sqrt(r_e) |f~_e| is below eps/2 are reported as 0.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import BudgetExceeded, ContractViolation
from .graph import FlowInstance, RngStream, incidence_transpose_apply
from .locator import g_from_slacks, resistances, slacks
from .schur import SchurState
from .walks import build_congestion_reduction_subset


class Checker:
    """Per-edge step evaluator with temporary updates and exact rollback."""

    def __init__(self, inst: FlowInstance, f: np.ndarray, eps: float, beta: float = 1.0,
                 rng: RngStream | None = None, budget: float | None = None):
        self.inst = inst
        self.eps = eps
        self.beta = beta
        self.delta = 1.0 / math.sqrt(inst.m)
        self.rng = rng or RngStream(0, "checker")
        self.budget = budget
        self.checks = 0
        self.solves = 0
        self.initialize(f)

    def initialize(self, f: np.ndarray) -> None:
        inst = self.inst
        sp_, sm = slacks(inst, f)
        if np.any(sp_ <= 0) or np.any(sm <= 0):
            raise ContractViolation("flow must lie strictly inside its capacities")
        self.s_plus, self.s_minus = sp_.copy(), sm.copy()
        self.r = resistances(sp_, sm)
        if self.beta >= 1:
            C = np.arange(inst.n)
        else:
            C = build_congestion_reduction_subset(inst, self.r, self.beta, self.rng.child("subset")).C
        self.schur = SchurState(inst, C, self.r, beta=self.beta, record=False)
        self.g = g_from_slacks(sp_, sm)
        self.pi_old = self.delta * self.schur.project(incidence_transpose_apply(inst, self.g))
        self.journal: list[tuple] = []
        self.permanent = 0

    def refresh(self) -> None:
        """Recompute pi_old exactly from the current slacks."""
        if self.journal:
            raise ContractViolation("roll back temporary updates before refreshing")
        self.pi_old = self.delta * self.schur.project(incidence_transpose_apply(self.inst, self.g))

    # ---------------------------------------------------------------- updates

    def _apply(self, edges: np.ndarray, f_new: np.ndarray, temporary: bool) -> None:
        inst, sch = self.inst, self.schur
        sp_ = inst.cap[edges] - f_new
        sm = np.asarray(f_new, dtype=float)
        if np.any(sp_ <= 0) or np.any(sm <= 0):
            raise ContractViolation("flow must lie strictly inside its capacities")
        added = []
        ends = np.concatenate([inst.tails[edges], inst.heads[edges]])
        if not sch.inC[ends].all():
            for x in ends.tolist():
                if not sch.inC[x]:
                    if temporary:
                        sch.temporary_add_terminals([x])
                        added.append(x)
                    else:
                        sch.add_terminal(x)
        r_new = resistances(sp_, sm)
        g_new = (1.0 / sp_ - 1.0 / sm) / r_new
        old = (self.s_plus[edges].copy(), self.s_minus[edges].copy(), self.r[edges].copy(),
               self.g[edges].copy(), self.pi_old.copy())
        dg = self.delta * (g_new - self.g[edges])
        self.pi_old += np.bincount(inst.tails[edges], dg, inst.n) - np.bincount(inst.heads[edges], dg, inst.n)
        self.s_plus[edges], self.s_minus[edges], self.r[edges], self.g[edges] = sp_, sm, r_new, g_new
        sch.update_many(edges, r_new, journal=temporary)
        if temporary:
            self.journal.append((edges, old, len(added)))

    def update_many(self, edges, f_new) -> None:
        """Permanent update; all temporary updates must have been rolled back."""
        if self.journal:
            raise ContractViolation("roll back temporary updates before a permanent update")
        edges = np.asarray(edges, dtype=np.int64)
        if edges.size == 0:
            return
        self.permanent += edges.size
        if self.budget is not None and self.permanent > self.budget:
            raise BudgetExceeded(f"checker exceeded its budget of {self.budget} permanent updates")
        self._apply(edges, np.asarray(f_new, dtype=float), temporary=False)
        self.schur.journal.clear()

    def update(self, e: int, f_e: float) -> None:
        self.update_many(np.array([e]), np.array([f_e]))

    def temporary_update_many(self, edges, f_new) -> None:
        edges = np.asarray(edges, dtype=np.int64)
        if edges.size == 0:
            return
        self._apply(edges, np.asarray(f_new, dtype=float), temporary=True)

    def temporary_update(self, e: int, f_e: float) -> None:
        self.temporary_update_many(np.array([e]), np.array([f_e]))

    def rollback(self) -> None:
        """Undo the most recent temporary update."""
        if not self.journal:
            raise ContractViolation("rollback on an empty journal")
        edges, (sp_, sm, r, g, pi_old), nadded = self.journal.pop()
        self.schur.rollback()  # the resistance update
        for _ in range(nadded):
            self.schur.rollback()
        self.s_plus[edges], self.s_minus[edges], self.r[edges], self.g[edges] = sp_, sm, r, g
        self.pi_old = pi_old

    def rollback_all(self) -> None:
        while self.journal:
            self.rollback()

    # ---------------------------------------------------------------- checks

    def raw_value(self, e: int, pi_old: np.ndarray | None = None) -> float:
        """Unthresholded step estimate for edge e (temporarily adds its endpoints)."""
        inst, sch = self.inst, self.schur
        pi = self.pi_old if pi_old is None else pi_old
        t, h = int(inst.tails[e]), int(inst.heads[e])
        extra = [x for x in (t, h) if not sch.inC[x]]
        if extra:
            sch.temporary_add_terminals(extra)
        try:
            Cv = sch.terminals
            self.solves += 1
            phi = sch.sc_solve(pi[Cv])
            pos = np.searchsorted(Cv, [t, h])
            diff = phi[pos[0]] - phi[pos[1]]
        finally:
            for _ in extra:
                sch.rollback()
        return float(self.delta * self.g[e] - diff / self.r[e])

    def check(self, e: int, pi_old: np.ndarray | None = None) -> float:
        self.checks += 1
        val = self.raw_value(e, pi_old)
        return val if math.sqrt(self.r[e]) * abs(val) >= self.eps / 2 else 0.0

    def raw_values(self, edges, pi_old: np.ndarray | None = None) -> np.ndarray:
        """Step estimates for many edges from one potential solve.

        With exact Schur complements, adding endpoints as terminals does not
        change the potentials, so one solve on C plus harmonic extension gives
        the same values as separate checks.
        """
        edges = np.asarray(edges, dtype=np.int64)
        pi = self.pi_old if pi_old is None else pi_old
        sch = self.schur
        self.solves += 1
        phi = sch.potentials(pi[sch.terminals])
        inst = self.inst
        diff = phi[inst.tails[edges]] - phi[inst.heads[edges]]
        return self.delta * self.g[edges] - diff / self.r[edges]

    def check_many(self, edges, pi_old: np.ndarray | None = None) -> np.ndarray:
        edges = np.asarray(edges, dtype=np.int64)
        self.checks += edges.size
        val = self.raw_values(edges, pi_old)
        return np.where(np.sqrt(self.r[edges]) * np.abs(val) >= self.eps / 2, val, 0.0)

    def state_flow(self) -> np.ndarray:
        return self.s_minus.copy()


class PerfectChecker:
    """Dense reference checker: exact step values, thresholded at eps/2."""

    def __init__(self, inst: FlowInstance, f: np.ndarray, eps: float):
        self.inst = inst
        self.eps = eps
        self.f = np.array(f, dtype=float)
        self.delta = 1.0 / math.sqrt(inst.m)

    def values(self) -> np.ndarray:
        from .oracle import dense_electrical_step

        return dense_electrical_step(self.inst, self.f)[0]

    def check(self, e: int) -> float:
        sp_, sm = slacks(self.inst, self.f)
        val = float(self.values()[e])
        r = resistances(sp_[e], sm[e])
        return val if math.sqrt(r) * abs(val) >= self.eps / 2 else 0.0


def chk_initialize(inst, f, eps, beta=1.0, rng=None, budget=None) -> Checker:
    return Checker(inst, f, eps, beta, rng, budget)


def chk_update(state: Checker, e: int, f_e: float) -> None:
    state.update(e, f_e)


def chk_temporary_update(state: Checker, e: int, f_e: float) -> None:
    state.temporary_update(e, f_e)


def chk_rollback(state: Checker) -> None:
    state.rollback()


def chk_check(state: Checker, e: int, pi_old: np.ndarray | None = None) -> float:
    return state.check(e, pi_old)
