"""Dynamic Schur complement onto a growing terminal set, maintained exactly.

The state keeps the dense Laplacian, an explicit inverse of L_FF and a lazily
recomputed SC(G, C). Adding a terminal v removes it from F with a rank-one
downdate of the inverse; the removed diagonal entry (L_FF^{-1})_vv is exactly
R_eff(C, v). Every mutation is journaled so rollback restores the previous
state bit for bit.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import ContractViolation, SingularityError
from .graph import FlowInstance, components
from .linalg import dense_spd_solver, laplacian_dense


class SchurState:
    """Terminal set C, complement F, inverse of L_FF and a cached SC(G, C)."""

    def __init__(self, inst: FlowInstance, C_init, r: np.ndarray, eps: float = 0.0, beta: float = 1.0,
                 safe_terminals=None, record: bool = True):
        self.inst = inst
        self.record = record
        self.n = inst.n
        self.eps = eps
        self.beta = beta
        self.r = np.array(r, dtype=float)
        self.L = laplacian_dense(inst.n, inst.tails, inst.heads, 1.0 / self.r)
        inC = np.zeros(inst.n, dtype=bool)
        inC[np.asarray(list(C_init), dtype=np.int64)] = True
        if safe_terminals is not None:
            inC[np.asarray(list(safe_terminals), dtype=np.int64)] = True
        if not inC.any():
            raise ContractViolation("terminal set must be nonempty")
        self.inC = inC
        F = np.flatnonzero(~inC)
        # vertices whose component misses C have no route to the terminals
        ncomp, labels = components(inst.n, inst.tails, inst.heads)
        reach = np.zeros(ncomp, dtype=bool)
        reach[labels[inC]] = True
        self.unreachable = ~reach[labels] & ~inC
        F = F[~self.unreachable[F]]
        self.F = F
        self.pos = np.full(inst.n, -1, dtype=np.int64)
        self.pos[F] = np.arange(F.size)
        self.inv = np.linalg.inv(self.L[np.ix_(F, F)]) if F.size else np.zeros((0, 0))
        self.journal: list[tuple] = []
        self._sc = None
        self._sc_fac = None

    # ------------------------------------------------------------ queries

    @property
    def terminals(self) -> np.ndarray:
        return np.flatnonzero(self.inC)

    @property
    def depth(self) -> int:
        return len(self.journal)

    def resistance_to_terminals(self, v: int) -> float:
        """R_eff(C, v), zero for terminals."""
        if self.inC[v]:
            return 0.0
        if self.unreachable[v]:
            return np.inf
        p = self.pos[v]
        return float(self.inv[p, p])

    def sc(self) -> np.ndarray:
        """SC(G, C) with rows ordered as ``terminals``."""
        if self._sc is None:
            if self.F.size == 0:
                self._sc = self.L.copy()
                return self._sc
            Cv = self.terminals
            LCC = self.L[np.ix_(Cv, Cv)]
            if self.F.size:
                LCF = self.L[np.ix_(Cv, self.F)]
                self._sc = LCC - LCF @ self.inv @ LCF.T
            else:
                self._sc = LCC.copy()
        return self._sc

    def sc_solve(self, b: np.ndarray) -> np.ndarray:
        """SC^+ b for b indexed by ``terminals``; returns the mean-zero solution.

        The vertex with the largest diagonal entry is grounded.
        """
        k = b.shape[0]
        if k <= 1:
            return np.zeros_like(b)
        if self._sc_fac is None:
            S = self.sc()
            pin = int(np.argmax(np.diag(S)))
            keep = np.ones(k, dtype=bool)
            keep[pin] = False
            M = S[keep][:, keep]
            self._sc_fac = (keep, dense_spd_solver(M))
        keep, solve = self._sc_fac
        x = np.zeros_like(b)
        x[keep] = solve(b[keep] - b.sum() / k)
        return x - x.sum() / k

    def potentials(self, b: np.ndarray) -> np.ndarray:
        """Full-length potential vector: SC^+ b on C and harmonic extension on F."""
        if self.F.size == 0:
            return self.sc_solve(b)
        Cv = self.terminals
        phi = np.zeros(self.n)
        phi[Cv] = self.sc_solve(b)
        if self.F.size:
            phi[self.F] = -self.inv @ (self.L[np.ix_(self.F, Cv)] @ phi[Cv])
        return phi

    def project(self, d: np.ndarray) -> np.ndarray:
        """pi^C(d) as a full-length vector, zero off C."""
        out = np.zeros(self.n)
        Cv = self.terminals
        out[Cv] = d[Cv]
        if self.F.size:
            out[Cv] -= self.L[np.ix_(Cv, self.F)] @ (self.inv @ d[self.F])
        return out

    # ------------------------------------------------------------ mutations

    def _invalidate(self):
        self._sc = None
        self._sc_fac = None

    def _remove_from_F(self, v: int) -> float:
        p = self.pos[v]
        piv = self.inv[p, p]
        keep = np.ones(self.F.size, dtype=bool)
        keep[p] = False
        col = self.inv[keep, p]
        newinv = self.inv[np.ix_(keep, keep)]
        newinv -= np.outer(col, col) / piv
        self.inv = newinv
        self.F = self.F[keep]
        self.pos[v] = -1
        self.pos[self.F] = np.arange(self.F.size)
        self.inC[v] = True
        return float(piv)

    def _add(self, v: int, kind: str) -> float:
        if self.inC[v]:
            warnings.warn(f"vertex {v} is already a terminal", stacklevel=3)
            return 0.0
        if self.unreachable[v]:
            raise SingularityError(f"vertex {v} has no path to the terminal set")
        if self.record or kind == "temp":
            self.journal.append((kind, v, self.F, self.inv, self.pos.copy()))
        self._invalidate()
        return self._remove_from_F(v)

    def add_terminal(self, v: int) -> float:
        """Permanently add v to C. Returns R_eff(C, v) before the insertion."""
        return self._add(int(v), "add")

    def temporary_add_terminals(self, vs) -> list[float]:
        """Add vertices that must be rolled back before the next permanent insertion."""
        return [self._add(int(v), "temp") for v in vs]

    def update(self, e: int, r_new: float) -> None:
        """Change r_e for an edge with both endpoints in C."""
        t, h = int(self.inst.tails[e]), int(self.inst.heads[e])
        if not (self.inC[t] and self.inC[h]):
            raise ContractViolation(f"edge {e} is not inside the terminal set")
        old = (self.r[e], self.L[t, t], self.L[h, h], self.L[t, h])
        if self.record or self.journal:
            self.journal.append(("update", e, old))
        dw = 1.0 / r_new - 1.0 / self.r[e]
        self.r[e] = r_new
        self.L[t, t] += dw
        self.L[h, h] += dw
        self.L[t, h] -= dw
        self.L[h, t] = self.L[t, h]
        self._invalidate()

    def update_many(self, edges: np.ndarray, r_new: np.ndarray, journal: bool | None = None) -> None:
        """Vectorized update of several in-C edges (distinct edges)."""
        edges = np.asarray(edges, dtype=np.int64)
        if edges.size == 0:
            return
        t, h = self.inst.tails[edges], self.inst.heads[edges]
        if not (self.inC[t].all() and self.inC[h].all()):
            raise ContractViolation("edge is not inside the terminal set")
        n = self.n
        flat_idx = np.concatenate([t * n + t, h * n + h, t * n + h, h * n + t])
        Lf = self.L.reshape(-1)
        if journal is None:
            journal = self.record or bool(self.journal)
        if journal:
            self.journal.append(("update_many", edges, self.r[edges].copy(), flat_idx, Lf[flat_idx].copy()))
        dw = 1.0 / np.asarray(r_new, dtype=float) - 1.0 / self.r[edges]
        self.r[edges] = r_new
        np.add.at(Lf, flat_idx, np.concatenate([dw, dw, -dw, -dw]))
        self._invalidate()

    def rollback(self) -> None:
        """Undo the most recent add, temporary add or update."""
        if not self.journal:
            raise ContractViolation("rollback on an empty journal")
        op = self.journal.pop()
        if op[0] in ("add", "temp"):
            _, v, F, inv, pos = op
            self.F, self.inv, self.pos = F, inv, pos
            self.inC[v] = False
        elif op[0] == "update_many":
            _, edges, r_old, flat_idx, vals = op
            self.r[edges] = r_old
            self.L.reshape(-1)[flat_idx] = vals
        else:
            _, e, (r, ltt, lhh, lth) = op
            t, h = int(self.inst.tails[e]), int(self.inst.heads[e])
            self.r[e] = r
            self.L[t, t], self.L[h, h], self.L[t, h], self.L[h, t] = ltt, lhh, lth, lth
        self._invalidate()

    def commit(self) -> None:
        """Forget the journal (permanent changes become unrevertable)."""
        if any(op[0] == "temp" for op in self.journal):
            raise ContractViolation("temporary terminals must be rolled back first")
        self.journal.clear()


def sc_initialize(inst: FlowInstance, C_init, r: np.ndarray, eps: float = 0.0, beta: float = 1.0,
                  safe_terminals=None) -> SchurState:
    return SchurState(inst, C_init, r, eps, beta, safe_terminals)


def sc_add_terminal(state: SchurState, v: int) -> float:
    return state.add_terminal(v)


def sc_temporary_add_terminals(state: SchurState, vs) -> list[float]:
    return state.temporary_add_terminals(vs)


def sc_update(state: SchurState, e: int, r_new: float) -> None:
    state.update(e, r_new)


def sc_query(state: SchurState) -> np.ndarray:
    return state.sc()


def sc_rollback(state: SchurState) -> None:
    state.rollback()
