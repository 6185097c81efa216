"""Laplacian operators, grounded solves, energies, effective resistances and Schur complements."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ContractViolation, DimensionError, SingularityError
from .graph import FlowInstance, as_generator, components, incidence_apply, incidence_transpose_apply

DENSE_LIMIT = 1500
SOLVE_RTOL = 1e-10


def laplacian_dense(n: int, tails: np.ndarray, heads: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Dense weighted Laplacian sum_e w_e (1_t - 1_h)(1_t - 1_h)^T."""
    diag = np.bincount(tails, w, n) + np.bincount(heads, w, n)
    off = np.bincount(tails * n + heads, w, n * n) + np.bincount(heads * n + tails, w, n * n)
    L = -off.reshape(n, n)
    L[np.diag_indices(n)] += diag
    return L


def laplacian_sparse(n: int, tails: np.ndarray, heads: np.ndarray, w: np.ndarray) -> sp.csc_matrix:
    rows = np.concatenate([tails, heads, tails, heads])
    cols = np.concatenate([tails, heads, heads, tails])
    vals = np.concatenate([w, w, -w, -w])
    return sp.csc_matrix((vals, (rows, cols)), shape=(n, n))


def dense_spd_solver(M: np.ndarray):
    """Solver for a symmetric positive definite matrix.

    Cholesky is used when it succeeds. When round-off makes M numerically
    indefinite (conductances spanning more than the float range) the solve
    falls back to a spectral pseudoinverse that drops the eigenvalues below
    machine precision.
    """
    if not np.all(np.isfinite(M)):
        raise SingularityError("matrix has non-finite entries")
    try:
        factor = sla.cho_factor(M, lower=True, check_finite=False)
        return lambda b: sla.cho_solve(factor, b, check_finite=False)
    except np.linalg.LinAlgError:
        pass
    vals, vecs = np.linalg.eigh(M)
    top = vals.max(initial=0.0)
    if not top > 0:
        raise SingularityError("matrix is not positive definite")
    inv = np.where(vals > top * M.shape[0] * np.finfo(float).eps, 1.0 / np.where(vals > 0, vals, 1.0), 0.0)
    return lambda b: vecs @ (inv[:, None] * (vecs.T @ b) if b.ndim > 1 else inv * (vecs.T @ b))


class GroundedFactorization:
    """Factorization of L with one vertex pinned to zero.

    solve(b) returns the mean-zero representative of L^+ b for balanced b.
    Small graphs use a dense Cholesky factor, larger ones a sparse LU.
    """

    def __init__(self, L: "LaplacianOperator", pin: int = 0):
        self.L = L
        self.pin = pin
        n = L.n
        keep = np.ones(n, dtype=bool)
        keep[pin] = False
        self.keep = keep
        if n <= 1:
            self._solve = lambda b: np.zeros_like(b)
            return
        if n <= DENSE_LIMIT:
            M = L.dense[np.ix_(keep, keep)]
            self._solve = dense_spd_solver(M)
        else:
            M = L.sparse[keep][:, keep].tocsc()
            lu = spla.splu(M)
            self._solve = lu.solve

    def solve(self, b: np.ndarray) -> np.ndarray:
        x = np.zeros(self.L.n if b.ndim == 1 else (self.L.n, b.shape[1]))
        x[self.keep] = self._solve(b[self.keep])
        return x - x.mean(axis=0)


class LaplacianOperator:
    """L = B^T R^{-1} B for a fixed instance and positive resistances."""

    def __init__(self, inst: FlowInstance, r: np.ndarray, check_connected: bool = True):
        r = np.asarray(r, dtype=float)
        if r.shape != (inst.m,):
            raise DimensionError(f"resistances have length {r.shape[0]}, expected {inst.m}")
        if np.any(~(r > 0)) or not np.all(np.isfinite(r)):
            raise ContractViolation("resistances must be positive and finite")
        self.inst = inst
        self.r = r
        self.w = 1.0 / r
        self.n = inst.n
        if check_connected and inst.n > 1:
            ncomp, _ = components(inst.n, inst.tails, inst.heads)
            if ncomp != 1:
                raise SingularityError(f"graph has {ncomp} connected components")

    @cached_property
    def dense(self) -> np.ndarray:
        return laplacian_dense(self.n, self.inst.tails, self.inst.heads, self.w)

    @cached_property
    def sparse(self) -> sp.csc_matrix:
        return laplacian_sparse(self.n, self.inst.tails, self.inst.heads, self.w)

    @cached_property
    def factorization(self) -> GroundedFactorization:
        return GroundedFactorization(self)

    def matvec(self, phi: np.ndarray) -> np.ndarray:
        return incidence_transpose_apply(self.inst, incidence_apply(self.inst, phi) * self.w)

    def solve(self, b: np.ndarray) -> np.ndarray:
        return laplacian_solve(self, b)


def laplacian_solve(L: LaplacianOperator, b: np.ndarray) -> np.ndarray:
    """Mean-zero phi with L phi = b. Requires sum(b) = 0."""
    b = np.asarray(b, dtype=float)
    if b.shape[0] != L.n:
        raise DimensionError(f"demand has length {b.shape[0]}, expected {L.n}")
    scale = np.abs(b).sum()
    if abs(b.sum()) > 1e-9 * max(scale, 1e-300) and scale > 0:
        raise ContractViolation("demand is not balanced")
    if scale == 0:
        return np.zeros(L.n)
    fac = L.factorization
    phi = fac.solve(b)
    bnorm = np.linalg.norm(b)
    for _ in range(3):
        res = b - L.matvec(phi)
        if np.linalg.norm(res) <= SOLVE_RTOL * bnorm:
            break
        phi = phi + fac.solve(res - res.mean())
    return phi


def potential_energy(L: LaplacianOperator, phi: np.ndarray) -> float:
    """Sum over edges of (B phi)_e^2 / r_e."""
    diff = incidence_apply(L.inst, phi)
    return float(np.dot(diff * diff, L.w))


def demand_energy(L: LaplacianOperator, d: np.ndarray) -> float:
    """d^T L^+ d after shifting d to be balanced."""
    d = np.asarray(d, dtype=float)
    d = d - d.mean()
    return float(np.dot(d, laplacian_solve(L, d)))


def _vertex_set(X) -> set[int]:
    if isinstance(X, (int, np.integer)):
        return {int(X)}
    return {int(x) for x in X}


def effective_resistance(L: LaplacianOperator, X, Y) -> float:
    """Effective resistance between the contracted vertex sets X and Y.

    An edge (u, w) can be passed as the set {u, w}.
    """
    X, Y = _vertex_set(X), _vertex_set(Y)
    if not X or not Y:
        raise ValueError("vertex sets must be nonempty")
    if X & Y:
        raise ValueError("vertex sets must be disjoint")
    n = L.n
    phi = np.zeros(n)
    phi[list(X)] = 1.0
    fixed = np.zeros(n, dtype=bool)
    fixed[list(X | Y)] = True
    free = ~fixed
    if free.any():
        Ld = L.dense
        rhs = -Ld[np.ix_(free, fixed)] @ phi[fixed]
        phi[free] = np.linalg.solve(Ld[np.ix_(free, free)], rhs)
    energy = potential_energy(L, phi)
    return math.inf if energy == 0 else 1.0 / energy


def resistance_to_set(L: LaplacianOperator, C) -> np.ndarray:
    """Exact R_eff(C, v) for every vertex v (zero on C)."""
    n = L.n
    inC = np.zeros(n, dtype=bool)
    inC[list(_vertex_set(C))] = True
    out = np.zeros(n)
    F = np.flatnonzero(~inC)
    if F.size:
        inv = np.linalg.inv(L.dense[np.ix_(F, F)])
        out[F] = np.diag(inv)
    return out


def schur_complement(L: LaplacianOperator | np.ndarray, C) -> np.ndarray:
    """Dense SC(G, C) = L_CC - L_CF L_FF^{-1} L_FC, with rows and columns in sorted order of C."""
    Ld = L.dense if isinstance(L, LaplacianOperator) else np.asarray(L)
    n = Ld.shape[0]
    Cidx = np.array(sorted(_vertex_set(C)), dtype=np.int64)
    mask = np.ones(n, dtype=bool)
    mask[Cidx] = False
    F = np.flatnonzero(mask)
    LCC = Ld[np.ix_(Cidx, Cidx)]
    if F.size == 0:
        return LCC.copy()
    LCF = Ld[np.ix_(Cidx, F)]
    return LCC - LCF @ np.linalg.solve(Ld[np.ix_(F, F)], LCF.T)


# ------------------------------------------------------- resistance sketch


@dataclass
class ResistanceSketch:
    """Rows of L^+ B^T R^{-1/2} G^T for a random sign matrix G, stored as a k x n matrix."""

    Q: np.ndarray
    eps: float

    @property
    def rows(self) -> int:
        return self.Q.shape[0]

    def query(self, u: int, v: int) -> float:
        diff = self.Q[:, u] - self.Q[:, v]
        return float(np.dot(diff, diff))

    def query_to(self, v: int) -> np.ndarray:
        """Estimates of R_eff(v, x) for every vertex x."""
        diff = self.Q - self.Q[:, [v]]
        return np.einsum("ij,ij->j", diff, diff)


def sketch_rows(n: int, eps: float, const: float = 4.0) -> int:
    return int(math.ceil(const * max(1, math.ceil(math.log2(max(n, 2)))) / (eps * eps)))


def sketch_effective_resistances(L: LaplacianOperator, eps: float, rng, const: float = 4.0) -> ResistanceSketch:
    """Random-projection sketch of all pairwise effective resistances."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    gen = as_generator(rng)
    k = sketch_rows(L.n, eps, const)
    G = (gen.integers(0, 2, size=(L.inst.m, k)) * 2.0 - 1.0) / math.sqrt(k)
    G *= np.sqrt(L.w)[:, None]
    rhs = np.zeros((L.n, k))
    np.add.at(rhs, L.inst.tails, G)
    np.subtract.at(rhs, L.inst.heads, G)
    fac = L.factorization
    Q = fac.solve(rhs).T
    return ResistanceSketch(np.ascontiguousarray(Q), eps)


def contract_to_set(inst: FlowInstance, C) -> tuple[FlowInstance, np.ndarray, int]:
    """Contract the vertex set C to a single vertex.

    Returns the contracted instance, the old-to-new vertex map, and the
    index of the contracted vertex. Edges inside C are dropped.
    """
    n = inst.n
    inC = np.zeros(n, dtype=bool)
    inC[list(_vertex_set(C))] = True
    F = np.flatnonzero(~inC)
    mapping = np.full(n, F.size, dtype=np.int64)
    mapping[F] = np.arange(F.size)
    t, h = mapping[inst.tails], mapping[inst.heads]
    keep = t != h
    sub = FlowInstance(
        F.size + 1, t[keep], h[keep], np.zeros(keep.sum(), dtype=np.int64),
        np.ones(keep.sum(), dtype=np.int64), np.zeros(F.size + 1, dtype=np.int64),
    )
    return sub, keep, F.size


def sketch_resistance_to_set(inst: FlowInstance, r: np.ndarray, C, eps: float, rng, const: float = 4.0) -> np.ndarray:
    """Sketched estimates of R_eff(C, v) for every vertex v (zero on C)."""
    n = inst.n
    inC = np.zeros(n, dtype=bool)
    inC[list(_vertex_set(C))] = True
    out = np.zeros(n)
    if inC.all():
        return out
    sub, keep, hub = contract_to_set(inst, C)
    if sub.m == 0:
        out[~inC] = math.inf
        return out
    Lsub = LaplacianOperator(sub, np.asarray(r)[keep])
    sk = sketch_effective_resistances(Lsub, eps, rng, const)
    est = sk.query_to(hub)
    out[~inC] = est[: hub]
    return out
