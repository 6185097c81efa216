"""Demand projections onto a terminal set and the random-walk DemandProjector.

pi^C(d) moves every unit of demand outside C to the vertex where a walk
started there first enters C; in closed form pi^C(d) = d_C - L_CF L_FF^{-1} d_F.
For the edge demand d = B^T (q_S / sqrt(r)) the projector keeps an estimate
that starts exact and is refreshed with walk-based estimates whenever a
vertex joins C, using

    pi^{C+v}(d) = pi^C(d) + pi_v^{C+v}(d) (1_v - pi^C(1_v)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, ResourceError
from .graph import FlowInstance, as_generator, incidence_apply, incidence_transpose_apply
from .linalg import LaplacianOperator, laplacian_dense
from .walks import TransitionTable, WalkPool, simulate_walks, _membership


def _dense_L(L) -> np.ndarray:
    return L.dense if isinstance(L, LaplacianOperator) else np.asarray(L)


def exact_projection(L, C, d: np.ndarray) -> np.ndarray:
    """pi^C(d) as a full-length vector, zero off C."""
    Ld = _dense_L(L)
    n = Ld.shape[0]
    inC = _membership(n, C)
    d = np.asarray(d, dtype=float)
    out = np.zeros(n)
    out[inC] = d[inC]
    if (~inC).any():
        F = ~inC
        out[inC] -= Ld[np.ix_(inC, F)] @ np.linalg.solve(Ld[np.ix_(F, F)], d[F])
    return out


def harmonic_extension(L, C, phi: np.ndarray) -> np.ndarray:
    """Potential equal to phi on C and harmonic on V \\ C; the adjoint of pi^C."""
    Ld = _dense_L(L)
    n = Ld.shape[0]
    inC = _membership(n, C)
    psi = np.where(inC, phi, 0.0)
    if (~inC).any():
        F = ~inC
        psi[F] = -np.linalg.solve(Ld[np.ix_(F, F)], Ld[np.ix_(F, inC)] @ psi[inC])
    return psi


def edge_demand(inst: FlowInstance, q: np.ndarray, r: np.ndarray, S_mask: np.ndarray | None = None) -> np.ndarray:
    """B^T (q_S / sqrt(r))."""
    x = np.asarray(q, dtype=float) / np.sqrt(r)
    if S_mask is not None:
        x = np.where(S_mask, x, 0.0)
    return incidence_transpose_apply(inst, x)


# ------------------------------------------------------------ parameters


@dataclass(frozen=True)
class EstimatorParams:
    """Error targets, resistance threshold and walk counts of the two estimators."""

    delta1: float
    delta1_prime: float
    delta2: float
    c: float
    Z: int
    h_fresh: int


def log_factor(n: int) -> int:
    return max(1, math.ceil(math.log2(max(n, 2))))


def estimator_params(n: int, beta: float, gamma: float, delta1: float, delta2: float,
                     kappa: float = 1.0, walk_const: float = 1.0) -> EstimatorParams:
    """Parameters of the pool estimate of pi_v and the fresh-walk estimate of pi^C(1_v).

    c = min(delta1 beta^2 / kappa, gamma / 4) and delta1' = beta c delta1 / 2;
    the pool estimate uses Z = walk_const delta1'^-2 log n log(1/beta) walks per
    pair, the fresh estimate h' = walk_const log n / delta2^2 walks.
    """
    c = min(delta1 * beta * beta / kappa, gamma / 4.0)
    d1p = beta * c * delta1 / 2.0
    lg = log_factor(n)
    Z = int(math.ceil(walk_const * lg * max(1.0, math.log2(1.0 / beta)) / d1p**2))
    hf = int(math.ceil(walk_const * lg / delta2**2))
    return EstimatorParams(delta1, d1p, delta2, c, Z, hf)


def pool_walk_count(eps_hat: float, beta: float, gamma: float, const: float = 1.0) -> int:
    """h = const (eps_hat^-4 beta^-6 + eps_hat^-2 beta^-4 gamma^-2)."""
    return int(math.ceil(const * (eps_hat**-4 * beta**-6 + eps_hat**-2 * beta**-4 * gamma**-2)))


def fresh_walk_count(eps_hat: float, beta: float, gamma: float, const: float = 1.0) -> int:
    """h' = const eps_hat^-2 beta^-4 gamma^-2."""
    return int(math.ceil(const * eps_hat**-2 * beta**-4 * gamma**-2))


def threshold_c(eps_hat: float, beta: float, gamma: float, kappa: float = 1.0) -> float:
    """Resistance-filter constant c = min(eps_hat beta^2 / kappa, gamma / 4)."""
    return min(eps_hat * beta * beta / kappa, gamma / 4.0)


# ------------------------------------------------------------ estimators


def pool_coefficients(pool: WalkPool, lengths: np.ndarray, v: int, S_mask: np.ndarray, r: np.ndarray,
                      R_tilde: float, c: float) -> tuple[np.ndarray, np.ndarray]:
    """Edge weights a with pi_v estimate = sum_e a_e q_e, from pool walks that visit v.

    A walk of pair (u, e) contributes sign(u, e) / (h sqrt(r_e)) when e is in S
    and R_tilde <= r_e / c^2.
    """
    ids = pool.containing(v, lengths)
    if ids.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    pairs = pool.walk_pair[ids]
    e = pool.pair_edge[pairs]
    sign = pool.pair_sign[pairs].astype(float)
    keep = S_mask[e] & (R_tilde * c * c <= r[e])
    e, sign = e[keep], sign[keep]
    if e.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    edges, inv = np.unique(e, return_inverse=True)
    coef = np.bincount(inv, sign) / (pool.h * np.sqrt(r[edges]))
    nz = coef != 0
    return edges[nz], coef[nz]


def estimate_pi_v(pool: WalkPool, v: int, q: np.ndarray, S_mask: np.ndarray, r: np.ndarray, R_tilde: float,
                  c: float, lengths: np.ndarray | None = None) -> float:
    """Walk-pool estimate of pi_v^{C+v}(B^T q_S / sqrt(r))."""
    lens = pool.lengths if lengths is None else lengths
    edges, coef = pool_coefficients(pool, lens, v, S_mask, r, R_tilde, c)
    return float(np.dot(coef, np.asarray(q, dtype=float)[edges]))


def estimate_pi_c_of_point(table: TransitionTable, inC: np.ndarray, v: int, h_fresh: int, rng) -> np.ndarray:
    """Empirical first-hit distribution on C of h_fresh fresh walks from v."""
    gen = as_generator(rng)
    ends = simulate_walks(table, np.full(h_fresh, v, dtype=np.int64), inC, gen, record=False)
    return np.bincount(ends, minlength=table.n) / h_fresh


# ------------------------------------------------------------ DemandProjector


@dataclass
class ProjectorConfig:
    eps_hat: float
    beta: float
    gamma: float
    alpha: float = 16.0
    h_fresh: int = 64
    kappa: float = 1.0

    @property
    def c(self) -> float:
        return threshold_c(self.eps_hat, self.beta, self.gamma, self.kappa)


class DemandProjector:
    """Maintains pi^C(B^T q_S / sqrt(r)) under terminal insertions and in-C resistance updates."""

    def __init__(self, inst: FlowInstance, C, r: np.ndarray, q: np.ndarray, S, pool: WalkPool,
                 config: ProjectorConfig, rng, pool_lengths: np.ndarray | None = None,
                 table: TransitionTable | None = None):
        self.inst = inst
        self.cfg = config
        self.inC = _membership(inst.n, C).copy()
        self.r = np.array(r, dtype=float)
        self.q = np.array(q, dtype=float)
        if np.any(np.abs(self.q) > 1 + 1e-12):
            raise ContractViolation("q must lie in [-1, 1]")
        self.S = _edge_mask(inst.m, S)
        self.pool = pool
        self.lengths = (pool.lengths if pool_lengths is None else pool_lengths).copy()
        self.table = table or TransitionTable(inst.n, inst.tails, inst.heads, self.r)
        self.gen = as_generator(rng)
        self.t = 0
        self.r_min = self.r.copy()
        self.r_max = self.r.copy()
        L = laplacian_dense(inst.n, inst.tails, inst.heads, 1.0 / self.r)
        self.pi = exact_projection(L, self.inC, edge_demand(inst, self.q, self.r, self.S))

    @property
    def C(self) -> np.ndarray:
        return np.flatnonzero(self.inC)

    def add_terminal(self, v: int, R_tilde: float) -> float:
        """Insert v into C; returns the estimate of pi_v^{C+v}."""
        if self.inC[v]:
            return 0.0
        if not R_tilde > 0:
            raise ContractViolation("resistance estimate must be positive")
        pi_v = estimate_pi_v(self.pool, v, self.q, self.S, self.r, R_tilde, self.cfg.c, self.lengths)
        self.pool.shortcut(v, self.lengths)
        dist = estimate_pi_c_of_point(self.table, self.inC, v, self.cfg.h_fresh, self.gen)
        self.pi -= pi_v * dist
        self.pi[v] += pi_v
        self.inC[v] = True
        self.t += 1
        return pi_v

    def update(self, e: int, r_new: float, q_new: float) -> None:
        t, h = self.inst.tails[e], self.inst.heads[e]
        if not (self.inC[t] and self.inC[h]):
            raise ContractViolation(f"edge {e} is not inside the terminal set")
        if abs(q_new) > 1 + 1e-12:
            raise ContractViolation("q must lie in [-1, 1]")
        a = self.cfg.alpha
        lo, hi = min(self.r_min[e], r_new), max(self.r_max[e], r_new)
        if hi > a * lo * (1 + 1e-12):
            raise ContractViolation(f"resistance of edge {e} left its window of ratio {a}")
        self.r_min[e], self.r_max[e] = lo, hi
        if self.S[e]:
            delta = q_new / math.sqrt(r_new) - self.q[e] / math.sqrt(self.r[e])
            self.pi[t] += delta
            self.pi[h] -= delta
        self.q[e], self.r[e] = q_new, r_new

    def output(self) -> np.ndarray:
        return self.pi.copy()


def _edge_mask(m: int, S) -> np.ndarray:
    if isinstance(S, np.ndarray) and S.dtype == bool:
        return S.copy()
    mask = np.zeros(m, dtype=bool)
    mask[np.asarray(list(S), dtype=np.int64)] = True
    return mask


def dp_initialize(inst, C, r, q, S, pool, config, rng, **kw) -> DemandProjector:
    return DemandProjector(inst, C, r, q, S, pool, config, rng, **kw)


def dp_add_terminal(state: DemandProjector, v: int, R_tilde: float) -> float:
    return state.add_terminal(v, R_tilde)


def dp_update(state: DemandProjector, e: int, r_new: float, q_new: float) -> None:
    state.update(e, r_new, q_new)


def dp_output(state: DemandProjector) -> np.ndarray:
    return state.output()


class SketchProjector:
    """Every sketch row's DemandProjector at once, stored through its adjoint.

    All rows share C, the walk pool, its shortcuts and (by design) the fresh
    walks, so row q's estimate is the linear map

        pi(q) = pi^{C0}(B^T q_S / sqrt(r0)) + sum_t <q, a_t> (1_v_t - p_t)
                + sum over updated e in S of q_e (1/sqrt(r_e) - 1/sqrt(r0_e)) B^T 1_e.

    ``adjoint(phi)`` returns w with <pi(q), phi> = <q, w> for every q, which is
    what the heavy-hitter measurements need.
    """

    def __init__(self, inst: FlowInstance, inC: np.ndarray, Finv: np.ndarray, F: np.ndarray, Ld: np.ndarray,
                 r: np.ndarray, S_mask: np.ndarray, pool: WalkPool, lengths: np.ndarray,
                 table: TransitionTable, config: ProjectorConfig, gen: np.random.Generator):
        self.inst = inst
        self.cfg = config
        self.inC = inC.copy()
        self.C0 = np.flatnonzero(inC)
        self.F0 = F.copy()
        # harmonic extension operator from C0: psi_F = -H phi_C0
        self.H = Finv @ Ld[np.ix_(F, self.C0)] if F.size else np.zeros((0, self.C0.size))
        self.r0 = np.array(r, dtype=float)
        self.r = self.r0.copy()
        self.inv_sqrt_r0 = 1.0 / np.sqrt(self.r0)
        self.kappa = np.zeros(inst.m)
        self.S = S_mask.copy()
        self.pool = pool
        self.lengths = lengths
        self.table = table
        self.gen = gen
        self.log_v: list[int] = []
        self.log_a: list[tuple[np.ndarray, np.ndarray]] = []
        self.log_p: list[tuple[np.ndarray, np.ndarray]] = []
        self.t = 0

    def add_terminal(self, v: int, R_tilde: float) -> None:
        if self.inC[v]:
            return
        if not R_tilde > 0:
            raise ContractViolation("resistance estimate must be positive")
        edges, coef = pool_coefficients(self.pool, self.lengths, v, self.S, self.r, R_tilde, self.cfg.c)
        self.pool.shortcut(v, self.lengths)
        dist = estimate_pi_c_of_point(self.table, self.inC, v, self.cfg.h_fresh, self.gen)
        supp = np.flatnonzero(dist)
        self.log_v.append(int(v))
        self.log_a.append((edges, coef))
        self.log_p.append((supp, dist[supp]))
        self.inC[v] = True
        self.t += 1

    def update_many(self, edges: np.ndarray, r_new: np.ndarray) -> None:
        self.r[edges] = r_new
        sel = self.S[edges]
        self.kappa[edges[sel]] = 1.0 / np.sqrt(r_new[sel]) - self.inv_sqrt_r0[edges[sel]]

    def adjoint(self, phi: np.ndarray) -> np.ndarray:
        """w with <pi(q), phi> = <q, w>; phi is a full-length potential, read on C only."""
        inst = self.inst
        psi = np.zeros(inst.n)
        psi[self.C0] = phi[self.C0]
        if self.F0.size:
            psi[self.F0] = -self.H @ phi[self.C0]
        w = incidence_apply(inst, psi) * self.inv_sqrt_r0
        upd = self.kappa != 0
        if upd.any():
            w[upd] += self.kappa[upd] * (phi[inst.tails[upd]] - phi[inst.heads[upd]])
        w[~self.S] = 0.0
        for v, (edges, coef), (supp, prob) in zip(self.log_v, self.log_a, self.log_p):
            if edges.size:
                w[edges] += coef * (phi[v] - np.dot(prob, phi[supp]))
        return w

    def materialize(self, q: np.ndarray) -> np.ndarray:
        """Explicit estimate pi(q) for one row vector q."""
        inst = self.inst
        q = np.asarray(q, dtype=float)
        x = np.where(self.S, q * self.inv_sqrt_r0, 0.0)
        d = incidence_transpose_apply(inst, x)
        out = np.zeros(inst.n)
        out[self.C0] = d[self.C0]
        if self.F0.size:
            out[self.C0] -= self.H.T @ d[self.F0]
        y = np.where(self.S, q * self.kappa, 0.0)
        out += incidence_transpose_apply(inst, y)
        for v, (edges, coef), (supp, prob) in zip(self.log_v, self.log_a, self.log_p):
            s = float(np.dot(coef, q[edges]))
            out[v] += s
            out[supp] -= s * prob
        return out
