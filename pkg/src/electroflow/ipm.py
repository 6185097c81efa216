"""Interior point method: central path, Newton recentering, MultiStep, the driver and rounding.

The barrier objective at parameter mu is
    F_mu(f) = <c, f> / mu - sum log(u - f) - sum log f,   subject to B^T f = d,
with gradient h = c/mu + 1/s+ - 1/s- and Hessian R = diag(r). A flow is
mu-central when h is a potential difference, i.e. the residual
||R^{-1/2}(h - B phi)|| with L phi = B^T R^{-1} h vanishes.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .checker import Checker
from .errors import (BudgetExceeded, CentralityError, ContractViolation, InfeasibleError,
                     RoundingError, SingularityError)
from .graph import FlowInstance, RngStream, components, incidence_apply, incidence_transpose_apply
from .linalg import LaplacianOperator
from .locator import Locator, LocatorParams, g_from_slacks, resistances
from .oracle import find_negative_cycle

# ---------------------------------------------------------------- parameters


@dataclass
class StepParams:
    """Step sizes, error levels and data-structure parameters of the IPM."""

    k: int = 4
    eps_step: float = 0.05
    eps_solve: float = 0.05
    eps: float = 0.01
    eps_hat: float | None = None
    alpha: float = 16.0
    beta: float = 0.3
    beta_chk: float = 1.0
    T_hat: int | None = None
    mode: str = "practical"
    algorithm: str = "ipm-localized"  # or ipm-exact
    h_max: int = 32
    h_fresh_max: int = 64
    resist_method: str = "sketch"
    early_stop: bool = True
    recenter_tol: float = 1e-12
    recenter_max_iter: int = 100
    skip_rounding: bool = False

    def __post_init__(self):
        if self.mode not in ("practical", "faithful"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.algorithm not in ("ipm-localized", "ipm-exact"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.k < 1:
            raise ValueError("k must be a positive integer")
        if self.mode == "practical" and (self.eps_step > 0.1 or self.eps_solve > 0.1):
            raise ValueError("practical mode needs eps_step, eps_solve <= 0.1")

    @classmethod
    def faithful(cls, k: int = 1, **kw) -> "StepParams":
        """Constants tied to k: eps_step = eps_solve = 1e-5 k^-3, eps = 1e-6 k^-6."""
        base = dict(k=k, eps_step=1e-5 / k**3, eps_solve=1e-5 / k**3, eps=1e-6 / k**6,
                    alpha=float(max(k**52, 16)), mode="faithful")
        base.update(kw)
        return cls(**base)

    @classmethod
    def practical(cls, **kw) -> "StepParams":
        return cls(**kw)

    @property
    def rounds(self) -> int:
        return max(1, int(round(self.k / self.eps_step)))

    def mu_factor(self, m: int) -> float:
        """mu' / mu after one MultiStep."""
        return (1.0 + self.eps_step / math.sqrt(m)) ** (-self.rounds)

    def locator_params(self) -> LocatorParams:
        return LocatorParams(alpha=self.alpha, beta=self.beta, eps=self.eps / 2, eps_hat=self.eps_hat,
                             h_max=self.h_max, h_fresh_max=self.h_fresh_max, resist_method=self.resist_method)

    def cadences(self, m: int) -> dict:
        k = self.k
        return {
            "locator": max(1, int(math.floor(self.eps_solve * math.sqrt(self.beta * m) / k))),
            "checker": max(1, int(math.floor(self.eps_solve * math.sqrt(min(self.beta_chk, 1.0) * m) / k))),
            "batch_empty": max(1, int(math.floor(0.5 * self.alpha ** 0.25 / k - 1))),
            "refresh": max(1, k**4),
            "T_hat": self.T_hat if self.T_hat is not None else max(1, int(math.floor(math.sqrt(m) / k))),
        }


# ---------------------------------------------------------------- central state


@dataclass
class CentralState:
    f: np.ndarray
    mu: float
    mode: str = "practical"
    residual: float = float("nan")
    iterations: int = 0

    @property
    def s_plus(self) -> np.ndarray:
        return self.cap - self.f

    @property
    def s_minus(self) -> np.ndarray:
        return self.f

    cap: np.ndarray = field(default=None, repr=False)

    @property
    def r(self) -> np.ndarray:
        return resistances(self.s_plus, self.s_minus)

    def validate(self, inst: FlowInstance, tol: float = 1e-9) -> None:
        if np.any(self.f <= 0) or np.any(self.f >= inst.cap):
            raise ContractViolation("flow must lie strictly inside its capacities")
        err = np.abs(incidence_transpose_apply(inst, self.f) - inst.demand).max(initial=0.0)
        if err > tol * max(1.0, float(inst.cap.max(initial=1))):
            raise ContractViolation(f"flow violates conservation by {err:.3g}")


def make_state(inst: FlowInstance, f: np.ndarray, mu: float, mode: str = "practical") -> CentralState:
    return CentralState(np.array(f, dtype=float), float(mu), mode, cap=inst.cap.astype(float))


# ---------------------------------------------------------------- steps and residuals


def g_of_s(s_plus: np.ndarray, s_minus: np.ndarray) -> np.ndarray:
    s_plus, s_minus = np.asarray(s_plus, dtype=float), np.asarray(s_minus, dtype=float)
    if np.any(s_plus <= 0) or np.any(s_minus <= 0):
        raise ContractViolation("slacks must be positive")
    return g_from_slacks(s_plus, s_minus)


def _operator(inst: FlowInstance, r: np.ndarray) -> LaplacianOperator:
    return LaplacianOperator(inst, r, check_connected=False)


def newton_step(inst: FlowInstance, f: np.ndarray) -> np.ndarray:
    """Electrical step f~* = delta g - delta R^{-1} B L^+ B^T g."""
    f = np.asarray(f, dtype=float)
    sp_, sm = inst.cap - f, f
    g = g_of_s(sp_, sm)
    r = resistances(sp_, sm)
    delta = 1.0 / math.sqrt(inst.m)
    phi = _operator(inst, r).solve(incidence_transpose_apply(inst, g))
    return delta * (g - incidence_apply(inst, phi) / r)


def _gradient(inst: FlowInstance, f: np.ndarray, mu: float):
    sp_, sm = inst.cap - f, f
    r = resistances(sp_, sm)
    h = inst.cost / mu + 1.0 / sp_ - 1.0 / sm
    return h, r


QR_LIMIT = 4_000_000  # m * n entries for the dense least-squares route


def weighted_projection(inst: FlowInstance, r: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Potentials phi minimizing ||R^{-1/2}(h - B phi)|| and the remainder z = R^{-1/2}(h - B phi).

    Small instances use a QR factorization of R^{-1/2} B with one vertex
    grounded, which avoids squaring the condition number as the normal
    equations L phi = B^T R^{-1} h do; larger ones fall back to the
    Laplacian solve.
    """
    sq = np.sqrt(r)
    y = h / sq
    if inst.m * inst.n <= QR_LIMIT:
        A = np.zeros((inst.m, inst.n))
        rows = np.arange(inst.m)
        A[rows, inst.tails] = 1.0 / sq
        A[rows, inst.heads] = -1.0 / sq
        Q, Rt = np.linalg.qr(A[:, 1:])
        qy = Q.T @ y
        z = y - Q @ qy
        phi = np.zeros(inst.n)
        phi[1:] = sla.solve_triangular(Rt, qy)
        phi -= phi.mean()
        return phi, z
    phi = _operator(inst, r).solve(incidence_transpose_apply(inst, h / r))
    return phi, y - incidence_apply(inst, phi) / sq


def centering_direction(inst: FlowInstance, f: np.ndarray, mu: float) -> tuple[np.ndarray, float]:
    """Newton direction -R^{-1}(h - B phi) for the barrier at mu, and the residual."""
    f = np.asarray(f, dtype=float)
    h, r = _gradient(inst, f, mu)
    _, z = weighted_projection(inst, r, h)
    return -z / np.sqrt(r), float(np.linalg.norm(z))


def residual_norm(inst: FlowInstance, f: np.ndarray, mu: float) -> float:
    """Centrality residual: the R^{-1}-norm of h after removing its best potential part."""
    return centering_direction(inst, f, mu)[1]


def _round_off_floor(inst: FlowInstance, f: np.ndarray, mu: float) -> float:
    sp_, sm = inst.cap - f, f
    r = resistances(sp_, sm)
    scale = (np.abs(inst.cost) / mu + 1.0 / sp_ + 1.0 / sm) / np.sqrt(r)
    return 1e3 * np.finfo(float).eps * float(np.linalg.norm(scale)) * math.sqrt(inst.m)


def recenter(inst: FlowInstance, f: np.ndarray, mu: float, tol: float = 1e-12,
             max_iter: int = 100, mode: str = "practical") -> CentralState:
    """Damped Newton with backtracking at fixed mu until the residual is at most tol.

    The tolerance is raised to the floating point floor of the residual
    evaluation when that floor is larger; an iteration that cannot reduce
    the residual below the floor is accepted as converged.
    """
    f = np.array(f, dtype=float)
    cap = inst.cap.astype(float)
    if np.any(f <= 0) or np.any(f >= cap):
        raise CentralityError("recentering needs a strictly interior flow")
    d, res = centering_direction(inst, f, mu)
    it = 0
    while True:
        target = max(tol, _round_off_floor(inst, f, mu))
        if res <= target:
            break
        if it >= max_iter:
            raise CentralityError(f"recentering did not converge in {max_iter} iterations (residual {res:.3g})")
        it += 1
        t = 1.0 if res < 0.25 else 1.0 / (1.0 + res)
        accepted = False
        for _ in range(31):
            cand = f + t * d
            if np.all(cand > 0) and np.all(cand < cap):
                d_new, res_new = centering_direction(inst, cand, mu)
                if res_new < res or res_new <= target:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            if res <= 1e3 * target:
                break
            raise CentralityError(f"backtracking failed at residual {res:.3g}")
        f, d, res = cand, d_new, res_new
    return CentralState(f, float(mu), mode, residual=res, iterations=it, cap=cap)


def follow_path(inst: FlowInstance, f: np.ndarray, mu: float, mu_target: float, tol: float = 1e-12,
                mode: str = "practical") -> CentralState:
    """Reach f(mu_target) from a flow central at mu using short exact path steps."""
    ratio = 1.0 + 1.0 / math.sqrt(inst.m)
    state = recenter(inst, f, mu, tol, mode=mode)
    while state.mu > mu_target * (1 + 1e-15):
        nxt = max(mu_target, state.mu / ratio)
        state = recenter(inst, state.f, nxt, tol, mode=mode)
    return state


def project_to_demands(inst: FlowInstance, f: np.ndarray) -> np.ndarray:
    """Closest flow with B^T f = d in the R-norm at f: f - R^{-1} B L^+ (B^T f - d)."""
    f = np.asarray(f, dtype=float)
    r = resistances(inst.cap - f, f)
    excess = incidence_transpose_apply(inst, f) - inst.demand
    excess -= excess.mean()
    phi = _operator(inst, r).solve(excess)
    return f - incidence_apply(inst, phi) / r


# ---------------------------------------------------------------- initialization


@dataclass
class AugmentedInstance:
    inst: FlowInstance  # original + auxiliary vertex and arcs
    original: FlowInstance
    aux_vertex: int
    f0: np.ndarray  # interior seed flow
    mu0: float

    @property
    def m_original(self) -> int:
        return self.original.m

    def map_back(self, f: np.ndarray) -> np.ndarray:
        """Restrict to original arcs; auxiliary arcs must carry nothing."""
        f = np.asarray(f)
        aux = f[self.original.m:]
        if np.any(aux != 0):
            raise InfeasibleError("the optimum routes flow through auxiliary arcs; the instance is infeasible")
        return f[: self.original.m].copy()


def initialize_instance(inst: FlowInstance, recenter_seed: bool = True, tol: float = 1e-12) -> tuple[AugmentedInstance, CentralState]:
    """Add an auxiliary vertex whose arcs absorb the imbalance of f = u/2.

    Each vertex v with Delta_v = d_v - (B^T u/2)_v != 0 gets an arc to (or
    from) the auxiliary vertex of capacity 2|Delta_v| and cost 8 m U W, so
    f = u/2 is feasible on every arc and g(s) = 0. Components that would
    stay detached get a pair of opposite auxiliary arcs at capacity 2.
    """
    n, m = inst.n, inst.m
    a = n
    half = inst.cap / 2.0
    excess2 = 2 * inst.demand - (np.bincount(inst.tails, inst.cap, n) - np.bincount(inst.heads, inst.cap, n))
    # excess2 = 2 Delta, integral
    big = 8 * max(m, 1) * max(inst.max_cap, 1) * max(inst.max_cost, 1)
    tails, heads, caps = [], [], []
    attached = excess2 != 0
    for v in np.flatnonzero(attached):
        if excess2[v] > 0:
            tails.append(int(v)); heads.append(a)
        else:
            tails.append(a); heads.append(int(v))
        caps.append(int(abs(excess2[v])))
    ncomp, label = components(n, inst.tails, inst.heads)
    for comp in range(ncomp):
        members = np.flatnonzero(label == comp)
        if not attached[members].any():
            v = int(members[0])
            tails += [v, a]; heads += [a, v]; caps += [2, 2]
    k = len(tails)
    aug = FlowInstance(
        n + 1,
        np.concatenate([inst.tails, np.array(tails, dtype=np.int64)]),
        np.concatenate([inst.heads, np.array(heads, dtype=np.int64)]),
        np.concatenate([inst.cost, np.full(k, big, dtype=np.int64)]),
        np.concatenate([inst.cap, np.array(caps, dtype=np.int64)]),
        np.concatenate([inst.demand, [0]]),
    )
    f0 = aug.cap / 2.0
    mu0 = 4.0 * float(np.linalg.norm(aug.cap.astype(float) * aug.cost))
    mu0 = max(mu0, 1.0)
    ai = AugmentedInstance(aug, inst, a, f0, mu0)
    if not recenter_seed:
        return ai, make_state(aug, f0, mu0)
    try:
        state = recenter(aug, f0, mu0, tol)
    except CentralityError as exc:
        raise CentralityError(f"initialization failed: {exc}") from exc
    return ai, state


# ---------------------------------------------------------------- MultiStep


@dataclass
class MultiStepInfo:
    mu_before: float
    mu_after: float
    z_sizes: list = field(default_factory=list)
    nonzero: list = field(default_factory=list)
    step_error: list = field(default_factory=list)
    f_before_recenter: np.ndarray | None = None
    residual_before: float = float("nan")
    recenter_iterations: int = 0
    t_recenter: float = 0.0
    fallback: bool = False
    locator_resets: int = 0


def _exact_candidates(inst: FlowInstance) -> np.ndarray:
    return np.arange(inst.m, dtype=np.int64)


def multi_step(inst: FlowInstance, state: CentralState, locator: Locator | None, checkers, params: StepParams,
               step_oracle=None, probe=None) -> tuple[CentralState, MultiStepInfo]:
    """k IPM steps worth of progress from f(mu), using only locally detected congested edges.

    Each round asks the locator for candidate edges Z, evaluates them on that
    round's checker and moves the edges whose checked step is nonzero by
    eps_step times the step. Changed edges are reported to the locator and,
    as temporary updates, to the checkers of later rounds. Finally the flow is
    recentered at mu' and all data structures are returned to their state at
    entry. With step_oracle(f) supplied, per-round step errors against it are
    recorded; probe(i, Z, locator), when given, is called after every Solve.
    """
    rounds = params.rounds
    if not isinstance(checkers, (list, tuple)):
        checkers = [checkers] * rounds
    if len(checkers) != rounds:
        raise ContractViolation(f"need {rounds} checkers, got {len(checkers)}")
    mu_new = state.mu * params.mu_factor(inst.m)
    info = MultiStepInfo(state.mu, mu_new)
    f = state.f.copy()
    saved_loc = locator.state_flow() if locator is not None else None
    touched = np.zeros(inst.m, dtype=bool)
    distinct = list({id(c): c for c in checkers}.values())
    start_depth = {id(c): len(c.journal) for c in distinct}
    # distinct checkers of the rounds after round i
    later: list[list] = [[] for _ in range(rounds)]
    seen: dict = {}
    for i in range(rounds - 1, 0, -1):
        seen.setdefault(id(checkers[i]), checkers[i])
        later[i - 1] = list(seen.values())
    for i in range(rounds):
        chk = checkers[i]
        Z = locator.solve() if locator is not None else _exact_candidates(inst)
        if probe is not None:
            probe(i, Z, locator)
        vals = chk.check_many(Z)
        info.z_sizes.append(int(Z.size))
        if step_oracle is not None:
            exact = step_oracle(chk.state_flow())
            r_chk = chk.r
            full = np.zeros(inst.m)
            full[Z] = vals
            info.step_error.append(float(np.max(np.sqrt(r_chk) * np.abs(exact - full))))
        nz = vals != 0
        if not nz.any():
            info.nonzero.append(0)
            continue
        edges = Z[nz]
        f[edges] = f[edges] + params.eps_step * vals[nz]
        info.nonzero.append(int(edges.size))
        touched[edges] = True
        if locator is not None:
            try:
                locator.update_many(edges, f[edges])
            except (ContractViolation, BudgetExceeded):
                info.locator_resets += 1
                locator.initialize(_merge(locator.state_flow(), edges, f))
        for c in later[i]:
            c.temporary_update_many(edges, f[edges])
    info.f_before_recenter = f.copy()
    # recenter at mu'
    t_rc = time.perf_counter()
    try:
        fp = project_to_demands(inst, f)
        if np.any(fp <= 0) or np.any(fp >= inst.cap):
            raise CentralityError("projected flow left the interior")
        info.residual_before = residual_norm(inst, fp, mu_new)
        new_state = recenter(inst, fp, mu_new, params.recenter_tol, params.recenter_max_iter, params.mode)
    except (CentralityError, SingularityError, ContractViolation):
        info.fallback = True
        new_state = follow_path(inst, state.f, state.mu, mu_new, params.recenter_tol, params.mode)
    info.recenter_iterations = new_state.iterations
    info.t_recenter = time.perf_counter() - t_rc
    # return the data structures to their state at entry
    if locator is not None and touched.any():
        edges = np.flatnonzero(touched)
        try:
            locator.update_many(edges, saved_loc[edges])
        except (ContractViolation, BudgetExceeded):
            info.locator_resets += 1
            locator.initialize(saved_loc)
    for c in distinct:
        while len(c.journal) > start_depth[id(c)]:
            c.rollback()
    return new_state, info


def _merge(base: np.ndarray, edges: np.ndarray, f: np.ndarray) -> np.ndarray:
    out = base.copy()
    out[edges] = f[edges]
    return out


# ---------------------------------------------------------------- rounding


def _find_cycle(n: int, tails: np.ndarray, heads: np.ndarray, E: np.ndarray):
    """Some undirected cycle among edges E as (edge, +1 if traversed tail to head)."""
    adj: dict[int, list[tuple[int, int, int]]] = {}
    for e in E.tolist():
        t, h = int(tails[e]), int(heads[e])
        adj.setdefault(t, []).append((e, h, 1))
        adj.setdefault(h, []).append((e, t, -1))
    visited_parent: dict[int, tuple[int, int, int] | None] = {}
    for root in sorted(adj):
        if root in visited_parent:
            continue
        visited_parent[root] = None
        depth = {root: 0}
        stack = [(root, iter(adj[root]))]
        while stack:
            v, it = stack[-1]
            advanced = False
            for e, w, o in it:
                par = visited_parent[v]
                if par is not None and par[0] == e:
                    continue
                if w in depth:
                    if depth[w] < depth[v]:
                        # back edge v -> w closes a cycle w ... v -> w
                        cyc = [(e, o)]
                        x = v
                        while x != w:
                            pe, pv, po = visited_parent[x]
                            cyc.append((pe, po))
                            x = pv
                        cyc.reverse()
                        return cyc
                    continue
                visited_parent[w] = (e, v, o)
                depth[w] = depth[v] + 1
                stack.append((w, iter(adj[w])))
                advanced = True
                break
            if not advanced:
                stack.pop()
    return None


def round_to_integral(inst: FlowInstance, f: np.ndarray, tol: float = 1e-6, verify: bool = True) -> np.ndarray:
    """Round a near-optimal feasible flow to an integral one without raising its cost.

    The fractional edges are decomposed into cycles; each cycle is pushed in
    its cheaper orientation until one of its edges becomes integral. Edges
    within tol of an integer are snapped, and dangling fractional edges are
    snapped as conservation forces them to be integral. The result is
    certified optimal by a negative-cycle search on its residual graph.
    """
    f = np.array(f, dtype=float)
    cap = inst.cap.astype(float)
    f = np.clip(f, 0.0, cap)
    near = np.rint(f)
    frac = np.abs(f - near) > tol
    f[~frac] = near[~frac]
    cost = inst.cost.astype(float)
    for _ in range(inst.m + 1):
        # peel fractional edges with a degree-one endpoint
        while True:
            E = np.flatnonzero(frac)
            if E.size == 0:
                break
            deg = np.bincount(inst.tails[E], minlength=inst.n) + np.bincount(inst.heads[E], minlength=inst.n)
            leaf = (deg[inst.tails[E]] == 1) | (deg[inst.heads[E]] == 1)
            if not leaf.any():
                break
            le = E[leaf]
            if np.any(np.abs(f[le] - np.rint(f[le])) > 1e-3):
                raise RoundingError("flow does not conserve demands well enough to round")
            f[le] = np.rint(f[le])
            frac[le] = False
        E = np.flatnonzero(frac)
        if E.size == 0:
            break
        cyc = _find_cycle(inst.n, inst.tails, inst.heads, E)
        if cyc is None:
            raise RoundingError("fractional edges contain no cycle")
        ce = np.array([e for e, _ in cyc], dtype=np.int64)
        co = np.array([o for _, o in cyc], dtype=float)
        direction = 1.0 if np.dot(cost[ce], co) <= 0 else -1.0
        push = direction * co
        room = np.where(push > 0, np.ceil(f[ce]) - f[ce], f[ce] - np.floor(f[ce]))
        theta = room.min()
        f[ce] += push * theta
        hit = ce[np.abs(f[ce] - np.rint(f[ce])) <= tol]
        hit = np.union1d(hit, ce[np.argmin(room)])
        f[hit] = np.rint(f[hit])
        frac[hit] = False
    fi = np.rint(f).astype(np.int64)
    if np.any(fi < 0) or np.any(fi > inst.cap):
        raise RoundingError("rounded flow violates capacities")
    net = np.bincount(inst.tails, fi, inst.n).astype(np.int64) - np.bincount(inst.heads, fi, inst.n).astype(np.int64)
    if not np.array_equal(net, inst.demand):
        raise RoundingError("rounded flow violates conservation")
    if verify and find_negative_cycle(inst, fi) is not None:
        raise RoundingError("rounded flow is not optimal: its residual graph has a negative cycle")
    return fi


# ---------------------------------------------------------------- driver


LOG_FIELDS = ["iteration", "mu", "rounds", "z_total", "z_max", "nonzero_total", "residual_before",
              "recenter_iters", "fallback", "locator_inits", "locator_updates", "batch_updates",
              "t_multistep", "t_recenter"]


@dataclass
class SolveResult:
    flow: np.ndarray
    cost: int | float
    iterations: int
    mu_final: float
    log: list = field(default_factory=list)
    counters: dict = field(default_factory=dict)

    def log_csv(self, timings: bool = False) -> str:
        fields = LOG_FIELDS if timings else LOG_FIELDS[:-2]
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for row in self.log:
            w.writerow(row)
        return buf.getvalue()


def _drifted(loc_f: np.ndarray, f: np.ndarray, cap: np.ndarray, tol: float) -> np.ndarray:
    """Edges whose slacks differ from the snapshot by more than a 1 + tol factor."""
    def off(a, b):
        return (a > (1 + tol) * b) | (b > (1 + tol) * a)
    return np.flatnonzero(off(cap - loc_f, cap - f) | off(loc_f, f))


def min_cost_flow(inst: FlowInstance, params: StepParams | None = None, seed: int = 0,
                  max_iterations: int = 100000, measure_recall: bool = False) -> SolveResult:
    """Integral min-cost flow by the localized IPM followed by rounding.

    With params.skip_rounding the fractional IPM flow is returned as is,
    which only serves to check that validation notices the missing step.
    With measure_recall the first Solve of every MultiStep is compared with
    the dense step at the locator's state.
    """
    params = params or StepParams()
    rng = RngStream(seed, "min_cost_flow")
    if inst.m == 0:
        if inst.demand.any():
            raise InfeasibleError("no arcs but nonzero demands")
        return SolveResult(np.zeros(0, dtype=np.int64), 0, 0, 0.0)
    ai, state = initialize_instance(inst, tol=params.recenter_tol)
    aug = ai.inst
    m = aug.m
    cad = params.cadences(m)
    mu_stop = m ** -10.0
    mu_round = 1.0 / (4.0 * m)
    locator = None
    checker = None
    log = []
    counters = {"locator_inits": 0, "checker_inits": 0, "multisteps": 0, "rounds": 0, "rounding_attempts": 0,
                "newton_iterations": state.iterations, "checker_solves": 0, "locator_solve": 0,
                "locator_update": 0, "locator_batch_update": 0, "locator_add_terminal": 0,
                "z_total": 0, "z_max": 0, "recall_found": 0, "recall_total": 0, "fallbacks": 0}
    use_loc = params.algorithm == "ipm-localized"
    probe = None
    if measure_recall and use_loc:
        from .oracle import dense_electrical_step

        def probe(i, Z, loc):
            if i == 0:
                rho = dense_electrical_step(aug, loc.state_flow())[1]
                hot = np.flatnonzero(np.abs(rho) >= loc.p.eps)
                counters["recall_total"] += int(hot.size)
                counters["recall_found"] += int(np.isin(hot, Z).sum())

    def absorb(loc):
        if loc is not None:
            for key, v in loc.counters.items():
                if key != "initialize":
                    counters[f"locator_{key}"] += v

    result_flow = None
    it = 0
    while it < max_iterations:
        if use_loc and it % cad["locator"] == 0:
            absorb(locator)
            locator = Locator(aug, state.f, params.locator_params(), rng.child(f"locator{it}"))
            counters["locator_inits"] += 1
        if it % cad["checker"] == 0:
            if checker is not None:
                counters["checker_solves"] += checker.solves
            checker = Checker(aug, state.f, params.eps, params.beta_chk, rng.child(f"checker{it}"))
            counters["checker_inits"] += 1
        if use_loc and it % cad["batch_empty"] == 0:
            locator.batch_update(np.zeros(0, dtype=np.int64), locator.state_flow())
        t0 = time.perf_counter()
        state, info = multi_step(aug, state, locator, [checker] * params.rounds, params, probe=probe)
        t1 = time.perf_counter()
        counters["multisteps"] += 1
        counters["rounds"] += params.rounds
        counters["newton_iterations"] += info.recenter_iterations
        counters["z_total"] += int(sum(info.z_sizes))
        counters["z_max"] = max(counters["z_max"], int(max(info.z_sizes, default=0)))
        counters["fallbacks"] += int(info.fallback)
        # keep the data structures near the new central flow
        ref = locator.state_flow() if use_loc else checker.state_flow()
        if it % cad["T_hat"] == 0:
            Z = _drifted(ref, state.f, aug.cap, params.eps_solve / 16)
            checker.update_many(Z, state.f[Z])
            if use_loc:
                locator.batch_update(Z, _merge(locator.state_flow(), Z, state.f))
        else:
            Z = _drifted(ref, state.f, aug.cap, params.eps_solve / 8)
            checker.update_many(Z, state.f[Z])
            if use_loc and Z.size:
                try:
                    locator.update_many(Z, state.f[Z])
                except (ContractViolation, BudgetExceeded):
                    locator.initialize(state.f)
        if it % cad["refresh"] == 0:
            checker.refresh()
        log.append({
            "iteration": it, "mu": repr(state.mu), "rounds": params.rounds,
            "z_total": int(sum(info.z_sizes)), "z_max": int(max(info.z_sizes, default=0)),
            "nonzero_total": int(sum(info.nonzero)), "residual_before": repr(info.residual_before),
            "recenter_iters": info.recenter_iterations, "fallback": int(info.fallback),
            "locator_inits": counters["locator_inits"],
            "locator_updates": locator.counters["update"] if use_loc else 0,
            "batch_updates": locator.counters["batch_update"] if use_loc else 0,
            "t_multistep": f"{t1 - t0:.6f}", "t_recenter": f"{info.t_recenter:.6f}",
        })
        it += 1
        if state.mu <= mu_stop or (params.early_stop and state.mu <= mu_round):
            if params.skip_rounding:
                break
            counters["rounding_attempts"] += 1
            try:
                result_flow = round_to_integral(aug, state.f)
                break
            except RoundingError:
                if state.mu <= mu_stop:
                    raise
    else:
        raise CentralityError(f"no optimal flow after {max_iterations} MultiSteps")
    absorb(locator)
    if checker is not None:
        counters["checker_solves"] += checker.solves
    if params.skip_rounding:
        flow = state.f[: inst.m].copy()
        return SolveResult(flow, float(np.dot(inst.cost, flow)), it, state.mu, log, counters)
    flow = ai.map_back(result_flow)
    return SolveResult(flow, int(np.dot(inst.cost, flow)), it, state.mu, log, counters)


# ---------------------------------------------------------------- path tracing


@dataclass
class PathTrace:
    mus: list
    flows: list
    energy: list  # sum (1/(s+ s+') + 1/(s- s-')) (f' - f)^2 for each traced pair
    slack_ratio: list  # max slack ratio between the pair's end points
    conversion_violations: int


def approx_conversion_bounds(inst: FlowInstance, f: np.ndarray, f2: np.ndarray):
    """Per-edge (max relative slack change, sqrt(r) |df|) at the first flow."""
    sp_, sm = inst.cap - f, f
    df = f2 - f
    m_rel = np.maximum(np.abs(df) / sp_, np.abs(df) / sm)
    return m_rel, np.sqrt(resistances(sp_, sm)) * np.abs(df)


def trace_central_path(inst: FlowInstance, f_central: np.ndarray, mu0: float, steps: int, k: int = 1,
                       tol: float = 1e-12) -> PathTrace:
    """Exact central flows at mu0 / (1 + 1/sqrt(m))^j and stability statistics for pairs k apart."""
    ratio = 1.0 + 1.0 / math.sqrt(inst.m)
    state = recenter(inst, f_central, mu0, tol)
    mus, flows = [state.mu], [state.f.copy()]
    for _ in range(steps):
        state = recenter(inst, state.f, state.mu / ratio, tol)
        mus.append(state.mu)
        flows.append(state.f.copy())
    energy, slack_ratio, bad = [], [], 0
    cap = inst.cap.astype(float)
    for j in range(len(flows) - k):
        f, f2 = flows[j], flows[j + k]
        sp_, sm, sp2, sm2 = cap - f, f, cap - f2, f2
        df = f2 - f
        energy.append(float(np.sum((1 / (sp_ * sp2) + 1 / (sm * sm2)) * df * df)))
        ratios = np.concatenate([sp_ / sp2, sp2 / sp_, sm / sm2, sm2 / sm])
        slack_ratio.append(float(ratios.max()))
        lo, mid = approx_conversion_bounds(inst, f, f2)
        tol_abs = 1e-12 * np.maximum(1.0, mid)
        bad += int(np.sum(lo > mid + tol_abs) + np.sum(mid > math.sqrt(2) * lo + tol_abs))
    return PathTrace(mus, flows, energy, slack_ratio, bad)
