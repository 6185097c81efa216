import math

import numpy as np
import pytest

from electroflow.errors import BudgetExceeded, ContractViolation
from electroflow.graph import RngStream
from electroflow.locator import (Locator, LocatorParams, g_from_slacks, important_edges, loc_batch_update,
                                 loc_initialize, loc_solve, loc_update, resistances, slacks)
from electroflow.oracle import dense_electrical_step
from electroflow.graph import make_instance

from _support import random_graph


def test_slack_formulas():
    assert resistances(np.array([1.0]), np.array([2.0])).tolist() == [1.25]
    assert g_from_slacks(np.array([1.0]), np.array([2.0])).tolist() == pytest.approx([0.4])
    assert g_from_slacks(np.array([3.0]), np.array([3.0])).tolist() == [0.0]
    inst = make_instance(2, [(0, 1)], [1], [4], [0, 0])
    sp, sm = slacks(inst, np.array([1.0]))
    assert sp.tolist() == [3.0] and sm.tolist() == [1.0]


def test_important_edges_mask():
    inst = make_instance(3, [(0, 1), (1, 2)], [1, 1], [1, 1], [0] * 3)
    R = np.array([0.0, 4.0, 16.0])
    mask = important_edges(inst, np.array([1.0, 1.0]), 0.5, R)
    # edge 0 touches a terminal; edge 1 has min resistance 4 and 4 * 0.25 <= 1
    assert mask.tolist() == [True, True]
    mask = important_edges(inst, np.array([1.0, 0.5]), 0.5, R)
    assert mask.tolist() == [True, False]


def test_parameter_defaults():
    p = LocatorParams(alpha=16.0, eps=0.1)
    assert p.eps_hat_value == pytest.approx(0.1 / 32)
    assert p.gamma_value == pytest.approx(0.1 / 64)
    assert p.insert_budget == 8
    assert LocatorParams(eps=0.1, eps_hat=0.1).insert_budget == 1


def _flow(seed, n=16, extra=20, U=6):
    gen = np.random.default_rng(seed)
    base, _ = random_graph(gen, n, extra)
    cap = gen.integers(2, U + 1, size=base.m)
    inst = make_instance(n, base.edges, np.ones(base.m, dtype=int), cap, np.zeros(n, dtype=int))
    f = cap * gen.uniform(0.1, 0.9, base.m)
    return gen, inst, f


def _congestion(inst, f):
    return dense_electrical_step(inst, f)[1]


def test_signal_is_exact_when_every_vertex_is_a_terminal():
    gen, inst, f = _flow(0)
    params = LocatorParams(beta=1.0, eps=0.2, resist_method="exact")
    loc = loc_initialize(inst, f, params, RngStream(0, "loc"))
    assert loc.terminals.size == inst.n
    assert np.allclose(loc.signal(), _congestion(inst, f), atol=1e-10)
    rho = _congestion(inst, f)
    Z = loc_solve(loc)
    assert set(np.flatnonzero(np.abs(rho) >= 0.2).tolist()) <= set(Z.tolist())
    assert Z.size <= math.floor(64 / 0.2**2)
    # after updates and an exact refresh the signal follows the new flow
    e = [0, 3]
    f2 = f.copy()
    f2[e] = f[e] * 1.1
    loc.update_many(np.array(e), f2[e])
    loc_batch_update(loc, np.zeros(0, dtype=np.int64), f2)
    assert np.allclose(loc.signal(), _congestion(inst, f2), atol=1e-10)


def test_recall_with_small_terminal_set():
    hits = total = 0
    for seed in range(6):
        gen, inst, f = _flow(seed, n=30, extra=40)
        eps = 0.1
        loc = Locator(inst, f, LocatorParams(beta=0.3, eps=eps), RngStream(seed, "loc"))
        rho = _congestion(inst, f)
        heavy = set(np.flatnonzero(np.abs(rho) >= eps).tolist())
        Z = set(loc.solve().tolist())
        hits += len(heavy & Z)
        total += len(heavy)
    assert total > 0 and hits >= 0.9 * total


def test_update_contracts():
    gen, inst, f = _flow(2)
    loc = Locator(inst, f, LocatorParams(beta=0.3, eps=0.1, alpha=4.0), RngStream(2, "loc"))
    with pytest.raises(ContractViolation):
        loc_update(loc, 0, float(inst.cap[0]))  # outside the capacity box
    # choose a flow whose resistance leaves the window of ratio alpha
    e = 1
    c = float(inst.cap[e])
    with pytest.raises(ContractViolation):
        loc.update(e, min(c * 0.999, 1e-3 if f[e] > c / 2 else c - 1e-3))
    with pytest.raises(ContractViolation):
        Locator(inst, np.zeros(inst.m), LocatorParams(), RngStream(0, "x"))


def test_touch_budget():
    gen, inst, f = _flow(3)
    loc = Locator(inst, f, LocatorParams(beta=0.1, eps=0.1, touch_budget=0.5), RngStream(3, "loc"))
    budget = loc.budget
    edges = np.arange(budget + 1)
    with pytest.raises(BudgetExceeded):
        loc.update_many(edges, f[edges] * 1.01)


def test_locator_is_deterministic():
    gen, inst, f = _flow(4)
    a = Locator(inst, f, LocatorParams(beta=0.3, eps=0.1), RngStream(9, "loc")).solve()
    b = Locator(inst, f, LocatorParams(beta=0.3, eps=0.1), RngStream(9, "loc")).solve()
    assert np.array_equal(a, b)


def test_counters():
    gen, inst, f = _flow(5)
    loc = Locator(inst, f, LocatorParams(beta=0.3, eps=0.1), RngStream(5, "loc"))
    loc.solve()
    loc.update(0, f[0] * 1.01)
    assert loc.counters["initialize"] == 1 and loc.counters["solve"] == 1
    assert loc.counters["update"] == 1 and loc.counters["batch_update"] >= 1
