import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from electroflow.errors import ContractViolation, SingularityError
from electroflow.graph import make_instance
from electroflow.linalg import LaplacianOperator, laplacian_solve, schur_complement
from electroflow.schur import SchurState, sc_add_terminal, sc_initialize, sc_query, sc_rollback, sc_update

from _support import contracted_resistance, dense_laplacian, dense_projection, path_graph, random_graph

cases = st.tuples(st.integers(4, 14), st.integers(0, 14), st.integers(0, 2**32 - 1))


def _state(n, extra, seed):
    gen = np.random.default_rng(seed)
    inst, r = random_graph(gen, n, extra)
    C = gen.choice(n, size=int(gen.integers(1, n - 1)), replace=False)
    return gen, inst, r, C, SchurState(inst, C, r)


def test_path_example():
    inst = path_graph([1.0, 1.0])
    st_ = sc_initialize(inst, [0, 2], np.ones(2))
    assert np.allclose(sc_query(st_), [[0.5, -0.5], [-0.5, 0.5]])
    assert st_.resistance_to_terminals(1) == pytest.approx(0.5)
    assert sc_add_terminal(st_, 1) == pytest.approx(0.5)
    assert np.allclose(st_.sc(), dense_laplacian(inst, np.ones(2)))


@settings(max_examples=30, deadline=None)
@given(cases)
def test_sc_matches_direct_elimination(c):
    gen, inst, r, C, s = _state(*c)
    L = LaplacianOperator(inst, r)
    assert np.allclose(s.sc(), schur_complement(L, np.sort(C)), atol=1e-10)
    assert s.sc().shape == (len(C), len(C))


@settings(max_examples=30, deadline=None)
@given(cases)
def test_add_terminal_returns_resistance_and_keeps_sc_exact(c):
    gen, inst, r, C, s = _state(*c)
    L = LaplacianOperator(inst, r)
    outside = [v for v in range(inst.n) if v not in set(C.tolist())]
    for v in gen.permutation(outside)[:3].tolist():
        R = s.resistance_to_terminals(v)
        assert R == pytest.approx(contracted_resistance(inst, r, s.terminals, [v]), rel=1e-8)
        assert s.add_terminal(v) == pytest.approx(R, rel=1e-12)
        assert np.allclose(s.sc(), schur_complement(L, s.terminals), atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(cases)
def test_rollback_restores_state_exactly(c):
    gen, inst, r, C, s = _state(*c)
    sc0, inv0, F0, L0, r0 = s.sc().copy(), s.inv.copy(), s.F.copy(), s.L.copy(), s.r.copy()
    outside = np.flatnonzero(~s.inC)
    v = int(outside[0])
    s.add_terminal(v)
    inside = [e for e in range(inst.m) if s.inC[inst.tails[e]] and s.inC[inst.heads[e]]]
    if inside:
        s.update(inside[0], 7.0)
        s.update_many(np.array(inside[:2]), np.array([0.3, 0.4])[: len(inside[:2])])
    while s.depth:
        sc_rollback(s)
    assert np.array_equal(s.inv, inv0) and np.array_equal(s.F, F0)
    assert np.array_equal(s.L, L0) and np.array_equal(s.r, r0)
    assert np.array_equal(s.sc(), sc0)
    with pytest.raises(ContractViolation):
        s.rollback()


def test_update_matches_rebuild():
    gen = np.random.default_rng(0)
    inst, r = random_graph(gen, 12, 14)
    C = list(range(6))
    s = SchurState(inst, C, r)
    inside = [e for e in range(inst.m) if inst.tails[e] < 6 and inst.heads[e] < 6]
    assert inside
    r2 = r.copy()
    for e in inside:
        r2[e] *= 3.0
    s.update_many(np.array(inside), r2[inside])
    fresh = SchurState(inst, C, r2)
    assert np.allclose(s.sc(), fresh.sc(), atol=1e-12)
    sc_update(s, inside[0], r[inside[0]])
    r2[inside[0]] = r[inside[0]]
    assert np.allclose(s.sc(), SchurState(inst, C, r2).sc(), atol=1e-12)
    outside_edge = next(e for e in range(inst.m) if inst.tails[e] >= 6 or inst.heads[e] >= 6)
    with pytest.raises(ContractViolation):
        s.update(outside_edge, 1.0)


@settings(max_examples=30, deadline=None)
@given(cases)
def test_potentials_and_projection(c):
    gen, inst, r, C, s = _state(*c)
    L = LaplacianOperator(inst, r)
    Ld = dense_laplacian(inst, r)
    d = gen.normal(size=inst.n)
    d -= d.mean()
    pi = s.project(d)
    assert np.allclose(pi, dense_projection(Ld, C, d), atol=1e-9)
    assert pi.sum() == pytest.approx(0.0, abs=1e-9)
    # on C, potentials of the projected demand are those of d up to a constant
    Cv = s.terminals
    ref = laplacian_solve(L, d)
    diff = s.potentials(pi[Cv])[Cv] - ref[Cv]
    assert np.allclose(diff, diff.mean(), atol=1e-8 * max(1.0, np.abs(ref).max()))
    # for demand supported on C they agree everywhere
    pi[Cv] -= pi.sum() / Cv.size  # remove round-off imbalance
    full = s.potentials(pi[Cv])
    ref = laplacian_solve(L, pi)
    diff = full - ref
    assert np.allclose(diff, diff.mean(), atol=1e-8 * max(1.0, np.abs(ref).max()))


def test_temporary_terminals_must_be_rolled_back():
    gen = np.random.default_rng(1)
    inst, r = random_graph(gen, 10, 5)
    s = SchurState(inst, [0], r, record=False)
    base = s.sc().copy()
    s.temporary_add_terminals([3, 4])
    with pytest.raises(ContractViolation):
        s.commit()
    s.rollback()
    s.rollback()
    s.commit()
    assert np.array_equal(s.sc(), base)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        assert s.add_terminal(0) == 0.0
        assert w


def test_unreachable_vertices_and_empty_terminal_set():
    inst = make_instance(4, [(0, 1), (2, 3)], [1, 1], [1, 1], [0] * 4)
    s = SchurState(inst, [0], np.ones(2))
    assert s.resistance_to_terminals(2) == np.inf
    with pytest.raises(SingularityError):
        s.add_terminal(3)
    with pytest.raises(ContractViolation):
        SchurState(inst, [], np.ones(2))


def test_sc_solve_is_pseudoinverse():
    gen = np.random.default_rng(2)
    inst, r = random_graph(gen, 12, 10)
    s = SchurState(inst, [0, 3, 5, 8], r)
    b = gen.normal(size=4)
    b -= b.mean()
    x = s.sc_solve(b)
    assert np.allclose(x, np.linalg.pinv(s.sc(), hermitian=True) @ b, atol=1e-10)
    assert s.sc_solve(np.array([1.0])).tolist() == [0.0]
