import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from electroflow.errors import ResourceError
from electroflow.graph import make_instance
from electroflow.walks import (TransitionTable, WalkPool, build_congestion_reduction_subset, build_walk_pool,
                               check_congestion_reduction, hitting_probabilities_exact, pool_pairs, sample_walk,
                               simulate_walks, step_budget)

from _support import dense_laplacian, grid_graph, path_graph, random_graph


def _adjacent(inst):
    adj = set()
    for a, b in inst.edges:
        adj.add((a, b))
        adj.add((b, a))
    return adj


def test_hitting_probability_example():
    # from the middle of a path with resistances 1 and 3 the walk reaches end 0 w.p. 3/4
    inst = path_graph([1.0, 3.0])
    p = hitting_probabilities_exact(inst, [0, 2], np.array([1.0, 3.0]), 1)
    assert p.tolist() == pytest.approx([0.75, 0.0, 0.25])
    assert hitting_probabilities_exact(inst, [0, 2], np.array([1.0, 3.0]), 0).tolist() == [1.0, 0.0, 0.0]
    with pytest.raises(ValueError):
        hitting_probabilities_exact(inst, [], np.ones(2), 1)


def test_star_leaf_hitting_probability():
    # star on center 0 with leaves 1..3, C = {1, 2}: leaf 3 goes to the center then a uniform neighbor
    inst = make_instance(4, [(0, 1), (0, 2), (0, 3)], [1] * 3, [1] * 3, [0] * 4)
    p = hitting_probabilities_exact(inst, [1, 2], np.ones(3), 3)
    assert p[1] == pytest.approx(0.5) and p[2] == pytest.approx(0.5)
    # unequal conductances: leaf 1 has twice the conductance of leaf 2
    p = hitting_probabilities_exact(inst, [1, 2], np.array([1.0, 2.0, 1.0]), 0)
    assert p[1] == pytest.approx(2 / 3)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 14), st.integers(0, 12), st.integers(0, 2**32 - 1))
def test_hitting_probabilities_are_a_distribution_and_harmonic(n, extra, seed):
    gen = np.random.default_rng(seed)
    inst, r = random_graph(gen, n, extra)
    C = gen.choice(n, size=int(gen.integers(1, n)), replace=False)
    inC = np.zeros(n, dtype=bool)
    inC[C] = True
    H = np.array([hitting_probabilities_exact(inst, C, r, u) for u in range(n)])
    assert np.allclose(H.sum(axis=1), 1.0)
    assert np.all(H >= -1e-12)
    assert np.all(H[:, ~inC] == 0)
    # harmonic off C: L H = 0 on outside rows
    L = dense_laplacian(inst, r)
    assert np.allclose((L @ H)[~inC], 0.0, atol=1e-9)


def test_sample_walk_is_a_path_that_stops_at_first_terminal():
    gen = np.random.default_rng(1)
    inst, r = random_graph(gen, 15, 10)
    adj = _adjacent(inst)
    C = {0, 7}
    for seed in range(50):
        walk = sample_walk(inst, 3, C, r, seed)
        assert walk[0] == 3 and walk[-1] in C
        assert all(v not in C for v in walk[:-1])
        assert all((a, b) in adj for a, b in zip(walk, walk[1:]))
    assert sample_walk(inst, 7, C, r, 0) == [7]


def test_walk_frequencies_match_exact_hitting_probabilities():
    gen = np.random.default_rng(2)
    inst, r = random_graph(gen, 12, 8, r_spread=1.5)
    C = [0, 4, 9]
    inC = np.zeros(inst.n, dtype=bool)
    inC[C] = True
    table = TransitionTable(inst.n, inst.tails, inst.heads, r)
    N = 20000
    ends = simulate_walks(table, np.full(N, 5), inC, np.random.default_rng(3), record=False)
    p = hitting_probabilities_exact(inst, C, r, 5)
    freq = np.bincount(ends, minlength=inst.n) / N
    sigma = np.sqrt(p * (1 - p) / N)
    assert np.all(np.abs(freq - p) <= 5 * sigma + 1e-12)


def test_exit_sampling_preserves_the_end_distribution():
    # walks from the middle of a long path usually outlast the step budget
    n = 41
    inst = path_graph([1.0] * (n - 1))
    inC = np.zeros(n, dtype=bool)
    inC[[0, n - 1]] = True
    table = TransitionTable(n, inst.tails, inst.heads, np.ones(n - 1))
    N = 3000
    flat, off = simulate_walks(table, np.full(N, 10), inC, np.random.default_rng(4))
    lens = np.diff(off)
    assert lens.max() > step_budget(n)  # first-visit tails were used
    ends = flat[off[1:] - 1]
    assert set(ends.tolist()) <= {0, n - 1}
    p = 30 / 40  # gambler's ruin: reach 0 before 40 from 10
    freq = np.mean(ends == 0)
    assert abs(freq - p) <= 5 * math.sqrt(p * (1 - p) / N)
    for i in range(0, N, 97):
        w = flat[off[i]:off[i + 1]]
        assert w[0] == 10 and not inC[w[:-1]].any()


def test_simulate_walks_storage_budget():
    inst = path_graph([1.0] * 10)
    inC = np.zeros(11, dtype=bool)
    inC[0] = True
    table = TransitionTable(11, inst.tails, inst.heads, np.ones(10))
    with pytest.raises(ResourceError):
        simulate_walks(table, np.full(50, 10), inC, np.random.default_rng(0), max_entries=100)


def test_congestion_reduction_subset_properties():
    for seed in range(5):
        gen = np.random.default_rng(seed)
        inst, r = random_graph(gen, 40, 60)
        sub = build_congestion_reduction_subset(inst, r, 0.3, seed)
        ends = set(inst.tails[sub.sampled_edges].tolist()) | set(inst.heads[sub.sampled_edges].tolist())
        assert ends <= set(sub.C.tolist())
        assert sub.sampled_edges.size == math.ceil(0.3 * inst.m)
        rep = check_congestion_reduction(inst, sub.C, r, 0.3, rng=seed + 100)
        assert rep.ok, rep
    with pytest.raises(ValueError):
        build_congestion_reduction_subset(inst, r, 0.0, 0)


def test_congestion_check_flags_a_bad_subset():
    inst = path_graph([1.0] * 60)
    rep = check_congestion_reduction(inst, [0], np.ones(60), beta=0.9, rng=0)
    assert not rep.hitting_ok


def _pool_fixture(seed=0, h=5):
    gen = np.random.default_rng(seed)
    inst, r = random_graph(gen, 18, 14)
    C = [0, 6, 11]
    return inst, r, C, build_walk_pool(inst, C, r, h, seed + 1)


def test_pool_pairs_cover_outside_endpoints():
    inst, r, C, pool = _pool_fixture()
    inC = np.zeros(inst.n, dtype=bool)
    inC[C] = True
    pv, pe, ps = pool_pairs(inst, inC)
    expect = sorted((u, e) for e, (a, b) in enumerate(inst.edges) for u in (a, b) if not inC[u])
    assert sorted(zip(pv.tolist(), pe.tolist())) == expect
    assert np.all((ps == 1) == (inst.tails[pe] == pv))
    assert pool.walk_count == pv.size * pool.h


def test_pool_walks_and_index_are_consistent():
    inst, r, C, pool = _pool_fixture()
    adj = _adjacent(inst)
    inC = np.zeros(inst.n, dtype=bool)
    inC[C] = True
    for i in range(pool.walk_count):
        w = pool.walk(i)
        assert w[0] == pool.pair_vertex[pool.walk_pair[i]]
        assert inC[w[-1]] and not inC[w[:-1]].any()
        assert all((int(a), int(b)) in adj for a, b in zip(w, w[1:]))
    for v in range(inst.n):
        ws, ps = pool.occurrences(v)
        for i, p in zip(ws.tolist(), ps.tolist()):
            w = pool.walk(i)
            assert w[p] == v and v not in w[:p].tolist()
        brute = [i for i in range(pool.walk_count) if v in pool.walk(i).tolist()]
        assert sorted(pool.containing(v).tolist()) == brute


def test_shortcut_truncates_at_first_visit():
    inst, r, C, pool = _pool_fixture()
    lens = pool.lengths.copy()
    v = 3
    before = {i: pool.walk(i, lens).tolist() for i in range(pool.walk_count)}
    changed = set(pool.shortcut(v, lens).tolist())
    for i, w in before.items():
        if v in w:
            assert pool.walk(i, lens).tolist() == w[: w.index(v) + 1]
            assert (i in changed) == (w.index(v) + 1 < len(w))
        else:
            assert pool.walk(i, lens).tolist() == w
    assert np.all(pool.endpoints(lens)[list(changed)] == v)
    assert np.array_equal(pool.lengths, np.diff(pool.offsets))  # default lengths untouched


def test_pool_save_load_round_trip(tmp_path):
    inst, r, C, pool = _pool_fixture(h=3)
    pool.shortcut(4)
    path = tmp_path / "pool.bin"
    pool.save(path)
    back = WalkPool.load(path)
    assert back.n == pool.n and back.h == pool.h
    for name in ("pair_vertex", "pair_edge", "pair_sign", "walk_pair", "flat", "offsets", "lengths",
                 "index_walk", "index_pos", "index_start"):
        assert np.array_equal(getattr(back, name), getattr(pool, name)), name
    (tmp_path / "bad.bin").write_bytes(b"nope")
    with pytest.raises(ValueError):
        WalkPool.load(tmp_path / "bad.bin")


def test_pool_is_deterministic():
    a = _pool_fixture(seed=4)[3]
    b = _pool_fixture(seed=4)[3]
    assert np.array_equal(a.flat, b.flat) and np.array_equal(a.offsets, b.offsets)


def test_grid_pool_end_frequencies():
    inst = grid_graph(4, 4)
    r = np.ones(inst.m)
    C = [0, 15]
    pool = build_walk_pool(inst, C, r, 400, 9)
    ends = pool.endpoints()
    for pair in range(pool.pair_vertex.size):
        u = int(pool.pair_vertex[pair])
        p = hitting_probabilities_exact(inst, C, r, u)[0]
        freq = np.mean(ends[pool.walk_pair == pair] == 0)
        assert abs(freq - p) <= 5 * math.sqrt(p * (1 - p) / 400) + 1e-9
