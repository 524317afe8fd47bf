import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from groupcast.harq_core import ReceptionMatrix, TransportBlock
from groupcast.index_coder import (
    ORACLE_MAX_ROWS,
    build_conflict_graph,
    decodable,
    oracle_min_partition,
    plan_combinations,
    side_information,
    xor_decode,
    xor_encode,
)

PAIR = ReceptionMatrix.from_sets({1: {3}, 4: {2}}, ue_ids=[1, 2, 3])


def random_matrix(rng, rows, cols, p=0.3):
    sets = {}
    for pid in range(1, rows + 1):
        s = {u for u in range(cols) if rng.random() < p}
        sets[pid] = s or {int(rng.integers(cols))}
    return ReceptionMatrix.from_sets(sets, ue_ids=list(range(cols)))


def _brute_min(sets):
    # independent oracle: smallest k such that some assignment into k bins has
    # pairwise disjoint NACK sets inside every bin
    rows = list(sets.values())
    n = len(rows)
    for k in range(1, n + 1):
        for assign in itertools.product(range(k), repeat=n):
            ok = all(not (rows[i] & rows[j]) for i in range(n) for j in range(i + 1, n)
                     if assign[i] == assign[j])
            if ok:
                return k
    return n


# -- conflict graph ------------------------------------------------------------

def test_conflict_graph_examples():
    g = build_conflict_graph(PAIR)
    assert g.vertices == (1, 4) and not g.edges
    g = build_conflict_graph(ReceptionMatrix.from_sets({1: {1}, 2: {1, 2}}))
    assert g.edges == {(1, 2)} and g.has_edge(2, 1) and g.neighbours(1) == {2}
    k = 5
    g = build_conflict_graph(ReceptionMatrix.from_sets({i: {7} for i in range(k)}))
    assert len(g.edges) == k * (k - 1) // 2


def test_conflict_graph_rejects_acked_row():
    with pytest.raises(ValueError):
        build_conflict_graph(ReceptionMatrix.from_sets({1: {1}, 2: set()}, ue_ids=[1]))


@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.integers(1, 10))
def test_conflict_graph_edge_iff_intersection(seed, rows, cols):
    m = random_matrix(np.random.default_rng(seed), rows, cols)
    g = build_conflict_graph(m)
    sets = {p: m.nack_set(i) for i, p in enumerate(m.process_ids)}
    for a, b in itertools.combinations(m.process_ids, 2):
        assert g.has_edge(a, b) == bool(sets[a] & sets[b])
    assert all(a != b for a, b in g.edges)


# -- planning ------------------------------------------------------------------

def test_plan_disjoint_pair_single_allocation():
    plans = plan_combinations(PAIR)
    assert [p.components for p in plans] == [(1, 4)]
    assert plans[0].union_nack == {2, 3}


def test_plan_shared_ue_means_no_coding():
    m = ReceptionMatrix.from_sets({1: {5, 1}, 2: {5}, 3: {5, 2}})
    assert [p.m for p in plan_combinations(m)] == [1, 1, 1]


def test_plan_respects_cap_and_oldest_first():
    m = ReceptionMatrix.from_sets({i: {i} for i in range(1, 7)})
    plans = plan_combinations(m, max_m=4)
    assert [p.components for p in plans] == [(1, 2, 3, 4), (5, 6)]
    with pytest.raises(ValueError):
        plan_combinations(m, max_m=0)


def test_plan_length_is_largest_component():
    m = ReceptionMatrix.from_sets({1: {1}, 2: {2}}, ue_ids=[1, 2], tb_bytes=[40, 52])
    assert plan_combinations(m)[0].coded_length == 52


@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.integers(1, 10), st.integers(1, 5))
def test_plan_invariants(seed, rows, cols, cap):
    m = random_matrix(np.random.default_rng(seed), rows, cols)
    sets = {p: m.nack_set(i) for i, p in enumerate(m.process_ids)}
    plans = plan_combinations(m, max_m=cap)
    covered = [c for p in plans for c in p.components]
    assert sorted(covered) == sorted(m.process_ids)
    for p in plans:
        assert p.m <= cap and list(p.components) == sorted(p.components)
        for a, b in itertools.combinations(p.components, 2):
            assert not sets[a] & sets[b]
        assert p.union_nack == frozenset().union(*(sets[c] for c in p.components))
        assert decodable(p, sets)
        for u in p.union_nack:
            assert len(side_information(p, sets, u)) == p.m - 1


def test_oracle_sandwich_random_6x8():
    rng = np.random.default_rng(31)
    for _ in range(200):
        m = random_matrix(rng, 6, 8)
        best = oracle_min_partition(m)
        assert best <= len(plan_combinations(m, max_m=6)) <= m.n_rows


def test_resource_dominance():
    rng = np.random.default_rng(8)
    prb_of = lambda nbytes: -(-nbytes * 8 // 144)  # QPSK 1/2 one-PRB capacity
    for _ in range(300):
        m = random_matrix(rng, int(rng.integers(1, 8)), 6)
        lengths = [int(x) for x in rng.integers(20, 120, m.n_rows)]
        m = ReceptionMatrix(m.process_ids, m.ue_ids, m.nack, tuple(lengths))
        plans = plan_combinations(m)
        coded = sum(prb_of(p.coded_length) for p in plans)
        plain = sum(prb_of(n) for n in lengths)
        assert coded <= plain
        if all(p.m == 1 for p in plans):
            assert coded == plain


# -- oracle --------------------------------------------------------------------

def test_oracle_examples():
    assert oracle_min_partition(PAIR) == 1
    for k in (1, 3, 6):
        assert oracle_min_partition(ReceptionMatrix.from_sets({i: {0} for i in range(k)})) == k
        empty = ReceptionMatrix.from_sets({i: {i} for i in range(k)})
        assert oracle_min_partition(empty) == 1
        assert oracle_min_partition(empty, max_m=2) == -(-k // 2)
    assert oracle_min_partition(ReceptionMatrix.from_sets({})) == 0


def test_oracle_row_bound():
    m = ReceptionMatrix.from_sets({i: {i} for i in range(ORACLE_MAX_ROWS + 1)})
    with pytest.raises(ValueError):
        oracle_min_partition(m)


def test_oracle_matches_brute_force():
    rng = np.random.default_rng(12)
    for _ in range(60):
        m = random_matrix(rng, int(rng.integers(1, 7)), 5, p=0.35)
        sets = {p: m.nack_set(i) for i, p in enumerate(m.process_ids)}
        assert oracle_min_partition(m) == _brute_min(sets)


# -- XOR coding ----------------------------------------------------------------

def tb(i, data):
    return TransportBlock(i, 0, bytes(data))


def test_xor_examples():
    assert xor_encode([tb(1, [0xA5]), tb(2, [0x5A])]).data == b"\xff"
    assert xor_encode([tb(1, [0xFF]), tb(2, [0x0F, 0xF0])]).data == bytes([0xF0, 0xF0])
    x = bytes(range(30))
    assert xor_encode([tb(1, x), tb(2, x)]).data == bytes(30)
    with pytest.raises(ValueError):
        xor_encode([tb(1, x), tb(1, x)])
    with pytest.raises(ValueError):
        xor_encode([])


def test_xor_decode_pair_and_degenerate():
    t1, t4 = tb(1, b"first-process"), tb(4, b"fourth")
    coded = xor_encode([t1, t4])
    assert xor_decode(coded, [t1]).payload == t4.payload  # UE2 holds process 1
    assert xor_decode(coded, [t4]).payload == t1.payload  # UE3 holds process 4
    single = xor_encode([t1])
    assert xor_decode(single, []) == t1


def test_xor_decode_errors():
    a, b, c = tb(1, b"a"), tb(2, b"bb"), tb(3, b"ccc")
    coded = xor_encode([a, b, c])
    with pytest.raises(ValueError):
        xor_decode(coded, [a])
    with pytest.raises(ValueError):
        xor_decode(coded, [a, tb(9, b"z")])
    with pytest.raises(ValueError):
        xor_decode(coded, [a, b, c])


@given(st.lists(st.binary(min_size=1, max_size=64), min_size=1, max_size=6))
def test_xor_round_trip(payloads):
    comps = [tb(i, p) for i, p in enumerate(payloads)]
    coded = xor_encode(comps)
    assert coded.length == max(len(p) for p in payloads)
    for t in comps:
        assert xor_decode(coded, [c for c in comps if c is not t]) == t
