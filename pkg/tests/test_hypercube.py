from collections import deque

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gcnfabric.hypercube import (
    NUM_CORES,
    ArrivalOverflow,
    InvalidHop,
    LengthMismatch,
    LinkOveruse,
    channel,
    check_switch_constraints,
    neighbors,
    xor_array,
    xor_path_set,
)

cores = st.integers(0, NUM_CORES - 1)


def bfs_distances(src):
    """Hop distances from ``src`` using only the neighbour relation."""
    dist = {src: 0}
    q = deque([src])
    while q:
        u = q.popleft()
        for v in neighbors(u):
            if v not in dist:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def test_neighbors_examples():
    assert neighbors(0) == {1, 2, 4, 8}
    assert neighbors(15) == {14, 13, 11, 7}
    assert neighbors(5) == {4, 7, 1, 13}


def test_neighbors_are_hamming_one():
    for c in range(NUM_CORES):
        want = {o for o in range(NUM_CORES) if bin(o ^ c).count("1") == 1}
        assert neighbors(c) == want


def test_neighbors_rejects_bad_core():
    with pytest.raises(ValueError):
        neighbors(16)


def test_xor_path_set_examples():
    assert xor_path_set(0, 0) == (frozenset(), 0)
    assert xor_path_set(0b0000, 0b1111) == ({0b0001, 0b0010, 0b0100, 0b1000}, 4)
    assert xor_path_set(0b0101, 0b0110) == ({0b0111, 0b0100}, 2)


def test_path_sets_match_bfs_oracle():
    # next hops on some shortest path are neighbours one hop closer by BFS
    dist = {d: bfs_distances(d) for d in range(NUM_CORES)}
    for s in range(NUM_CORES):
        for d in range(NUM_CORES):
            hops, step = xor_path_set(s, d)
            assert step == dist[d][s]
            assert hops == {h for h in neighbors(s) if dist[d][h] == dist[d][s] - 1}


def test_xor_array_examples():
    sets, steps = xor_array([0, 0], [0, 15])
    assert sets == [frozenset(), frozenset({1, 2, 4, 8})]
    assert steps == [0, 4]
    sets, steps = xor_array(list(range(16)), list(range(16)))
    assert all(not s for s in sets) and steps == [0] * 16


def test_xor_array_length_mismatch():
    with pytest.raises(LengthMismatch):
        xor_array([0, 1], [2])


@given(st.lists(st.tuples(cores, cores), min_size=64, max_size=64))
def test_xor_array_elementwise(pairs):
    srcs, dsts = zip(*pairs)
    sets, steps = xor_array(srcs, dsts)
    for (s, d), hs, k in zip(pairs, sets, steps):
        assert (hs, k) == xor_path_set(s, d)


@given(cores, cores)
def test_path_set_properties(a, b):
    hops, step = xor_path_set(a, b)
    assert len(hops) == step == bin(a ^ b).count("1")
    assert xor_path_set(b, a)[1] == step
    for h in hops:
        assert xor_path_set(h, b)[1] == step - 1
        assert h in neighbors(a)


@given(cores)
def test_self_path_is_empty(a):
    assert xor_path_set(a, a) == (frozenset(), 0)


def test_channel_is_flipped_bit():
    assert channel(0, 1) == 0
    assert channel(12, 4) == 3
    with pytest.raises(InvalidHop):
        channel(0, 3)
    with pytest.raises(InvalidHop):
        channel(5, 5)


def test_constraint_examples():
    assert check_switch_constraints({"m1": (0, 1)}) == []
    assert check_switch_constraints({"m1": (0, 1), "m2": (0, 1)}) == [LinkOveruse(0, 1, 2)]


def test_arrival_overflow_needs_five_senders():
    # a 4-cube core has only four in-links, so five distinct senders can only
    # be expressed with the adjacency precondition lifted
    senders = [6, 5, 3, 15, 0]
    msgs = {f"m{k}": (s, 7) for k, s in enumerate(senders)}
    with pytest.raises(InvalidHop):
        check_switch_constraints(msgs)
    assert check_switch_constraints(msgs, require_adjacent=False) == [ArrivalOverflow(7, 5)]


def test_four_arrivals_are_fine():
    msgs = {k: (s, 7) for k, s in enumerate([6, 5, 3, 15])}
    assert check_switch_constraints(msgs) == []


def test_holds_use_no_link():
    assert check_switch_constraints({1: (3, 3), 2: (3, 3), 3: (3, 2)}) == []


def test_non_adjacent_hop_rejected():
    with pytest.raises(InvalidHop):
        check_switch_constraints({"m": (0, 3)})


@given(st.dictionaries(st.integers(0, 63), st.tuples(cores, st.integers(0, 3)), max_size=64))
def test_checker_matches_counting_oracle(raw):
    moves = {k: (a, a ^ (1 << bit)) for k, (a, bit) in raw.items()}
    got = check_switch_constraints(moves)
    links, arrivals = {}, {}
    for a, b in moves.values():
        links[(a, b)] = links.get((a, b), 0) + 1
        arrivals[b] = arrivals.get(b, 0) + 1
    assert {(v.src, v.dst) for v in got if isinstance(v, LinkOveruse)} == {l for l, n in links.items() if n > 1}
    # with one in-link per neighbour, arrival overflow implies link reuse
    assert not [v for v in got if isinstance(v, ArrivalOverflow)] or any(n > 1 for n in links.values())
