import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gcnfabric.graphprep import BlockMessage, Slot, StartVector
from gcnfabric.hypercube import check_switch_constraints, is_adjacent, popcount
from gcnfabric.router import (
    DELIVERED,
    HOLD,
    IDLE,
    INSTR_BITS,
    FieldOverflow,
    RoutingDivergence,
    RoutingInstruction,
    RoutingTable,
    audit_table,
    decode_instruction,
    encode_instruction,
    fill_cycle,
    filter_path_sets,
    generate_instructions,
    instructions_from_hex,
    instructions_to_hex,
    open_channel_bits,
    replay_instructions,
    route,
    route_vectors,
    sort_by_step,
)


def random_stimulus(seed: int, groups: int = 4, idle_frac: float = 0.0):
    """Start-vector-shaped stimulus: per group distinct sources, any destinations."""
    rng = np.random.default_rng(seed)
    srcs, dsts = [], []
    for _ in range(groups):
        s = rng.permutation(16)
        d = rng.integers(0, 16, 16)
        idle = rng.random(16) < idle_frac
        s[idle] = -1
        d[idle] = -1
        srcs.extend(s.tolist())
        dsts.extend(d.tolist())
    return srcs, dsts


stimuli = st.builds(
    lambda seed, g, idle: (random_stimulus(seed, g, idle), seed),
    st.integers(0, 2**32 - 1), st.integers(1, 4), st.sampled_from([0.0, 0.3]),
)


# --- sort / filter / fill -------------------------------------------------------------------

def test_sort_by_step_examples():
    assert sort_by_step([0, 0, 0]) == [0, 1, 2]
    assert sort_by_step([3, 1, 2]) == [1, 2, 0]
    assert sort_by_step([2, 2, 1, 4]) == [2, 0, 1, 3]


def test_filter_under_cap_unchanged():
    sets = [frozenset({0, 1}), frozenset({0}), frozenset({0, 5})]
    assert filter_path_sets(sets) == sets
    assert filter_path_sets([frozenset()] * 5) == [frozenset()] * 5


def test_filter_largest_first_example():
    # hop 0 held by six sets of sizes 4,3,3,2,1,1
    sets = [frozenset(s) for s in ({0, 1, 2, 3}, {0, 1, 2}, {0, 4, 5}, {0, 6}, {0}, {0})]
    out = filter_path_sets(sets)
    assert [0 in s for s in out] == [False, True, False, True, True, True]
    assert out[0] == {1, 2, 3} and out[2] == {4, 5}


@given(st.lists(st.frozensets(st.integers(0, 15), max_size=4), max_size=64))
def test_filter_properties(sets):
    out = filter_path_sets(sets)
    counts = {h: sum(h in s for s in sets) for h in range(16)}
    for h in range(16):
        assert sum(h in s for s in out) == min(counts[h], 4)
    for before, after in zip(sets, out):
        assert after <= before
        if all(counts[h] <= 4 for h in before):
            assert after == before


def test_fill_examples():
    rng = np.random.default_rng(0)
    row, _ = fill_cycle([frozenset({1})], [0], [0], [1], rng)
    assert row == [1]
    row, left = fill_cycle([frozenset({1}), frozenset({1})], [0, 1], [0, 0], [1, 1], rng)
    assert row == [1, HOLD]
    assert left == [frozenset(), frozenset()]


def test_fill_disjoint_demands_all_assigned():
    points = list(range(16))
    sets = [frozenset({p ^ 1}) for p in points]
    row, _ = fill_cycle(sets, list(range(16)), points, [1] * 16, np.random.default_rng(3))
    assert row == [p ^ 1 for p in points]
    assert check_switch_constraints({i: (p, h) for i, (p, h) in enumerate(zip(points, row))}) == []


def test_fill_marks_delivered_and_idle():
    row, _ = fill_cycle([frozenset(), frozenset(), frozenset({2})], [0, 2], [5, 5, 0], [0, 0, 1],
                        np.random.default_rng(0))
    assert row == [DELIVERED, IDLE, 2]


# --- route ----------------------------------------------------------------------------------

def test_route_already_delivered_has_no_rows():
    t = route_vectors(list(range(16)), list(range(16)), seed=1)
    assert t.cycles == 0 and audit_table(t) == []


def test_route_antipodal_takes_four_cycles():
    t = route_vectors([0], [15], seed=9)
    assert t.cycles == 4
    path = t.positions[:, 0].tolist()
    assert path[0] == 0 and path[-1] == 15
    assert all(is_adjacent(a, b) for a, b in zip(path, path[1:]))


@pytest.mark.parametrize("bit", range(4))
def test_route_single_bit_permutation_is_one_cycle(bit):
    t = route_vectors(list(range(16)), [i ^ (1 << bit) for i in range(16)], seed=bit)
    assert t.cycles == 1


def test_route_from_start_vector():
    msgs = BlockMessage(7, 0, {3: [(0, 1.0)]})
    sv = StartVector([Slot(0, 0, 3, msgs.source_core, msgs.dest_core)] + [None] * 63)
    t = route(sv, seed=5)
    assert t.cycles == 3 and t.width == 64
    assert list(t.active) == [0]


def test_local_message_delivered_at_row_zero():
    t = route_vectors([4, 0], [4, 15], seed=2)
    assert t.rows[0, 0] == DELIVERED
    assert (t.rows[:, 0] == DELIVERED).all()
    assert t.delivery_cycles().tolist() == [0, 4]


def test_safety_cap_raises():
    with pytest.raises(RoutingDivergence):
        route_vectors([0], [15], seed=0, cap_cycles=2)


def test_mismatched_idle_slot_rejected():
    with pytest.raises(ValueError):
        route_vectors([0, -1], [1, 3], seed=0)


@given(stimuli)
def test_route_invariants(case):
    (srcs, dsts), seed = case
    t = route_vectors(srcs, dsts, seed)
    assert audit_table(t) == []
    active = t.active
    for r in range(t.cycles):
        row, pos = t.rows[r], t.positions[r]
        for i in active:
            e = int(row[i])
            if e >= 0:
                assert popcount(e ^ dsts[i]) == popcount(int(pos[i]) ^ dsts[i]) - 1
            if r and t.rows[r - 1, i] == DELIVERED:
                assert e == DELIVERED
        for i in range(t.width):
            if srcs[i] < 0:
                assert row[i] == IDLE
    assert all(t.positions[-1, i] == dsts[i] for i in active)
    assert t.cycles <= 4 + 2 * len(active)


@given(stimuli)
def test_route_makes_progress(case):
    (srcs, dsts), seed = case
    t = route_vectors(srcs, dsts, seed)
    active = t.active

    def measure(r):
        pos = t.positions[r]
        remaining = sum(popcount(int(pos[i]) ^ dsts[i]) for i in active)
        delivered = sum(pos[i] == dsts[i] for i in active)
        held = 0 if r == 0 else int(sum(t.rows[r - 1, i] == HOLD for i in active))
        return remaining, delivered, held

    for r in range(t.cycles):
        rem0, del0, held0 = measure(r)
        rem1, del1, held1 = measure(r + 1)
        assert del1 > del0 or rem1 < rem0 or held1 < held0


@given(stimuli)
def test_route_is_deterministic(case):
    (srcs, dsts), seed = case
    a, b = route_vectors(srcs, dsts, seed), route_vectors(srcs, dsts, seed)
    assert np.array_equal(a.rows, b.rows)


def test_table_text_round_trip():
    srcs, dsts = random_stimulus(11, 4, 0.2)
    t = route_vectors(srcs, dsts, 11)
    text = t.to_text()
    assert text.count("\n") == t.cycles
    assert all(len(line.split(",")) == 64 for line in text.splitlines())
    back = RoutingTable.from_text(text, srcs, dsts, 11)
    assert np.array_equal(back.rows, t.rows)
    assert np.array_equal(back.positions, t.positions)


# --- instruction codec ----------------------------------------------------------------------

def test_codec_anchors():
    assert encode_instruction(RoutingInstruction()) == 0
    assert encode_instruction(RoutingInstruction(head=1)) == 1 << 24
    w = encode_instruction(RoutingInstruction(1, 0xF, 0xF, 0xFFF, 0xF))
    assert w == (1 << INSTR_BITS) - 1


def test_codec_field_overflow():
    with pytest.raises(FieldOverflow):
        encode_instruction(RoutingInstruction(receive_signal=16))
    with pytest.raises(FieldOverflow):
        encode_instruction(RoutingInstruction(head=2))
    with pytest.raises(FieldOverflow):
        decode_instruction(1 << 25)


instructions = st.builds(RoutingInstruction, st.integers(0, 1), st.integers(0, 15), st.integers(0, 15),
                         st.integers(0, 4095), st.integers(0, 15))


@given(instructions)
def test_codec_round_trip(ins):
    w = encode_instruction(ins)
    assert 0 <= w < 1 << 25
    assert decode_instruction(w) == ins


@given(st.integers(0, (1 << 25) - 1))
def test_decode_encode_is_identity_on_words(w):
    assert encode_instruction(decode_instruction(w)) == w


def test_open_channel_layout():
    assert open_channel_bits({0: False}) == 0b001
    assert open_channel_bits({1: True}) == 0b011 << 3
    ins = RoutingInstruction(open_channel=open_channel_bits({3: True, 0: False}))
    assert ins.channels() == {0: False, 3: True}


def test_zero_row_table_gives_headers_only():
    t = route_vectors([-1] * 64, [-1] * 64, seed=0)
    streams = generate_instructions(t)
    assert sorted(streams) == list(range(16))
    for p, s in streams.items():
        assert s == [RoutingInstruction(head=1, send_id=p)]


def test_single_hop_instructions():
    t = route_vectors([0], [1], seed=0)
    assert t.rows.tolist() == [[1]]
    s = generate_instructions(t, [BlockMessage(1, 0, {0: [(0, 1.0)]})])
    hdr, move = s[0]
    assert hdr.head == 1 and hdr.destination_id == 1
    assert move.channels() == {0: False} and move.send_id == 1 and move.destination_id == 1
    assert s[1][1].receive_signal == 0b0001
    assert all(w.receive_signal == 0 and not w.channels() for p in range(2, 16) for w in s[p][1:])


def test_instructions_require_known_messages():
    t = route_vectors([0], [1], seed=0)
    with pytest.raises(ValueError):
        generate_instructions(t, [BlockMessage(2, 0, {})])


@given(stimuli)
def test_instruction_replay_reproduces_table(case):
    (srcs, dsts), seed = case
    t = route_vectors(srcs, dsts, seed)
    streams = generate_instructions(t)
    for s in streams.values():
        assert s[0].head == 1
        assert all(decode_instruction(encode_instruction(w)) == w for w in s)
    rows = replay_instructions(streams, srcs, dsts)
    assert np.array_equal(rows, t.rows)


def test_hex_stream_round_trip():
    srcs, dsts = random_stimulus(4)
    streams = generate_instructions(route_vectors(srcs, dsts, 4))
    for s in streams.values():
        text = instructions_to_hex(s)
        assert all(len(line) == 7 for line in text.splitlines())
        assert instructions_from_hex(text) == s
