"""Parallel multicast routing on the 4-cube and the 25-bit instruction stream.

Every cycle the router recomputes the XOR path sets of all in-flight
messages, orders messages shortest-remaining-distance first, thins path sets
so no core is a candidate for more than four messages, then fills the cycle's
next hops in priority order with a seeded random choice.  After each fill,
hops that would reuse the chosen link or overflow the receiver are removed
from the remaining sets.  Messages left with an empty set wait one cycle in
the virtual channel of their current core.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .graphprep import BlockMessage, StartVector
from .hypercube import (
    DIMS,
    MAX_ARRIVALS,
    NUM_CORES,
    channel,
    check_switch_constraints,
    popcount,
    xor_array,
)

HOLD = -1
DELIVERED = -2
IDLE = -3


class RoutingDivergence(RuntimeError):
    pass


class FieldOverflow(ValueError):
    pass


class ReplayMismatch(RuntimeError):
    pass


@dataclass
class RoutingTable:
    sources: np.ndarray
    dests: np.ndarray
    seed: int
    rows: np.ndarray  # (cycles, slots): next hop, HOLD, DELIVERED or IDLE
    positions: np.ndarray  # (cycles + 1, slots): location before each row; -1 when idle

    @property
    def cycles(self) -> int:
        return len(self.rows)

    @property
    def width(self) -> int:
        return len(self.sources)

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.sources >= 0)

    def assignments(self, t: int) -> dict[int, tuple[int, int]]:
        """Slot -> (from, to) for row ``t``; holds map a core to itself."""
        out = {}
        for i in self.active:
            e = int(self.rows[t, i])
            p = int(self.positions[t, i])
            if e >= 0:
                out[int(i)] = (p, e)
            elif e == HOLD:
                out[int(i)] = (p, p)
        return out

    def delivery_cycles(self) -> np.ndarray:
        """Number of routing cycles until each slot sits at its destination (-1 if idle)."""
        out = np.full(self.width, -1, dtype=np.int64)
        for i in self.active:
            at = np.flatnonzero(self.positions[:, i] == self.dests[i])
            out[i] = at[0]
        return out

    def held_per_core(self) -> np.ndarray:
        """(cycles, cores) count of messages parked in each core's virtual channel."""
        out = np.zeros((self.cycles, NUM_CORES), dtype=np.int64)
        for t in range(self.cycles):
            held = self.rows[t] == HOLD
            np.add.at(out[t], self.positions[t][held], 1)
        return out

    def to_text(self) -> str:
        lines = []
        for r in self.rows:
            lines.append(",".join(str(int(e)) if e >= 0 else ("x" if e == HOLD else "-") for e in r))
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text: str, sources: Sequence[int], dests: Sequence[int], seed: int = 0) -> "RoutingTable":
        src = np.asarray(sources, dtype=np.int64)
        dst = np.asarray(dests, dtype=np.int64)
        rows = []
        for line in text.splitlines():
            if not line.strip():
                continue
            cells = line.strip().split(",")
            if len(cells) != len(src):
                raise ValueError(f"row has {len(cells)} entries, expected {len(src)}")
            row = []
            for i, cell in enumerate(cells):
                if cell == "x":
                    row.append(HOLD)
                elif cell == "-":
                    row.append(IDLE if src[i] < 0 else DELIVERED)
                else:
                    row.append(int(cell))
            rows.append(row)
        rows_arr = np.array(rows, dtype=np.int64).reshape(len(rows), len(src))
        return cls(src, dst, seed, rows_arr, _positions(src, rows_arr))


def _positions(sources: np.ndarray, rows: np.ndarray) -> np.ndarray:
    pos = np.empty((len(rows) + 1, len(sources)), dtype=np.int64)
    pos[0] = sources
    for t, r in enumerate(rows):
        pos[t + 1] = np.where(r >= 0, r, pos[t])
    return pos


def sort_by_step(steps: Sequence[int]) -> list[int]:
    return [int(i) for i in np.argsort(np.asarray(steps), kind="stable")]


def filter_path_sets(sets: Sequence[frozenset[int] | set[int]], cap: int = MAX_ARRIVALS,
                     num_cores: int = NUM_CORES) -> list[frozenset[int]]:
    """Cap how many path sets may name the same next-hop core.

    For an oversubscribed core the hop is dropped from the set with the most
    alternatives first (higher slot index on ties), recomputing set sizes
    after every removal.
    """
    work = [set(s) for s in sets]
    for h in range(num_cores):
        holders = [i for i, s in enumerate(work) if h in s]
        while len(holders) > cap:
            victim = max(holders, key=lambda i: (len(work[i]), i))
            work[victim].discard(h)
            holders.remove(victim)
    return [frozenset(s) for s in work]


def fill_cycle(
    sets: Sequence[frozenset[int]],
    order: Sequence[int],
    points: Sequence[int],
    steps: Sequence[int],
    rng: np.random.Generator,
    cap: int = MAX_ARRIVALS,
) -> tuple[list[int], list[frozenset[int]]]:
    """Assign one cycle of next hops in priority order.

    Slots outside ``order`` are reported IDLE.  Returns the row and the path
    sets as left by the conflict remover.
    """
    work = [set(s) for s in sets]
    row = [IDLE] * len(work)
    arrivals: Counter[int] = Counter()
    for i in order:
        if steps[i] == 0:
            row[i] = DELIVERED
            continue
        if not work[i]:
            row[i] = HOLD
            continue
        cand = sorted(work[i])
        h = cand[int(rng.integers(len(cand)))]
        row[i] = h
        arrivals[h] += 1
        work[i] = set()
        p = points[i]
        full = arrivals[h] >= cap
        for j in order:
            if work[j] and h in work[j] and (full or points[j] == p):
                work[j].discard(h)
    return row, [frozenset(s) for s in work]


def _canonicalize(row: list[int], points: Sequence[int], dests: Sequence[int],
                  was_held: Sequence[bool]) -> list[int]:
    """Reorder decisions among interchangeable messages.

    Messages sharing (position, destination, buffer kind) are
    indistinguishable to the switch.  Giving their moves to the lowest slot
    ids, in ascending channel order, lets an instruction stream that names
    only (channel, destination, buffer kind) identify each message uniquely.
    """
    buckets: dict[tuple[int, int, bool], list[int]] = {}
    for i, e in enumerate(row):
        if e >= 0 or e == HOLD:
            buckets.setdefault((points[i], dests[i], bool(was_held[i])), []).append(i)
    out = list(row)
    for (p, _, _), slots in buckets.items():
        if len(slots) < 2:
            continue
        moves = sorted((row[i] for i in slots if row[i] >= 0), key=lambda h: channel(p, h))
        moves += [HOLD] * (len(slots) - len(moves))
        for i, e in zip(sorted(slots), moves):
            out[i] = e
    return out


def route_vectors(sources: Sequence[int], dests: Sequence[int], seed: int,
                  cap_cycles: int | None = None) -> RoutingTable:
    src = np.asarray(sources, dtype=np.int64)
    dst = np.asarray(dests, dtype=np.int64)
    if src.shape != dst.shape:
        raise ValueError("sources and destinations differ in length")
    if np.any((src < 0) != (dst < 0)):
        raise ValueError("a slot is idle on one side only")
    active = [int(i) for i in np.flatnonzero(src >= 0)]
    if cap_cycles is None:
        cap_cycles = DIMS + 2 * len(active)
    rng = np.random.default_rng(seed)

    points = src.tolist()
    was_held = [False] * len(src)
    rows: list[list[int]] = []
    while True:
        sets, steps = xor_array([points[i] for i in active], [int(dst[i]) for i in active])
        if not any(steps):
            break
        if len(rows) >= cap_cycles:
            raise RoutingDivergence(f"routing exceeded {cap_cycles} cycles (seed {seed})")
        full_sets: list[frozenset[int]] = [frozenset()] * len(src)
        full_steps = [0] * len(src)
        for k, i in enumerate(active):
            full_sets[i] = sets[k]
            full_steps[i] = steps[k]
        order = [active[k] for k in sort_by_step(steps)]
        filtered = filter_path_sets(full_sets)
        row, _ = fill_cycle(filtered, order, points, full_steps, rng)
        row = _canonicalize(row, points, dst.tolist(), was_held)
        rows.append(row)
        for i in active:
            if row[i] >= 0:
                points[i] = row[i]
        was_held = [e == HOLD for e in row]

    rows_arr = np.array(rows, dtype=np.int64).reshape(len(rows), len(src))
    return RoutingTable(src, dst, int(seed), rows_arr, _positions(src, rows_arr))


def route(start: StartVector, seed: int, cap_cycles: int | None = None) -> RoutingTable:
    start.validate()
    return route_vectors(start.sources, start.dests, seed, cap_cycles)


def audit_table(table: RoutingTable) -> list[tuple[int, object]]:
    """Every (cycle, violation) plus any invalid or non-shortest hop."""
    problems: list[tuple[int, object]] = []
    for t in range(table.cycles):
        a = table.assignments(t)
        for i, (p, h) in a.items():
            if p != h and popcount(h ^ table.dests[i]) != popcount(p ^ table.dests[i]) - 1:
                problems.append((t, f"slot {i}: {p}->{h} does not approach {table.dests[i]}"))
        problems.extend((t, v) for v in check_switch_constraints(a))
    last = table.positions[-1]
    for i in table.active:
        if last[i] != table.dests[i]:
            problems.append((table.cycles, f"slot {i} ends at {last[i]}, not {table.dests[i]}"))
    return problems


# --- instructions -------------------------------------------------------------------------

INSTR_BITS = 25
_FIELDS = (  # name, lsb, width
    ("head", 24, 1),
    ("receive_signal", 20, 4),
    ("send_id", 16, 4),
    ("open_channel", 4, 12),
    ("destination_id", 0, 4),
)
OPEN, VIRTUAL = 0b001, 0b010  # per-channel 3-bit group; bit 2 reserved


@dataclass(frozen=True)
class RoutingInstruction:
    head: int = 0
    receive_signal: int = 0
    send_id: int = 0
    open_channel: int = 0
    destination_id: int = 0

    def channels(self) -> dict[int, bool]:
        """Open outgoing channels mapped to True when fed from the virtual buffer."""
        out = {}
        for k in range(DIMS):
            g = self.open_channel >> (3 * k) & 0b111
            if g & OPEN:
                out[k] = bool(g & VIRTUAL)
        return out


def open_channel_bits(channels: Mapping[int, bool]) -> int:
    v = 0
    for k, virtual in channels.items():
        v |= (OPEN | (VIRTUAL if virtual else 0)) << (3 * k)
    return v


def encode_instruction(ins: RoutingInstruction) -> int:
    word = 0
    for name, lsb, width in _FIELDS:
        v = getattr(ins, name)
        if not 0 <= v < (1 << width):
            raise FieldOverflow(f"{name}={v} does not fit in {width} bits")
        word |= v << lsb
    return word


def decode_instruction(word: int) -> RoutingInstruction:
    if not 0 <= word < (1 << INSTR_BITS):
        raise FieldOverflow(f"word {word:#x} wider than {INSTR_BITS} bits")
    return RoutingInstruction(**{name: word >> lsb & ((1 << width) - 1) for name, lsb, width in _FIELDS})


def generate_instructions(table: RoutingTable, msgs: Sequence[BlockMessage] | None = None
                          ) -> dict[int, list[RoutingInstruction]]:
    """Per-core instruction streams reproducing ``table``.

    Stream layout per core: one or more header words (head=1), one per
    message the core originates, naming the message's destination so the
    core can merge its Block Message locally; then one bundle per cycle.  A
    bundle has one word per open outgoing channel in channel order (or a
    single word when nothing is sent); every word of the bundle carries the
    same receive mask and open-channel mask, so the bundle length can be
    read off its first word.
    """
    if msgs is not None:
        known = {(m.source_core, m.dest_core) for m in msgs}
        for i in table.active:
            pair = (int(table.sources[i]), int(table.dests[i]))
            if pair[0] != pair[1] and pair not in known:
                raise ValueError(f"slot {i}: no Block Message for {pair[0]}->{pair[1]}")
    streams: dict[int, list[RoutingInstruction]] = {p: [] for p in range(NUM_CORES)}
    for p in range(NUM_CORES):
        mine = [i for i in table.active if table.sources[i] == p]
        if not mine:
            streams[p].append(RoutingInstruction(head=1, send_id=p))
        for i in mine:
            streams[p].append(RoutingInstruction(head=1, send_id=p, destination_id=int(table.dests[i])))

    prev_held = np.zeros(table.width, dtype=bool)
    for t in range(table.cycles):
        row, pos = table.rows[t], table.positions[t]
        recv = [0] * NUM_CORES
        outgoing: dict[int, list[tuple[int, int, bool, int]]] = {p: [] for p in range(NUM_CORES)}
        for i in table.active:
            h = int(row[i])
            if h < 0:
                continue
            p = int(pos[i])
            k = channel(p, h)
            recv[h] |= 1 << k
            outgoing[p].append((k, h, bool(prev_held[i]), int(table.dests[i])))
        for p in range(NUM_CORES):
            outs = sorted(outgoing[p])
            oc = open_channel_bits({k: v for k, _, v, _ in outs})
            if not outs:
                streams[p].append(RoutingInstruction(receive_signal=recv[p]))
            for k, h, _, d in outs:
                streams[p].append(RoutingInstruction(0, recv[p], h, oc, d))
        prev_held = row == HOLD
    return streams


def replay_instructions(streams: Mapping[int, Sequence[RoutingInstruction]],
                        sources: Sequence[int], dests: Sequence[int]) -> np.ndarray:
    """Rebuild routing-table rows by executing instruction streams.

    Each send word moves the lowest-numbered message at that core whose
    destination and buffer kind (real or virtual) match the word.
    """
    src = np.asarray(sources, dtype=np.int64)
    dst = np.asarray(dests, dtype=np.int64)
    active = np.flatnonzero(src >= 0)
    cursors = {}
    for p in range(NUM_CORES):
        s = list(streams[p])
        n = 0
        while n < len(s) and s[n].head:
            n += 1
        if n == 0:
            raise ReplayMismatch(f"core {p} stream has no header")
        cursors[p] = (s, n)

    pos = src.copy()
    held = np.zeros(len(src), dtype=bool)
    rows = []
    while True:
        done = [cursors[p][1] >= len(cursors[p][0]) for p in range(NUM_CORES)]
        if all(done):
            break
        if any(done):
            raise ReplayMismatch("instruction streams end on different cycles")
        row = np.full(len(src), IDLE, dtype=np.int64)
        for i in active:
            row[i] = DELIVERED if pos[i] == dst[i] else HOLD
        taken: set[int] = set()
        recv_expect = [0] * NUM_CORES
        recv_claim = [0] * NUM_CORES
        for p in range(NUM_CORES):
            s, n = cursors[p]
            first = s[n]
            if first.head:
                raise ReplayMismatch(f"core {p}: header word inside the cycle stream")
            chans = first.channels()
            bundle = s[n:n + max(1, len(chans))]
            cursors[p] = (s, n + max(1, len(chans)))
            recv_claim[p] = first.receive_signal
            if not chans:
                continue
            for w in bundle:
                k = channel(p, w.send_id)
                if k not in chans:
                    raise ReplayMismatch(f"core {p}: send to {w.send_id} on a closed channel")
                virtual = chans[k]
                cand = [i for i in active if i not in taken and pos[i] == p and dst[i] == w.destination_id
                        and held[i] == virtual and pos[i] != dst[i]]
                if not cand:
                    raise ReplayMismatch(f"core {p}: no message for destination {w.destination_id}")
                i = min(cand)
                taken.add(i)
                row[i] = w.send_id
                recv_expect[w.send_id] |= 1 << k
        if recv_expect != recv_claim:
            raise ReplayMismatch(f"cycle {len(rows)}: receive signals disagree with sends")
        rows.append(row)
        held = row == HOLD
        pos = np.where(row >= 0, row, pos)
    return np.array(rows, dtype=np.int64).reshape(len(rows), len(src))


def instructions_to_hex(stream: Sequence[RoutingInstruction]) -> str:
    return "".join(f"{encode_instruction(w):07x}\n" for w in stream)


def instructions_from_hex(text: str) -> list[RoutingInstruction]:
    return [decode_instruction(int(line, 16)) for line in text.split() if line]
