"""Cycle-level replay of routing tables through a functional core model.

Each core holds 64 neighbour feature rows and 64 aggregate accumulators.
Before routing, a source core merges the weighted neighbour rows belonging
to one aggregate node into a single packet; the destination adds arriving
packets into ``aggregate_buffer[B]``.  Message movement is cycle-accurate;
compute time is analytic (MAC-array occupancy).
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .gcn_dataflow import ExecOrder, LayerSpec
from .graphprep import (
    BLOCK,
    MAX_NODES,
    CooMatrix,
    compress_stage,
    diagonal_schedule,
    generate_start_vectors,
    partition_subgraph,
)
from .hypercube import DIMS, NUM_CORES, channel, check_switch_constraints
from .router import HOLD, ReplayMismatch, RoutingInstruction, RoutingTable, replay_instructions, route

CLOCK_HZ = 2.5e8
MAC_COUNT = 256
LANES = 16
LANE_BITS = 32
TAG_BITS = 6
NUM_LINKS = NUM_CORES * DIMS


class EmptyInput(ValueError):
    pass


class UnsupportedBurst(ValueError):
    pass


@dataclass(frozen=True)
class PacketFormat:
    lanes: int = LANES
    lane_bits: int = LANE_BITS
    tag_bits: int = TAG_BITS

    @property
    def width_bits(self) -> int:
        return self.lanes * self.lane_bits + self.tag_bits

    @property
    def wire_bytes(self) -> int:
        return math.ceil(self.width_bits / 8)

    @property
    def payload_bytes(self) -> int:
        return self.lanes * self.lane_bits // 8


@dataclass
class Packet:
    feature: np.ndarray
    aggregate_node: int

    def __post_init__(self):
        if not 0 <= self.aggregate_node < BLOCK:
            raise ValueError(f"aggregate node {self.aggregate_node} needs more than 6 bits")


@dataclass
class CoreModel:
    core_id: int
    neighbor_buffer: np.ndarray
    aggregate_buffer: np.ndarray
    virtual_channel: deque = field(default_factory=deque)
    real_channels: list = field(default_factory=lambda: [None] * DIMS)

    @classmethod
    def empty(cls, core_id: int, width: int, dtype=np.float64) -> "CoreModel":
        return cls(core_id, np.zeros((BLOCK, width), dtype), np.zeros((BLOCK, width), dtype))

    def merge(self, neighbours: Sequence[tuple[int, float]], aggregate_node: int) -> Packet:
        """Weighted local sum of the listed neighbour rows, in list order."""
        acc = np.zeros(self.neighbor_buffer.shape[1], dtype=self.aggregate_buffer.dtype)
        for d, w in neighbours:
            acc += w * self.neighbor_buffer[d]
        return Packet(acc, aggregate_node)

    def accumulate(self, packet: Packet) -> None:
        self.aggregate_buffer[packet.aggregate_node] += packet.feature


@dataclass
class DeliveryLog:
    hops: list[tuple[int, int, int, int]] = field(default_factory=list)  # cycle, from, to, slot
    deliveries: list[tuple[int, int, int, int]] = field(default_factory=list)  # cycle, slot, core, B

    def to_json(self) -> str:
        return json.dumps({"hops": self.hops, "deliveries": self.deliveries})

    @classmethod
    def from_json(cls, text: str) -> "DeliveryLog":
        raw = json.loads(text)
        return cls([tuple(h) for h in raw["hops"]], [tuple(d) for d in raw["deliveries"]])


@dataclass(frozen=True)
class SimStats:
    cycles: int
    messages_delivered: int
    hops: int
    bytes_moved: int  # full packets on the wire
    payload_bytes_moved: int  # feature bits only
    link_utilization: tuple[float, ...]
    peak_virtual_occupancy: int
    clock_period: float = 1.0 / CLOCK_HZ

    @property
    def raw_bandwidth(self) -> float:
        if self.cycles == 0:
            return 0.0
        return self.payload_bytes_moved / (self.cycles * self.clock_period)

    def to_json(self) -> str:
        d = asdict(self)
        d["link_utilization"] = list(self.link_utilization)
        d["raw_bandwidth"] = self.raw_bandwidth
        return json.dumps(d)

    def utilization_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["cycle", "link_utilization"])
        for t, u in enumerate(self.link_utilization):
            w.writerow([t, f"{u:.6f}"])
        return buf.getvalue()


def merge_stats(stats: Sequence[SimStats]) -> SimStats:
    if not stats:
        return SimStats(0, 0, 0, 0, 0, (), 0)
    return SimStats(
        cycles=sum(s.cycles for s in stats),
        messages_delivered=sum(s.messages_delivered for s in stats),
        hops=sum(s.hops for s in stats),
        bytes_moved=sum(s.bytes_moved for s in stats),
        payload_bytes_moved=sum(s.payload_bytes_moved for s in stats),
        link_utilization=tuple(u for s in stats for u in s.link_utilization),
        peak_virtual_occupancy=max(s.peak_virtual_occupancy for s in stats),
        clock_period=stats[0].clock_period,
    )


def simulate(table: RoutingTable, packets: Mapping[int, Packet], cores: Sequence[CoreModel] | None = None,
             fmt: PacketFormat = PacketFormat(), clock_period: float = 1.0 / CLOCK_HZ
             ) -> tuple[DeliveryLog, SimStats]:
    """Move packets per table rows and accumulate them at their destinations.

    Arrivals in one cycle are accumulated in slot order, so floating-point
    results are deterministic.  Without ``cores`` packets are moved and
    logged but not accumulated.
    """
    active = [int(i) for i in table.active]
    missing = [i for i in active if i not in packets]
    if missing:
        raise ValueError(f"no packet for active slots {missing}")

    log = DeliveryLog()
    where = {i: int(table.sources[i]) for i in active}
    in_flight = {i: packets[i] for i in active}
    sent = sorted((i, packets[i].aggregate_node) for i in active)
    delivered: list[tuple[int, int]] = []

    def deliver(t: int, i: int) -> None:
        pkt = in_flight.pop(i)
        core = int(table.dests[i])
        log.deliveries.append((t, i, core, pkt.aggregate_node))
        delivered.append((i, pkt.aggregate_node))
        if cores is not None:
            cores[core].accumulate(pkt)

    for i in active:
        if where[i] == table.dests[i]:
            deliver(0, i)

    util, peak, hops = [], 0, 0
    for t in range(table.cycles):
        row = table.rows[t]
        violations = check_switch_constraints(table.assignments(t))
        if violations:
            raise ReplayMismatch(f"cycle {t}: {[str(v) for v in violations]}")
        moved = 0
        held_at = np.zeros(NUM_CORES, dtype=np.int64)
        if cores is not None:
            for c in cores:
                c.real_channels = [None] * DIMS
        for i in active:
            e = int(row[i])
            if i not in in_flight:
                continue
            if e >= 0:
                log.hops.append((t, where[i], e, i))
                if cores is not None:
                    cores[e].real_channels[channel(where[i], e)] = in_flight[i]
                where[i] = e
                moved += 1
            elif e == HOLD:
                held_at[where[i]] += 1
            else:
                raise ReplayMismatch(f"cycle {t}: in-flight slot {i} marked {e}")
        if cores is not None:
            queues: dict[int, deque] = {}
            for i in active:
                if row[i] == HOLD and i in in_flight:
                    queues.setdefault(where[i], deque()).append(in_flight[i])
            for c in cores:
                c.virtual_channel = queues.get(c.core_id, deque())
        peak = max(peak, int(held_at.max()))
        hops += moved
        util.append(moved / NUM_LINKS)
        for i in active:
            if i in in_flight and where[i] == table.dests[i]:
                deliver(t + 1, i)

    if in_flight:
        raise ReplayMismatch(f"slots {sorted(in_flight)} never reached their destination")
    if sorted(delivered) != sent:
        raise ReplayMismatch("delivered packets differ from dispatched packets")
    stats = SimStats(table.cycles, len(delivered), hops, hops * fmt.wire_bytes,
                     hops * fmt.payload_bytes, tuple(util), peak, clock_period)
    return log, stats


def simulate_instructions(streams: Mapping[int, Sequence[RoutingInstruction]], sources: Sequence[int],
                          dests: Sequence[int], packets: Mapping[int, Packet],
                          cores: Sequence[CoreModel] | None = None, **kw) -> tuple[DeliveryLog, SimStats]:
    """Simulate by executing per-core instruction streams instead of a table."""
    rows = replay_instructions(streams, sources, dests)
    src = np.asarray(sources, dtype=np.int64)
    pos = np.empty((len(rows) + 1, len(src)), dtype=np.int64)
    pos[0] = src
    for t, r in enumerate(rows):
        pos[t + 1] = np.where(r >= 0, r, pos[t])
    table = RoutingTable(src, np.asarray(dests, dtype=np.int64), 0, rows, pos)
    return simulate(table, packets, cores, **kw)


# --- end-to-end aggregation ----------------------------------------------------------------

def episode_seed(seed: int, *path: int) -> int:
    return int(np.random.SeedSequence([seed, *path]).generate_state(1, np.uint64)[0])


@dataclass
class AggregationRun:
    output: np.ndarray
    stats: list[SimStats]
    tables: int
    core_message_cycles: np.ndarray  # per core: summed cycle of the last arrival per episode

    @property
    def total(self) -> SimStats:
        return merge_stats(self.stats)


def run_aggregation(subgraph: CooMatrix, features: np.ndarray, seed: int,
                    fmt: PacketFormat | None = None) -> AggregationRun:
    """Aggregate ``subgraph @ features`` by routing every merged packet over the cube.

    Works for subgraphs of up to 1024 x 1024; integer weights with integer
    features stay in exact integer arithmetic.
    """
    if subgraph.n_cols != features.shape[0]:
        raise ValueError(f"features have {features.shape[0]} rows, graph has {subgraph.n_cols} columns")
    grid = partition_subgraph(subgraph)
    width = features.shape[1]
    dtype = np.result_type(subgraph.val.dtype, features.dtype)
    fmt = fmt or PacketFormat(lanes=width)
    padded = np.zeros((MAX_NODES, width), dtype=dtype)
    padded[:features.shape[0]] = features
    cores = [CoreModel.empty(c, width, dtype) for c in range(NUM_CORES)]
    for c in cores:
        c.neighbor_buffer[:] = padded[c.core_id * BLOCK:(c.core_id + 1) * BLOCK]

    stats = []
    tables = 0
    msg_cycles = np.zeros(NUM_CORES, dtype=np.int64)
    for s, stage in enumerate(diagonal_schedule(grid)):
        groups = compress_stage(grid, stage)
        for r, sv in enumerate(generate_start_vectors(groups)):
            table = route(sv, episode_seed(seed, s, r))
            tables += 1
            packets = {}
            for i, slot in enumerate(sv.slots):
                if slot is None:
                    continue
                msg = groups[slot.group][slot.message]
                packets[i] = cores[msg.source_core].merge(msg.payload[slot.aggregate_node], slot.aggregate_node)
            log, st = simulate(table, packets, cores, fmt)
            stats.append(st)
            last = np.zeros(NUM_CORES, dtype=np.int64)
            for t, _, core, _ in log.deliveries:
                last[core] = max(last[core], t)
            msg_cycles += last

    out = np.concatenate([c.aggregate_buffer for c in cores])[:subgraph.n_rows]
    return AggregationRun(out, stats, tables, msg_cycles)


def aggregate_replay(subgraph: CooMatrix, features: np.ndarray, seed: int) -> np.ndarray:
    return run_aggregation(subgraph, features, seed).output


def aggregate_tiled(adj: CooMatrix, features: np.ndarray, seed: int) -> AggregationRun:
    """Arbitrary-size aggregation as independent 1024x1024 routing episodes."""
    if adj.n_cols != features.shape[0]:
        raise ValueError("feature rows must match adjacency columns")
    dtype = np.result_type(adj.val.dtype, features.dtype)
    out = np.zeros((adj.n_rows, features.shape[1]), dtype=dtype)
    stats, tables = [], 0
    msg_cycles = np.zeros(NUM_CORES, dtype=np.int64)
    for ti, r0 in enumerate(range(0, adj.n_rows, MAX_NODES)):
        for tj, c0 in enumerate(range(0, adj.n_cols, MAX_NODES)):
            sel = (adj.row >= r0) & (adj.row < r0 + MAX_NODES) & (adj.col >= c0) & (adj.col < c0 + MAX_NODES)
            if not sel.any():
                continue
            rows = min(MAX_NODES, adj.n_rows - r0)
            cols = min(MAX_NODES, adj.n_cols - c0)
            tile = CooMatrix(adj.row[sel] - r0, adj.col[sel] - c0, adj.val[sel], rows, cols)
            run = run_aggregation(tile, features[c0:c0 + cols], episode_seed(seed, ti, tj))
            out[r0:r0 + rows] += run.output
            stats.extend(run.stats)
            tables += run.tables
            msg_cycles += run.core_message_cycles
    return AggregationRun(out, stats, tables, msg_cycles)


# --- analytic performance model -------------------------------------------------------------

@dataclass(frozen=True)
class PerfInputs:
    t_msg: int
    t_comb: int
    t_agg: int
    mac_count: int = MAC_COUNT
    clock: float = CLOCK_HZ

    def __post_init__(self):
        if min(self.t_msg, self.t_comb, self.t_agg) < 0 or self.mac_count <= 0 or self.clock <= 0:
            raise ValueError("performance inputs must be nonnegative")


def perf_single_core(p: PerfInputs) -> int:
    return max(p.t_msg, p.t_comb + p.t_agg)


def perf_multi_core(per_core: Sequence[int]) -> int:
    if len(per_core) == 0:
        raise EmptyInput("no per-core times")
    return max(per_core)


def mac_cycles(multiply_adds: int, mac_count: int = MAC_COUNT) -> int:
    return -(-int(multiply_adds) // mac_count)


def compute_times(layer: LayerSpec, p: PerfInputs | None = None,
                  order: ExecOrder = ExecOrder.COAG) -> tuple[int, int]:
    """MAC-array cycles of one core's forward combination and aggregation."""
    macs = p.mac_count if p is not None else MAC_COUNT
    if order.combine_first:
        comb, agg = layer.n_bar * layer.d * layer.h, layer.e * layer.h
    else:
        comb, agg = layer.n * layer.d * layer.h, layer.e * layer.d
    return mac_cycles(comb, macs), mac_cycles(agg, macs)


_HBM_TABLE = {  # concurrent requesters -> burst length -> read-bandwidth factor
    1: {64: 1.0, 128: 1.0},
    2: {64: 0.863, 128: 0.932},
    4: {64: 0.789, 128: 0.804},
    6: {64: 0.649, 128: 0.756},
}


def hbm_scale(concurrent_requesters: float, burst_len: int, interpolate: bool = True) -> float:
    """Measured HBM pseudo-channel read-bandwidth factor under concurrent access.

    Requester counts between table points are linearly interpolated and
    clamped outside ``[1, 6]``.
    """
    if concurrent_requesters < 1:
        raise ValueError("need at least one requester")
    bursts = sorted(_HBM_TABLE[1])
    if burst_len not in bursts and not interpolate:
        raise UnsupportedBurst(f"burst length {burst_len} not in {bursts}")
    xs = sorted(_HBM_TABLE)

    def at_burst(b: int) -> float:
        return float(np.interp(concurrent_requesters, xs, [_HBM_TABLE[x][b] for x in xs]))

    if burst_len in bursts:
        return at_burst(burst_len)
    lo, hi = bursts[0], bursts[-1]
    return float(np.interp(burst_len, [lo, hi], [at_burst(lo), at_burst(hi)]))


# --- bandwidth accounting --------------------------------------------------------------------

PUBLISHED_AGGREGATE_BW = 2.96e12  # B/s; printed figure, not reproduced by its own factors
PUBLISHED_RAW_BW = 189.4e9
MEAN_ROUTING_PERIOD = 20.13e-9


@dataclass(frozen=True)
class BandwidthReport:
    bytes_moved: int
    cycles: int
    clock_period: float
    compression_factor: int
    raw_bandwidth: float
    effective_bandwidth: float
    factors: dict

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def bandwidth_report(stats: SimStats, clock_period: float, compression_factor: int = 1) -> BandwidthReport:
    """raw = payload bytes / (cycles * period); effective = raw * compression."""
    if stats.cycles == 0:
        raw = 0.0
    else:
        raw = stats.payload_bytes_moved / (stats.cycles * clock_period)
    return BandwidthReport(
        bytes_moved=stats.payload_bytes_moved,
        cycles=stats.cycles,
        clock_period=clock_period,
        compression_factor=compression_factor,
        raw_bandwidth=raw,
        effective_bandwidth=raw * compression_factor,
        factors={"bytes_moved": stats.payload_bytes_moved, "cycles": stats.cycles,
                 "clock_period_s": clock_period, "compression_factor": compression_factor},
    )


def peak_cycle_stats(lane_bytes: int = 64, cores: int = NUM_CORES, msgs_per_core: int = DIMS,
                     clock_period: float = MEAN_ROUTING_PERIOD) -> SimStats:
    """One fully loaded routing cycle: every core sends on all of its links."""
    hops = cores * msgs_per_core
    return SimStats(1, hops, hops, hops * math.ceil((lane_bytes * 8 + TAG_BITS) / 8), hops * lane_bytes,
                    (hops / NUM_LINKS,), 0, clock_period)


def published_bandwidth_audit(lane_bytes: int = 64, cores: int = NUM_CORES, msgs_per_core: int = DIMS,
                              compression_factor: int = 16, period: float = MEAN_ROUTING_PERIOD) -> dict:
    """Recompute the aggregate-bandwidth arithmetic from its stated factors.

    The factors give ~3.26 TB/s effective and ~203.5 GB/s raw, against
    published figures of 2.96 TB/s and 189.4 GB/s.
    """
    rep = bandwidth_report(peak_cycle_stats(lane_bytes, cores, msgs_per_core, period), period,
                           compression_factor)
    return {
        "formula": f"{lane_bytes} B x {msgs_per_core} msgs x {cores} cores x {compression_factor} / {period:.4g} s",
        "raw_bandwidth": rep.raw_bandwidth,
        "effective_bandwidth": rep.effective_bandwidth,
        "published_raw_bandwidth": PUBLISHED_RAW_BW,
        "published_effective_bandwidth": PUBLISHED_AGGREGATE_BW,
        "effective_ratio_to_published": rep.effective_bandwidth / PUBLISHED_AGGREGATE_BW,
        "raw_ratio_to_published": rep.raw_bandwidth / PUBLISHED_RAW_BW,
        "report": asdict(rep),
    }
