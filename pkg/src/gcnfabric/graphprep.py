"""Subgraph partitioning, diagonal scheduling and Block Message compression.

A subgraph of up to 1024 nodes is split into a 16x16 grid of 64x64 blocks.
Row index bits ``[9:6]`` name the destination core (A) and ``[5:0]`` the
aggregate node (B); column bits name the source core (C) and neighbour
node (D).  Blocks are processed along wrapped diagonals so that every group
of 16 blocks has pairwise distinct source cores and destination cores.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .hypercube import NUM_CORES

BLOCK = 64
MAX_NODES = NUM_CORES * BLOCK  # 1024
NUM_STAGES = 4
GROUPS_PER_STAGE = 4


class OutOfRange(ValueError):
    pass


class GroupConflict(ValueError):
    pass


class SortOrder(enum.Enum):
    UNSORTED = "unsorted"
    ROW_MAJOR = "row"
    COL_MAJOR = "col"


@dataclass
class CooMatrix:
    row: np.ndarray
    col: np.ndarray
    val: np.ndarray
    n_rows: int
    n_cols: int
    sort_order: SortOrder = SortOrder.UNSORTED

    def __post_init__(self):
        self.row = np.asarray(self.row, dtype=np.int64).reshape(-1)
        self.col = np.asarray(self.col, dtype=np.int64).reshape(-1)
        val = np.asarray(self.val).reshape(-1)
        if val.dtype.kind not in "iuf":
            val = val.astype(np.float64)
        self.val = val
        if not (len(self.row) == len(self.col) == len(self.val)):
            raise ValueError("row/col/val lengths differ")
        if len(self.row):
            if self.row.min() < 0 or self.row.max() >= self.n_rows:
                raise OutOfRange("row index outside matrix")
            if self.col.min() < 0 or self.col.max() >= self.n_cols:
                raise OutOfRange("column index outside matrix")
            keys = self.row * self.n_cols + self.col
            if len(np.unique(keys)) != len(keys):
                raise ValueError("duplicate (row, col) entries")

    @classmethod
    def from_entries(cls, entries: Iterable[tuple], n_rows: int, n_cols: int | None = None,
                     dtype=np.float64) -> "CooMatrix":
        entries = list(entries)
        n_cols = n_rows if n_cols is None else n_cols
        if not entries:
            return cls(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, dtype), n_rows, n_cols)
        r, c, *w = zip(*entries)
        v = np.asarray(w[0], dtype=dtype) if w else np.ones(len(r), dtype=dtype)
        return cls(np.array(r), np.array(c), v, n_rows, n_cols)

    @classmethod
    def from_dense(cls, a: np.ndarray) -> "CooMatrix":
        r, c = np.nonzero(a)
        return cls(r, c, a[r, c], a.shape[0], a.shape[1], SortOrder.ROW_MAJOR)

    @property
    def nnz(self) -> int:
        return len(self.row)

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_rows, self.n_cols

    def entries(self) -> list[tuple[int, int, float]]:
        return list(zip(self.row.tolist(), self.col.tolist(), self.val.tolist()))

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols), dtype=self.val.dtype)
        out[self.row, self.col] = self.val
        return out

    def to_scipy(self):
        import scipy.sparse as sp

        return sp.csr_matrix((self.val, (self.row, self.col)), shape=self.shape)

    def transpose(self) -> "CooMatrix":
        flipped = {SortOrder.ROW_MAJOR: SortOrder.COL_MAJOR, SortOrder.COL_MAJOR: SortOrder.ROW_MAJOR}
        return CooMatrix(self.col.copy(), self.row.copy(), self.val.copy(), self.n_cols, self.n_rows,
                         flipped.get(self.sort_order, SortOrder.UNSORTED))

    def multiset(self) -> list[tuple[int, int, float]]:
        return sorted(self.entries())


def coo_convert(coo: CooMatrix, order: SortOrder) -> CooMatrix:
    """Stable re-sort of the entries into row-major or column-major order."""
    if order is SortOrder.ROW_MAJOR:
        idx = np.lexsort((coo.col, coo.row))
    elif order is SortOrder.COL_MAJOR:
        idx = np.lexsort((coo.row, coo.col))
    else:
        raise ValueError(f"cannot convert to {order}")
    return CooMatrix(coo.row[idx], coo.col[idx], coo.val[idx], coo.n_rows, coo.n_cols, order)


class IndexFields(NamedTuple):
    dest_core: int  # A
    aggregate_node: int  # B
    source_core: int  # C
    neighbor_node: int  # D


def decode_index(row: int, col: int) -> IndexFields:
    if not (0 <= row < MAX_NODES and 0 <= col < MAX_NODES):
        raise OutOfRange(f"({row}, {col}) outside a {MAX_NODES}-node subgraph")
    return IndexFields(row >> 6, row & 63, col >> 6, col & 63)


def encode_index(f: IndexFields) -> tuple[int, int]:
    return (f.dest_core << 6) | f.aggregate_node, (f.source_core << 6) | f.neighbor_node


@dataclass
class BlockMessage:
    """Compressed communication demand of one 64x64 block.

    ``payload[B]`` lists the ``(D, weight)`` neighbours that core C holds for
    aggregate node B of core A.  One round of routing carries one B.
    """

    dest_core: int
    source_core: int
    payload: dict[int, list[tuple[int, float]]] = field(default_factory=dict)

    @property
    def count(self) -> int:
        return len(self.payload)

    @property
    def header(self) -> tuple[int, int, int]:
        return self.dest_core, self.source_core, self.count

    def aggregate_nodes(self) -> list[int]:
        return sorted(self.payload)

    def decode(self) -> list[tuple[int, int, float]]:
        """Expand back to global ``(row, col, weight)`` entries."""
        out = []
        for b, nbrs in self.payload.items():
            r = self.dest_core * BLOCK + b
            out.extend((r, self.source_core * BLOCK + d, w) for d, w in nbrs)
        return out


def compress_block(block: CooMatrix, A: int, C: int) -> BlockMessage:
    if block.nnz and (block.row.max() >= BLOCK or block.col.max() >= BLOCK):
        raise OutOfRange("block local index >= 64")
    idx = np.lexsort((block.col, block.row))
    payload: dict[int, list[tuple[int, float]]] = {}
    for b, d, w in zip(block.row[idx].tolist(), block.col[idx].tolist(), block.val[idx].tolist()):
        payload.setdefault(b, []).append((d, w))
    return BlockMessage(A, C, payload)


@dataclass
class BlockGrid:
    blocks: list[list[CooMatrix]]
    n_rows: int
    n_cols: int

    def block(self, a: int, c: int) -> CooMatrix:
        return self.blocks[a][c]

    @property
    def stages(self) -> list[list[list[tuple[int, int]]]]:
        return diagonal_schedule(self)

    def reassemble(self) -> CooMatrix:
        rows, cols, vals = [], [], []
        for a in range(NUM_CORES):
            for c in range(NUM_CORES):
                blk = self.blocks[a][c]
                rows.append(blk.row + a * BLOCK)
                cols.append(blk.col + c * BLOCK)
                vals.append(blk.val)
        return CooMatrix(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
                         self.n_rows, self.n_cols)


def partition_subgraph(coo: CooMatrix) -> BlockGrid:
    if coo.n_rows > MAX_NODES or coo.n_cols > MAX_NODES:
        raise OutOfRange(f"subgraph {coo.shape} exceeds {MAX_NODES} nodes")
    br, bc = coo.row >> 6, coo.col >> 6
    key = br * NUM_CORES + bc
    order = np.argsort(key, kind="stable")
    bounds = np.searchsorted(key[order], np.arange(NUM_CORES * NUM_CORES + 1))
    blocks = []
    for a in range(NUM_CORES):
        line = []
        for c in range(NUM_CORES):
            sel = order[bounds[a * NUM_CORES + c]:bounds[a * NUM_CORES + c + 1]]
            line.append(CooMatrix(coo.row[sel] & 63, coo.col[sel] & 63, coo.val[sel], BLOCK, BLOCK))
        blocks.append(line)
    return BlockGrid(blocks, coo.n_rows, coo.n_cols)


def diagonal_schedule(grid: BlockGrid | None = None) -> list[list[list[tuple[int, int]]]]:
    """Stage s, group g holds the wrapped diagonal ``(i, (i + 4s + g) % 16)``."""
    return [
        [[(i, (i + GROUPS_PER_STAGE * s + g) % NUM_CORES) for i in range(NUM_CORES)]
         for g in range(GROUPS_PER_STAGE)]
        for s in range(NUM_STAGES)
    ]


def compress_stage(grid: BlockGrid, stage: Sequence[Sequence[tuple[int, int]]],
                   skip_empty: bool = True) -> list[list[BlockMessage]]:
    groups = []
    for coords in stage:
        msgs = [compress_block(grid.block(a, c), a, c) for a, c in coords]
        groups.append([m for m in msgs if m.count or not skip_empty])
    return groups


@dataclass(frozen=True)
class Slot:
    group: int
    message: int  # index into the group's Block Message list
    aggregate_node: int
    source: int
    dest: int


@dataclass
class StartVector:
    slots: list[Slot | None]

    @property
    def sources(self) -> list[int]:
        return [-1 if s is None else s.source for s in self.slots]

    @property
    def dests(self) -> list[int]:
        return [-1 if s is None else s.dest for s in self.slots]

    @property
    def active(self) -> list[int]:
        return [i for i, s in enumerate(self.slots) if s is not None]

    def validate(self, width: int = NUM_CORES, max_per_source: int = 4) -> None:
        seen: dict[int, int] = {}
        for g in range(0, len(self.slots), width):
            srcs = [s.source for s in self.slots[g:g + width] if s is not None]
            if len(set(srcs)) != len(srcs):
                raise GroupConflict(f"group {g // width} repeats a source core")
            for s in srcs:
                seen[s] = seen.get(s, 0) + 1
        over = [c for c, n in seen.items() if n > max_per_source]
        if over:
            raise GroupConflict(f"source cores {over} used more than {max_per_source} times")


def generate_start_vectors(groups: Sequence[Sequence[BlockMessage]]) -> list[StartVector]:
    """Emit one start vector per round until every Block Message count is spent.

    Each group owns 16 slots; its messages are placed in ascending
    destination-core order.  In round r a message sends its r-th aggregate
    node, or leaves its slot idle once exhausted.
    """
    if len(groups) > GROUPS_PER_STAGE:
        raise ValueError(f"at most {GROUPS_PER_STAGE} groups per start vector")
    layouts = []
    for g, msgs in enumerate(groups):
        srcs = [m.source_core for m in msgs]
        if len(set(srcs)) != len(srcs):
            raise GroupConflict(f"group {g} has duplicate source cores")
        if len(msgs) > NUM_CORES:
            raise GroupConflict(f"group {g} has more than {NUM_CORES} messages")
        order = sorted(range(len(msgs)), key=lambda i: msgs[i].dest_core)
        layouts.append([(i, msgs[i].aggregate_nodes()) for i in order])

    rounds = max((len(bs) for lay in layouts for _, bs in lay), default=0)
    width = GROUPS_PER_STAGE * NUM_CORES
    vectors = []
    for r in range(rounds):
        slots: list[Slot | None] = [None] * width
        for g, lay in enumerate(layouts):
            for pos, (i, bs) in enumerate(lay):
                if r < len(bs):
                    m = groups[g][i]
                    slots[g * NUM_CORES + pos] = Slot(g, i, bs[r], m.source_core, m.dest_core)
        vectors.append(StartVector(slots))
    return vectors


def mirror_triangle(coo: CooMatrix) -> CooMatrix:
    """Expand a one-triangle (diagonal) store into the full symmetric matrix."""
    off = coo.row != coo.col
    row = np.concatenate([coo.row, coo.col[off]])
    col = np.concatenate([coo.col, coo.row[off]])
    val = np.concatenate([coo.val, coo.val[off]])
    return CooMatrix(row, col, val, coo.n_rows, coo.n_cols)
