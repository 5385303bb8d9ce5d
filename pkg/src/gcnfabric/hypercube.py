"""Binary hypercube topology, XOR shortest-path sets and switch-capacity checks.

Cores are n-bit integers; two cores are linked iff their codes differ in one
bit.  Each directed link carries one message per cycle and a core can accept
at most one message from each of its neighbours, so at most ``dims`` arrivals
per cycle.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Hashable, Mapping, Sequence

DIMS = 4
NUM_CORES = 1 << DIMS
MAX_ARRIVALS = DIMS


class LengthMismatch(ValueError):
    pass


class InvalidHop(ValueError):
    pass


def check_core(c: int, dims: int = DIMS) -> int:
    if not 0 <= c < (1 << dims):
        raise ValueError(f"core id {c} outside a {dims}-cube")
    return c


def popcount(x: int) -> int:
    return bin(x).count("1")


def is_adjacent(a: int, b: int) -> bool:
    return popcount(a ^ b) == 1


def channel(a: int, b: int) -> int:
    """Dimension index of the link between adjacent cores ``a`` and ``b``."""
    x = a ^ b
    if x == 0 or x & (x - 1):
        raise InvalidHop(f"{a} and {b} are not adjacent")
    return x.bit_length() - 1


def neighbors(c: int, dims: int = DIMS) -> frozenset[int]:
    check_core(c, dims)
    return frozenset(c ^ (1 << k) for k in range(dims))


@lru_cache(maxsize=None)
def xor_path_set(src: int, dst: int, dims: int = DIMS) -> tuple[frozenset[int], int]:
    """Single-step candidate hops from ``src`` toward ``dst`` and the hop distance.

    Every bit set in ``src ^ dst`` is one dimension still to be corrected;
    flipping any one of them is a shortest-path move.
    """
    check_core(src, dims)
    check_core(dst, dims)
    diff = src ^ dst
    hops = frozenset(src ^ (1 << k) for k in range(dims) if diff >> k & 1)
    return hops, len(hops)


def xor_array(
    srcs: Sequence[int], dsts: Sequence[int], dims: int = DIMS
) -> tuple[list[frozenset[int]], list[int]]:
    if len(srcs) != len(dsts):
        raise LengthMismatch(f"{len(srcs)} sources vs {len(dsts)} destinations")
    sets, steps = [], []
    for s, d in zip(srcs, dsts):
        hops, step = xor_path_set(s, d, dims)
        sets.append(hops)
        steps.append(step)
    return sets, steps


@dataclass(frozen=True)
class LinkOveruse:
    src: int
    dst: int
    count: int = 2

    def __str__(self) -> str:
        return f"LinkOveruse({self.src}->{self.dst})"


@dataclass(frozen=True)
class ArrivalOverflow:
    core: int
    count: int = MAX_ARRIVALS + 1

    def __str__(self) -> str:
        return f"ArrivalOverflow({self.core})"


Violation = LinkOveruse | ArrivalOverflow


def check_switch_constraints(
    assignments: Mapping[Hashable, tuple[int, int]],
    *,
    require_adjacent: bool = True,
    max_arrivals: int = MAX_ARRIVALS,
) -> list[Violation]:
    """Audit one cycle of message moves against the switch model.

    ``assignments`` maps a message key to ``(from, to)``; ``from == to`` is a
    hold in the virtual channel and uses no link.  Returns an empty list when
    no directed link is used twice and no core receives more than
    ``max_arrivals`` messages.  Two messages from the same sender to the same
    receiver necessarily share a link, so that rule surfaces as a
    ``LinkOveruse``.

    With ``require_adjacent=False`` non-adjacent pairs are audited as if a
    direct link existed instead of raising ``InvalidHop``.
    """
    links: Counter[tuple[int, int]] = Counter()
    arrivals: Counter[int] = Counter()
    for key, (a, b) in assignments.items():
        if a == b:
            continue
        if require_adjacent and not is_adjacent(a, b):
            raise InvalidHop(f"message {key!r}: {a}->{b} is not a single hop")
        links[(a, b)] += 1
        arrivals[b] += 1

    out: list[Violation] = []
    for (a, b), n in sorted(links.items()):
        if n > 1:
            out.append(LinkOveruse(a, b, n))
    for core, n in sorted(arrivals.items()):
        if n > max_arrivals:
            out.append(ArrivalOverflow(core, n))
    return out
