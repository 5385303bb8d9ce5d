"""Edge-list ingestion, synthetic graphs and mini-batch neighbour sampling."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .gcn_dataflow import LayerSpec
from .graphprep import CooMatrix, mirror_triangle

log = logging.getLogger(__name__)

DEFAULT_FAN_OUTS = (25, 10)
HIDDEN_DIM = 256


class ParseError(ValueError):
    def __init__(self, line: int, text: str, reason: str = "expected 'src dst [weight]'"):
        super().__init__(f"line {line}: {reason}: {text!r}")
        self.line = line


class EmptyBatch(ValueError):
    pass


class InvalidParams(ValueError):
    pass


def parse_edge_list(text: str, undirected: bool = False, triangular: bool = False,
                    num_nodes: int | None = None) -> CooMatrix:
    """Parse ``src dst [weight]`` lines; duplicates keep the first weight.

    ``triangular`` treats the input as one triangle of a symmetric matrix
    (diagonal storage): each edge is folded to ``(min, max)`` and mirrored.
    """
    edges: dict[tuple[int, int], float] = {}
    dupes = 0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise ParseError(lineno, raw)
        try:
            s, d = int(parts[0]), int(parts[1])
            w = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError:
            raise ParseError(lineno, raw) from None
        if s < 0 or d < 0:
            raise ParseError(lineno, raw, "negative node id")
        if triangular:
            s, d = min(s, d), max(s, d)
        pairs = [(s, d)]
        if undirected and not triangular and s != d:
            pairs.append((d, s))
        for p in pairs:
            if p in edges:
                dupes += 1
                continue
            edges[p] = w
    if dupes:
        log.warning("dropped %d duplicate edges (kept first occurrence)", dupes)

    n = max((max(p) for p in edges), default=-1) + 1
    if num_nodes is not None:
        if num_nodes < n:
            raise ValueError(f"edge list references node {n - 1} but num_nodes={num_nodes}")
        n = num_nodes
    coo = CooMatrix.from_entries(((s, d, w) for (s, d), w in edges.items()), n, n)
    return mirror_triangle(coo) if triangular else coo


def load_edge_list(path: str | Path, undirected: bool = False, triangular: bool = False,
                   num_nodes: int | None = None) -> CooMatrix:
    return parse_edge_list(Path(path).read_text(encoding="utf-8"), undirected, triangular, num_nodes)


def gen_synthetic(model: str, nodes: int, edges: int, seed: int, exponent: float = 2.1) -> CooMatrix:
    """Directed graph with exactly ``edges`` distinct non-loop entries.

    ``uniform`` draws endpoints uniformly; ``power-law`` draws both endpoints
    from Chung-Lu weights ``i^(-1/(exponent-1))`` over a shuffled node order.
    """
    if nodes <= 0 or edges < 0 or edges > nodes * (nodes - 1):
        raise InvalidParams(f"cannot place {edges} edges on {nodes} nodes")
    if model not in ("uniform", "power-law"):
        raise InvalidParams(f"unknown model {model!r}")
    if model == "power-law" and exponent <= 1:
        raise InvalidParams("power-law exponent must exceed 1")
    rng = np.random.default_rng(seed)
    if model == "uniform":
        p = None
    else:
        w = np.arange(1, nodes + 1, dtype=np.float64) ** (-1.0 / (exponent - 1.0))
        p = (w / w.sum())[rng.permutation(nodes)]

    seen: set[int] = set()
    keys: list[int] = []
    while len(keys) < edges:
        want = edges - len(keys)
        draw = max(2 * want, 64)
        if p is None:
            src = rng.integers(0, nodes, draw)
            dst = rng.integers(0, nodes, draw)
        else:
            src = rng.choice(nodes, draw, p=p)
            dst = rng.choice(nodes, draw, p=p)
        for k in (src * nodes + dst)[src != dst].tolist():
            if k not in seen:
                seen.add(k)
                keys.append(k)
                if len(keys) == edges:
                    break
    k = np.array(keys, dtype=np.int64)
    return CooMatrix(k // nodes, k % nodes, np.ones(len(k)), nodes, nodes)


@dataclass
class WorkloadBatch:
    """Sampled computation graph, input layer first.

    ``adjs[k]`` maps layer k's ``len(nodes[k+1])`` output rows onto its
    ``len(nodes[k])`` input rows; output nodes are listed first among the
    inputs, so every adjacency is rectangular with ``n <= n_bar``.
    """

    adjs: list[CooMatrix]
    nodes: list[np.ndarray]
    features: np.ndarray
    labels: np.ndarray

    @property
    def batch(self) -> np.ndarray:
        return self.nodes[-1]

    def layer_specs(self, hidden: int = HIDDEN_DIM, classes: int | None = None) -> list[LayerSpec]:
        c = classes if classes is not None else int(self.labels.max()) + 1
        dims = [self.features.shape[1]] + [hidden] * (len(self.adjs) - 1) + [c]
        b = len(self.batch)
        return [LayerSpec(b, a.n_rows, a.n_cols, dims[k], dims[k + 1], max(a.nnz, 1), c)
                for k, a in enumerate(self.adjs)]


def sample_neighbors(graph: CooMatrix, batch_ids: Sequence[int], fan_outs: Sequence[int] = DEFAULT_FAN_OUTS,
                     seed: int = 0, features: np.ndarray | None = None, labels: np.ndarray | None = None
                     ) -> WorkloadBatch:
    """Uniform neighbour sampling without replacement, seeded.

    ``fan_outs`` is listed input layer first, so the last entry is applied
    to the batch nodes themselves.  A node's neighbours are the columns of
    its row in ``graph``; sampled entries keep the graph's weights.
    """
    if not len(fan_outs):
        raise InvalidParams("fan_outs must be nonempty")
    batch = list(dict.fromkeys(int(b) for b in batch_ids))
    if not batch:
        raise EmptyBatch("batch has no nodes")
    csr = graph.to_scipy()
    rng = np.random.default_rng(seed)
    layers = []
    nodes = np.array(batch, dtype=np.int64)
    node_sets = [nodes]
    for fan in reversed(list(fan_outs)):
        index = {int(v): k for k, v in enumerate(nodes)}
        grown = list(nodes.tolist())
        rows, cols, vals = [], [], []
        for k, v in enumerate(nodes.tolist()):
            lo, hi = csr.indptr[v], csr.indptr[v + 1]
            nbrs, wts = csr.indices[lo:hi], csr.data[lo:hi]
            if len(nbrs) > fan:
                pick = np.sort(rng.choice(len(nbrs), fan, replace=False))
                nbrs, wts = nbrs[pick], wts[pick]
            for u, w in zip(nbrs.tolist(), wts.tolist()):
                if u not in index:
                    index[u] = len(grown)
                    grown.append(u)
                rows.append(k)
                cols.append(index[u])
                vals.append(w)
        layers.append(CooMatrix(np.array(rows, np.int64), np.array(cols, np.int64),
                                np.array(vals, np.float64), len(nodes), len(grown)))
        nodes = np.array(grown, dtype=np.int64)
        node_sets.append(nodes)
    layers.reverse()
    node_sets.reverse()
    x = features[node_sets[0]] if features is not None else np.zeros((len(node_sets[0]), 0))
    y = labels[node_sets[-1]] if labels is not None else np.zeros(len(batch), dtype=np.int64)
    return WorkloadBatch(layers, node_sets, x, y)
