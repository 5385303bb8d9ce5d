"""GCN layer training dataflow: four execution orders and their cost model.

A layer computes ``sigma(A @ X @ W)`` with a rectangular normalised
adjacency ``A`` (n x n_bar, e non-zeros), features ``X`` (n_bar x d) and
weights ``W`` (d x h).  Combination-first (CoAg) evaluates ``A(XW)``,
aggregation-first (AgCo) evaluates ``(AX)W``.  The standard backward pass of
either order needs ``X^T`` or ``(AX)^T`` for the weight gradient.  The
transposed variants instead carry the error transposed from the loss layer
down, so the gradient comes out as ``G^T`` and only ``W^T`` and the loss
error are ever transposed.

Every matrix product and transpose goes through a :class:`Trace` that
records which stage it belongs to and its cost in multiply-adds (products)
or element moves (transposes).
"""

from __future__ import annotations

import enum
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graphprep import CooMatrix


class DimensionMismatch(ValueError):
    pass


class ExecOrder(enum.Enum):
    COAG = "CoAg"
    AGCO = "AgCo"
    OURS_COAG = "OursCoAg"
    OURS_AGCO = "OursAgCo"

    @property
    def combine_first(self) -> bool:
        return self in (ExecOrder.COAG, ExecOrder.OURS_COAG)

    @property
    def transposed(self) -> bool:
        return self in (ExecOrder.OURS_COAG, ExecOrder.OURS_AGCO)

    @property
    def base(self) -> "ExecOrder":
        return ExecOrder.COAG if self.combine_first else ExecOrder.AGCO


FORWARD = "forward"
FWD_TRANSPOSE = "forward_transpose"
BACKWARD = "backward"
GRADIENT = "gradient"
GRAD_TRANSPOSE = "gradient_transpose"
STAGES = (FORWARD, FWD_TRANSPOSE, BACKWARD, GRADIENT, GRAD_TRANSPOSE)


@dataclass(frozen=True)
class LayerSpec:
    b: int  # batch size
    n: int  # output rows of this layer
    n_bar: int  # input rows (1-hop neighbours of the n nodes)
    d: int
    h: int
    e: int  # non-zeros of A
    c: int  # classes

    def __post_init__(self):
        for k, v in vars(self).items():
            if v <= 0:
                raise ValueError(f"{k} must be positive, got {v}")
        if self.n > self.n_bar:
            raise ValueError("n must not exceed n_bar")
        if self.e > self.n * self.n_bar:
            raise ValueError("more non-zeros than matrix entries")

    def scaled(self, k: int) -> "LayerSpec":
        return LayerSpec(*(v * k for v in vars(self).values()))


# --- traced primitives -------------------------------------------------------------------

@dataclass(frozen=True)
class Op:
    kind: str  # gemm | spmm | transpose | sparse_transpose
    stage: str
    name: str
    cost: int


@dataclass
class Trace:
    ops: list[Op] = field(default_factory=list)

    def add(self, kind: str, stage: str, name: str, cost: int) -> None:
        self.ops.append(Op(kind, stage, name, int(cost)))

    def time(self, stage: str | None = None) -> int:
        return sum(o.cost for o in self.ops if stage is None or o.stage == stage)

    def by_stage(self) -> dict[str, int]:
        return {s: self.time(s) for s in STAGES}

    def macs(self, kind: str | None = None, stage: str | None = None) -> int:
        return sum(o.cost for o in self.ops
                   if o.kind in ("gemm", "spmm") and (kind is None or o.kind == kind)
                   and (stage is None or o.stage == stage))

    @property
    def transposed_names(self) -> list[str]:
        return [o.name for o in self.ops if o.kind.endswith("transpose")]


def _t(trace: Trace | None, *args) -> None:
    if trace is not None:
        trace.add(*args)


def _need(cond: bool, msg: str) -> None:
    if not cond:
        raise DimensionMismatch(msg)


def gm(a: np.ndarray, b: np.ndarray, trace=None, stage=FORWARD, name="GM") -> np.ndarray:
    _need(a.shape[1] == b.shape[0], f"{name}: {a.shape} @ {b.shape}")
    _t(trace, "gemm", stage, name, a.shape[0] * a.shape[1] * b.shape[1])
    return a @ b


def sm(a: sp.spmatrix, b: np.ndarray, trace=None, stage=FORWARD, name="SM") -> np.ndarray:
    """Sparse @ dense; each stored non-zero costs one multiply-add per output column."""
    _need(a.shape[1] == b.shape[0], f"{name}: {a.shape} @ {b.shape}")
    _t(trace, "spmm", stage, name, a.nnz * b.shape[1])
    return np.asarray(a @ b)


def ms(b: np.ndarray, a: sp.spmatrix, trace=None, stage=BACKWARD, name="MS") -> np.ndarray:
    """Dense @ sparse."""
    _need(b.shape[1] == a.shape[0], f"{name}: {b.shape} @ {a.shape}")
    _t(trace, "spmm", stage, name, a.nnz * b.shape[0])
    return np.asarray(b @ a)


def transpose(x: np.ndarray, trace=None, stage=FWD_TRANSPOSE, name="T") -> np.ndarray:
    _t(trace, "transpose", stage, name, x.size)
    return np.ascontiguousarray(x.T)


def transpose_sparse(a: sp.spmatrix, trace=None, stage=FWD_TRANSPOSE, name="A^T") -> sp.csr_matrix:
    """Re-sort a sparse matrix column-major, costed as one pass over all
    non-zeros per output row (n_cols * nnz)."""
    _t(trace, "sparse_transpose", stage, name, a.shape[1] * a.nnz)
    return sp.csr_matrix(a.T)


# --- activations ---------------------------------------------------------------------------

def relu(z):
    return np.maximum(z, 0)


def relu_grad(z):
    return (z > 0).astype(z.dtype)


ACTIVATIONS = {
    "relu": (relu, relu_grad),
    "identity": (lambda z: z, lambda z: np.ones_like(z)),
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
}


# --- layer ---------------------------------------------------------------------------------

def as_sparse(a) -> sp.csr_matrix:
    if isinstance(a, CooMatrix):
        return a.to_scipy()
    if sp.issparse(a):
        return sp.csr_matrix(a)
    return sp.csr_matrix(np.asarray(a))


def normalize_adjacency(a: CooMatrix) -> CooMatrix:
    """``D^-1/2 (A + I) D^-1/2`` with D the row-degree matrix of ``A + I``."""
    if a.n_rows != a.n_cols:
        raise DimensionMismatch("adjacency must be square")
    if a.nnz and a.val.min() < 0:
        raise ValueError("adjacency weights must be nonnegative")
    m = sp.coo_matrix((a.val.astype(np.float64), (a.row, a.col)), shape=a.shape).tocsr()
    m = m + sp.identity(a.n_rows, format="csr")
    deg = np.asarray(m.sum(axis=1)).ravel()
    inv = 1.0 / np.sqrt(deg)
    m = sp.coo_matrix(sp.diags(inv) @ m @ sp.diags(inv))
    m.sum_duplicates()
    return CooMatrix(m.row, m.col, m.data, a.n_rows, a.n_cols)


@dataclass
class LayerContext:
    """Saved-for-backprop state of one layer."""

    order: ExecOrder
    A: sp.csr_matrix
    W: np.ndarray
    Z: np.ndarray
    activation: str
    X: np.ndarray | None = None  # combine-first orders
    AX: np.ndarray | None = None  # aggregate-first orders
    W_T: np.ndarray | None = None  # transposed orders keep the weight bank transposed


def forward(order: ExecOrder, A, X: np.ndarray, W: np.ndarray, activation: str = "relu",
            trace: Trace | None = None) -> tuple[np.ndarray, LayerContext]:
    A = as_sparse(A)
    _need(A.shape[1] == X.shape[0], f"A {A.shape} vs X {X.shape}")
    _need(X.shape[1] == W.shape[0], f"X {X.shape} vs W {W.shape}")
    act, _ = ACTIVATIONS[activation]
    if order.combine_first:
        XW = gm(X, W, trace, FORWARD, "XW")
        Z = sm(A, XW, trace, FORWARD, "A(XW)")
        ctx = LayerContext(order, A, W, Z, activation, X=X)
    else:
        AX = sm(A, X, trace, FORWARD, "AX")
        Z = gm(AX, W, trace, FORWARD, "(AX)W")
        ctx = LayerContext(order, A, W, Z, activation, AX=AX)
    return act(Z), ctx


def backward_standard(ctx: LayerContext, E_next: np.ndarray, trace: Trace | None = None
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Error w.r.t. the layer input (n_bar x d) and weight gradient (d x h)."""
    _need(E_next.shape == ctx.Z.shape, f"error {E_next.shape} vs output {ctx.Z.shape}")
    M = E_next * ACTIVATIONS[ctx.activation][1](ctx.Z)
    A_T = transpose_sparse(ctx.A, trace, FWD_TRANSPOSE, "A^T")
    W_T = transpose(ctx.W, trace, FWD_TRANSPOSE, "W^T")
    if ctx.order.combine_first:
        AtM = sm(A_T, M, trace, BACKWARD, "A^T E")
        E = gm(AtM, W_T, trace, BACKWARD, "(A^T E)W^T")
        X_T = transpose(ctx.X, trace, GRAD_TRANSPOSE, "X^T")
        G = gm(X_T, AtM, trace, GRADIENT, "X^T(A^T E)")
    else:
        MWt = gm(M, W_T, trace, BACKWARD, "EW^T")
        E = sm(A_T, MWt, trace, BACKWARD, "A^T(EW^T)")
        AX_T = transpose(ctx.AX, trace, GRAD_TRANSPOSE, "(AX)^T")
        G = gm(AX_T, M, trace, GRADIENT, "(AX)^T E")
    return E, G


def backward_transposed(ctx: LayerContext, E_next_T: np.ndarray, trace: Trace | None = None
                        ) -> tuple[np.ndarray, np.ndarray]:
    """Transposed error (d x n_bar) and transposed gradient (h x d).

    Only ``W`` is transposed here (into ``ctx.W_T`` for the update); the
    saved ``X`` / ``AX`` are consumed as stored.
    """
    _need(E_next_T.shape == ctx.Z.shape[::-1], f"error {E_next_T.shape} vs output^T {ctx.Z.shape[::-1]}")
    M_T = E_next_T * ACTIVATIONS[ctx.activation][1](ctx.Z).T
    ctx.W_T = transpose(ctx.W, trace, FWD_TRANSPOSE, "W^T")
    if ctx.order.combine_first:
        MA = ms(M_T, ctx.A, trace, BACKWARD, "E^T A")
        E_T = gm(ctx.W, MA, trace, BACKWARD, "W(E^T A)")
        G_T = gm(MA, ctx.X, trace, GRADIENT, "(E^T A)X")
    else:
        WM = gm(ctx.W, M_T, trace, BACKWARD, "W E^T")
        E_T = ms(WM, ctx.A, trace, BACKWARD, "(W E^T)A")
        G_T = gm(M_T, ctx.AX, trace, GRADIENT, "E^T(AX)")
    return E_T, G_T


def backward(ctx: LayerContext, E_next: np.ndarray, trace: Trace | None = None):
    """Dispatch on the context's order; ``E_next`` is transposed for the Ours orders."""
    if ctx.order.transposed:
        return backward_transposed(ctx, E_next, trace)
    return backward_standard(ctx, E_next, trace)


def transpose_error(E_L: np.ndarray, trace: Trace | None = None) -> np.ndarray:
    return transpose(E_L, trace, GRAD_TRANSPOSE, "(E^L)^T")


def sgd_update(W: np.ndarray, G: np.ndarray, eta: float) -> np.ndarray:
    _need(W.shape == G.shape, f"weights {W.shape} vs gradient {G.shape}")
    return W - eta * G


def apply_update(ctx: LayerContext, grad: np.ndarray, eta: float) -> np.ndarray:
    """New weights for a layer given the gradient its order produced.

    Transposed orders update the transposed weight bank with ``G^T`` and hand
    back a transposed view, so no gradient transpose is materialised.
    """
    if ctx.order.transposed:
        W_T = ctx.W_T if ctx.W_T is not None else ctx.W.T
        return sgd_update(W_T, grad, eta).T
    return sgd_update(ctx.W, grad, eta)


# --- cost model ----------------------------------------------------------------------------

@dataclass(frozen=True)
class CostReport:
    order: ExecOrder
    time: dict[str, int]
    storage: dict[str, int]

    @property
    def total_time(self) -> int:
        return sum(self.time.values())

    @property
    def total_storage(self) -> int:
        return sum(self.storage.values())

    def as_dict(self) -> dict:
        return {"order": self.order.value, "time": dict(self.time), "storage": dict(self.storage),
                "total_time": self.total_time, "total_storage": self.total_storage}


def estimate_costs(s: LayerSpec, order: ExecOrder) -> CostReport:
    b, n, nb, d, h, e, c = s.b, s.n, s.n_bar, s.d, s.h, s.e, s.c
    if order is ExecOrder.COAG:
        time = (nb * d * h + e * h, nb * e + h * d, e * h + nb * d * h, nb * d * h, nb * d)
        store = (nb * d + nb * h + e, e, nb * h + n * h, 0, nb * d)
    elif order is ExecOrder.AGCO:
        time = (e * d + n * d * h, nb * e + h * d, n * d * h + e * d, n * d * h, n * d)
        store = (nb * d + n * d + e, e, n * d + n * h, 0, n * d)
    elif order is ExecOrder.OURS_COAG:
        time = (nb * d * h + e * h, h * d, e * h + nb * d * h, nb * d * h, b * c)
        store = (nb * d + nb * h + e, 0, nb * h + n * h, 0, 0)
    else:
        time = (e * d + n * d * h, h * d, n * d * h + e * d, n * d * h, b * c)
        store = (nb * d + n * d + e, 0, n * d + n * h, 0, 0)
    return CostReport(order, dict(zip(STAGES, time)), dict(zip(STAGES, store)))


def select_order(s: LayerSpec) -> ExecOrder:
    orders = list(ExecOrder)
    reports = [estimate_costs(s, o) for o in orders]
    best = min(range(len(orders)), key=lambda i: (reports[i].total_time, reports[i].total_storage, i))
    return orders[best]


def order_gaps(s: LayerSpec) -> dict[str, int]:
    """Time and storage saved by each transposed order over its base order."""
    b, n, nb, d, e, c = s.b, s.n, s.n_bar, s.d, s.e, s.c
    return {
        "time_coag": nb * (e + d) - b * c,
        "time_agco": nb * e + n * d - b * c,
        "storage_coag": e + nb * d,
        "storage_agco": e + n * d,
    }


# --- two-layer model -----------------------------------------------------------------------

def softmax_xent(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    m = len(labels)
    loss = -np.log(p[np.arange(m), labels]).mean()
    p[np.arange(m), labels] -= 1.0
    return float(loss), p / m


@dataclass
class TwoLayerGCN:
    """``softmax(A2 relu(A1 X W1) W2)`` trained with plain SGD."""

    W1: np.ndarray
    W2: np.ndarray
    activation: str = "relu"

    @classmethod
    def init(cls, d: int, h: int, c: int, seed: int = 0, dtype=np.float64) -> "TwoLayerGCN":
        rng = np.random.default_rng(seed)
        w1 = rng.normal(0, np.sqrt(2.0 / d), (d, h)).astype(dtype)
        w2 = rng.normal(0, np.sqrt(1.0 / h), (h, c)).astype(dtype)
        return cls(w1, w2)

    def loss(self, A1, A2, X, labels, orders=(ExecOrder.COAG, ExecOrder.COAG)) -> float:
        H, _ = forward(orders[0], A1, X, self.W1, self.activation)
        out, _ = forward(orders[1], A2, H, self.W2, "identity")
        return softmax_xent(out, labels)[0]

    def gradients(self, A1, A2, X, labels, orders=(ExecOrder.COAG, ExecOrder.COAG),
                  trace: Trace | None = None):
        """Loss, per-layer gradients as each order produces them, and contexts.

        Gradients of transposed orders come back as ``G^T``.  The loss error
        is transposed once, at the top of the chain, when the output layer
        runs a transposed order; mixing orientations across layers costs one
        more transpose of the inner error where they change.
        """
        H, ctx1 = forward(orders[0], A1, X, self.W1, self.activation, trace)
        out, ctx2 = forward(orders[1], A2, H, self.W2, "identity", trace)
        loss, E = softmax_xent(out, labels)
        flipped = False
        grads = []
        for ctx in (ctx2, ctx1):
            if ctx.order.transposed != flipped:
                if ctx is ctx2:
                    E = transpose_error(E, trace)
                else:  # orientation changes between layers
                    E = transpose(E, trace, GRAD_TRANSPOSE, "E^T")
                flipped = ctx.order.transposed
            E, G = backward(ctx, E, trace)
            grads.append(G)
        return loss, grads[::-1], (ctx1, ctx2)

    def standard_gradients(self, A1, A2, X, labels, orders=(ExecOrder.COAG, ExecOrder.COAG)):
        loss, grads, ctxs = self.gradients(A1, A2, X, labels, orders)
        return loss, [g.T if c.order.transposed else g for g, c in zip(grads, ctxs)]

    def step(self, A1, A2, X, labels, eta: float, orders=(ExecOrder.COAG, ExecOrder.COAG),
             trace: Trace | None = None) -> float:
        loss, (g1, g2), (c1, c2) = self.gradients(A1, A2, X, labels, orders, trace)
        self.W1 = np.ascontiguousarray(apply_update(c1, g1, eta))
        self.W2 = np.ascontiguousarray(apply_update(c2, g2, eta))
        return loss


# --- matrix files --------------------------------------------------------------------------

_MAGIC = b"GCNM"


def save_matrix(path: str | Path, m: np.ndarray) -> None:
    """Binary layout: magic, uint64 rows, uint64 cols, float64 row-major values."""
    m = np.ascontiguousarray(m, dtype="<f8")
    with open(path, "wb") as f:
        f.write(_MAGIC + struct.pack("<QQ", *m.shape))
        f.write(m.tobytes())


def load_matrix(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not a matrix file")
    rows, cols = struct.unpack("<QQ", raw[4:20])
    data = np.frombuffer(raw[20:], dtype="<f8")
    if data.size != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} values, found {data.size}")
    return data.reshape(rows, cols).copy()


def matrix_to_csv(m: np.ndarray) -> str:
    buf = io.StringIO()
    np.savetxt(buf, np.atleast_2d(m), delimiter=",", fmt="%.17g")
    return buf.getvalue()


def matrix_from_csv(text: str) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(io.StringIO(text), delimiter=",", ndmin=2))
