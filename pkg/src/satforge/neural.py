"""Graph convolutional pair scorer implemented directly on numpy arrays.

Each layer computes, for every node u,

    n_u = mean_{v in N(u)} relu(Q h_v + q)
    h_u' = relu(W [h_u, n_u])

where N(u) is the LCG neighbourhood plus, for literal nodes, the
complementary literal. Pairs are scored with sigmoid(h_u . h_v).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .graphs import Lcg, NodeKind

FEATURE_DIM = 3
CHECKPOINT_VERSION = 1


class NumericalError(FloatingPointError):
    pass


# -- parameters -------------------------------------------------------------

@dataclass
class ModelParams:
    Q: list[np.ndarray]
    q: list[np.ndarray]
    W: list[np.ndarray]
    final_relu: bool = True

    @classmethod
    def init(cls, layers: int = 3, dim: int = 32, seed: int = 0,
             final_relu: bool = True, in_dim: int = FEATURE_DIM) -> "ModelParams":
        """Glorot-uniform weights, zero message biases."""
        rng = np.random.default_rng(seed)

        def glorot(rows, cols):
            bound = np.sqrt(6.0 / (rows + cols))
            return rng.uniform(-bound, bound, size=(rows, cols))

        Q, q, W = [], [], []
        d_in = in_dim
        for _ in range(layers):
            Q.append(glorot(dim, d_in))
            q.append(np.zeros(dim))
            W.append(glorot(dim, d_in + dim))
            d_in = dim
        return cls(Q, q, W, final_relu)

    @property
    def layers(self) -> int:
        return len(self.W)

    @property
    def dim(self) -> int:
        return self.W[-1].shape[0]

    def tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for l in range(self.layers):
            out[f"Q{l}"] = self.Q[l]
            out[f"q{l}"] = self.q[l]
            out[f"W{l}"] = self.W[l]
        return out

    def copy(self) -> "ModelParams":
        return ModelParams([a.copy() for a in self.Q], [a.copy() for a in self.q],
                           [a.copy() for a in self.W], self.final_relu)

    def zeros_like(self) -> "ModelParams":
        return ModelParams([np.zeros_like(a) for a in self.Q], [np.zeros_like(a) for a in self.q],
                           [np.zeros_like(a) for a in self.W], self.final_relu)

    def validate(self) -> None:
        d_in = self.Q[0].shape[1]
        if not (len(self.Q) == len(self.q) == len(self.W)) or not self.W:
            raise ValueError("inconsistent layer count")
        for l in range(self.layers):
            dm = self.Q[l].shape[0]
            if self.Q[l].shape != (dm, d_in) or self.q[l].shape != (dm,):
                raise ValueError(f"layer {l}: bad message transform shape")
            if self.W[l].ndim != 2 or self.W[l].shape[1] != d_in + dm:
                raise ValueError(f"layer {l}: combine matrix must take {d_in + dm} inputs")
            d_in = self.W[l].shape[0]
        for name, a in self.tensors().items():
            if not np.all(np.isfinite(a)):
                raise NumericalError(f"non-finite entries in {name}")


# -- message graphs ---------------------------------------------------------

@dataclass
class PropGraph:
    """Row-normalised propagation matrix plus one-hot features for a set of nodes."""

    mean: sp.csr_matrix
    features: np.ndarray
    clause_row: dict[int, int] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.features.shape[0]


def one_hot(kinds: np.ndarray) -> np.ndarray:
    x = np.zeros((len(kinds), FEATURE_DIM))
    x[np.arange(len(kinds)), kinds] = 1.0
    return x


def build_prop(kinds: np.ndarray, src: np.ndarray, dst: np.ndarray) -> PropGraph:
    """Directed message edges src -> dst; each row of ``mean`` averages its in-messages."""
    n = len(kinds)
    counts = np.bincount(dst, minlength=n).astype(float)
    inv = np.divide(1.0, counts, out=np.zeros(n), where=counts > 0)
    mean = sp.csr_matrix((inv[dst], (dst, src)), shape=(n, n))
    return PropGraph(mean, one_hot(kinds))


def lcg_message_edges(num_vars: int, edge_lit: np.ndarray, edge_row: np.ndarray):
    """Message edges for literal rows 0..2V-1 and clause rows given per LCG edge."""
    lits = np.arange(2 * num_vars)
    src = np.concatenate([edge_lit, edge_row, lits])
    dst = np.concatenate([edge_row, edge_lit, lits ^ 1])
    return src, dst


def message_graph(g: Lcg) -> PropGraph:
    """Rows 0..2V-1 are literals (dense index), clause rows follow in id order."""
    nl = g.num_literals
    cids = sorted(g.clause_adj)
    clause_row = {c: nl + j for j, c in enumerate(cids)}
    el, er = [], []
    for c in cids:
        r = clause_row[c]
        for x in g.clause_adj[c]:
            el.append(x)
            er.append(r)
    kinds = np.concatenate([np.arange(nl) & 1, np.full(len(cids), int(NodeKind.CLAUSE))]).astype(int)
    src, dst = lcg_message_edges(g.num_vars, np.array(el, dtype=int), np.array(er, dtype=int))
    pg = build_prop(kinds, src, dst)
    pg.clause_row = clause_row
    return pg


def neighbourhood(g: Lcg, node: tuple[str, int]) -> set[tuple[str, int]]:
    """Message-passing neighbours of ``("lit", x)`` or ``("clause", c)``."""
    kind, i = node
    if kind == "lit":
        return {("clause", c) for c in g.lit_adj[i]} | {("lit", i ^ 1)}
    return {("lit", x) for x in g.clause_adj[i]}


# -- forward / backward -----------------------------------------------------

@dataclass
class _LayerCache:
    h: np.ndarray
    pre_msg: np.ndarray
    concat: np.ndarray
    pre_out: np.ndarray


def _relu(x):
    return np.maximum(x, 0.0)


def forward(pg: PropGraph, params: ModelParams, keep: bool = False):
    h = pg.features
    caches = []
    L = params.layers
    for l in range(L):
        pre_msg = h @ params.Q[l].T + params.q[l]
        agg = pg.mean @ _relu(pre_msg)
        concat = np.concatenate([h, agg], axis=1)
        pre_out = concat @ params.W[l].T
        last = l == L - 1
        h_next = _relu(pre_out) if (params.final_relu or not last) else pre_out
        if keep:
            caches.append(_LayerCache(h, pre_msg, concat, pre_out))
        h = h_next
    if not np.all(np.isfinite(h)):
        raise NumericalError("non-finite activation in encoder")
    return (h, caches) if keep else h


def encode(pg: PropGraph, params: ModelParams) -> np.ndarray:
    return forward(pg, params)


def backward(pg: PropGraph, params: ModelParams, caches, grad_h: np.ndarray) -> ModelParams:
    """Gradients of every parameter given dLoss/dH for the final embeddings."""
    grads = params.zeros_like()
    meanT = pg.mean.T.tocsr()
    g = grad_h
    L = params.layers
    for l in reversed(range(L)):
        c = caches[l]
        last = l == L - 1
        if params.final_relu or not last:
            g = g * (c.pre_out > 0)
        grads.W[l] = g.T @ c.concat
        d_concat = g @ params.W[l]
        d_in = c.h.shape[1]
        d_self, d_agg = d_concat[:, :d_in], d_concat[:, d_in:]
        d_pre = (meanT @ d_agg) * (c.pre_msg > 0)
        grads.Q[l] = d_pre.T @ c.h
        grads.q[l] = d_pre.sum(axis=0)
        g = d_self + d_pre @ params.Q[l]
    return grads


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def score_pair(h_u: np.ndarray, h_v: np.ndarray) -> float:
    return float(sigmoid(np.dot(h_u, h_v)))


def bce_loss(h_u: np.ndarray, h_v: np.ndarray, labels: np.ndarray):
    """Mean binary cross-entropy of sigmoid(h_u . h_v) against labels.

    Returns ``(loss, d_h_u, d_h_v)``.
    """
    labels = np.asarray(labels, dtype=float)
    s = np.einsum("ij,ij->i", h_u, h_v)
    loss = float(np.mean(np.logaddexp(0.0, s) - labels * s))
    ds = (sigmoid(s) - labels) / len(labels)
    return loss, ds[:, None] * h_v, ds[:, None] * h_u


def pair_loss_and_grads(pg: PropGraph, params: ModelParams, a: np.ndarray, b: np.ndarray,
                        labels: np.ndarray):
    """Loss over row pairs (a[i], b[i]) and gradients of every parameter."""
    h, caches = forward(pg, params, keep=True)
    loss, du, dv = bce_loss(h[a], h[b], labels)
    grad_h = np.zeros_like(h)
    np.add.at(grad_h, a, du)
    np.add.at(grad_h, b, dv)
    return loss, backward(pg, params, caches, grad_h), h


# -- optimiser --------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState) -> ModelParams:
    """Bias-corrected Adam update, applied in place."""
    state.step += 1
    t = state.step
    for name, p in params.tensors().items():
        g = grads.tensors()[name]
        if p.shape != g.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        m_hat = m / (1 - state.beta1 ** t)
        v_hat = v / (1 - state.beta2 ** t)
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


# -- checkpoints ------------------------------------------------------------

def save_checkpoint(path, params: ModelParams, state: AdamState | None = None,
                    seed: int | None = None, extra: dict | None = None) -> None:
    doc = {
        "format": "satforge-checkpoint",
        "version": CHECKPOINT_VERSION,
        "layers": params.layers,
        "dim": params.dim,
        "in_dim": int(params.Q[0].shape[1]),
        "final_relu": params.final_relu,
        "seed": seed,
        "tensors": {k: {"shape": list(a.shape), "data": a.ravel().tolist()}
                    for k, a in params.tensors().items()},
        "extra": extra or {},
    }
    if state is not None:
        doc["adam"] = {
            "lr": state.lr, "beta1": state.beta1, "beta2": state.beta2,
            "eps": state.eps, "step": state.step,
            "m": {k: a.ravel().tolist() for k, a in state.m.items()},
            "v": {k: a.ravel().tolist() for k, a in state.v.items()},
        }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> tuple[ModelParams, AdamState | None, dict]:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"corrupted checkpoint: {exc}") from None
    if doc.get("format") != "satforge-checkpoint":
        raise ValueError("not a satforge checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    t = {k: np.array(v["data"], dtype=float).reshape(v["shape"]) for k, v in doc["tensors"].items()}
    L = doc["layers"]
    params = ModelParams([t[f"Q{l}"] for l in range(L)], [t[f"q{l}"] for l in range(L)],
                         [t[f"W{l}"] for l in range(L)], doc["final_relu"])
    params.validate()
    if params.dim != doc["dim"] or params.Q[0].shape[1] != doc["in_dim"]:
        raise ValueError("checkpoint header disagrees with tensor shapes")
    state = None
    if "adam" in doc:
        a = doc["adam"]
        shapes = {k: v.shape for k, v in params.tensors().items()}
        state = AdamState(a["lr"], a["beta1"], a["beta2"], a["eps"], a["step"],
                          {k: np.array(v).reshape(shapes[k]) for k, v in a["m"].items()},
                          {k: np.array(v).reshape(shapes[k]) for k, v in a["v"].items()})
    meta = {"seed": doc.get("seed"), **doc.get("extra", {})}
    return params, state, meta


# -- incremental encoding for generation --------------------------------------

class IncrementalEncoder:
    """Keeps per-layer embeddings of a mutable LCG up to date across merges.

    Node rows: literal x -> x, clause c -> 2V + c. After ``g.merge(u, v)`` call
    ``after_merge(u, v_lits)`` with the literal set that moved from v; only
    nodes within reach of the change are recomputed. Final-layer rows are
    kept current for clause nodes only.
    """

    def __init__(self, g: Lcg, params: ModelParams):
        self.g = g
        self.p = params
        self.nl = g.num_literals
        size = self.nl + g.next_id
        L = params.layers
        kinds = np.concatenate([np.arange(self.nl) & 1,
                                np.full(g.next_id, int(NodeKind.CLAUSE))]).astype(int)
        self.h = [one_hot(kinds)] + [np.zeros((size, params.W[l].shape[0])) for l in range(L)]
        self.msg = [np.zeros((size, params.Q[l].shape[0])) for l in range(L)]
        self.refresh()

    def refresh(self) -> None:
        """Full recomputation from scratch."""
        g, p = self.g, self.p
        pg = message_graph(g)
        rows = np.array(list(range(self.nl)) + [self.nl + c for c in sorted(g.clause_adj)], dtype=int)
        h = pg.features
        for l in range(p.layers):
            pre = h @ p.Q[l].T + p.q[l]
            m = _relu(pre)
            self.msg[l][rows] = m
            out = np.concatenate([h, pg.mean @ m], axis=1) @ p.W[l].T
            h = self._act(out, l)
            self.h[l + 1][rows] = h

    def _act(self, x, l):
        if self.p.final_relu or l < self.p.layers - 1:
            return _relu(x)
        return x

    def _nbrs(self, r: int) -> list[int]:
        if r < self.nl:
            return [self.nl + c for c in self.g.lit_adj[r]] + [r ^ 1]
        return list(self.g.clause_adj[r - self.nl])

    def clause_embedding(self, c: int) -> np.ndarray:
        return self.h[-1][self.nl + c]

    def clause_embeddings(self, cids) -> np.ndarray:
        return self.h[-1][self.nl + np.asarray(cids, dtype=int)]

    def after_merge(self, u: int, moved_lits) -> None:
        p = self.p
        L = p.layers
        ru = self.nl + u
        structural = {ru, *moved_lits}
        changed: set[int] = set()
        for l in range(L):
            if changed:
                idx = np.fromiter(changed, dtype=int)
                self.msg[l][idx] = _relu(self.h[l][idx] @ p.Q[l].T + p.q[l])
            recompute = set(structural) | changed
            for r in changed:
                recompute.update(self._nbrs(r))
            if l == L - 1:
                recompute = {r for r in recompute if r >= self.nl}
            rows = sorted(recompute)
            nbr_lists = [self._nbrs(r) for r in rows]
            counts = np.array([len(n) for n in nbr_lists])
            flat = np.fromiter((x for n in nbr_lists for x in n), dtype=int, count=int(counts.sum()))
            offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
            agg = np.add.reduceat(self.msg[l][flat], offsets, axis=0) / counts[:, None]
            rows_a = np.array(rows, dtype=int)
            out = np.concatenate([self.h[l][rows_a], agg], axis=1) @ p.W[l].T
            self.h[l + 1][rows_a] = self._act(out, l)
            changed = recompute
        if not np.all(np.isfinite(self.h[-1][rows_a])):
            raise NumericalError("non-finite activation in encoder")
