"""Training data from random split sequences, and the training loop.

A decomposition splits clause nodes of an input LCG until every clause node
has degree one. The resulting forest is the graph template; the splits,
read backwards, are the merges that rebuild the input. Intermediate graphs
are never stored: any snapshot is rebuilt from the forest and the merge
list.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import random
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .cnf import CnfFormula, parse_dimacs, write_dimacs
from .graphs import Lcg, NodeKind, formula_of, lcg_of
from .neural import (AdamState, ModelParams, NumericalError, PropGraph, adam_step, build_prop,
                     forward, lcg_message_edges, message_graph, pair_loss_and_grads)

log = logging.getLogger(__name__)

TEMPLATE_VERSION = 1
DATASET_VERSION = 1


@dataclass
class GraphTemplate:
    g0: Lcg
    n: int
    provenance: str = ""

    def check(self) -> None:
        self.g0.check()
        if any(len(s) != 1 for s in self.g0.clause_adj.values()):
            raise ValueError("template clause nodes must all have degree 1")
        if self.n < 0 or (self.g0.num_clauses and self.n >= self.g0.num_clauses):
            raise ValueError(f"step count {self.n} incompatible with {self.g0.num_clauses} clause nodes")


@dataclass
class Decomposition:
    """One pass of random splits over a source graph.

    ``merges[j]`` turns snapshot j into snapshot j+1 (snapshot 0 is the
    forest, snapshot n the source). Training example j asks the model to
    prefer ``merges[j]`` over ``(merges[j][0], negatives[j])`` on snapshot j.
    """

    template: GraphTemplate
    merges: np.ndarray
    negatives: np.ndarray

    def __post_init__(self):
        g0 = self.template.g0
        E = g0.next_id
        self.lit_of = np.zeros(E, dtype=np.int64)
        for c, s in g0.clause_adj.items():
            (self.lit_of[c],) = s
        self.retire_time = np.full(E, np.iinfo(np.int64).max, dtype=np.int64)
        self.parent = np.arange(E, dtype=np.int64)
        if len(self.merges):
            v = self.merges[:, 1]
            self.retire_time[v] = np.arange(len(self.merges))
            self.parent[v] = self.merges[:, 0]

    @property
    def n(self) -> int:
        return len(self.merges)

    @property
    def num_vars(self) -> int:
        return self.template.g0.num_vars

    def owners(self, j: int) -> np.ndarray:
        """Clause id owning each forest edge in snapshot j."""
        owner = np.arange(len(self.lit_of))
        while True:
            mask = self.retire_time[owner] < j
            if not mask.any():
                return owner
            owner[mask] = self.parent[owner[mask]]

    def alive(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.retire_time >= j)

    def snapshot(self, j: int) -> Lcg:
        g = self.template.g0.copy()
        for u, v in self.merges[:j]:
            g.merge(int(u), int(v), check=False)
        return g

    def replay(self) -> Lcg:
        return self.snapshot(self.n)


class _IndexedSet:
    """Set with O(1) add, remove and uniform choice."""

    def __init__(self):
        self.items: list[int] = []
        self.pos: dict[int, int] = {}

    def add(self, x):
        if x not in self.pos:
            self.pos[x] = len(self.items)
            self.items.append(x)

    def discard(self, x):
        i = self.pos.pop(x, None)
        if i is None:
            return
        last = self.items.pop()
        if last != x:
            self.items[i] = last
            self.pos[last] = i

    def choice(self, rng: random.Random):
        return self.items[rng.randrange(len(self.items))]

    def __len__(self):
        return len(self.items)


def _random_proper_subset(items: list[int], rng: random.Random) -> list[int]:
    while True:
        sub = [x for x in items if rng.random() < 0.5]
        if 0 < len(sub) < len(items):
            return sub


def decompose(g: Lcg, seed: int = 0, provenance: str = "") -> Decomposition:
    """Split clause nodes at random until the graph is a forest."""
    rng = random.Random(seed)
    work = g.renumbered()
    n = work.num_edges - work.num_clauses
    splittable = _IndexedSet()
    for c in work.clause_ids():
        if work.degree(c) > 1:
            splittable.add(c)
    splits = []
    for _ in range(n):
        s = splittable.choice(rng)
        moved = _random_proper_subset(sorted(work.clause_adj[s]), rng)
        u, v = work.split(s, moved)
        if work.degree(u) < 2:
            splittable.discard(u)
        if work.degree(v) > 1:
            splittable.add(v)
        ids = work.clause_ids()
        if len(ids) > 2:
            while True:
                neg = ids[rng.randrange(len(ids))]
                if neg != u and neg != v:
                    break
        else:
            neg = -1
        splits.append((u, v, neg))
    assert len(splittable) == 0
    splits.reverse()
    merges = np.array([(u, v) for u, v, _ in splits], dtype=np.int64).reshape(-1, 2)
    negatives = np.array([x for _, _, x in splits], dtype=np.int64)
    return Decomposition(GraphTemplate(work, n, provenance), merges, negatives)


@dataclass
class Dataset:
    decompositions: list[Decomposition] = field(default_factory=list)

    def examples(self) -> np.ndarray:
        """(decomposition, step) pairs with a usable negative."""
        rows = [(d, j) for d, dec in enumerate(self.decompositions)
                for j in np.flatnonzero(dec.negatives >= 0)]
        return np.array(rows, dtype=np.int64).reshape(-1, 2)

    def __len__(self):
        return int(sum((d.negatives >= 0).sum() for d in self.decompositions))

    @property
    def templates(self) -> list[GraphTemplate]:
        return [d.template for d in self.decompositions]

    def batch(self, rows: np.ndarray, hops: int | None = None):
        return batch_graph(self, rows, hops)


@dataclass
class PairDataset:
    """Fixed graphs with hand-picked (u, v+, v-) clause triples."""

    items: list[tuple[Lcg, int, int, int]] = field(default_factory=list)

    def examples(self) -> np.ndarray:
        return np.array([(i, 0) for i in range(len(self.items))], dtype=np.int64).reshape(-1, 2)

    def __len__(self):
        return len(self.items)

    def batch(self, rows: np.ndarray, hops: int | None = None):
        graphs = [message_graph(self.items[i][0]) for i, _ in rows]
        offsets = np.cumsum([0] + [pg.n for pg in graphs])
        trip = np.array([[offsets[k] + graphs[k].clause_row[c] for c in self.items[i][1:]]
                         for k, (i, _) in enumerate(rows)], dtype=np.int64)
        mean = sp.block_diag([pg.mean for pg in graphs], format="csr")
        return PropGraph(mean, np.vstack([pg.features for pg in graphs])), trip


def build_dataset(corpus: Sequence[tuple[str, Lcg]], reps: int, seed: int = 0) -> Dataset:
    """``reps`` independent decompositions of graphs drawn uniformly from the corpus."""
    if not corpus:
        raise ValueError("empty corpus")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    rng = random.Random(seed)
    ds = Dataset()
    for _ in range(reps):
        name, g = corpus[rng.randrange(len(corpus))]
        ds.decompositions.append(decompose(g, rng.getrandbits(63), name))
    return ds


# -- batching ---------------------------------------------------------------

def _receptive_field(n: int, src: np.ndarray, dst: np.ndarray, seeds: np.ndarray, hops: int):
    """Nodes within ``hops`` of the seeds, and edges needed to embed the seeds exactly.

    Rows at distance ``hops`` are inputs only; every row closer than that
    keeps its full in-neighbourhood so its mean aggregation is unchanged.
    """
    reach = np.zeros(n, dtype=bool)
    reach[seeds] = True
    inner = reach
    for _ in range(hops):
        inner = reach.copy()
        reach[src[inner[dst]]] = True
    keep = inner[dst]
    return reach, src[keep], dst[keep]


def batch_graph(ds: Dataset, rows: np.ndarray, hops: int | None = None):
    """Block-diagonal propagation graph over the snapshots of a batch.

    With ``hops`` set, each snapshot is cut down to the receptive field of
    its three example nodes. Returns the graph and the (u+, v+, v-) row
    indices of every example.
    """
    kinds, srcs, dsts = [], [], []
    trip = np.zeros((len(rows), 3), dtype=np.int64)
    offset = 0
    for i, (d, j) in enumerate(rows):
        dec = ds.decompositions[d]
        nl = 2 * dec.num_vars
        alive = dec.alive(j)
        row_of = np.full(len(dec.lit_of), -1, dtype=np.int64)
        row_of[alive] = nl + np.arange(len(alive))
        edge_row = row_of[dec.owners(j)]
        src, dst = lcg_message_edges(dec.num_vars, dec.lit_of, edge_row)
        kind = np.concatenate([np.arange(nl) & 1, np.full(len(alive), int(NodeKind.CLAUSE))])
        u, v = dec.merges[j]
        local = row_of[[u, v, dec.negatives[j]]]
        if hops is not None:
            reach, src, dst = _receptive_field(len(kind), src, dst, local, hops)
            relabel = np.cumsum(reach) - 1
            src, dst, local = relabel[src], relabel[dst], relabel[local]
            kind = kind[reach]
        srcs.append(src + offset)
        dsts.append(dst + offset)
        kinds.append(kind)
        trip[i] = local + offset
        offset += len(kind)
    pg = build_prop(np.concatenate(kinds).astype(int), np.concatenate(srcs), np.concatenate(dsts))
    return pg, trip


def _pairs(trip):
    a = np.concatenate([trip[:, 0], trip[:, 0]])
    b = np.concatenate([trip[:, 1], trip[:, 2]])
    y = np.concatenate([np.ones(len(trip)), np.zeros(len(trip))])
    return a, b, y


def evaluate(ds, rows: np.ndarray, params: ModelParams, batch_size: int = 64):
    """(loss, accuracy) over the positive and negative pair of every example."""
    correct = 0
    total = 0
    loss_sum = 0.0
    for k in range(0, len(rows), batch_size):
        pg, trip = ds.batch(rows[k:k + batch_size], params.layers)
        h = forward(pg, params)
        a, b, y = _pairs(trip)
        s = np.einsum("ij,ij->i", h[a], h[b])
        correct += int(((s > 0) == (y == 1)).sum())
        loss_sum += float((np.logaddexp(0.0, s) - y * s).sum())
        total += len(y)
    return loss_sum / total, correct / total


@dataclass
class TrainConfig:
    layers: int = 3
    dim: int = 32
    lr: float = 1e-3
    batch_size: int = 64
    eval_every: int = 1000
    patience: int = 5
    max_batches: int = 100_000
    split_ratio: float = 0.1
    final_relu: bool = False
    seed: int = 0


@dataclass
class TrainResult:
    params: ModelParams
    state: AdamState
    best_val_acc: float
    history: list[dict]
    val_rows: np.ndarray
    train_rows: np.ndarray


def train(ds, cfg: TrainConfig | None = None,
          callback: Callable[[dict], None] | None = None) -> TrainResult:
    """Minimise pair BCE with Adam; keep the parameters with best validation accuracy.

    ``ds`` is a :class:`Dataset` or :class:`PairDataset`. Stops after
    ``patience`` evaluations without improvement or at ``max_batches``.
    """
    cfg = cfg or TrainConfig()
    rows = ds.examples()
    if len(rows) < 20:
        raise ValueError(f"dataset too small ({len(rows)} examples, need >= 20)")
    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(len(rows))
    n_val = max(1, int(round(cfg.split_ratio * len(rows))))
    val_rows, train_rows = rows[perm[:n_val]], rows[perm[n_val:]]

    params = ModelParams.init(cfg.layers, cfg.dim, seed=cfg.seed, final_relu=cfg.final_relu)
    state = AdamState(lr=cfg.lr)
    best = params.copy()
    _, best_acc = evaluate(ds, val_rows, params, cfg.batch_size)
    history = [{"batch": 0, "val_acc": best_acc}]
    stale = 0
    order = rng.permutation(len(train_rows))
    cursor = 0
    running = []
    for step in range(1, cfg.max_batches + 1):
        if cursor + cfg.batch_size > len(order):
            order = rng.permutation(len(train_rows))
            cursor = 0
        batch = train_rows[order[cursor:cursor + cfg.batch_size]]
        cursor += cfg.batch_size
        pg, trip = ds.batch(batch, cfg.layers)
        a, b, y = _pairs(trip)
        loss, grads, _ = pair_loss_and_grads(pg, params, a, b, y)
        if not np.isfinite(loss):
            raise NumericalError(f"loss diverged at batch {step}")
        adam_step(params, grads, state)
        running.append(loss)
        if step % cfg.eval_every == 0 or step == cfg.max_batches:
            val_loss, acc = evaluate(ds, val_rows, params, cfg.batch_size)
            rec = {"batch": step, "train_loss": float(np.mean(running)),
                   "val_loss": val_loss, "val_acc": acc}
            running = []
            history.append(rec)
            log.info("batch %d train_loss %.4f val_loss %.4f val_acc %.4f",
                     step, rec["train_loss"], val_loss, acc)
            if callback:
                callback(rec)
            if acc > best_acc:
                best_acc, best, stale = acc, params.copy(), 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    return TrainResult(best, state, best_acc, history, val_rows, train_rows)


# -- persistence ------------------------------------------------------------

def template_to_dict(t: GraphTemplate) -> dict:
    g0 = t.g0.renumbered()
    return {"provenance": t.provenance, "n": t.n,
            "dimacs": write_dimacs(formula_of(g0)).decode("ascii")}


def template_from_dict(d: dict) -> GraphTemplate:
    t = GraphTemplate(lcg_of(parse_dimacs(d["dimacs"])), int(d["n"]), d.get("provenance", ""))
    t.check()
    return t


def save_templates(path, templates: Sequence[GraphTemplate]) -> None:
    doc = {"format": "satforge-templates", "version": TEMPLATE_VERSION,
           "templates": [template_to_dict(t) for t in templates]}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_templates(path) -> list[GraphTemplate]:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"corrupted template store: {exc}") from None
    if doc.get("format") != "satforge-templates":
        raise ValueError("not a satforge template store")
    if doc.get("version") != TEMPLATE_VERSION:
        raise ValueError(f"unsupported template store version {doc.get('version')}")
    return [template_from_dict(d) for d in doc["templates"]]


def _dataset_arrays(ds: Dataset) -> dict[str, np.ndarray]:
    decs = ds.decompositions
    return {
        "num_vars": np.array([d.num_vars for d in decs], dtype=np.int64),
        "n": np.array([d.n for d in decs], dtype=np.int64),
        "edges": np.array([len(d.lit_of) for d in decs], dtype=np.int64),
        "lit_of": np.concatenate([d.lit_of for d in decs]) if decs else np.zeros(0, np.int64),
        "merges": np.concatenate([d.merges for d in decs]) if decs else np.zeros((0, 2), np.int64),
        "negatives": np.concatenate([d.negatives for d in decs]) if decs else np.zeros(0, np.int64),
    }


def dataset_checksum(ds: Dataset) -> str:
    h = hashlib.sha256()
    arrays = _dataset_arrays(ds)
    for k in sorted(arrays):
        h.update(k.encode())
        h.update(np.ascontiguousarray(arrays[k], dtype=np.int64).tobytes())
    for d in ds.decompositions:
        h.update(d.template.provenance.encode())
    return h.hexdigest()


def save_dataset(path, ds: Dataset) -> str:
    arrays = _dataset_arrays(ds)
    digest = dataset_checksum(ds)
    header = {"format": "satforge-dataset", "version": DATASET_VERSION, "sha256": digest,
              "provenance": [d.template.provenance for d in ds.decompositions]}
    buf = io.BytesIO()
    np.savez_compressed(buf, header=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8), **arrays)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())
    return digest


def load_dataset(path) -> Dataset:
    try:
        z = np.load(path)
        header = json.loads(bytes(z["header"]).decode())
        arrays = {k: z[k] for k in ("num_vars", "n", "edges", "lit_of", "merges", "negatives")}
    except Exception as exc:
        raise ValueError(f"corrupted dataset file: {exc}") from None
    if header.get("format") != "satforge-dataset":
        raise ValueError("not a satforge dataset")
    if header.get("version") != DATASET_VERSION:
        raise ValueError(f"unsupported dataset version {header.get('version')}")
    ds = Dataset()
    e0 = m0 = 0
    for i, (nv, n, E) in enumerate(zip(arrays["num_vars"], arrays["n"], arrays["edges"])):
        g0 = Lcg(int(nv))
        for lit in arrays["lit_of"][e0:e0 + E]:
            g0.add_clause([int(lit)])
        t = GraphTemplate(g0, int(n), header["provenance"][i])
        ds.decompositions.append(Decomposition(t, arrays["merges"][m0:m0 + n].copy(),
                                               arrays["negatives"][m0:m0 + n].copy()))
        e0 += E
        m0 += n
    if dataset_checksum(ds) != header["sha256"]:
        raise ValueError("dataset checksum mismatch")
    return ds


def corpus_from_formulas(items: Sequence[tuple[str, CnfFormula]]) -> list[tuple[str, Lcg]]:
    return [(name, lcg_of(f)) for name, f in items]
