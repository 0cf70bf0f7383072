"""Literal-clause graphs and the derived variable graphs used for statistics.

Literal nodes use the dense index from :func:`satforge.cnf.lit_index`, so the
complement of literal ``x`` is ``x ^ 1``. Clause nodes carry integer ids that
are never reused inside one graph; merging retires the second node's id.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable

from .cnf import CnfFormula, index_lit, lit_index


class NodeKind(enum.IntEnum):
    POS_LITERAL = 0
    NEG_LITERAL = 1
    CLAUSE = 2


class GraphError(ValueError):
    pass


class Lcg:
    """Mutable bipartite literal-clause graph.

    Adjacency is kept in both directions so that splitting and merging cost
    O(degree). ``clause_ids()`` supports O(1) uniform sampling of clause nodes.
    """

    def __init__(self, num_vars: int):
        self.num_vars = num_vars
        self.lit_adj: list[set[int]] = [set() for _ in range(2 * num_vars)]
        self.clause_adj: dict[int, set[int]] = {}
        self._order: list[int] = []
        self._pos: dict[int, int] = {}
        self._next_id = 0

    # -- construction -----------------------------------------------------

    def add_clause(self, lits: Iterable[int], cid: int | None = None) -> int:
        """Add a clause node adjacent to the given literal indices."""
        if cid is None:
            cid = self._next_id
        if cid in self.clause_adj:
            raise GraphError(f"clause id {cid} already present")
        lits = set(lits)
        self.clause_adj[cid] = lits
        for x in lits:
            self.lit_adj[x].add(cid)
        self._pos[cid] = len(self._order)
        self._order.append(cid)
        self._next_id = max(self._next_id, cid + 1)
        return cid

    def _drop_clause(self, cid: int) -> None:
        del self.clause_adj[cid]
        i = self._pos.pop(cid)
        last = self._order.pop()
        if last != cid:
            self._order[i] = last
            self._pos[last] = i

    def copy(self) -> "Lcg":
        g = Lcg(self.num_vars)
        g.lit_adj = [set(s) for s in self.lit_adj]
        g.clause_adj = {c: set(s) for c, s in self.clause_adj.items()}
        g._order = list(self._order)
        g._pos = dict(self._pos)
        g._next_id = self._next_id
        return g

    # -- queries ----------------------------------------------------------

    @property
    def num_literals(self) -> int:
        return 2 * self.num_vars

    @property
    def num_clauses(self) -> int:
        return len(self.clause_adj)

    @property
    def num_edges(self) -> int:
        return sum(len(s) for s in self.clause_adj.values())

    @property
    def next_id(self) -> int:
        return self._next_id

    def clause_ids(self) -> list[int]:
        """Live clause ids in internal (sampling) order. Do not mutate."""
        return self._order

    def degree(self, cid: int) -> int:
        return len(self.clause_adj[cid])

    def literal_degrees(self) -> list[int]:
        return [len(s) for s in self.lit_adj]

    def edge_set(self) -> set[tuple[int, int]]:
        return {(x, c) for c, s in self.clause_adj.items() for x in s}

    def admissible(self, u: int, v: int) -> bool:
        """True when merging v into u creates neither a parallel edge nor a vacuous clause."""
        if u == v:
            return False
        nu, nv = self.clause_adj[u], self.clause_adj[v]
        if len(nu) > len(nv):
            nu, nv = nv, nu
        for x in nu:
            if x in nv or (x ^ 1) in nv:
                return False
        return True

    def check(self) -> None:
        """Assert every structural invariant; raises GraphError."""
        edges = 0
        for c, lits in self.clause_adj.items():
            if not lits:
                raise GraphError(f"clause node {c} has degree 0")
            for x in lits:
                if not 0 <= x < self.num_literals:
                    raise GraphError(f"clause {c} touches unknown literal {x}")
                if c not in self.lit_adj[x]:
                    raise GraphError(f"asymmetric edge ({x}, {c})")
                if (x ^ 1) in lits:
                    raise GraphError(f"clause node {c} is vacuous")
            edges += len(lits)
        if edges != sum(len(s) for s in self.lit_adj):
            raise GraphError("literal and clause adjacency disagree")
        if set(self._order) != set(self.clause_adj) or len(self._order) != len(self.clause_adj):
            raise GraphError("sampling order out of sync")

    # -- mutations --------------------------------------------------------

    def split(self, s: int, moved: Iterable[int], new_id: int | None = None) -> tuple[int, int]:
        """Move the edges (s, x) for x in ``moved`` onto a fresh clause node.

        Returns ``(s, v)`` where v is the new node.
        """
        if s not in self.clause_adj:
            raise GraphError(f"{s} is not a clause node")
        lits = self.clause_adj[s]
        moved = set(moved)
        if len(lits) < 2:
            raise GraphError(f"clause node {s} has degree {len(lits)}; cannot split")
        if not moved or not moved < lits:
            raise GraphError("moved edges must be a nonempty proper subset of the node's edges")
        lits -= moved
        for x in moved:
            self.lit_adj[x].discard(s)
        v = self.add_clause(moved, new_id)
        return s, v

    def merge(self, u: int, v: int, check: bool = True) -> int:
        """Move all edges of v onto u and retire v."""
        if u == v:
            raise GraphError("cannot merge a node with itself")
        if u not in self.clause_adj or v not in self.clause_adj:
            raise GraphError("merge endpoints must be clause nodes")
        if check and not self.admissible(u, v):
            nu, nv = self.clause_adj[u], self.clause_adj[v]
            if nu & nv:
                raise GraphError(f"merging {v} into {u} would create a parallel edge")
            raise GraphError(f"merging {v} into {u} would create a vacuous clause")
        lits_v = self.clause_adj[v]
        for x in lits_v:
            adj = self.lit_adj[x]
            adj.discard(v)
            adj.add(u)
        self.clause_adj[u] |= lits_v
        self._drop_clause(v)
        return u

    # -- conversions ------------------------------------------------------

    def renumbered(self) -> "Lcg":
        """Copy with clause ids compacted to 0..C-1 in ascending id order."""
        g = Lcg(self.num_vars)
        for c in sorted(self.clause_adj):
            g.add_clause(self.clause_adj[c])
        return g


def node_kind_of_literal(idx: int) -> NodeKind:
    return NodeKind.NEG_LITERAL if idx & 1 else NodeKind.POS_LITERAL


def lcg_of(f: CnfFormula) -> Lcg:
    g = Lcg(f.num_vars)
    for clause in f.clauses:
        g.add_clause(lit_index(l) for l in clause)
    return g


def formula_of(g: Lcg) -> CnfFormula:
    """Clauses in ascending clause-id order, literals in ascending index order."""
    clauses = []
    for c in sorted(g.clause_adj):
        lits = g.clause_adj[c]
        if not lits:
            raise GraphError(f"clause node {c} has degree 0")
        clauses.append(tuple(index_lit(x) for x in sorted(lits)))
    return CnfFormula(g.num_vars, clauses)


def node_split(g: Lcg, s: int, moved: Iterable[int]) -> tuple[int, int, Lcg]:
    """Functional split: returns ``(u, v, g')`` leaving ``g`` untouched."""
    h = g.copy()
    u, v = h.split(s, moved)
    return u, v, h


def node_merge(g: Lcg, u: int, v: int) -> tuple[int, Lcg]:
    h = g.copy()
    h.merge(u, v)
    return u, h


@dataclass
class SimpleGraph:
    """Undirected unweighted graph on nodes 0..n-1."""

    n: int
    adj: list[set[int]] = field(default_factory=list)

    def __post_init__(self):
        if not self.adj:
            self.adj = [set() for _ in range(self.n)]

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "SimpleGraph":
        g = cls(n)
        for a, b in edges:
            g.add_edge(a, b)
        return g

    def add_edge(self, a: int, b: int) -> None:
        if a == b:
            raise GraphError("self-loops are not allowed")
        self.adj[a].add(b)
        self.adj[b].add(a)

    @property
    def num_edges(self) -> int:
        return sum(len(s) for s in self.adj) // 2

    def degrees(self) -> list[int]:
        return [len(s) for s in self.adj]

    def edges(self) -> list[tuple[int, int]]:
        return [(a, b) for a, s in enumerate(self.adj) for b in s if a < b]


def vig_of(g: Lcg) -> SimpleGraph:
    """Variable incidence graph: variables adjacent when they share a clause."""
    vig = SimpleGraph(g.num_vars)
    for lits in g.clause_adj.values():
        vs = sorted({x >> 1 for x in lits})
        for i, a in enumerate(vs):
            for b in vs[i + 1:]:
                vig.add_edge(a, b)
    return vig


def vcg_of(g: Lcg) -> tuple[SimpleGraph, int]:
    """Variable-clause graph; variables are nodes 0..V-1, clauses follow in id order.

    Returns the graph and the number of variable nodes.
    """
    cids = sorted(g.clause_adj)
    nv = g.num_vars
    vcg = SimpleGraph(nv + len(cids))
    for j, c in enumerate(cids):
        for x in g.clause_adj[c]:
            vcg.add_edge(x >> 1, nv + j)
    return vcg, nv


def lcg_plain(g: Lcg) -> SimpleGraph:
    """The LCG viewed as an ordinary undirected graph (literals first, then clauses)."""
    cids = sorted(g.clause_adj)
    nl = g.num_literals
    out = SimpleGraph(nl + len(cids))
    for j, c in enumerate(cids):
        for x in g.clause_adj[c]:
            out.add_edge(x, nl + j)
    return out
