"""Graph statistics used to judge how realistic a formula looks.

Modularity (Louvain) on VIG, VCG and LCG, VIG clustering, and power-law
exponents of the VCG variable- and clause-side degree sequences.
"""

from __future__ import annotations

import math
import random
from collections import defaultdict
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import zeta

from .cnf import CnfFormula
from .graphs import SimpleGraph, lcg_of, lcg_plain, vcg_of, vig_of


class UndefinedStatistic(ValueError):
    """A statistic is undefined for the given input (no edges, constant data...)."""


def _dense(partition: Sequence[int]) -> list[int]:
    remap: dict[int, int] = {}
    return [remap.setdefault(c, len(remap)) for c in partition]


def modularity(g: SimpleGraph, partition: Sequence[int]) -> float:
    """Newman modularity: sum over communities of e_c/m - (d_c/2m)^2."""
    m = g.num_edges
    if m == 0:
        raise UndefinedStatistic("modularity is undefined on an edgeless graph")
    if len(partition) != g.n:
        raise ValueError("partition must assign every node")
    intra: dict[int, int] = defaultdict(int)
    deg: dict[int, int] = defaultdict(int)
    for a, nbrs in enumerate(g.adj):
        ca = partition[a]
        deg[ca] += len(nbrs)
        for b in nbrs:
            if a < b and partition[b] == ca:
                intra[ca] += 1
    return sum(intra[c] / m - (deg[c] / (2.0 * m)) ** 2 for c in deg)


def louvain(g: SimpleGraph, seed: int = 0) -> tuple[list[int], float]:
    """Louvain community detection.

    Nodes are visited in a seeded random order; among moves with equal gain
    the lowest community id wins, and a node moves only on strict improvement.
    """
    if g.num_edges == 0:
        raise UndefinedStatistic("louvain is undefined on an edgeless graph")
    rng = random.Random(seed)
    m2 = 2.0 * g.num_edges

    # Weighted working graph: adjacency dicts plus self-loop weights.
    adj = [{b: 1.0 for b in nbrs} for nbrs in g.adj]
    loops = [0.0] * g.n
    membership = list(range(g.n))  # original node -> current super node

    while True:
        comm, moved = _one_level(adj, loops, m2, rng)
        comm = _dense(comm)
        membership = [comm[s] for s in membership]
        if not moved:
            break
        adj, loops = _aggregate(adj, loops, comm)
    membership = _dense(membership)
    return membership, modularity(g, membership)


def _one_level(adj, loops, m2, rng) -> tuple[list[int], bool]:
    n = len(adj)
    k = [sum(a.values()) + 2 * loops[i] for i, a in enumerate(adj)]
    comm = list(range(n))
    tot = list(k)
    order = list(range(n))
    rng.shuffle(order)
    moved_any = False
    improved = True
    while improved:
        improved = False
        for i in order:
            ci = comm[i]
            links: dict[int, float] = defaultdict(float)
            for j, w in adj[i].items():
                links[comm[j]] += w
            tot[ci] -= k[i]
            # gain of inserting i into community c, up to a common positive factor
            own_gain = links.get(ci, 0.0) - tot[ci] * k[i] / m2
            best, best_gain = ci, own_gain
            for c in sorted(links):
                if c == ci:
                    continue
                gain = links[c] - tot[c] * k[i] / m2
                if gain > best_gain + 1e-12:
                    best, best_gain = c, gain
            tot[best] += k[i]
            if best != ci:
                comm[i] = best
                improved = True
                moved_any = True
    return comm, moved_any


def _aggregate(adj, loops, comm):
    nc = max(comm) + 1
    new_adj: list[dict[int, float]] = [defaultdict(float) for _ in range(nc)]
    new_loops = [0.0] * nc
    for i, nbrs in enumerate(adj):
        ci = comm[i]
        new_loops[ci] += loops[i]
        for j, w in nbrs.items():
            cj = comm[j]
            if ci == cj:
                # each intra edge is seen from both endpoints
                new_loops[ci] += w / 2.0
            else:
                new_adj[ci][cj] += w
    return [dict(a) for a in new_adj], new_loops


def avg_clustering(g: SimpleGraph) -> float:
    """Mean local clustering coefficient; nodes of degree < 2 count as 0."""
    if g.n == 0:
        raise UndefinedStatistic("clustering of an empty graph")
    total = 0.0
    for v, nbrs in enumerate(g.adj):
        d = len(nbrs)
        if d < 2:
            continue
        tri = 0
        for a in nbrs:
            tri += len(nbrs & g.adj[a])
        # each triangle counted twice above
        total += tri / (d * (d - 1))
    return total / g.n


# -- power laws -----------------------------------------------------------

def mle_alpha(x: np.ndarray, xmin: int, method: str = "exact") -> float:
    """Maximum-likelihood exponent for the tail ``x >= xmin``.

    ``exact`` maximizes the discrete (Hurwitz zeta) likelihood, ``shift`` is
    the closed form with the xmin - 1/2 correction, ``continuous`` is the
    continuous-data estimator.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if method == "continuous":
        s = np.log(x / xmin).sum()
    else:
        s = np.log(x / (xmin - 0.5)).sum()
    if s <= 0:
        raise UndefinedStatistic("zero log-sum; exponent undefined")
    approx = 1.0 + n / s
    if method != "exact":
        return approx
    log_sum = np.log(x).sum()

    def nll(a):
        return n * math.log(zeta(a, xmin)) + a * log_sum

    hi = max(approx * 2.0, 10.0)
    res = minimize_scalar(nll, bounds=(1.0 + 1e-6, hi), method="bounded",
                          options={"xatol": 1e-10})
    return float(res.x)


def _ks_distance(tail: np.ndarray, alpha: float, xmin: int) -> float:
    vals = np.sort(tail)
    support = np.unique(vals)
    emp = np.searchsorted(vals, support, side="right") / len(vals)
    fit = 1.0 - zeta(alpha, support + 1.0) / zeta(alpha, xmin)
    return float(np.max(np.abs(emp - fit)))


def powerlaw_alpha(degrees: Sequence[int], xmin: int | None = None,
                   min_tail: int = 10, method: str = "exact") -> tuple[float, int]:
    """Fit a discrete power law to positive integer data.

    Scans every candidate xmin (unless one is given) and keeps the fit with
    the smallest Kolmogorov-Smirnov distance. Zeros are dropped.
    """
    x = np.asarray([d for d in degrees if d > 0], dtype=np.int64)
    if len(x) < min_tail:
        raise UndefinedStatistic(f"need at least {min_tail} positive values, got {len(x)}")
    if np.all(x == x[0]):
        raise UndefinedStatistic("all values identical; exponent undefined")
    candidates = [xmin] if xmin is not None else sorted(set(x.tolist()))
    best = None
    for xm in candidates:
        tail = x[x >= xm]
        if len(tail) < min_tail or np.all(tail == xm):
            continue
        try:
            a = mle_alpha(tail, xm, method)
        except UndefinedStatistic:
            continue
        d = _ks_distance(tail, a, xm)
        if best is None or d < best[0]:
            best = (d, a, xm)
    if best is None:
        raise UndefinedStatistic("no xmin leaves a tail large enough to fit")
    return best[1], int(best[2])


@dataclass
class StatReport:
    clustering_vig: float | None
    modularity_vig: float | None
    modularity_vcg: float | None
    modularity_lcg: float | None
    alpha_v: float | None
    alpha_c: float | None

    FIELDS = ("clustering_vig", "modularity_vig", "alpha_v", "alpha_c",
              "modularity_vcg", "modularity_lcg")

    def as_dict(self) -> dict:
        return asdict(self)


def _maybe(fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except UndefinedStatistic:
        return None


def stat_report(f: CnfFormula, seed: int = 0, xmin: int | None = None) -> StatReport:
    g = lcg_of(f)
    vig = vig_of(g)
    vcg, nv = vcg_of(g)
    lcg = lcg_plain(g)
    deg = vcg.degrees()

    def q(graph):
        r = _maybe(louvain, graph, seed)
        return None if r is None else r[1]

    av = _maybe(powerlaw_alpha, deg[:nv], xmin)
    ac = _maybe(powerlaw_alpha, deg[nv:], xmin)
    return StatReport(
        clustering_vig=_maybe(avg_clustering, vig) if vig.n else None,
        modularity_vig=q(vig),
        modularity_vcg=q(vcg),
        modularity_lcg=q(lcg),
        alpha_v=None if av is None else av[0],
        alpha_c=None if ac is None else ac[0],
    )
