"""Hand-crafted comparison generators."""

from __future__ import annotations

import random
from dataclasses import dataclass

from .cnf import CnfFormula


@dataclass
class CaConfig:
    n: int
    m: int
    k: int = 3
    c: int = 10
    q: float = 0.7
    seed: int = 0
    max_resamples: int = 1000

    def validate(self) -> None:
        if self.k < 2:
            raise ValueError("clause length k must be >= 2")
        if self.c < 2:
            raise ValueError("community count c must be >= 2")
        if not 0.0 <= self.q <= 1.0 - 1.0 / self.c:
            raise ValueError(f"target modularity must lie in [0, {1 - 1 / self.c:.4f}]")
        if self.n // self.c < self.k:
            raise ValueError(f"communities of {self.n // self.c} variables are smaller than k={self.k}")
        if self.c < self.k and self.q + 1.0 / self.c < 1.0:
            raise ValueError("inter-community clauses need at least k communities")


def communities(n: int, c: int) -> list[list[int]]:
    """Near-equal contiguous blocks of variables 1..n."""
    base, extra = divmod(n, c)
    out, start = [], 1
    for i in range(c):
        size = base + (i < extra)
        out.append(list(range(start, start + size)))
        start += size
    return out


def ca_generate(cfg: CaConfig) -> CnfFormula:
    """Community Attachment: with probability q + 1/c a clause draws all of its
    variables from one community, otherwise one variable from each of k
    distinct communities. Polarities are fair coins."""
    cfg.validate()
    rng = random.Random(cfg.seed)
    comms = communities(cfg.n, cfg.c)
    p_intra = cfg.q + 1.0 / cfg.c
    clauses = []
    for _ in range(cfg.m):
        for _attempt in range(cfg.max_resamples):
            if rng.random() < p_intra:
                vs = rng.sample(comms[rng.randrange(cfg.c)], cfg.k)
            else:
                vs = [rng.choice(comms[i]) for i in rng.sample(range(cfg.c), cfg.k)]
            if len(set(vs)) == cfg.k:
                break
        else:
            raise RuntimeError("resample budget exhausted")
        clauses.append(tuple(v if rng.random() < 0.5 else -v for v in vs))
    return CnfFormula(cfg.n, clauses)


def ps_generate(*args, **kwargs):
    raise NotImplementedError(
        "the Popularity-Similarity generator is not bundled; use the reference "
        "implementation by Giraldez-Cru and Levy (IJCAI 2017, 'Locality in random SAT instances')")
