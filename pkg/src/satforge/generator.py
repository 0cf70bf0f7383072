"""Formula generation by repeated scored merging of clause nodes."""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cnf import CnfFormula
from .graphs import Lcg, formula_of
from .neural import IncrementalEncoder, ModelParams
from .trainer import GraphTemplate

log = logging.getLogger(__name__)

# consecutive rejected partners before the first node of a proposal is redrawn
_PARTNER_TRIES = 16


class GenerationError(RuntimeError):
    def __init__(self, msg: str, step: int, graph: Lcg | None = None):
        super().__init__(msg)
        self.step = step
        self.graph = graph


class ProposalExhausted(RuntimeError):
    pass


@dataclass
class GenConfig:
    o: int = 64
    seed: int = 0
    max_retries: int | None = None
    sample: bool = False
    debug: bool = False

    def __post_init__(self):
        if self.o < 1:
            raise ValueError("o must be >= 1")
        if self.max_retries is None:
            self.max_retries = 50 * self.o
        if self.max_retries < self.o:
            raise ValueError("max_retries must be >= o")


def propose_partner(g: Lcg, u: int, rng: random.Random, max_tries: int) -> int:
    """Uniform clause node admissible for merging into u, by rejection."""
    ids = g.clause_ids()
    for _ in range(max_tries):
        v = ids[rng.randrange(len(ids))]
        if v != u and g.admissible(u, v):
            return v
    raise ProposalExhausted(f"no admissible partner for {u} in {max_tries} draws")


def propose(g: Lcg, rng: random.Random, max_retries: int = 1000) -> tuple[int, int]:
    """One (u, v) proposal: u uniform, v uniform among u's admissible partners."""
    ids = g.clause_ids()
    if len(ids) < 2:
        raise ProposalExhausted("fewer than two clause nodes")
    budget = max_retries
    while budget > 0:
        u = ids[rng.randrange(len(ids))]
        tries = min(_PARTNER_TRIES, budget)
        budget -= tries
        try:
            return u, propose_partner(g, u, rng, tries)
        except ProposalExhausted:
            continue
    raise ProposalExhausted(f"no admissible pair within {max_retries} draws")


def _select_greedy(pairs: list[tuple[int, int]], scores: np.ndarray) -> tuple[int, int]:
    best = scores.max()
    return min(p for p, s in zip(pairs, scores) if s == best)


def generate(template: GraphTemplate, params: ModelParams, cfg: GenConfig) -> CnfFormula:
    """Run ``template.n`` merge steps starting from the template forest."""
    rng = random.Random(cfg.seed)
    g = template.g0.copy()
    if template.n == 0:
        return formula_of(g)
    enc = IncrementalEncoder(g, params)
    for step in range(template.n):
        try:
            u, v = _choose(g, enc, rng, cfg)
        except ProposalExhausted as exc:
            raise GenerationError(f"step {step}: {exc}", step, g) from None
        moved = set(g.clause_adj[v])
        g.merge(u, v, check=False)
        enc.after_merge(u, moved)
        if cfg.debug:
            g.check()
    return formula_of(g)


def _choose(g: Lcg, enc: IncrementalEncoder, rng: random.Random, cfg: GenConfig):
    budget = cfg.max_retries
    pairs = []
    for _ in range(cfg.o):
        pairs.append(propose(g, rng, budget))
    us = np.array([p[0] for p in pairs])
    vs = np.array([p[1] for p in pairs])
    scores = np.einsum("ij,ij->i", enc.clause_embeddings(us), enc.clause_embeddings(vs))
    if not cfg.sample:
        return _select_greedy(pairs, scores)
    # Bernoulli acceptance in proposal order; greedy fallback if nothing accepts.
    for (u, v), s in zip(pairs, scores):
        if rng.random() < 1.0 / (1.0 + math.exp(-s)):
            return u, v
    return _select_greedy(pairs, scores)


@dataclass
class GenResult:
    index: int
    template_index: int
    provenance: str
    seed: int
    formula: CnfFormula | None = None
    error: str | None = None
    failed_step: int | None = None

    def manifest_entry(self) -> dict:
        return {"index": self.index, "template_index": self.template_index,
                "provenance": self.provenance, "seed": self.seed,
                "ok": self.formula is not None, "error": self.error,
                "failed_step": self.failed_step}


def generate_batch(templates: Sequence[GraphTemplate], params: ModelParams, cfg: GenConfig,
                   count: int) -> list[GenResult]:
    """``count`` formulas from uniformly drawn templates; failures are recorded, not raised."""
    if not templates:
        raise ValueError("empty template store")
    rng = random.Random(cfg.seed)
    results = []
    for k in range(count):
        ti = rng.randrange(len(templates))
        seed = rng.getrandbits(63)
        t = templates[ti]
        res = GenResult(k, ti, t.provenance, seed)
        sub = GenConfig(o=cfg.o, seed=seed, max_retries=cfg.max_retries,
                        sample=cfg.sample, debug=cfg.debug)
        try:
            res.formula = generate(t, params, sub)
        except GenerationError as exc:
            log.warning("formula %d failed: %s", k, exc)
            res.error = str(exc)
            res.failed_step = exc.step
        results.append(res)
    return results
