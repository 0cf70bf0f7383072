import random

import pytest

from satforge.baselines import CaConfig, ca_generate
from satforge.cnf import CnfFormula
from satforge.graphs import lcg_of

EXAMPLE_TEXT = "p cnf 3 2\n1 2 -3 0\n-1 -2 0"


def random_formula(rng: random.Random, max_vars: int = 50, max_clauses: int = 60,
                   max_len: int = 5) -> CnfFormula:
    nv = rng.randint(1, max_vars)
    clauses = []
    for _ in range(rng.randint(0, max_clauses)):
        k = rng.randint(1, min(max_len, nv))
        vs = rng.sample(range(1, nv + 1), k)
        clauses.append(tuple(v if rng.random() < 0.5 else -v for v in vs))
    return CnfFormula(nv, clauses)


def toy_formulas(count: int = 10) -> list[CnfFormula]:
    """CA formulas with 20 to 56 variables."""
    out = []
    for i in range(count):
        n = 20 + 4 * i
        out.append(ca_generate(CaConfig(n=n, m=int(4.2 * n), k=3, c=4, q=0.55, seed=i)))
    return out


@pytest.fixture(scope="session")
def toy_corpus():
    return [(f"toy{i}", lcg_of(f)) for i, f in enumerate(toy_formulas())]


def small_lcg(rng: random.Random, max_vars: int = 4, max_clauses: int = 5):
    """Random LCG with at least two clause nodes, at most a dozen or so nodes."""
    while True:
        f = random_formula(rng, max_vars=max_vars, max_clauses=max_clauses, max_len=3)
        if f.num_clauses >= 2:
            return lcg_of(f)


def finite_difference_check(pg, params, a, b, labels, eps=1e-6):
    """Largest relative error between analytic and central-difference gradients over all tensors."""
    import numpy as np

    from satforge.neural import bce_loss, forward, pair_loss_and_grads

    def loss_at():
        h = forward(pg, params)
        return bce_loss(h[a], h[b], labels)[0]

    _, grads, _ = pair_loss_and_grads(pg, params, a, b, labels)
    worst = 0.0
    for name, p in params.tensors().items():
        g = grads.tensors()[name]
        fd = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + eps
            lp = loss_at()
            p[i] = old - eps
            lm = loss_at()
            p[i] = old
            fd[i] = (lp - lm) / (2 * eps)
        denom = max(np.linalg.norm(g) + np.linalg.norm(fd), 1e-12)
        worst = max(worst, float(np.linalg.norm(g - fd) / denom))
    return worst


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
