import itertools
from collections import Counter

import numpy as np
import pytest
from scipy.stats import chisquare

from satforge.baselines import CaConfig, ca_generate, communities, ps_generate
from satforge.graphs import lcg_of, vig_of
from satforge.stats import louvain, modularity, stat_report


def community_of(n, c):
    lookup = {}
    for i, block in enumerate(communities(n, c)):
        for v in block:
            lookup[v] = i
    return lookup


def test_communities_are_near_equal_blocks():
    blocks = communities(23, 5)
    assert [len(b) for b in blocks] == [5, 5, 5, 4, 4]
    assert sorted(itertools.chain(*blocks)) == list(range(1, 24))


@pytest.mark.parametrize("seed", range(5))
def test_output_is_valid_and_deterministic(seed):
    cfg = CaConfig(n=60, m=250, k=3, c=6, q=0.6, seed=seed)
    f = ca_generate(cfg)
    f.validate()
    assert f.num_clauses == 250 and all(len(c) == 3 for c in f.clauses)
    assert ca_generate(cfg).clauses == f.clauses


@pytest.mark.parametrize("kw", [
    {"n": 10, "m": 5, "c": 5},
    {"n": 60, "m": 5, "c": 1},
    {"n": 60, "m": 5, "k": 1},
    {"n": 60, "m": 5, "c": 4, "q": 0.9},
    {"n": 60, "m": 5, "c": 2, "q": 0.2},
])
def test_bad_configs_rejected(kw):
    with pytest.raises(ValueError):
        ca_generate(CaConfig(**kw))


def test_zero_target_matches_independent_community_labels():
    # For k = 2 and q = 0 the community pair of a clause should be distributed
    # like two independent uniform labels: 1/c^2 per diagonal cell, 2/c^2 off it.
    n, c = 100, 5
    f = ca_generate(CaConfig(n=n, m=20_000, k=2, c=c, q=0.0, seed=1))
    comm = community_of(n, c)
    pairs = Counter(tuple(sorted((comm[abs(a)], comm[abs(b)]))) for a, b in f.clauses)
    cells = [(i, j) for i in range(c) for j in range(i, c)]
    expected = np.array([1.0 if i == j else 2.0 for i, j in cells]) / c**2 * f.num_clauses
    observed = np.array([pairs[x] for x in cells])
    assert chisquare(observed, expected).pvalue > 0.001


def test_zero_target_intra_rate_is_one_over_c():
    n, c = 90, 9
    f = ca_generate(CaConfig(n=n, m=9000, k=3, c=c, q=0.0, seed=2))
    comm = community_of(n, c)
    intra = sum(len({comm[abs(l)] for l in cl}) == 1 for cl in f.clauses)
    inter = sum(len({comm[abs(l)] for l in cl}) == 3 for cl in f.clauses)
    assert intra + inter == 9000
    # binomial(9000, 1/9): sd ~ 30
    assert abs(intra - 1000) < 5 * 30


def test_all_intra_limit_matches_planted_modularity():
    n, c, m = 100, 5, 2000
    f = ca_generate(CaConfig(n=n, m=m, k=3, c=c, q=1 - 1 / c, seed=0))
    comm = community_of(n, c)
    assert all(len({comm[abs(l)] for l in cl}) == 1 for cl in f.clauses)
    vig = vig_of(lcg_of(f))
    part = [comm[v + 1] for v in range(n)]
    q = modularity(vig, part)
    # disconnected equal blocks: Q = 1 - sum (d_c / 2m)^2 ~ 1 - 1/c
    assert 1 - 1 / c - 0.01 < q <= 1 - 1 / c + 1e-12


def test_louvain_recovers_target_on_average():
    errs = []
    for seed in range(20):
        f = ca_generate(CaConfig(n=200, m=840, k=3, c=10, q=0.7, seed=seed))
        _, q = louvain(vig_of(lcg_of(f)), seed)
        errs.append(q - 0.7)
    assert abs(np.mean(errs)) < 0.1


def test_clause_exponent_undefined_for_fixed_length():
    r = stat_report(ca_generate(CaConfig(n=60, m=250, c=6, seed=0)))
    assert r.alpha_c is None
    assert r.alpha_v is not None


def test_popularity_similarity_not_bundled():
    with pytest.raises(NotImplementedError, match="Giraldez-Cru"):
        ps_generate()
