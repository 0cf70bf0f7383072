import math
import random

import numpy as np
import pytest
import scipy.sparse as sp

from satforge.cnf import lit_index, parse_dimacs
from satforge.graphs import Lcg, lcg_of
from satforge.neural import (AdamState, IncrementalEncoder, ModelParams, NumericalError, PropGraph,
                             adam_step, bce_loss, encode, forward, load_checkpoint, message_graph,
                             neighbourhood, pair_loss_and_grads, save_checkpoint, score_pair)

from conftest import EXAMPLE_TEXT, finite_difference_check, random_formula, small_lcg


def all_clause_pairs(pg, rng):
    rows = sorted(pg.clause_row.values())
    pairs = [(x, y) for i, x in enumerate(rows) for y in rows[i + 1:]]
    a = np.array([p[0] for p in pairs])
    b = np.array([p[1] for p in pairs])
    y = np.array([rng.random() < 0.5 for _ in pairs], dtype=float)
    return a, b, y


def test_parameter_shapes():
    p = ModelParams.init(layers=3, dim=32)
    assert p.Q[0].shape == (32, 3) and p.W[0].shape == (32, 35)
    assert p.Q[1].shape == (32, 32) and p.W[2].shape == (32, 64)
    p.validate()


def test_neighbourhoods_of_small_example():
    g = lcg_of(parse_dimacs(EXAMPLE_TEXT))
    x1 = lit_index(1)
    assert neighbourhood(g, ("lit", x1)) == {("clause", 0), ("lit", lit_index(-1))}
    assert neighbourhood(g, ("clause", 1)) == {("lit", lit_index(-1)), ("lit", lit_index(-2))}


def test_isolated_variable_talks_only_to_complement():
    g = Lcg(2)
    g.add_clause([lit_index(1)])
    assert neighbourhood(g, ("lit", lit_index(2))) == {("lit", lit_index(-2))}
    pg = message_graph(g)
    row = pg.mean[lit_index(2)].toarray().ravel()
    assert row[lit_index(-2)] == 1.0 and row.sum() == 1.0


def test_clause_rows_have_no_complement_links():
    g = lcg_of(parse_dimacs(EXAMPLE_TEXT))
    pg = message_graph(g)
    for c, r in pg.clause_row.items():
        nz = set(pg.mean[r].indices.tolist())
        assert nz == g.clause_adj[c]


def test_zero_params_give_zero_embeddings():
    g = lcg_of(parse_dimacs(EXAMPLE_TEXT))
    p = ModelParams.init().zeros_like()
    assert not encode(message_graph(g), p).any()


def test_empty_neighbourhood_aggregates_to_zero():
    pg = PropGraph(sp.csr_matrix((1, 1)), np.array([[0.0, 0.0, 1.0]]))
    p = ModelParams.init(layers=1, dim=4, seed=1)
    h = encode(pg, p)
    assert np.allclose(h, np.maximum(p.W[0][:, :3] @ [0, 0, 1], 0))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_activation_is_an_error():
    g = lcg_of(parse_dimacs(EXAMPLE_TEXT))
    p = ModelParams.init()
    p.W[0][0, 0] = np.inf
    with pytest.raises(NumericalError):
        encode(message_graph(g), p)


@pytest.mark.parametrize("seed", range(3))
def test_encoder_is_permutation_equivariant(seed):
    rng = np.random.default_rng(seed)
    g = lcg_of(random_formula(random.Random(seed), max_vars=10, max_clauses=20))
    pg = message_graph(g)
    perm = rng.permutation(pg.n)
    P = sp.csr_matrix((np.ones(pg.n), (np.arange(pg.n), perm)), shape=(pg.n, pg.n))
    pg2 = PropGraph((P @ pg.mean @ P.T).tocsr(), pg.features[perm])
    p = ModelParams.init(seed=seed, final_relu=False)
    assert np.allclose(encode(pg2, p), encode(pg, p)[perm], atol=1e-12)


def test_score_pair_values():
    assert score_pair(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.5
    h = np.array([math.sqrt(math.log(3)), 0.0])
    assert score_pair(h, h) == pytest.approx(0.75, abs=1e-12)
    u, v = np.array([0.3, -2.0]), np.array([1.5, 0.7])
    assert score_pair(u, v) == score_pair(v, u)
    assert 0.0 < score_pair(2 * u, -2 * u) < 0.5 < score_pair(2 * u, 2 * u) < 1.0


def test_bce_values():
    z = np.zeros((1, 2))
    assert bce_loss(z, z, [1])[0] == pytest.approx(math.log(2))
    big = np.array([[30.0]])
    assert bce_loss(big, big, [1])[0] < 1e-12
    assert bce_loss(big, big, [0])[0] == pytest.approx(900.0)


def test_bce_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    hu, hv = rng.normal(size=(6, 4)), rng.normal(size=(6, 4))
    y = np.array([1, 0, 1, 0, 1, 1], dtype=float)
    _, du, _ = bce_loss(hu, hv, y)
    fd = np.zeros_like(hu)
    for i in np.ndindex(hu.shape):
        h1, h2 = hu.copy(), hu.copy()
        h1[i] += 1e-6
        h2[i] -= 1e-6
        fd[i] = (bce_loss(h1, hv, y)[0] - bce_loss(h2, hv, y)[0]) / 2e-6
    assert np.abs(du - fd).max() / np.abs(fd).max() < 1e-6


@pytest.mark.parametrize("final_relu", [True, False])
@pytest.mark.parametrize("seed", range(4))
def test_full_model_gradient_check(seed, final_relu):
    rng = random.Random(seed)
    g = small_lcg(rng)
    pg = message_graph(g)
    a, b, y = all_clause_pairs(pg, rng)
    p = ModelParams.init(layers=3, dim=6, seed=seed, final_relu=final_relu)
    for arr in p.q:
        arr[:] = np.random.default_rng(seed).normal(scale=0.1, size=arr.shape)
    assert finite_difference_check(pg, p, a, b, y) < 1e-4


def test_detached_component_does_not_change_gradients():
    g = Lcg(6)
    g.add_clause([0, 2])
    g.add_clause([3, 4])
    far = Lcg(6)
    far.add_clause([0, 2])
    far.add_clause([3, 4])
    far.add_clause([8, 10])
    far.add_clause([9, 11])
    p = ModelParams.init(layers=3, dim=5, seed=2, final_relu=False)
    res = []
    for h in (g, far):
        pg = message_graph(h)
        loss, grads, _ = pair_loss_and_grads(pg, p, np.array([pg.clause_row[0]]),
                                             np.array([pg.clause_row[1]]), np.array([1.0]))
        res.append((loss, grads))
    assert res[0][0] == res[1][0]
    for k, v in res[0][1].tensors().items():
        assert np.allclose(v, res[1][1].tensors()[k], atol=1e-15)


def test_balanced_zero_embeddings_give_zero_output_gradient():
    g = lcg_of(parse_dimacs(EXAMPLE_TEXT))
    pg = message_graph(g)
    p = ModelParams.init(seed=0)
    p.W[-1][:] = 0.0
    rows = list(pg.clause_row.values())
    a, b = np.array([rows[0], rows[0]]), np.array([rows[1], rows[1]])
    _, grads, h = pair_loss_and_grads(pg, p, a, b, np.array([1.0, 0.0]))
    assert not h.any()
    assert not grads.W[-1].any()


def test_adam_zero_gradient_keeps_params():
    p = ModelParams.init(seed=0)
    before = p.copy()
    adam_step(p, p.zeros_like(), AdamState())
    for k, v in p.tensors().items():
        assert np.array_equal(v, before.tensors()[k])


def test_adam_constant_gradient_steps_by_lr():
    p = ModelParams.init(layers=1, dim=2, seed=0)
    g = p.zeros_like()
    for t in g.tensors().values():
        t[:] = 0.37
    state = AdamState()
    for _ in range(200):
        prev = p.W[0].copy()
        adam_step(p, g, state)
    assert np.allclose(prev - p.W[0], 1e-3, rtol=1e-6)


def test_adam_is_deterministic():
    def run():
        p = ModelParams.init(seed=5)
        s = AdamState()
        rng = np.random.default_rng(9)
        for _ in range(5):
            g = p.zeros_like()
            for t in g.tensors().values():
                t[:] = rng.normal(size=t.shape)
            adam_step(p, g, s)
        return p
    a, b = run(), run()
    for k, v in a.tensors().items():
        assert np.array_equal(v, b.tensors()[k])


def test_checkpoint_round_trip(tmp_path):
    p = ModelParams.init(layers=2, dim=8, seed=1, final_relu=False)
    s = AdamState()
    adam_step(p, p.copy(), s)
    save_checkpoint(tmp_path / "m.ckpt", p, s, seed=1, extra={"note": "x"})
    q, s2, meta = load_checkpoint(tmp_path / "m.ckpt")
    assert q.final_relu is False and meta["seed"] == 1 and meta["note"] == "x"
    for k, v in p.tensors().items():
        assert np.array_equal(v, q.tensors()[k])
        assert np.array_equal(s.m[k], s2.m[k]) and np.array_equal(s.v[k], s2.v[k])
    assert s2.step == 1


def test_checkpoint_version_and_corruption(tmp_path):
    import json
    save_checkpoint(tmp_path / "m.ckpt", ModelParams.init(layers=1, dim=2))
    doc = json.loads((tmp_path / "m.ckpt").read_text())
    doc["version"] = 99
    (tmp_path / "v.ckpt").write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="version"):
        load_checkpoint(tmp_path / "v.ckpt")
    (tmp_path / "c.ckpt").write_text((tmp_path / "m.ckpt").read_text()[:50])
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "c.ckpt")
    doc["version"] = 1
    doc["tensors"]["W0"]["shape"] = [2, 3]
    doc["tensors"]["W0"]["data"] = doc["tensors"]["W0"]["data"][:6]
    (tmp_path / "s.ckpt").write_text(json.dumps(doc))
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "s.ckpt")


@pytest.mark.parametrize("final_relu", [True, False])
def test_incremental_encoder_matches_full_recompute(final_relu):
    rng = random.Random(3)
    g = lcg_of(random_formula(rng, max_vars=15, max_clauses=40, max_len=1))
    p = ModelParams.init(layers=3, dim=8, seed=3, final_relu=final_relu)
    enc = IncrementalEncoder(g, p)
    for _ in range(15):
        ids = list(g.clause_ids())
        pairs = [(u, v) for u in ids for v in ids if g.admissible(u, v)]
        if not pairs:
            break
        u, v = rng.choice(pairs)
        moved = set(g.clause_adj[v])
        g.merge(u, v)
        enc.after_merge(u, moved)
        pg = message_graph(g)
        full = forward(pg, p)
        for c, r in pg.clause_row.items():
            assert np.allclose(enc.clause_embedding(c), full[r], atol=1e-12)
