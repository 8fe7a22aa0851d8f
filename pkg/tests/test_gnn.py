import logging
import math
import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gnn_cases import gradient_case, small_graph
from hiersym.ged import LabeledGraph
from hiersym.gnn import (FEATURE_SCALE, IN_DIM, LAYER_DIMS, NTN_SLICES, EmbeddingCache, GedModel, TrainConfig, TrainingDiverged,
                         batch_embed, batch_graphs, category, embed_graph, embed_subblock, gcn_forward,
                         graph_context, graph_embed, graph_tensors, loss_and_grads, mse, ntn_score,
                         predict_similarity, score_embeddings, train)
from oracles import finite_difference_errors

D = LAYER_DIMS[-1]


def zero_model(use_edge_labels=False):
    m = GedModel.init(0, use_edge_labels=use_edge_labels)
    for v in m.params.values():
        v[...] = 0.0
    return m


def test_shapes():
    m = GedModel.init(1)
    gt = graph_tensors(small_graph(random.Random(0), 6))
    x3, _ = gcn_forward(gt, m)
    assert x3.shape == (6, D)
    h, _ = embed_graph(gt, m)
    assert h.shape == (D,)
    assert ntn_score(h, h, m).shape == (NTN_SLICES,)
    assert 0.0 <= predict_similarity(h, h, m) <= 1.0


def test_three_node_gcn_by_hand():
    g = LabeledGraph.build([("ELEMENT", "RES"), ("NET", "NET"), ("ELEMENT", "RES")], {(0, 1): (0, ()), (1, 2): (0, ())})
    m = zero_model()
    p = m.params
    p["W1_0"][category(("NET", "NET")), 0] = 1.0
    p["W1_0"][category(("ELEMENT", "RES")), 0] = 2.0
    p["W1_1"][0, 0] = 1.0
    p["W1_2"][0, 0] = 1.0
    # self-loop degrees: net 3, resistors 2
    s6 = math.sqrt(6.0)
    net, res = FEATURE_SCALE * 1.0, FEATURE_SCALE * 2.0
    for _ in range(3):
        net, res = net / 3 + 2 * res / s6, res / 2 + net / s6
    h, _ = embed_graph(graph_tensors(g), m)  # W2 = 0 gives attention 1/2 everywhere
    assert h[0] == pytest.approx(0.5 * (net + 2 * res), rel=1e-12)
    assert np.all(h[1:] == 0.0)


def test_context_and_pooling_edge_cases():
    x = np.array([[1.0, -2.0], [0.5, 3.0]])
    assert np.all(graph_context(x, np.zeros((2, 2))) == 0.0)
    assert np.allclose(graph_embed(x, np.zeros(2)), 0.5 * x.sum(axis=0))
    w = np.array([[0.3, -0.1], [0.2, 0.4]])
    one = x[:1]
    c = graph_context(one, w)
    assert np.allclose(c, np.tanh(one[0] @ w)) and np.all(np.abs(c) < 1)
    assert np.allclose(graph_embed(one, c), one[0] / (1 + np.exp(-(one[0] @ c))))


def test_two_slice_ntn_by_hand():
    m = zero_model()
    p = m.params
    p["W3"][0, 1, 0] = 2.0
    p["W3"][2, 2, 1] = -3.0
    p["V"][0, 0] = 1.0
    p["b"][:3] = [0.5, 0.25, -1.0]
    hi, hj = np.zeros(D), np.zeros(D)
    hi[[0, 2]] = 1.0
    hj[[1, 2]] = 1.0
    g = ntn_score(hi, hj, m)
    assert g[0] == pytest.approx(2.0 + 1.0 + 0.5)
    assert np.all(g[1:] == 0.0)  # slice 1 is -2.75 before the clamp


def test_zero_ntn_weights_give_zero():
    m = zero_model()
    h = np.ones(D)
    assert np.all(ntn_score(h, h, m) == 0.0)
    assert predict_similarity(h, h, m) == 0.5


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("labels", [True, False])
def test_gradients_match_finite_differences(seed, labels):
    graphs, pairs = gradient_case(seed)
    tensors = [graph_tensors(g) for g in graphs]
    m = GedModel.init(seed, use_edge_labels=labels)
    _, grads = loss_and_grads(m, tensors, pairs)
    errs = finite_difference_errors(lambda: loss_and_grads(m, tensors, pairs)[0], m.params, grads, samples=20)
    assert set(errs) == set(m.params)
    assert max(errs.values()) < 1e-4


def test_batched_embedding_matches_single_graph_path():
    rng = random.Random(3)
    graphs = [small_graph(rng, rng.randint(2, 9)) for _ in range(6)]
    tensors = [graph_tensors(g) for g in graphs]
    m = GedModel.init(2)
    h, _ = batch_embed(batch_graphs(tensors), m)
    for k, gt in enumerate(tensors):
        assert np.allclose(h[k], embed_graph(gt, m)[0], rtol=1e-12, atol=1e-12)


@given(st.integers(0, 10_000), st.randoms(use_true_random=False))
def test_embedding_is_exactly_permutation_invariant(seed, shuffler):
    g = small_graph(random.Random(seed), 9)
    perm = list(range(g.n))
    shuffler.shuffle(perm)
    m = GedModel.init(seed % 7)
    h1 = embed_graph(graph_tensors(g), m)[0]
    h2 = embed_graph(graph_tensors(g.permuted(perm)), m)[0]
    assert np.array_equal(h1, h2)


def test_similarity_is_symmetric_and_bounded():
    m = GedModel.init(4)
    rng = random.Random(4)
    a, b = (embed_graph(graph_tensors(small_graph(rng, 7)), m)[0] for _ in range(2))
    assert predict_similarity(a, b, m) == predict_similarity(b, a, m)
    assert 0.0 <= predict_similarity(a, b, m, symmetric=False) <= 1.0


def tiny_corpus():
    graphs, pairs = gradient_case(5)
    return graphs, pairs[:2], pairs[2:]


def test_training_is_deterministic():
    graphs, tr, te = tiny_corpus()
    cfg = TrainConfig(lr=0.1, epochs=20, seed=3)
    a = train(GedModel.init(3), graphs, tr, te, cfg)
    b = train(GedModel.init(3), graphs, tr, te, cfg)
    assert a[1].train_loss == b[1].train_loss and a[1].test_loss == b[1].test_loss
    assert a[0].version == b[0].version
    assert a[0].hyper == cfg.to_dict()


def test_single_pair_overfits():
    graphs, pairs = gradient_case(6)
    pair = [(0, 1, 0.75)]
    model, history = train(GedModel.init(0), graphs, pair, config=TrainConfig(lr=1.0, epochs=300))
    assert mse(model, [graph_tensors(g) for g in graphs], pair) < 1e-3
    assert history.train_loss[-1] < history.train_loss[0]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported():
    graphs, tr, _ = tiny_corpus()
    with pytest.raises(TrainingDiverged):
        train(GedModel.init(0), graphs, tr, config=TrainConfig(lr=1e308, epochs=5))


def test_log_csv():
    graphs, tr, te = tiny_corpus()
    _, history = train(GedModel.init(0), graphs, tr, te, TrainConfig(lr=0.1, epochs=3))
    lines = history.to_csv().splitlines()
    assert lines[0] == "epoch,train_loss,test_loss" and len(lines) == 4


def test_model_file_round_trip(tmp_path):
    m = GedModel.init(9)
    m.hyper = {"lr": 0.5}
    m.save(tmp_path / "m.json")
    again = GedModel.load(tmp_path / "m.json")
    assert again.version == m.version and again.hyper == {"lr": 0.5}
    data = (tmp_path / "m.json").read_text().replace('"format": 1', '"format": 7')
    (tmp_path / "bad.json").write_text(data)
    with pytest.raises(ValueError):
        GedModel.load(tmp_path / "bad.json")


def test_tampered_tensors_fail_version_check(tmp_path):
    m = GedModel.init(9)
    d = m.to_dict()
    d["tensors"]["b"][0] += 1.0
    with pytest.raises(ValueError):
        GedModel.from_dict(d)


def test_cache_hits_and_version_invalidation(tmp_path):
    g = small_graph(random.Random(1), 7)
    m = GedModel.init(0)
    cache = EmbeddingCache(tmp_path)
    first = embed_subblock(g, m, cache)
    second = embed_subblock(g, m, cache)
    assert cache.stats == {"hits": 1, "misses": 1, "entries": 1}
    assert np.array_equal(first.h, second.h)
    retrained, _ = train(m, [g, g], [(0, 1, 1.0)], config=TrainConfig(lr=0.5, epochs=2))
    assert retrained.version != m.version
    embed_subblock(g, retrained, cache)
    assert cache.misses == 2
    with pytest.raises(ValueError):
        score_embeddings(first, embed_subblock(g, retrained, cache), retrained)


def test_disk_cache_survives_restart_and_corruption(tmp_path, caplog):
    g = small_graph(random.Random(2), 5)
    m = GedModel.init(0)
    h = embed_subblock(g, m, EmbeddingCache(tmp_path)).h
    fresh = EmbeddingCache(tmp_path)
    assert np.array_equal(embed_subblock(g, m, fresh).h, h) and fresh.hits == 1
    (entry,) = tmp_path.glob("*.json")
    entry.write_text("{not json")
    with caplog.at_level(logging.WARNING):
        again = EmbeddingCache(tmp_path)
        assert np.array_equal(embed_subblock(g, m, again).h, h)
    assert again.misses == 1 and "corrupt" in caplog.text


def test_cache_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("HIERSYM_CACHE_DIR", str(tmp_path / "c"))
    assert EmbeddingCache().directory == tmp_path / "c"


def test_unknown_labels_hash_into_spare_features():
    assert len({category(("ELEMENT", f"K{i}")) for i in range(50)}) > 1
    assert all(8 <= category(("ELEMENT", f"K{i}")) < IN_DIM for i in range(50))
