import random

import pytest
from hypothesis import given, strategies as st

from conftest import random_pair_graph
from hiersym.dataset import (Corpus, PairRecord, build_corpus, default_base_graphs, perturb, random_bipartite,
                             split_sizes)
from hiersym.ged import ged_exact, to_similarity
from oracles import brute_force_ged

seeds = st.integers(0, 2**31 - 1)


def bipartite(g):
    cls = [lab[0] for lab in g.labels]
    return all(cls[a] != cls[b] for a, b in g.edges)


@given(seeds)
def test_zero_edits_is_identity(seed):
    g = random_bipartite(random.Random(seed), 3, 3)
    g2, script = perturb(g, 0, seed)
    assert g2 == g and script == [] and ged_exact(g, g2).ged == 0


@given(seeds)
def test_one_edge_move_costs_one_or_two(seed):
    rng = random.Random(seed)
    g = random_bipartite(rng, 3, 3)
    g2, script = perturb(g, 1, seed, ops=("edge_move",))
    assert len(script) == 1
    assert 1 <= brute_force_ged(g, g2) <= 2


@given(seeds, st.integers(0, 6))
def test_output_stays_bipartite_and_within_edit_count(seed, k):
    g = random_bipartite(random.Random(seed), 3, 3)
    g2, script = perturb(g, k, seed)
    assert bipartite(g2)
    # every scripted step is at most three primitive edits
    assert ged_exact(g, g2).ged <= 3 * len(script)


def test_negative_edit_count_rejected():
    with pytest.raises(ValueError):
        perturb(random_bipartite(random.Random(0), 2, 2), -1, 0)


def test_infeasible_edits_warn_and_stop(caplog):
    g = random_pair_graph(random.Random(0), 0)
    g2, script = perturb(g, 3, 0, ops=("edge_move",))
    assert script == [] and g2 == g
    assert "could only apply" in caplog.text


@pytest.mark.parametrize("n,expect", [(80, (52, 28)), (79, (51, 28)), (0, (0, 0)), (1, (1, 0))])
def test_split_sizes(n, expect):
    assert split_sizes(n) == expect


def test_empty_base_set():
    assert build_corpus([], 10, seed=0).records == []


@pytest.fixture(scope="module")
def small_corpus():
    bases = [(f"r{i}", random_bipartite(random.Random(i), 3, 3)) for i in range(4)]
    return bases, build_corpus(bases, 20, seed=5, max_edits=3, cross_fraction=0.3)


def test_fixed_seed_is_byte_identical(small_corpus, tmp_path):
    bases, corpus = small_corpus
    corpus.write(tmp_path / "a.jsonl")
    build_corpus(bases, 20, seed=5, max_edits=3, cross_fraction=0.3).write(tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_labels_reverify(small_corpus):
    _, corpus = small_corpus
    for r in corpus.records:
        res = ged_exact(r.g1, r.g2)
        assert res.ged == r.ged == brute_force_ged(r.g1, r.g2)
        assert r.gs == to_similarity(r.dist)


def test_split_is_recorded(small_corpus):
    _, corpus = small_corpus
    assert (len(corpus.train), len(corpus.test)) == split_sizes(len(corpus.records))


def test_file_round_trip(small_corpus, tmp_path):
    _, corpus = small_corpus
    corpus.write(tmp_path / "c.jsonl")
    again = Corpus.read(tmp_path / "c.jsonl")
    assert [r.to_json() for r in again.records] == [r.to_json() for r in corpus.records]


def test_schema_version_checked(small_corpus):
    _, corpus = small_corpus
    line = corpus.records[0].to_json().replace('"schema": 1', '"schema": 9')
    with pytest.raises(ValueError):
        PairRecord.from_json(line)


def test_training_set_shares_graph_table(small_corpus):
    _, corpus = small_corpus
    graphs, tr, te = corpus.training_set()
    assert len(tr) == len(corpus.train) and len(te) == len(corpus.test)
    assert len(graphs) < 2 * len(corpus.records)
    for (i, j, gs), r in zip(tr, corpus.train):
        assert graphs[i] == r.g1 and graphs[j] == r.g2 and gs == r.gs


def test_default_bases_cover_fixture_blocks():
    names = [n for n, _ in default_base_graphs()]
    assert any(n.startswith("ota5:") for n in names) and any(n.startswith("cs_lna") for n in names)
    assert any(n.startswith("fir4:TAP3") for n in names) and any(n.startswith("random") for n in names)
    assert all(g.n <= 16 for _, g in default_base_graphs())
