import random
from collections import Counter

import pytest
from hypothesis import given, strategies as st

from conftest import random_pair_graph
from hiersym.bundled import fixture_path
from hiersym.ged import (DEFAULT_BINS, GedSizeError, LabeledGraph, SimilarityBins, edit_path, from_circuit_graph,
                         ged_exact, mapping_cost, normalized_dist, to_similarity)
from hiersym.graph import build_flat_graph, remove_inert_dummies
from hiersym.netlist import parse_netlist
from oracles import brute_force_ged

seeds = st.integers(0, 2**31 - 1)


def lna(name):
    design = parse_netlist(fixture_path(name).read_text())
    return from_circuit_graph(remove_inert_dummies(build_flat_graph(design, design.top)))


def test_lna_pair_distance_is_four():
    res = ged_exact(lna("cs_lna"), lna("cg_lna"))
    assert res.exact and res.ged == 4
    assert Counter(op.kind for op in res.edit_path) == {"EDGE_DEL": 2, "EDGE_INS": 2}


def test_lna_distance_without_incumbent_heuristic():
    assert ged_exact(lna("cs_lna"), lna("cg_lna"), heuristic=False).ged == 4


@given(seeds)
def test_matches_brute_force(seed):
    rng = random.Random(seed)
    g1, g2 = random_pair_graph(rng), random_pair_graph(rng)
    assert ged_exact(g1, g2).ged == brute_force_ged(g1, g2)


@given(seeds)
def test_plain_search_matches_brute_force(seed):
    rng = random.Random(seed)
    g1, g2 = random_pair_graph(rng), random_pair_graph(rng)
    assert ged_exact(g1, g2, heuristic=False).ged == brute_force_ged(g1, g2)


@given(seeds)
def test_lower_bound_is_admissible(seed):
    rng = random.Random(seed)
    g1, g2 = random_pair_graph(rng, 2), random_pair_graph(rng, 2)
    res = ged_exact(g1, g2, check_bound=True, heuristic=False)
    for partial, f in res.bound_trace:
        assert f <= brute_force_ged(g1, g2, fixed=partial)


@given(seeds)
def test_identity_and_symmetry(seed):
    rng = random.Random(seed)
    g1, g2 = random_pair_graph(rng), random_pair_graph(rng)
    assert ged_exact(g1, g1).ged == 0
    assert ged_exact(g1, g2).ged == ged_exact(g2, g1).ged


@given(seeds)
def test_triangle_inequality(seed):
    rng = random.Random(seed)
    a, b, c = (random_pair_graph(rng) for _ in range(3))
    assert ged_exact(a, c).ged <= ged_exact(a, b).ged + ged_exact(b, c).ged


@given(seeds, st.randoms(use_true_random=False))
def test_invariant_under_vertex_permutation(seed, shuffler):
    rng = random.Random(seed)
    g1, g2 = random_pair_graph(rng), random_pair_graph(rng)
    perm = list(range(g2.n))
    shuffler.shuffle(perm)
    assert ged_exact(g1, g2.permuted(perm)).ged == ged_exact(g1, g2).ged


@given(seeds)
def test_edit_path_length_equals_distance(seed):
    rng = random.Random(seed)
    g1, g2 = random_pair_graph(rng), random_pair_graph(rng)
    res = ged_exact(g1, g2)
    assert len(res.edit_path) == res.ged == mapping_cost(g1, g2, res.mapping)
    assert edit_path(g1, g2, res.mapping) == res.edit_path


def test_budget_exhaustion_reports_inexact_upper_bound():
    rng = random.Random(7)
    g1 = random_pair_graph(rng, 6, 0.4)
    g2 = random_pair_graph(rng, 6, 0.4)
    true = ged_exact(g1, g2).ged
    res = ged_exact(g1, g2, budget=1, heuristic=False)
    assert res.ged >= true
    if res.ged > true:
        assert not res.exact


def test_upper_bound_below_truth_yields_no_mapping():
    g1 = LabeledGraph.build([("ELEMENT", "RES")], {})
    g2 = LabeledGraph.build([("NET", "NET")], {})
    res = ged_exact(g1, g2, upper_bound=0, heuristic=False)
    assert res.ged == -1 and not res.exact


def test_size_limit_without_budget():
    g = LabeledGraph.build([("NET", "NET")] * 17, {})
    with pytest.raises(GedSizeError):
        ged_exact(g, g)
    assert ged_exact(g, g, budget=1000).ged == 0


def test_single_relabel_and_edge_label_change():
    g1 = LabeledGraph.build([("ELEMENT", "NMOS"), ("NET", "NET")], {(0, 1): (4, ())})
    g2 = LabeledGraph.build([("ELEMENT", "PMOS"), ("NET", "NET")], {(0, 1): (1, ())})
    res = ged_exact(g1, g2)
    assert res.ged == 2
    assert sorted(op.kind for op in res.edit_path) == ["EDGE_RELABEL", "VERTEX_RELABEL"]


def test_normalized_distance():
    g = LabeledGraph.build([("NET", "NET"), ("ELEMENT", "RES")], {(0, 1): (0, ())})
    assert normalized_dist(3, g, g) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        normalized_dist(0, LabeledGraph.build([], {}), LabeledGraph.build([], {}))


@pytest.mark.parametrize("dist,score", [(0.0, 1.0), (0.05, 1.0), (0.06, 0.75), (0.1, 0.75), (0.2, 0.5),
                                        (0.3, 0.25), (0.35, 0.25), (0.9, 0.0)])
def test_default_bins(dist, score):
    assert to_similarity(dist) == score


@given(st.floats(0, 1), st.floats(0, 1))
def test_similarity_is_non_increasing_in_distance(a, b):
    lo, hi = sorted((a, b))
    assert to_similarity(lo) >= to_similarity(hi)


@pytest.mark.parametrize("edges,scores", [((0.1, 0.2), (1.0, 0.0)), ((0.0, 0.0), (1.0, 0.0)),
                                          ((0.0, 0.1), (0.5, 0.0)), ((0.0, 0.1), (1.0,))])
def test_bins_reject_malformed_tables(edges, scores):
    with pytest.raises(ValueError):
        SimilarityBins(edges, scores)


def test_bins_round_trip():
    assert SimilarityBins.from_dict(DEFAULT_BINS.to_dict()) == DEFAULT_BINS


def test_labeled_graph_round_trip():
    g = lna("cs_lna")
    assert LabeledGraph.from_dict(g.to_dict()) == g
