import json
from importlib import resources

import pytest

from hiersym.bundled import load_fixture
from hiersym.graph import PRIMITIVE, build_graph, remove_inert_dummies
from hiersym.netlist import parse_netlist
from hiersym.primitives import (LibraryError, builtin_library, collapse, find_embeddings, match_primitives,
                                parse_library, seed_candidates)


def graph_of(text, scope=None):
    design = parse_netlist(text)
    return remove_inert_dummies(build_graph(design.subckts[scope or design.top], design))


@pytest.fixture(scope="module")
def ota():
    design = load_fixture("ota")
    g = remove_inert_dummies(build_graph(design.subckts["OTA"], design))
    sns = match_primitives(g, builtin_library())
    return g, sns, collapse(g, sns)


def test_ota_primitives(ota):
    _, sns, _ = ota
    assert sorted(s.name for s in sns) == ["CMB1", "DP1", "SCM2", "SCM3", "SCM4"]
    by = {s.name: s for s in sns}
    assert by["CMB1"].members == ("MC0", "MC3", "MC7", "MC9")
    assert set(by["DP1"].members) == {"MN1", "MN2"}


def test_dp_collapse_ports(ota):
    _, sns, cg = ota
    dp = cg.element("DP1")
    assert dp.kind == PRIMITIVE
    ports = {p for lab in cg.adj(dp.id).values() for p in lab.ports}
    assert ports == {"inp", "inn", "outp", "outn", "tail"}
    assert dp.payload.primitive.symmetric_partner("outp") == "outn"
    assert cg.is_bipartite()


def test_collapse_drops_internal_nets():
    g = graph_of("M1 a a vss vss nmos\nM2 b a vss vss nmos\nR1 b vdd 1k\n")
    cg = collapse(g, match_primitives(g, builtin_library()))
    assert "a" not in cg.net_index and "b" in cg.net_index


def test_collapse_keeps_external_gate_net():
    g = graph_of("M1 a a vss vss nmos\nM2 b a vss vss nmos\nR1 b vdd 1k\nR2 a vdd 1k\n")
    cg = collapse(g, match_primitives(g, builtin_library()))
    assert "a" in cg.net_index


def test_collapse_without_supernodes_is_identity(ota):
    g, _, _ = ota
    assert collapse(g, []) is g


def test_empty_graph_has_no_matches():
    g = graph_of("R1 a b 1k\n")
    assert match_primitives(g, builtin_library()) == []
    assert seed_candidates(g) == []


def test_two_disjoint_dps():
    g = graph_of("M1 o1 i1 t1 vss nmos\nM2 o2 i2 t1 vss nmos\nM3 o3 i3 t2 vss nmos\nM4 o4 i4 t2 vss nmos\n")
    dps = [s for s in match_primitives(g, builtin_library()) if s.family == "dp"]
    assert len(dps) == 2
    assert not set(dps[0].members) & set(dps[1].members)
    (dp,) = [p for p in builtin_library() if p.name == "DP"]
    images = {frozenset(e[d.name] for d in dp.devices) for e in find_embeddings(g, dp)}
    assert len(images) == 2


def names(cg, seeds):
    return {frozenset((cg.vertices[s.s1].name, cg.vertices[s.s2].name)) for s in seeds}


def test_ota_seed_candidates(ota):
    _, _, cg = ota
    pairs = names(cg, seed_candidates(cg))
    for a, b in [("out1", "out2"), ("net3", "net4"), ("net7", "net4"), ("net9", "net4")]:
        assert frozenset((a, b)) in pairs
    dp_only = [s for s in seed_candidates(cg) if s.origin == ("DP1",)]
    assert names(cg, dp_only) == {frozenset(("out1", "out2"))}


def test_seeds_never_use_supply_nets(ota):
    _, _, cg = ota
    for s in seed_candidates(cg):
        assert not cg.vertices[s.s1].is_supply and not cg.vertices[s.s2].is_supply


def test_library_order_does_not_change_result(ota):
    g, sns, cg = ota
    rev = list(reversed(builtin_library()))
    assert collapse(g, match_primitives(g, rev)).dump() == cg.dump()


BASE = {"name": "P", "devices": [{"name": "A", "type": "mos", "terminals": {"d": "x", "g": "y", "s": "z"}}],
        "ports": {"x": "out"}}


@pytest.mark.parametrize("patch", [
    {"ports": {"nope": "out"}},
    {"port_symmetries": [["x", "q"]]},
    {"devices": [{"name": "A", "type": "bjt", "terminals": {"d": "x"}}]},
    {"devices": [{"name": "A", "type": "mos", "terminals": {"d": "x", "g": "y", "s": "z"}},
                 {"name": "B", "type": "mos", "terminals": {"d": "u", "g": "v", "s": "w"}}]},
])
def test_malformed_library_entries(patch):
    with pytest.raises(LibraryError):
        parse_library({"version": 1, "primitives": [{**BASE, **patch}]})


def test_library_version_checked():
    with pytest.raises(LibraryError):
        parse_library({"version": 99, "primitives": []})


def test_bank_entries_expand_per_output_count():
    data = json.loads(resources.files("hiersym").joinpath("data/primitives.json").read_text())
    lo, hi = next(e for e in data["primitives"] if e["name"] == "CMB")["outputs"]
    assert sum(p.name == "CMB" for p in builtin_library()) == hi - lo + 1
