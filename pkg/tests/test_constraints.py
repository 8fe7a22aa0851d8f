import json

import pytest
from hypothesis import given, strategies as st

from hiersym import constraints as C
from hiersym.bundled import load_fixture
from hiersym.symmetry import run_detection

names = st.text("ABCDXYZ0123/", min_size=1, max_size=5)
records = st.one_of(
    st.builds(C.SymmetricPair, names, names, st.integers(0, 3), st.sampled_from(["TOP", "OTA"])),
    st.builds(C.SelfSymmetric, names, st.integers(0, 3), st.sampled_from(["TOP", "OTA"])),
    st.builds(C.SymmetricNets, names, names, st.integers(0, 3), st.just("TOP")),
    st.builds(C.ArrayGroup, names, st.lists(names, min_size=2, max_size=4).map(tuple), st.integers(0, 3),
              st.just("TOP"), names),
    st.builds(C.MatchBlocks, names, names, st.sampled_from(["EXACT", "APPROX"]), st.sampled_from([1.0, 0.75]),
              st.just("TOP")),
    st.builds(C.CommonCentroid, st.lists(names, min_size=2, max_size=4).map(tuple), st.just("OTA")),
)


def test_empty_set():
    assert C.dumps([]) == '{"version":1,"constraints":[]}'


def test_pairs_are_stored_in_name_order():
    assert C.SymmetricPair("R2", "R1") == C.SymmetricPair("R1", "R2")
    assert C.ArrayGroup("A", ("X2", "X1")).members == ("X1", "X2")


@given(st.lists(records, max_size=12), st.randoms(use_true_random=False))
def test_output_independent_of_order_and_duplicates(items, rnd):
    shuffled = items + items[: len(items) // 2]
    rnd.shuffle(shuffled)
    assert C.dumps(shuffled) == C.dumps(items)


@given(st.lists(records, max_size=12))
def test_round_trip(items):
    text = C.dumps(items)
    assert C.dumps(C.loads(text)) == text
    assert json.loads(text)["version"] == 1


def test_unknown_version_or_type_rejected():
    with pytest.raises(ValueError):
        C.loads('{"version":2,"constraints":[]}')
    with pytest.raises(ValueError):
        C.loads('{"version":1,"constraints":[{"type":"Mystery"}]}')


def test_emit_and_load(tmp_path):
    items = [C.SymmetricPair("R1", "R2", 0, "OTA")]
    C.emit(items, tmp_path / "c.json")
    assert (tmp_path / "c.json").read_text().endswith("\n")
    assert C.load(tmp_path / "c.json") == items


@pytest.fixture(scope="module")
def ota():
    design = load_fixture("ota")
    return design, run_detection(design).constraints


def test_mismatched_pair_is_inconsistent(ota):
    design, cons = ota
    report = C.verify(cons + [C.SymmetricPair("C1", "R1", 0, "OTA")], design)
    assert report.count("inconsistent") == 1 and report.exit_code == C.EXIT_INCONSISTENT


def test_unknown_name_is_stale(ota):
    design, cons = ota
    report = C.verify(cons + [C.SymmetricPair("R1", "R77", 0, "OTA")], design)
    assert report.count("stale") == 1 and report.exit_code == C.EXIT_STALE
    assert "stale" in report.summary()


def test_unknown_scope_is_stale(ota):
    design, _ = ota
    assert C.verify([C.SelfSymmetric("SCM3", 0, "NOPE")], design).exit_code == C.EXIT_STALE


def test_inconsistency_outranks_staleness(ota):
    design, _ = ota
    report = C.verify([C.SymmetricPair("C1", "R1", 0, "OTA"), C.SymmetricPair("R1", "R77", 0, "OTA")], design)
    assert report.exit_code == C.EXIT_INCONSISTENT
