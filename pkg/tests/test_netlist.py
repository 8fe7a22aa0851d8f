import logging

import pytest
from hypothesis import given, strategies as st

from hiersym.bundled import NAMES, fixture_text
from hiersym.netlist import (SI_SUFFIXES, DeviceKind, NetlistError, emit_netlist, identify_supply_nets,
                             parse_netlist, parse_value)


def only_device(text):
    design = parse_netlist(text)
    (dev,) = design.top_subckt.devices
    return dev


def test_mos_card():
    d = only_device("M1 d g s b nmos w=2u l=100n")
    assert d.kind is DeviceKind.NMOS
    assert d.terminals == (("d", "d"), ("g", "g"), ("s", "s"), ("b", "b"))
    assert d.params == pytest.approx({"w": 2e-6, "l": 1e-7})


def test_resistor_card():
    d = only_device("R1 a b 10k")
    assert d.kind is DeviceKind.RES and d.params == {"r": 1e4}


def test_dummy_card_is_a_transistor():
    assert only_device("D1 a a a vss pch").kind is DeviceKind.PMOS


def test_continuation_and_comments():
    d = only_device("* header\nM1 d g s b ; trailing\n+ pmos w=1u\n")
    assert d.kind is DeviceKind.PMOS and d.params == {"w": 1e-6}


@pytest.mark.parametrize("suffix,mult", sorted(SI_SUFFIXES.items()))
def test_every_suffix_has_one_multiplier(suffix, mult):
    assert parse_value("3" + suffix) == pytest.approx(3 * mult)
    assert parse_value("3" + suffix.upper()) == pytest.approx(3 * mult)


@pytest.mark.parametrize("token", ["3x", "3mil", "abc", "1..2", ""])
def test_unknown_or_malformed_numbers_are_errors(token):
    with pytest.raises(NetlistError):
        parse_value(token)


def test_undefined_subckt_is_named():
    with pytest.raises(NetlistError, match="NOPE"):
        parse_netlist("X1 a b NOPE\n")


@pytest.mark.parametrize("text,fragment", [
    (".subckt A p q\nR1 p q 1k\n.ends\nX1 a A\n", "arity"),
    (".subckt A p\nR1 p 0 1k\n.ends\n.subckt A p\n.ends\n", "duplicate definition"),
    ("R1 a b 1k\nR1 a c 1k\n", "duplicate device"),
    (".subckt A p\nX1 p B\n.ends\n.subckt B p\nX1 p A\n.ends\n", "recursive"),
    ("M1 a b c nmos\n", "MOS card"),
    ("Q1 a b c npn\n", "unsupported card"),
    (".subckt A p\nR1 p 0 1k\n", "missing .ends"),
    (".option x\n", "unsupported directive"),
    ("R1 a b -1k\n", "positive"),
])
def test_error_contracts(text, fragment):
    with pytest.raises(NetlistError, match=fragment):
        parse_netlist(text)


def test_errors_carry_line_and_column():
    with pytest.raises(NetlistError) as exc:
        parse_netlist("R1 a b 1k\nR2 a b 1q\n")
    assert exc.value.line == 2 and exc.value.column == 8


def test_top_defaults_to_uninstantiated_subckt():
    design = parse_netlist(fixture_text("r2r_dac"))
    assert design.top == "TOP"
    assert parse_netlist(fixture_text("ota")).top == "OTA"
    assert design.bottom_up()[-1] == design.top


def test_flatten_prefixes_instance_paths():
    design = parse_netlist(".subckt A p\nR1 p n 1k\nR2 n 0 1k\n.ends\nX1 a A\nX2 b A\n")
    names = {d.name: d.nets for d in design.flatten("TOP")}
    assert names["X1/R1"] == ["a", "X1/n"]
    assert names["X2/R2"] == ["X2/n", "0"]


@pytest.mark.parametrize("name", NAMES)
def test_fixture_round_trip(name):
    design = parse_netlist(fixture_text(name))
    again = parse_netlist(emit_netlist(design))
    assert again.top == design.top
    assert {n: s.devices for n, s in again.subckts.items()} == {n: s.devices for n, s in design.subckts.items()}


@given(st.lists(st.tuples(st.sampled_from(["R", "C", "L"]), st.floats(1e-15, 1e9, allow_nan=False)),
                min_size=1, max_size=6))
def test_round_trip_preserves_values(cards):
    text = "".join(f"{k}{i} n{i} n{i + 1} {v!r}\n" for i, (k, v) in enumerate(cards))
    design = parse_netlist(text)
    assert parse_netlist(emit_netlist(design)).top_subckt.devices == design.top_subckt.devices


def test_supply_by_convention():
    design = parse_netlist("R1 vdd out1 1k\nR2 out1 VSS 1k\n")
    assert identify_supply_nets(design) == {"vdd", "VSS"}


def test_supply_overrides():
    design = parse_netlist("R1 pwr rtn 1k\n")
    assert identify_supply_nets(design, ["pwr", "rtn"]) == {"pwr", "rtn"}


def test_no_supply_warns(caplog):
    with caplog.at_level(logging.WARNING):
        assert identify_supply_nets(parse_netlist("R1 a b 1k\n")) == set()
    assert "no supply" in caplog.text
