"""Bundled example netlists."""

from __future__ import annotations

from importlib import resources

from .netlist import Design, parse_netlist

NAMES = ("ota", "ota5", "cs_lna", "cg_lna", "fir4", "r2r_dac", "single_res")


def fixture_text(name: str) -> str:
    return resources.files("hiersym").joinpath(f"fixtures/{name}.sp").read_text()


def load_fixture(name: str) -> Design:
    return parse_netlist(fixture_text(name))


def fixture_path(name: str):
    return resources.files("hiersym").joinpath(f"fixtures/{name}.sp")
