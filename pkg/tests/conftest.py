import os
import random

import pytest
from hypothesis import HealthCheck, settings

from hiersym.ged import LabeledGraph

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=400, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ELEMENT_LABELS = [("ELEMENT", "NMOS"), ("ELEMENT", "PMOS"), ("ELEMENT", "RES")]
NET_LABEL = ("NET", "NET")
EDGE_LABELS = [(0, ()), (1, ()), (4, ())]


def random_pair_graph(rng: random.Random, max_side: int = 3, p: float = 0.5) -> LabeledGraph:
    """Small non-empty labelled bipartite graph; up to ``max_side`` elements and nets."""
    ne, nn = rng.randint(0, max_side), rng.randint(0, max_side)
    if ne + nn == 0:
        nn = 1  # two empty graphs have no normalized distance
    labels = [rng.choice(ELEMENT_LABELS) for _ in range(ne)] + [NET_LABEL] * nn
    edges = {}
    for e in range(ne):
        for n in range(ne, ne + nn):
            if rng.random() < p:
                edges[(e, n)] = rng.choice(EDGE_LABELS)
    return LabeledGraph.build(labels, edges)


@pytest.fixture
def rng():
    return random.Random(1234)


_CRITERIA: dict[int, tuple[str, list[str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    number, title = mark.args
    _, results = _CRITERIA.setdefault(number, (title, []))
    if rep.failed or rep.when == "call" or rep.skipped:
        results.append("pass" if rep.passed else "fail" if rep.failed else "skip")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, results = _CRITERIA[number]
        status = "PASS" if results and all(r == "pass" for r in results) else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} {status}: {title}")
