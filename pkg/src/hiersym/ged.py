"""Exact unit-cost graph edit distance for small labelled graphs.

The search assigns the vertices of the first graph one by one to an unused
vertex of the second graph or to deletion.  Nodes are expanded depth-first
with children ordered best-first by ``cost + lower bound``; a subtree is cut
as soon as its bound reaches the incumbent.  The lower bound is the sum of two
label-histogram bounds, one over the unassigned vertices and one over the
edges not yet accounted for, both admissible because vertex and edge
operations are priced independently.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .graph import NET, CircuitGraph

DEFAULT_MAX_VERTICES = 16


class GedSizeError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledGraph:
    labels: tuple[Hashable, ...]
    edges: dict = field(hash=False)  # (i, j) with i < j -> label

    def __post_init__(self):
        adj: list[dict[int, Hashable]] = [dict() for _ in self.labels]
        for (a, b), lab in self.edges.items():
            if a == b or not (0 <= a < len(self.labels) and 0 <= b < len(self.labels)):
                raise ValueError(f"bad edge {(a, b)}")
            adj[a][b] = lab
            adj[b][a] = lab
        object.__setattr__(self, "adj", tuple(adj))

    @classmethod
    def build(cls, labels: Sequence[Hashable], edges) -> "LabeledGraph":
        norm = {}
        items = edges.items() if isinstance(edges, dict) else ((e[:2], e[2] if len(e) > 2 else None) for e in edges)
        for (a, b), lab in items:
            norm[(min(a, b), max(a, b))] = lab
        return cls(tuple(labels), norm)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def m(self) -> int:
        return len(self.edges)

    def edge(self, a: int, b: int):
        return self.adj[a].get(b)

    def permuted(self, perm: Sequence[int]) -> "LabeledGraph":
        """Relabel vertex ``i`` as ``perm[i]``."""
        labels = [None] * self.n
        for i, p in enumerate(perm):
            labels[p] = self.labels[i]
        return LabeledGraph.build(labels, {(perm[a], perm[b]): lab for (a, b), lab in self.edges.items()})

    def to_dict(self) -> dict:
        return {
            "labels": [list(l) if isinstance(l, tuple) else l for l in self.labels],
            "edges": [[a, b, list(l) if isinstance(l, tuple) else l] for (a, b), l in sorted(self.edges.items())],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LabeledGraph":
        def tup(x):
            return tuple(tup(y) for y in x) if isinstance(x, list) else x
        return cls.build([tup(l) for l in d["labels"]], {(a, b): tup(l) for a, b, l in d["edges"]})


def from_circuit_graph(g: CircuitGraph) -> LabeledGraph:
    """Vertex label (class, kind); edge label (terminal bits, ports). Names dropped."""
    labels = [(v.klass, v.kind) for v in g.vertices]
    edges = {(a, b): (lab.bits, tuple(sorted(lab.ports))) for a, b, lab in g.edges()}
    return LabeledGraph.build(labels, edges)


@dataclass(frozen=True)
class EditOp:
    kind: str  # VERTEX_INS VERTEX_DEL VERTEX_RELABEL EDGE_INS EDGE_DEL EDGE_RELABEL
    operands: tuple

    def to_dict(self) -> dict:
        return {"op": self.kind, "operands": list(self.operands)}


@dataclass
class GedResult:
    ged: int
    dist: float
    exact: bool
    mapping: list[int] | None = None  # g1 vertex -> g2 vertex or -1
    edit_path: list[EditOp] | None = None
    expanded: int = 0
    bound_trace: list | None = None  # (partial mapping, cost + bound) per child, debug only

    def to_dict(self, with_path: bool = False) -> dict:
        d = {"ged": self.ged, "dist": self.dist, "exact": self.exact}
        if with_path and self.edit_path is not None:
            d["edit_path"] = [op.to_dict() for op in self.edit_path]
        return d


def normalized_dist(ged: float, g1, g2) -> float:
    denom = g1.n + g1.m + g2.n + g2.m if isinstance(g1, LabeledGraph) else (
        len(g1) + g1.num_edges + len(g2) + g2.num_edges)
    if denom == 0:
        raise ValueError("normalized distance undefined for two empty graphs")
    if ged < 0:
        raise ValueError("ged must be non-negative")
    return ged / denom


@dataclass(frozen=True)
class SimilarityBins:
    """``edges[0]`` must be 0.  Distances up to ``edges[1]`` score
    ``scores[0]``; ``(edges[k], edges[k+1]]`` scores ``scores[k]``; anything
    beyond the last edge scores ``scores[-1]``."""

    edges: tuple[float, ...] = (0.0, 0.05, 0.10, 0.20, 0.35)
    scores: tuple[float, ...] = (1.0, 0.75, 0.5, 0.25, 0.0)

    def __post_init__(self):
        if self.edges[0] != 0:
            raise ValueError("first bin edge must be 0")
        if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise ValueError("bin edges must be strictly increasing")
        if len(self.scores) != len(self.edges):
            raise ValueError("need one score per bin edge")
        if any(not 0 <= s <= 1 for s in self.scores) or any(b > a for a, b in zip(self.scores, self.scores[1:])):
            raise ValueError("scores must lie in [0, 1] and be non-increasing")
        if self.scores[0] != 1.0:
            raise ValueError("zero distance must score 1")

    def bin_index(self, dist: float) -> int:
        for k in range(1, len(self.edges)):
            if dist <= self.edges[k]:
                return k - 1
        return len(self.scores) - 1

    def to_dict(self) -> dict:
        return {"edges": list(self.edges), "scores": list(self.scores)}

    @classmethod
    def from_dict(cls, d: dict) -> "SimilarityBins":
        return cls(tuple(d["edges"]), tuple(d["scores"]))


DEFAULT_BINS = SimilarityBins()


def to_similarity(dist: float, bins: SimilarityBins = DEFAULT_BINS) -> float:
    return bins.scores[bins.bin_index(dist)]


def _vertex_order(g: LabeledGraph) -> list[int]:
    """Highest degree first, then vertices most connected to those placed."""
    order: list[int] = []
    placed: set[int] = set()
    deg = [len(a) for a in g.adj]
    while len(order) < g.n:
        best = max(
            (v for v in range(g.n) if v not in placed),
            key=lambda v: (sum(1 for u in g.adj[v] if u in placed), deg[v], -v),
        )
        order.append(best)
        placed.add(best)
    return order


def _hist_bound(a: Counter, b: Counter, na: int, nb: int) -> int:
    common = sum((a & b).values())
    return max(na, nb) - common


def _star_hist(g: LabeledGraph, v: int) -> Counter:
    return Counter((lab, g.labels[w]) for w, lab in g.adj[v].items())


def assignment_upper_bound(g1: LabeledGraph, g2: LabeledGraph) -> list[int]:
    """A good (not necessarily optimal) vertex mapping from a linear assignment
    over local star costs, polished by pairwise swaps."""
    from scipy.optimize import linear_sum_assignment  # deferred: slow to import

    n1, n2 = g1.n, g2.n
    big = 1e9
    cost = np.full((n1 + n2, n1 + n2), big)
    s1 = [_star_hist(g1, u) for u in range(n1)]
    s2 = [_star_hist(g2, v) for v in range(n2)]
    for u in range(n1):
        for v in range(n2):
            common = sum((s1[u] & s2[v]).values())
            diff = max(len(g1.adj[u]), len(g2.adj[v])) - common
            cost[u, v] = (g1.labels[u] != g2.labels[v]) + diff / 2
        cost[u, n2 + u] = 1 + len(g1.adj[u]) / 2
    for v in range(n2):
        cost[n1 + v, v] = 1 + len(g2.adj[v]) / 2
    cost[n1:, n2:] = 0
    rows, cols = linear_sum_assignment(cost)
    mapping = [-1] * n1
    for r, c in zip(rows, cols):
        if r < n1 and c < n2:
            mapping[r] = int(c)
    return _polish(g1, g2, mapping)


def _polish(g1: LabeledGraph, g2: LabeledGraph, mapping: list[int]) -> list[int]:
    """First-improvement local search over swaps and moves to unused targets."""
    best = mapping_cost(g1, g2, mapping)
    improved = True
    while improved:
        improved = False
        used = set(mapping)
        free = [v for v in range(g2.n) if v not in used] + [-1]
        for u in range(g1.n):
            for w in range(u + 1, g1.n):
                cand = list(mapping)
                cand[u], cand[w] = cand[w], cand[u]
                c = mapping_cost(g1, g2, cand)
                if c < best:
                    mapping, best, improved = cand, c, True
            for v in free:
                if v == mapping[u]:
                    continue
                cand = list(mapping)
                cand[u] = v
                c = mapping_cost(g1, g2, cand)
                if c < best:
                    mapping, best, improved = cand, c, True
                    break
            if improved:
                break
    return mapping


def ged_exact(g1: LabeledGraph, g2: LabeledGraph, budget: int | None = None,
              max_vertices: int = DEFAULT_MAX_VERTICES, upper_bound: int | None = None,
              check_bound: bool = False, heuristic: bool = True) -> GedResult:
    """Minimum number of unit-cost edit operations turning ``g1`` into ``g2``.

    ``budget`` caps the number of expanded search nodes; when it is hit the
    best mapping found so far is returned with ``exact=False``.  With
    ``heuristic`` the search starts from an assignment-based incumbent and
    stops once a mapping meets the root lower bound.
    """
    if budget is None and (g1.n > max_vertices or g2.n > max_vertices):
        raise GedSizeError(
            f"graphs with {g1.n} and {g2.n} vertices exceed the exact limit of {max_vertices}; pass a budget")
    order = _vertex_order(g1)
    n1, n2 = g1.n, g2.n

    mapping = [-2] * n1  # -2 unassigned, -1 deleted
    inv = [-1] * n2
    best_cost = upper_bound + 1 if upper_bound is not None else None
    best_map: list[int] | None = None
    if heuristic and n1 and n2:
        guess = assignment_upper_bound(g1, g2)
        c = mapping_cost(g1, g2, guess)
        if best_cost is None or c < best_cost:
            best_cost, best_map = c, guess
    expanded = 0
    exhausted = False
    stop = False
    trace: list | None = [] if check_bound else None

    # remaining-label histograms
    rem1 = Counter(g1.labels)
    rem2 = Counter(g2.labels)
    e1_lab = Counter(g1.edges.values())
    e2_lab = Counter(g2.edges.values())
    # edges of g1 with both endpoints assigned, edges of g2 with both endpoints used
    done1 = Counter()
    done2 = Counter()

    def bound(k: int) -> int:
        vb = _hist_bound(rem1, rem2, n1 - k, sum(rem2.values()))
        r1 = e1_lab - done1
        r2 = e2_lab - done2
        eb = _hist_bound(r1, r2, sum(r1.values()), sum(r2.values()))
        return vb + eb

    def step_cost(u: int, v: int) -> int:
        c = 0
        if v < 0:
            c += 1
            for w in g1.adj[u]:
                if mapping[w] != -2:
                    c += 1
            return c
        if g1.labels[u] != g2.labels[v]:
            c += 1
        for w, lab in g1.adj[u].items():
            mw = mapping[w]
            if mw == -2:
                continue
            if mw < 0:
                c += 1
                continue
            lab2 = g2.adj[v].get(mw)
            if lab2 is None:
                c += 1
            elif lab2 != lab:
                c += 1
        for x in g2.adj[v]:
            w = inv[x]
            if w >= 0 and w not in g1.adj[u]:
                c += 1
        return c

    def completion_cost() -> int:
        c = 0
        for v in range(n2):
            if inv[v] < 0:
                c += 1
        for (a, b) in g2.edges:
            if inv[a] < 0 or inv[b] < 0:
                c += 1
        return c

    def assign(u: int, v: int) -> None:
        mapping[u] = v
        rem1[g1.labels[u]] -= 1
        if v >= 0:
            inv[v] = u
            rem2[g2.labels[v]] -= 1
            for x, lab in g2.adj[v].items():
                if inv[x] >= 0:
                    done2[lab] += 1
        for w, lab in g1.adj[u].items():
            if mapping[w] != -2 and w != u:
                done1[lab] += 1

    def unassign(u: int, v: int) -> None:
        for w, lab in g1.adj[u].items():
            if mapping[w] != -2 and w != u:
                done1[lab] -= 1
        if v >= 0:
            for x, lab in g2.adj[v].items():
                if inv[x] >= 0 and x != v:
                    done2[lab] -= 1
            inv[v] = -1
            rem2[g2.labels[v]] += 1
        rem1[g1.labels[u]] += 1
        mapping[u] = -2

    def search(k: int, cost: int) -> None:
        nonlocal best_cost, best_map, expanded, exhausted, stop
        if exhausted or stop:
            return
        expanded += 1
        if budget is not None and expanded > budget and best_map is not None:
            exhausted = True
            return
        if k == n1:
            total = cost + completion_cost()
            if best_cost is None or total < best_cost:
                best_cost, best_map = total, list(mapping)
                if best_cost <= root:
                    stop = True  # matches the root lower bound; nothing can beat it
            return
        u = order[k]
        children = []
        for v in [x for x in range(n2) if inv[x] < 0] + [-1]:
            c = step_cost(u, v)
            assign(u, v)
            h = bound(k + 1)
            if trace is not None:
                trace.append(({w: mapping[w] for w in range(n1) if mapping[w] != -2}, cost + c + h))
            children.append((cost + c + h, v, c))
            unassign(u, v)
        children.sort(key=lambda t: (t[0], t[1] < 0, t[1]))
        for child in children:
            f, v, c = child
            if best_cost is not None and f >= best_cost:
                break
            assign(u, v)
            search(k + 1, cost + c)
            unassign(u, v)

    root = bound(0)
    if best_cost is None or best_cost > root:
        search(0, 0)
    if best_map is None:
        # only reachable when upper_bound was below the true distance
        return GedResult(-1, float("nan"), False, None, None, expanded, trace)
    path = edit_path(g1, g2, best_map)
    ged = len(path)
    assert ged == best_cost, (ged, best_cost)
    return GedResult(ged, normalized_dist(ged, g1, g2), not exhausted, best_map, path, expanded, trace)


def mapping_cost(g1: LabeledGraph, g2: LabeledGraph, mapping: Sequence[int]) -> int:
    return len(edit_path(g1, g2, mapping))


def edit_path(g1: LabeledGraph, g2: LabeledGraph, mapping: Sequence[int]) -> list[EditOp]:
    """Edit operations implied by a complete vertex mapping (``-1`` = delete)."""
    ops: list[EditOp] = []
    inv = {v: u for u, v in enumerate(mapping) if v >= 0}
    for u, v in enumerate(mapping):
        if v < 0:
            ops.append(EditOp("VERTEX_DEL", (u,)))
        elif g1.labels[u] != g2.labels[v]:
            ops.append(EditOp("VERTEX_RELABEL", (u, _plain(g2.labels[v]))))
    for (a, b), lab in sorted(g1.edges.items()):
        ma, mb = mapping[a], mapping[b]
        lab2 = g2.edge(ma, mb) if ma >= 0 and mb >= 0 else None
        if lab2 is None:
            ops.append(EditOp("EDGE_DEL", (a, b)))
        elif lab2 != lab:
            ops.append(EditOp("EDGE_RELABEL", (a, b, _plain(lab2))))
    for v in range(g2.n):
        if v not in inv:
            ops.append(EditOp("VERTEX_INS", (v, _plain(g2.labels[v]))))
    for (a, b) in sorted(g2.edges):
        ia, ib = inv.get(a), inv.get(b)
        if ia is None or ib is None or g1.edge(ia, ib) is None:
            ops.append(EditOp("EDGE_INS", (a, b)))
    return ops


def _plain(x):
    return [_plain(y) for y in x] if isinstance(x, tuple) else x


def describe_node(g: LabeledGraph, v: int):
    lab = g.labels[v]
    return lab[1] if isinstance(lab, tuple) and lab[0] == NET else lab
