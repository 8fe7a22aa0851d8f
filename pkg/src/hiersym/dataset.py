"""Synthetic graph-pair corpora with exact GED labels."""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path

from .ged import DEFAULT_BINS, LabeledGraph, SimilarityBins, ged_exact, to_similarity

log = logging.getLogger(__name__)

CORPUS_SCHEMA = 1
SPLIT_RATIO = (51, 28)
MAX_EDITS = 6

ELEMENT_KINDS = ("NMOS", "PMOS", "RES", "CAP")
MOS_BITS = (1, 2, 4, 5)  # d, s, g, g+d (diode)
ALL_OPS = ("edge_move", "vertex_relabel", "add_element", "remove_element")


def _is_element(g: LabeledGraph, v: int) -> bool:
    return g.labels[v][0] == "ELEMENT"


def _edge_label_for(kind: str, rng: random.Random):
    if kind in ("NMOS", "PMOS"):
        return (rng.choice(MOS_BITS), ())
    return (0, ())


def _mutable(g: LabeledGraph):
    return list(g.labels), dict(g.edges)


def _try_edit(labels, edges, op, rng):
    elems = [v for v, l in enumerate(labels) if l[0] == "ELEMENT"]
    nets = [v for v, l in enumerate(labels) if l[0] == "NET"]
    if op == "edge_move":
        cands = [(a, b) for (a, b) in edges]
        if not cands or len(nets) < 2:
            return None
        a, b = rng.choice(sorted(cands))
        e, n = (a, b) if labels[a][0] == "ELEMENT" else (b, a)
        free = [m for m in nets if m != n and (min(e, m), max(e, m)) not in edges]
        if not free:
            return None
        m = rng.choice(free)
        lab = edges.pop((a, b))
        edges[(min(e, m), max(e, m))] = lab
        return {"op": op, "element": e, "from": n, "to": m}
    if op == "vertex_relabel":
        if not elems:
            return None
        e = rng.choice(elems)
        choices = [k for k in ELEMENT_KINDS if k != labels[e][1]]
        new = rng.choice(choices)
        labels[e] = ("ELEMENT", new)
        return {"op": op, "element": e, "kind": new}
    if op == "label_swap":
        mos_edges = [k for k, lab in edges.items() if isinstance(lab, tuple) and lab[0] in (1, 2, 4)]
        if not mos_edges:
            return None
        k = rng.choice(sorted(mos_edges))
        old = edges[k][0]
        new = rng.choice([b for b in (1, 2, 4) if b != old])
        edges[k] = (new, edges[k][1])
        return {"op": op, "edge": list(k), "bits": new}
    if op == "add_element":
        if len(nets) < 2:
            return None
        kind = rng.choice(ELEMENT_KINDS)
        v = len(labels)
        labels.append(("ELEMENT", kind))
        for n in rng.sample(nets, 2):
            edges[(min(v, n), max(v, n))] = _edge_label_for(kind, rng)
        return {"op": op, "kind": kind}
    if op == "remove_element":
        if len(elems) < 2:
            return None
        e = rng.choice(elems)
        _remove_vertex(labels, edges, e)
        return {"op": op, "element": e}
    raise ValueError(f"unknown edit {op!r}")


def _remove_vertex(labels, edges, v):
    del labels[v]
    shifted = {}
    for (a, b), lab in edges.items():
        if v in (a, b):
            continue
        a2, b2 = a - (a > v), b - (b > v)
        shifted[(a2, b2)] = lab
    edges.clear()
    edges.update(shifted)


def _isomorphic(a, b) -> bool:
    ga, gb = LabeledGraph.build(*a), LabeledGraph.build(*b)
    # a zero upper bound turns the search into an isomorphism test
    return ged_exact(ga, gb, budget=20_000, upper_bound=0, heuristic=False).ged == 0


def perturb(g: LabeledGraph, k: int, seed, ops=ALL_OPS, retries: int = 20):
    """Apply ``k`` random bipartite-preserving edits; returns (graph, script).

    The exact distance to the original is at most the number of primitive
    operations in the script and must be recomputed.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    rng = random.Random(seed)
    labels, edges = _mutable(g)
    script = []
    for _ in range(k):
        for _ in range(retries):
            before = (list(labels), dict(edges))
            step = _try_edit(labels, edges, rng.choice(ops), rng)
            if step is not None and step["op"] == "edge_move" and _isomorphic(before, (labels, edges)):
                labels[:], edges = before[0], before[1]
                step = None  # the move landed on a symmetric twin; it edits nothing
            if step is not None:
                script.append(step)
                break
        else:
            log.warning("could only apply %d of %d edits", len(script), k)
            break
    return LabeledGraph.build(labels, edges), script


def random_bipartite(rng: random.Random, n_elements: int, n_nets: int, p: float = 0.5,
                     kinds=ELEMENT_KINDS) -> LabeledGraph:
    labels = [("ELEMENT", rng.choice(kinds)) for _ in range(n_elements)] + [("NET", "NET")] * n_nets
    edges = {}
    for e in range(n_elements):
        kind = labels[e][1]
        nets = [n for n in range(n_elements, n_elements + n_nets) if rng.random() < p]
        if len(nets) < 2:
            nets = rng.sample(range(n_elements, n_elements + n_nets), min(2, n_nets))
        for n in nets[: 3 if kind in ("NMOS", "PMOS") else 2]:
            edges[(e, n)] = _edge_label_for(kind, rng)
    return LabeledGraph.build(labels, edges)


@dataclass
class PairRecord:
    id: str
    g1: LabeledGraph
    g2: LabeledGraph
    ged: int
    dist: float
    gs: float
    provenance: dict
    split: str = "train"

    def to_json(self) -> str:
        return json.dumps({
            "schema": CORPUS_SCHEMA,
            "id": self.id,
            "split": self.split,
            "g1": self.g1.to_dict(),
            "g2": self.g2.to_dict(),
            "ged": self.ged,
            "dist": self.dist,
            "gs": self.gs,
            "provenance": self.provenance,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "PairRecord":
        d = json.loads(line)
        if d.get("schema") != CORPUS_SCHEMA:
            raise ValueError(f"unsupported corpus schema {d.get('schema')!r}")
        return cls(d["id"], LabeledGraph.from_dict(d["g1"]), LabeledGraph.from_dict(d["g2"]),
                   d["ged"], d["dist"], d["gs"], d["provenance"], d["split"])


@dataclass
class Corpus:
    records: list[PairRecord] = field(default_factory=list)

    @property
    def train(self) -> list[PairRecord]:
        return [r for r in self.records if r.split == "train"]

    @property
    def test(self) -> list[PairRecord]:
        return [r for r in self.records if r.split == "test"]

    def training_set(self):
        """(graph table, train triples, test triples) for :func:`gnn.train`."""
        graphs: list[LabeledGraph] = []
        index: dict[str, int] = {}

        def gid(g: LabeledGraph) -> int:
            key = json.dumps(g.to_dict(), sort_keys=True)
            if key not in index:
                index[key] = len(graphs)
                graphs.append(g)
            return index[key]

        tr = [(gid(r.g1), gid(r.g2), r.gs) for r in self.train]
        te = [(gid(r.g1), gid(r.g2), r.gs) for r in self.test]
        return graphs, tr, te

    def write(self, path: str | Path) -> None:
        Path(path).write_text("".join(r.to_json() + "\n" for r in self.records))

    @classmethod
    def read(cls, path: str | Path) -> "Corpus":
        lines = Path(path).read_text().splitlines()
        return cls([PairRecord.from_json(l) for l in lines if l.strip()])


def split_sizes(n: int, ratio=SPLIT_RATIO) -> tuple[int, int]:
    """Nearest-integer train count preserving ``ratio``; the rest is test."""
    n_train = int(round(n * ratio[0] / (ratio[0] + ratio[1])))
    return n_train, n - n_train


def build_corpus(base_graphs, n_pairs: int, seed: int, max_edits: int = MAX_EDITS, ops=ALL_OPS,
                 bins: SimilarityBins = DEFAULT_BINS, budget: int = 200_000, ratio=SPLIT_RATIO,
                 min_edits: int = 0, cross_fraction: float = 0.0) -> Corpus:
    """Pairs (base, perturbed base) labelled by exact GED.

    ``base_graphs`` is a sequence of (name, LabeledGraph).  With probability
    ``cross_fraction`` the perturbed graph is drawn from a different base,
    which puts dissimilar pairs in the corpus.  A pair whose GED search
    exceeds ``budget`` expansions is dropped and logged.
    """
    base_graphs = list(base_graphs)
    if not base_graphs or n_pairs <= 0:
        return Corpus()
    rng = random.Random(seed)
    records = []
    for i in range(n_pairs):
        ia = rng.randrange(len(base_graphs))
        ib = ia
        if len(base_graphs) > 1 and rng.random() < cross_fraction:
            ib = rng.choice([j for j in range(len(base_graphs)) if j != ia])
        name, base = base_graphs[ia]
        k = rng.randint(min_edits, max_edits)
        pseed = rng.randrange(2**31)
        g2, script = perturb(base_graphs[ib][1], k, pseed, ops)
        res = ged_exact(base, g2, budget=budget)
        if not res.exact:
            log.info("pair %d (%s, %d edits) exceeded the GED budget; dropped", i, name, k)
            continue
        records.append(PairRecord(
            id=f"p{i:05d}", g1=base, g2=g2, ged=res.ged, dist=res.dist,
            gs=to_similarity(res.dist, bins),
            provenance={"seed": pseed, "base": name, "other": base_graphs[ib][0], "edits": script},
        ))
    order = list(range(len(records)))
    random.Random(seed + 1).shuffle(order)
    n_train, _ = split_sizes(len(records), ratio)
    train_ids = set(order[:n_train])
    for i, r in enumerate(records):
        r.split = "train" if i in train_ids else "test"
    return Corpus(records)


def design_base_graphs(design, max_vertices: int = 16) -> list[tuple[str, LabeledGraph]]:
    """Flattened graph of every subcircuit small enough for exact labelling."""
    from .ged import from_circuit_graph
    from .graph import build_flat_graph, remove_inert_dummies

    out = []
    for name in design.bottom_up():
        g = from_circuit_graph(remove_inert_dummies(build_flat_graph(design, name)))
        if 0 < g.n <= max_vertices:
            out.append((name, g))
    return out


def default_base_graphs(seed: int = 0, n_random: int = 8) -> list[tuple[str, LabeledGraph]]:
    """Bundled fixture blocks plus a few seeded random bipartite graphs."""
    from .bundled import NAMES, load_fixture

    out: list[tuple[str, LabeledGraph]] = []
    seen = set()
    for fx in NAMES:
        if fx == "single_res":
            continue
        for name, g in design_base_graphs(load_fixture(fx)):
            key = json.dumps(g.to_dict(), sort_keys=True)
            if key not in seen:
                seen.add(key)
                out.append((f"{fx}:{name}", g))
    rng = random.Random(seed)
    for i in range(n_random):
        out.append((f"random{i}", random_bipartite(rng, rng.randint(3, 5), rng.randint(3, 5))))
    return out


def mos_base_graphs(seed: int = 0, n: int = 12) -> list[tuple[str, LabeledGraph]]:
    """Small transistor-only graphs whose every edge carries terminal bits."""
    rng = random.Random(seed)
    return [(f"mos{i}", random_bipartite(rng, rng.randint(3, 4), rng.randint(3, 4), kinds=("NMOS", "PMOS")))
            for i in range(n)]


@dataclass(frozen=True)
class CorpusConfig:
    """Recipe for a reproducible corpus; ``bases`` is "default" or "mos"."""

    n_pairs: int = 79
    seed: int = 0
    bases: str = "default"
    n_bases: int = 8
    base_seed: int = 0
    max_edits: int = MAX_EDITS
    min_edits: int = 0
    ops: tuple[str, ...] = ALL_OPS
    cross_fraction: float = 0.0
    budget: int = 200_000

    def base_graphs(self) -> list[tuple[str, LabeledGraph]]:
        if self.bases == "default":
            return default_base_graphs(self.base_seed, self.n_bases)
        if self.bases == "mos":
            return mos_base_graphs(self.base_seed, self.n_bases)
        raise ValueError(f"unknown base set {self.bases!r}")

    def build(self) -> Corpus:
        return build_corpus(self.base_graphs(), self.n_pairs, self.seed, self.max_edits, tuple(self.ops),
                            budget=self.budget, min_edits=self.min_edits, cross_fraction=self.cross_fraction)


# The two frozen corpora shipped in ``hiersym/data``.
TRAINING_CORPUS = CorpusConfig(n_pairs=500, max_edits=4, cross_fraction=0.8, budget=20_000)
LABEL_SWAP_CORPUS = CorpusConfig(n_pairs=200, seed=1, bases="mos", n_bases=12, max_edits=6,
                                 ops=("label_swap",))


def frozen_corpus(name: str) -> Corpus:
    """``"training"`` or ``"label_swap"`` from the package data directory."""
    from importlib.resources import files

    return Corpus.read(files("hiersym").joinpath("data", f"{name}_corpus.jsonl"))
