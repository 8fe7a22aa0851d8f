"""Recursive hierarchical symmetry detection.

Each subcircuit is processed bottom-up.  Within one level a probe starts
from a pair of nets believed to be symmetric, gathers the unvisited element
neighbors of both nets, pairs up matching elements and recurses through the
nets on the far side of every matched pair.  Paths that run into a mismatch
are dropped; paths that run out of neighbors converge.  Groups of repeated
structures on the same net become arrays, and symmetric port nets of a
subcircuit are handed up to its parent.
"""

from __future__ import annotations

import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

from . import constraints as C
from .ged import DEFAULT_BINS, LabeledGraph, SimilarityBins, from_circuit_graph, ged_exact, to_similarity
from .graph import NET, PRIMITIVE, CircuitGraph, build_graph, neighbors, remove_inert_dummies
from .netlist import Design, Device, DeviceKind, SubcktDef, identify_supply_nets
from .primitives import PrimitiveDef, Supernode, builtin_library, collapse, match_primitives, seed_candidates

log = logging.getLogger(__name__)

REL_TOL = 1e-9
DEFAULT_BOUND = 0.75  # second-highest similarity bin
MIN_APPROX_DEVICES = 4
APPROX_GED_BUDGET = 100_000


class MatchKind(str, Enum):
    EXACT = "EXACT"
    APPROX = "APPROX"


@dataclass(frozen=True)
class Match:
    kind: MatchKind
    score: float = 1.0


@dataclass
class DetectOptions:
    approx: str = "exact"  # off | exact | gnn
    bound: float = DEFAULT_BOUND
    model: object = None  # GedModel, required for approx="gnn"
    cache: object = None  # EmbeddingCache for approx="gnn"
    bins: SimilarityBins = DEFAULT_BINS
    threads: int = 1
    supply_overrides: tuple[str, ...] = ()
    min_approx_devices: int = MIN_APPROX_DEVICES

    def __post_init__(self):
        if self.approx not in ("off", "exact", "gnn"):
            raise ValueError(f"approx must be off, exact or gnn, not {self.approx!r}")
        if self.approx == "gnn" and self.model is None:
            raise ValueError("approx='gnn' requires a trained model")


# ---------------------------------------------------------------- scope context

@dataclass
class Scope:
    """Everything known about one hierarchy level after primitive collapse."""

    name: str
    sub: SubcktDef
    design: Design
    graph: CircuitGraph
    supernodes: dict[str, Supernode]
    devices: dict[str, Device]  # leaf devices by name, before collapse
    sym_ports: dict[str, set[frozenset]]  # subckt name -> symmetric port pairs
    options: DetectOptions
    _approx: dict = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)


def _close(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=REL_TOL)


def _params_equal(a: dict, b: dict) -> bool:
    return a.keys() == b.keys() and all(_close(a[k], b[k]) for k in a)


def _entry_ports(g: CircuitGraph, p: int, s: int) -> frozenset:
    lab = g.label(p, s)
    return lab.ports if lab is not None else frozenset()


def _symmetric_ports(scope: Scope, p: int, ports1: frozenset, ports2: frozenset) -> bool:
    v = scope.graph.vertices[p]
    if v.kind == PRIMITIVE:
        sym = {frozenset(x) for x in v.payload.primitive.port_symmetries}
    elif v.kind == DeviceKind.SUBCKT_INSTANCE.value:
        sym = scope.sym_ports.get(v.payload.subckt, set())
    else:
        return False
    return any(frozenset((a, b)) in sym for a in ports1 for b in ports2 if a != b)


def _touching_device(sn: Supernode, ports: frozenset) -> str | None:
    for pd, member in zip(sn.primitive.devices, sn.members):
        if any(pn in ports for _, pn in pd.terminals):
            return member
    return None


def _block_size(scope: Scope, p: int) -> int:
    v = scope.graph.vertices[p]
    if v.kind == PRIMITIVE:
        return len(v.payload.members)
    if v.kind == DeviceKind.SUBCKT_INSTANCE.value:
        return len(scope.design.flatten(v.payload.subckt))
    return 1


def _block_graph(scope: Scope, p: int) -> LabeledGraph:
    v = scope.graph.vertices[p]
    if v.kind == PRIMITIVE:
        sn: Supernode = v.payload
        sub = SubcktDef(sn.name, sorted({n for _, n in sn.port_nets}), [scope.devices[m] for m in sn.members])
    else:
        d = scope.design.subckts[v.payload.subckt]
        sub = SubcktDef(d.name, list(d.ports), scope.design.flatten(d.name))
    supply = identify_supply_nets(scope.design, scope.options.supply_overrides)
    return from_circuit_graph(remove_inert_dummies(build_graph(sub, scope.design, supply)))


def _block_key(scope: Scope, p: int):
    v = scope.graph.vertices[p]
    if v.kind == PRIMITIVE:
        sn: Supernode = v.payload
        return ("prim", sn.primitive.name, tuple(sorted(
            (tuple(sorted(scope.devices[m].params.items())) for m in sn.members))))
    return ("inst", v.payload.subckt)


def block_similarity(scope: Scope, p1: int, p2: int) -> float:
    """GED-based similarity of two composite blocks, memoized per scope."""
    k1, k2 = _block_key(scope, p1), _block_key(scope, p2)
    key = (k1, k2) if repr(k1) <= repr(k2) else (k2, k1)
    with scope._lock:
        if key in scope._approx:
            return scope._approx[key]
    g1, g2 = _block_graph(scope, p1), _block_graph(scope, p2)
    opts = scope.options
    if opts.approx == "gnn":
        from .gnn import embed_subblock, score_embeddings

        score = score_embeddings(embed_subblock(g1, opts.model, opts.cache),
                                 embed_subblock(g2, opts.model, opts.cache), opts.model)
    else:
        res = ged_exact(g1, g2, budget=APPROX_GED_BUDGET)
        score = to_similarity(res.dist, opts.bins)
    with scope._lock:
        scope._approx[key] = score
    return score


def match_pair(scope: Scope, p1: int, p2: int, s1: int, s2: int, approx: bool = True) -> Match | None:
    """Match of element ``p1`` reached from net ``s1`` with ``p2`` reached from ``s2``."""
    g = scope.graph
    v1, v2 = g.vertices[p1], g.vertices[p2]
    l1, l2 = g.label(p1, s1), g.label(p2, s2)
    if l1 is None or l2 is None:
        return None
    if p1 == p2:
        if s1 == s2:
            return None
        if v1.kind in (DeviceKind.RES.value, DeviceKind.CAP.value, DeviceKind.IND.value):
            return Match(MatchKind.EXACT)
        if _symmetric_ports(scope, p1, l1.ports, l2.ports):
            return Match(MatchKind.EXACT)
        return None
    if v1.kind != v2.kind:
        return None
    if v1.kind == PRIMITIVE:
        return _match_supernodes(scope, p1, p2, l1.ports, l2.ports, approx)
    if v1.kind == DeviceKind.SUBCKT_INSTANCE.value:
        if l1.ports != l2.ports:
            return None
        d1, d2 = v1.payload, v2.payload
        if d1.subckt == d2.subckt and _params_equal(d1.params, d2.params):
            return Match(MatchKind.EXACT)
        return _approx_match(scope, p1, p2, approx)
    # leaf device
    if l1.bits != l2.bits or not _params_equal(v1.payload.params, v2.payload.params):
        return None
    return Match(MatchKind.EXACT)


def _match_supernodes(scope: Scope, p1, p2, ports1, ports2, approx) -> Match | None:
    a: Supernode = scope.graph.vertices[p1].payload
    b: Supernode = scope.graph.vertices[p2].payload
    if a.family != b.family or a.polarity != b.polarity:
        return None
    if {a.port_class(p) for p in ports1} != {b.port_class(p) for p in ports2}:
        return None
    da, db = _touching_device(a, ports1), _touching_device(b, ports2)
    if da is None or db is None:
        return None
    if _params_equal(scope.devices[da].params, scope.devices[db].params):
        return Match(MatchKind.EXACT)
    return _approx_match(scope, p1, p2, approx)


def _approx_match(scope: Scope, p1: int, p2: int, approx: bool) -> Match | None:
    opts = scope.options
    if not approx or opts.approx == "off":
        return None
    if min(_block_size(scope, p1), _block_size(scope, p2)) < opts.min_approx_devices:
        return None
    score = block_similarity(scope, p1, p2)
    return Match(MatchKind.APPROX, score) if score >= opts.bound else None


# ---------------------------------------------------------------- probing
#
# Items collected during a probe reference vertices by id:
#   ("pair", ref, ref)   ("self", ref)   ("nets", net, net)
#   ("array", ref)       ("match", ref, ref, kind, score)
# where ref is ("v", element id, entry net id or None) or
# ("a", sorted member names, root net id).


@dataclass
class _State:
    visited: set[int]
    items: list[tuple]
    origin: frozenset[int]

    def fork(self) -> "_State":
        return _State(set(self.visited), list(self.items), self.origin)

    def absorb(self, other: "_State") -> None:
        self.visited = other.visited
        self.items = other.items


def _vref(p: int, s: int | None) -> tuple:
    return ("v", p, s)


def _aref(scope: Scope, members, root: int) -> tuple:
    return ("a", tuple(sorted(scope.graph.vertices[m].name for m in members)), root)


def group_of_pairs(scope: Scope, s1: int, s2: int, visited=frozenset()) -> list[tuple[int, int, Match]]:
    """Every matching (p1, p2) over the unvisited neighbors of ``s1`` and ``s2``."""
    g = scope.graph
    n1 = [u for u, _ in neighbors(g, s1, visited)]
    n2 = [u for u, _ in neighbors(g, s2, visited)]
    out = []
    for p1 in n1:
        for p2 in n2:
            m = match_pair(scope, p1, p2, s1, s2)
            if m is not None:
                out.append((p1, p2, m))
    return out


def _probe(scope: Scope, st: _State, s1: int, s2: int) -> bool:
    """Explore from the net pair (s1, s2); True when the path converges."""
    g = scope.graph
    st.visited.update((s1, s2))
    if s1 == s2:
        return _probe_shared(scope, st, s1)
    n1 = neighbors(g, s1, st.visited)
    n2 = neighbors(g, s2, st.visited)
    if not n1 and not n2:
        st.items.append(("nets", s1, s2))
        return True
    if not n1 or not n2:
        return False
    pairs = group_of_pairs(scope, s1, s2, st.visited)
    if not pairs:
        return False
    st.items.append(("nets", s1, s2))
    for p1, p2, _ in pairs:
        st.visited.update((p1, p2))
    selfs = [p1 for p1, p2, _ in pairs if p1 == p2]
    cross = [t for t in pairs if t[0] != t[1]]
    if selfs:
        _handle_selfs(scope, st, s1, s2, selfs)
    for comp in _components(cross):
        _handle_component(scope, st, s1, s2, comp)
    return True


def _components(cross):
    """Connected components of the bipartite match graph, in canonical order."""
    parent: dict = {}

    def find(x):
        while parent.setdefault(x, x) != x:
            x = parent[x]
        return x

    for p1, p2, _ in cross:
        parent[find(("L", p1))] = find(("R", p2))
    comps: dict = {}
    for t in cross:
        comps.setdefault(find(("L", t[0])), []).append(t)
    return sorted(comps.values(), key=lambda c: (c[0][0], c[0][1]))


def _add_pair(st: _State, r1: tuple, r2: tuple, m: Match) -> None:
    st.items.append(("pair", r1, r2))
    if m.kind is MatchKind.APPROX:
        st.items.append(("match", r1, r2, m.kind.value, m.score))


def _array_matches(scope: Scope, st: _State, members: list[int], s: int) -> None:
    """Match records of every member against the first (by name)."""
    g = scope.graph
    ordered = sorted(members, key=lambda v: g.vertices[v].name)
    head = ordered[0]
    for other in ordered[1:]:
        m = match_pair(scope, head, other, s, s) or Match(MatchKind.EXACT)
        st.items.append(("match", _vref(head, None), _vref(other, None), m.kind.value, m.score))


def _handle_component(scope: Scope, st: _State, s1: int, s2: int, comp) -> None:
    left = sorted({t[0] for t in comp})
    right = sorted({t[1] for t in comp})
    if len(comp) == 1:
        p1, p2, m = comp[0]
        _add_pair(st, _vref(p1, s1), _vref(p2, s2), m)
        trial = st.fork()
        if _explore_pair(scope, trial, p1, p2):
            st.absorb(trial)
        return
    if len(left) >= 2 and len(right) >= 2 and len(comp) == len(left) * len(right):
        a1, a2 = _aref(scope, left, s1), _aref(scope, right, s2)
        st.items += [("array", a1), ("array", a2)]
        _add_pair(st, a1, a2, Match(MatchKind.EXACT))
        _array_matches(scope, st, left, s1)
        _array_matches(scope, st, right, s2)
        return
    # ambiguous pairing: try each candidate, keep the deepest converged ones
    g = scope.graph
    base = len(st.items)
    trials = []
    for p1, p2, m in comp:
        trial = st.fork()
        ok = _explore_pair(scope, trial, p1, p2)
        trials.append((not ok, -(len(trial.items) - base), g.vertices[p1].name, g.vertices[p2].name,
                       p1, p2, m, trial if ok else None))
    trials.sort(key=lambda t: t[:4])
    used: set[int] = set()
    for *_, p1, p2, m, trial in trials:
        if p1 in used or p2 in used:
            continue
        used.update((p1, p2))
        _add_pair(st, _vref(p1, s1), _vref(p2, s2), m)
        if trial is not None:
            st.items += trial.items[base:]
            st.visited |= trial.visited


def _handle_selfs(scope: Scope, st: _State, s1: int, s2: int, selfs: list[int]) -> None:
    g = scope.graph
    pending = list(selfs)
    while pending:
        head = pending.pop(0)
        cluster = [head] + [q for q in pending if match_pair(scope, head, q, s1, s1)]
        pending = [q for q in pending if q not in cluster]
        # the block the seed came from is visited but may belong to the group
        for o in sorted(st.origin):
            if o in cluster or g.label(o, s1) is None or g.label(o, s2) is None:
                continue
            if match_pair(scope, o, o, s1, s2) and match_pair(scope, head, o, s1, s1):
                cluster.append(o)
        if len(cluster) >= 2:
            arr = _aref(scope, cluster, s1)
            st.items += [("array", arr), ("self", arr)]
            _array_matches(scope, st, cluster, s1)
            continue
        st.items.append(("self", _vref(head, None)))
        for n1, n2 in _self_slots(scope, head, s1, s2):
            if n1 in st.visited or n2 in st.visited:
                continue
            trial = st.fork()
            if _probe(scope, trial, n1, n2):
                st.absorb(trial)


def _self_slots(scope: Scope, p: int, s1: int, s2: int) -> list[tuple[int, int]]:
    """Other symmetric port-net pairs of a self-symmetric block."""
    g = scope.graph
    v = g.vertices[p]
    if v.kind == PRIMITIVE:
        pairs = [(v.payload.net_of(a), v.payload.net_of(b)) for a, b in v.payload.primitive.port_symmetries]
    elif v.kind == DeviceKind.SUBCKT_INSTANCE.value:
        dev: Device = v.payload
        pairs = [tuple(dev.net(x) for x in sorted(pp)) for pp in sorted(scope.sym_ports.get(dev.subckt, ()), key=sorted)]
    else:
        return []
    out = []
    for a, b in pairs:
        ia, ib = g.net_index.get(a), g.net_index.get(b)
        if ia is None or ib is None or {ia, ib} == {s1, s2}:
            continue
        if g.vertices[ia].is_supply or g.vertices[ib].is_supply:
            continue
        out.append((ia, ib))
    return out


def _probe_shared(scope: Scope, st: _State, s: int) -> bool:
    """Probe a net against itself: repeated structures hanging off one net."""
    g = scope.graph
    pending = [u for u, _ in neighbors(g, s, st.visited)]
    while pending:
        head = pending.pop(0)
        cluster = [head] + [q for q in pending if match_pair(scope, head, q, s, s)]
        pending = [q for q in pending if q not in cluster]
        if len(cluster) < 2:
            continue
        st.visited.update(cluster)
        if len(cluster) >= 3:
            st.items.append(("array", _aref(scope, cluster, s)))
            _array_matches(scope, st, cluster, s)
            continue
        a, b = cluster
        m = match_pair(scope, a, b, s, s)
        _add_pair(st, _vref(a, s), _vref(b, s), m)
        trial = st.fork()
        if _explore_pair(scope, trial, a, b):
            st.absorb(trial)
    return True


def _slot_groups(scope: Scope, p1: int, p2: int) -> list[tuple[list[int], list[int]]]:
    """Net lists on the far side of a matched pair, grouped by terminal role."""
    g = scope.graph
    v1, v2 = g.vertices[p1], g.vertices[p2]

    def ids(names):
        out = []
        for n in names:
            i = g.net_index.get(n)
            if i is not None and not g.vertices[i].is_supply and i not in out:
                out.append(i)
        return out

    if v1.kind == PRIMITIVE:
        a: Supernode = v1.payload
        b: Supernode = v2.payload
        classes = list(dict.fromkeys(a.primitive.ports.values()))
        return [(ids(n for p, n in a.port_nets if a.port_class(p) == c),
                 ids(n for p, n in b.port_nets if b.port_class(p) == c)) for c in classes]
    d1, d2 = v1.payload, v2.payload
    if d1.kind.is_passive:
        return [(ids(d1.nets), ids(d2.nets))]
    roles = ("d", "g", "s") if d1.kind.is_mos else [r for r, _ in d1.terminals]
    return [(ids([d1.net(r)]), ids([d2.net(r)])) for r in roles]


def _explore_pair(scope: Scope, st: _State, p1: int, p2: int) -> bool:
    """Recurse through every net pair behind a matched element pair."""
    g = scope.graph
    for nets1, nets2 in _slot_groups(scope, p1, p2):
        while True:
            free1 = [n for n in nets1 if n not in st.visited]
            free2 = [n for n in nets2 if n not in st.visited]
            if not free1 and not free2:
                break
            if not free1 or not free2:
                # one side is exhausted; fine for primitives with unequal port counts
                if g.vertices[p1].kind == PRIMITIVE:
                    break
                return False
            best = None
            for n1 in free1:
                for n2 in free2:
                    trial = st.fork()
                    if _probe(scope, trial, n1, n2):
                        key = (-len(trial.items), g.vertices[n1].name, g.vertices[n2].name)
                        if best is None or key < best[0]:
                            best = (key, trial)
            if best is None:
                return False
            st.absorb(best[1])
    return True


# ---------------------------------------------------------------- one level

def prepare_scope(design: Design, name: str, library: list[PrimitiveDef] | None = None,
                  options: DetectOptions | None = None, sym_ports=None, supply=None) -> Scope:
    """Graph of ``name`` with inert dummies removed and primitives collapsed."""
    options = options or DetectOptions()
    library = builtin_library() if library is None else library
    if supply is None:
        supply = identify_supply_nets(design, options.supply_overrides)
    sub = design.subckts[name]
    raw = remove_inert_dummies(build_graph(sub, design, supply))
    sns = match_primitives(raw, library)
    g = collapse(raw, sns)
    return Scope(name, sub, design, g, {sn.name: sn for sn in sns}, {d.name: d for d in sub.devices},
                 sym_ports if sym_ports is not None else {}, options)


@dataclass(frozen=True)
class _Seed:
    s1: int
    s2: int
    origin: tuple[int, ...]


def scope_seeds(scope: Scope) -> list[_Seed]:
    """Primitive seeds, symmetric instance ports, then nets shared by like instance ports."""
    g = scope.graph
    seeds: list[_Seed] = []
    seen: set = set()

    def add(a, b, origin):
        key = frozenset((a, b))
        if key not in seen:
            seen.add(key)
            seeds.append(_Seed(a, b, origin))

    for sd in seed_candidates(g):
        add(sd.s1, sd.s2, tuple(g.element_index[n] for n in sd.origin))
    insts = sorted((v for v in g.elements() if v.kind == DeviceKind.SUBCKT_INSTANCE.value), key=lambda v: v.sort_key)
    for v in insts:
        for pair in sorted(scope.sym_ports.get(v.payload.subckt, ()), key=sorted):
            a, b = (g.net_index.get(v.payload.net(x)) for x in sorted(pair))
            if a is None or b is None or a == b or g.vertices[a].is_supply or g.vertices[b].is_supply:
                continue
            add(a, b, (v.id,))
    for n in sorted(g.nets(), key=lambda v: v.sort_key):
        if n.is_supply:
            continue
        by_port: dict = {}
        for u, lab in g.adj(n.id).items():
            if g.vertices[u].kind == DeviceKind.SUBCKT_INSTANCE.value:
                by_port.setdefault(lab.ports, []).append(u)
        if any(len(us) >= 2 for us in by_port.values()):
            add(n.id, n.id, ())
    return seeds


def explore_seed(scope: Scope, seed: _Seed) -> list[tuple]:
    st = _State(set(seed.origin), [], frozenset(seed.origin))
    return st.items if _probe(scope, st, seed.s1, seed.s2) else []


def _rid(ref):
    return ref[1]


def _item_key(item):
    kind = item[0]
    if kind == "pair":
        return ("pair", frozenset((_rid(item[1]), _rid(item[2]))))
    if kind == "nets":
        return ("nets", frozenset(item[1:]))
    if kind in ("self", "array"):
        return (kind, _rid(item[1]))
    return None


def _is_dummy(scope: Scope, names) -> bool:
    for n in names:
        d = scope.devices.get(n)
        if d is None or not d.kind.is_mos:
            return False
        for role in ("g", "s"):
            i = scope.graph.net_index.get(d.net(role))
            if i is None or not scope.graph.vertices[i].is_supply:
                return False
    return True


@dataclass
class ScopeResult:
    constraints: list
    arrays: dict[str, tuple[str, ...]]
    sym_ports: set[frozenset]


def detect_scope(scope: Scope, pool: ThreadPoolExecutor | None = None) -> ScopeResult:
    g = scope.graph
    seeds = scope_seeds(scope)
    if pool is not None:
        results = list(pool.map(lambda sd: explore_seed(scope, sd), seeds))
    else:
        results = [explore_seed(scope, sd) for sd in seeds]

    kept: list[list[tuple]] = []
    claimed: set = set()
    for items in results:
        keys = {k for k in map(_item_key, items) if k is not None}
        if not keys or keys & claimed:
            continue  # nothing found, or the same structure already claimed by an earlier axis
        claimed |= keys
        kept.append(items)

    array_refs = sorted({it[1][1] for items in kept for it in items if it[0] == "array"})
    names: dict[tuple, str] = {}
    counters = {"Dummy": 0, "Array": 0}
    for members in array_refs:
        base = "Dummy" if _is_dummy(scope, members) else "Array"
        counters[base] += 1
        names[members] = f"{base}{counters[base]}"

    def label(ref) -> str:
        if ref[0] == "a":
            return names[ref[1]]
        v = g.vertices[ref[1]]
        if v.kind == PRIMITIVE and ref[2] is not None:
            return f"{v.name}/{g.vertices[ref[2]].name}"
        return v.name

    out: list = []
    ports: set[frozenset] = set()
    port_names = set(scope.sub.ports)
    pair_partner: dict[str, set] = {}
    for axis, items in enumerate(kept):
        for it in items:
            kind = it[0]
            if kind == "pair":
                a, b = label(it[1]), label(it[2])
                out.append(C.SymmetricPair(a, b, axis, scope.name))
                pair_partner.setdefault(a, set()).add(b)
                pair_partner.setdefault(b, set()).add(a)
            elif kind == "self":
                out.append(C.SelfSymmetric(label(it[1]), axis, scope.name))
            elif kind == "nets":
                na, nb = g.vertices[it[1]].name, g.vertices[it[2]].name
                out.append(C.SymmetricNets(na, nb, axis, scope.name))
                if na in port_names and nb in port_names:
                    ports.add(frozenset((na, nb)))
            elif kind == "array":
                ref = it[1]
                out.append(C.ArrayGroup(names[ref[1]], ref[1], axis, scope.name, g.vertices[ref[2]].name))
            elif kind == "match":
                out.append(C.MatchBlocks(label(it[1]), label(it[2]), it[3], round(it[4], 12), scope.name))
    for name, partners in sorted(pair_partner.items()):
        if len(partners) > 1:
            log.warning("%s: %s is paired with several blocks: %s", scope.name, name, sorted(partners))
    for sn in scope.supernodes.values():
        for c in sn.constraints:
            if c["type"] == "CommonCentroid":
                out.append(C.CommonCentroid(tuple(c["devices"]), scope.name))
        for pa, pb in sn.primitive.port_symmetries:
            na, nb = sn.net_of(pa), sn.net_of(pb)
            if na in port_names and nb in port_names and na != nb:
                ports.add(frozenset((na, nb)))
    return ScopeResult(C.canonicalize(out), {v: k for k, v in names.items()}, ports)


# ---------------------------------------------------------------- whole design

@dataclass
class DetectionResult:
    constraints: list
    hierarchy: dict[str, dict]  # scope -> instances / primitives / arrays

    def dumps(self) -> str:
        return C.dumps(self.constraints)


def run_detection(design: Design, library: list[PrimitiveDef] | None = None,
                  options: DetectOptions | None = None) -> DetectionResult:
    """Detect constraints level by level, children before parents."""
    options = options or DetectOptions()
    library = builtin_library() if library is None else library
    supply = identify_supply_nets(design, options.supply_overrides)
    sym_ports: dict[str, set[frozenset]] = {}
    constraints: list = []
    hierarchy: dict[str, dict] = {}
    pool = ThreadPoolExecutor(options.threads) if options.threads > 1 else None
    try:
        for name in design.bottom_up():
            scope = prepare_scope(design, name, library, options, sym_ports, supply)
            res = detect_scope(scope, pool)
            sym_ports[name] = res.sym_ports
            constraints += res.constraints
            hierarchy[name] = {
                "instances": {d.name: d.subckt for d in scope.sub.devices if d.kind is DeviceKind.SUBCKT_INSTANCE},
                "primitives": {n: list(sn.members) for n, sn in sorted(scope.supernodes.items())},
                "arrays": {n: list(m) for n, m in sorted(res.arrays.items())},
            }
    finally:
        if pool is not None:
            pool.shutdown()
    return DetectionResult(C.canonicalize(constraints), hierarchy)


# ---------------------------------------------------------------- verification

def _resolve(scope: Scope, name: str, arrays: dict[str, tuple]):
    """Element ids (with optional entry net) a constraint name refers to, or None."""
    g = scope.graph
    if name in arrays:
        refs = [_resolve(scope, m, arrays) for m in arrays[name]]
        if any(r is None for r in refs):
            return None
        return [r[0] for r in refs]
    if name in g.element_index:
        return [(g.element_index[name], None)]
    block, _, net = name.rpartition("/")
    if block in g.element_index and net in g.net_index:
        return [(g.element_index[block], g.net_index[net])]
    return None


def _any_match(scope: Scope, a, b, same_net: bool = False) -> Match | None:
    g = scope.graph
    (p1, e1), (p2, e2) = a, b
    for s1 in ([e1] if e1 is not None else sorted(g.adj(p1))):
        for s2 in ([e2] if e2 is not None else sorted(g.adj(p2))):
            if same_net and s1 != s2:
                continue
            m = match_pair(scope, p1, p2, s1, s2)
            if m is not None:
                return m
    return None


def _self_ok(scope: Scope, ref) -> bool:
    p, _ = ref
    nets = sorted(scope.graph.adj(p))
    return any(match_pair(scope, p, p, s1, s2) for s1 in nets for s2 in nets if s1 < s2)


def _check(scope: Scope, c, arrays) -> tuple[str, str]:
    g = scope.graph
    if isinstance(c, C.SymmetricNets):
        missing = [n for n in (c.net_a, c.net_b) if n not in g.net_index]
        return ("stale", f"unknown net {missing[0]}") if missing else ("consistent", "")
    if isinstance(c, C.CommonCentroid):
        missing = [d for d in c.devices if d not in scope.devices]
        return ("stale", f"unknown device {missing[0]}") if missing else ("consistent", "")
    names = {
        C.SymmetricPair: lambda: [c.a, c.b],
        C.MatchBlocks: lambda: [c.a, c.b],
        C.SelfSymmetric: lambda: [c.block],
        C.ArrayGroup: lambda: list(c.members),
    }[type(c)]()
    refs = [_resolve(scope, n, arrays) for n in names]
    for n, r in zip(names, refs):
        if r is None:
            return "stale", f"unknown name {n}"
    if isinstance(c, C.SelfSymmetric):
        ok = all(_self_ok(scope, r) for r in refs[0])
        if len(refs[0]) > 1:
            head = refs[0][0]
            ok = ok and all(_any_match(scope, head, r, same_net=True) for r in refs[0][1:])
        return ("consistent", "") if ok else ("inconsistent", f"{c.block} is not symmetric about itself")
    if isinstance(c, C.ArrayGroup):
        members = [r[0] for r in refs]
        if len(members) < 2:
            return "inconsistent", "array with fewer than two members"
        head = members[0]
        ok = all(_any_match(scope, head, m, same_net=True) for m in members[1:])
        return ("consistent", "") if ok else ("inconsistent", f"members of {c.name} do not match")
    ra, rb = refs
    if len(ra) != len(rb):
        return "inconsistent", "paired groups differ in size"
    m = _any_match(scope, ra[0], rb[0])
    if m is None:
        return "inconsistent", f"{names[0]} does not match {names[1]}"
    if isinstance(c, C.MatchBlocks) and m.kind.value != c.kind:
        return "inconsistent", f"match kind is {m.kind.value}, not {c.kind}"
    return "consistent", ""


def verify_constraints(constraints, design: Design, library=None, options=None) -> C.VerifyReport:
    options = options or DetectOptions()
    library = builtin_library() if library is None else library
    supply = identify_supply_nets(design, options.supply_overrides)
    report = C.VerifyReport()
    by_scope: dict[str, list] = {}
    for c in C.canonicalize(constraints):
        by_scope.setdefault(c.scope, []).append(c)
    # symmetric ports recorded in the file stand in for what detection promoted
    sym_ports: dict[str, set] = {}
    for name, cs in by_scope.items():
        if name in design.subckts:
            ports = set(design.subckts[name].ports)
            sym_ports[name] = {frozenset((c.net_a, c.net_b)) for c in cs
                               if isinstance(c, C.SymmetricNets) and {c.net_a, c.net_b} <= ports}
    for name, cs in by_scope.items():
        if name not in design.subckts:
            report.findings += [C.Finding(c, "stale", f"unknown scope {name}") for c in cs]
            continue
        scope = prepare_scope(design, name, library, options, sym_ports, supply)
        arrays = {c.name: c.members for c in cs if isinstance(c, C.ArrayGroup)}
        for c in cs:
            status, reason = _check(scope, c, arrays)
            report.findings.append(C.Finding(c, status, reason))
    return report
