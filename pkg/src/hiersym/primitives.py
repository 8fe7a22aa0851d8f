"""Primitive recognition and collapse into supernodes.

Library entries are small labelled templates.  Every embedding into the
circuit graph is found by backtracking (devices are extended along shared
nets, terminal roles and net bijectivity prune early), then overlaps are
resolved greedily: larger patterns first, then library order, then the
sorted member names.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .graph import (
    ELEMENT, PRIMITIVE, CircuitGraph, EdgeLabel, GraphBuilder, Vertex,
)
from .netlist import Device, DeviceKind

LIBRARY_VERSION = 1
REL_TOL = 1e-9

_TYPE_KINDS = {
    "mos": {DeviceKind.NMOS, DeviceKind.PMOS},
    "nmos": {DeviceKind.NMOS},
    "pmos": {DeviceKind.PMOS},
    "res": {DeviceKind.RES},
    "cap": {DeviceKind.CAP},
    "ind": {DeviceKind.IND},
}


class LibraryError(ValueError):
    pass


@dataclass(frozen=True)
class PatternDevice:
    name: str
    type: str
    terminals: tuple[tuple[str, str], ...]  # (role, pattern net)

    def net(self, role: str) -> str:
        return dict(self.terminals)[role]


@dataclass
class PrimitiveDef:
    name: str
    family: str
    devices: list[PatternDevice]
    ports: dict[str, str]  # pattern net -> port class
    port_symmetries: list[tuple[str, str]] = field(default_factory=list)
    self_symmetric: bool = False
    internal_constraints: list[dict] = field(default_factory=list)
    same_polarity: bool = True
    equal_params: list[list[str]] = field(default_factory=list)
    ratio_params: list[list[str]] = field(default_factory=list)
    interchangeable: list[list[str]] = field(default_factory=list)
    not_supply: list[str] = field(default_factory=list)
    require_supply: list[str] = field(default_factory=list)

    def __post_init__(self):
        nets = {n for d in self.devices for _, n in d.terminals}
        for p in self.ports:
            if p not in nets:
                raise LibraryError(f"{self.name}: port {p!r} not in pattern")
        for a, b in self.port_symmetries:
            if a not in self.ports or b not in self.ports:
                raise LibraryError(f"{self.name}: symmetric ports {a},{b} must be ports")
        if not _connected(self.devices):
            raise LibraryError(f"{self.name}: pattern is not connected")

    @property
    def size(self) -> int:
        return len(self.devices)

    @property
    def pattern_nets(self) -> list[str]:
        return list(dict.fromkeys(n for d in self.devices for _, n in d.terminals))

    def symmetric_partner(self, port: str) -> str | None:
        for a, b in self.port_symmetries:
            if port == a:
                return b
            if port == b:
                return a
        return None


def _connected(devices: list[PatternDevice]) -> bool:
    if not devices:
        return False
    seen = {0}
    frontier = [0]
    while frontier:
        i = frontier.pop()
        nets = {n for _, n in devices[i].terminals}
        for j, d in enumerate(devices):
            if j not in seen and nets & {n for _, n in d.terminals}:
                seen.add(j)
                frontier.append(j)
    return len(seen) == len(devices)


@dataclass(frozen=True)
class Supernode:
    name: str
    primitive: PrimitiveDef = field(compare=False, hash=False)
    members: tuple[str, ...]
    port_nets: tuple[tuple[str, str], ...]  # (port, net name)
    polarity: str = ""

    @property
    def family(self) -> str:
        return self.primitive.family

    def net_of(self, port: str) -> str:
        return dict(self.port_nets)[port]

    def ports_on(self, net: str) -> list[str]:
        return [p for p, n in self.port_nets if n == net]

    def port_class(self, port: str) -> str:
        return self.primitive.ports[port]

    @property
    def constraints(self) -> list[dict]:
        out = []
        for c in self.primitive.internal_constraints:
            devs = c.get("devices", "all")
            if devs == "all":
                devs = list(self.members)
            out.append({"type": c["type"], "devices": sorted(devs)})
        return out


# ---------------------------------------------------------------- library io

def _expand(entry: dict) -> list[dict]:
    """Replicate the ``OUT`` device of an ``outputs`` entry for each count."""
    if "outputs" not in entry:
        return [entry]
    lo, hi = entry["outputs"]
    template = next(d for d in entry["devices"] if d["name"] == "OUT")
    out_net = template["terminals"]["d"]
    out = []
    for n in range(hi, lo - 1, -1):
        e = {k: v for k, v in entry.items() if k != "outputs"}
        devs = [d for d in entry["devices"] if d["name"] != "OUT"]
        ports = {p: c for p, c in entry["ports"].items() if p != out_net}
        group = []
        for i in range(1, n + 1):
            terms = dict(template["terminals"])
            terms["d"] = f"{out_net}{i}"
            devs.append({"name": f"OUT{i}", "type": template["type"], "terminals": terms})
            ports[f"{out_net}{i}"] = entry["ports"][out_net]
            group.append(f"OUT{i}")
        e["devices"] = devs
        e["ports"] = ports
        e["interchangeable"] = [g for g in entry.get("interchangeable", []) if "OUT" not in g] + [group]
        e["ratio_params"] = [
            sum(([f"OUT{i}" for i in range(1, n + 1)] if x == "OUT" else [x] for x in g), [])
            for g in entry.get("ratio_params", [])
        ]
        out.append(e)
    return out


def _from_dict(d: dict) -> PrimitiveDef:
    try:
        devices = [
            PatternDevice(x["name"], x["type"], tuple(x["terminals"].items()))
            for x in d["devices"]
        ]
        for x in devices:
            if x.type not in _TYPE_KINDS:
                raise LibraryError(f"{d['name']}: unknown device type {x.type!r}")
        return PrimitiveDef(
            name=d["name"],
            family=d.get("family", d["name"]),
            devices=devices,
            ports=dict(d["ports"]),
            port_symmetries=[tuple(p) for p in d.get("port_symmetries", [])],
            self_symmetric=bool(d.get("self_symmetric", False)),
            internal_constraints=list(d.get("internal_constraints", [])),
            same_polarity=bool(d.get("same_polarity", True)),
            equal_params=[list(g) for g in d.get("equal_params", [])],
            ratio_params=[list(g) for g in d.get("ratio_params", [])],
            interchangeable=[list(g) for g in d.get("interchangeable", [])],
            not_supply=list(d.get("not_supply", [])),
            require_supply=list(d.get("require_supply", [])),
        )
    except KeyError as exc:
        raise LibraryError(f"primitive entry missing field {exc}") from None


def parse_library(data: dict) -> list[PrimitiveDef]:
    if data.get("version") != LIBRARY_VERSION:
        raise LibraryError(f"library version must be {LIBRARY_VERSION}, got {data.get('version')!r}")
    out = []
    for entry in data.get("primitives", []):
        out.extend(_from_dict(e) for e in _expand(entry))
    return out


def load_library(path: str | Path) -> list[PrimitiveDef]:
    return parse_library(json.loads(Path(path).read_text()))


def builtin_library() -> list[PrimitiveDef]:
    text = resources.files("hiersym").joinpath("data/primitives.json").read_text()
    return parse_library(json.loads(text))


# ---------------------------------------------------------------- matching

def _close(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=REL_TOL)


def _params_equal(a: Device, b: Device) -> bool:
    if a.params.keys() != b.params.keys():
        return False
    return all(_close(a.params[k], b.params[k]) for k in a.params)


def _params_ratio(a: Device, b: Device) -> bool:
    """Same length and an integer (or inverse integer) width ratio."""
    for k in set(a.params) | set(b.params):
        if k in ("w", "m", "nf"):
            continue
        if k not in a.params or k not in b.params or not _close(a.params[k], b.params[k]):
            return False
    wa = a.params.get("w", 1.0) * a.params.get("m", 1.0) * a.params.get("nf", 1.0)
    wb = b.params.get("w", 1.0) * b.params.get("m", 1.0) * b.params.get("nf", 1.0)
    r = max(wa, wb) / min(wa, wb)
    return _close(r, round(r))


def _role_nets(dev: Device, ptype: str) -> list[dict[str, str]]:
    """Possible role -> net assignments (passives are orientation-free)."""
    if dev.kind.is_mos:
        return [{r: dev.net(r) for r in ("d", "g", "s")}]
    a, b = dev.net("p"), dev.net("n")
    return [{"p": a, "n": b}, {"p": b, "n": a}]


def find_embeddings(g: CircuitGraph, prim: PrimitiveDef) -> list[dict[str, int]]:
    """All embeddings pattern-device -> element vertex id, canonical up to
    interchangeable device groups."""
    pdevs = prim.devices
    order = _extension_order(pdevs)
    cands_by_type = {}
    for pd in pdevs:
        kinds = _TYPE_KINDS[pd.type]
        cands_by_type[pd.name] = [
            v.id for v in g.elements()
            if isinstance(v.payload, Device) and v.payload.kind in kinds
        ]
    group_of = {}
    for grp in prim.interchangeable:
        for i, name in enumerate(grp):
            group_of[name] = (grp, i)

    results: list[dict[str, int]] = []
    dev_map: dict[str, int] = {}
    net_map: dict[str, str] = {}
    rev_net: dict[str, str] = {}
    used: set[int] = set()

    def extend(k: int) -> None:
        if k == len(order):
            if _accept(g, prim, dev_map, net_map):
                results.append(dict(dev_map))
            return
        pd = pdevs[order[k]]
        pool = None
        for _, pn in pd.terminals:
            if pn in net_map:
                nid = g.net_index.get(net_map[pn])
                pool = sorted(u for u in g.adj(nid) if u in set(cands_by_type[pd.name])) if nid is not None else []
                break
        if pool is None:
            pool = cands_by_type[pd.name]
        for vid in pool:
            if vid in used:
                continue
            dev = g.vertices[vid].payload
            if pd.name in group_of:
                grp, i = group_of[pd.name]
                if i > 0 and grp[i - 1] in dev_map and g.vertices[dev_map[grp[i - 1]]].name >= dev.name:
                    continue
            for assign in _role_nets(dev, pd.type):
                added = []
                ok = True
                for role, pn in pd.terminals:
                    gn = assign[role]
                    if pn in net_map:
                        if net_map[pn] != gn:
                            ok = False
                            break
                    elif gn in rev_net:
                        ok = False
                        break
                    else:
                        net_map[pn] = gn
                        rev_net[gn] = pn
                        added.append(pn)
                if ok:
                    dev_map[pd.name] = vid
                    used.add(vid)
                    extend(k + 1)
                    used.discard(vid)
                    del dev_map[pd.name]
                for pn in added:
                    del rev_net[net_map.pop(pn)]
                if not pd.type.startswith(("mos", "nmos", "pmos")) and assign["p"] == assign["n"]:
                    break

    extend(0)
    return results


def _extension_order(pdevs: list[PatternDevice]) -> list[int]:
    order = [0]
    nets = {n for _, n in pdevs[0].terminals}
    while len(order) < len(pdevs):
        for i, d in enumerate(pdevs):
            if i not in order and nets & {n for _, n in d.terminals}:
                order.append(i)
                nets |= {n for _, n in d.terminals}
                break
    return order


def _accept(g: CircuitGraph, prim: PrimitiveDef, dev_map, net_map) -> bool:
    devs = {name: g.vertices[vid].payload for name, vid in dev_map.items()}
    if prim.same_polarity:
        mos = {d.kind for d in devs.values() if d.kind.is_mos}
        if len(mos) > 1:
            return False
    for pn in prim.not_supply:
        if g.net(net_map[pn]).is_supply:
            return False
    for pn in prim.require_supply:
        if not g.net(net_map[pn]).is_supply:
            return False
    members = set(dev_map.values())
    for pn, gn in net_map.items():
        if pn in prim.ports:
            continue
        nid = g.net_index[gn]
        if g.vertices[nid].is_port or g.vertices[nid].is_supply:
            return False
        if any(u not in members for u in g.adj(nid)):
            return False
    for grp in prim.equal_params:
        ref = devs[grp[0]]
        if not all(_params_equal(ref, devs[x]) for x in grp[1:]):
            return False
    for grp in prim.ratio_params:
        ref = devs[grp[0]]
        if not all(_params_ratio(ref, devs[x]) for x in grp[1:]):
            return False
    return True


def match_primitives(g: CircuitGraph, library: list[PrimitiveDef]) -> list[Supernode]:
    """Maximal non-overlapping primitive matches, deterministically named."""
    found = []
    for lib_idx, prim in enumerate(library):
        for emb in find_embeddings(g, prim):
            names = tuple(sorted(g.vertices[v].name for v in emb.values()))
            found.append((-prim.size, lib_idx, names, prim, emb))
    found.sort(key=lambda t: t[:3])

    taken: set[int] = set()
    chosen = []
    for _, _, _, prim, emb in found:
        ids = set(emb.values())
        if ids & taken:
            continue
        taken |= ids
        chosen.append((prim, emb))

    counters: dict[str, int] = {}
    out = []
    for prim, emb in chosen:
        counters[prim.family] = counters.get(prim.family, 0) + 1
        devs = [g.vertices[emb[pd.name]].payload for pd in prim.devices]
        net_of = {}
        for pd, dev in zip(prim.devices, devs):
            for assign in _role_nets(dev, pd.type):
                if all(net_of.get(pn, assign[r]) == assign[r] for r, pn in pd.terminals):
                    for r, pn in pd.terminals:
                        net_of[pn] = assign[r]
                    break
        pol = next((d.kind.value for d in devs if d.kind.is_mos), "")
        out.append(Supernode(
            name=f"{prim.name}{counters[prim.family]}",
            primitive=prim,
            members=tuple(d.name for d in devs),
            port_nets=tuple((p, net_of[p]) for p in prim.ports),
            polarity=pol,
        ))
    return out


def collapse(g: CircuitGraph, supernodes: list[Supernode]) -> CircuitGraph:
    """Replace each supernode's members by one element vertex wired to its ports."""
    if not supernodes:
        return g
    member_of = {m: sn for sn in supernodes for m in sn.members}
    b = GraphBuilder(g.scope)
    # nets keep their relative order; internal-only nets vanish
    external: set[str] = set()
    for v in g.nets():
        nbr_names = [g.vertices[u].name for u in g.adj(v.id)]
        if v.is_port or v.is_supply or any(n not in member_of for n in nbr_names):
            external.add(v.name)
        elif len({member_of[n].name for n in nbr_names}) > 1:
            external.add(v.name)
    for v in g.nets():
        if v.name in external:
            b.add_net(v.name, v.is_supply, v.is_port)
    emitted: set[str] = set()
    for v in g.elements():
        sn = member_of.get(v.name)
        if sn is None:
            labels = {g.vertices[u].name: lab for u, lab in g.adj(v.id).items()}
            b.add_element(v.name, v.kind, v.payload, labels)
        elif sn.name not in emitted:
            emitted.add(sn.name)
            labels: dict[str, EdgeLabel] = {}
            for port, net in sn.port_nets:
                if net not in external:
                    continue
                lab = EdgeLabel(0, frozenset([port]))
                labels[net] = labels[net].merge(lab) if net in labels else lab
            b.add_element(sn.name, PRIMITIVE, sn, labels)
    return b.build()


# ---------------------------------------------------------------- seeds

@dataclass(frozen=True)
class Seed:
    s1: int
    s2: int
    origin: tuple[str, ...]

    @property
    def pair(self) -> tuple[int, int]:
        return (self.s1, self.s2)


def _supernode_vertices(g: CircuitGraph) -> list[Vertex]:
    return sorted((v for v in g.elements() if v.kind == PRIMITIVE), key=lambda v: v.sort_key)


def _usable(g: CircuitGraph, net: str) -> int | None:
    nid = g.net_index.get(net)
    if nid is None or g.vertices[nid].is_supply:
        return None
    return nid


def seed_candidates(g: CircuitGraph, supernodes=None) -> list[Seed]:
    """Potentially symmetric net pairs from primitive port symmetries and from
    like ports of like primitives (same family and polarity)."""
    seeds: list[Seed] = []
    seen: set[frozenset] = set()

    def add(a: int | None, b: int | None, origin: tuple[str, ...]) -> None:
        if a is None or b is None or a == b:
            return
        key = frozenset((a, b))
        if key in seen:
            return
        seen.add(key)
        seeds.append(Seed(a, b, origin))

    verts = _supernode_vertices(g)
    for v in verts:
        sn: Supernode = v.payload
        for pa, pb in sn.primitive.port_symmetries:
            add(_usable(g, sn.net_of(pa)), _usable(g, sn.net_of(pb)), (sn.name,))
    for i, va in enumerate(verts):
        a: Supernode = va.payload
        for vb in verts[i + 1:]:
            b: Supernode = vb.payload
            if a.family != b.family or a.polarity != b.polarity:
                continue
            classes = list(dict.fromkeys(a.primitive.ports.values()))
            for cls in classes:
                for pa, na in a.port_nets:
                    if a.port_class(pa) != cls:
                        continue
                    for pb, nb in b.port_nets:
                        if b.port_class(pb) == cls:
                            add(_usable(g, na), _usable(g, nb), (a.name, b.name))
    return seeds
