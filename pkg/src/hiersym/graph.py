"""Bipartite element/net graph of one hierarchy level.

Element vertices (devices, subcircuit instances, collapsed primitives) are
connected only to net vertices.  MOS edges carry a three-bit gate/source/drain
label; the body terminal never contributes to a label.  Edges to instances
and primitives carry the set of port names landing on the net.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable

from .netlist import Design, Device, DeviceKind, SubcktDef, identify_supply_nets

ELEMENT = "ELEMENT"
NET = "NET"

G_BIT, S_BIT, D_BIT = 4, 2, 1
_ROLE_BIT = {"g": G_BIT, "s": S_BIT, "d": D_BIT}

PRIMITIVE = "PRIMITIVE"


@dataclass(frozen=True, order=True)
class EdgeLabel:
    bits: int = 0
    ports: frozenset = frozenset()

    def merge(self, other: "EdgeLabel") -> "EdgeLabel":
        return EdgeLabel(self.bits | other.bits, self.ports | other.ports)

    @property
    def neutral(self) -> bool:
        return not self.bits and not self.ports

    def __str__(self) -> str:
        if self.bits:
            return "".join(c for c, b in (("g", G_BIT), ("s", S_BIT), ("d", D_BIT)) if self.bits & b)
        if self.ports:
            return ",".join(sorted(self.ports))
        return "-"


NEUTRAL = EdgeLabel()


@dataclass(frozen=True)
class Vertex:
    id: int
    klass: str
    name: str
    kind: str  # device kind value, PRIMITIVE, or NET
    payload: Any = field(default=None, compare=False)
    is_supply: bool = False
    is_port: bool = False

    @property
    def sort_key(self) -> tuple:
        return (self.klass, self.kind, self.name)


class CircuitGraph:
    """Immutable bipartite graph; visited marks are kept by callers."""

    def __init__(self, vertices: Iterable[Vertex], edges: dict, scope: str = ""):
        self.vertices: tuple[Vertex, ...] = tuple(vertices)
        self.scope = scope
        adj: list[dict[int, EdgeLabel]] = [dict() for _ in self.vertices]
        for (a, b), label in edges.items():
            adj[a][b] = label
            adj[b][a] = label
        self._adj = tuple(adj)
        self.element_index = {v.name: v.id for v in self.vertices if v.klass == ELEMENT}
        self.net_index = {v.name: v.id for v in self.vertices if v.klass == NET}

    def __len__(self) -> int:
        return len(self.vertices)

    def adj(self, v: int) -> dict[int, EdgeLabel]:
        return self._adj[v]

    def label(self, a: int, b: int) -> EdgeLabel | None:
        return self._adj[a].get(b)

    def elements(self) -> list[Vertex]:
        return [v for v in self.vertices if v.klass == ELEMENT]

    def nets(self) -> list[Vertex]:
        return [v for v in self.vertices if v.klass == NET]

    def edges(self):
        for a, nbrs in enumerate(self._adj):
            for b, lab in nbrs.items():
                if a < b:
                    yield a, b, lab

    @property
    def num_edges(self) -> int:
        return sum(len(n) for n in self._adj) // 2

    def element(self, name: str) -> Vertex:
        return self.vertices[self.element_index[name]]

    def net(self, name: str) -> Vertex:
        return self.vertices[self.net_index[name]]

    def is_bipartite(self) -> bool:
        return all(self.vertices[a].klass != self.vertices[b].klass for a, b, _ in self.edges())

    def to_dict(self) -> dict:
        return {
            "scope": self.scope,
            "vertices": [
                {"id": v.id, "class": v.klass, "name": v.name, "kind": v.kind,
                 "supply": v.is_supply, "port": v.is_port}
                for v in self.vertices
            ],
            "edges": [[a, b, str(lab)] for a, b, lab in sorted(self.edges(), key=lambda e: (e[0], e[1]))],
        }

    def dump(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def device_edges(dev: Device) -> dict[str, EdgeLabel]:
    """Net name -> merged edge label for one device."""
    out: dict[str, EdgeLabel] = {}
    for role, net in dev.terminals:
        if dev.kind.is_mos:
            if role == "b":
                continue
            lab = EdgeLabel(_ROLE_BIT[role])
        elif dev.kind is DeviceKind.SUBCKT_INSTANCE:
            lab = EdgeLabel(0, frozenset([role]))
        else:
            lab = NEUTRAL
        out[net] = out[net].merge(lab) if net in out else lab
    return out


class GraphBuilder:
    def __init__(self, scope: str = ""):
        self.scope = scope
        self.vertices: list[Vertex] = []
        self.edges: dict[tuple[int, int], EdgeLabel] = {}
        self._nets: dict[str, int] = {}

    def add_net(self, name: str, is_supply: bool = False, is_port: bool = False) -> int:
        if name not in self._nets:
            vid = len(self.vertices)
            self.vertices.append(Vertex(vid, NET, name, NET, name, is_supply, is_port))
            self._nets[name] = vid
        return self._nets[name]

    def add_element(self, name: str, kind: str, payload, net_labels: dict[str, EdgeLabel],
                    supply=frozenset(), ports=frozenset()) -> int:
        vid = len(self.vertices)
        self.vertices.append(Vertex(vid, ELEMENT, name, kind, payload))
        for net, lab in net_labels.items():
            nid = self.add_net(net, net in supply, net in ports)
            key = (min(vid, nid), max(vid, nid))
            self.edges[key] = self.edges[key].merge(lab) if key in self.edges else lab
        return vid

    def build(self) -> CircuitGraph:
        return CircuitGraph(self.vertices, self.edges, self.scope)


def build_graph(scope: SubcktDef, design: Design | None = None, supply: set[str] | None = None) -> CircuitGraph:
    """One element vertex per device or instance and one net vertex per net."""
    if supply is None:
        supply = identify_supply_nets(design) if design is not None else set()
    ports = set(scope.ports)
    b = GraphBuilder(scope.name)
    for net in scope.nets:
        if any(net in d.nets and _labelled(d, net) for d in scope.devices) or net in ports:
            b.add_net(net, net in supply, net in ports)
    for dev in scope.devices:
        b.add_element(dev.name, dev.kind.value, dev, device_edges(dev), supply, ports)
    return b.build()


def _labelled(dev: Device, net: str) -> bool:
    return net in device_edges(dev)


def build_flat_graph(design: Design, name: str, supply: set[str] | None = None) -> CircuitGraph:
    """Graph of the fully flattened leaf devices of subcircuit ``name``."""
    sub = design.subckts[name]
    flat = SubcktDef(name, list(sub.ports), design.flatten(name))
    return build_graph(flat, design, supply)


def is_inert_dummy(g: CircuitGraph, v: Vertex) -> bool:
    dev = v.payload
    if not isinstance(dev, Device) or not dev.kind.is_mos:
        return False
    return all(g.net(dev.net(r)).is_supply for r in ("g", "s", "d"))


def remove_inert_dummies(g: CircuitGraph) -> CircuitGraph:
    """Drop MOS devices whose gate, source and drain all sit on supply nets."""
    drop = {v.id for v in g.elements() if is_inert_dummy(g, v)}
    if not drop:
        return g
    return subgraph_without(g, drop)


def subgraph_without(g: CircuitGraph, drop: set[int]) -> CircuitGraph:
    remap: dict[int, int] = {}
    verts = []
    for v in g.vertices:
        if v.id in drop:
            continue
        remap[v.id] = len(verts)
        verts.append(Vertex(len(verts), v.klass, v.name, v.kind, v.payload, v.is_supply, v.is_port))
    edges = {(remap[a], remap[b]): lab for a, b, lab in g.edges() if a in remap and b in remap}
    return CircuitGraph(verts, edges, g.scope)


def neighbors(g: CircuitGraph, v: int, visited=frozenset()) -> list[tuple[int, EdgeLabel]]:
    """Unvisited, non-supply neighbors of ``v`` in canonical order."""
    out = [
        (u, lab) for u, lab in g.adj(v).items()
        if u not in visited and not g.vertices[u].is_supply
    ]
    out.sort(key=lambda t: g.vertices[t[0]].sort_key)
    return out
