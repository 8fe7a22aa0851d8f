"""SPICE-subset netlist reader and writer.

Grammar (one card per logical line, ``+`` continues the previous line,
``*`` starts a comment line and ``;`` starts a trailing comment)::

    Mxxx d g s b <nmos|pmos|nch|pch|nfet|pfet> [k=v ...]
    Rxxx a b <value> [k=v ...]
    Cxxx a b <value> [k=v ...]
    Lxxx a b <value> [k=v ...]
    Xxxx n1 n2 ... <subckt> [k=v ...]
    .subckt <name> p1 p2 ...
    .ends [name]
    .global n1 n2 ...
    .end

Cards outside any ``.subckt`` form an implicit top-level subcircuit named
``TOP``.  Without such cards the top is the subcircuit no other subcircuit
instantiates (the last one defined if several qualify).
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from enum import Enum

log = logging.getLogger(__name__)

TOP_NAME = "TOP"

_IDENT = re.compile(r"^[A-Za-z0-9_]+$")
_NUMBER = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)([A-Za-z]*)$")

# "meg" must be checked as a whole word before "m".
SI_SUFFIXES = {
    "": 1.0,
    "f": 1e-15,
    "p": 1e-12,
    "n": 1e-9,
    "u": 1e-6,
    "m": 1e-3,
    "k": 1e3,
    "meg": 1e6,
    "g": 1e9,
}

_MOS_MODELS = {
    "nmos": "NMOS", "nch": "NMOS", "nfet": "NMOS",
    "pmos": "PMOS", "pch": "PMOS", "pfet": "PMOS",
}

_SUPPLY_PREFIXES = ("vdd", "vss", "gnd", "vcc", "avdd", "avss")


class DeviceKind(str, Enum):
    NMOS = "NMOS"
    PMOS = "PMOS"
    RES = "RES"
    CAP = "CAP"
    IND = "IND"
    SUBCKT_INSTANCE = "SUBCKT_INSTANCE"

    @property
    def is_mos(self) -> bool:
        return self in (DeviceKind.NMOS, DeviceKind.PMOS)

    @property
    def is_passive(self) -> bool:
        return self in (DeviceKind.RES, DeviceKind.CAP, DeviceKind.IND)


MOS_ROLES = ("d", "g", "s", "b")
PASSIVE_ROLES = ("p", "n")
_PASSIVE_VALUE_PARAM = {DeviceKind.RES: "r", DeviceKind.CAP: "c", DeviceKind.IND: "l"}
_PASSIVE_KIND = {"R": DeviceKind.RES, "C": DeviceKind.CAP, "L": DeviceKind.IND}


class NetlistError(Exception):
    """Raised for any malformed or unresolvable netlist."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


@dataclass(frozen=True)
class Device:
    name: str
    kind: DeviceKind
    terminals: tuple[tuple[str, str], ...]
    params: dict = field(default_factory=dict, compare=True, hash=False)
    subckt: str | None = None  # referenced definition, instances only

    def net(self, role: str) -> str:
        for r, n in self.terminals:
            if r == role:
                return n
        raise KeyError(role)

    @property
    def nets(self) -> list[str]:
        return [n for _, n in self.terminals]


@dataclass
class SubcktDef:
    name: str
    ports: list[str]
    devices: list[Device] = field(default_factory=list)

    @property
    def nets(self) -> list[str]:
        """Ports first, then local nets in order of first use."""
        seen = dict.fromkeys(self.ports)
        for d in self.devices:
            for n in d.nets:
                seen.setdefault(n)
        return list(seen)

    @property
    def local_nets(self) -> list[str]:
        ports = set(self.ports)
        return [n for n in self.nets if n not in ports]

    def device(self, name: str) -> Device:
        for d in self.devices:
            if d.name == name:
                return d
        raise KeyError(name)


@dataclass
class Design:
    subckts: dict[str, SubcktDef]
    top: str
    global_nets: set[str] = field(default_factory=set)

    @property
    def top_subckt(self) -> SubcktDef:
        return self.subckts[self.top]

    def bottom_up(self, root: str | None = None) -> list[str]:
        """Subcircuit names reachable from ``root`` in post-order (children first)."""
        order: list[str] = []
        seen: set[str] = set()

        def visit(name: str) -> None:
            if name in seen:
                return
            seen.add(name)
            for d in self.subckts[name].devices:
                if d.kind is DeviceKind.SUBCKT_INSTANCE:
                    visit(d.subckt)
            order.append(name)

        visit(root or self.top)
        return order

    def flatten(self, name: str, prefix: str = "") -> list[Device]:
        """Leaf devices of ``name`` with instance paths joined by ``/``.

        Nets local to an instance are renamed ``path/net``; port nets are
        mapped to the parent's actual nets.
        """
        return _flatten(self, name, prefix, None)


def _flatten(design: Design, name: str, prefix: str, net_map: dict | None) -> list[Device]:
    sub = design.subckts[name]
    net_map = net_map or {p: p for p in sub.ports}

    def rename(n: str) -> str:
        if n in net_map:
            return net_map[n]
        if n in design.global_nets or _is_ground(n):
            return n
        return prefix + n

    out: list[Device] = []
    for d in sub.devices:
        terms = tuple((r, rename(n)) for r, n in d.terminals)
        if d.kind is DeviceKind.SUBCKT_INSTANCE:
            child = design.subckts[d.subckt]
            child_map = {p: n for p, (_, n) in zip(child.ports, terms)}
            out.extend(_flatten(design, d.subckt, prefix + d.name + "/", child_map))
        else:
            out.append(Device(prefix + d.name, d.kind, terms, dict(d.params)))
    return out


def _is_ground(net: str) -> bool:
    return net == "0"


def parse_value(token: str, line: int | None = None, column: int | None = None) -> float:
    """Parse a number with an optional SI suffix into base units."""
    m = _NUMBER.match(token)
    if not m:
        raise NetlistError(f"malformed number {token!r}", line, column)
    mantissa, suffix = m.groups()
    key = suffix.lower()
    if key not in SI_SUFFIXES:
        raise NetlistError(f"unknown SI suffix {suffix!r} in {token!r}", line, column)
    return float(mantissa) * SI_SUFFIXES[key]


def format_value(value: float) -> str:
    return repr(float(value))


def _check_ident(tok: str, line: int, col: int) -> None:
    if not _IDENT.match(tok):
        raise NetlistError(f"invalid identifier {tok!r}", line, col)


def _logical_lines(text: str):
    """Yield (line_no, [(token, column), ...]) with continuations joined."""
    current: list[tuple[str, int]] | None = None
    start = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split(";", 1)[0]
        stripped = body.strip()
        if not stripped or stripped.startswith("*"):
            continue
        toks = [(m.group(0), m.start() + 1) for m in re.finditer(r"\S+", body)]
        if stripped.startswith("+"):
            if current is None:
                raise NetlistError("continuation line without a card", lineno, 1)
            first, col = toks[0]
            rest = [(first[1:], col + 1)] if len(first) > 1 else []
            current.extend(rest + toks[1:])
            continue
        if current is not None:
            yield start, current
        current, start = toks, lineno
    if current is not None:
        yield start, current


def _parse_params(toks, lineno) -> dict:
    params = {}
    for tok, col in toks:
        if "=" not in tok:
            raise NetlistError(f"expected key=value, got {tok!r}", lineno, col)
        key, _, val = tok.partition("=")
        key = key.lower()
        _check_ident(key, lineno, col)
        if key in params:
            raise NetlistError(f"duplicate parameter {key!r}", lineno, col)
        value = parse_value(val, lineno, col + len(key) + 1)
        if not math.isfinite(value) or value <= 0:
            raise NetlistError(f"parameter {key}={val} must be finite and positive", lineno, col)
        params[key] = value
    return params


def _split_positional(toks):
    for i, (tok, _) in enumerate(toks):
        if "=" in tok:
            return toks[:i], toks[i:]
    return toks, []


def _parse_device(toks, lineno) -> tuple[Device, int]:
    name, col = toks[0]
    _check_ident(name, lineno, col)
    letter = name[0].upper()
    pos, kv = _split_positional(toks[1:])
    for tok, c in pos[:-1]:  # the last field is a model, value or subckt name
        _check_ident(tok, lineno, c)
    # D cards with a MOS model are dummy transistors; diodes are not modelled
    is_dummy = letter == "D" and len(pos) == 5 and pos[4][0].lower() in _MOS_MODELS
    if letter == "M" or is_dummy:
        if len(pos) != 5:
            raise NetlistError(f"MOS card {name} needs 4 nets and a model, got {len(pos)} fields", lineno, col)
        model = pos[4][0].lower()
        if model not in _MOS_MODELS:
            raise NetlistError(f"unknown MOS model {pos[4][0]!r}", lineno, pos[4][1])
        terms = tuple(zip(MOS_ROLES, (t for t, _ in pos[:4])))
        return Device(name, DeviceKind(_MOS_MODELS[model]), terms, _parse_params(kv, lineno)), lineno
    if letter in _PASSIVE_KIND:
        kind = _PASSIVE_KIND[letter]
        if len(pos) != 3:
            raise NetlistError(f"{kind.value} card {name} needs 2 nets and a value", lineno, col)
        params = _parse_params(kv, lineno)
        value = parse_value(pos[2][0], lineno, pos[2][1])
        if not math.isfinite(value) or value <= 0:
            raise NetlistError(f"value of {name} must be finite and positive", lineno, pos[2][1])
        params[_PASSIVE_VALUE_PARAM[kind]] = value
        terms = tuple(zip(PASSIVE_ROLES, (pos[0][0], pos[1][0])))
        return Device(name, kind, terms, params), lineno
    if letter == "X":
        if len(pos) < 1:
            raise NetlistError(f"instance {name} has no subcircuit name", lineno, col)
        # Terminal roles are filled in once the definition is known.
        nets = tuple(("", t) for t, _ in pos[:-1])
        return Device(name, DeviceKind.SUBCKT_INSTANCE, nets, _parse_params(kv, lineno), pos[-1][0]), lineno
    raise NetlistError(f"unsupported card {name!r}", lineno, col)


def parse_netlist(text: str) -> Design:
    subckts: dict[str, SubcktDef] = {}
    global_nets: set[str] = set()
    top = SubcktDef(TOP_NAME, [])
    current: SubcktDef | None = None
    where: dict[tuple[str, str], int] = {}  # (subckt, device) -> line
    sub_line: dict[str, int] = {}

    for lineno, toks in _logical_lines(text):
        head, col = toks[0]
        low = head.lower()
        if low.startswith("."):
            if low == ".subckt":
                if current is not None:
                    raise NetlistError("nested .subckt", lineno, col)
                if len(toks) < 2:
                    raise NetlistError(".subckt needs a name", lineno, col)
                name = toks[1][0]
                _check_ident(name, lineno, toks[1][1])
                if name in subckts or name == TOP_NAME:
                    raise NetlistError(f"duplicate definition of subckt {name!r}", lineno, toks[1][1])
                ports = []
                for tok, c in toks[2:]:
                    _check_ident(tok, lineno, c)
                    if tok in ports:
                        raise NetlistError(f"duplicate port {tok!r}", lineno, c)
                    ports.append(tok)
                current = SubcktDef(name, ports)
                sub_line[name] = lineno
            elif low == ".ends":
                if current is None:
                    raise NetlistError(".ends without .subckt", lineno, col)
                if len(toks) > 1 and toks[1][0] != current.name:
                    raise NetlistError(f".ends {toks[1][0]} closes {current.name}", lineno, toks[1][1])
                subckts[current.name] = current
                current = None
            elif low == ".global":
                for tok, c in toks[1:]:
                    _check_ident(tok, lineno, c)
                    global_nets.add(tok)
            elif low == ".end":
                break
            else:
                raise NetlistError(f"unsupported directive {head!r}", lineno, col)
            continue
        dev, _ = _parse_device(toks, lineno)
        target = current or top
        if (target.name, dev.name) in where:
            raise NetlistError(f"duplicate device {dev.name!r} in {target.name}", lineno, col)
        where[(target.name, dev.name)] = lineno
        target.devices.append(dev)

    if current is not None:
        raise NetlistError(f"missing .ends for subckt {current.name!r}")

    if top.devices:
        subckts[TOP_NAME] = top
    for sub in subckts.values():
        resolved = []
        for dev in sub.devices:
            if dev.kind is DeviceKind.SUBCKT_INSTANCE:
                line = where[(sub.name, dev.name)]
                ref = subckts.get(dev.subckt)
                if ref is None:
                    raise NetlistError(f"unresolved subckt reference {dev.subckt!r} in {dev.name}", line)
                if len(ref.ports) != len(dev.terminals):
                    raise NetlistError(
                        f"arity mismatch: {dev.name} connects {len(dev.terminals)} nets, "
                        f"{ref.name} has {len(ref.ports)} ports", line)
                terms = tuple((p, n) for p, (_, n) in zip(ref.ports, dev.terminals))
                dev = Device(dev.name, dev.kind, terms, dev.params, dev.subckt)
            resolved.append(dev)
        sub.devices = resolved

    if not subckts:
        raise NetlistError("netlist defines no devices")
    if top.devices:
        top_name = TOP_NAME
    else:
        used = {d.subckt for s in subckts.values() for d in s.devices if d.subckt}
        roots = [n for n in subckts if n not in used]
        if not roots:
            raise NetlistError("recursive subckt instantiation")
        top_name = roots[-1]
    design = Design(subckts, top_name, global_nets)
    _check_recursion(design)
    return design


def _check_recursion(design: Design) -> None:
    state: dict[str, int] = {}

    def visit(name: str, path: tuple[str, ...]) -> None:
        if state.get(name) == 2:
            return
        if state.get(name) == 1:
            raise NetlistError("recursive subckt instantiation: " + " -> ".join(path + (name,)))
        state[name] = 1
        for d in design.subckts[name].devices:
            if d.subckt:
                visit(d.subckt, path + (name,))
        state[name] = 2

    for name in design.subckts:
        visit(name, ())


def emit_netlist(design: Design) -> str:
    """Render ``design`` back to the accepted grammar."""
    lines: list[str] = []
    if design.global_nets:
        lines.append(".global " + " ".join(sorted(design.global_nets)))

    def card(d: Device) -> str:
        if d.kind.is_mos:
            model = d.kind.value.lower()
            extra = " ".join(f"{k}={format_value(v)}" for k, v in d.params.items())
            return " ".join([d.name, *d.nets, model] + ([extra] if extra else []))
        if d.kind.is_passive:
            vkey = _PASSIVE_VALUE_PARAM[d.kind]
            rest = [f"{k}={format_value(v)}" for k, v in d.params.items() if k != vkey]
            return " ".join([d.name, *d.nets, format_value(d.params[vkey]), *rest])
        rest = [f"{k}={format_value(v)}" for k, v in d.params.items()]
        return " ".join([d.name, *d.nets, d.subckt, *rest])

    for name, sub in design.subckts.items():
        if name == TOP_NAME:
            continue
        lines.append(f".subckt {name} " + " ".join(sub.ports))
        lines.extend(card(d) for d in sub.devices)
        lines.append(f".ends {name}")
    if TOP_NAME in design.subckts:
        lines.extend(card(d) for d in design.subckts[TOP_NAME].devices)
    lines.append(".end")
    return "\n".join(lines) + "\n"


def is_supply_name(net: str) -> bool:
    low = net.lower()
    return low == "0" or low.startswith(_SUPPLY_PREFIXES)


def identify_supply_nets(design: Design, overrides=()) -> set[str]:
    """Supply/ground nets by naming convention plus explicit overrides."""
    nets: set[str] = set(design.global_nets)
    for sub in design.subckts.values():
        nets.update(sub.nets)
    found = {n for n in nets if is_supply_name(n)} | set(overrides)
    if not found:
        log.warning("no supply or ground nets identified; pass overrides")
    return found
