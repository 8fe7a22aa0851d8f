"""Constraint records, canonical JSON output and a structural re-checker.

Every record carries the ``scope`` (subcircuit) it was found in.  Names are
local to that scope: leaf device or instance names, primitive supernode
names (``CMB1``), supernode names qualified by the net through which they
were paired (``CMB1/out1``), or generated array names (``Dummy1``).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

CONSTRAINT_SCHEMA = 1

EXIT_OK = 0
EXIT_INCONSISTENT = 2
EXIT_STALE = 3


@dataclass(frozen=True)
class SymmetricPair:
    a: str
    b: str
    axis: int = 0
    scope: str = ""

    def __post_init__(self):
        if self.b < self.a:
            a, b = self.b, self.a
            object.__setattr__(self, "a", a)
            object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class SelfSymmetric:
    block: str
    axis: int = 0
    scope: str = ""


@dataclass(frozen=True)
class SymmetricNets:
    net_a: str
    net_b: str
    axis: int = 0
    scope: str = ""

    def __post_init__(self):
        if self.net_b < self.net_a:
            a, b = self.net_b, self.net_a
            object.__setattr__(self, "net_a", a)
            object.__setattr__(self, "net_b", b)


@dataclass(frozen=True)
class ArrayGroup:
    name: str
    members: tuple[str, ...]
    axis: int = 0
    scope: str = ""
    root: str = ""

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(sorted(self.members)))


@dataclass(frozen=True)
class MatchBlocks:
    a: str
    b: str
    kind: str = "EXACT"  # EXACT or APPROX
    score: float = 1.0
    scope: str = ""

    def __post_init__(self):
        if self.b < self.a:
            a, b = self.b, self.a
            object.__setattr__(self, "a", a)
            object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class CommonCentroid:
    devices: tuple[str, ...]
    scope: str = ""

    def __post_init__(self):
        object.__setattr__(self, "devices", tuple(sorted(self.devices)))


KINDS = {c.__name__: c for c in (ArrayGroup, SymmetricPair, SelfSymmetric, SymmetricNets, MatchBlocks, CommonCentroid)}
_ORDER = {name: i for i, name in enumerate(KINDS)}

Constraint = SymmetricPair | SelfSymmetric | SymmetricNets | ArrayGroup | MatchBlocks | CommonCentroid


def to_dict(c: Constraint) -> dict:
    d = asdict(c)
    for k, v in d.items():
        if isinstance(v, tuple):
            d[k] = list(v)
    d["type"] = type(c).__name__
    return d


def from_dict(d: dict) -> Constraint:
    d = dict(d)
    kind = d.pop("type", None)
    if kind not in KINDS:
        raise ValueError(f"unknown constraint type {kind!r}")
    for k, v in d.items():
        if isinstance(v, list):
            d[k] = tuple(v)
    return KINDS[kind](**d)


def _sort_key(c: Constraint):
    return (c.scope, _ORDER[type(c).__name__], json.dumps(to_dict(c), sort_keys=True))


def canonicalize(constraints) -> list[Constraint]:
    """Deduplicated and sorted by (scope, type, content)."""
    return sorted(set(constraints), key=_sort_key)


def dumps(constraints) -> str:
    body = ",".join(json.dumps(to_dict(c), sort_keys=True, separators=(",", ":")) for c in canonicalize(constraints))
    return '{"version":%d,"constraints":[%s]}' % (CONSTRAINT_SCHEMA, body)


def loads(text: str) -> list[Constraint]:
    data = json.loads(text)
    if data.get("version") != CONSTRAINT_SCHEMA:
        raise ValueError(f"unsupported constraint schema {data.get('version')!r}")
    return canonicalize(from_dict(d) for d in data["constraints"])


def emit(constraints, path: str | Path) -> None:
    Path(path).write_text(dumps(constraints) + "\n")


def load(path: str | Path) -> list[Constraint]:
    return loads(Path(path).read_text())


# ---------------------------------------------------------------- verification

@dataclass
class Finding:
    constraint: Constraint
    status: str  # consistent | inconsistent | stale
    reason: str = ""


@dataclass
class VerifyReport:
    findings: list[Finding] = field(default_factory=list)

    def count(self, status: str) -> int:
        return sum(f.status == status for f in self.findings)

    @property
    def exit_code(self) -> int:
        if self.count("inconsistent"):
            return EXIT_INCONSISTENT
        if self.count("stale"):
            return EXIT_STALE
        return EXIT_OK

    def summary(self) -> str:
        lines = [f"{f.status}: {json.dumps(to_dict(f.constraint), sort_keys=True)}"
                 + (f" ({f.reason})" if f.reason else "") for f in self.findings if f.status != "consistent"]
        lines.append(f"{self.count('consistent')} consistent, {self.count('inconsistent')} inconsistent, "
                     f"{self.count('stale')} stale")
        return "\n".join(lines)


def verify(constraints, design, library=None, options=None) -> VerifyReport:
    """Re-check each record against freshly built scope graphs."""
    from .symmetry import verify_constraints

    return verify_constraints(list(constraints), design, library, options)
