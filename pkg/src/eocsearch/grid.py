"""Per-unit network data model, topology states, and the JSON case format.

The network model is deliberately minimal: buses are contiguous integers,
lines carry a single positive-sequence reactance, and sources are EMFs
behind a reactance. Everything is per-unit; no base-MVA conversion happens
anywhere in this package.

Case file format (UTF-8 JSON)::

    {
      "name": "my-case",
      "buses": 5,
      "lines":   [{"id": 0, "from": 0, "to": 1, "x": 0.1}, ...],
      "sources": [{"bus": 0, "emf": 1.0, "x": 0.05}, ...]
    }

Bus ids are implied 0..buses-1. Parallel lines (two lines sharing the same
unordered endpoint pair) are rejected; merge them before writing the file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CaseError",
    "Line",
    "Source",
    "RelayPoint",
    "GridCase",
    "TopologyState",
    "parse_case",
    "serialize_case",
    "load_case",
    "apply_trip",
    "components",
]


class CaseError(ValueError):
    """Raised when a case document or a constructed case violates the format."""


@dataclass(frozen=True)
class Line:
    """A transmission line with a lumped positive-sequence reactance.

    Attributes:
        id: Line index, 0..m-1, unique per case.
        from_bus: One endpoint (bus id).
        to_bus: The other endpoint (bus id), distinct from ``from_bus``.
        reactance_pu: Positive series reactance in per unit.
    """

    id: int
    from_bus: int
    to_bus: int
    reactance_pu: float

    def __post_init__(self) -> None:
        if self.from_bus == self.to_bus:
            raise CaseError(f"line {self.id}: endpoints must differ, got bus {self.from_bus} twice")
        if not self.reactance_pu > 0:
            raise CaseError(f"line {self.id}: reactance must be > 0, got {self.reactance_pu}")

    def other_end(self, bus: int) -> int:
        """Return the endpoint opposite to ``bus``."""
        return self.to_bus if bus == self.from_bus else self.from_bus


@dataclass(frozen=True)
class Source:
    """An EMF behind a reactance, tied to a bus.

    Attributes:
        bus: Bus the source is connected to.
        emf_pu: Source EMF magnitude in per unit (> 0).
        reactance_pu: Source reactance in per unit (> 0).
    """

    bus: int
    emf_pu: float
    reactance_pu: float

    def __post_init__(self) -> None:
        if not self.emf_pu > 0:
            raise CaseError(f"source at bus {self.bus}: emf must be > 0, got {self.emf_pu}")
        if not self.reactance_pu > 0:
            raise CaseError(f"source at bus {self.bus}: reactance must be > 0, got {self.reactance_pu}")


@dataclass(frozen=True)
class RelayPoint:
    """A protection location: one terminal of one line.

    The relay sits at ``relay_bus`` (the head end); the fault studied for
    this relay is a three-phase bolted fault at ``fault_bus`` (the tail
    end, i.e. the opposite terminal of the protected line).

    Attributes:
        line_id: The protected line.
        terminal: Which terminal hosts the relay, ``"from"`` or ``"to"``.
        relay_bus: Bus at the relay terminal.
        fault_bus: Bus at the opposite terminal.
    """

    line_id: int
    terminal: str
    relay_bus: int
    fault_bus: int

    def __post_init__(self) -> None:
        if self.terminal not in ("from", "to"):
            raise CaseError(f"relay on line {self.line_id}: terminal must be 'from' or 'to', got {self.terminal!r}")


@dataclass(frozen=True)
class GridCase:
    """Immutable per-unit network description.

    Invariants enforced at construction: contiguous bus ids, valid line
    endpoints, no parallel lines, positive reactances and EMFs, at least
    one source. Relay points are derived automatically, two per line (one
    per terminal), so ``len(case.relays) == 2 * case.m``.

    Instances are hashable and safe to share between threads.
    """

    name: str
    buses: tuple[int, ...]
    lines: tuple[Line, ...]
    sources: tuple[Source, ...]
    relays: tuple[RelayPoint, ...] = field(init=False)

    def __post_init__(self) -> None:
        n = len(self.buses)
        if self.buses != tuple(range(n)):
            raise CaseError("bus ids must be the contiguous range 0..n-1")
        if not self.sources:
            raise CaseError("case must contain at least one source")
        seen_pairs: dict[tuple[int, int], int] = {}
        for idx, line in enumerate(self.lines):
            if line.id != idx:
                raise CaseError(f"lines[{idx}]: id must equal position, got {line.id}")
            for end in (line.from_bus, line.to_bus):
                if not 0 <= end < n:
                    raise CaseError(f"line {line.id}: endpoint {end} is not a bus of this {n}-bus case")
            pair = (min(line.from_bus, line.to_bus), max(line.from_bus, line.to_bus))
            if pair in seen_pairs:
                raise CaseError(
                    f"line {line.id}: parallel to line {seen_pairs[pair]} "
                    f"(both join buses {pair[0]} and {pair[1]}); merge parallel lines first"
                )
            seen_pairs[pair] = line.id
        for src in self.sources:
            if not 0 <= src.bus < n:
                raise CaseError(f"source bus {src.bus} is not a bus of this {n}-bus case")
        relays = []
        for line in self.lines:
            relays.append(RelayPoint(line.id, "from", line.from_bus, line.to_bus))
            relays.append(RelayPoint(line.id, "to", line.to_bus, line.from_bus))
        object.__setattr__(self, "relays", tuple(relays))

    @property
    def n(self) -> int:
        """Number of buses."""
        return len(self.buses)

    @property
    def m(self) -> int:
        """Number of lines."""
        return len(self.lines)

    def relay(self, line_id: int, terminal: str) -> RelayPoint:
        """Look up the relay point for a line terminal."""
        if not 0 <= line_id < self.m:
            raise CaseError(f"no line {line_id} in case {self.name!r} (m={self.m})")
        if terminal not in ("from", "to"):
            raise CaseError(f"terminal must be 'from' or 'to', got {terminal!r}")
        return self.relays[2 * line_id + (0 if terminal == "from" else 1)]


@dataclass(frozen=True)
class TopologyState:
    """In/out-of-service bitvector over the lines of one case.

    ``status[i] == 1`` means line ``i`` is in service. Instances are
    immutable values; :func:`apply_trip` returns modified copies.
    """

    status: tuple[int, ...]

    def __post_init__(self) -> None:
        if any(s not in (0, 1) for s in self.status):
            raise CaseError("topology status entries must be 0 or 1")

    @classmethod
    def all_in_service(cls, m: int) -> "TopologyState":
        return cls(status=(1,) * m)

    @classmethod
    def with_outages(cls, m: int, out_lines) -> "TopologyState":
        out = set(out_lines)
        return cls(status=tuple(0 if i in out else 1 for i in range(m)))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.status, dtype=np.uint8)

    def in_service(self, line_id: int) -> bool:
        return self.status[line_id] == 1

    def out_lines(self) -> tuple[int, ...]:
        """Ids of out-of-service lines, ascending."""
        return tuple(i for i, s in enumerate(self.status) if s == 0)

    def out_of_service_vector(self) -> tuple[int, ...]:
        """Complement view: 1 = out of service (the labeling convention
        used by enumeration datasets and the guide network)."""
        return tuple(1 - s for s in self.status)

    def __len__(self) -> int:
        return len(self.status)


def apply_trip(state: TopologyState, line_id: int) -> TopologyState:
    """Return a copy of ``state`` with ``line_id`` out of service.

    Tripping an already-out line is a no-op (the same state value is
    returned). The input is never mutated.
    """
    if not 0 <= line_id < len(state):
        raise CaseError(f"line id {line_id} out of range for m={len(state)}")
    if state.status[line_id] == 0:
        return state
    status = list(state.status)
    status[line_id] = 0
    return TopologyState(status=tuple(status))


def components(case: GridCase, state: TopologyState) -> tuple[int, ...]:
    """Label each bus with its connected component under ``state``.

    Buses joined by in-service lines share a label; the label is the
    smallest bus id in the component, which makes the output deterministic
    and permutation-checkable.
    """
    if len(state) != case.m:
        raise CaseError(f"state has {len(state)} entries but case has {case.m} lines")
    n = case.n
    adj: list[list[int]] = [[] for _ in range(n)]
    for line in case.lines:
        if state.status[line.id]:
            adj[line.from_bus].append(line.to_bus)
            adj[line.to_bus].append(line.from_bus)
    labels = [-1] * n
    for start in range(n):
        if labels[start] != -1:
            continue
        stack = [start]
        labels[start] = start
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if labels[v] == -1:
                    labels[v] = start
                    stack.append(v)
    return tuple(labels)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise CaseError(message)


def parse_case(document: str) -> GridCase:
    """Parse a JSON case document into a validated :class:`GridCase`.

    Raises:
        CaseError: on malformed JSON, missing or mistyped keys, dangling
            bus references, duplicate endpoint pairs, or non-positive
            reactances/EMFs. Messages carry the offending location.
    """
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise CaseError(f"case document is not valid JSON: {exc}") from None
    _require(isinstance(doc, dict), "case document must be a JSON object")
    for key in ("name", "buses", "lines", "sources"):
        _require(key in doc, f"case document is missing the {key!r} key")
    _require(isinstance(doc["name"], str), "'name' must be a string")
    _require(isinstance(doc["buses"], int) and not isinstance(doc["buses"], bool), "'buses' must be an integer")
    _require(doc["buses"] >= 1, f"'buses' must be >= 1, got {doc['buses']}")
    _require(isinstance(doc["lines"], list), "'lines' must be an array")
    _require(isinstance(doc["sources"], list), "'sources' must be an array")

    lines = []
    for idx, entry in enumerate(doc["lines"]):
        _require(isinstance(entry, dict), f"lines[{idx}] must be an object")
        for key in ("id", "from", "to", "x"):
            _require(key in entry, f"lines[{idx}] is missing the {key!r} key")
        _require(entry["id"] == idx, f"lines[{idx}]: id must be {idx}, got {entry['id']}")
        try:
            lines.append(
                Line(
                    id=int(entry["id"]),
                    from_bus=int(entry["from"]),
                    to_bus=int(entry["to"]),
                    reactance_pu=float(entry["x"]),
                )
            )
        except CaseError as exc:
            raise CaseError(f"lines[{idx}]: {exc}") from None
        except (TypeError, ValueError):
            raise CaseError(f"lines[{idx}]: fields have wrong types") from None

    sources = []
    for idx, entry in enumerate(doc["sources"]):
        _require(isinstance(entry, dict), f"sources[{idx}] must be an object")
        for key in ("bus", "emf", "x"):
            _require(key in entry, f"sources[{idx}] is missing the {key!r} key")
        try:
            sources.append(
                Source(bus=int(entry["bus"]), emf_pu=float(entry["emf"]), reactance_pu=float(entry["x"]))
            )
        except CaseError as exc:
            raise CaseError(f"sources[{idx}]: {exc}") from None
        except (TypeError, ValueError):
            raise CaseError(f"sources[{idx}]: fields have wrong types") from None

    return GridCase(
        name=doc["name"],
        buses=tuple(range(doc["buses"])),
        lines=tuple(lines),
        sources=tuple(sources),
    )


def serialize_case(case: GridCase) -> str:
    """Serialize a case back to its canonical JSON document.

    Round-trips exactly: ``parse_case(serialize_case(c)) == c``.
    """
    doc = {
        "name": case.name,
        "buses": case.n,
        "lines": [
            {"id": line.id, "from": line.from_bus, "to": line.to_bus, "x": line.reactance_pu}
            for line in case.lines
        ],
        "sources": [
            {"bus": src.bus, "emf": src.emf_pu, "x": src.reactance_pu} for src in case.sources
        ],
    }
    return json.dumps(doc, indent=2)


def load_case(path) -> GridCase:
    """Read and parse a case file from disk."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_case(fh.read())
