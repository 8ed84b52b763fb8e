"""Built-in study cases.

``ieee39`` is the New England test system reduced to the reactance-only
model used here: the 34 transmission lines keep their standard
positive-sequence reactances; each generator is folded into an equivalent
source at the transmission-side bus, with reactance = machine transient
reactance plus the step-up transformer reactance(s) on its path. Buses
reachable only through transformers (12, 20 and the ten machine buses)
remain in the bus count but carry no lines. All values per unit on 100 MVA.

``toy6`` and ``toy9`` are small meshed systems sized for desk-scale
training experiments: parallel corridors make tripping a diversion path
raise the current through a protected line, so their extreme conditions
are non-trivial.
"""

from __future__ import annotations

from importlib import resources

from .grid import GridCase, Line, Source, parse_case

__all__ = ["two_bus", "three_bus_mesh", "toy6", "toy9", "ieee39", "ring_case", "builtin", "builtin_names"]


def _case(name: str, n: int, lines: list[tuple[int, int, float]], sources: list[tuple[int, float, float]]) -> GridCase:
    return GridCase(
        name=name,
        buses=tuple(range(n)),
        lines=tuple(Line(i, a, b, x) for i, (a, b, x) in enumerate(lines)),
        sources=tuple(Source(bus, emf, x) for bus, emf, x in sources),
    )


def two_bus() -> GridCase:
    """Smallest interesting case: one source, one line."""
    return _case("two-bus", 2, [(0, 1, 0.5)], [(0, 1.0, 0.1)])


def three_bus_mesh() -> GridCase:
    """Source plus a triangle; the classic hand-solvable mesh."""
    return _case(
        "three-bus-mesh",
        3,
        [(0, 1, 0.2), (1, 2, 0.2), (0, 2, 0.5)],
        [(0, 1.0, 0.1)],
    )


def toy6() -> GridCase:
    """6 buses, 8 lines, two sources; a ring with two chords.

    Reactances are deliberately heterogeneous so that distinct trip sets
    produce well-separated currents (few near-ties).
    """
    lines = [
        (0, 1, 0.08),
        (1, 2, 0.17),
        (2, 3, 0.11),
        (3, 4, 0.23),
        (4, 5, 0.09),
        (5, 0, 0.19),
        (1, 4, 0.31),
        (2, 5, 0.27),
    ]
    sources = [(0, 1.0, 0.05), (3, 1.0, 0.11)]
    return _case("toy6", 6, lines, sources)


def toy9() -> GridCase:
    """9 buses, 12 lines, three sources; ring, chords, and a spur."""
    lines = [
        (0, 1, 0.08),
        (1, 2, 0.15),
        (2, 3, 0.11),
        (3, 4, 0.21),
        (4, 5, 0.09),
        (5, 6, 0.17),
        (6, 7, 0.12),
        (7, 0, 0.25),
        (1, 5, 0.33),
        (2, 6, 0.28),
        (3, 8, 0.14),
        (8, 6, 0.22),
    ]
    sources = [(0, 1.0, 0.05), (4, 1.0, 0.09), (8, 1.0, 0.13)]
    return _case("toy9", 9, lines, sources)


# New England 39-bus: (from, to, x) for the 34 transmission lines, 0-based
# bus ids (standard bus number minus one).
_IEEE39_LINES = [
    (0, 1, 0.0411),
    (0, 38, 0.0250),
    (1, 2, 0.0151),
    (1, 24, 0.0086),
    (2, 3, 0.0213),
    (2, 17, 0.0133),
    (3, 4, 0.0128),
    (3, 13, 0.0129),
    (4, 5, 0.0026),
    (4, 7, 0.0112),
    (5, 6, 0.0092),
    (5, 10, 0.0082),
    (6, 7, 0.0046),
    (7, 8, 0.0363),
    (8, 38, 0.0250),
    (9, 10, 0.0043),
    (9, 12, 0.0043),
    (12, 13, 0.0101),
    (13, 14, 0.0217),
    (14, 15, 0.0094),
    (15, 16, 0.0089),
    (15, 18, 0.0195),
    (15, 20, 0.0135),
    (15, 23, 0.0059),
    (16, 17, 0.0082),
    (16, 26, 0.0173),
    (20, 21, 0.0140),
    (21, 22, 0.0096),
    (22, 23, 0.0350),
    (24, 25, 0.0323),
    (25, 26, 0.0147),
    (25, 27, 0.0474),
    (25, 28, 0.0625),
    (27, 28, 0.0151),
]

# Equivalent sources at the transmission-side buses: machine transient
# reactance plus step-up transformer path. 0-based bus ids.
_IEEE39_SOURCES = [
    (1, 1.0, 0.0491),   # G10 via 2-30 transformer
    (5, 1.0, 0.0947),   # G2 via 6-31
    (9, 1.0, 0.0731),   # G3 via 10-32
    (18, 1.0, 0.0578),  # G4 via 19-33
    (18, 1.0, 0.1638),  # G5 via 20-34 and 19-20
    (21, 1.0, 0.0643),  # G6 via 22-35
    (22, 1.0, 0.0762),  # G7 via 23-36
    (24, 1.0, 0.0802),  # G8 via 25-37
    (28, 1.0, 0.0726),  # G9 via 29-38
    (38, 1.0, 0.0060),  # G1 equivalent at bus 39
]


def ieee39() -> GridCase:
    """New England 39-bus system, 34 transmission lines, 10 sources."""
    return _case("ieee39", 39, _IEEE39_LINES, _IEEE39_SOURCES)


def ring_case(n: int, x: float = 0.05) -> GridCase:
    """An n-bus ring with one source; handy for large-id addressing tests."""
    if n < 3:
        raise ValueError("ring needs at least 3 buses")
    lines = [(i, (i + 1) % n, x) for i in range(n)]
    return _case(f"ring{n}", n, lines, [(0, 1.0, 0.1)])


_BUILTIN = {
    "two-bus": two_bus,
    "three-bus-mesh": three_bus_mesh,
    "toy6": toy6,
    "toy9": toy9,
    "ieee39": ieee39,
}


def builtin_names() -> tuple[str, ...]:
    return tuple(sorted(_BUILTIN))


def builtin(name: str) -> GridCase:
    """Load a shipped case by name, preferring the packaged JSON file."""
    if name not in _BUILTIN:
        raise KeyError(f"no builtin case {name!r}; choose from {builtin_names()}")
    try:
        text = resources.files("eocsearch.data").joinpath(f"{name}.json").read_text(encoding="utf-8")
        return parse_case(text)
    except FileNotFoundError:
        return _BUILTIN[name]()
