"""Shared generators and independent oracles for the test suite.

Oracles here deliberately avoid the library's own code paths: connectivity
uses union-find (the library uses BFS), distances use Floyd-Warshall (the
library uses Dijkstra), susceptance uses the incidence-matrix formula (the
library stamps element-wise), and fault currents come from a direct nodal
solve with the faulted node's voltage forced to zero (the library uses
Z-bus superposition).
"""

from __future__ import annotations

import numpy as np

from eocsearch.grid import GridCase, Line, Source, TopologyState


def make_case(name, n, lines, sources) -> GridCase:
    return GridCase(
        name=name,
        buses=tuple(range(n)),
        lines=tuple(Line(i, a, b, x) for i, (a, b, x) in enumerate(lines)),
        sources=tuple(Source(bus, emf, x) for bus, emf, x in sources),
    )


def random_connected_case(n, extra_lines, rng, n_sources=2, dyadic=False, name="random") -> GridCase:
    """Random connected case: a random spanning tree plus extra chords.

    With ``dyadic=True`` all reactances are multiples of 1/1024 so path
    sums are exact in floating point (used where oracles must match
    bit-for-bit regardless of summation order).
    """

    def draw_x():
        if dyadic:
            return int(rng.integers(1, 513)) / 1024.0
        return float(rng.uniform(0.01, 0.5))

    pairs = set()
    lines = []
    order = rng.permutation(n)
    for i in range(1, n):
        a = int(order[i])
        b = int(order[int(rng.integers(0, i))])
        pairs.add((min(a, b), max(a, b)))
        lines.append((a, b, draw_x()))
    attempts = 0
    while len(lines) < n - 1 + extra_lines and attempts < 50 * extra_lines + 100:
        attempts += 1
        a, b = int(rng.integers(0, n)), int(rng.integers(0, n))
        if a == b or (min(a, b), max(a, b)) in pairs:
            continue
        pairs.add((min(a, b), max(a, b)))
        lines.append((a, b, draw_x()))
    src_buses = rng.choice(n, size=min(n_sources, n), replace=False)
    sources = [(int(b), 1.0, draw_x() if not dyadic else float(rng.uniform(0.02, 0.2))) for b in src_buses]
    return make_case(name, n, lines, sources)


def random_radial_case(rng, max_len=8) -> tuple[GridCase, int]:
    """A source at bus 0 feeding a chain; returns (case, last line id)."""
    length = int(rng.integers(1, max_len + 1))
    lines = [(i, i + 1, float(rng.uniform(0.05, 0.6))) for i in range(length)]
    case = make_case("radial", length + 1, lines, [(0, 1.0, float(rng.uniform(0.02, 0.3)))])
    return case, length - 1


def random_state(case: GridCase, rng, max_out, keep_in=()) -> TopologyState:
    """Random topology with up to max_out lines out, keeping ``keep_in`` in service."""
    eligible = [i for i in range(case.m) if i not in set(keep_in)]
    n_out = int(rng.integers(0, min(max_out, len(eligible)) + 1))
    out = rng.choice(len(eligible), size=n_out, replace=False) if n_out else []
    return TopologyState.with_outages(case.m, [eligible[int(i)] for i in out])


# ---------------------------------------------------------------------------
# independent oracles


def union_find_components(case: GridCase, state: TopologyState) -> tuple[int, ...]:
    parent = list(range(case.n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for line in case.lines:
        if state.status[line.id]:
            ra, rb = find(line.from_bus), find(line.to_bus)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    return tuple(find(b) for b in range(case.n))


def floyd_warshall_distances(case: GridCase, state: TopologyState, cap: float) -> np.ndarray:
    n = case.n
    D = np.full((n, n), np.inf)
    np.fill_diagonal(D, 0.0)
    for line in case.lines:
        if state.status[line.id]:
            i, j = line.from_bus, line.to_bus
            D[i, j] = min(D[i, j], line.reactance_pu)
            D[j, i] = D[i, j]
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if D[i, k] + D[k, j] < D[i, j]:
                    D[i, j] = D[i, k] + D[k, j]
    D[np.isinf(D)] = cap
    return D


def incidence_susceptance(case: GridCase, state: TopologyState) -> np.ndarray:
    """B = A^T diag(1/x) A + diag(source shunts) via the incidence matrix."""
    live = [line for line in case.lines if state.status[line.id]]
    A = np.zeros((len(live), case.n))
    y = np.zeros(len(live))
    for row, line in enumerate(live):
        A[row, line.from_bus] = 1.0
        A[row, line.to_bus] = -1.0
        y[row] = 1.0 / line.reactance_pu
    B = A.T @ np.diag(y) @ A
    for src in case.sources:
        B[src.bus, src.bus] += 1.0 / src.reactance_pu
    return B


def nodal_solve_fault_current(case: GridCase, state: TopologyState, relay) -> float:
    """Direct post-fault nodal solve: V at the faulted bus pinned to zero.

    Sources are Norton equivalents (injection E/X_s with the shunt already
    in B); the faulted node's equation is replaced by V_f = 0, and the
    current through the protected line is (V_h - V_f) / x.
    """
    labels = union_find_components(case, state)
    f, h = relay.fault_bus, relay.relay_bus
    source_labels = {labels[s.bus] for s in case.sources}
    if labels[f] not in source_labels:
        return 0.0
    B = incidence_susceptance(case, state)
    rhs = np.zeros(case.n)
    for src in case.sources:
        rhs[src.bus] += 1.0 / src.reactance_pu  # E = 1.0 flat
    B = B.copy()
    B[f, :] = 0.0
    B[f, f] = 1.0
    rhs[f] = 0.0
    # keep rows of buses outside f's component well-posed: pin them too
    for bus in range(case.n):
        if labels[bus] != labels[f]:
            B[bus, :] = 0.0
            B[bus, bus] = 1.0
            rhs[bus] = 0.0
    V = np.linalg.solve(B, rhs)
    x = case.lines[relay.line_id].reactance_pu
    return abs(V[h] - V[f]) / x


def finite_difference_grads(loss_fn, arrays, picks, h=1e-5):
    """Central finite differences of ``loss_fn()`` w.r.t. chosen entries.

    ``picks`` is a list of (array_index, flat_index); returns the FD
    gradient for each pick.
    """
    grads = []
    for ai, fi in picks:
        arr = arrays[ai]
        orig = arr.flat[fi]
        arr.flat[fi] = orig + h
        up = loss_fn()
        arr.flat[fi] = orig - h
        down = loss_fn()
        arr.flat[fi] = orig
        grads.append((up - down) / (2.0 * h))
    return grads


# ---------------------------------------------------------------------------
# CLI artifact comparison

TINY_CLI_CONFIG = """\
[guide]
batch = 8
training set = 12
verify set = 2
test set = 4
learning rate = 0.001
train epochs = 6
initial percentage = 0.5
percentage step = 0.1

[value]
batch = 8
alpha = 0.9
epsilon = 0.2
action num = 2
n1 = 8
n2 = 2
learning rate = 0.001
memory = 300
gamma = 0.5
step size = 5

[run]
k = 2
seed = 7
rounds = 2
episodes per round = 6
initial outages = 2
snapshot samples = 0
guide conv widths = 8
guide dense widths = 16
value conv widths = 8
value dense widths = 16,8
"""


def manifest_without_walltime(directory) -> dict:
    import json

    doc = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    doc.pop("wall_time_s")
    return doc


def assert_artifact_dirs_match(a, b):
    """Primary artifacts byte-identical; manifests equal modulo wall time;
    *timing* sidecars exempt."""
    names_a = sorted(p.name for p in a.iterdir())
    names_b = sorted(p.name for p in b.iterdir())
    assert names_a == names_b
    for name in names_a:
        if "timing" in name:
            continue
        if name == "manifest.json":
            assert manifest_without_walltime(a) == manifest_without_walltime(b)
        else:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name
