"""Three-phase bolted-fault currents and electrical distances.

The whole engine is reactance-only: every branch and source is a pure
reactance, so phasor arithmetic collapses to real arithmetic and the nodal
admittance matrix reduces to a real susceptance matrix B (units 1/pu). The
prefault voltage profile is flat 1.0 pu everywhere (no load flow).

For a bolted three-phase fault at bus f the classic Z-bus relations give

    I_f     = 1.0 / Z_ff                 (total fault current)
    dV_i    = -Z_if / Z_ff               (voltage change at bus i)

and the current through a protected line h-f of reactance x is

    |dV_h - dV_f| / x = (Z_ff - Z_hf) / (Z_ff * x)

Buses with no in-service path to any source are "islanded": their fault
current is defined as 0 and their impedance/distance entries carry a large
finite sentinel (see :func:`feature_cap`) instead of infinity, which keeps
downstream feature normalization bounded.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra

from .grid import CaseError, GridCase, RelayPoint, TopologyState, components

__all__ = [
    "feature_cap",
    "build_susceptance",
    "impedance_matrix",
    "tail_fault_current",
    "electrical_distances",
]

PREFAULT_VOLTAGE_PU = 1.0

# Through-currents below this magnitude are solver noise (a dead-ended relay
# bus yields Z_ff - Z_hf of order 1e-16); they are reported as exactly 0.0 so
# relative comparisons between search results stay well-posed.
CURRENT_NOISE_FLOOR_PU = 1e-9


def feature_cap(case: GridCase) -> float:
    """Finite sentinel used for disconnected impedance/distance entries.

    10x the sum of all line and source reactances of the case: strictly
    larger than any realizable electrical distance or driving-point
    impedance, yet finite so feature blocks normalize to [0, 1].
    """
    total = sum(line.reactance_pu for line in case.lines)
    total += sum(src.reactance_pu for src in case.sources)
    return 10.0 * total


def build_susceptance(case: GridCase, state: TopologyState) -> np.ndarray:
    """Stamp the n x n nodal susceptance matrix for one topology state.

    Each in-service line (i, j, x) contributes 1/x to B_ii and B_jj and
    -1/x to B_ij and B_ji; each source adds 1/X_s to the diagonal of its
    bus. Out-of-service lines contribute nothing.
    """
    if len(state) != case.m:
        raise CaseError(f"state has {len(state)} entries but case has {case.m} lines")
    n = case.n
    B = np.zeros((n, n))
    for line in case.lines:
        if not state.status[line.id]:
            continue
        y = 1.0 / line.reactance_pu
        i, j = line.from_bus, line.to_bus
        B[i, i] += y
        B[j, j] += y
        B[i, j] -= y
        B[j, i] -= y
    for src in case.sources:
        B[src.bus, src.bus] += 1.0 / src.reactance_pu
    return B


def _source_component_labels(case: GridCase, state: TopologyState) -> tuple[tuple[int, ...], frozenset[int]]:
    """Component label per bus plus the set of labels containing a source."""
    labels = components(case, state)
    energized = frozenset(labels[src.bus] for src in case.sources)
    return labels, energized


def impedance_matrix(case: GridCase, state: TopologyState, cap: float | None = None) -> np.ndarray:
    """Node impedance matrix Z for the given topology state.

    Z is the inverse of the susceptance matrix, computed blockwise per
    connected component that contains at least one source. Entries between
    different components are 0 (no electrical coupling); rows/columns of
    buses with no source in their component are set to the sentinel cap.
    The result is exactly symmetric.
    """
    if cap is None:
        cap = feature_cap(case)
    n = case.n
    labels, energized = _source_component_labels(case, state)
    B = build_susceptance(case, state)
    Z = np.zeros((n, n))
    for label in sorted(set(labels)):
        idx = np.flatnonzero(np.asarray(labels) == label)
        if label not in energized:
            Z[idx, :] = cap
            Z[:, idx] = cap
            continue
        sub = B[np.ix_(idx, idx)]
        try:
            inv = np.linalg.inv(sub)
        except np.linalg.LinAlgError as exc:  # impossible under case invariants
            raise RuntimeError(f"singular susceptance block for component {label}") from exc
        Z[np.ix_(idx, idx)] = 0.5 * (inv + inv.T)
    return Z


def tail_fault_current(case: GridCase, state: TopologyState, relay: RelayPoint) -> float:
    """Fault current (pu) through the protected line for a tail-end fault.

    Models a three-phase bolted fault at ``relay.fault_bus`` on the flat
    1.0 pu prefault profile and returns the current magnitude flowing
    through the protected line. Returns 0.0 when the fault bus has no
    in-service path to any source, and clamps sub-noise-floor results
    (dead-ended relay buses) to exactly 0.0.

    Raises:
        CaseError: if the protected line is out of service in ``state``.
    """
    if not state.in_service(relay.line_id):
        raise CaseError(f"protected line {relay.line_id} is out of service in this state")
    labels, energized = _source_component_labels(case, state)
    f = relay.fault_bus
    h = relay.relay_bus
    if labels[f] not in energized:
        return 0.0
    idx = np.flatnonzero(np.asarray(labels) == labels[f])
    B = build_susceptance(case, state)
    sub = B[np.ix_(idx, idx)]
    pos = {bus: k for k, bus in enumerate(idx)}
    rhs = np.zeros(len(idx))
    rhs[pos[f]] = 1.0
    zcol = np.linalg.solve(sub, rhs)  # column f of the component Z block
    z_ff = zcol[pos[f]]
    z_hf = zcol[pos[h]]
    x_line = case.lines[relay.line_id].reactance_pu
    current = float(PREFAULT_VOLTAGE_PU * (z_ff - z_hf) / (z_ff * x_line))
    return current if abs(current) >= CURRENT_NOISE_FLOOR_PU else 0.0


def electrical_distances(case: GridCase, state: TopologyState, cap: float | None = None) -> np.ndarray:
    """All-pairs minimum electrical distance over in-service lines.

    Shortest-path distances with line reactance as edge weight, computed
    by Dijkstra from every bus. Unreachable pairs get the sentinel cap.
    """
    if cap is None:
        cap = feature_cap(case)
    n = case.n
    rows, cols, data = [], [], []
    for line in case.lines:
        if not state.status[line.id]:
            continue
        rows += [line.from_bus, line.to_bus]
        cols += [line.to_bus, line.from_bus]
        data += [line.reactance_pu, line.reactance_pu]
    graph = csr_matrix((data, (rows, cols)), shape=(n, n))
    D = _csgraph_dijkstra(graph, directed=False)
    D[np.isinf(D)] = cap
    np.fill_diagonal(D, 0.0)
    return D
