"""Walk through the short-circuit engine on small cases.

Shows the susceptance stamp, the node impedance matrix, tail-end fault
currents, and how tripping a parallel path raises the current through a
protected line.
"""

import numpy as np

from eocsearch import (
    TopologyState,
    apply_trip,
    build_susceptance,
    electrical_distances,
    impedance_matrix,
    tail_fault_current,
)
from eocsearch.cases import three_bus_mesh, toy9, two_bus

np.set_printoptions(precision=4, suppress=True)

# --- a two-bus system: source behind 0.1 pu feeding one 0.5 pu line -------
case = two_bus()
state = TopologyState.all_in_service(case.m)
print("two-bus susceptance matrix:")
print(build_susceptance(case, state))
print("node impedance matrix:")
print(impedance_matrix(case, state))

relay = case.relay(0, "from")  # relay at the source end, fault at the far end
current = tail_fault_current(case, state, relay)
print(f"tail-end fault current: {current:.4f} pu")
print(f"series-path check 1/(0.1+0.5) = {1 / 0.6:.4f} pu\n")

# --- a meshed case: removing a diversion path raises the relay's current --
case = three_bus_mesh()
state = TopologyState.all_in_service(case.m)
relay = case.relay(1, "from")  # line 1-2, fault at bus 2
before = tail_fault_current(case, state, relay)
after = tail_fault_current(case, apply_trip(state, 2), relay)  # cut 0-2
print("three-bus mesh, relay on line 1-2:")
print(f"  all lines in service: {before:.4f} pu")
print(f"  after tripping 0-2:   {after:.4f} pu  (all fault current forced through 1-2)\n")

# --- electrical distances track the live topology --------------------------
case = toy9()
state = TopologyState.all_in_service(case.m)
D = electrical_distances(case, state)
print(f"toy9 distance 0 -> 4 with all lines: {D[0, 4]:.4f} pu")
state2 = apply_trip(apply_trip(state, 3), 8)
D2 = electrical_distances(case, state2)
print(f"same pair after two trips:           {D2[0, 4]:.4f} pu")
