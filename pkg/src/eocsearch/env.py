"""Episode mechanics for the extreme-operating-condition search MDP.

One episode studies one relay point under one initial topology. The agent
picks a line per step: picking an in-service, non-protected line trips it;
picking the protected line or an already-out line is the stop action
(reward 0, episode ends, topology unchanged). Rewards are the per-unit
change of the tail-end fault current, so the cumulative reward of any
episode telescopes to final current minus initial current regardless of
action order.

Episodes terminate after ``k_max`` trips or on a stop action. Everything
here is pure/value-semantics: ``step`` returns new states and never
mutates its inputs, so episode copies are free.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fault, nn
from .grid import CaseError, GridCase, RelayPoint, TopologyState, apply_trip

__all__ = ["EnvConfig", "Observation", "EpisodeState", "Transition", "encode", "reset", "step", "legal_trips"]


@dataclass(frozen=True)
class EnvConfig:
    """Episode parameters.

    Attributes:
        k_max: Maximum number of lines the agent may trip per episode.
        feature_cap: Sentinel for disconnected impedance/distance entries;
            ``None`` derives it from the case (see ``fault.feature_cap``).
        normalize: Scale each observation block to [0, 1] by its maximum.
    """

    k_max: int
    feature_cap: float | None = None
    normalize: bool = True

    def __post_init__(self) -> None:
        if self.k_max < 1:
            raise ValueError(f"k_max must be >= 1, got {self.k_max}")


@dataclass(frozen=True)
class Observation:
    """Per-node feature matrix plus the graph-convolution operator.

    ``features`` is n x (3n+1): for each bus, the self-loop adjacency row,
    the impedance-matrix row, the electrical-distance row, and one flag
    entry (+1 at the relay bus, -1 at the fault bus, 0 elsewhere).
    ``adjacency`` is the symmetrically normalized self-loop adjacency of
    the current topology, used as the convolution operator.
    """

    features: np.ndarray
    adjacency: np.ndarray


@dataclass(frozen=True)
class EpisodeState:
    """Immutable snapshot of a running episode.

    ``observation`` is the cached encoding of (status, relay); it is fully
    derived and carried only to avoid recomputation.
    """

    case: GridCase
    status: TopologyState
    relay: RelayPoint
    trips_done: int
    current: float
    done: bool
    observation: Observation = field(repr=False)


@dataclass(frozen=True)
class Transition:
    """Replay-buffer quintuple with provenance.

    ``source`` records how the transition was produced ("guided" or
    "explored"); training treats both identically.
    """

    s: Observation
    a: int
    r: float
    s_next: Observation
    done: bool
    source: str = "explored"


def encode(case: GridCase, status: TopologyState, relay: RelayPoint, config: EnvConfig) -> Observation:
    """Build the observation for one (topology, relay) pair.

    The three n-wide blocks are each divided by their own maximum entry
    when ``config.normalize`` is set (an all-zero block stays zero); the
    flag column is never scaled.
    """
    n = case.n
    cap = config.feature_cap if config.feature_cap is not None else fault.feature_cap(case)
    A = np.zeros((n, n))
    for line in case.lines:
        if status.status[line.id]:
            A[line.from_bus, line.to_bus] = 1.0
            A[line.to_bus, line.from_bus] = 1.0
    adj_block = A + np.eye(n)
    z_block = np.abs(fault.impedance_matrix(case, status, cap=cap))
    d_block = fault.electrical_distances(case, status, cap=cap)
    if config.normalize:
        for block in (adj_block, z_block, d_block):
            peak = block.max()
            if peak > 0.0:
                block /= peak
    flag = np.zeros((n, 1))
    flag[relay.relay_bus, 0] = 1.0
    flag[relay.fault_bus, 0] = -1.0
    features = np.hstack([adj_block, z_block, d_block, flag])
    return Observation(features=features, adjacency=nn.normalize_adjacency(A))


def reset(case: GridCase, initial_status: TopologyState, relay: RelayPoint, config: EnvConfig) -> tuple[EpisodeState, Observation]:
    """Start an episode from a given topology and relay point.

    Raises:
        CaseError: if the protected line is out of service initially.
    """
    if len(initial_status) != case.m:
        raise CaseError(f"status has {len(initial_status)} entries but case has {case.m} lines")
    if not initial_status.in_service(relay.line_id):
        raise CaseError(f"protected line {relay.line_id} must be in service at episode start")
    current = fault.tail_fault_current(case, initial_status, relay)
    obs = encode(case, initial_status, relay, config)
    state = EpisodeState(
        case=case,
        status=initial_status,
        relay=relay,
        trips_done=0,
        current=current,
        done=False,
        observation=obs,
    )
    return state, obs


def legal_trips(state: EpisodeState) -> list[int]:
    """Line ids whose selection would trip something (in service, not protected)."""
    return [
        i
        for i in range(state.case.m)
        if i != state.relay.line_id and state.status.in_service(i)
    ]


def step(state: EpisodeState, action: int, config: EnvConfig) -> tuple[Transition, EpisodeState]:
    """Apply one action and return (transition, successor state).

    Selecting the protected line or an out-of-service line stops the
    episode with zero reward and an unchanged topology. Any other line is
    tripped; the reward is the fault-current change and the episode ends
    once ``k_max`` lines have been tripped.

    Raises:
        ValueError: if the episode is already done or the action is out of
            range.
    """
    if state.done:
        raise ValueError("cannot step a finished episode")
    if not 0 <= action < state.case.m:
        raise ValueError(f"action {action} out of range for m={state.case.m}")

    if action == state.relay.line_id or not state.status.in_service(action):
        transition = Transition(s=state.observation, a=action, r=0.0, s_next=state.observation, done=True)
        new_state = EpisodeState(
            case=state.case,
            status=state.status,
            relay=state.relay,
            trips_done=state.trips_done,
            current=state.current,
            done=True,
            observation=state.observation,
        )
        return transition, new_state

    new_status = apply_trip(state.status, action)
    new_current = fault.tail_fault_current(state.case, new_status, state.relay)
    reward = new_current - state.current
    trips = state.trips_done + 1
    done = trips >= config.k_max
    new_obs = encode(state.case, new_status, state.relay, config)
    transition = Transition(s=state.observation, a=action, r=reward, s_next=new_obs, done=done)
    new_state = EpisodeState(
        case=state.case,
        status=new_status,
        relay=state.relay,
        trips_done=trips,
        current=new_current,
        done=done,
        observation=new_obs,
    )
    return transition, new_state
