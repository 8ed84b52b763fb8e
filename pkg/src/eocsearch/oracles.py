"""Ground-truth and baseline searchers: enumeration, local enumeration, GA.

All searchers maximize the tail-end fault current of one relay over trip
sets of at most k additional lines, starting from a given initial
condition. Global enumeration is the reference oracle; local enumeration
restricts candidates to a hop-limited region around the protected line;
the genetic algorithm is the heuristic baseline. Ties between equally
good conditions break toward the lexicographically smallest trip set, so
every searcher is deterministic.
"""

from __future__ import annotations

import itertools
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .fault import tail_fault_current
from .grid import CaseError, GridCase, RelayPoint, TopologyState

__all__ = [
    "SearchResult",
    "GAConfig",
    "DatasetSample",
    "global_enumerate",
    "local_enumerate",
    "ga_search",
    "gen_dataset",
    "write_dataset",
    "read_dataset",
]


@dataclass(frozen=True)
class SearchResult:
    """Outcome of one search: the best condition found and its cost."""

    eoc_status: TopologyState
    i_max: float
    evaluated_count: int
    wall_time_s: float
    warning: str | None = None


@dataclass(frozen=True)
class GAConfig:
    population: int
    generations: int
    crossover_rate: float
    mutation_rate: float
    penalty_weight: float
    seed: int

    def __post_init__(self) -> None:
        if self.population < 2 or self.population % 2:
            raise ValueError(f"population must be even and >= 2, got {self.population}")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        for name in ("crossover_rate", "mutation_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {rate}")
        if self.penalty_weight < 0:
            raise ValueError("penalty weight must be >= 0")


@dataclass(frozen=True)
class DatasetSample:
    """One labeled enumeration sample.

    ``eoc_out`` uses the label convention 1 = out of service (the
    complement of ``TopologyState.status``).
    """

    status: TopologyState
    relay: RelayPoint
    eoc_out: tuple[int, ...]
    i_max: float


def _candidate_lines(case: GridCase, status: TopologyState, protected: int) -> list[int]:
    return [i for i in range(case.m) if i != protected and status.in_service(i)]


def _status_with_trips(status: TopologyState, trips) -> TopologyState:
    bits = list(status.status)
    for line in trips:
        bits[line] = 0
    return TopologyState(status=tuple(bits))


def _better(current: float, trips: tuple, best_current: float, best_trips: tuple) -> bool:
    if current != best_current:
        return current > best_current
    return trips < best_trips


def global_enumerate(
    case: GridCase,
    initial_status: TopologyState,
    relay: RelayPoint,
    k: int,
    workers: int = 1,
) -> SearchResult:
    """Exhaustive search over all trip sets of size <= k.

    Candidates are the in-service, non-protected lines of the initial
    condition; every subset of up to k of them is evaluated, so
    ``evaluated_count`` equals the binomial sum over sizes 0..k.
    """
    if not initial_status.in_service(relay.line_id):
        raise CaseError(f"protected line {relay.line_id} is out of service in the initial status")
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    t0 = time.perf_counter()
    candidates = _candidate_lines(case, initial_status, relay.line_id)
    subsets = []
    for size in range(0, min(k, len(candidates)) + 1):
        subsets.extend(itertools.combinations(candidates, size))

    def evaluate(trips: tuple) -> tuple[float, tuple]:
        return tail_fault_current(case, _status_with_trips(initial_status, trips), relay), trips

    best_current = -np.inf
    best_trips: tuple = ()
    if workers > 1 and len(subsets) > 64:
        chunks = np.array_split(np.arange(len(subsets)), workers)

        def reduce_chunk(idx_chunk) -> tuple[float, tuple]:
            c_best, c_trips = -np.inf, ()
            for i in idx_chunk:
                cur, trips = evaluate(subsets[int(i)])
                if _better(cur, trips, c_best, c_trips):
                    c_best, c_trips = cur, trips
            return c_best, c_trips

        with ThreadPoolExecutor(max_workers=workers) as pool:
            for cur, trips in pool.map(reduce_chunk, [c for c in chunks if len(c)]):
                if _better(cur, trips, best_current, best_trips):
                    best_current, best_trips = cur, trips
    else:
        for trips in subsets:
            cur, trips = evaluate(trips)
            if _better(cur, trips, best_current, best_trips):
                best_current, best_trips = cur, trips

    return SearchResult(
        eoc_status=_status_with_trips(initial_status, best_trips),
        i_max=best_current,
        evaluated_count=len(subsets),
        wall_time_s=time.perf_counter() - t0,
    )


def region_lines(case: GridCase, status: TopologyState, relay: RelayPoint, r: int) -> list[int]:
    """Candidate lines within r levels of the protected line.

    A line is within level r when it can be reached from the protected
    line by crossing at most r in-service lines, i.e. one of its endpoints
    lies within r-1 bus hops of either protected terminal (level 1 = lines
    sharing a bus with the protected line).
    """
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    adj: list[list[int]] = [[] for _ in range(case.n)]
    for line in case.lines:
        if status.in_service(line.id):
            adj[line.from_bus].append(line.to_bus)
            adj[line.to_bus].append(line.from_bus)
    depth = {relay.relay_bus: 0, relay.fault_bus: 0}
    frontier = [relay.relay_bus, relay.fault_bus]
    for d in range(1, r):
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if v not in depth:
                    depth[v] = d
                    nxt.append(v)
        frontier = nxt
    return [
        line.id
        for line in case.lines
        if line.id != relay.line_id
        and status.in_service(line.id)
        and (line.from_bus in depth or line.to_bus in depth)
    ]


def local_enumerate(
    case: GridCase,
    initial_status: TopologyState,
    relay: RelayPoint,
    k: int,
    r: int,
    workers: int = 1,
) -> SearchResult:
    """Enumeration restricted to the r-hop region around the protected line."""
    if not initial_status.in_service(relay.line_id):
        raise CaseError(f"protected line {relay.line_id} is out of service in the initial status")
    t0 = time.perf_counter()
    candidates = region_lines(case, initial_status, relay, r)
    subsets = []
    for size in range(0, min(k, len(candidates)) + 1):
        subsets.extend(itertools.combinations(candidates, size))
    best_current = -np.inf
    best_trips: tuple = ()
    for trips in subsets:
        cur = tail_fault_current(case, _status_with_trips(initial_status, trips), relay)
        if _better(cur, trips, best_current, best_trips):
            best_current, best_trips = cur, trips
    # region candidate lists are small; chunked parallelism never pays off here
    del workers
    return SearchResult(
        eoc_status=_status_with_trips(initial_status, best_trips),
        i_max=best_current,
        evaluated_count=len(subsets),
        wall_time_s=time.perf_counter() - t0,
    )


def ga_search(
    case: GridCase,
    initial_status: TopologyState,
    relay: RelayPoint,
    k: int,
    config: GAConfig,
) -> SearchResult:
    """Genetic-algorithm baseline over trip bitstrings.

    Genomes index the candidate lines (1 = trip). Fitness is the fault
    current minus a linear penalty on trips beyond k; selection is
    3-tournament, crossover single-point, mutation bit-flip, with one
    elite carried per generation. The zero genome (no trips) is always
    seeded, so the result is never worse than the initial condition.
    """
    if not initial_status.in_service(relay.line_id):
        raise CaseError(f"protected line {relay.line_id} is out of service in the initial status")
    t0 = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    candidates = _candidate_lines(case, initial_status, relay.line_id)
    width = len(candidates)

    evaluations = 0

    def decode(genome: np.ndarray) -> tuple:
        return tuple(candidates[i] for i in np.flatnonzero(genome))

    def fitness(genome: np.ndarray) -> tuple[float, float, tuple]:
        nonlocal evaluations
        evaluations += 1
        trips = decode(genome)
        current = tail_fault_current(case, _status_with_trips(initial_status, trips), relay)
        excess = max(0, len(trips) - k)
        return current - config.penalty_weight * excess, current, trips

    best_feasible: tuple[float, tuple] | None = None

    def consider(current: float, trips: tuple) -> None:
        nonlocal best_feasible
        if len(trips) > k:
            return
        if best_feasible is None or _better(current, trips, best_feasible[0], best_feasible[1]):
            best_feasible = (current, trips)

    if width == 0:
        current = tail_fault_current(case, initial_status, relay)
        return SearchResult(initial_status, current, 1, time.perf_counter() - t0)

    pop = (rng.random((config.population, width)) < min(0.5, (k + 1) / width)).astype(np.uint8)
    pop[0] = 0  # always include the no-trip genome
    scores = np.empty(config.population)
    for i in range(config.population):
        scores[i], current, trips = fitness(pop[i])
        consider(current, trips)

    for _ in range(config.generations):
        elite = int(np.argmax(scores))
        children = [pop[elite].copy()]
        while len(children) < config.population:
            parents = []
            for _ in range(2):
                contenders = rng.integers(0, config.population, size=3)
                winner = contenders[int(np.argmax(scores[contenders]))]
                parents.append(pop[winner])
            c1, c2 = parents[0].copy(), parents[1].copy()
            if width > 1 and rng.random() < config.crossover_rate:
                point = int(rng.integers(1, width))
                c1 = np.concatenate([parents[0][:point], parents[1][point:]])
                c2 = np.concatenate([parents[1][:point], parents[0][point:]])
            for child in (c1, c2):
                flip = rng.random(width) < config.mutation_rate
                child[flip] ^= 1
                children.append(child)
        pop = np.asarray(children[: config.population])
        for i in range(config.population):
            scores[i], current, trips = fitness(pop[i])
            consider(current, trips)

    if best_feasible is None:
        current = tail_fault_current(case, initial_status, relay)
        return SearchResult(
            initial_status, current, evaluations, time.perf_counter() - t0,
            warning="no feasible individual found; returning the initial condition",
        )
    current, trips = best_feasible
    return SearchResult(
        eoc_status=_status_with_trips(initial_status, trips),
        i_max=current,
        evaluated_count=evaluations,
        wall_time_s=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# labeled dataset generation


def gen_dataset(
    case: GridCase,
    sample_count: int,
    initial_outage_limit: int,
    k: int,
    seed: int,
    relays: tuple[RelayPoint, ...] | None = None,
    workers: int = 1,
) -> list[DatasetSample]:
    """Generate enumeration-labeled samples for guide pretraining.

    Each sample draws a relay and a random initial condition (protected
    line forced in service), then labels it with the global-enumeration
    optimum as an out-of-service bitvector. Deterministic under ``seed``.
    """
    if sample_count < 1:
        raise ValueError(f"sample_count must be >= 1, got {sample_count}")
    from .training import sample_initial_status  # deferred: training imports this module

    rng = np.random.default_rng(seed)
    pool = relays if relays is not None else case.relays
    draws = []
    for _ in range(sample_count):
        relay = pool[int(rng.integers(0, len(pool)))]
        status = sample_initial_status(case, relay.line_id, initial_outage_limit, rng)
        draws.append((status, relay))

    def label(draw) -> DatasetSample:
        status, relay = draw
        best = global_enumerate(case, status, relay, k)
        return DatasetSample(
            status=status,
            relay=relay,
            eoc_out=best.eoc_status.out_of_service_vector(),
            i_max=best.i_max,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool_exec:
            return list(pool_exec.map(label, draws))
    return [label(d) for d in draws]


def write_dataset(samples, path) -> None:
    """Write samples as JSON lines; ``status`` is 1 = in service, ``eoc`` 1 = out."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(
                json.dumps(
                    {
                        "status": list(s.status.status),
                        "relay": {"line": s.relay.line_id, "terminal": s.relay.terminal},
                        "eoc": list(s.eoc_out),
                        "i_max": s.i_max,
                    }
                )
            )
            fh.write("\n")


def read_dataset(path, case: GridCase) -> list[DatasetSample]:
    """Read a JSON-lines dataset back, resolving relays against ``case``."""
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                doc = json.loads(raw)
                status = TopologyState(status=tuple(int(b) for b in doc["status"]))
                relay = case.relay(doc["relay"]["line"], doc["relay"]["terminal"])
                eoc = tuple(int(b) for b in doc["eoc"])
                i_max = float(doc["i_max"])
            except (KeyError, TypeError, ValueError, CaseError) as exc:
                raise CaseError(f"{path}:{lineno}: bad dataset record: {exc}") from None
            if len(status) != case.m or len(eoc) != case.m:
                raise CaseError(f"{path}:{lineno}: record width does not match case (m={case.m})")
            samples.append(DatasetSample(status=status, relay=relay, eoc_out=eoc, i_max=i_max))
    return samples
