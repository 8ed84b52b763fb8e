"""Model evaluation: greedy inference, scenario accuracy, timing, ablations.

A trained value network finds its candidate extreme condition by a greedy
rollout: repeatedly take the argmax-Q action until the episode stops. The
harness compares those candidates against global enumeration. A sample is
"correct" when the model's current matches the enumeration optimum to a
relative tolerance (both numbers come from the same deterministic engine,
so the tolerance can be essentially zero), and "e-correct" when the
shortfall is at most a fraction e of the optimum.
"""

from __future__ import annotations

import csv
import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .env import EnvConfig, reset, step
from .grid import GridCase, RelayPoint, TopologyState
from .nn import QNetworkParams
from .oracles import GAConfig, SearchResult, ga_search, global_enumerate, local_enumerate
from .training import TrainConfig, sample_initial_status, train_value

__all__ = [
    "EvalConfig",
    "SampleRecord",
    "EvalReport",
    "infer_eoc",
    "run_scenario",
    "selectivity_check",
    "SelectivityReport",
    "benchmark",
    "BenchmarkRow",
    "ablation_run",
    "AblationVariant",
    "write_eval_csv",
    "eval_summary",
]


@dataclass(frozen=True)
class EvalConfig:
    """Scenario evaluation parameters.

    Scenario 1 draws ``n1`` independent (initial status, relay) pairs.
    Scenario 2 draws ``n2`` initial statuses and evaluates every relay of
    ``relay_subset`` whose protected line is in service (default subset:
    the "from" terminal of every line).
    """

    scenario: int
    n1: int = 1000
    n2: int = 20
    e_levels: tuple[float, ...] = (0.01, 0.02, 0.05)
    k: int = 3
    equality_tolerance: float = 1e-9
    seed: int = 0
    relay_subset: tuple[RelayPoint, ...] | None = None
    initial_outage_limit: int = 3

    def __post_init__(self) -> None:
        if self.scenario not in (1, 2):
            raise ValueError(f"scenario must be 1 or 2, got {self.scenario}")
        if list(self.e_levels) != sorted(self.e_levels):
            raise ValueError("e_levels must be ascending")
        if not self.equality_tolerance > 0:
            raise ValueError("equality tolerance must be > 0")


@dataclass(frozen=True)
class SampleRecord:
    status: TopologyState
    relay: RelayPoint
    i_model: float
    i_oracle: float
    relative_gap: float
    t_model_s: float
    t_oracle_s: float
    correct: bool
    e_correct: tuple[bool, ...]


@dataclass
class EvalReport:
    config: EvalConfig
    samples: list[SampleRecord] = field(default_factory=list)

    @property
    def accuracy(self) -> float:
        return float(np.mean([s.correct for s in self.samples]))

    def e_accuracy(self, level_index: int) -> float:
        return float(np.mean([s.e_correct[level_index] for s in self.samples]))

    @property
    def mean_model_time_s(self) -> float:
        return float(np.mean([s.t_model_s for s in self.samples]))

    @property
    def mean_oracle_time_s(self) -> float:
        return float(np.mean([s.t_oracle_s for s in self.samples]))


def infer_eoc(
    value_params: QNetworkParams,
    case: GridCase,
    initial_status: TopologyState,
    relay: RelayPoint,
    k: int,
    env_cfg: EnvConfig | None = None,
) -> SearchResult:
    """Greedy value-network rollout from one initial condition.

    Takes the argmax-Q action each step (lowest line id on ties) until the
    episode terminates, i.e. after k trips or as soon as the network
    prefers the protected line or an out-of-service line (the stop
    action). ``evaluated_count`` is the number of steps taken.
    """
    if env_cfg is None:
        env_cfg = EnvConfig(k_max=k)
    t0 = time.perf_counter()
    state, obs = reset(case, initial_status, relay, env_cfg)
    steps = 0
    while not state.done:
        q = nn.value_forward(state.observation, value_params)
        action = int(np.argmax(q))  # first maximizer: lowest id wins ties
        _, state = step(state, action, env_cfg)
        steps += 1
    return SearchResult(
        eoc_status=state.status,
        i_max=state.current,
        evaluated_count=steps,
        wall_time_s=time.perf_counter() - t0,
    )


def _judge(i_model: float, i_oracle: float, config: EvalConfig) -> tuple[float, bool, tuple[bool, ...]]:
    if i_oracle == 0.0:
        gap = 0.0 if i_model == 0.0 else float("inf")
    else:
        gap = (i_oracle - i_model) / i_oracle
    correct = abs(gap) <= config.equality_tolerance
    e_correct = tuple(gap <= e for e in config.e_levels)
    return gap, correct, e_correct


def _scenario_draws(case: GridCase, config: EvalConfig, rng: np.random.Generator):
    """The (status, relay) pairs a scenario evaluates."""
    draws = []
    if config.scenario == 1:
        pool = config.relay_subset if config.relay_subset is not None else case.relays
        for _ in range(config.n1):
            relay = pool[int(rng.integers(0, len(pool)))]
            status = sample_initial_status(case, relay.line_id, config.initial_outage_limit, rng)
            draws.append((status, relay))
    else:
        pool = config.relay_subset if config.relay_subset is not None else tuple(
            case.relay(line.id, "from") for line in case.lines
        )
        for _ in range(config.n2):
            n_out = int(rng.integers(0, config.initial_outage_limit + 1))
            out = rng.choice(case.m, size=n_out, replace=False) if n_out else []
            status = TopologyState.with_outages(case.m, [int(i) for i in out])
            for relay in pool:
                if status.in_service(relay.line_id):
                    draws.append((status, relay))
    return draws


def run_scenario(value_params: QNetworkParams, case: GridCase, config: EvalConfig, workers: int = 1) -> EvalReport:
    """Evaluate the model against global enumeration on one scenario."""
    rng = np.random.default_rng(config.seed)
    draws = _scenario_draws(case, config, rng)
    env_cfg = EnvConfig(k_max=config.k)

    def one(draw) -> SampleRecord:
        status, relay = draw
        model = infer_eoc(value_params, case, status, relay, config.k, env_cfg)
        oracle = global_enumerate(case, status, relay, config.k)
        gap, correct, e_correct = _judge(model.i_max, oracle.i_max, config)
        return SampleRecord(
            status=status,
            relay=relay,
            i_model=model.i_max,
            i_oracle=oracle.i_max,
            relative_gap=gap,
            t_model_s=model.wall_time_s,
            t_oracle_s=oracle.wall_time_s,
            correct=correct,
            e_correct=e_correct,
        )

    report = EvalReport(config=config)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            report.samples = list(pool.map(one, draws))
    else:
        report.samples = [one(d) for d in draws]
    return report


@dataclass
class SelectivityReport:
    relay: RelayPoint
    K: float
    conditions: int
    satisfied: int
    failures: list[tuple[TopologyState, float, float]] = field(default_factory=list)

    @property
    def fraction(self) -> float:
        return self.satisfied / self.conditions if self.conditions else float("nan")


def selectivity_check(
    value_params: QNetworkParams,
    case: GridCase,
    relay: RelayPoint,
    K: float,
    k: int,
    outage_limit: int = 2,
    workers: int = 1,
) -> SelectivityReport:
    """Verify the pickup-setting margin over every initial condition.

    Enumerates all conditions with up to ``outage_limit`` non-protected
    lines out. For each, the model-backed setting K * I_model must exceed
    the true enumeration maximum from that condition; the report counts
    satisfied conditions and records failures. Conditions whose reachable
    maximum is zero (the relay sees no fault current at all, e.g. a
    dead-ended terminal) put no constraint on the setting and count as
    satisfied.
    """
    if not K > 1.0:
        raise ValueError(f"K must be > 1, got {K}")
    others = [i for i in range(case.m) if i != relay.line_id]
    conditions = []
    for size in range(0, min(outage_limit, len(others)) + 1):
        for out in itertools.combinations(others, size):
            conditions.append(TopologyState.with_outages(case.m, out))
    env_cfg = EnvConfig(k_max=k)

    def one(status: TopologyState):
        i_model = infer_eoc(value_params, case, status, relay, k, env_cfg).i_max
        i_oracle = global_enumerate(case, status, relay, k).i_max
        return status, i_model, i_oracle

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, conditions))
    else:
        rows = [one(c) for c in conditions]

    report = SelectivityReport(relay=relay, K=K, conditions=len(conditions), satisfied=0)
    for status, i_model, i_oracle in rows:
        if i_oracle == 0.0 or K * i_model > i_oracle:
            report.satisfied += 1
        else:
            report.failures.append((status, i_model, i_oracle))
    return report


@dataclass
class BenchmarkRow:
    method: str
    accuracy: float
    e1_accuracy: float
    mean_time_s: float


def benchmark(
    value_params: QNetworkParams | None,
    case: GridCase,
    methods: tuple[str, ...],
    sample_count: int,
    k: int,
    seed: int,
    local_radius: int = 3,
    ga_config: GAConfig | None = None,
    initial_outage_limit: int = 3,
) -> list[BenchmarkRow]:
    """Time and score several searchers on one shared sample set.

    ``methods`` draws from {"graph-d3qn", "global-enum", "local-enum",
    "ga"}. Accuracy is judged against global enumeration, which is run for
    every sample regardless of the method list.
    """
    known = {"graph-d3qn", "global-enum", "local-enum", "ga"}
    unknown = set(methods) - known
    if unknown:
        raise ValueError(f"unknown methods: {sorted(unknown)} (choose from {sorted(known)})")
    if "graph-d3qn" in methods and value_params is None:
        raise ValueError("graph-d3qn benchmarking needs value-network params")
    rng = np.random.default_rng(seed)
    draws = []
    for _ in range(sample_count):
        relay = case.relays[int(rng.integers(0, len(case.relays)))]
        status = sample_initial_status(case, relay.line_id, initial_outage_limit, rng)
        draws.append((status, relay))
    env_cfg = EnvConfig(k_max=k)
    if ga_config is None:
        ga_config = GAConfig(
            population=30, generations=40, crossover_rate=0.9, mutation_rate=0.05,
            penalty_weight=1000.0, seed=seed,
        )

    oracle_results = [global_enumerate(case, status, relay, k) for status, relay in draws]

    def run(method: str, status: TopologyState, relay: RelayPoint) -> SearchResult:
        if method == "graph-d3qn":
            return infer_eoc(value_params, case, status, relay, k, env_cfg)
        if method == "global-enum":
            return global_enumerate(case, status, relay, k)
        if method == "local-enum":
            return local_enumerate(case, status, relay, k, local_radius)
        return ga_search(case, status, relay, k, ga_config)

    rows = []
    for method in methods:
        times = []
        correct = 0
        e1 = 0
        for (status, relay), oracle in zip(draws, oracle_results):
            result = run(method, status, relay)
            times.append(result.wall_time_s)
            if oracle.i_max == 0.0:
                gap = 0.0 if result.i_max == 0.0 else float("inf")
            else:
                gap = (oracle.i_max - result.i_max) / oracle.i_max
            correct += abs(gap) <= 1e-9
            e1 += gap <= 0.01
        rows.append(
            BenchmarkRow(
                method=method,
                accuracy=float(correct) / sample_count,
                e1_accuracy=float(e1) / sample_count,
                mean_time_s=float(np.mean(times)),
            )
        )
    return rows


@dataclass
class AblationVariant:
    name: str
    value_params: QNetworkParams
    report: object
    final_accuracy: float


def ablation_run(
    case: GridCase,
    guide_params: QNetworkParams | None,
    config: TrainConfig,
    eval_config: EvalConfig,
    toggles: tuple[str, ...] = ("no_guide", "no_dueling", "no_double"),
) -> dict[str, AblationVariant]:
    """Train the full method plus one variant per toggle and score them all.

    Every variant uses the same config and seed; the returned dict has the
    "full" entry plus one entry per toggle (4 variants for the default
    toggle set). Final accuracy comes from a held-out scenario run with
    ``eval_config``.
    """
    allowed = {"no_guide", "no_dueling", "no_double"}
    bad = set(toggles) - allowed
    if bad:
        raise ValueError(f"unknown toggles: {sorted(bad)} (choose from {sorted(allowed)})")
    variants: dict[str, AblationVariant] = {}
    for name, ablation in [("full", None)] + [(t, t) for t in toggles]:
        params, report = train_value(case, guide_params, config, ablation=ablation)
        accuracy = run_scenario(params, case, eval_config).accuracy
        variants[name] = AblationVariant(name=name, value_params=params, report=report, final_accuracy=accuracy)
    return variants


# ---------------------------------------------------------------------------
# report serialization


def write_eval_csv(report: EvalReport, path, timing_path=None) -> None:
    """Per-sample records as CSV.

    Wall-clock columns go to the separate ``timing_path`` (when given) so
    the main report stays byte-reproducible under a fixed seed.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        header = ["status", "relay_line", "relay_terminal", "i_model", "i_oracle", "relative_gap", "correct"]
        header += [f"within_{e}" for e in report.config.e_levels]
        writer.writerow(header)
        for s in report.samples:
            row = [
                "".join(str(b) for b in s.status.status),
                s.relay.line_id,
                s.relay.terminal,
                repr(s.i_model),
                repr(s.i_oracle),
                repr(s.relative_gap),
                int(s.correct),
            ]
            row += [int(flag) for flag in s.e_correct]
            writer.writerow(row)
    if timing_path is not None:
        with open(timing_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample", "t_model_s", "t_oracle_s"])
            for i, s in enumerate(report.samples):
                writer.writerow([i, repr(s.t_model_s), repr(s.t_oracle_s)])


def eval_summary(report: EvalReport, include_timing: bool = False) -> dict:
    """Aggregate metrics as a JSON-ready dict.

    Timing means are volatile between runs, so they are only included on
    request (the CLI writes them to a timing sidecar instead).
    """
    summary = {
        "scenario": report.config.scenario,
        "samples": len(report.samples),
        "k": report.config.k,
        "accuracy": report.accuracy,
        "e_accuracy": {repr(e): report.e_accuracy(i) for i, e in enumerate(report.config.e_levels)},
    }
    if include_timing:
        summary["mean_model_time_s"] = report.mean_model_time_s
        summary["mean_oracle_time_s"] = report.mean_oracle_time_s
    return summary
