"""Two-stage training: supervised guide pretraining, then guided/free value learning.

Stage one fits the guide network to enumeration labels (multi-label BCE on
the out-of-service vector of the optimal condition). Stage two trains the
dueling value network: each episode is either driven by the guide (with a
fraction that decays every round) or by free exploration, which fans out
over the top-n actions of a state and recurses into non-terminal
successors. All transitions land in one FIFO replay buffer; one gradient
step runs per episode once a full batch is available, with blended
double-Q targets and discount 1 (rewards telescope, so action order
carries no information).

Per round the trainer decays the guided fraction, hard-copies the
prediction network into the target network, steps the learning-rate
schedule, and snapshots greedy-rollout accuracy on a fixed probe set.
Everything is driven by a single seeded generator, so two runs with the
same config produce bitwise-identical reports.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .env import EnvConfig, EpisodeState, Transition, reset, step
from .grid import GridCase, TopologyState
from .nn import GuideBatch, QNetworkParams, ValueBatch

__all__ = [
    "ReplayBuffer",
    "GuideConfig",
    "ValueConfig",
    "TrainConfig",
    "TrainRound",
    "TrainReport",
    "sample_initial_status",
    "pretrain_guide",
    "extended_explore",
    "guided_episode",
    "train_value",
    "write_train_report",
]


class ReplayBuffer:
    """Fixed-capacity FIFO transition store with uniform sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._next = 0  # ring-buffer write position once full

    def __len__(self) -> int:
        return len(self._items)

    def push(self, item: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(item)
        else:
            self._items[self._next] = item
            self._next = (self._next + 1) % self.capacity

    def oldest(self) -> Transition:
        if not self._items:
            raise ValueError("buffer is empty")
        return self._items[self._next % len(self._items)]

    def sample(self, batch: int, rng: np.random.Generator) -> list[Transition]:
        """Uniform sample without replacement; requires len(buffer) >= batch."""
        if batch > len(self._items):
            raise ValueError(f"cannot sample {batch} from buffer of size {len(self._items)}")
        idx = rng.choice(len(self._items), size=batch, replace=False)
        return [self._items[int(i)] for i in idx]


@dataclass(frozen=True)
class GuideConfig:
    batch: int
    train_size: int
    verify_size: int
    test_size: int
    learning_rate: float
    epochs: int
    conv_widths: tuple[int, ...] = (64, 64)
    dense_widths: tuple[int, ...] = (256,)

    def __post_init__(self) -> None:
        if self.batch < 1 or self.epochs < 1:
            raise ValueError("batch and epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be > 0")


@dataclass(frozen=True)
class ValueConfig:
    batch: int
    alpha: float
    epsilon: float
    explore_n: int
    learning_rate: float
    memory: int
    lr_decay: float
    lr_step: int
    initial_guided_percentage: float
    percentage_step: float
    episodes_per_round: int = 100
    rounds: int = 60
    snapshot_samples: int = 100
    conv_widths: tuple[int, ...] = (64, 64)
    dense_widths: tuple[int, ...] = (256, 128)

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if self.explore_n < 1:
            raise ValueError(f"explore_n must be >= 1, got {self.explore_n}")
        if not 0.0 <= self.initial_guided_percentage <= 1.0:
            raise ValueError("initial guided percentage must be in [0, 1]")
        if not 0.0 <= self.percentage_step <= 1.0:
            raise ValueError("percentage step must be in [0, 1]")
        if not (self.learning_rate > 0 and self.lr_decay > 0):
            raise ValueError("learning rate and decay must be > 0")
        if self.lr_step < 1 or self.memory < 1 or self.batch < 1:
            raise ValueError("lr_step, memory, and batch must be >= 1")
        if self.rounds < 1 or self.episodes_per_round < 1:
            raise ValueError("rounds and episodes_per_round must be >= 1")
        if self.snapshot_samples < 0:
            raise ValueError("snapshot_samples must be >= 0")


@dataclass(frozen=True)
class TrainConfig:
    guide: GuideConfig
    value: ValueConfig
    k_max: int
    seed: int
    initial_outage_limit: int = 3

    def __post_init__(self) -> None:
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.initial_outage_limit < 0:
            raise ValueError("initial outage limit must be >= 0")


@dataclass
class TrainRound:
    round: int
    guided_fraction: float
    loss: float
    buffer_size: int
    accuracy: float
    learning_rate: float


@dataclass
class TrainReport:
    rounds: list[TrainRound] = field(default_factory=list)
    wall_time_s: float = 0.0


def write_train_report(report: TrainReport, path) -> None:
    """Emit the per-round curve as CSV (round, guided_fraction, loss, accuracy, lr)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "guided_fraction", "loss", "accuracy", "lr"])
        for row in report.rounds:
            writer.writerow([row.round, repr(row.guided_fraction), repr(row.loss), repr(row.accuracy), repr(row.learning_rate)])


def sample_initial_status(case: GridCase, protected_line: int, outage_limit: int, rng: np.random.Generator) -> TopologyState:
    """Random initial condition: 0..outage_limit non-protected lines out."""
    others = [i for i in range(case.m) if i != protected_line]
    limit = min(outage_limit, len(others))
    n_out = int(rng.integers(0, limit + 1))
    out = rng.choice(len(others), size=n_out, replace=False) if n_out else []
    return TopologyState.with_outages(case.m, [others[int(i)] for i in out])


# ---------------------------------------------------------------------------
# guide pretraining


def _encode_dataset(case: GridCase, samples, env_cfg: EnvConfig):
    from .env import encode  # local alias, keeps the hot loop tight

    feats = []
    adjs = []
    labels = []
    for s in samples:
        obs = encode(case, s.status, s.relay, env_cfg)
        feats.append(obs.features)
        adjs.append(obs.adjacency)
        labels.append(s.eoc_out)
    return np.asarray(feats), np.asarray(adjs), np.asarray(labels, dtype=float)


def _exact_match_accuracy(params: QNetworkParams, feats, adjs, labels, samples, k_max: int) -> float:
    """Fraction of samples whose predicted trip set reproduces the label vector."""
    probs = nn._forward_batch(params, feats, adjs).output
    hits = 0
    for i, s in enumerate(samples):
        picked = nn.select_eoc(probs[i], k_max, s.relay.line_id, s.status)
        predicted = list(s.status.out_of_service_vector())
        for line in picked:
            predicted[line] = 1
        if np.array_equal(np.asarray(predicted, dtype=float), labels[i]):
            hits += 1
    return hits / len(samples)


def pretrain_guide(case: GridCase, dataset, config: TrainConfig, progress=None):
    """Train the guide network on enumeration-labeled samples.

    ``dataset`` is a sequence of labeled samples (see
    ``oracles.gen_dataset``); it is consumed in order as train / verify /
    test splits of the configured sizes. Returns
    ``(params, test_accuracy, history)`` where history rows are
    ``(epoch, mean_loss, verify_accuracy)``.
    """
    g = config.guide
    needed = g.train_size + g.verify_size + g.test_size
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    if len(dataset) < needed:
        raise ValueError(f"dataset has {len(dataset)} samples, config needs {needed}")
    rng = np.random.default_rng(config.seed)
    env_cfg = EnvConfig(k_max=config.k_max)
    train = dataset[: g.train_size]
    verify = dataset[g.train_size : g.train_size + g.verify_size]
    test = dataset[g.train_size + g.verify_size : needed]

    tf, ta, tl = _encode_dataset(case, train, env_cfg)
    vf, va, vl = (None, None, None)
    if verify:
        vf, va, vl = _encode_dataset(case, verify, env_cfg)

    feature_dim = tf.shape[2]
    params = nn.build_guide_params(
        case.n, case.m, feature_dim, rng,
        conv_widths=g.conv_widths, dense_widths=g.dense_widths, case_name=case.name,
    )
    opt = nn.adam_init(params, g.learning_rate)
    history = []
    eval_every = max(1, g.epochs // 200)
    order = np.arange(len(train))
    for epoch in range(g.epochs):
        rng.shuffle(order)
        losses = []
        for start in range(0, len(order), g.batch):
            sel = order[start : start + g.batch]
            batch = GuideBatch(features=tf[sel], adjacency=ta[sel], labels=tl[sel])
            _, loss = nn.train_step(params, opt, batch, "bce")
            losses.append(loss)
        if epoch % eval_every == 0 or epoch == g.epochs - 1:
            v_acc = _exact_match_accuracy(params, vf, va, vl, verify, config.k_max) if verify else float("nan")
            history.append((epoch, float(np.mean(losses)), v_acc))
            if progress is not None:
                progress(epoch, history[-1])
    if test:
        sf, sa, sl = _encode_dataset(case, test, env_cfg)
        accuracy = _exact_match_accuracy(params, sf, sa, sl, test, config.k_max)
    else:
        accuracy = float("nan")
    return params, accuracy, history


# ---------------------------------------------------------------------------
# episode generation


def extended_explore(
    state: EpisodeState,
    value_params: QNetworkParams,
    n: int,
    epsilon: float,
    rng: np.random.Generator,
    env_cfg: EnvConfig,
) -> list[Transition]:
    """Fan-out exploration from one state.

    Ranks all actions by predicted Q, tries the top ``n`` (each slot
    replaced by a uniformly random action with probability ``epsilon``),
    records every resulting transition, and for each non-terminal outcome
    decrements the budget and recurses from the successor state. Every
    action is tried against an independent copy of the input state.
    """
    if state.done or n < 1:
        return []
    m = state.case.m
    q = nn.value_forward(state.observation, value_params)
    ranked = sorted(range(m), key=lambda i: (-q[i], i))
    actions = ranked[: min(n, m)]
    transitions: list[Transition] = []
    budget = n
    for a in actions:
        if epsilon > 0.0 and rng.random() < epsilon:
            a = int(rng.integers(0, m))
        tr, nxt = step(state, a, env_cfg)
        transitions.append(replace(tr, source="explored"))
        if not tr.done:
            budget -= 1
            if budget > 0:
                transitions.extend(extended_explore(nxt, value_params, budget, epsilon, rng, env_cfg))
    return transitions


def guided_episode(state: EpisodeState, guide_params: QNetworkParams, k_max: int, env_cfg: EnvConfig) -> list[Transition]:
    """Run one episode driven by the guide network's predicted trip set.

    The trip set is chosen once from the initial observation and executed
    sequentially; the last executed action is marked terminal. An empty
    trip set records nothing (the predicted optimum is the initial
    condition itself).
    """
    probs = nn.guide_forward(state.observation, guide_params)
    actions = nn.select_eoc(probs, k_max, state.relay.line_id, state.status)
    transitions: list[Transition] = []
    for i, a in enumerate(actions):
        tr, state = step(state, a, env_cfg)
        transitions.append(replace(tr, done=(i == len(actions) - 1), source="guided"))
    return transitions


# ---------------------------------------------------------------------------
# value training


def _batch_targets(
    batch: list[Transition],
    pred: QNetworkParams,
    tgt: QNetworkParams,
    alpha: float,
    gamma: float,
) -> ValueBatch:
    feats = np.asarray([t.s.features for t in batch])
    adjs = np.asarray([t.s.adjacency for t in batch])
    next_feats = np.asarray([t.s_next.features for t in batch])
    next_adjs = np.asarray([t.s_next.adjacency for t in batch])
    q_now = nn._forward_batch(pred, feats, adjs).output
    q_next_pred = nn._forward_batch(pred, next_feats, next_adjs).output
    q_next_tgt = nn._forward_batch(tgt, next_feats, next_adjs).output
    actions = np.asarray([t.a for t in batch], dtype=int)
    targets = np.empty(len(batch))
    for i, t in enumerate(batch):
        targets[i] = nn.d3qn_target(
            q_pred_sa=float(q_now[i, t.a]),
            r=t.r,
            done=t.done,
            q_pred_next=q_next_pred[i],
            q_tgt_next=q_next_tgt[i],
            alpha=alpha,
            gamma=gamma,
        )
    return ValueBatch(features=feats, adjacency=adjs, actions=actions, targets=targets)


def _snapshot_probes(case: GridCase, config: TrainConfig, rng: np.random.Generator):
    """Fixed (status, relay, optimal current) probes for per-round accuracy."""
    from .oracles import global_enumerate  # deferred: oracles imports this module's types

    probes = []
    for _ in range(config.value.snapshot_samples):
        relay = case.relays[int(rng.integers(0, len(case.relays)))]
        status = sample_initial_status(case, relay.line_id, config.initial_outage_limit, rng)
        best = global_enumerate(case, status, relay, config.k_max)
        probes.append((status, relay, best.i_max))
    return probes


def _snapshot_accuracy(case: GridCase, params: QNetworkParams, probes, config: TrainConfig, tol: float = 1e-9) -> float:
    from .evaluation import infer_eoc

    if not probes:
        return float("nan")
    hits = 0
    for status, relay, i_best in probes:
        found = infer_eoc(params, case, status, relay, config.k_max).i_max
        if i_best == 0.0:
            hits += found == 0.0
        elif abs(found - i_best) / abs(i_best) <= tol:
            hits += 1
    return hits / len(probes)


def train_value(
    case: GridCase,
    guide_params: QNetworkParams | None,
    config: TrainConfig,
    ablation: str | None = None,
    progress=None,
    checkpoint=None,
):
    """Train the value network with the guided/free two-stage schedule.

    ``ablation`` optionally disables one component: ``"no_guide"`` (guided
    fraction forced to 0), ``"no_dueling"`` (plain m-output head), or
    ``"no_double"`` (bootstrap action evaluated by the prediction network
    itself). ``checkpoint(round, params, target)`` is called after every
    round when given. Returns ``(value_params, TrainReport)``.
    """
    if ablation not in (None, "no_guide", "no_dueling", "no_double"):
        raise ValueError(f"unknown ablation {ablation!r}")
    v = config.value
    base_pct = 0.0 if ablation == "no_guide" else v.initial_guided_percentage
    if base_pct > 0.0 and guide_params is None:
        raise ValueError("guide_params is required unless the guided fraction is 0")

    t0 = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    env_cfg = EnvConfig(k_max=config.k_max)
    probes = _snapshot_probes(case, config, rng)

    params: QNetworkParams | None = None
    target: QNetworkParams | None = None
    opt = None
    buffer = ReplayBuffer(v.memory)
    report = TrainReport()
    lr = v.learning_rate
    gamma = 1.0  # rewards telescope; order of trips must not discount

    for rnd in range(v.rounds):
        guided_pct = max(0.0, base_pct - rnd * v.percentage_step) if base_pct > 0.0 else 0.0
        losses = []
        for _ in range(v.episodes_per_round):
            relay = case.relays[int(rng.integers(0, len(case.relays)))]
            status = sample_initial_status(case, relay.line_id, config.initial_outage_limit, rng)
            state, obs = reset(case, status, relay, env_cfg)
            if params is None:
                feature_dim = obs.features.shape[1]
                params = nn.build_value_params(
                    case.n, case.m, feature_dim, rng,
                    conv_widths=v.conv_widths, dense_widths=v.dense_widths,
                    dueling=(ablation != "no_dueling"), case_name=case.name,
                )
                target = params.copy()
                opt = nn.adam_init(params, lr)
            use_guide = guided_pct > 0.0 and rng.random() < guided_pct
            if use_guide:
                transitions = guided_episode(state, guide_params, config.k_max, env_cfg)
            else:
                transitions = extended_explore(state, params, v.explore_n, v.epsilon, rng, env_cfg)
            for tr in transitions:
                buffer.push(tr)
            if len(buffer) >= v.batch:
                batch = buffer.sample(v.batch, rng)
                bootstrap_net = params if ablation == "no_double" else target
                vb = _batch_targets(batch, params, bootstrap_net, v.alpha, gamma)
                _, loss = nn.train_step(params, opt, vb, "mse")
                losses.append(loss)

        acc = _snapshot_accuracy(case, params, probes, config)
        report.rounds.append(
            TrainRound(
                round=rnd,
                guided_fraction=guided_pct,
                loss=float(np.mean(losses)) if losses else float("nan"),
                buffer_size=len(buffer),
                accuracy=acc,
                learning_rate=lr,
            )
        )
        target = params.copy()
        if (rnd + 1) % v.lr_step == 0:
            lr *= v.lr_decay
            opt.learning_rate = lr
        if progress is not None:
            progress(report.rounds[-1])
        if checkpoint is not None:
            checkpoint(rnd, params, target)

    report.wall_time_s = time.perf_counter() - t0
    return params, report
