"""Minimal neural stack for the guide and value networks.

Pure numpy, float64, fully deterministic: graph-convolution and dense
layers with manual reverse-mode gradients, a sigmoid multi-label guide
head, a dueling state-value/advantage head with the double-Q blended
target, and Adam. Small networks on small grids do not need a framework,
and hand-rolled layers keep every number reproducible and finite-
difference-checkable.

Conventions: inputs are batched as ``features (B, n, f)`` with a per-sample
normalized adjacency ``(B, n, n)``; node features are flattened node-major
(bus order) before the first dense layer.

Networks whose trunk starts with graph convolutions additionally append
the raw last feature column (the relay-location flag) to the flattened
convolution output. This skip is load-bearing: the symmetrically
normalized adjacency has identical columns for buses with identical
closed neighborhoods, so one convolution maps observations that differ
only in the flag placement on such twin buses to exactly the same tensor;
without the bypass no downstream layer can tell the relays apart.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .grid import TopologyState

__all__ = [
    "Layer",
    "QNetworkParams",
    "AdamState",
    "GuideBatch",
    "ValueBatch",
    "WeightFileError",
    "normalize_adjacency",
    "gcn_forward",
    "dueling_combine",
    "guide_forward",
    "value_forward",
    "select_eoc",
    "d3qn_target",
    "build_guide_params",
    "build_value_params",
    "adam_init",
    "train_step",
    "save_params",
    "load_params",
]

WEIGHT_FORMAT_VERSION = 1


class WeightFileError(ValueError):
    """Raised for unreadable, version-mismatched, or shape-mismatched weight files."""


# ---------------------------------------------------------------------------
# activations


def _act(name: str, pre: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(pre, 0.0)
    if name == "sigmoid":
        return _sigmoid(pre)
    if name == "linear":
        return pre
    raise ValueError(f"unknown activation {name!r}")


def _dact(name: str, pre: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (pre > 0.0).astype(pre.dtype)
    if name == "sigmoid":
        s = _sigmoid(pre)
        return s * (1.0 - s)
    if name == "linear":
        return np.ones_like(pre)
    raise ValueError(f"unknown activation {name!r}")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# layers and parameter containers


@dataclass
class Layer:
    """One weight layer: ``graph_conv`` (per-node) or ``dense`` (flat)."""

    kind: str
    activation: str
    W: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        if self.kind not in ("graph_conv", "dense"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ("relu", "sigmoid", "linear"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[1],):
            raise ValueError("weight matrix must be (in, out) with a matching bias vector")

    @property
    def in_dim(self) -> int:
        return self.W.shape[0]

    @property
    def out_dim(self) -> int:
        return self.W.shape[1]


@dataclass
class QNetworkParams:
    """Weights plus architecture header for a guide or value network.

    ``head`` selects the output semantics:

    - ``guide_sigmoid``: trunk ends in an m-wide sigmoid layer; no branches.
    - ``dueling``: trunk feeds a scalar V branch and an m-wide A branch,
      combined as Q = V + A - mean(A).
    - ``plain_q``: trunk feeds an m-wide linear branch directly (used by
      the no-dueling ablation).
    """

    case_name: str
    n: int
    m: int
    head: str
    trunk: list[Layer]
    v_branch: list[Layer] = field(default_factory=list)
    a_branch: list[Layer] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.head not in ("guide_sigmoid", "dueling", "plain_q"):
            raise ValueError(f"unknown head {self.head!r}")
        if not self.trunk:
            raise ValueError("trunk must contain at least one layer")
        self._check_chain()

    def _check_chain(self) -> None:
        prev: Layer | None = None
        seen_dense = False
        for layer in self.trunk:
            if layer.kind == "graph_conv" and seen_dense:
                raise ValueError("graph_conv layers must precede dense layers")
            if prev is not None:
                expected = prev.out_dim
                if prev.kind == "graph_conv" and layer.kind == "dense":
                    # node-major flatten plus the relay-flag bypass column
                    expected = self.n * prev.out_dim + self.n
                if layer.in_dim != expected:
                    raise ValueError(
                        f"layer dims do not chain: expected in_dim {expected}, got {layer.in_dim}"
                    )
            seen_dense = seen_dense or layer.kind == "dense"
            prev = layer
        trunk_out = self.trunk[-1].out_dim
        if self.trunk[-1].kind == "graph_conv":
            trunk_out = self.n * trunk_out + self.n
        if self.head == "guide_sigmoid":
            if self.v_branch or self.a_branch:
                raise ValueError("guide_sigmoid head takes no branches")
            if self.trunk[-1].out_dim != self.m or self.trunk[-1].activation != "sigmoid":
                raise ValueError("guide trunk must end in an m-wide sigmoid layer")
        else:
            if self.head == "dueling":
                if not self.v_branch or not self.a_branch:
                    raise ValueError("dueling head needs both branches")
                if self.v_branch[-1].out_dim != 1:
                    raise ValueError("V branch must end with a single output")
                self._check_branch(self.v_branch, trunk_out)
            else:
                if self.v_branch:
                    raise ValueError("plain_q head has no V branch")
            if not self.a_branch or self.a_branch[-1].out_dim != self.m:
                raise ValueError("action branch must end with m outputs")
            self._check_branch(self.a_branch, trunk_out)

    @staticmethod
    def _check_branch(branch: list[Layer], in_dim: int) -> None:
        for layer in branch:
            if layer.kind != "dense":
                raise ValueError("branch layers must be dense")
            if layer.in_dim != in_dim:
                raise ValueError(f"branch dims do not chain: expected {in_dim}, got {layer.in_dim}")
            in_dim = layer.out_dim

    def all_layers(self) -> list[Layer]:
        return [*self.trunk, *self.v_branch, *self.a_branch]

    def arrays(self) -> list[np.ndarray]:
        """All weight/bias arrays in fixed declaration order."""
        out: list[np.ndarray] = []
        for layer in self.all_layers():
            out.append(layer.W)
            out.append(layer.b)
        return out

    def copy(self) -> "QNetworkParams":
        def dup(layers: list[Layer]) -> list[Layer]:
            return [Layer(l.kind, l.activation, l.W.copy(), l.b.copy()) for l in layers]

        return QNetworkParams(
            case_name=self.case_name,
            n=self.n,
            m=self.m,
            head=self.head,
            trunk=dup(self.trunk),
            v_branch=dup(self.v_branch),
            a_branch=dup(self.a_branch),
        )


def _init_layer(kind: str, activation: str, in_dim: int, out_dim: int, rng: np.random.Generator) -> Layer:
    # He scaling for rectifier layers, Xavier otherwise
    scale = np.sqrt(2.0 / in_dim) if activation == "relu" else np.sqrt(1.0 / in_dim)
    W = rng.normal(0.0, scale, size=(in_dim, out_dim))
    return Layer(kind=kind, activation=activation, W=W, b=np.zeros(out_dim))


def build_guide_params(
    n: int,
    m: int,
    feature_dim: int,
    rng: np.random.Generator,
    conv_widths: tuple[int, ...] = (64, 64),
    dense_widths: tuple[int, ...] = (256,),
    case_name: str = "",
) -> QNetworkParams:
    """Fresh guide network: graph convs, dense hiddens, m-wide sigmoid output."""
    trunk: list[Layer] = []
    width = feature_dim
    for w in conv_widths:
        trunk.append(_init_layer("graph_conv", "relu", width, w, rng))
        width = w
    flat = n * width + n if conv_widths else n * feature_dim
    for w in dense_widths:
        trunk.append(_init_layer("dense", "relu", flat, w, rng))
        flat = w
    trunk.append(_init_layer("dense", "sigmoid", flat, m, rng))
    return QNetworkParams(case_name=case_name, n=n, m=m, head="guide_sigmoid", trunk=trunk)


def build_value_params(
    n: int,
    m: int,
    feature_dim: int,
    rng: np.random.Generator,
    conv_widths: tuple[int, ...] = (64, 64),
    dense_widths: tuple[int, ...] = (256, 128),
    dueling: bool = True,
    case_name: str = "",
) -> QNetworkParams:
    """Fresh value network: shared trunk plus dueling (or plain) head."""
    trunk: list[Layer] = []
    width = feature_dim
    for w in conv_widths:
        trunk.append(_init_layer("graph_conv", "relu", width, w, rng))
        width = w
    flat = n * width + n if conv_widths else n * feature_dim
    for w in dense_widths:
        trunk.append(_init_layer("dense", "relu", flat, w, rng))
        flat = w
    if dueling:
        v_branch = [_init_layer("dense", "linear", flat, 1, rng)]
        a_branch = [_init_layer("dense", "linear", flat, m, rng)]
        return QNetworkParams(
            case_name=case_name, n=n, m=m, head="dueling", trunk=trunk, v_branch=v_branch, a_branch=a_branch
        )
    a_branch = [_init_layer("dense", "linear", flat, m, rng)]
    return QNetworkParams(case_name=case_name, n=n, m=m, head="plain_q", trunk=trunk, a_branch=a_branch)


# ---------------------------------------------------------------------------
# elementary ops


def normalize_adjacency(A: np.ndarray) -> np.ndarray:
    """Symmetrically normalized self-loop adjacency.

    With Atil = A + I and Dtil = diag(row sums of Atil), returns
    Dtil^(-1/2) Atil Dtil^(-1/2). Row sums are >= 1 after self-loops, so
    the normalization is always defined.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("adjacency must be square")
    if not np.allclose(A, A.T):
        raise ValueError("adjacency must be symmetric")
    atil = A + np.eye(A.shape[0])
    dinv_sqrt = 1.0 / np.sqrt(atil.sum(axis=1))
    return atil * np.outer(dinv_sqrt, dinv_sqrt)


def gcn_forward(H: np.ndarray, A_hat: np.ndarray, W: np.ndarray, b: np.ndarray | None = None, activation: str = "linear") -> np.ndarray:
    """One graph-convolution step: activation(A_hat @ H @ W + b)."""
    H = np.asarray(H, dtype=float)
    A_hat = np.asarray(A_hat, dtype=float)
    W = np.asarray(W, dtype=float)
    if A_hat.shape[-1] != H.shape[-2] or H.shape[-1] != W.shape[0]:
        raise ValueError(
            f"shape mismatch: A_hat {A_hat.shape}, H {H.shape}, W {W.shape}"
        )
    pre = A_hat @ H @ W
    if b is not None:
        pre = pre + b
    return _act(activation, pre)


def dueling_combine(v: float, a_vec: np.ndarray) -> np.ndarray:
    """Q = V + A - mean(A), the advantage-centred dueling aggregation."""
    a_vec = np.asarray(a_vec, dtype=float)
    if a_vec.ndim != 1 or a_vec.size < 1:
        raise ValueError("advantage must be a nonempty vector")
    return v + a_vec - a_vec.mean()


def d3qn_target(
    q_pred_sa: float,
    r: float,
    done: bool,
    q_pred_next: np.ndarray,
    q_tgt_next: np.ndarray,
    alpha: float,
    gamma: float,
    valid_mask: np.ndarray | None = None,
) -> float:
    """Blended double-Q update target for one transition.

    The prediction network picks the bootstrap action (first maximizer on
    ties, optionally restricted by ``valid_mask``); the target network
    evaluates it; the result is mixed with the current prediction:
    (1 - alpha) * q_pred_sa + alpha * (r + gamma * q_tgt_next[a*]), with the
    bootstrap dropped on terminal transitions.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    if done:
        bootstrap = r
    else:
        q_pred_next = np.asarray(q_pred_next, dtype=float)
        q_tgt_next = np.asarray(q_tgt_next, dtype=float)
        if valid_mask is not None:
            masked = np.where(np.asarray(valid_mask, dtype=bool), q_pred_next, -np.inf)
        else:
            masked = q_pred_next
        a_star = int(np.argmax(masked))
        bootstrap = r + gamma * float(q_tgt_next[a_star])
    return (1.0 - alpha) * float(q_pred_sa) + alpha * bootstrap


def select_eoc(outputs: np.ndarray, k: int, protected_line: int, status: TopologyState) -> list[int]:
    """Pick the trip set implied by guide-network outputs.

    Candidates are in-service, non-protected lines whose output exceeds
    0.5. Returns the k highest-scoring candidates (ties to the lower line
    id), or all candidates when fewer than k clear the threshold. The list
    is ordered by descending output, which is also the execution order of
    a guided episode.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    outputs = np.asarray(outputs, dtype=float)
    candidates = [
        i
        for i in range(outputs.size)
        if i != protected_line and status.in_service(i) and outputs[i] > 0.5
    ]
    candidates.sort(key=lambda i: (-outputs[i], i))
    return candidates[:k]


# ---------------------------------------------------------------------------
# forward/backward over whole networks


def _run_layers(layers: list[Layer], H: np.ndarray, A: np.ndarray | None, caches: list | None):
    for layer in layers:
        if layer.kind == "graph_conv":
            if H.ndim != 3:
                raise ValueError("graph_conv expects (B, n, f) inputs")
            AH = A @ H
            pre = AH @ layer.W + layer.b
        else:
            pre = H @ layer.W + layer.b
        out = _act(layer.activation, pre)
        if caches is not None:
            caches.append((layer, H, AH if layer.kind == "graph_conv" else None, pre, A))
        H = out
    return H


@dataclass
class _Forward:
    """Cached activations from one batched forward pass."""

    output: np.ndarray
    conv_caches: list
    dense_caches: list
    v_caches: list
    a_caches: list
    conv_out_shape: tuple | None  # set when the trunk has conv layers


def _forward_batch(params: QNetworkParams, features: np.ndarray, adjacency: np.ndarray) -> _Forward:
    F = np.asarray(features, dtype=float)
    A = np.asarray(adjacency, dtype=float)
    if F.ndim == 2:
        F = F[None]
        A = A[None]
    if F.ndim != 3 or A.ndim != 3 or A.shape[1] != A.shape[2] or A.shape[1] != F.shape[1]:
        raise ValueError(f"bad input shapes: features {F.shape}, adjacency {A.shape}")
    conv_layers = [l for l in params.trunk if l.kind == "graph_conv"]
    dense_layers = [l for l in params.trunk if l.kind == "dense"]
    conv_caches: list = []
    conv_out_shape = None
    if conv_layers:
        H = _run_layers(conv_layers, F, A, conv_caches)
        conv_out_shape = H.shape
        # node-major flatten plus the relay-flag bypass (see module docstring)
        flat = np.concatenate([H.reshape(H.shape[0], -1), F[:, :, -1]], axis=1)
    else:
        flat = F.reshape(F.shape[0], -1)
    dense_caches: list = []
    H = _run_layers(dense_layers, flat, None, dense_caches)
    if params.head == "guide_sigmoid":
        return _Forward(output=H, conv_caches=conv_caches, dense_caches=dense_caches,
                        v_caches=[], a_caches=[], conv_out_shape=conv_out_shape)
    v_caches: list = []
    a_caches: list = []
    a_out = _run_layers(params.a_branch, H, None, a_caches)
    if params.head == "dueling":
        v_out = _run_layers(params.v_branch, H, None, v_caches)
        q = v_out + a_out - a_out.mean(axis=1, keepdims=True)
    else:
        q = a_out
    return _Forward(output=q, conv_caches=conv_caches, dense_caches=dense_caches,
                    v_caches=v_caches, a_caches=a_caches, conv_out_shape=conv_out_shape)


def guide_forward(obs, params: QNetworkParams):
    """Guide-network probabilities for one observation (or a batch).

    ``obs`` needs ``features`` and ``adjacency`` arrays (an
    :class:`eocsearch.env.Observation` fits). Returns an m-vector in
    (0, 1), or a (B, m) matrix for batched input.
    """
    if params.head != "guide_sigmoid":
        raise ValueError(f"guide_forward needs a guide_sigmoid head, got {params.head!r}")
    fwd = _forward_batch(params, obs.features, obs.adjacency)
    out = fwd.output
    return out[0] if np.asarray(obs.features).ndim == 2 else out


def value_forward(obs, params: QNetworkParams):
    """Q-vector for one observation (or a batch) from a value network."""
    if params.head not in ("dueling", "plain_q"):
        raise ValueError(f"value_forward needs a dueling or plain_q head, got {params.head!r}")
    fwd = _forward_batch(params, obs.features, obs.adjacency)
    out = fwd.output
    return out[0] if np.asarray(obs.features).ndim == 2 else out


def _backward(params: QNetworkParams, fwd: _Forward, dOut: np.ndarray, skip_last_act: bool = False) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    grads: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    if params.head == "guide_sigmoid":
        d_flat = _walk_back(fwd.dense_caches, dOut, grads, skip_last_act)
    else:
        if params.head == "dueling":
            dq = dOut
            # Q_j = V + A_j - mean(A): dV = sum_j dQ_j, dA_i = dQ_i - mean_j dQ_j
            dv = dq.sum(axis=1, keepdims=True)
            da = dq - dq.mean(axis=1, keepdims=True)
            d_trunk = _walk_back(fwd.a_caches, da, grads, False)
            d_trunk = d_trunk + _walk_back(fwd.v_caches, dv, grads, False)
        else:
            d_trunk = _walk_back(fwd.a_caches, dOut, grads, False)
        d_flat = _walk_back(fwd.dense_caches, d_trunk, grads, False)
    if fwd.conv_caches:
        # drop the flag-bypass slice: it carries no upstream parameters
        B, n, f = fwd.conv_out_shape
        d_conv = d_flat[:, : n * f].reshape(B, n, f)
        _walk_back(fwd.conv_caches, d_conv, grads, False)
    return grads


def _walk_back(caches: list, dOut: np.ndarray, grads: dict, skip_last_act: bool) -> np.ndarray:
    """Walk a cache list backwards, accumulating (dW, db) per layer id.

    ``skip_last_act`` treats ``dOut`` as the gradient at the last layer's
    preactivation (used by the fused sigmoid/BCE path). Returns the
    gradient at the input of the first cached layer.
    """
    for depth, (layer, H_in, AH, pre, A) in enumerate(reversed(caches)):
        if depth == 0 and skip_last_act:
            dpre = dOut
        else:
            if dOut.shape != pre.shape:
                dOut = dOut.reshape(pre.shape)
            dpre = dOut * _dact(layer.activation, pre)
        if layer.kind == "graph_conv":
            gW = np.einsum("bnf,bng->fg", AH, dpre)
            gb = dpre.sum(axis=(0, 1))
            dAH = dpre @ layer.W.T
            dOut = np.swapaxes(A, 1, 2) @ dAH
        else:
            gW = H_in.T @ dpre
            gb = dpre.sum(axis=0)
            dOut = dpre @ layer.W.T
        key = id(layer)
        if key in grads:
            oW, ob = grads[key]
            grads[key] = (oW + gW, ob + gb)
        else:
            grads[key] = (gW, gb)
    return dOut


# ---------------------------------------------------------------------------
# losses, optimizer, training step


@dataclass
class GuideBatch:
    """Supervised batch for the guide network (labels: 1 = out of service)."""

    features: np.ndarray  # (B, n, f)
    adjacency: np.ndarray  # (B, n, n)
    labels: np.ndarray  # (B, m) in {0, 1}


@dataclass
class ValueBatch:
    """TD batch for the value network: taken actions and fixed targets."""

    features: np.ndarray
    adjacency: np.ndarray
    actions: np.ndarray  # (B,) int
    targets: np.ndarray  # (B,) float


@dataclass
class AdamState:
    """Adaptive-moment optimizer state, one slot pair per parameter array."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ValueError(f"learning rate must be > 0, got {self.learning_rate}")


def adam_init(params: QNetworkParams, learning_rate: float) -> AdamState:
    arrays = params.arrays()
    return AdamState(
        learning_rate=learning_rate,
        m=[np.zeros_like(a) for a in arrays],
        v=[np.zeros_like(a) for a in arrays],
    )


def _adam_apply(opt: AdamState, arrays: list[np.ndarray], grads: list[np.ndarray]) -> None:
    opt.step += 1
    b1c = 1.0 - opt.beta1 ** opt.step
    b2c = 1.0 - opt.beta2 ** opt.step
    for arr, g, m, v in zip(arrays, grads, opt.m, opt.v):
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * g * g
        arr -= opt.learning_rate * (m / b1c) / (np.sqrt(v / b2c) + opt.eps)


def _bce_from_logits(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    # mean over batch and outputs; gradient w.r.t. logits
    loss = np.mean(np.logaddexp(0.0, logits) - labels * logits)
    dlogits = (_sigmoid(logits) - labels) / logits.size
    return float(loss), dlogits


def train_step(params: QNetworkParams, optimizer: AdamState, batch, loss_kind: str):
    """One gradient step on a batch; returns ``(params, loss)``.

    ``loss_kind`` is ``"bce"`` (guide, multi-label targets) or ``"mse"``
    (value, squared error on the taken action's Q against a fixed target).
    Parameters are updated in place.
    """
    if loss_kind == "bce":
        if params.head != "guide_sigmoid":
            raise ValueError("bce loss requires a guide_sigmoid head")
        labels = np.asarray(batch.labels, dtype=float)
        if labels.shape[0] == 0:
            raise ValueError("batch must be non-empty")
        fwd = _forward_batch(params, batch.features, batch.adjacency)
        logits = fwd.dense_caches[-1][3]  # preactivation of the sigmoid layer
        loss, dlogits = _bce_from_logits(logits, labels)
        grads = _backward(params, fwd, dlogits, skip_last_act=True)
    elif loss_kind == "mse":
        if params.head not in ("dueling", "plain_q"):
            raise ValueError("mse loss requires a value head")
        actions = np.asarray(batch.actions, dtype=int)
        targets = np.asarray(batch.targets, dtype=float)
        if actions.shape[0] == 0:
            raise ValueError("batch must be non-empty")
        fwd = _forward_batch(params, batch.features, batch.adjacency)
        q = fwd.output
        rows = np.arange(actions.shape[0])
        q_sa = q[rows, actions]
        err = q_sa - targets
        loss = float(np.mean(err * err))
        dq = np.zeros_like(q)
        dq[rows, actions] = 2.0 * err / actions.shape[0]
        grads = _backward(params, fwd, dq)
    else:
        raise ValueError(f"unknown loss kind {loss_kind!r}")

    if not np.isfinite(loss):
        raise FloatingPointError(
            f"non-finite {loss_kind} loss ({loss}); check targets and learning rate"
        )
    arrays = []
    grad_list = []
    for layer in params.all_layers():
        gW, gb = grads.get(id(layer), (np.zeros_like(layer.W), np.zeros_like(layer.b)))
        arrays.extend((layer.W, layer.b))
        grad_list.extend((gW, gb))
    _adam_apply(optimizer, arrays, grad_list)
    return params, loss


# ---------------------------------------------------------------------------
# persistence


def _layer_to_doc(layer: Layer) -> dict:
    return {
        "kind": layer.kind,
        "activation": layer.activation,
        "in_dim": layer.in_dim,
        "out_dim": layer.out_dim,
        "W": layer.W.tolist(),
        "b": layer.b.tolist(),
    }


def _layer_from_doc(doc: dict) -> Layer:
    W = np.asarray(doc["W"], dtype=float)
    b = np.asarray(doc["b"], dtype=float)
    if W.shape != (doc["in_dim"], doc["out_dim"]) or b.shape != (doc["out_dim"],):
        raise WeightFileError(
            f"stored array shapes {W.shape}/{b.shape} disagree with declared dims "
            f"({doc['in_dim']}, {doc['out_dim']})"
        )
    return Layer(kind=doc["kind"], activation=doc["activation"], W=W, b=b)


def save_params(params: QNetworkParams, path) -> None:
    """Write a self-describing JSON weight file (bit-exact round trip)."""
    doc = {
        "format_version": WEIGHT_FORMAT_VERSION,
        "case_name": params.case_name,
        "n": params.n,
        "m": params.m,
        "head": params.head,
        "trunk": [_layer_to_doc(l) for l in params.trunk],
        "v_branch": [_layer_to_doc(l) for l in params.v_branch],
        "a_branch": [_layer_to_doc(l) for l in params.a_branch],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_params(path, expect_n: int | None = None, expect_m: int | None = None) -> QNetworkParams:
    """Load a weight file, optionally checking it against a case's n and m."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise WeightFileError(f"weight file {path} is corrupt or truncated: {exc}") from None
    for key in ("format_version", "case_name", "n", "m", "head", "trunk", "v_branch", "a_branch"):
        if key not in doc:
            raise WeightFileError(f"weight file {path} is missing the {key!r} key")
    if doc["format_version"] != WEIGHT_FORMAT_VERSION:
        raise WeightFileError(
            f"weight file format {doc['format_version']} not supported (want {WEIGHT_FORMAT_VERSION})"
        )
    if expect_n is not None and doc["n"] != expect_n:
        raise WeightFileError(f"weight file built for n={doc['n']} buses, case has n={expect_n}")
    if expect_m is not None and doc["m"] != expect_m:
        raise WeightFileError(f"weight file built for m={doc['m']} lines, case has m={expect_m}")
    try:
        return QNetworkParams(
            case_name=doc["case_name"],
            n=doc["n"],
            m=doc["m"],
            head=doc["head"],
            trunk=[_layer_from_doc(d) for d in doc["trunk"]],
            v_branch=[_layer_from_doc(d) for d in doc["v_branch"]],
            a_branch=[_layer_from_doc(d) for d in doc["a_branch"]],
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, WeightFileError):
            raise
        raise WeightFileError(f"weight file {path} is malformed: {exc}") from None
