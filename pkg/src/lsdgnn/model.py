"""Long/short-distance DAG network for utterance-level emotion classification.

Two channels run the same layer stack over graphs with different look-back
(``omega_long`` vs 1). After every layer a bilinear attention exchange mixes
each channel's states with the other's; the exchanged states from all layers
plus the fused input are concatenated and classified per utterance. The loss
adds the inverse Frobenius distance between the channels' attention matrices.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from lsdgnn.convgraph import MODALITIES, Conversation, ConversationDAG, build_dag
from lsdgnn.errors import ConfigError, ContractError, DataError, DimensionError
from lsdgnn.numerics import ops
from lsdgnn.numerics.tensor import ParameterStore, Tensor

CHANNELS = ("long", "short")


@dataclass
class ModelConfig:
    num_layers: int = 4
    hidden_dim: int = 16
    omega_long: int | None = 5  # None: unbounded
    omega_short: int = 1
    dropout: float = 0.4
    lambda_reg: float = 0.1
    num_classes: int = 6
    modality_dims: dict = field(default_factory=lambda: {"text": 0, "audio": 0, "visual": 0})
    epsilon_reg: float = 1e-8
    reg_cap: float = 100.0
    classifier_dim: int | None = None  # width of the ReLU layer; defaults to hidden_dim
    biaffine_feeds_next_layer: bool = False
    use_biaffine: bool = True
    use_long_channel: bool = True
    reg_reduction: str = "mean"  # how R_D combines across a batch: "mean" or "sum"

    def __post_init__(self):
        if self.omega_long == "unbounded":
            self.omega_long = None
        unknown = set(self.modality_dims) - set(MODALITIES)
        if unknown:
            raise ConfigError(f"unknown modalities {sorted(unknown)}")
        self.modality_dims = {m: int(self.modality_dims.get(m, 0)) for m in MODALITIES}
        if self.num_layers < 1:
            raise ConfigError(f"num_layers must be >= 1, got {self.num_layers}")
        if self.hidden_dim < 1:
            raise ConfigError(f"hidden_dim must be >= 1, got {self.hidden_dim}")
        if self.omega_short != 1:
            raise ConfigError(f"omega_short is fixed at 1, got {self.omega_short}")
        if self.omega_long is not None and (not isinstance(self.omega_long, int) or self.omega_long < 2):
            raise ConfigError(f"omega_long must be >= 2 or unbounded, got {self.omega_long!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.lambda_reg < 0:
            raise ConfigError(f"lambda_reg must be non-negative, got {self.lambda_reg}")
        if self.num_classes < 1:
            raise ConfigError(f"num_classes must be >= 1, got {self.num_classes}")
        if any(v < 0 for v in self.modality_dims.values()) or sum(self.modality_dims.values()) == 0:
            raise ConfigError(f"modality_dims need at least one positive width, got {self.modality_dims}")
        if not self.epsilon_reg > 0 or not self.reg_cap > 0:
            raise ConfigError("epsilon_reg and reg_cap must be positive")
        if self.reg_reduction not in ("mean", "sum"):
            raise ConfigError(f"reg_reduction must be 'mean' or 'sum', got {self.reg_reduction!r}")

    @property
    def channels(self) -> tuple[str, ...]:
        return CHANNELS if self.use_long_channel else ("short",)

    @property
    def fused_dim(self) -> int:
        return sum(self.modality_dims.values())

    @property
    def feature_dim(self) -> int:
        return len(self.channels) * self.num_layers * self.hidden_dim + self.hidden_dim

    @property
    def head_dim(self) -> int:
        return self.classifier_dim or self.hidden_dim

    def to_dict(self) -> dict:
        return asdict(self)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def init_params(config: ModelConfig, seed: int = 0) -> ParameterStore:
    """Glorot-uniform weights and zero biases, drawn in store order from ``seed``."""
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    h = config.hidden_dim

    def weight(name, fan_in, fan_out):
        store.add(name, _glorot(rng, fan_in, fan_out, (fan_in, fan_out)))

    for m in ("audio", "visual"):
        d = config.modality_dims[m]
        if d:
            weight(f"encoder.{m}.W", d, d)
            store.add(f"encoder.{m}.b", np.zeros(d))
    weight("fusion.W", config.fused_dim, h)
    store.add("fusion.b", np.zeros(h))
    for ch in config.channels:
        for l in range(config.num_layers):
            p = f"{ch}.{l}"
            store.add(f"{p}.w_alpha", _glorot(rng, 2 * h, 1, (2 * h,)))
            weight(f"{p}.W_rel0", h, h)
            weight(f"{p}.W_rel1", h, h)
            for g in ("gru_h", "gru_m"):
                store.add(f"{p}.{g}.W_x", _glorot(rng, h, 3 * h, (h, 3 * h)))
                store.add(f"{p}.{g}.W_h", _glorot(rng, h, 3 * h, (h, 3 * h)))
                store.add(f"{p}.{g}.b", np.zeros(3 * h))
    if config.use_long_channel and config.use_biaffine:
        for l in range(config.num_layers):
            weight(f"biaffine.{l}.W1", h, h)
            weight(f"biaffine.{l}.W2", h, h)
    weight("classifier.W_H", config.feature_dim, config.head_dim)
    store.add("classifier.b_H", np.zeros(config.head_dim))
    weight("classifier.W_z", config.head_dim, config.num_classes)
    store.add("classifier.b_z", np.zeros(config.num_classes))
    return store


# ---------------------------------------------------------------------------
# Input fusion
# ---------------------------------------------------------------------------


def fuse_modalities(features: dict[str, np.ndarray], params: ParameterStore, config: ModelConfig) -> Tensor:
    """Concatenate encoded audio, encoded visual and raw text features, in that order."""
    parts = []
    n = None
    for m in ("audio", "visual", "text"):
        width = config.modality_dims[m]
        if width == 0:
            continue
        x = features.get(m)
        if x is None:
            raise DataError(f"modality {m!r} configured with width {width} but absent")
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != width:
            raise DimensionError(f"modality {m!r}: feature width {x.shape[1]} != configured {width}")
        if n is not None and x.shape[0] != n:
            raise DimensionError(f"modality {m!r}: {x.shape[0]} rows, expected {n}")
        n = x.shape[0]
        xt = Tensor(x)
        if m == "text":
            parts.append(xt)
        else:
            parts.append(ops.linear(xt, params[f"encoder.{m}.W"], params[f"encoder.{m}.b"]))
    if not parts:
        raise DataError("no modality features present")
    return parts[0] if len(parts) == 1 else ops.concat(parts, axis=1)


def encode_modalities(features: dict[str, np.ndarray], params: ParameterStore, config: ModelConfig) -> Tensor:
    """Fused input states, projected to ``hidden_dim``: shape (n, hidden_dim)."""
    fused = fuse_modalities(features, params, config)
    return ops.linear(fused, params["fusion.W"], params["fusion.b"])


# ---------------------------------------------------------------------------
# One DAG layer
# ---------------------------------------------------------------------------


@dataclass
class LayerOutput:
    hidden: Tensor  # (n, h)
    attention: Tensor  # (n, n), row = target utterance


_LAYER_PARAMS = ("w_alpha", "W_rel0", "W_rel1",
                 "gru_h.W_x", "gru_h.W_h", "gru_h.b", "gru_m.W_x", "gru_m.W_h", "gru_m.b")


def dag_layer_forward(H_prev: Tensor, dag: ConversationDAG, params: ParameterStore, prefix: str) -> LayerOutput:
    """Run one layer over ``dag`` in utterance order.

    Node ``i`` scores each predecessor ``j`` as ``w_alpha . [H_j ; H_prev_i]``
    using the predecessor's *current-layer* state, softmaxes the scores, and
    aggregates ``M_i = sum_j alpha_ij H_j W_rel[r_ij]``. Two GRUs with
    swapped roles combine ``M_i`` with ``H_prev_i``: ``gru_h`` keeps
    ``H_prev_i`` as its hidden state, ``gru_m`` keeps ``M_i``. The new state
    is their sum. Nodes without predecessors use ``M_i = 0``.

    The whole layer is a single tape node; its reverse sweep walks the nodes
    backwards so later nodes have pushed their gradient into earlier states
    before those are processed.
    """
    if not dag.is_valid():
        raise ContractError(f"invalid conversation graph: {dag._violations}")
    if H_prev.ndim != 2:
        raise DimensionError(f"layer input must be (n, h), got {H_prev.shape}")
    n, h = H_prev.shape
    if n != dag.n_nodes:
        raise DimensionError(f"{n} node states for a graph of {dag.n_nodes} nodes")
    tensors = [params[f"{prefix}.{k}"] for k in _LAYER_PARAMS]
    expected = [(2 * h,), (h, h), (h, h)] + [(h, 3 * h), (h, 3 * h), (3 * h,)] * 2
    for name, t, shape in zip(_LAYER_PARAMS, tensors, expected):
        if t.shape != shape:
            raise DimensionError(f"{prefix}.{name} has shape {t.shape}, expected {shape}")
    w_alpha, W0, W1, WxH, WhH, bH, WxM, WhM, bM = (t.data for t in tensors)
    W_rel = (W0, W1)
    a_pred = w_alpha[:h]
    # The H_prev_i half of the score is the same for every predecessor of i,
    # so it cancels inside the softmax; it is left out of the forward value
    # and its gradient is exactly zero.
    Hp = H_prev.data

    # Row-batched pieces that depend only on H_prev.
    hzr_H = Hp @ WhH[:, : 2 * h]
    ax_M = Hp @ WxM + bM

    preds = dag.pred_arrays
    H = np.zeros((n, h))
    A = np.zeros((n, n))
    Ms = np.zeros((n, h))
    mixes = np.zeros((2, n, h))  # per relation: alpha-weighted sum of source states
    caches = []
    for i in range(n):
        idx, groups = preds[i]
        alpha = None
        if idx.size:
            s = H[idx] @ a_pred
            e = np.exp(s - s.max())
            alpha = e / e.sum()
            A[i, idx] = alpha
            for r, sel in groups:
                mixes[r, i] = alpha[sel] @ H[idx[sel]]
                Ms[i] += mixes[r, i] @ W_rel[r]
        out_h, cache_h = ops.gru_forward(Ms[i], Hp[i], WxH, WhH, bH, hzr=hzr_H[i])
        out_m, cache_m = ops.gru_forward(Hp[i], Ms[i], WxM, WhM, bM, ax=ax_M[i])
        H[i] = out_h + out_m
        caches.append((alpha, cache_h, cache_m))

    packed = np.concatenate([H, A], axis=1)

    def grad(g):
        gH = g[:, :h].copy()
        gA = g[:, h:]
        da_H = np.zeros((n, 3 * h))
        da_M = np.zeros((n, 3 * h))
        rh_H = np.zeros((n, h))
        rh_M = np.zeros((n, h))
        gMs = np.zeros((n, h))
        gHp = np.zeros((n, h))
        g_alpha_vec = np.zeros(2 * h)
        WxH_T = WxH.T
        WhM_zr = WhM[:, : 2 * h]
        for i in range(n - 1, -1, -1):
            alpha, cache_h, cache_m = caches[i]
            gi = gH[i]
            # gru_h: x = M, hidden = H_prev_i
            da, dh, _ = ops.gru_backward(gi, cache_h, WhH, weight_grad=False)
            da_H[i] = da
            rh_H[i] = cache_h[3]
            gHp[i] = dh
            gM = da @ WxH_T
            # gru_m: x = H_prev_i, hidden = M
            da, dh, _ = ops.gru_backward(gi, cache_m, WhM, weight_grad=False)
            da_M[i] = da
            rh_M[i] = cache_m[3]
            gM += dh + WhM_zr @ da[: 2 * h]
            gMs[i] = gM
            idx, groups = preds[i]
            if not idx.size:
                continue
            g_alpha = gA[i, idx].copy()
            for r, sel in groups:
                gv = W_rel[r] @ gM
                src = idx[sel]
                gH[src] += alpha[sel, None] * gv
                g_alpha[sel] += H[src] @ gv
            ds = alpha * (g_alpha - g_alpha @ alpha)
            g_alpha_vec[:h] += ds @ H[idx]
            gH[idx] += ds[:, None] * a_pred
        gW0 = mixes[0].T @ gMs
        gW1 = mixes[1].T @ gMs
        gWxH = Ms.T @ da_H
        gbH = da_H.sum(axis=0)
        gWhH = np.concatenate([Hp.T @ da_H[:, : 2 * h], rh_H.T @ da_H[:, 2 * h :]], axis=1)
        gWhM = np.concatenate([Ms.T @ da_M[:, : 2 * h], rh_M.T @ da_M[:, 2 * h :]], axis=1)
        gWxM = Hp.T @ da_M
        gbM = da_M.sum(axis=0)
        gHp += da_H[:, : 2 * h] @ WhH[:, : 2 * h].T + da_M @ WxM.T
        return (gHp, g_alpha_vec, gW0, gW1, gWxH, gWhH, gbH, gWxM, gWhM, gbM)

    out = Tensor.from_op(packed, (H_prev, *tensors), grad)
    return LayerOutput(hidden=ops.take(out, (slice(None), slice(0, h))),
                       attention=ops.take(out, (slice(None), slice(h, h + n))))


# ---------------------------------------------------------------------------
# Cross-channel exchange, feature assembly, classifier
# ---------------------------------------------------------------------------


def biaffine_exchange(H_L: Tensor, H_S: Tensor, W1: Tensor, W2: Tensor) -> tuple[Tensor, Tensor]:
    """``softmax_rows(H_L W1 H_S^T) H_S`` and ``softmax_rows(H_S W2 H_L^T) H_L``."""
    if H_L.shape != H_S.shape or H_L.ndim != 2:
        raise DimensionError(f"biaffine_exchange: channel shapes {H_L.shape} and {H_S.shape} differ")
    h = H_L.shape[1]
    if W1.shape != (h, h) or W2.shape != (h, h):
        raise DimensionError(f"biaffine_exchange: weights {W1.shape}, {W2.shape} need ({h}, {h})")
    att_l = ops.softmax(ops.matmul(ops.matmul(H_L, W1), ops.transpose(H_S)), axis=1)
    att_s = ops.softmax(ops.matmul(ops.matmul(H_S, W2), ops.transpose(H_L)), axis=1)
    return ops.matmul(att_l, H_S), ops.matmul(att_s, H_L)


def assemble_features(long_layers: Sequence[Tensor], short_layers: Sequence[Tensor], H0: Tensor,
                      num_layers: int | None = None) -> Tensor:
    """Long-channel layers, then short-channel layers, then ``H0``, column-wise."""
    if num_layers is not None:
        for name, layers in (("long", long_layers), ("short", short_layers)):
            if layers and len(layers) != num_layers:
                raise ContractError(f"{name} channel has {len(layers)} layers, expected {num_layers}")
    if not short_layers:
        raise ContractError("short channel has no layers")
    return ops.concat([*long_layers, *short_layers, H0], axis=1)


def classify(H: Tensor, params: ParameterStore) -> tuple[Tensor, np.ndarray, Tensor]:
    """Returns ``(probabilities, predictions, logits)``; argmax ties go to the lowest class."""
    W_H = params["classifier.W_H"]
    if H.ndim != 2 or H.shape[1] != W_H.shape[0]:
        raise DimensionError(f"classify: feature shape {H.shape} does not match W_H {W_H.shape}")
    z = ops.relu(ops.linear(H, W_H, params["classifier.b_H"]))
    logits = ops.linear(z, params["classifier.W_z"], params["classifier.b_z"])
    probs = ops.softmax(logits, axis=1)
    return probs, np.argmax(logits.data, axis=1), logits


# ---------------------------------------------------------------------------
# Regularizer and loss
# ---------------------------------------------------------------------------


@dataclass
class ChannelTrace:
    hidden: list[Tensor] = field(default_factory=list)
    attention: list[Tensor] = field(default_factory=list)


def differential_regularizer(trace_short: ChannelTrace, trace_long: ChannelTrace,
                             epsilon_reg: float = 1e-8, reg_cap: float = 100.0) -> Tensor:
    """Mean over layers of ``min(1 / (||A_short - A_long||_F + eps), cap)``."""
    if len(trace_short.attention) != len(trace_long.attention):
        raise ContractError(
            f"layer count mismatch: {len(trace_short.attention)} short vs {len(trace_long.attention)} long"
        )
    if not trace_short.attention:
        raise ContractError("traces contain no layers")
    terms = []
    for a_s, a_l in zip(trace_short.attention, trace_long.attention):
        d = ops.frobenius_distance(a_s, a_l)
        terms.append(ops.clip_max(ops.reciprocal(ops.add(d, epsilon_reg)), reg_cap))
    return ops.mean(ops.stack(terms))


def attention_distances(trace_short: ChannelTrace, trace_long: ChannelTrace) -> list[float]:
    return [
        float(np.sqrt(((a.data - b.data) ** 2).sum()))
        for a, b in zip(trace_short.attention, trace_long.attention)
    ]


def total_loss(logits: Tensor, labels: Sequence[int], reg: Tensor | Sequence[Tensor] | None,
               lambda_reg: float, reduction: str = "mean") -> Tensor:
    """Summed cross-entropy plus ``lambda_reg`` times the batch's combined regularizer."""
    labels = list(labels)
    if logits.ndim != 2 or logits.shape[0] != len(labels):
        raise ContractError(f"{len(labels)} labels for logits of shape {logits.shape}")
    loss = ops.cross_entropy_loss(logits, labels)
    if reg is None or lambda_reg == 0.0:
        return loss
    if isinstance(reg, Tensor):
        reg = [reg]
    stacked = ops.stack(list(reg))
    combined = ops.mean(stacked) if reduction == "mean" else ops.sum(stacked)
    return ops.add(loss, ops.scale(combined, lambda_reg))


# ---------------------------------------------------------------------------
# Full forward
# ---------------------------------------------------------------------------


@dataclass
class ForwardResult:
    logits: Tensor
    probabilities: Tensor
    predictions: np.ndarray
    reg: Tensor | None
    traces: dict[str, ChannelTrace]
    features: Tensor


@lru_cache(maxsize=4096)
def _dag_for(speakers: tuple[str, ...], omega: int | None) -> ConversationDAG:
    # Graphs depend only on the speaker sequence; reusing them keeps their index caches warm.
    return build_dag(speakers, omega)


def model_forward(conversation: Conversation, params: ParameterStore, config: ModelConfig,
                  mode: str = "eval", rng: np.random.Generator | None = None) -> ForwardResult:
    """Classify every utterance of ``conversation``.

    ``mode="train"`` enables dropout (needs ``rng``) on the fused input and on
    each layer's output.
    """
    if mode not in ("train", "eval"):
        raise ContractError(f"mode must be 'train' or 'eval', got {mode!r}")
    training = mode == "train"
    p = config.dropout

    H0 = encode_modalities(conversation.features, params, config)
    H0 = ops.dropout(H0, p, rng, training)
    speakers = conversation.speakers
    dags = {"long": _dag_for(speakers, config.omega_long), "short": _dag_for(speakers, 1)}
    channels = config.channels
    state = {ch: H0 for ch in channels}
    traces = {ch: ChannelTrace() for ch in channels}
    primed: dict[str, list[Tensor]] = {ch: [] for ch in channels}
    exchange = config.use_long_channel and config.use_biaffine

    for l in range(config.num_layers):
        out = {}
        for ch in channels:
            layer = dag_layer_forward(state[ch], dags[ch], params, f"{ch}.{l}")
            hidden = ops.dropout(layer.hidden, p, rng, training)
            traces[ch].hidden.append(hidden)
            traces[ch].attention.append(layer.attention)
            out[ch] = hidden
        if exchange:
            hl, hs = biaffine_exchange(out["long"], out["short"],
                                       params[f"biaffine.{l}.W1"], params[f"biaffine.{l}.W2"])
            mixed = {"long": hl, "short": hs}
        else:
            mixed = out
        for ch in channels:
            primed[ch].append(mixed[ch])
            state[ch] = mixed[ch] if config.biaffine_feeds_next_layer else out[ch]

    H = assemble_features(primed.get("long", []), primed["short"], H0, config.num_layers)
    probs, preds, logits = classify(H, params)
    reg = None
    if config.use_long_channel:
        reg = differential_regularizer(traces["short"], traces["long"], config.epsilon_reg, config.reg_cap)
    return ForwardResult(logits=logits, probabilities=probs, predictions=preds, reg=reg,
                         traces=traces, features=H)


def conversation_loss(conversations: Sequence[Conversation], params: ParameterStore, config: ModelConfig,
                      mode: str = "train", rng: np.random.Generator | None = None
                      ) -> tuple[Tensor, list[ForwardResult]]:
    """Training objective over a batch of labelled conversations."""
    results, labels, regs = [], [], []
    for conv in conversations:
        labs = conv.labels
        if any(lab is None for lab in labs):
            raise DataError(f"conversation {conv.id!r} has unlabelled utterances")
        res = model_forward(conv, params, config, mode, rng)
        results.append(res)
        labels.extend(labs)
        if res.reg is not None:
            regs.append(res.reg)
    logits = results[0].logits if len(results) == 1 else ops.concat([r.logits for r in results], axis=0)
    loss = total_loss(logits, labels, regs or None, config.lambda_reg, config.reg_reduction)
    return loss, results
