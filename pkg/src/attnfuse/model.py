"""The attention-fusion classifier.

Pipeline for a batch of encoded path-context sequences::

    f = embed(triples)                       (B, K, D),  D = 3 * d_embed
    S = self-attention branch(f)             (B, K, D/3)
    L = Bi-LSTM branch(f), directions summed (B, K, D/3)
    G = 1D conv branch(f), same padding      (B, K, D/3)
    E = [S | L | G] * mask                   (B, K, D)
    Q = query generator()                    (2, D), one row per class
    T = MultiHead(Q, E)                      (B, 2, D)
    score_r = funnel(Q + dropout(T))_r       (B, 2)
    y_hat = softmax(score)

Attention logits are unscaled unless ``attention_scaling`` is set, in which
case they are divided by the square root of the key width.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .errors import AllMasked, IndexOutOfVocab
from .paths import PAD

LOSS_FLOOR = 1e-12


@dataclass(frozen=True)
class ModelConfig:
    d_embed: int = 64
    n_heads: int = 4
    conv_kernel_size: int = 3
    dropout_rate: float = 0.1
    max_contexts: int = 400
    attention_scaling: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.d_embed < 1:
            raise ValueError("d_embed must be positive")
        if self.n_heads < 1 or self.d_model % self.n_heads:
            raise ValueError(f"D = 3*d_embed = {self.d_model} must be divisible by n_heads={self.n_heads}")
        if self.conv_kernel_size < 1 or self.conv_kernel_size % 2 == 0:
            raise ValueError("conv_kernel_size must be a positive odd integer")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.max_contexts < 0:
            raise ValueError("max_contexts must be >= 0")

    @property
    def d_model(self) -> int:
        return 3 * self.d_embed

    @property
    def d_branch(self) -> int:
        return self.d_embed

    @property
    def d_funnel(self) -> int:
        return max(1, self.d_model // 2)

    def to_dict(self) -> dict:
        return asdict(self)


def parameter_shapes(config: ModelConfig, n_nodes: int, n_paths: int) -> dict[str, tuple]:
    """Name -> shape of every stored array, in checkpoint order."""
    D, d3, de, ks, F = (config.d_model, config.d_branch, config.d_embed,
                        config.conv_kernel_size, config.d_funnel)
    shapes = {
        "embed.node": (n_nodes, de),
        "embed.path": (n_paths, de),
        "self_attn.w_q": (D, d3),
        "self_attn.w_k": (D, d3),
        "self_attn.w_v": (D, d3),
        "self_attn.w_l": (d3, d3),
        "self_attn.b_l": (d3,),
    }
    for direction in ("fwd", "bwd"):
        shapes[f"lstm.{direction}.w_in"] = (D, 4 * d3)
        shapes[f"lstm.{direction}.w_rec"] = (d3, 4 * d3)
        shapes[f"lstm.{direction}.b"] = (4 * d3,)
    shapes.update({
        "conv.w": (d3, D, ks),
        "conv.b": (d3,),
        "query.class_emb": (2, D),
        "query.w1": (D, D),
        "query.b1": (D,),
        "query.w2": (D, D),
        "query.b2": (D,),
        "mha.w_q": (D, D),
        "mha.w_k": (D, D),
        "mha.w_v": (D, D),
        "mha.w_o": (D, D),
        "funnel.w1": (D, F),
        "funnel.b1": (F,),
        "funnel.w2": (F, 1),
        "funnel.b2": (1,),
    })
    return shapes


EMBEDDING_PARAMS = ("embed.node", "embed.path")


def parameter_count_formula(n_nodes: int, n_paths: int, d_embed: int,
                            n_heads: int = 4, kernel_size: int = 3) -> dict[str, int]:
    """Closed-form parameter counts (head count does not change the total)."""
    D = 3 * d_embed
    d3 = d_embed
    F = max(1, D // 2)
    embedding = d_embed * (n_nodes + n_paths)
    self_attn = 3 * D * d3 + d3 * d3 + d3
    bilstm = 2 * (4 * d3 * (D + d3 + 1))
    conv = d3 * (D * kernel_size + 1)
    queries = 2 * D + 2 * (D * D + D)
    mha = 4 * D * D
    funnel = D * F + F + F + 1
    without = self_attn + bilstm + conv + queries + mha + funnel
    return {"total": embedding + without, "without_embeddings": without, "embeddings": embedding}


@dataclass
class ModelParams:
    config: ModelConfig
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    @property
    def n_nodes(self) -> int:
        return self.arrays["embed.node"].shape[0]

    @property
    def n_paths(self) -> int:
        return self.arrays["embed.path"].shape[0]

    @property
    def dtype(self):
        return self.arrays["embed.node"].dtype

    def count(self) -> dict[str, int]:
        """Parameter counts by direct enumeration of the stored arrays."""
        total = sum(int(a.size) for a in self.arrays.values())
        emb = sum(int(self.arrays[n].size) for n in EMBEDDING_PARAMS)
        return {"total": total, "without_embeddings": total - emb, "embeddings": emb}

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.config, {k: v.astype(dtype) for k, v in self.arrays.items()})

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays.values())


def init_params(config: ModelConfig, n_nodes: int, n_paths: int, dtype=np.float32,
                seed: int | None = None) -> ModelParams:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases, N(0, 0.02) embeddings, zero PAD rows."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    arrays = {}
    for name, shape in parameter_shapes(config, n_nodes, n_paths).items():
        if name in EMBEDDING_PARAMS or name == "query.class_emb":
            a = rng.normal(0.0, 0.02, size=shape)
            if name in EMBEDDING_PARAMS:
                a[PAD] = 0.0
        elif len(shape) == 1:
            a = np.zeros(shape)
        else:
            fan_in = shape[1] * shape[2] if name == "conv.w" else shape[0]
            bound = 1.0 / math.sqrt(fan_in)
            a = rng.uniform(-bound, bound, size=shape)
        arrays[name] = a.astype(dtype)
    return ModelParams(config, arrays)


# --------------------------------------------------------------------------
# batching

@dataclass
class Batch:
    triples: np.ndarray  # (B, K, 3) int
    mask: np.ndarray     # (B, K) bool
    lengths: np.ndarray  # (B,)


def make_batch(sequences) -> Batch:
    """Right-pad encoded (K_i, 3) sequences with PAD triples."""
    lengths = np.array([len(s) for s in sequences], dtype=np.int64)
    if len(lengths) == 0:
        raise ValueError("empty batch")
    K = max(1, int(lengths.max()))
    triples = np.full((len(sequences), K, 3), PAD, dtype=np.int64)
    for b, s in enumerate(sequences):
        if len(s):
            triples[b, :len(s)] = s
    mask = triples[..., 1] != PAD
    return Batch(triples, mask, mask.sum(axis=1))


@dataclass
class AttentionArtifacts:
    encoder: np.ndarray            # E, (B, K, D)
    queries: np.ndarray            # Q, (2, D)
    decoder_weights: np.ndarray    # per-head MHA weights, (B, h, 2, K)
    mask: np.ndarray               # (B, K)


@dataclass
class ForwardCache:
    batch: Batch
    probs: np.ndarray
    scores: np.ndarray
    artifacts: AttentionArtifacts
    dropout_mask: np.ndarray | None
    caches: dict


def _scale(config: ModelConfig, width: int) -> float:
    return 1.0 / math.sqrt(width) if config.attention_scaling else 1.0


def _check(params: ModelParams, batch: Batch):
    if (batch.lengths == 0).any():
        raise AllMasked("sample has no real (non-PAD) path contexts")
    t = batch.triples
    if t.min() < 0 or t[..., [0, 2]].max() >= params.n_nodes or t[..., 1].max() >= params.n_paths:
        raise IndexOutOfVocab("triple index outside the embedding tables")


def encode_branches(params: ModelParams, batch: Batch):
    """Embedding plus the three encoder branches; returns (E, f, parts, caches)."""
    p, cfg = params.arrays, params.config
    mask = batch.mask
    f = nn.embed_forward(batch.triples, mask, p["embed.node"], p["embed.path"])
    s, c_sa = nn.self_attention_forward(
        f, mask, p["self_attn.w_q"], p["self_attn.w_k"], p["self_attn.w_v"],
        p["self_attn.w_l"], p["self_attn.b_l"], _scale(cfg, cfg.d_branch))
    fwd = (p["lstm.fwd.w_in"], p["lstm.fwd.w_rec"], p["lstm.fwd.b"])
    bwd = (p["lstm.bwd.w_in"], p["lstm.bwd.w_rec"], p["lstm.bwd.b"])
    lstm_out, c_lstm = nn.bilstm_forward(f, batch.lengths, fwd, bwd)
    g, c_conv = nn.conv1d_forward(f, p["conv.w"], p["conv.b"])
    e = np.concatenate([s, lstm_out, g], axis=-1) * mask[..., None]
    return e, f, (s, lstm_out, g), {"sa": c_sa, "lstm": c_lstm, "conv": c_conv}


def make_queries(params: ModelParams):
    p = params.arrays
    return nn.queries_forward(p["query.class_emb"], p["query.w1"], p["query.b1"],
                              p["query.w2"], p["query.b2"])


def forward(params: ModelParams, batch: Batch, training: bool = False,
            rng: np.random.Generator | None = None,
            dropout_mask: np.ndarray | None = None) -> ForwardCache:
    """Run the network. Dropout is applied only when ``training`` is set.

    A recorded ``dropout_mask`` (already scaled by 1/(1-rate)) overrides
    sampling, which is what gradient checks use.
    """
    _check(params, batch)
    p, cfg = params.arrays, params.config
    e, f, _, caches = encode_branches(params, batch)
    q, c_q = make_queries(params)
    t, c_mha = nn.mha_forward(q, e, batch.mask, p["mha.w_q"], p["mha.w_k"], p["mha.w_v"],
                              p["mha.w_o"], cfg.n_heads, _scale(cfg, cfg.d_model // cfg.n_heads))
    if training and dropout_mask is None and cfg.dropout_rate > 0:
        if rng is None:
            raise ValueError("training with dropout needs an rng")
        keep = 1.0 - cfg.dropout_rate
        dropout_mask = (rng.random(t.shape) < keep).astype(t.dtype) / t.dtype.type(keep)
    if not training:
        dropout_mask = None
    t_res = q + (t * dropout_mask if dropout_mask is not None else t)
    scores, c_fun = nn.funnel_forward(t_res, p["funnel.w1"], p["funnel.b1"],
                                      p["funnel.w2"], p["funnel.b2"])
    probs = nn.masked_softmax(scores, np.ones(scores.shape, dtype=bool))
    caches.update(f=f, e=e, q=c_q, mha=c_mha, funnel=c_fun)
    arts = AttentionArtifacts(e, q, c_mha[5], batch.mask)
    return ForwardCache(batch, probs, scores, arts, dropout_mask, caches)


def cross_entropy(probs: np.ndarray, labels) -> float:
    """Mean of -log y_hat[label], components floored at 1e-12."""
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    picked = probs[np.arange(len(labels)), labels]
    return float(np.mean(-np.log(np.maximum(picked, LOSS_FLOOR))))


def backward(params: ModelParams, cache: ForwardCache, labels) -> tuple[float, dict]:
    """Mean cross-entropy and its gradient w.r.t. every stored array."""
    p, cfg = params.arrays, params.config
    labels = np.asarray(labels)
    B = len(labels)
    probs = cache.probs
    loss = cross_entropy(probs, labels)
    picked = probs[np.arange(B), labels]
    onehot = np.zeros_like(probs)
    onehot[np.arange(B), labels] = 1.0
    # floor active -> loss locally constant
    dscores = nn.flush_subnormal((probs - onehot) * (picked > LOSS_FLOOR)[:, None] / B)
    # The backward pass is linear in dscores. Rescale by a power of two so that
    # tiny late-training gradients do not underflow into slow subnormals; the
    # factor is removed exactly at the end.
    top = float(np.abs(dscores).max())
    if top == 0.0:
        return loss, {k: np.zeros_like(v) for k, v in p.items()}
    gscale = 2.0 ** -math.floor(math.log2(top))
    dscores = dscores * dscores.dtype.type(gscale)

    grads = {}
    c = cache.caches
    dt_res, g = nn.funnel_backward(dscores, c["funnel"], p["funnel.w1"], p["funnel.w2"])
    grads.update({f"funnel.{k}": v for k, v in g.items()})
    dq = dt_res.sum(axis=0)
    dt = dt_res * cache.dropout_mask if cache.dropout_mask is not None else dt_res
    dq_mha, de, g = nn.mha_backward(dt, c["mha"], p["mha.w_q"], p["mha.w_k"],
                                    p["mha.w_v"], p["mha.w_o"])
    grads.update({f"mha.{k}": v for k, v in g.items()})
    g = nn.queries_backward(dq + dq_mha, c["q"], p["query.w1"], p["query.w2"])
    grads.update({f"query.{k}": v for k, v in g.items()})

    mask = cache.batch.mask
    de = de * mask[..., None]
    d3 = cfg.d_branch
    ds, dl, dg = de[..., :d3], de[..., d3:2 * d3], de[..., 2 * d3:]
    df, g = nn.self_attention_backward(ds, c["sa"], p["self_attn.w_q"], p["self_attn.w_k"],
                                       p["self_attn.w_v"], p["self_attn.w_l"])
    grads.update({f"self_attn.{k}": v for k, v in g.items()})
    fwd = (p["lstm.fwd.w_in"], p["lstm.fwd.w_rec"])
    bwd = (p["lstm.bwd.w_in"], p["lstm.bwd.w_rec"])
    df_l, g_f, g_b = nn.bilstm_backward(dl, c["lstm"], fwd, bwd)
    grads.update({f"lstm.fwd.{k}": v for k, v in g_f.items()})
    grads.update({f"lstm.bwd.{k}": v for k, v in g_b.items()})
    df_c, g = nn.conv1d_backward(dg, c["conv"], p["conv.w"])
    grads.update({f"conv.{k}": v for k, v in g.items()})
    d_node, d_path = nn.embed_backward(df + df_l + df_c, cache.batch.triples, mask,
                                       p["embed.node"].shape, p["embed.path"].shape)
    grads["embed.node"] = d_node
    grads["embed.path"] = d_path
    inv = 1.0 / gscale
    return loss, {k: grads[k] * grads[k].dtype.type(inv) for k in p}


def predict_proba(params: ModelParams, sequences, batch_size: int = 64) -> np.ndarray:
    """(N, 2) class probabilities, inference mode, input order preserved."""
    probs = np.zeros((len(sequences), 2), dtype=params.dtype)
    # length-sorted batches keep padding small; results are scattered back
    order = np.argsort([len(s) for s in sequences], kind="stable")
    for i in range(0, len(order), batch_size):
        idx = order[i:i + batch_size]
        probs[idx] = forward(params, make_batch([sequences[j] for j in idx])).probs
    return probs


def forward_single(params: ModelParams, encoded, training: bool = False, rng=None):
    """Single-sample convenience wrapper: returns (y_hat, AttentionArtifacts)."""
    cache = forward(params, make_batch([np.asarray(encoded)]), training=training, rng=rng)
    return cache.probs[0], cache.artifacts


def attention_scale(config: ModelConfig, width: int) -> float:
    return _scale(config, width)
