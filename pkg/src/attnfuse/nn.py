"""Batched layer primitives with hand-written backward passes.

Every ``*_forward`` returns ``(output, cache)`` and the matching
``*_backward`` takes the upstream gradient plus that cache. Sequences are
right-padded: arrays are ``(B, K, ...)`` with a boolean ``mask`` of shape
``(B, K)`` marking real positions.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def sigmoid(z):
    # tanh form avoids overflow warnings for large |z|
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def flush_subnormal(x):
    """Zero out subnormal entries in place; they make BLAS calls many times slower."""
    x[np.abs(x) < np.finfo(x.dtype).tiny] = 0
    return x


def masked_softmax(logits, key_mask):
    """Softmax over the last axis; positions where ``key_mask`` is False get 0."""
    x = np.where(key_mask, logits, -np.inf)
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    return flush_subnormal(e / e.sum(axis=-1, keepdims=True))


def _outer_sum(a, b):
    """sum over leading axes of a[..., i] * b[..., j]."""
    return a.reshape(-1, a.shape[-1]).T @ b.reshape(-1, b.shape[-1])


def softmax_backward(p, dp):
    return p * (dp - (dp * p).sum(axis=-1, keepdims=True))


# -- embedding

def embed_forward(triples, mask, node_table, path_table):
    """Rows are concat(node[src], path[path], node[sink]); PAD rows are zero."""
    f = np.concatenate([node_table[triples[..., 0]],
                        path_table[triples[..., 1]],
                        node_table[triples[..., 2]]], axis=-1)
    f *= mask[..., None]
    return f


def embed_backward(df, triples, mask, node_shape, path_shape, pad=0):
    de = node_shape[1]
    df = df * mask[..., None]
    d_node = np.zeros(node_shape, dtype=df.dtype)
    d_path = np.zeros(path_shape, dtype=df.dtype)
    np.add.at(d_node, triples[..., 0].ravel(), df[..., :de].reshape(-1, de))
    np.add.at(d_path, triples[..., 1].ravel(), df[..., de:2 * de].reshape(-1, de))
    np.add.at(d_node, triples[..., 2].ravel(), df[..., 2 * de:].reshape(-1, de))
    d_node[pad] = 0
    d_path[pad] = 0
    return d_node, d_path


# -- self-attention branch: S = A + ReLU(A W_l + b_l), A = softmax(Q K^T) V

def self_attention_forward(f, mask, w_q, w_k, w_v, w_l, b_l, scale=1.0):
    q, k, v = f @ w_q, f @ w_k, f @ w_v
    logits = scale * (q @ k.transpose(0, 2, 1))
    p = masked_softmax(logits, mask[:, None, :])
    a = p @ v
    z = a @ w_l + b_l
    s = a + np.maximum(z, 0)
    return s, (f, q, k, v, p, a, z, scale)


def self_attention_backward(ds, cache, w_q, w_k, w_v, w_l):
    f, q, k, v, p, a, z, scale = cache
    dz = ds * (z > 0)
    d_w_l = _outer_sum(a, dz)
    d_b_l = dz.sum(axis=(0, 1))
    da = ds + dz @ w_l.T
    dp = da @ v.transpose(0, 2, 1)
    dv = p.transpose(0, 2, 1) @ da
    dlogits = scale * softmax_backward(p, dp)
    dq = dlogits @ k
    dk = dlogits.transpose(0, 2, 1) @ q
    d_w_q = _outer_sum(f, dq)
    d_w_k = _outer_sum(f, dk)
    d_w_v = _outer_sum(f, dv)
    df = dq @ w_q.T + dk @ w_k.T + dv @ w_v.T
    return df, {"w_q": d_w_q, "w_k": d_w_k, "w_v": d_w_v, "w_l": d_w_l, "b_l": d_b_l}


# -- LSTM (one direction), gate column order [input, forget, candidate, output]

def lstm_forward(x, w_in, w_rec, b):
    B, K, _ = x.shape
    H = w_rec.shape[0]
    xz = x @ w_in + b
    h = np.zeros((B, H), dtype=x.dtype)
    c = np.zeros((B, H), dtype=x.dtype)
    hs = np.empty((B, K, H), dtype=x.dtype)
    cs = np.empty((B, K, H), dtype=x.dtype)
    gates = np.empty((B, K, 4 * H), dtype=x.dtype)
    for t in range(K):
        z = xz[:, t] + h @ w_rec
        gt = gates[:, t]
        gt[:] = sigmoid(z)
        gt[:, 2 * H:3 * H] = np.tanh(z[:, 2 * H:3 * H])
        i, fg, g, o = gt[:, :H], gt[:, H:2 * H], gt[:, 2 * H:3 * H], gt[:, 3 * H:]
        c = fg * c + i * g
        h = o * np.tanh(c)
        hs[:, t] = h
        cs[:, t] = c
    return hs, (x, hs, cs, gates)


def lstm_backward(dhs, cache, w_in, w_rec):
    x, hs, cs, gates = cache
    B, K, H = hs.shape
    dz_all = np.empty((B, K, 4 * H), dtype=dhs.dtype)
    dh_next = np.zeros((B, H), dtype=dhs.dtype)
    dc_next = np.zeros((B, H), dtype=dhs.dtype)
    zero = np.zeros((B, H), dtype=dhs.dtype)
    for t in range(K - 1, -1, -1):
        gt = gates[:, t]
        i, fg, g, o = gt[:, :H], gt[:, H:2 * H], gt[:, 2 * H:3 * H], gt[:, 3 * H:]
        tc = np.tanh(cs[:, t])
        c_prev = cs[:, t - 1] if t > 0 else zero
        dh = dhs[:, t] + dh_next
        dc = dh * o * (1 - tc * tc) + dc_next
        dz = dz_all[:, t]
        dz[:, :H] = dc * g * i * (1 - i)
        dz[:, H:2 * H] = dc * c_prev * fg * (1 - fg)
        dz[:, 2 * H:3 * H] = dc * i * (1 - g * g)
        dz[:, 3 * H:] = dh * tc * o * (1 - o)
        dc_next = dc * fg
        dh_next = dz @ w_rec.T
    h_prev = np.concatenate([np.zeros((B, 1, H), dtype=hs.dtype), hs[:, :-1]], axis=1)
    dz2 = dz_all.reshape(B * K, 4 * H)
    d_w_in = x.reshape(B * K, -1).T @ dz2
    d_w_rec = h_prev.reshape(B * K, H).T @ dz2
    d_b = dz2.sum(axis=0)
    dx = dz_all @ w_in.T
    return dx, {"w_in": d_w_in, "w_rec": d_w_rec, "b": d_b}


def reverse_index(lengths, K):
    """Per-row index that reverses the first ``lengths[b]`` positions (an involution)."""
    t = np.arange(K)[None, :]
    L = np.asarray(lengths)[:, None]
    return np.where(t < L, L - 1 - t, t)


def gather_rows(x, idx):
    return x[np.arange(x.shape[0])[:, None], idx]


def bilstm_forward(x, lengths, fwd, bwd):
    """Sum of a left-to-right and a right-to-left LSTM over real positions.

    ``fwd`` / ``bwd`` are (w_in, w_rec, b) tuples.
    """
    h_l, cache_l = lstm_forward(x, *fwd)
    rev = reverse_index(lengths, x.shape[1])
    h_rev, cache_r = lstm_forward(gather_rows(x, rev), *bwd)
    return h_l + gather_rows(h_rev, rev), (cache_l, cache_r, rev)


def bilstm_backward(dh, cache, fwd, bwd):
    cache_l, cache_r, rev = cache
    dx_l, g_l = lstm_backward(dh, cache_l, fwd[0], fwd[1])
    dx_r, g_r = lstm_backward(gather_rows(dh, rev), cache_r, bwd[0], bwd[1])
    return dx_l + gather_rows(dx_r, rev), g_l, g_r


# -- 1D convolution (cross-correlation), same padding

def conv1d_forward(x, w, b):
    """x: (B, K, D_in); w: (D_out, D_in, ks); returns (B, K, D_out)."""
    B, K, D = x.shape
    d_out, _, ks = w.shape
    pad = (ks - 1) // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
    cols = sliding_window_view(xp, ks, axis=1).reshape(B * K, D * ks)
    wr = w.reshape(d_out, D * ks)
    out = (cols @ wr.T + b).reshape(B, K, d_out)
    return out, (cols, x.shape)


def conv1d_backward(dout, cache, w):
    cols, (B, K, D) = cache
    d_out, _, ks = w.shape
    pad = (ks - 1) // 2
    d2 = dout.reshape(B * K, d_out)
    d_w = (d2.T @ cols).reshape(w.shape)
    d_b = d2.sum(axis=0)
    dcols = (d2 @ w.reshape(d_out, D * ks)).reshape(B, K, D, ks)
    dxp = np.zeros((B, K + 2 * pad, D), dtype=dout.dtype)
    for m in range(ks):
        dxp[:, m:m + K] += dcols[..., m]
    return dxp[:, pad:pad + K], {"w": d_w, "b": d_b}


# -- query generator: Q = FF2(ReLU(FF1(class_embedding)))

def queries_forward(emb, w1, b1, w2, b2):
    z1 = emb @ w1 + b1
    h1 = np.maximum(z1, 0)
    return h1 @ w2 + b2, (emb, z1, h1)


def queries_backward(dq, cache, w1, w2):
    emb, z1, h1 = cache
    d_w2 = h1.T @ dq
    d_b2 = dq.sum(axis=0)
    dz1 = (dq @ w2.T) * (z1 > 0)
    return {"class_emb": dz1 @ w1.T, "w1": emb.T @ dz1, "b1": dz1.sum(axis=0),
            "w2": d_w2, "b2": d_b2}


# -- multi-head attention of 2 query rows over the K encoder rows

def mha_forward(q, e, mask, w_q, w_k, w_v, w_o, n_heads, scale=1.0):
    """q: (R, D) shared queries; e: (B, K, D). Returns (B, R, D) and per-head weights."""
    B, K, D = e.shape
    R = q.shape[0]
    dh = D // n_heads
    qp = (q @ w_q).reshape(R, n_heads, dh)
    kp = (e @ w_k).reshape(B, K, n_heads, dh)
    vp = (e @ w_v).reshape(B, K, n_heads, dh)
    # (h, R, dh) @ (B, h, dh, K) -> (B, h, R, K)
    logits = scale * (qp.transpose(1, 0, 2)[None] @ kp.transpose(0, 2, 3, 1))
    p = masked_softmax(logits, mask[:, None, None, :])
    heads = (p @ vp.transpose(0, 2, 1, 3)).transpose(0, 2, 1, 3).reshape(B, R, D)
    return heads @ w_o, (q, e, qp, kp, vp, p, heads, scale)


def mha_backward(dt, cache, w_q, w_k, w_v, w_o):
    q, e, qp, kp, vp, p, heads, scale = cache
    B, K, D = e.shape
    R, n_heads, dh = qp.shape
    d_w_o = _outer_sum(heads, dt)
    dheads = (dt @ w_o.T).reshape(B, R, n_heads, dh).transpose(0, 2, 1, 3)  # (B, h, R, dh)
    kp_h = kp.transpose(0, 2, 1, 3)  # (B, h, K, dh)
    vp_h = vp.transpose(0, 2, 1, 3)
    dp = dheads @ vp_h.transpose(0, 1, 3, 2)
    dvp = (p.transpose(0, 1, 3, 2) @ dheads).transpose(0, 2, 1, 3).reshape(B, K, D)
    dlogits = scale * softmax_backward(p, dp)
    dqp = (dlogits @ kp_h).sum(axis=0).transpose(1, 0, 2).reshape(R, D)
    dkp = (dlogits.transpose(0, 1, 3, 2) @ qp.transpose(1, 0, 2)[None])
    dkp = dkp.transpose(0, 2, 1, 3).reshape(B, K, D)
    d_w_q = q.T @ dqp
    d_w_k = e.reshape(B * K, D).T @ dkp.reshape(B * K, D)
    d_w_v = e.reshape(B * K, D).T @ dvp.reshape(B * K, D)
    dq = dqp @ w_q.T
    de = dkp @ w_k.T + dvp @ w_v.T
    return dq, de, {"w_q": d_w_q, "w_k": d_w_k, "w_v": d_w_v, "w_o": d_w_o}


# -- funnel: score = ReLU(x W1 + c1) W2 + c2, applied per query row

def funnel_forward(x, w1, b1, w2, b2):
    u1 = x @ w1 + b1
    u = np.maximum(u1, 0)
    return (u @ w2 + b2)[..., 0], (x, u1, u)


def funnel_backward(dscore, cache, w1, w2):
    x, u1, u = cache
    ds = dscore[..., None]
    d_w2 = _outer_sum(u, ds)
    d_b2 = ds.sum(axis=(0, 1))
    du1 = (ds @ w2.T) * (u1 > 0)
    d_w1 = _outer_sum(x, du1)
    d_b1 = du1.sum(axis=(0, 1))
    return du1 @ w1.T, {"w1": d_w1, "b1": d_b1, "w2": d_w2, "b2": d_b2}
