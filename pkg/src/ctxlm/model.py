"""The adapted recurrent language model: forward pass and exact gradients.

Architecture, per sentence with context vector ``cvec``:

    pre_t  = (1 + C_u cvec) * (U w_t) + (1 + C_w cvec) * (S h_{t-1})
             + F cvec + b_1                          (3d, blocks z|i|o)
    z, i, o = tanh / sigmoid / sigmoid of the three blocks
    cell_t = (1 - i) * cell_{t-1} + i * z            (coupled input/forget)
    h_t    = o * tanh(cell_t)
    logit_w = <W_w, P h_t> + <G_w, cvec> + b_2[w] + hashed_bias(w, ctx)

The word embedding matrix W is shared with the output layer (transposed),
reconciled through the learned projection P because the embedding and
recurrent widths differ.  The multiplicative rescalers are parameterized
as (1 + C cvec) and zero-initialized, so a fresh model is exactly the
unadapted one; with every adaptation switched off the same code path is
taken with the extra terms skipped, and the two give bit-identical
log-probabilities.

Gradients are hand-rolled backpropagation through time over the cached
forward quantities; ``tests/test_model.py`` checks every tensor against
central finite differences.
"""

import numpy as np
from scipy.special import expit, log_softmax, logsumexp

from . import hashbias, kernels
from .config import TrainConfig
from .context import ContextSchema
from .corpus import ContextValueRegistry, EncodedExample, Vocabulary
from .hashbias import HashedBiasTable, ObservedPairFilter
from .seeding import STREAM_PARAM_INIT, stream

EMBED_INIT_SCALE = 0.05


def _glorot(rng, shape):
    limit = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape)


class ModelParams:
    """Trainable tensors.  Adaptation tensors are None when the matching
    switch is off; when allocated they start at zero, which makes every
    adaptation an exact no-op at initialization."""

    def __init__(self, W, U, S, b1, P, b2, F=None, C_u=None, C_w=None, G=None):
        self.W = W    # (V, e) tied input/output word embeddings
        self.U = U    # (3d, e) input weights, stacked z|i|o blocks
        self.S = S    # (3d, d) recurrent weights
        self.b1 = b1  # (3d,)
        self.P = P    # (e, d) projection before the tied inner product
        self.b2 = b2  # (V,)
        self.F = F      # (3d, k) additive context term
        self.C_u = C_u  # (3d, k) rescale of the input block
        self.C_w = C_w  # (3d, k) rescale of the recurrent block
        self.G = G      # (V, k) low-rank logit offset
        self.d = S.shape[1]
        self.e = U.shape[1]

    @classmethod
    def init(cls, rng, vocab_size, embed_dim, lstm_dim, context_dim, adaptation) -> "ModelParams":
        d, e, k = lstm_dim, embed_dim, context_dim
        W = rng.uniform(-EMBED_INIT_SCALE, EMBED_INIT_SCALE, size=(vocab_size, e))
        U = _glorot(rng, (3 * d, e))
        S = _glorot(rng, (3 * d, d))
        P = _glorot(rng, (e, d))
        return cls(
            W, U, S, np.zeros(3 * d), P, np.zeros(vocab_size),
            F=np.zeros((3 * d, k)) if adaptation.additive else None,
            C_u=np.zeros((3 * d, k)) if adaptation.multiplicative else None,
            C_w=np.zeros((3 * d, k)) if adaptation.multiplicative else None,
            G=np.zeros((vocab_size, k)) if adaptation.lowrank else None,
        )

    def tensors(self) -> dict:
        out = {"W": self.W, "U": self.U, "S": self.S, "b1": self.b1,
               "P": self.P, "b2": self.b2}
        for name in ("F", "C_u", "C_w", "G"):
            if getattr(self, name) is not None:
                out[name] = getattr(self, name)
        return out


class AdaptedLM:
    """Model bundle: config echo, vocabulary, registry, schema, parameters
    and (when hash adaptation is on) the bias table plus pair filter."""

    def __init__(self, config: TrainConfig, vocab: Vocabulary,
                 registry: ContextValueRegistry, schema: ContextSchema,
                 params: ModelParams, table: HashedBiasTable = None,
                 pair_filter: ObservedPairFilter = None):
        self.config = config
        self.adaptation = config.adaptation
        self.vocab = vocab
        self.registry = registry
        self.schema = schema
        self.params = params
        self.table = table
        self.pair_filter = pair_filter
        if self.adaptation.hash_bias and (table is None or pair_filter is None):
            raise ValueError("hash adaptation requires a bias table and a pair filter")
        if schema.cardinalities != registry.cardinalities():
            raise ValueError("schema and registry cardinalities disagree")
        if params.W.shape[0] != len(vocab):
            raise ValueError("params sized for a different vocabulary")

    @classmethod
    def init(cls, config: TrainConfig, vocab: Vocabulary,
             registry: ContextValueRegistry,
             pair_filter: ObservedPairFilter = None) -> "AdaptedLM":
        rng = stream(config.seed, STREAM_PARAM_INIT)
        schema = ContextSchema.init(config.context_vars, registry.cardinalities(),
                                    config.context_dims, config.context_dim, rng)
        params = ModelParams.init(rng, len(vocab), config.embed_dim,
                                  config.lstm_dim, config.context_dim,
                                  config.adaptation)
        table = pfilt = None
        if config.adaptation.hash_bias:
            n = registry.n_vars
            table = HashedBiasTable(config.hash_size, n, config.seed)
            pfilt = pair_filter if pair_filter is not None \
                else ObservedPairFilter(config.bloom_bits, n, config.seed)
        return cls(config, vocab, registry, schema, params, table, pfilt)

    def tensors(self) -> dict:
        out = dict(self.params.tensors())
        out.update(self.schema.tensors())
        if self.adaptation.hash_bias:
            out["H"] = self.table.values
        return out

    def zero_grads(self) -> dict:
        return {name: np.zeros_like(arr) for name, arr in self.tensors().items()}

    def context_vectors(self, ctx: np.ndarray) -> np.ndarray:
        return self.schema.embed_batch(ctx)

    def hash_rows(self, ctx: np.ndarray, cache: dict = None) -> np.ndarray:
        """Per-word gated bias rows, (B, V); zero rows without hash adaptation.

        cache, when given, maps context tuples to previously computed rows
        (valid only while the table values stay fixed).
        """
        B = ctx.shape[0]
        V = len(self.vocab)
        if not self.adaptation.hash_bias:
            return np.zeros((B, V))
        out = np.empty((B, V))
        for b in range(B):
            key = tuple(int(c) for c in ctx[b])
            if cache is not None and key in cache:
                row = cache[key]
            else:
                row = hashbias.dense_bias(self.table, self.pair_filter, ctx[b], V)
                if cache is not None:
                    cache[key] = row
            out[b] = row
        return out


# ---------------------------------------------------------------------------
# single-step operations
# ---------------------------------------------------------------------------

def adapted_preactivation(word_vec, prev_h, context_vec, params: ModelParams):
    """Stacked 3d pre-activation with whichever adaptation tensors exist.

    With C_u = C_w = 0, F = 0 (or the tensors absent) this is exactly
    U w + S h + b_1.
    """
    au = params.U @ word_vec
    ah = params.S @ prev_h
    if params.C_u is not None:
        au = (1.0 + params.C_u @ context_vec) * au
        ah = (1.0 + params.C_w @ context_vec) * ah
    add = params.F @ context_vec + params.b1 if params.F is not None else params.b1
    return au + ah + add


def cifg_step(pre_activation, prev_state):
    """One recurrence step; prev_state and the returned state are (h, cell).

    The forget gate is coupled to the input gate as 1 - i.
    """
    d = pre_activation.shape[-1] // 3
    z = np.tanh(pre_activation[..., :d])
    i = expit(pre_activation[..., d:2 * d])
    o = expit(pre_activation[..., 2 * d:])
    cell = (1.0 - i) * prev_state[1] + i * z
    h = o * np.tanh(cell)
    return h, (h, cell)


def output_logits(h, context_vec, hash_values, params: ModelParams):
    """Logits over the vocabulary for one hidden state.

    hash_values is the per-word gated bias vector (V,), or None.
    """
    logits = params.W @ (params.P @ h)
    if params.G is not None:
        logits = logits + params.G @ context_vec
    logits = logits + params.b2
    if hash_values is not None:
        logits = logits + hash_values
    return logits


# ---------------------------------------------------------------------------
# batched forward / backward
# ---------------------------------------------------------------------------

def _recurrence(params: ModelParams, wv, cvec):
    """Run the CIFG over (B, T, e) inputs; returns all cached step arrays."""
    B, T, _ = wv.shape
    d = params.d
    mu = mw = None
    if params.C_u is not None:
        mu = 1.0 + cvec @ params.C_u.T
        mw = 1.0 + cvec @ params.C_w.T
    if params.F is not None:
        add = cvec @ params.F.T + params.b1
    else:
        add = np.broadcast_to(params.b1, (B, 3 * d))

    au = np.empty((B, T, 3 * d))
    ah = np.empty((B, T, 3 * d))
    z = np.empty((B, T, d))
    ig = np.empty((B, T, d))
    og = np.empty((B, T, d))
    cells = np.empty((B, T, d))
    cells_prev = np.empty((B, T, d))
    hs = np.empty((B, T, d))
    h = np.zeros((B, d))
    cell = np.zeros((B, d))
    for t in range(T):
        au_t = wv[:, t] @ params.U.T
        ah_t = h @ params.S.T
        left = mu * au_t if mu is not None else au_t
        right = mw * ah_t if mw is not None else ah_t
        pre = left + right + add
        z_t = np.tanh(pre[:, :d])
        i_t = expit(pre[:, d:2 * d])
        o_t = expit(pre[:, 2 * d:])
        cells_prev[:, t] = cell
        cell = (1.0 - i_t) * cell + i_t * z_t
        h = o_t * np.tanh(cell)
        au[:, t], ah[:, t] = au_t, ah_t
        z[:, t], ig[:, t], og[:, t] = z_t, i_t, o_t
        cells[:, t], hs[:, t] = cell, h
    return {"au": au, "ah": ah, "z": z, "ig": ig, "og": og, "cells": cells,
            "cells_prev": cells_prev, "hs": hs, "mu": mu, "mw": mw}


def _dropout_masks(rng, rate, shape):
    keep = 1.0 - rate
    return (rng.random(shape) < keep).astype(np.float64) / keep


def forward_batch(lm: AdaptedLM, tok_in, targets, mask, ctx,
                  training: bool = False, dropout_rng=None, hash_cache=None):
    """Forward pass caching everything the backward pass needs.

    tok_in/targets/mask are (B, T); ctx is (B, n).  mask weights padded
    positions with 0.  Returns a cache dict including per-position target
    log-probabilities under the full softmax ("logp_targets").
    """
    p = lm.params
    B, T = tok_in.shape
    rate = lm.config.dropout if training else 0.0
    cvec = lm.schema.embed_batch(ctx)
    wv = p.W[tok_in]
    drop_in = drop_out = None
    if rate > 0.0:
        drop_in = _dropout_masks(dropout_rng, rate, wv.shape)
        wv = wv * drop_in
    rec = _recurrence(p, wv, cvec)
    hd = rec["hs"]
    if rate > 0.0:
        drop_out = _dropout_masks(dropout_rng, rate, hd.shape)
        hd = hd * drop_out
    proj = hd @ p.P.T
    hash_rows = lm.hash_rows(ctx, cache=hash_cache) if lm.adaptation.hash_bias else None

    logits = proj @ p.W.T
    if p.G is not None:
        logits = logits + (cvec @ p.G.T)[:, None, :]
    logits = logits + p.b2
    if hash_rows is not None:
        logits = logits + hash_rows[:, None, :]
    logp = log_softmax(logits, axis=-1)
    logp_targets = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    return {"tok_in": tok_in, "targets": targets, "mask": mask, "ctx": ctx,
            "cvec": cvec, "wv": wv, "drop_in": drop_in, "drop_out": drop_out,
            "rec": rec, "hd": hd, "proj": proj, "hash_rows": hash_rows,
            "logp": logp, "logp_targets": logp_targets}


def backward_batch(lm: AdaptedLM, cache, w_pos) -> dict:
    """Gradients of sum_bt w_pos[b,t] * (-log p(target_bt)) for every tensor."""
    p = lm.params
    grads = lm.zero_grads()
    rec = cache["rec"]
    cvec = cache["cvec"]
    B, T = cache["tok_in"].shape
    d = p.d

    dlogits = np.exp(cache["logp"]) * w_pos[..., None]
    np.subtract.at(dlogits, (np.arange(B)[:, None], np.arange(T)[None, :],
                             cache["targets"]), w_pos)
    grads["b2"] += dlogits.sum(axis=(0, 1))
    dcvec = np.zeros_like(cvec)
    if p.G is not None:
        grads["G"] += np.einsum("btv,bk->vk", dlogits, cvec)
        dcvec += np.einsum("btv,vk->bk", dlogits, p.G)
    if lm.adaptation.hash_bias:
        _dense_hash_grad(lm, grads["H"], cache["ctx"], dlogits.sum(axis=1))
    dproj = dlogits @ p.W
    grads["W"] += np.einsum("btv,bte->ve", dlogits, cache["proj"])
    dhd = dproj @ p.P
    grads["P"] += np.einsum("bte,btd->ed", dproj, cache["hd"])
    if cache["drop_out"] is not None:
        dh_out = dhd * cache["drop_out"]
    else:
        dh_out = dhd

    mu, mw = rec["mu"], rec["mw"]
    acc_pre = np.zeros((B, 3 * d))
    acc_mu = np.zeros((B, 3 * d)) if mu is not None else None
    acc_mw = np.zeros((B, 3 * d)) if mw is not None else None
    dwv = np.empty_like(cache["wv"])
    dh_next = np.zeros((B, d))
    dcell_next = np.zeros((B, d))
    for t in range(T - 1, -1, -1):
        z, ig, og = rec["z"][:, t], rec["ig"][:, t], rec["og"][:, t]
        tc = np.tanh(rec["cells"][:, t])
        dh = dh_out[:, t] + dh_next
        do = dh * tc
        dcell = dcell_next + dh * og * (1.0 - tc * tc)
        dz = dcell * ig
        di = dcell * (z - rec["cells_prev"][:, t])
        dcell_next = dcell * (1.0 - ig)
        dpre = np.concatenate(
            [dz * (1.0 - z * z), di * ig * (1.0 - ig), do * og * (1.0 - og)], axis=1)
        acc_pre += dpre
        if mu is not None:
            acc_mu += dpre * rec["au"][:, t]
            acc_mw += dpre * rec["ah"][:, t]
            da_u = dpre * mu
            da_h = dpre * mw
        else:
            da_u = da_h = dpre
        grads["U"] += da_u.T @ cache["wv"][:, t]
        dwv[:, t] = da_u @ p.U
        h_prev = rec["hs"][:, t - 1] if t > 0 else np.zeros((B, d))
        grads["S"] += da_h.T @ h_prev
        dh_next = da_h @ p.S

    grads["b1"] += acc_pre.sum(axis=0)
    if p.F is not None:
        grads["F"] += np.einsum("bj,bk->jk", acc_pre, cvec)
        dcvec += acc_pre @ p.F
    if mu is not None:
        grads["C_u"] += np.einsum("bj,bk->jk", acc_mu, cvec)
        grads["C_w"] += np.einsum("bj,bk->jk", acc_mw, cvec)
        dcvec += acc_mu @ p.C_u
        dcvec += acc_mw @ p.C_w
    if cache["drop_in"] is not None:
        dwv = dwv * cache["drop_in"]
    kernels.scatter_add_rows(grads["W"], cache["tok_in"].ravel(),
                             dwv.reshape(B * T, p.e))
    lm.schema.embed_backward(cache["ctx"], cvec, dcvec, grads)
    return grads


def _dense_hash_grad(lm, H_grad, ctx, upstream):
    """Scatter per-example (B, V) upstream into the table gradient,
    grouping rows that share a context tuple."""
    groups: dict[tuple, list[int]] = {}
    for b in range(ctx.shape[0]):
        groups.setdefault(tuple(int(c) for c in ctx[b]), []).append(b)
    for key, rows in groups.items():
        up = upstream[rows[0]].copy() if len(rows) == 1 else upstream[rows].sum(axis=0)
        hashbias.dense_bias_grad(H_grad, lm.table, lm.pair_filter,
                                 np.array(key, dtype=np.int64), up)


# ---------------------------------------------------------------------------
# sequence-level wrappers and evaluation paths
# ---------------------------------------------------------------------------

def _example_batch(example: EncodedExample):
    toks = example.token_ids
    tok_in = toks[:-1][None, :]
    targets = toks[1:][None, :]
    mask = np.ones_like(targets, dtype=np.float64)
    ctx = example.context_ids[None, :]
    return tok_in, targets, mask, ctx


def forward_sequence(lm: AdaptedLM, example: EncodedExample) -> np.ndarray:
    """log p(w_t | w_<t, context) for every position, final </s> included."""
    tok_in, targets, mask, ctx = _example_batch(example)
    cache = forward_batch(lm, tok_in, targets, mask, ctx)
    return cache["logp_targets"][0]


def backward_sequence(lm: AdaptedLM, example: EncodedExample) -> dict:
    """Gradients of the summed negative log-likelihood of one example."""
    tok_in, targets, mask, ctx = _example_batch(example)
    cache = forward_batch(lm, tok_in, targets, mask, ctx)
    return backward_batch(lm, cache, mask)


def batch_target_logprobs(lm: AdaptedLM, tok_in, targets, mask, ctx, hash_cache=None):
    """(B, T) target log-probs, evaluation path (no dropout, no big caches).

    Works one timestep at a time so memory stays O(B*V) regardless of T.
    """
    p = lm.params
    B, T = tok_in.shape
    cvec = lm.schema.embed_batch(ctx)
    rec = _recurrence(p, p.W[tok_in], cvec)
    lowrank = cvec @ p.G.T if p.G is not None else None
    hash_rows = lm.hash_rows(ctx, cache=hash_cache) if lm.adaptation.hash_bias else None
    out = np.empty((B, T))
    for t in range(T):
        logits = (rec["hs"][:, t] @ p.P.T) @ p.W.T
        if lowrank is not None:
            logits = logits + lowrank
        logits = logits + p.b2
        if hash_rows is not None:
            logits = logits + hash_rows
        lse = logsumexp(logits, axis=-1)
        out[:, t] = np.take_along_axis(logits, targets[:, t][:, None], axis=-1)[:, 0] - lse
    return out * mask


def step_logprobs(lm: AdaptedLM, h, cell, tok_ids, cvec, hash_row):
    """Advance a batch of decoding states one token; returns
    (logprobs (B, V), h, cell)."""
    p = lm.params
    wv = p.W[tok_ids]
    au = wv @ p.U.T
    ah = h @ p.S.T
    if p.C_u is not None:
        au = (1.0 + cvec @ p.C_u.T) * au
        ah = (1.0 + cvec @ p.C_w.T) * ah
    add = cvec @ p.F.T + p.b1 if p.F is not None else p.b1
    h_new, (_, cell_new) = cifg_step(au + ah + add, (h, cell))
    logits = (h_new @ p.P.T) @ p.W.T
    if p.G is not None:
        logits = logits + cvec @ p.G.T
    logits = logits + p.b2
    if hash_row is not None:
        logits = logits + hash_row
    return log_softmax(logits, axis=-1), h_new, cell_new
