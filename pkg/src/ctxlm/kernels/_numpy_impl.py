"""Pure-numpy reference implementations of the hot kernels.

Kept dependency-free so the package runs anywhere; the numba backend in
``_numba_impl`` must match these bit for bit.  All float accumulations
iterate context variables left to right, matching the numba loop order.
"""

import numpy as np

U64 = np.uint64


def hash_indices(w, c, r_w, r_c, size):
    """(w*r_w + c*r_c) mod size with per-product reduction.

    w and c are equal-length 1-D uint64 arrays; size must stay below
    2**31 so each reduced product fits in uint64.
    """
    size = U64(size)
    a = (w % size) * (U64(r_w) % size) % size
    b = (c % size) * (U64(r_c) % size) % size
    return (a + b) % size


def bloom_insert(bits, w, c, mult_w, mult_c, m):
    """Set the 16 filter bits of each (w[p], c[p]) pair, in place."""
    for j in range(16):
        idx = hash_indices(w, c, mult_w[j], mult_c[j], m)
        np.bitwise_or.at(bits, (idx >> U64(6)).astype(np.int64), U64(1) << (idx & U64(63)))


def bloom_query(bits, w, c, mult_w, mult_c, m):
    """1 where all 16 filter bits of the pair are set, else 0 (uint8)."""
    out = np.ones(w.shape[0], dtype=np.uint8)
    for j in range(16):
        idx = hash_indices(w, c, mult_w[j], mult_c[j], m)
        bit = (bits[idx >> U64(6)] >> (idx & U64(63))) & U64(1)
        out &= bit.astype(np.uint8)
    return out


def dense_bias(H, l, r_w, r_c, bits, m, bmult_w, bmult_c, ctx, V):
    """Gated bias for every word id in [0, V) under one context tuple.

    ctx is the (n,) tuple of context-value ids; r_c and bmult_c carry one
    multiplier (column) per variable.
    """
    out = np.zeros(int(V), dtype=np.float64)
    w = np.arange(int(V), dtype=U64)
    for i in range(len(ctx)):
        cvec = np.full(int(V), ctx[i], dtype=U64)
        gate = bloom_query(bits, w, cvec, bmult_w, bmult_c[:, i], m)
        idx = hash_indices(w, cvec, r_w, r_c[i], l)
        out += H[idx] * gate
    return out


def pair_bias(H, l, r_w, r_c, bits, m, bmult_w, bmult_c, w, ctx):
    """Gated bias for candidate words w (K,) under context rows ctx (B, n)."""
    B, n = ctx.shape
    K = w.shape[0]
    out = np.zeros((B, K), dtype=np.float64)
    for i in range(n):
        wb = np.broadcast_to(w[None, :], (B, K)).ravel()
        cb = np.broadcast_to(ctx[:, i : i + 1], (B, K)).ravel()
        gate = bloom_query(bits, wb, cb, bmult_w, bmult_c[:, i], m)
        idx = hash_indices(wb, cb, r_w, r_c[i], l)
        out += (H[idx] * gate).reshape(B, K)
    return out


def dense_bias_grad(Hgrad, upstream, l, r_w, r_c, bits, m, bmult_w, bmult_c, ctx, V):
    """Scatter upstream (V,) into Hgrad at the gated-in slots."""
    w = np.arange(int(V), dtype=U64)
    for i in range(len(ctx)):
        cvec = np.full(int(V), ctx[i], dtype=U64)
        gate = bloom_query(bits, w, cvec, bmult_w, bmult_c[:, i], m).astype(bool)
        idx = hash_indices(w, cvec, r_w, r_c[i], l)
        np.add.at(Hgrad, idx[gate].astype(np.int64), upstream[gate])


def pair_bias_grad(Hgrad, upstream, l, r_w, r_c, bits, m, bmult_w, bmult_c, w, ctx):
    """Scatter upstream (B, K) into Hgrad for candidate words w (K,)."""
    B, n = ctx.shape
    K = w.shape[0]
    for i in range(n):
        wb = np.broadcast_to(w[None, :], (B, K)).ravel()
        cb = np.broadcast_to(ctx[:, i : i + 1], (B, K)).ravel()
        gate = bloom_query(bits, wb, cb, bmult_w, bmult_c[:, i], m).astype(bool)
        idx = hash_indices(wb, cb, r_w, r_c[i], l)
        np.add.at(Hgrad, idx[gate].astype(np.int64), upstream.ravel()[gate])


def scatter_add_rows(out, idx, vals):
    """out[idx[p]] += vals[p] for every p, duplicates accumulated."""
    np.add.at(out, idx, vals)
