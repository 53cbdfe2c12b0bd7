"""Numba-compiled kernels.  Same contracts and bit-identical results as
``_numpy_impl``; see that module for the accumulation-order convention."""

import numpy as np
from numba import njit, uint64

_ONE = uint64(1)
_SIX = uint64(6)
_MASK63 = uint64(63)


@njit(cache=True)
def _pair_hash(w, c, r_w, r_c, size):
    a = (w % size) * (r_w % size) % size
    b = (c % size) * (r_c % size) % size
    return (a + b) % size


@njit(cache=True)
def hash_indices(w, c, r_w, r_c, size):
    out = np.empty(w.shape[0], dtype=np.uint64)
    r_w = uint64(r_w)
    r_c = uint64(r_c)
    size = uint64(size)
    for p in range(w.shape[0]):
        out[p] = _pair_hash(w[p], c[p], r_w, r_c, size)
    return out


@njit(cache=True)
def _bloom_has(bits, w, c, mult_w, mult_c, m):
    for j in range(16):
        idx = _pair_hash(w, c, mult_w[j], mult_c[j], m)
        if (bits[idx >> _SIX] >> (idx & _MASK63)) & _ONE == uint64(0):
            return False
    return True


@njit(cache=True)
def bloom_insert(bits, w, c, mult_w, mult_c, m):
    m = uint64(m)
    for p in range(w.shape[0]):
        for j in range(16):
            idx = _pair_hash(w[p], c[p], mult_w[j], mult_c[j], m)
            bits[idx >> _SIX] |= _ONE << (idx & _MASK63)


@njit(cache=True)
def bloom_query(bits, w, c, mult_w, mult_c, m):
    m = uint64(m)
    out = np.empty(w.shape[0], dtype=np.uint8)
    for p in range(w.shape[0]):
        out[p] = 1 if _bloom_has(bits, w[p], c[p], mult_w, mult_c, m) else 0
    return out


@njit(cache=True)
def dense_bias(H, l, r_w, r_c, bits, m, bmult_w, bmult_c, ctx, V):
    l = uint64(l)
    m = uint64(m)
    r_w = uint64(r_w)
    out = np.zeros(V, dtype=np.float64)
    for w in range(V):
        wu = uint64(w)
        s = 0.0
        for i in range(ctx.shape[0]):
            ci = ctx[i]
            if _bloom_has(bits, wu, ci, bmult_w, bmult_c[:, i], m):
                s += H[_pair_hash(wu, ci, r_w, r_c[i], l)]
            else:
                s += 0.0
        out[w] = s
    return out


@njit(cache=True)
def pair_bias(H, l, r_w, r_c, bits, m, bmult_w, bmult_c, w, ctx):
    l = uint64(l)
    m = uint64(m)
    r_w = uint64(r_w)
    B, n = ctx.shape
    K = w.shape[0]
    out = np.zeros((B, K), dtype=np.float64)
    for i in range(n):
        for b in range(B):
            ci = ctx[b, i]
            for k in range(K):
                if _bloom_has(bits, w[k], ci, bmult_w, bmult_c[:, i], m):
                    out[b, k] += H[_pair_hash(w[k], ci, r_w, r_c[i], l)]
                else:
                    out[b, k] += 0.0
    return out


@njit(cache=True)
def dense_bias_grad(Hgrad, upstream, l, r_w, r_c, bits, m, bmult_w, bmult_c, ctx, V):
    l = uint64(l)
    m = uint64(m)
    r_w = uint64(r_w)
    for i in range(ctx.shape[0]):
        ci = ctx[i]
        for w in range(V):
            wu = uint64(w)
            if _bloom_has(bits, wu, ci, bmult_w, bmult_c[:, i], m):
                Hgrad[_pair_hash(wu, ci, r_w, r_c[i], l)] += upstream[w]


@njit(cache=True)
def pair_bias_grad(Hgrad, upstream, l, r_w, r_c, bits, m, bmult_w, bmult_c, w, ctx):
    l = uint64(l)
    m = uint64(m)
    r_w = uint64(r_w)
    B, n = ctx.shape
    K = w.shape[0]
    for i in range(n):
        for b in range(B):
            ci = ctx[b, i]
            for k in range(K):
                if _bloom_has(bits, w[k], ci, bmult_w, bmult_c[:, i], m):
                    Hgrad[_pair_hash(w[k], ci, r_w, r_c[i], l)] += upstream[b, k]


@njit(cache=True)
def scatter_add_rows(out, idx, vals):
    for p in range(idx.shape[0]):
        r = idx[p]
        for c in range(vals.shape[1]):
            out[r, c] += vals[p, c]
