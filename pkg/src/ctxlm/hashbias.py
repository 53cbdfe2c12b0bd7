"""Feature-hashed per-(word, context-value) output bias.

One flat table of trained values is shared by all context variables;
the slot for pair (w, c_i) is

    h_i(w, c_i) = (w * r_0 + c_i * r_i) mod size

with fixed random multipliers r.  Because the table is much smaller
than vocabulary x contexts, a membership filter over the pairs actually
seen in training gates every lookup, so unseen pairs contribute exactly
zero instead of a collided stranger's bias.  The filter probes 16 bit
positions per pair, hashed the same way as the table index but with
their own multipliers and the bit-array length as modulus.

All multipliers derive from the run seed through the named streams in
``seeding`` (one ``integers(1, 2**31, size=...)`` draw per structure)
and are serialized verbatim, so checkpoints replay identically.
"""

import numpy as np

from . import kernels
from .seeding import STREAM_BLOOM_MULTIPLIERS, STREAM_HASH_MULTIPLIERS, stream

# per-product modular reduction needs (size-1)**2 < 2**64
MAX_SIZE = 2**31


def _check_size(size, what):
    if not 1 <= int(size) < MAX_SIZE:
        raise ValueError(f"{what} must be in [1, 2**31), got {size}")


def hash_index(w: int, c: int, r_w: int, r_c: int, size: int) -> int:
    """(w*r_w + c*r_c) mod size, each product reduced before the sum."""
    _check_size(size, "size")
    if w < 0 or c < 0:
        raise ValueError("ids must be non-negative")
    out = kernels.hash_indices(np.array([w], dtype=np.uint64),
                               np.array([c], dtype=np.uint64),
                               np.uint64(r_w), np.uint64(r_c), np.uint64(size))
    return int(out[0])


class HashedBiasTable:
    """Trainable hash-table values plus the fixed index multipliers."""

    def __init__(self, size: int, n_vars: int, seed: int,
                 values=None, multipliers=None):
        _check_size(size, "hash table size")
        self.size = int(size)
        self.seed = int(seed)
        if multipliers is None:
            rng = stream(seed, STREAM_HASH_MULTIPLIERS)
            multipliers = rng.integers(1, 2**31, size=n_vars + 1).astype(np.uint64)
        self.multipliers = np.asarray(multipliers, dtype=np.uint64)
        if len(self.multipliers) != n_vars + 1:
            raise ValueError("need one multiplier per variable plus the word multiplier")
        self.values = np.zeros(self.size) if values is None else np.asarray(values, dtype=np.float64)
        if self.values.shape != (self.size,):
            raise ValueError("values array does not match table size")

    @property
    def n_vars(self) -> int:
        return len(self.multipliers) - 1

    @property
    def mult_word(self):
        return self.multipliers[0]

    @property
    def mult_ctx(self):
        return self.multipliers[1:]

    def index(self, w: int, c: int, var: int) -> int:
        return hash_index(w, c, int(self.mult_word), int(self.mult_ctx[var]), self.size)


class ObservedPairFilter:
    """Bit array recording which (word, context-value) pairs were observed.

    16 probes per pair; inserted pairs always test positive, others test
    positive only with the usual small-collision probability.
    """

    def __init__(self, n_bits: int, n_vars: int, seed: int,
                 bits=None, mult_word=None, mult_ctx=None):
        _check_size(n_bits, "filter bit count")
        self.n_bits = int(n_bits)
        self.seed = int(seed)
        if mult_word is None:
            rng = stream(seed, STREAM_BLOOM_MULTIPLIERS)
            mult_word = rng.integers(1, 2**31, size=16).astype(np.uint64)
            mult_ctx = rng.integers(1, 2**31, size=(16, n_vars)).astype(np.uint64)
        self.mult_word = np.asarray(mult_word, dtype=np.uint64)
        self.mult_ctx = np.asarray(mult_ctx, dtype=np.uint64)
        if self.mult_word.shape != (16,) or self.mult_ctx.shape != (16, n_vars):
            raise ValueError("filter multiplier arrays have wrong shape")
        n_words = (self.n_bits + 63) // 64
        self.bits = np.zeros(n_words, dtype=np.uint64) if bits is None \
            else np.asarray(bits, dtype=np.uint64)
        if self.bits.shape != (n_words,):
            raise ValueError("bit array does not match n_bits")

    @property
    def n_vars(self) -> int:
        return self.mult_ctx.shape[1]

    def insert(self, w: int, c: int, var: int) -> None:
        self.insert_batch(np.array([w]), np.array([c]), var)

    def insert_batch(self, w, c, var: int) -> None:
        kernels.bloom_insert(self.bits,
                             np.ascontiguousarray(w, dtype=np.uint64),
                             np.ascontiguousarray(c, dtype=np.uint64),
                             self.mult_word, np.ascontiguousarray(self.mult_ctx[:, var]),
                             np.uint64(self.n_bits))

    def contains(self, w: int, c: int, var: int) -> int:
        return int(self.contains_batch(np.array([w]), np.array([c]), var)[0])

    def contains_batch(self, w, c, var: int):
        return kernels.bloom_query(self.bits,
                                   np.ascontiguousarray(w, dtype=np.uint64),
                                   np.ascontiguousarray(c, dtype=np.uint64),
                                   self.mult_word, np.ascontiguousarray(self.mult_ctx[:, var]),
                                   np.uint64(self.n_bits))


def build_filter_from_corpus(examples, n_vars: int, n_bits: int, seed: int) -> ObservedPairFilter:
    """Insert (token, context-value) pairs of every example, one pass."""
    filt = ObservedPairFilter(n_bits, n_vars, seed)
    for ex in examples:
        toks = np.ascontiguousarray(ex.token_ids, dtype=np.uint64)
        for i in range(n_vars):
            filt.insert_batch(toks, np.full(len(toks), ex.context_ids[i], dtype=np.uint64), i)
    return filt


def _kernel_args(table: HashedBiasTable, filt: ObservedPairFilter):
    if table.n_vars != filt.n_vars:
        raise ValueError("table and filter disagree on the number of context variables")
    return (table.values, np.uint64(table.size), table.mult_word,
            np.ascontiguousarray(table.mult_ctx), filt.bits, np.uint64(filt.n_bits),
            filt.mult_word, filt.mult_ctx)


def hash_bias_lookup(table, filt, w: int, context_ids) -> float:
    """Sum over variables of the gated table value for word w."""
    ctx = np.asarray(context_ids, dtype=np.uint64)[None, :]
    out = kernels.pair_bias(*_kernel_args(table, filt),
                            np.array([w], dtype=np.uint64), ctx)
    return float(out[0, 0])


def dense_bias(table, filt, context_ids, vocab_size: int):
    """Gated bias of every word id in [0, vocab_size) for one context tuple."""
    ctx = np.ascontiguousarray(context_ids, dtype=np.uint64)
    args = _kernel_args(table, filt)
    return kernels.dense_bias(*args[:6], args[6], args[7], ctx, vocab_size)


def pair_bias(table, filt, word_ids, ctx_rows):
    """(B, K) gated biases for candidate words (K,) under context rows (B, n)."""
    return kernels.pair_bias(*_kernel_args(table, filt),
                             np.ascontiguousarray(word_ids, dtype=np.uint64),
                             np.ascontiguousarray(ctx_rows, dtype=np.uint64))


def dense_bias_grad(value_grads, table, filt, context_ids, upstream):
    ctx = np.ascontiguousarray(context_ids, dtype=np.uint64)
    args = _kernel_args(table, filt)
    kernels.dense_bias_grad(value_grads, upstream, *args[1:], ctx, len(upstream))


def pair_bias_grad(value_grads, table, filt, word_ids, ctx_rows, upstream):
    args = _kernel_args(table, filt)
    kernels.pair_bias_grad(value_grads, upstream, *args[1:],
                           np.ascontiguousarray(word_ids, dtype=np.uint64),
                           np.ascontiguousarray(ctx_rows, dtype=np.uint64))


def hash_bias_accumulate_grad(table, filt, w: int, context_ids, upstream_grad: float):
    """Sparse slot -> gradient dict for one (word, context tuple) lookup.

    Gated-out variables contribute nothing; several variables hashing to
    the same slot accumulate there.
    """
    updates: dict[int, float] = {}
    if upstream_grad == 0.0:
        return updates
    for i, c in enumerate(context_ids):
        if filt.contains(w, int(c), i):
            idx = table.index(w, int(c), i)
            updates[idx] = updates.get(idx, 0.0) + upstream_grad
    return updates
