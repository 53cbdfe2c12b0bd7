"""Hot inner loops with a numba backend and a pure-numpy fallback.

The hashed bias term touches every vocabulary word once per sentence
(one table hash plus sixteen membership-filter probes per context
variable), which is the one part of the model BLAS cannot help with.
Those loops live here in two interchangeable implementations:

* ``_numba_impl`` -- ``@njit`` loops, used by default when numba imports.
* ``_numpy_impl`` -- vectorized numpy, always available.

Set ``CTXLM_NUMBA=0`` in the environment to force the numpy fallback.
Both backends produce bit-identical results (integer hashing is exact
and float accumulation runs in the same order); ``tests/test_kernels.py``
asserts this and ``benchmarks/bench_kernels.py`` compares their speed.

Exported functions (ids, multipliers and table sizes are uint64 arrays
or scalars; table sizes must stay below 2**31 so per-product modular
reduction fits in 64-bit arithmetic):

    hash_indices(w, c, r_w, r_c, size)            -> uint64[:]
    bloom_insert(bits, w, c, mult_w, mult_c, m)   -> None (in place)
    bloom_query(bits, w, c, mult_w, mult_c, m)    -> uint8[:]
    dense_bias(...)   per-word bias over the whole vocabulary
    pair_bias(...)    bias for candidate words x batch context rows
    dense_bias_grad(...), pair_bias_grad(...)     sparse scatter adds
    scatter_add_rows(out, idx, vals)              row scatter add
"""

import os

from . import _numpy_impl

_env = os.environ.get("CTXLM_NUMBA", "1").strip().lower()
_want_numba = _env not in ("0", "false", "no", "off")

if _want_numba:
    try:
        from . import _numba_impl as _impl

        BACKEND = "numba"
    except ImportError:
        _impl = _numpy_impl
        BACKEND = "numpy"
else:
    _impl = _numpy_impl
    BACKEND = "numpy"

hash_indices = _impl.hash_indices
bloom_insert = _impl.bloom_insert
bloom_query = _impl.bloom_query
dense_bias = _impl.dense_bias
pair_bias = _impl.pair_bias
dense_bias_grad = _impl.dense_bias_grad
pair_bias_grad = _impl.pair_bias_grad
scatter_add_rows = _impl.scatter_add_rows
