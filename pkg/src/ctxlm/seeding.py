"""Named random streams derived from the single run seed.

Every source of randomness in the toolkit draws from its own child of
``numpy.random.SeedSequence(seed)``, so two runs with the same seed are
reproducible stream by stream, and adding draws to one stream never
perturbs another.  The spawn keys below are part of the checkpoint
compatibility contract: changing them invalidates saved hash tables.
"""

import numpy as np

# spawn_key assignments (fixed; see module docstring)
STREAM_HASH_MULTIPLIERS = 0   # random multipliers of the bias hash table
STREAM_BLOOM_MULTIPLIERS = 1  # multipliers of the 16 membership-filter hashes
STREAM_PARAM_INIT = 2         # model / embedding initialization
STREAM_SHUFFLE = 3            # epoch shuffling of training batches
STREAM_DROPOUT = 4            # dropout masks
STREAM_NEG_SAMPLES = 5        # negative-sample draws for the sampled softmax


def stream(seed: int, key: int) -> np.random.Generator:
    """Generator for one named stream of the given run seed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(key,))))
