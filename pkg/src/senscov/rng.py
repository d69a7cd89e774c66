"""Deterministic RNG sub-stream derivation.

Every random draw in the package comes from a generator derived as
``SeedSequence(entropy=seed, spawn_key=path)``. The path starts with a
stream tag and appends loop indices (iteration, input slot, neuron id, ...),
so results never depend on execution order or worker count.
"""

import numpy as np

STREAM_INIT = 1       # weight initialisation, per layer
STREAM_TRAIN = 2      # epoch shuffling
STREAM_PERTURB = 3    # noise draws, per (iteration, input slot)
STREAM_MCMC = 4       # posterior fits, per (iteration, neuron id)
STREAM_ASCENT = 5     # fuzzer tie-break nudges, per (iteration, input slot)
STREAM_ERROR_RATE = 6
STREAM_BASELINE = 7
STREAM_DATASET = 8
STREAM_EXPERIMENT = 9


def substream(seed, *path):
    """Generator for the sub-stream identified by (seed, path)."""
    key = tuple(int(p) for p in path)
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=key))
