"""Seeded random streams split per component.

Each component draws from its own PCG64 stream keyed by ``(seed, crc32(name))``
so that, for example, changing how many dropout masks are drawn never shifts
parameter initialisation. Names in use:

``init``          parameter initialisation
``dropout``       tagger dropout masks
``layer_dropout`` per-batch layer drop masks for LM training
``batching``      shuffling and batch order
``prune``         dropout and batching during pruning
"""

import zlib

import numpy as np


def stream(seed, name):
    return np.random.default_rng([int(seed), zlib.crc32(name.encode("utf-8"))])


def glorot_uniform(rng, fan_in, fan_out, shape=None):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape or (fan_in, fan_out))
