"""Counter-based randomness helpers.

All randomness in the package is derived from a user seed through Philox
streams keyed by (seed, tag, index).  Streams are independent of scheduling,
so threaded runs reproduce single-threaded results exactly.
"""

import zlib

import numpy as np

_MASK32 = 0xFFFFFFFF


def _tag_key(tag):
    return zlib.crc32(tag.encode("utf-8")) & _MASK32


def substream(seed, tag, *indices):
    """Independent Generator for (seed, tag, indices)."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1),
                                spawn_key=(_tag_key(tag),) + tuple(int(i) & _MASK32 for i in indices))
    return np.random.Generator(np.random.Philox(ss))

def keyed_uniform(seed, tag, *indices):
    """One U[0,1] draw, a pure function of (seed, tag, indices)."""
    return float(substream(seed, tag, *indices).random())


def spawn_generators(seed, tag, count):
    return [substream(seed, tag, i) for i in range(count)]
