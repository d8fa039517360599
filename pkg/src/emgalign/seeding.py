"""Seed derivation.

Every random draw in the package comes from a PCG64 generator whose state is
built by ``numpy.random.SeedSequence`` from a tuple of non-negative integers:
the master seed followed by integer keys naming the purpose (stream tag,
subject, fold, ...). SeedSequence hashes the whole tuple, so streams for
different keys are independent and do not depend on call order.
"""

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _as_key(k):
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    return int(k) & _MASK64


def derive_seed(seed, *keys):
    """A 64-bit child seed for ``(seed, *keys)``."""
    ss = np.random.SeedSequence([_as_key(seed), *(_as_key(k) for k in keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def rng(seed, *keys):
    """A fresh ``Generator`` for ``(seed, *keys)``; string keys are CRC32-hashed."""
    ss = np.random.SeedSequence([_as_key(seed), *(_as_key(k) for k in keys)])
    return np.random.Generator(np.random.PCG64(ss))
