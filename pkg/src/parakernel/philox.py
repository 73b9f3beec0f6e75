"""Philox4x32-10 counter-based generator usable inside numba kernels.

numpy ships a Philox bit generator, but its per-draw state lives in Python
objects and cannot be called from compiled code; the kernels here need a
pure function of (key, counter) instead.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

M0 = np.uint64(0xD2511F53)
M1 = np.uint64(0xCD9E8D57)
W0 = np.uint64(0x9E3779B9)
W1 = np.uint64(0xBB67AE85)
MASK = np.uint64(0xFFFFFFFF)
SHIFT = np.uint64(32)
TWO_NEG_53 = 2.0**-53
TWO_NEG_32 = 2.0**-32


@nb.njit(inline="always")
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten Philox rounds on a 128-bit counter; all inputs are uint64 holding 32-bit words."""
    for _ in range(10):
        p0 = M0 * c0
        p1 = M1 * c2
        n0 = ((p1 >> SHIFT) ^ c1 ^ k0) & MASK
        n1 = p1 & MASK
        n2 = ((p0 >> SHIFT) ^ c3 ^ k1) & MASK
        n3 = p0 & MASK
        c0, c1, c2, c3 = n0, n1, n2, n3
        k0 = (k0 + W0) & MASK
        k1 = (k1 + W1) & MASK
    return c0, c1, c2, c3


@nb.njit(inline="always")
def uniform_pair(seed, stream, index):
    """Two doubles in (0, 1) from counter (index, stream) under key ``seed``."""
    k0 = np.uint64(seed) & MASK
    k1 = (np.uint64(seed) >> SHIFT) & MASK
    s = np.uint64(stream)
    i = np.uint64(index)
    o0, o1, o2, o3 = philox4x32(i & MASK, i >> SHIFT, s & MASK, s >> SHIFT, k0, k1)
    a = (o0 << np.uint64(21)) | (o1 >> np.uint64(11))
    b = (o2 << np.uint64(21)) | (o3 >> np.uint64(11))
    return (a + 0.5) * TWO_NEG_53, (b + 0.5) * TWO_NEG_53


@nb.njit(inline="always")
def normals_and_uniform(seed, stream, index):
    """Two independent standard normals (both Box-Muller branches) and a uniform.

    The Box-Muller radius uses 53 bits (words 0-1); the angle and the
    uniform use 32 bits each (words 2 and 3).
    """
    k0 = np.uint64(seed) & MASK
    k1 = (np.uint64(seed) >> SHIFT) & MASK
    s = np.uint64(stream)
    i = np.uint64(index)
    o0, o1, o2, o3 = philox4x32(i & MASK, i >> SHIFT, s & MASK, s >> SHIFT, k0, k1)
    u1 = (((o0 << np.uint64(21)) | (o1 >> np.uint64(11))) + 0.5) * TWO_NEG_53
    angle = 2.0 * math.pi * (o2 + 0.5) * TWO_NEG_32
    rad = math.sqrt(-2.0 * math.log(u1))
    return rad * math.cos(angle), rad * math.sin(angle), (o3 + 0.5) * TWO_NEG_32


@nb.njit
def block(counter, key):
    """Philox4x32-10 of a single block; ``counter`` has 4 words, ``key`` 2 (for testing)."""
    o = philox4x32(
        np.uint64(counter[0]), np.uint64(counter[1]), np.uint64(counter[2]), np.uint64(counter[3]),
        np.uint64(key[0]), np.uint64(key[1]),
    )
    out = np.empty(4, dtype=np.uint64)
    out[0], out[1], out[2], out[3] = o
    return out
