"""Counter-based random streams (Philox4x32-10).

Every draw is a pure function of ``(master_seed, path_index, step, block)``:
the 64-bit seed is the Philox key and the counter words are
``(path_lo, path_hi, step, block)``.  Block 0 at counter step k feeds the
Gaussian increments of steps 2k-1 and 2k (two 53-bit uniforms through
Box-Muller, cosine branch for the odd step, sine branch for the even one);
block 1 at counter step i yields two 53-bit uniforms for step i, lane pair 0
for the crossing flag and lane pair 1 for the auxiliary uniform.  Nothing is stateful, so a path can be regenerated in isolation and
paths can be scheduled in any order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S5 = np.uint64(5)
_S6 = np.uint64(6)
_TWO26 = 67108864.0
_TWO53 = 9007199254740992.0

GAUSS = 0
FLAG = 1
AUX = 2


@njit(cache=True, nogil=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Philox4x32 with 10 rounds; all words are uint64 holding 32-bit values."""
    for r in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> _S32
        lo0 = p0 & _MASK
        hi1 = p1 >> _S32
        lo1 = p1 & _MASK
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        if r < 9:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
    return c0, c1, c2, c3


@njit(cache=True, nogil=True)
def _u53(a, b):
    # [0, 1) with 53 random bits
    return (float(a >> _S5) * _TWO26 + float(b >> _S6)) / _TWO53


@njit(cache=True, nogil=True)
def _block(seed, path, step, block):
    s = np.uint64(seed)
    p = np.uint64(path)
    return philox4x32(p & _MASK, p >> _S32, np.uint64(step) & _MASK, np.uint64(block),
                      s & _MASK, s >> _S32)


@njit(cache=True, nogil=True)
def gauss_pair(seed, path, k):
    """Standard normal draws of steps 2k-1 and 2k of ``path``."""
    o0, o1, o2, o3 = _block(seed, path, k, 0)
    u1 = 1.0 - _u53(o0, o1)  # (0, 1]
    r = math.sqrt(-2.0 * math.log(u1))
    a = 2.0 * math.pi * _u53(o2, o3)
    return r * math.cos(a), r * math.sin(a)


@njit(cache=True, nogil=True)
def gauss(seed, path, step):
    """Standard normal draw for ``step`` (>= 1) of ``path``."""
    g_odd, g_even = gauss_pair(seed, path, (step + 1) >> 1)
    return g_odd if step & 1 else g_even


@njit(cache=True, nogil=True)
def uniforms(seed, path, step):
    """The (flag, auxiliary) uniform pair in [0, 1) for ``step`` of ``path``."""
    o0, o1, o2, o3 = _block(seed, path, step, 1)
    return _u53(o0, o1), _u53(o2, o3)


@njit(cache=True, nogil=True)
def uniform(seed, path, step, substream):
    fu, au = uniforms(seed, path, step)
    return fu if substream == FLAG else au


@dataclass(frozen=True)
class RngStream:
    """Draw sequence of one path; identical for identical (master_seed, path_index)."""

    master_seed: int
    path_index: int

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in 64 unsigned bits")
        if not 0 <= self.path_index < 2**64:
            raise ValueError("path_index must fit in 64 unsigned bits")

    def gauss(self, step: int) -> float:
        return gauss(self.master_seed, self.path_index, step)

    def uniform(self, step: int, substream: int = FLAG) -> float:
        if substream not in (FLAG, AUX):
            raise ValueError("uniform substreams are FLAG (1) and AUX (2)")
        return uniform(self.master_seed, self.path_index, step, substream)

    def gauss_array(self, n: int) -> np.ndarray:
        return np.array([self.gauss(i) for i in range(1, n + 1)])
