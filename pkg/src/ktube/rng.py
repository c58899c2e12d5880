"""Counter-based random streams.

Every random number in ktube is a pure function of a 128-bit key and a
256-bit counter, computed with the Philox4x64-10 block cipher (the same
generator numpy ships as ``numpy.random.Philox``; outputs are bit-identical).
A walk step therefore draws the same numbers regardless of scheduling, worker
count, or whether the step was interrupted and resumed.

Key layout: ``(seed, stream_index)``.  Counter layout:
``(event, retry, purpose, block)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_LO32 = np.uint64(0xFFFFFFFF)
_SH32 = np.uint64(32)
_SH11 = np.uint64(11)
_TWO_M53 = 1.0 / 9007199254740992.0

MASK64 = (1 << 64) - 1

# purpose tags (third counter word)
PURPOSE_DRAW = 1
PURPOSE_STEP = 2
PURPOSE_INIT = 3
PURPOSE_PHASE = 4
PURPOSE_KNOTS = 5
PURPOSE_BOOT = 6

# second key word reserved for tube randomness; trajectory indices stay below it
TUBE_STREAM = MASK64


@njit(inline="always", cache=True)
def _mulhilo(a, b):
    lo = a * b
    a0 = a & _LO32
    a1 = a >> _SH32
    b0 = b & _LO32
    b1 = b >> _SH32
    p00 = a0 * b0
    p01 = a0 * b1
    p10 = a1 * b0
    mid = (p00 >> _SH32) + (p01 & _LO32) + (p10 & _LO32)
    hi = a1 * b1 + (p01 >> _SH32) + (p10 >> _SH32) + (mid >> _SH32)
    return hi, lo


@njit(cache=True, nogil=True)
def philox4x64(c0, c1, c2, c3, k0, k1):
    """Ten-round Philox4x64 bijection of one counter block."""
    for r in range(10):
        if r > 0:
            k0 = k0 + _W0
            k1 = k1 + _W1
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@njit(inline="always", cache=True)
def _to_unit(x):
    # open interval (0, 1): safe for log() and for powers with negative exponent
    return (float(x >> _SH11) + 0.5) * _TWO_M53


@njit(cache=True, nogil=True)
def fill_uniforms(k0, k1, event, retry, purpose, out):
    """Fill ``out`` with uniforms in (0, 1) from consecutive blocks of one event."""
    n = out.shape[0]
    nblocks = (n + 3) // 4
    c0 = np.uint64(event)
    c1 = np.uint64(retry)
    c2 = np.uint64(purpose)
    i = 0
    for j in range(nblocks):
        r0, r1, r2, r3 = philox4x64(c0, c1, c2, np.uint64(j), k0, k1)
        if i < n:
            out[i] = _to_unit(r0)
        if i + 1 < n:
            out[i + 1] = _to_unit(r1)
        if i + 2 < n:
            out[i + 2] = _to_unit(r2)
        if i + 3 < n:
            out[i + 3] = _to_unit(r3)
        i += 4


@njit(cache=True, nogil=True)
def _fill_event_range(k0, k1, event0, purpose, width, out):
    # out has shape (n, width); row i holds the uniforms of event event0 + i
    for i in range(out.shape[0]):
        fill_uniforms(k0, k1, event0 + np.uint64(i), np.uint64(0), purpose, out[i])


def _u64(x: int) -> np.uint64:
    return np.uint64(int(x) & MASK64)


@dataclass
class Stream:
    """A keyed random stream with a private event counter.

    ``Stream(seed, index)`` is the stream of trajectory ``index`` in a run
    seeded with ``seed``.  Each call to :meth:`draw` consumes one event;
    :meth:`draw_many` consumes ``n`` consecutive events.
    """

    seed: int
    index: int = 0
    counter: int = 0

    @property
    def key(self) -> tuple[np.uint64, np.uint64]:
        return _u64(self.seed), _u64(self.index)

    def draw(self, width: int, purpose: int = PURPOSE_DRAW) -> np.ndarray:
        out = np.empty(width)
        k0, k1 = self.key
        fill_uniforms(k0, k1, _u64(self.counter), np.uint64(0), np.uint64(purpose), out)
        self.counter += 1
        return out

    def draw_many(self, n: int, width: int, purpose: int = PURPOSE_DRAW) -> np.ndarray:
        out = np.empty((n, width))
        k0, k1 = self.key
        _fill_event_range(k0, k1, _u64(self.counter), np.uint64(purpose), width, out)
        self.counter += n
        return out

    def spawn(self, index: int) -> "Stream":
        """Independent stream sharing this stream's seed."""
        return Stream(self.seed, index)

    def numpy_generator(self, purpose: int = PURPOSE_BOOT) -> np.random.Generator:
        """A numpy Generator on a Philox key derived from this stream.

        Used for resampling (bootstrap) where random access is not needed.
        """
        k0, k1 = self.key
        r = philox4x64(np.uint64(purpose), np.uint64(0), np.uint64(0), np.uint64(0), k0, k1)
        return np.random.Generator(np.random.Philox(key=np.array([r[0], r[1]], dtype=np.uint64)))
