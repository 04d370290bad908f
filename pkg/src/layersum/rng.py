"""Seedable, splittable uniform integer streams.

Every stream is a xoshiro256** generator whose 256-bit state is derived from
``(seed, stream_id)``: the stream id is hashed with the master seed through
the SplitMix64 finalizer, and the resulting key seeds a SplitMix64 sequence
that fills the four state words. Distinct stream ids under one seed always
yield distinct keys (the mixing chain is a bijection), and the generator
family's statistical quality makes their outputs behave as independent
sequences.

Bounded draws use Lemire's widening-multiply method with rejection, so every
value in ``[lo, hi]`` has probability exactly ``1 / (hi - lo + 1)``.

The hot loops are numba kernels operating on the raw ``uint64[4]`` state so
that the layer generators can sum millions of draws without Python overhead.
They are compiled with ``nogil=True`` so sets can be generated on threads.
"""

from __future__ import annotations

import numba as nb
import numpy as np

__all__ = ["RandomStream", "RangeError", "make_stream", "MAX_RANGE"]

MASK64 = (1 << 64) - 1
MAX_RANGE = 1 << 63
_GOLDEN = 0x9E3779B97F4A7C15


class RangeError(ValueError):
    """Raised for an empty or oversized draw range."""


def _mix64(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & MASK64
    return z ^ (z >> 31)


def _initial_state(seed: int, stream_id: int) -> np.ndarray:
    key = _mix64(seed ^ _mix64((stream_id + _GOLDEN) & MASK64))
    words = []
    for _ in range(4):
        key = (key + _GOLDEN) & MASK64
        words.append(_mix64(key))
    # SplitMix64 outputs are a bijection of distinct counters, so at most one
    # word can be zero and the all-zero xoshiro state is unreachable.
    return np.array(words, dtype=np.uint64)


# --------------------------------------------------------------------------
# numba kernels; all integer literals are cast to uint64 to keep numba from
# promoting mixed signed/unsigned arithmetic to float64.

_U32 = np.uint64(0xFFFFFFFF)
_TWO32 = np.uint64(1 << 32)


@nb.njit(inline="always")
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@nb.njit(inline="always")
def next_u64(s):
    result = _rotl(s[1] * np.uint64(5), 7) * np.uint64(9)
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@nb.njit(inline="always")
def _mul128(a, b):
    a_lo = a & _U32
    a_hi = a >> np.uint64(32)
    b_lo = b & _U32
    b_hi = b >> np.uint64(32)
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = (ll >> np.uint64(32)) + (lh & _U32) + (hl & _U32)
    hi = hh + (lh >> np.uint64(32)) + (hl >> np.uint64(32)) + (mid >> np.uint64(32))
    lo = (mid << np.uint64(32)) | (ll & _U32)
    return hi, lo


@nb.njit(inline="always")
def bounded(s, r):
    """Uniform integer in ``[0, r)`` for ``1 <= r <= 2**63``."""
    if r <= _TWO32:
        x = next_u64(s) >> np.uint64(32)
        m = x * r
        low = m & _U32
        if low < r:
            threshold = (_TWO32 - r) % r
            while low < threshold:
                x = next_u64(s) >> np.uint64(32)
                m = x * r
                low = m & _U32
        return m >> np.uint64(32)
    hi, lo = _mul128(next_u64(s), r)
    if lo < r:
        threshold = (np.uint64(0) - r) % r
        while lo < threshold:
            hi, lo = _mul128(next_u64(s), r)
    return hi


@nb.njit(nogil=True, cache=True)
def _draw(s, r):
    return bounded(s, r)


@nb.njit(nogil=True, cache=True)
def _fill(s, r, out):
    for i in range(out.shape[0]):
        out[i] = bounded(s, r)


@nb.njit(inline="always")
def sum_uniforms(s, k, m):
    """Sum of ``k`` draws from Uniform{1..m}; consumes exactly ``k`` draws."""
    r = np.uint64(m)
    acc = np.uint64(k)
    for _ in range(k):
        acc += bounded(s, r)
    return acc


# --------------------------------------------------------------------------


class RandomStream:
    """One reproducible sequence of uniform draws.

    The sequence is a pure function of ``(seed, stream_id)``. A stream is
    single-owner: it may move between threads but must not be shared.
    ``draws`` counts logical draws (one per value returned), not raw 64-bit
    words, which can differ when a rejection step fires.
    """

    __slots__ = ("seed", "stream_id", "state", "draws")

    def __init__(self, seed: int, stream_id: int):
        for name, value in (("seed", seed), ("stream_id", stream_id)):
            if not 0 <= value <= MASK64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {value}")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.state = _initial_state(self.seed, self.stream_id)
        self.draws = 0

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.seed}, stream_id={self.stream_id}, draws={self.draws})"

    def copy(self) -> RandomStream:
        clone = RandomStream.__new__(RandomStream)
        clone.seed = self.seed
        clone.stream_id = self.stream_id
        clone.state = self.state.copy()
        clone.draws = self.draws
        return clone

    def next_int(self, lo: int, hi: int) -> int:
        """Uniform integer in the closed range ``[lo, hi]``."""
        r = _range_size(lo, hi)
        self.draws += 1
        return lo + int(_draw(self.state, np.uint64(r)))

    def integers(self, lo: int, hi: int, size: int) -> np.ndarray:
        """``size`` consecutive draws from ``[lo, hi]`` as an int64 array.

        Equivalent to ``size`` calls of :meth:`next_int`.
        """
        r = _range_size(lo, hi)
        if lo < -(1 << 63) or hi > (1 << 63) - 1:
            raise RangeError("integers() bounds must fit in int64")
        raw = np.empty(size, dtype=np.uint64)
        _fill(self.state, np.uint64(r), raw)
        self.draws += size
        return raw.astype(np.int64) + np.int64(lo)


def _range_size(lo: int, hi: int) -> int:
    if lo > hi:
        raise RangeError(f"empty range: lo={lo} > hi={hi}")
    r = hi - lo + 1
    if r > MAX_RANGE:
        raise RangeError(f"range size {r} exceeds 2**63")
    return r


def make_stream(seed: int, stream_id: int) -> RandomStream:
    return RandomStream(seed, stream_id)
