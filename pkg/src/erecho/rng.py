"""Counter-based random numbers for reproducible ensemble Monte Carlo.

Every draw is a pure function of ``(seed, stream, ion index, event index,
draw index)`` computed with the Philox4x64-10 bijection, so an ion's random
history does not depend on how the ensemble is split across workers or in
which order blocks are evaluated.
"""
from __future__ import annotations

import hashlib
import math

import numpy as np

__all__ = ["philox4x64", "CounterRNG"]

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_LO32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)


def _mulhilo(a_lo, a_hi, a, b):
    b_lo = b & _LO32
    b_hi = b >> _S32
    p0 = a_lo * b_lo
    p1 = a_lo * b_hi
    p2 = a_hi * b_lo
    mid = (p0 >> _S32) + (p1 & _LO32) + (p2 & _LO32)
    p1 >>= _S32
    p2 >>= _S32
    p1 += p2
    p1 += a_hi * b_hi
    p1 += mid >> _S32
    return p1, a * b


_M0_LO, _M0_HI = _M0 & _LO32, _M0 >> _S32
_M1_LO, _M1_HI = _M1 & _LO32, _M1 >> _S32


def philox4x64(counter, key, rounds: int = 10) -> np.ndarray:
    """Philox4x64 block function.

    ``counter`` has shape (..., 4) and ``key`` shape (..., 2), both uint64
    and broadcastable; returns an array of shape (..., 4).
    """
    ctr = np.asarray(counter, dtype=np.uint64)
    k = np.asarray(key, dtype=np.uint64)
    c0, c1, c2, c3 = (ctr[..., i] for i in range(4))
    k0, k1 = k[..., 0], k[..., 1]
    with np.errstate(over="ignore"):
        for r in range(rounds):
            if r:
                k0 = k0 + _W0
                k1 = k1 + _W1
            hi0, lo0 = _mulhilo(_M0_LO, _M0_HI, _M0, c0)
            hi1, lo1 = _mulhilo(_M1_LO, _M1_HI, _M1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return np.stack(np.broadcast_arrays(c0, c1, c2, c3), axis=-1)


def _stream_id(stream) -> int:
    if isinstance(stream, (int, np.integer)):
        return int(stream) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.blake2b(str(stream).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


_TWO_M53 = 2.0 ** -53


class CounterRNG:
    """Keyed, stateless generator.

    Parameters
    ----------
    seed : int
        64-bit user seed (first key word).
    stream : str or int
        Purpose tag (second key word), e.g. ``"static"`` or ``"bath"``.
    """

    def __init__(self, seed: int, stream="default"):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream = stream
        self._key = np.array([self.seed, _stream_id(stream)], dtype=np.uint64)

    def spawn(self, stream) -> "CounterRNG":
        """Independent generator for a sub-purpose of this one."""
        return CounterRNG(self.seed, f"{self.stream}/{stream}")

    def raw(self, ion, event=0, n: int = 4) -> np.ndarray:
        """``n`` raw 64-bit words per ion, shape (len(ion), n)."""
        ion = np.atleast_1d(np.asarray(ion, dtype=np.uint64))
        event = np.broadcast_to(np.asarray(event, dtype=np.uint64), ion.shape)
        blocks = math.ceil(n / 4)
        ctr = np.zeros(ion.shape + (blocks, 4), dtype=np.uint64)
        ctr[..., 0] = ion[..., None]
        ctr[..., 1] = event[..., None]
        ctr[..., 2] = np.arange(blocks, dtype=np.uint64)
        out = philox4x64(ctr, self._key)
        return out.reshape(ion.shape + (blocks * 4,))[..., :n]

    def uniform(self, ion, event=0, n: int | None = None) -> np.ndarray:
        """Uniforms in the open interval (0, 1)."""
        k = 1 if n is None else n
        words = self.raw(ion, event, k)
        u = ((words >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53
        return u[..., 0] if n is None else u

    def normal(self, ion, event=0, n: int | None = None) -> np.ndarray:
        """Standard normals by Box-Muller, using both branches of each pair."""
        k = 1 if n is None else n
        pairs = (k + 1) // 2
        u = self.uniform(ion, event, 2 * pairs)
        rad = np.sqrt(-2.0 * np.log(u[..., 0::2]))
        ang = 2.0 * math.pi * u[..., 1::2]
        z = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=-1)
        z = z.reshape(z.shape[:-2] + (2 * pairs,))[..., :k]
        return z[..., 0] if n is None else z

    def exponential(self, ion, event=0, n: int | None = None) -> np.ndarray:
        return -np.log(self.uniform(ion, event, n))

    def cauchy(self, ion, event=0, n: int | None = None) -> np.ndarray:
        """Standard Cauchy (unit half width)."""
        return np.tan(math.pi * (self.uniform(ion, event, n) - 0.5))

    def sign(self, ion, event=0) -> np.ndarray:
        return np.where(self.uniform(ion, event) < 0.5, -1.0, 1.0)
