"""Counter-based random streams.

Every uniform is a pure function of ``(key, counter)``: the key comes from
hashing ``(master_seed, stream_index)`` and the counter is the draw number
inside the stream. Histories therefore own independent, reproducible
substreams no matter which worker runs them or in what order.

The mixing function is the SplitMix64 finalizer. The same arithmetic is
exposed as numba device functions (used inside the transport kernel) and
as the vectorised :class:`CounterStream` (used from Python).
"""

from __future__ import annotations

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


@njit(cache=True, nogil=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def stream_key(master_seed, index):
    """Key of substream ``index`` under ``master_seed`` (both uint64)."""
    return mix64(mix64(master_seed + GOLDEN) ^ (index * GOLDEN + _M2))


@njit(cache=True, nogil=True)
def uniform_at(key, counter):
    """Uniform on the open interval (0, 1); never returns 0 or 1."""
    bits = mix64(key + (counter + np.uint64(1)) * GOLDEN) >> _S11
    return (float(bits) + 0.5) * _INV53


def _mix64_np(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


class CounterStream:
    """Reproducible uniform stream for one ``(master_seed, index)`` pair.

    Offers ``random()`` / ``random(size)`` like :class:`numpy.random.Generator`,
    so it can be handed to any sampler that accepts a generator. Uniforms
    lie strictly inside (0, 1).
    """

    def __init__(self, master_seed: int, index: int = 0):
        self.master_seed = int(master_seed)
        self.index = int(index)
        self.key = stream_key(np.uint64(self.master_seed % 2**64), np.uint64(self.index % 2**64))
        self.counter = 0

    def random(self, size=None):
        n = 1 if size is None else int(np.prod(size))
        ctr = np.arange(self.counter, self.counter + n, dtype=np.uint64) + np.uint64(1)
        self.counter += n
        with np.errstate(over="ignore"):
            z = self.key + ctr * GOLDEN
        bits = _mix64_np(z) >> _S11
        u = (bits.astype(np.float64) + 0.5) * _INV53
        if size is None:
            return float(u[0])
        return u.reshape(size)
