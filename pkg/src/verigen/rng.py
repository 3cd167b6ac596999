"""Counter-based SplitMix64 random streams.

Every draw is a pure function of ``(key, counter)``, where the key is derived
from ``(seed, index)``.  A block of streams (one per trial or episode) can be
advanced together with numpy, and the values a given stream produces never
depend on how the block was chunked or which worker computed it.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_TO_UNIT = 2.0**-53


def fmix64(z: int) -> int:
    """SplitMix64 output finalizer on a python int."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _fmix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def derive_key(seed: int, *path: int) -> int:
    """Mix a seed and a path of non-negative indices into a stream key."""
    key = fmix64(seed + GOLDEN)
    for p in path:
        key = fmix64(key ^ fmix64((p + 1) * GOLDEN))
    return key


class RandomStream:
    """One or more independent SplitMix64 substreams advanced in lockstep.

    ``RandomStream(seed)`` or ``RandomStream(seed, index=i)`` is a single
    stream; draws have shape ``(n,)``.  ``RandomStream.block(seed, start,
    stop)`` holds one stream per index in ``range(start, stop)``; draws have
    shape ``(stop - start, n)``.
    """

    def __init__(self, seed: int, index: int | None = None, *, path: tuple[int, ...] = ()):
        if not 0 <= seed <= MASK64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        full = path if index is None else (*path, index)
        self._keys = np.array([derive_key(seed, *full)], dtype=np.uint64)
        self._single = True
        self.counter = 0

    @classmethod
    def block(cls, seed: int, start: int, stop: int, *, path: tuple[int, ...] = ()) -> RandomStream:
        obj = cls.__new__(cls)
        obj.seed = seed
        base = np.uint64(derive_key(seed, *path))
        idx = np.arange(start + 1, stop + 1, dtype=np.uint64) * np.uint64(GOLDEN)
        obj._keys = _fmix64_array(base ^ _fmix64_array(idx))
        obj._single = False
        obj.counter = 0
        return obj

    def __len__(self) -> int:
        return len(self._keys)

    def raw(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit outputs of every substream."""
        offsets = (np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
                   * np.uint64(GOLDEN))
        self.counter += n
        out = _fmix64_array(self._keys[:, None] + offsets[None, :])
        return out[0] if self._single else out

    def uniform(self, n: int) -> np.ndarray:
        """Doubles in [0, 1) with 53 bits of resolution."""
        return (self.raw(n) >> np.uint64(11)).astype(np.float64) * _TO_UNIT

    def normal(self, n: int) -> np.ndarray:
        """Standard normal variates by Box-Muller (two uniforms per variate)."""
        u1 = self.uniform(n)
        u2 = self.uniform(n)
        return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)

    def integers(self, high: int, n: int) -> np.ndarray:
        """Integers uniform on ``{0, ..., high - 1}``."""
        return np.floor(self.uniform(n) * high).astype(np.int64)

    def random(self) -> float:
        if not self._single:
            raise TypeError("random() needs a single stream")
        return float(self.uniform(1)[0])
