"""Counter-based random streams.

Every random number used by the simulators is a pure function of a 64-bit
stream key and an integer counter, so results never depend on the order in
which trials, images or neurons are evaluated. Keys are derived by folding
integer indices into a master seed with the SplitMix64 finalizer.
"""

import numba as nb
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


@nb.njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(cache=True, inline="always")
def fold(key, index):
    """Derive a child key from ``key`` and a non-negative integer index."""
    return mix64(key ^ mix64(np.uint64(index) * _GOLDEN + _GOLDEN))


@nb.njit(cache=True, inline="always")
def uniform(key, counter):
    """Uniform double in [0, 1) for stream ``key`` at position ``counter``."""
    return (fold(key, counter) >> _S11) * _INV53


@nb.njit(cache=True, inline="always")
def normal_pair(key, counter):
    """Two independent standard normals for pair number ``counter``.

    Marsaglia's polar method on the sub-stream ``fold(key, counter)``; the
    rejection loop only advances that sub-stream, so pairs stay addressable.
    """
    sub = fold(key, counter)
    j = np.uint64(0)
    while True:
        u = 2.0 * uniform(sub, j) - 1.0
        v = 2.0 * uniform(sub, j + np.uint64(1)) - 1.0
        s = u * u + v * v
        if 0.0 < s < 1.0:
            f = np.sqrt(-2.0 * np.log(s) / s)
            return u * f, v * f
        j += np.uint64(2)


def stream_key(seed, *indices):
    """Key for the stream addressed by ``(seed, *indices)``.

    >>> stream_key(1, 2, 3) == stream_key(1, 2, 3)
    True
    """
    key = mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    for i in indices:
        if i < 0:
            raise ValueError("stream indices must be non-negative")
        key = fold(key, np.uint64(i))
    return np.uint64(key)


@nb.njit(cache=True)
def _uniform_block(key, start, n):
    out = np.empty(n)
    for i in range(n):
        out[i] = uniform(key, np.uint64(start + i))
    return out


@nb.njit(cache=True)
def _normal_block(key, start, n):
    out = np.empty(n)
    for i in range((n + 1) // 2):
        a, b = normal_pair(key, np.uint64(start // 2 + i))
        out[2 * i] = a
        if 2 * i + 1 < n:
            out[2 * i + 1] = b
    return out


def uniforms(key, n, start=0):
    """``n`` consecutive uniforms from stream ``key``."""
    return _uniform_block(np.uint64(key), start, n)


def normals(key, n, start=0):
    """``n`` standard normals from stream ``key`` (``start`` must be even)."""
    if start % 2:
        raise ValueError("start must be even")
    return _normal_block(np.uint64(key), start, n)
