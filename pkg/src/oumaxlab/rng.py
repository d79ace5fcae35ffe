"""Splittable counter-based random streams.

A stream is identified by ``(seed, index)``.  Its state is a pair of 64-bit
words ``(key, gamma)`` with ``gamma`` odd, and its ``k``-th raw output is::

    mix64(key + (k + 1) * gamma)          (arithmetic mod 2**64)

where ``mix64`` is the SplitMix64 finalizer.  Stream keys are derived as::

    master = mix64(seed)
    key    = mix64(master + (2*index + 1) * GOLDEN)
    gamma  = fix_gamma(mix64(master + (2*index + 2) * GOLDEN))

Distinct streams use distinct increments, so two streams never run along
shifted copies of the same Weyl sequence.  Because outputs are indexed by
counter, numpy can generate any block of a stream at once and numba can walk
it one draw at a time, with identical 64-bit outputs.

Uniforms are ``((u >> 11) + 1) * 2**-53`` in (0, 1].  Normal deviate ``j``
is Box-Muller on uniforms ``2*(j//2)`` and ``2*(j//2) + 1``: cosine branch
for even ``j``, sine branch for odd ``j``.

This contract is frozen: changing any constant changes every experiment.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import njit

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_ALT = 0xAAAAAAAAAAAAAAAA
TWO_PI = 2.0 * math.pi
INV_2_53 = 1.0 / 9007199254740992.0


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python int."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _fix_gamma(g: int) -> int:
    g |= 1
    if bin(g ^ (g >> 1)).count("1") < 24:
        g ^= _ALT
    return g


def stream_key(seed: int, index: int = 0) -> tuple[int, int]:
    """Return the ``(key, gamma)`` pair for replica ``index`` of ``seed``."""
    if index < 0:
        raise ValueError("stream index must be non-negative")
    master = mix64(seed)
    key = mix64(master + (2 * index + 1) * GOLDEN)
    gamma = _fix_gamma(mix64(master + (2 * index + 2) * GOLDEN))
    return key, gamma


def stream_keys(seed: int, first: int, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Keys and gammas for replicas ``first .. first+count-1`` as uint64 arrays."""
    pairs = [stream_key(seed, first + i) for i in range(count)]
    keys = np.array([p[0] for p in pairs], dtype=np.uint64)
    gammas = np.array([p[1] for p in pairs], dtype=np.uint64)
    return keys, gammas


# ---------------------------------------------------------------- numpy side

def _mix64_np(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def raw_block(key: int, gamma: int, start: int, count: int) -> np.ndarray:
    """Raw 64-bit outputs ``start .. start+count-1`` of a stream."""
    ctr = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64_np(np.uint64(key) + ctr * np.uint64(gamma))


def uniform_block(key: int, gamma: int, start: int, count: int) -> np.ndarray:
    """Uniforms in (0, 1] at counters ``start .. start+count-1``."""
    u = raw_block(key, gamma, start, count)
    return ((u >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * INV_2_53


def normal_block(key: int, gamma: int, start: int, count: int) -> np.ndarray:
    """Standard normal deviates ``start .. start+count-1`` of a stream."""
    if count <= 0:
        return np.empty(0)
    p0 = start // 2
    p1 = (start + count - 1) // 2
    u = uniform_block(key, gamma, 2 * p0, 2 * (p1 - p0 + 1))
    r = np.sqrt(-2.0 * np.log(u[0::2]))
    theta = TWO_PI * u[1::2]
    z = np.empty(2 * (p1 - p0 + 1))
    z[0::2] = r * np.cos(theta)
    z[1::2] = r * np.sin(theta)
    off = start - 2 * p0
    return z[off:off + count]


class Stream:
    """Sequential cursor over one stream (numpy side, for non-hot code)."""

    def __init__(self, seed: int, index: int = 0):
        self.key, self.gamma = stream_key(seed, index)
        self.raw_pos = 0
        self.normal_pos = 0

    def uniforms(self, count: int) -> np.ndarray:
        out = uniform_block(self.key, self.gamma, self.raw_pos, count)
        self.raw_pos += count
        return out

    def raw(self, count: int) -> np.ndarray:
        out = raw_block(self.key, self.gamma, self.raw_pos, count)
        self.raw_pos += count
        return out

    def normals(self, count: int) -> np.ndarray:
        # Normals index their own counter range; a Stream used for normals
        # should not also be used for raw draws.
        out = normal_block(self.key, self.gamma, self.normal_pos, count)
        self.normal_pos += count
        return out


# ---------------------------------------------------------------- numba side

@njit(cache=True, inline="always")
def nb_raw(key, gamma, ctr):
    z = key + (ctr + np.uint64(1)) * gamma
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def nb_uniform(key, gamma, ctr):
    u = nb_raw(key, gamma, ctr)
    return np.float64((u >> np.uint64(11)) + np.uint64(1)) * INV_2_53


@njit(cache=True, inline="always")
def nb_normal_pair(key, gamma, pair):
    """Normals ``2*pair`` and ``2*pair + 1`` of a stream."""
    c = np.uint64(2) * pair
    u1 = nb_uniform(key, gamma, c)
    u2 = nb_uniform(key, gamma, c + np.uint64(1))
    r = math.sqrt(-2.0 * math.log(u1))
    th = TWO_PI * u2
    return r * math.cos(th), r * math.sin(th)


@njit(cache=True)
def nb_normal_block(key, gamma, start, count):
    out = np.empty(count)
    for i in range(count):
        j = start + i
        z0, z1 = nb_normal_pair(key, gamma, np.uint64(j // 2))
        out[i] = z0 if j % 2 == 0 else z1
    return out
