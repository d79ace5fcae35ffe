"""Normalized maxima of random walks, ``U_n = max_{k <= n} S_k / sqrt(k)``.

Increment ``k`` (1-based) of a walk is a fixed function of a fixed block of
counters of the walk's random stream, so the numba kernels (which stream one
increment at a time) and the numpy fallback (which builds whole blocks)
produce the same walks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from ._accel import USE_NUMBA, njit, prange
from .extreme_limits import iter_log, norm_a, norm_b

RADEMACHER, UNIFORM_SYM, STD_NORMAL, STUDENT_T = range(4)
_NAMES = {"rademacher": RADEMACHER, "uniform": UNIFORM_SYM, "normal": STD_NORMAL, "student": STUDENT_T}
SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class IncrementDistribution:
    kind: str
    df: int = 0

    def __post_init__(self):
        if self.kind not in _NAMES:
            raise ValueError(f"unknown increment law {self.kind!r}; expected one of {sorted(_NAMES)}")
        if self.kind == "student" and self.df < 1:
            raise ValueError("student increments need an integer df >= 1")

    @classmethod
    def rademacher(cls):
        return cls("rademacher")

    @classmethod
    def uniform_sym(cls):
        return cls("uniform")

    @classmethod
    def std_normal(cls):
        return cls("normal")

    @classmethod
    def student_t(cls, df: int):
        if int(df) != df:
            raise ValueError("df must be an integer")
        return cls("student", int(df))

    @classmethod
    def parse(cls, text: str) -> "IncrementDistribution":
        """``rademacher``, ``uniform``, ``normal`` or ``student:DF``."""
        name, _, arg = text.strip().lower().partition(":")
        if name in ("student", "t", "studentt"):
            if not arg:
                raise ValueError("student needs a df, e.g. student:2")
            return cls.student_t(int(arg))
        return cls(name)

    @property
    def code(self) -> int:
        return _NAMES[self.kind]

    @property
    def standardized(self) -> bool:
        """Mean 0 and variance 1 (false only for Student t with df <= 2)."""
        return self.kind != "student" or self.df > 2

    @property
    def label(self) -> str:
        return f"student:{self.df}" if self.kind == "student" else self.kind


@dataclass(frozen=True)
class WalkMaxTrace:
    checkpoints: np.ndarray
    u_values: np.ndarray
    de_values: np.ndarray = field(repr=False)


def checkpoint_grid(n: int, ratio: float = 2.0) -> np.ndarray:
    """``1, ratio, ratio**2, ...`` rounded to integers, always ending at ``n``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not ratio > 1:
        raise ValueError("checkpoint ratio must exceed 1")
    count = int(math.floor(math.log(n) / math.log(ratio) + 1e-9)) + 1
    pts = np.unique(np.round(ratio ** np.arange(count)).astype(np.int64))
    pts = pts[pts <= n]
    return pts if pts[-1] == n else np.append(pts, n)


# ------------------------------------------------------------ increments

@njit(cache=True, inline="always")
def _increment_nb(code, df, key, gamma, k):
    """Increment ``k`` (0-based) of the walk."""
    if code == RADEMACHER:
        return 1.0 if (rng.nb_raw(key, gamma, np.uint64(k)) >> np.uint64(63)) else -1.0
    if code == UNIFORM_SYM:
        return SQRT3 * (2.0 * rng.nb_uniform(key, gamma, np.uint64(k)) - 1.0)
    if code == STD_NORMAL:
        z0, z1 = rng.nb_normal_pair(key, gamma, np.uint64(k // 2))
        return z0 if k % 2 == 0 else z1
    # Student t
    if df == 1:
        u = rng.nb_uniform(key, gamma, np.uint64(k))
        return math.tan(math.pi * (u - 0.5))
    if df == 2:
        u = rng.nb_uniform(key, gamma, np.uint64(k))
        return (2.0 * u - 1.0) / math.sqrt(2.0 * u * (1.0 - u))
    # df >= 3: Z / sqrt(chi2_df / df), rescaled to unit variance; df + 1 normals
    # from pairs k*(df+1)//2 ... (normals k*(df+1) .. k*(df+1)+df)
    base = k * (df + 1)
    first = 0.0
    chi = 0.0
    for j in range(df + 1):
        idx = base + j
        z0, z1 = rng.nb_normal_pair(key, gamma, np.uint64(idx // 2))
        z = z0 if idx % 2 == 0 else z1
        if j == 0:
            first = z
        else:
            chi += z * z
    return first / math.sqrt(chi / df) * math.sqrt((df - 2.0) / df)


def increments(dist: IncrementDistribution, key: int, gamma: int, start: int, count: int) -> np.ndarray:
    """Increments ``start .. start+count-1`` (0-based) of a stream, numpy side."""
    code = dist.code
    if code == RADEMACHER:
        raw = rng.raw_block(key, gamma, start, count)
        return np.where(raw >> np.uint64(63), 1.0, -1.0)
    if code == UNIFORM_SYM:
        return SQRT3 * (2.0 * rng.uniform_block(key, gamma, start, count) - 1.0)
    if code == STD_NORMAL:
        return rng.normal_block(key, gamma, start, count)
    df = dist.df
    if df == 1:
        u = rng.uniform_block(key, gamma, start, count)
        return np.tan(np.pi * (u - 0.5))
    if df == 2:
        u = rng.uniform_block(key, gamma, start, count)
        return (2.0 * u - 1.0) / np.sqrt(2.0 * u * (1.0 - u))
    z = rng.normal_block(key, gamma, start * (df + 1), count * (df + 1)).reshape(count, df + 1)
    chi = np.sum(z[:, 1:] ** 2, axis=1)
    return z[:, 0] / np.sqrt(chi / df) * math.sqrt((df - 2.0) / df)


# --------------------------------------------------------------- kernels

@njit(cache=True)
def _walk_nb(code, df, key, gamma, checkpoints):
    out = np.empty(checkpoints.size)
    s = 0.0
    m = -np.inf
    ci = 0
    n = checkpoints[-1]
    for k in range(1, n + 1):
        s += _increment_nb(code, df, key, gamma, k - 1)
        v = s / math.sqrt(k)
        if v > m:
            m = v
        if k == checkpoints[ci]:
            out[ci] = m
            ci += 1
    return out


@njit(cache=True, parallel=True)
def _walk_many_nb(code, df, keys, gammas, checkpoints):
    out = np.empty((keys.size, checkpoints.size))
    for r in prange(keys.size):
        out[r] = _walk_nb(code, df, keys[r], gammas[r], checkpoints)
    return out


def walk_max_from_increments(xi, checkpoints=None) -> np.ndarray:
    """``U`` at each checkpoint from explicit increments (all ``k`` if none given)."""
    xi = np.asarray(xi, dtype=np.float64)
    if xi.size == 0:
        raise ValueError("need at least one increment")
    k = np.arange(1, xi.size + 1)
    u = np.maximum.accumulate(np.cumsum(xi) / np.sqrt(k))
    if checkpoints is None:
        return u
    return u[np.asarray(checkpoints) - 1]


_NP_BLOCK = 1 << 20


def _walk_np(dist, key, gamma, checkpoints):
    n = int(checkpoints[-1])
    out = np.empty(checkpoints.size)
    s = 0.0
    m = -np.inf
    for a in range(0, n, _NP_BLOCK):
        cnt = min(_NP_BLOCK, n - a)
        xi = increments(dist, key, gamma, a, cnt)
        sums = s + np.cumsum(xi)
        u = np.maximum(m, np.maximum.accumulate(sums / np.sqrt(np.arange(a + 1, a + cnt + 1))))
        sel = (checkpoints > a) & (checkpoints <= a + cnt)
        out[sel] = u[checkpoints[sel] - a - 1]
        s, m = sums[-1], u[-1]
    return out


def _trace(checkpoints, u) -> WalkMaxTrace:
    return WalkMaxTrace(checkpoints, u, norm_a(checkpoints) * u - norm_b(checkpoints))


def simulate_walk_max(n: int, dist: IncrementDistribution, seed: int, stream: int = 0,
                      ratio: float = 2.0) -> WalkMaxTrace:
    """One walk of length ``n`` with ``U`` recorded on a geometric checkpoint grid."""
    cps = checkpoint_grid(n, ratio)
    key, gamma = rng.stream_key(seed, stream)
    if USE_NUMBA:
        u = _walk_nb(dist.code, dist.df, np.uint64(key), np.uint64(gamma), cps)
    else:
        u = _walk_np(dist, key, gamma, cps)
    return _trace(cps, u)


def walk_max_ensemble(n: int, dist: IncrementDistribution, seed: int, replicas: int,
                      first: int = 0, ratio: float = 2.0) -> tuple[np.ndarray, np.ndarray]:
    """``(checkpoints, U)`` with ``U`` of shape ``(replicas, len(checkpoints))``."""
    cps = checkpoint_grid(n, ratio)
    keys, gammas = rng.stream_keys(seed, first, replicas)
    if USE_NUMBA:
        return cps, _walk_many_nb(dist.code, dist.df, keys, gammas, cps)
    return cps, np.array([_walk_np(dist, int(k), int(g), cps) for k, g in zip(keys, gammas)])


def de_statistic(trace: WalkMaxTrace) -> np.ndarray:
    """``a(n) U_n - b(n)`` at each checkpoint."""
    if trace.checkpoints.size == 0:
        raise ValueError("empty trace")
    return norm_a(trace.checkpoints) * trace.u_values - norm_b(trace.checkpoints)


def de_values(n, u):
    """``a(n) U - b(n)`` for arrays of ``U`` sampled at ``n``."""
    return norm_a(n) * np.asarray(u) - norm_b(n)


def envelope_trace(trace: WalkMaxTrace) -> tuple[np.ndarray, np.ndarray]:
    """Normalized upper and lower envelope quantities at each checkpoint.

    ``upper = (a(n) U_n - 2 L2 - 1.5 L3) / L4`` and
    ``lower = (a(n) U_n - 2 L2 - 0.5 L3) / L4`` with ``Lk`` the clamped
    k-fold log.  ``L4`` is pinned at 1 until ``n > e**e**e**e``, so at
    reachable ``n`` these are diagnostics, not estimates of the limits.
    """
    n = trace.checkpoints
    if n.size == 0:
        raise ValueError("empty trace")
    l2, l3, l4 = (iter_log(n, d) for d in (2, 3, 4))
    au = norm_a(n) * trace.u_values
    return (au - 2.0 * l2 - 1.5 * l3) / l4, (au - 2.0 * l2 - 0.5 * l3) / l4
