"""Local time at zero, inverse local time and excursion-block maxima.

Local time is estimated by the one-sided occupation density on the grid,

    lt[k] = (step / eps) * #{ j < k : 0 < X[j] < eps },

a left Riemann sum, so ``lt[0] = 0`` and every increment is ``0`` or
``step / eps``.  With this normalization ``E lt(t) = t / sqrt(2 pi)`` up to
``O(eps**2)``.  The inverse ``tau(s)`` is the first grid time at which the
estimate exceeds ``s``; block ``n`` is the closed grid window
``[tau(n-1), tau(n)]`` and ``M_n`` is the path maximum over it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import rng
from ._accel import USE_NUMBA, njit, prange
from .ou_engine import OuPath, OuPathConfig, _path_np, ar1_coefficients, grid_index, ou_values

SQRT_2PI = math.sqrt(2.0 * math.pi)
DEFAULT_STEP = 1e-3
DEFAULT_EPS = 0.02


class HorizonExhaustedError(RuntimeError):
    """The simulated horizon did not accumulate enough local time."""


@dataclass(frozen=True)
class LocalTimeEstimate:
    step: float
    epsilon: float
    counts: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.counts.setflags(write=False)

    @property
    def unit(self) -> float:
        return self.step / self.epsilon

    @property
    def values(self) -> np.ndarray:
        return self.counts * self.unit

    @property
    def horizon(self) -> float:
        return (self.counts.size - 1) * self.step

    def at(self, t: float) -> float:
        return float(self.counts[grid_index(self.step, t)] * self.unit)


@dataclass(frozen=True)
class ExcursionMaxima:
    maxima: np.ndarray
    tau: np.ndarray
    tau_index: np.ndarray = field(repr=False)


class CoupledPair(NamedTuple):
    sup: float
    blockmax: float
    mismatch: bool


def block_count(t: float) -> int:
    """Number of excursion blocks paired with ``[0, t]``: floor(t / sqrt(2 pi))."""
    return int(math.floor(t / SQRT_2PI))


def _occupation_counts(values: np.ndarray, eps: float) -> np.ndarray:
    hit = (values > 0.0) & (values < eps)
    counts = np.zeros(values.size, dtype=np.int64)
    np.cumsum(hit[:-1], out=counts[1:])
    return counts


def local_time(path: OuPath, epsilon: float = DEFAULT_EPS) -> LocalTimeEstimate:
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if len(path) == 0:
        raise ValueError("empty path")
    return LocalTimeEstimate(path.step, epsilon, _occupation_counts(path.values, epsilon))


def _tau_index(counts: np.ndarray, unit: float, levels) -> np.ndarray:
    idx = np.searchsorted(counts * unit, np.asarray(levels, dtype=np.float64), side="right")
    if np.any(idx >= counts.size):
        raise HorizonExhaustedError("local time never exceeds the requested level")
    return idx


def inverse_local_time(lt: LocalTimeEstimate, level: float) -> float:
    """First grid time at which the local-time estimate exceeds ``level``."""
    if level < 0:
        raise ValueError("level must be >= 0")
    return float(_tau_index(lt.counts, lt.unit, level) * lt.step)


def excursion_maxima(path: OuPath, lt: LocalTimeEstimate, count: int) -> ExcursionMaxima:
    """``M_1 .. M_count`` over the windows ``[tau(n-1), tau(n)]``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    tau_idx = _tau_index(lt.counts, lt.unit, np.arange(count + 1))
    maxima = _window_maxima(path.values, tau_idx)
    return ExcursionMaxima(maxima, tau_idx * path.step, tau_idx)


def _window_maxima(values: np.ndarray, tau_idx: np.ndarray) -> np.ndarray:
    # reduceat covers [tau[n-1], tau[n]) (its last segment runs to the end of
    # the array and is dropped); the shared endpoint tau[n] is added.
    inner = np.maximum.reduceat(values, tau_idx)[:-1]
    return np.maximum(inner, values[tau_idx[1:]])


def tau_deviation(lt: LocalTimeEstimate, t: float) -> float:
    """``sup_{s <= t} |tau(s) - s sqrt(2 pi)| / sqrt(t log t)`` over jump levels.

    ``tau`` is a right-continuous step function, constant on each interval
    between consecutive distinct local-time values, so the supremum is taken
    at the interval endpoints.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    vals = lt.values
    jumps = np.flatnonzero(np.diff(lt.counts)) + 1
    if jumps.size == 0 or vals[-1] <= t:
        raise HorizonExhaustedError("local time horizon does not cover level t")
    levels = np.concatenate(([0.0], vals[jumps]))
    times = jumps * lt.step  # tau on [levels[i], levels[i+1]) is times[i]
    n_int = np.searchsorted(levels, t, side="right")  # intervals meeting [0, t]
    lo = levels[:n_int]
    hi = np.minimum(levels[1:n_int + 1], t)
    tt = times[:n_int]
    dev = np.maximum(np.abs(tt - lo * SQRT_2PI), np.abs(tt - hi * SQRT_2PI))
    return float(dev.max() / math.sqrt(t * math.log(max(t, math.e))))


def blockmax_mismatch_exact(n: int, m: int) -> float:
    """P{max of n i.i.d. continuous draws != max of those plus m more} = m/(n+m)."""
    if n < 1 or m < 1:
        raise ValueError("n and m must be >= 1")
    return m / (n + m)


# ------------------------------------------------------ streaming coupling

@njit(cache=True)
def _couple_one(key, gamma, rho, sd, eps, unit, t_idx, nblk, max_steps,
                sup, bmax, taun):
    """Walk one path until every requested sup and block max is known.

    Returns (tau0 index, exhausted flag).  Needs ``unit < 1`` so that at most
    one local-time level is crossed per grid step.
    """
    nt = t_idx.size
    c = 0
    level = 0.0
    started = False
    cur = -np.inf
    cummax = -np.inf
    tau0 = -1
    ti = 0
    bi = 0
    z0, z1 = rng.nb_normal_pair(key, gamma, np.uint64(0))
    x = z0
    m = x
    for k in range(max_steps):
        if k > 0:
            if k % 2 == 0:
                z0, z1 = rng.nb_normal_pair(key, gamma, np.uint64(k // 2))
                z = z0
            else:
                z = z1
            x = rho * x + sd * z
            if x > m:
                m = x
        while ti < nt and t_idx[ti] == k:
            sup[ti] = m
            ti += 1
        if started and x > cur:
            cur = x
        if c * unit > level:
            if level >= 1.0:
                if cur > cummax:
                    cummax = cur
                completed = int(level + 0.5)
                while bi < nt and nblk[bi] == completed:
                    bmax[bi] = cummax
                    taun[bi] = k
                    bi += 1
            else:
                tau0 = k
            started = True
            cur = x
            level += 1.0
        if ti == nt and bi == nt:
            return tau0, False
        if 0.0 < x < eps:
            c += 1
    return tau0, True


@njit(cache=True, parallel=True)
def _couple_many(keys, gammas, rho, sd, eps, unit, t_idx, nblk, max_steps):
    r = keys.size
    nt = t_idx.size
    sup = np.empty((r, nt))
    bmax = np.empty((r, nt))
    taun = np.empty((r, nt), dtype=np.int64)
    tau0 = np.empty(r, dtype=np.int64)
    exhausted = np.zeros(r, dtype=np.bool_)
    for i in prange(r):
        t0, ex = _couple_one(keys[i], gammas[i], rho, sd, eps, unit, t_idx, nblk, max_steps,
                             sup[i], bmax[i], taun[i])
        tau0[i] = t0
        exhausted[i] = ex
    return sup, bmax, taun, tau0, exhausted


def _couple_one_np(key, gamma, step, eps, t_idx, nblk, max_steps):
    rho, sd = ar1_coefficients(step)
    unit = step / eps
    need = int(max(t_idx[-1], nblk[-1] * SQRT_2PI * 1.3 / step + 2000)) + 1
    n = min(need, max_steps)
    while True:
        values, runmax = _path_np(key, gamma, n, rho, sd)
        counts = _occupation_counts(values, eps)
        lt = counts * unit
        tau_idx = np.searchsorted(lt, np.arange(nblk[-1] + 1, dtype=np.float64), side="right")
        if tau_idx[-1] < n and t_idx[-1] < n:
            break
        if n >= max_steps:
            return None
        n = min(2 * n, max_steps)
    maxima = _window_maxima(values, tau_idx)
    cm = np.maximum.accumulate(maxima)
    return runmax[t_idx], cm[nblk - 1], tau_idx[nblk], int(tau_idx[0])


def coupling_ensemble(ts, seed: int, replicas: int, first: int = 0,
                      step: float = DEFAULT_STEP, epsilon: float = DEFAULT_EPS,
                      horizon_factor: float = 4.0) -> dict:
    """Sup over ``[0, t]`` and the paired block maximum, for each t and replica.

    Each replica is one path; all ``t`` values are read off the same path.
    Returns arrays ``sup``, ``blockmax`` and ``tau_n`` (time of the last
    block end) of shape ``(replicas, len(ts))`` plus ``tau0`` and the ``ts``.
    """
    ts = np.asarray(sorted(float(t) for t in ts))
    nblk = np.array([block_count(t) for t in ts], dtype=np.int64)
    if np.any(nblk < 1):
        raise ValueError("every t needs at least one excursion block (t >= sqrt(2 pi))")
    if step / epsilon >= 1.0:
        raise ValueError("step / epsilon must be < 1")
    t_idx = np.array([grid_index(step, t) for t in ts], dtype=np.int64)
    max_steps = int(horizon_factor * (ts[-1] + 50.0) / step)
    keys, gammas = rng.stream_keys(seed, first, replicas)
    if USE_NUMBA:
        rho, sd = ar1_coefficients(step)
        sup, bmax, taun, tau0, exhausted = _couple_many(
            keys, gammas, rho, sd, epsilon, step / epsilon, t_idx, nblk, max_steps)
        if exhausted.any():
            raise HorizonExhaustedError(f"{int(exhausted.sum())} replicas ran past {max_steps} steps")
    else:
        sup = np.empty((replicas, ts.size))
        bmax = np.empty_like(sup)
        taun = np.empty(sup.shape, dtype=np.int64)
        tau0 = np.empty(replicas, dtype=np.int64)
        for i in range(replicas):
            res = _couple_one_np(int(keys[i]), int(gammas[i]), step, epsilon, t_idx, nblk, max_steps)
            if res is None:
                raise HorizonExhaustedError(f"replica {first + i} ran past {max_steps} steps")
            sup[i], bmax[i], taun[i], tau0[i] = res
    return {"t": ts, "blocks": nblk, "sup": sup, "blockmax": bmax,
            "tau_n": taun * step, "tau0": tau0 * step}


def coupled_pair(config: OuPathConfig, t: float, epsilon: float = DEFAULT_EPS) -> CoupledPair:
    """``(sup_{[0,t]} X, max_{j <= floor(t/sqrt(2 pi))} M_j, mismatch)`` from one path.

    The path is the one :func:`simulate_path` would produce for ``config``;
    it is extended past ``config.horizon`` only if the last block needs it
    and the horizon allows, otherwise :class:`HorizonExhaustedError`.
    """
    if t > config.horizon:
        raise ValueError("t beyond the configured horizon")
    if block_count(t) < 1:
        raise ValueError("block count floor(t / sqrt(2 pi)) must be >= 1")
    key, gamma = rng.stream_key(config.seed, config.stream)
    t_idx = np.array([grid_index(config.step, t)], dtype=np.int64)
    nblk = np.array([block_count(t)], dtype=np.int64)
    max_steps = config.grid_size
    if USE_NUMBA:
        rho, sd = ar1_coefficients(config.step)
        sup = np.empty(1)
        bmax = np.empty(1)
        taun = np.empty(1, dtype=np.int64)
        _, exhausted = _couple_one(np.uint64(key), np.uint64(gamma), rho, sd, epsilon,
                                   config.step / epsilon, t_idx, nblk, max_steps, sup, bmax, taun)
        if exhausted:
            raise HorizonExhaustedError("horizon too short for the requested block count")
        s, b = float(sup[0]), float(bmax[0])
    else:
        res = _couple_one_np(key, gamma, config.step, epsilon, t_idx, nblk, max_steps)
        if res is None:
            raise HorizonExhaustedError("horizon too short for the requested block count")
        s, b = float(res[0][0]), float(res[1][0])
    return CoupledPair(s, b, s != b)


def path_excursions(config: OuPathConfig, epsilon: float = DEFAULT_EPS):
    """Convenience: simulate a path and return ``(path, local time)``."""
    from .ou_engine import simulate_path

    path = simulate_path(config)
    return path, local_time(path, epsilon)


def mismatch_mc(n: int, m: int, replicas: int, seed: int, first: int = 0) -> float:
    """Monte Carlo frequency of ``max(M_1..M_n) != max(M_1..M_{n+m})``.

    Uses exact samplers: the two maxima are independent exact draws of the
    block maximum over ``n`` and over ``m`` excursions.
    """
    from .special_fn import max_quantile_exact

    s = rng.Stream(seed, first)
    u = s.uniforms(2 * replicas)
    a = max_quantile_exact(n, u[0::2])
    b = max_quantile_exact(m, u[1::2])
    return float(np.mean(b > a))
