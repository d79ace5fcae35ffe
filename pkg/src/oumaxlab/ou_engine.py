"""Exact simulation of the stationary OU process.

The process has covariance ``exp(-|t - s| / 2)``, so on a grid of mesh ``step``
it is the AR(1) recursion

    X[k+1] = exp(-step/2) X[k] + sqrt(1 - exp(-step)) Z[k+1],   X[0] = Z[0],

with no discretization bias in the finite-dimensional laws.  Normal deviate
``k`` of the path's stream drives grid point ``k``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from . import rng
from ._accel import USE_NUMBA, njit

PATH_MAGIC = b"OUPATH01"
_HEADER = struct.Struct("<8sdQ")


@dataclass(frozen=True)
class OuPathConfig:
    horizon: float
    step: float = 1e-3
    seed: int = 0
    stream: int = 0

    def __post_init__(self):
        if not (self.step > 0 and self.horizon >= self.step):
            raise ValueError("need 0 < step <= horizon")
        if not (math.isfinite(self.horizon) and math.isfinite(self.step)):
            raise ValueError("horizon and step must be finite")
        if self.grid_size > np.iinfo(np.intp).max // 8:
            raise MemoryError(f"grid of {self.grid_size} points is not addressable")

    @property
    def grid_size(self) -> int:
        return math.ceil(self.horizon / self.step - 1e-9) + 1


@dataclass(frozen=True)
class OuPath:
    step: float
    values: np.ndarray
    running_max: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values.setflags(write=False)
        self.running_max.setflags(write=False)

    @property
    def horizon(self) -> float:
        return (self.values.size - 1) * self.step

    def __len__(self):
        return self.values.size


def ar1_coefficients(step: float) -> tuple[float, float]:
    """Return ``(rho, sd)`` of the exact transition over ``step``."""
    return math.exp(-0.5 * step), math.sqrt(-math.expm1(-step))


def ou_transition(x, delta, z):
    """Exact conditional draw of ``X[t + delta]`` given ``X[t] = x``."""
    if np.any(np.asarray(delta) <= 0):
        raise ValueError("delta must be positive")
    return np.exp(-0.5 * np.asarray(delta)) * x + np.sqrt(-np.expm1(-np.asarray(delta))) * z


@njit(cache=True)
def _path_nb(key, gamma, n, rho, sd):
    values = np.empty(n)
    runmax = np.empty(n)
    z0, z1 = rng.nb_normal_pair(key, gamma, np.uint64(0))
    x = z0
    m = x
    values[0] = x
    runmax[0] = x
    for k in range(1, n):
        if k % 2 == 0:
            z0, z1 = rng.nb_normal_pair(key, gamma, np.uint64(k // 2))
            z = z0
        else:
            z = z1
        x = rho * x + sd * z
        if x > m:
            m = x
        values[k] = x
        runmax[k] = m
    return values, runmax


def _path_np(key, gamma, n, rho, sd):
    z = rng.normal_block(key, gamma, 0, n)
    values = np.empty(n)
    values[0] = z[0]
    if n > 1:
        values[1:], _ = lfilter([sd], [1.0, -rho], z[1:], zi=[rho * z[0]])
    return values, np.maximum.accumulate(values)


def ou_values(key: int, gamma: int, n: int, step: float) -> tuple[np.ndarray, np.ndarray]:
    """Grid values and running maximum of ``n`` points of the stream's path."""
    rho, sd = ar1_coefficients(step)
    if USE_NUMBA:
        return _path_nb(np.uint64(key), np.uint64(gamma), n, rho, sd)
    return _path_np(key, gamma, n, rho, sd)


def simulate_path(config: OuPathConfig) -> OuPath:
    """Stationary OU path on ``0, step, ..., >= horizon`` (deterministic per seed)."""
    key, gamma = rng.stream_key(config.seed, config.stream)
    values, runmax = ou_values(key, gamma, config.grid_size, config.step)
    return OuPath(config.step, values, runmax)


def grid_index(step: float, t: float) -> int:
    """Last grid index whose time is ``<= t``."""
    return int(math.floor(t / step + 1e-9))


def running_sup(path: OuPath, t: float) -> float:
    """Grid approximation of ``sup_{0 <= s <= t} X_s``."""
    if t < 0 or t > path.horizon + 1e-9 * path.step:
        raise ValueError(f"t={t} outside [0, {path.horizon}]")
    return float(path.running_max[grid_index(path.step, t)])


# ------------------------------------------------------------ time change

def bm_time_change(bm_values, delta: float) -> np.ndarray:
    """OU values ``exp(-k delta / 2) B(exp(k delta))`` on the grid ``k delta``.

    ``bm_values[k]`` must be a standard Brownian motion sampled at time
    ``exp(k delta)`` (so ``bm_values[0] = B(1) ~ N(0, 1)``).
    """
    b = np.asarray(bm_values, dtype=np.float64)
    if b.ndim != 1:
        raise ValueError("bm_values must be one-dimensional")
    if not delta > 0:
        raise ValueError("delta must be positive")
    k = np.arange(b.size)
    return np.exp(-0.5 * delta * k) * b


def brownian_on_geometric_grid(count: int, delta: float, seed: int, stream: int = 0) -> np.ndarray:
    """Brownian motion at times ``exp(k delta)``, ``k = 0 .. count-1``."""
    key, gamma = rng.stream_key(seed, stream)
    z = rng.normal_block(key, gamma, 0, count)
    times = np.exp(delta * np.arange(count))
    incr = np.empty(count)
    incr[0] = z[0]  # B(1) ~ N(0, 1)
    incr[1:] = np.sqrt(np.diff(times)) * z[1:]
    return np.cumsum(incr)


# ------------------------------------------------------------- ensembles

@njit(cache=True)
def _sup_ensemble_nb(keys, gammas, n, rho, sd):
    out = np.empty(keys.size)
    for r in range(keys.size):
        key = keys[r]
        gamma = gammas[r]
        z0, z1 = rng.nb_normal_pair(key, gamma, np.uint64(0))
        x = z0
        m = x
        for k in range(1, n):
            if k % 2 == 0:
                z0, z1 = rng.nb_normal_pair(key, gamma, np.uint64(k // 2))
                z = z0
            else:
                z = z1
            x = rho * x + sd * z
            if x > m:
                m = x
        out[r] = m
    return out


def sup_ensemble(t: float, step: float, seed: int, replicas: int, first: int = 0) -> np.ndarray:
    """``sup_{[0, t]} X`` on the grid for replicas ``first .. first+replicas-1``."""
    n = grid_index(step, t) + 1
    keys, gammas = rng.stream_keys(seed, first, replicas)
    rho, sd = ar1_coefficients(step)
    if USE_NUMBA:
        return _sup_ensemble_nb(keys, gammas, n, rho, sd)
    return np.array([_path_np(int(k), int(g), n, rho, sd)[0].max() for k, g in zip(keys, gammas)])


# ------------------------------------------------------------ binary dump

def write_path(path: OuPath, target) -> None:
    """Debug dump: header (magic, step, count) then little-endian float64 values."""
    data = _HEADER.pack(PATH_MAGIC, path.step, path.values.size)
    Path(target).write_bytes(data + path.values.astype("<f8").tobytes())


def read_path(source) -> OuPath:
    raw = Path(source).read_bytes()
    magic, step, count = _HEADER.unpack_from(raw)
    if magic != PATH_MAGIC:
        raise ValueError("not an OU path dump")
    values = np.frombuffer(raw, dtype="<f8", count=count, offset=_HEADER.size).astype(np.float64)
    return OuPath(step, values, np.maximum.accumulate(values))
