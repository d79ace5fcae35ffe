"""Darling-Erdos normalizations and the two Gumbel-type limit laws.

Every logarithm follows the clamped convention ``log x = ln(max(x, e))``,
applied independently at each nesting level, so ``log log log`` of anything
is at least 1 and the normalizations are finite for every finite argument.
"""

from __future__ import annotations

import math

import numpy as np

LOG_4PI = math.log(4.0 * math.pi)
SQRT_4PI = math.sqrt(4.0 * math.pi)
SQRT_2 = math.sqrt(2.0)


def clog(x):
    """``ln(max(x, e))``."""
    return np.log(np.maximum(x, math.e))


def iter_log(x, depth: int):
    """``log`` applied ``depth`` times under the clamped convention."""
    out = np.asarray(x, dtype=np.float64)
    for _ in range(depth):
        out = clog(out)
    return out


def _scalar_out(x, out):
    return float(out) if np.ndim(x) == 0 else out


def norm_a(x):
    """``a(x) = sqrt(2 log log x)``."""
    return _scalar_out(x, np.sqrt(2.0 * iter_log(x, 2)))


def norm_b(x):
    """``b(x) = 2 log log x + log log log x / 2``."""
    ll = iter_log(x, 2)
    return _scalar_out(x, 2.0 * ll + 0.5 * clog(ll))


def norm_a_exp(t):
    """``a(e**t)`` without forming ``e**t`` (``log e**t = max(t, 1)``)."""
    l1 = np.maximum(np.asarray(t, dtype=np.float64), 1.0)
    return _scalar_out(t, np.sqrt(2.0 * clog(l1)))


def norm_b_exp(t):
    """``b(e**t)`` without forming ``e**t``."""
    l2 = clog(np.maximum(np.asarray(t, dtype=np.float64), 1.0))
    return _scalar_out(t, 2.0 * l2 + 0.5 * clog(l2))


def de_limit_cdf(x):
    """``exp(-e**-x / sqrt(4 pi))``."""
    x = np.asarray(x, dtype=np.float64)
    return _scalar_out(x, np.exp(-np.exp(-x) / SQRT_4PI))


def de_limit_quantile(u):
    u = np.asarray(u, dtype=np.float64)
    if np.any((u <= 0) | (u >= 1)):
        raise ValueError("u must lie in (0, 1)")
    return _scalar_out(u, -np.log(-np.log(u) * SQRT_4PI))


def blockmax_limit_cdf(x):
    """``exp(-e**(-x/2) / sqrt(2))``."""
    x = np.asarray(x, dtype=np.float64)
    return _scalar_out(x, np.exp(-np.exp(-0.5 * x) / SQRT_2))


def blockmax_statistic(maxval, n):
    """``maxval**2 - 2 log n - log log n``: the x at which ``maxval`` is the threshold."""
    if np.any(np.asarray(n) < 3):
        raise ValueError("n must be >= 3")
    m = np.asarray(maxval, dtype=np.float64)
    if np.any(m < 0):
        raise ValueError("maxval must be >= 0")
    return _scalar_out(maxval, m * m - 2.0 * iter_log(n, 1) - iter_log(n, 2))


def script_x(sup_val, t):
    """``a(e**t) sup - b(e**t) + log(4 pi) / 2``."""
    if np.any(np.asarray(t) <= 0):
        raise ValueError("t must be positive")
    s = np.asarray(sup_val, dtype=np.float64)
    return _scalar_out(sup_val, norm_a_exp(t) * s - norm_b_exp(t) + 0.5 * LOG_4PI)


def de_statistic_exp(sup_val, t):
    """``a(e**t) sup - b(e**t)``, the quantity whose limit is :func:`de_limit_cdf`."""
    return script_x(sup_val, t) - 0.5 * LOG_4PI
