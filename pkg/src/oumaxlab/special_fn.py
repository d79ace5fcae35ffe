"""Law of the OU excursion maximum.

The maximum ``M`` of the OU process over one unit of local time at zero has

    F(x) = exp(-1 / (2 G(x))),      G(x) = int_0^x exp(y**2 / 2) dy,

with ``F(x) = 0`` for ``x <= 0``.  Everything here works with ``log G`` so the
distribution functions and quantiles stay finite for every finite input;
only :func:`growth_integral` itself can overflow, and it raises
:class:`GrowthOverflowError` instead of returning ``inf``.

Evaluation of ``G`` is piecewise:

* ``x <= 2``: power series ``sum x**(2k+1) / ((2k+1) 2**k k!)``;
* ``2 < x <= 8``: adaptive Simpson on the scaled integrand
  ``exp((y**2 - x**2) / 2)`` (numba backend); the numpy backend keeps using
  the series, whose terms are all positive;
* ``x > 8``: the asymptotic series ``exp(x**2/2)/x * sum (2k-1)!!/x**(2k)``
  truncated at its smallest term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._accel import USE_NUMBA, njit

LOG_MAX_DOUBLE = math.log(np.finfo(np.float64).max)
SERIES_MAX_X = 2.0
SIMPSON_MAX_X = 8.0


class GrowthOverflowError(OverflowError):
    """``G(x)`` is not representable as a 64-bit float."""


class QuantileConvergenceError(RuntimeError):
    """The quantile solver hit its iteration cap."""


# ---------------------------------------------------------- scalar kernels

@njit(cache=True)
def _series_scalar(x):
    term = x
    total = x
    k = 0
    while True:
        k += 1
        term *= x * x / (2.0 * k)
        piece = term / (2.0 * k + 1.0)
        total += piece
        if piece <= 1e-17 * total:
            return total


@njit(cache=True)
def _simpson_scaled(x, tol):
    """int_0^x exp((y^2 - x^2)/2) dy by adaptive Simpson with Richardson."""
    hx = 0.5 * x * x
    npanel = 8
    width = x / npanel
    # Scaled integral lies between 1/x-ish and x; x * tol bounds the abs error.
    abs_tol = tol * min(x, 1.0 / x) * 0.5
    total = 0.0
    stack_a = np.empty(200)
    stack_b = np.empty(200)
    stack_fa = np.empty(200)
    stack_fm = np.empty(200)
    stack_fb = np.empty(200)
    stack_s = np.empty(200)
    for p in range(npanel):
        a = p * width
        b = a + width
        m = 0.5 * (a + b)
        fa = math.exp(0.5 * a * a - hx)
        fm = math.exp(0.5 * m * m - hx)
        fb = math.exp(0.5 * b * b - hx)
        top = 0
        stack_a[0] = a
        stack_b[0] = b
        stack_fa[0] = fa
        stack_fm[0] = fm
        stack_fb[0] = fb
        stack_s[0] = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
        top = 1
        while top > 0:
            top -= 1
            a = stack_a[top]
            b = stack_b[top]
            fa = stack_fa[top]
            fm = stack_fm[top]
            fb = stack_fb[top]
            whole = stack_s[top]
            m = 0.5 * (a + b)
            lm = 0.5 * (a + m)
            rm = 0.5 * (m + b)
            flm = math.exp(0.5 * lm * lm - hx)
            frm = math.exp(0.5 * rm * rm - hx)
            left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
            right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
            delta = left + right - whole
            # Floor at the rounding level of the panel sum, else subdivision
            # chases noise.
            allowed = max(15.0 * abs_tol * (b - a) / x, 32.0 * 2.2e-16 * abs(left + right))
            if abs(delta) <= allowed or top >= 196:
                total += left + right + delta / 15.0
            else:
                stack_a[top] = m
                stack_b[top] = b
                stack_fa[top] = fm
                stack_fm[top] = frm
                stack_fb[top] = fb
                stack_s[top] = right
                top += 1
                stack_a[top] = a
                stack_b[top] = m
                stack_fa[top] = fa
                stack_fm[top] = flm
                stack_fb[top] = fm
                stack_s[top] = left
                top += 1
    return total


@njit(cache=True)
def _asymptotic_log_scalar(x):
    inv2 = 1.0 / (x * x)
    term = 1.0
    total = 1.0
    k = 0
    while True:
        k += 1
        nxt = term * (2.0 * k - 1.0) * inv2
        if nxt >= term or nxt <= 1e-18 * total:
            break
        term = nxt
        total += term
    return 0.5 * x * x - math.log(x) + math.log(total)


@njit(cache=True)
def _log_growth_scalar(x, tol):
    """Return (log G(x), G(x) exp(-x^2/2)); log G(0) = -inf."""
    if x <= 0.0:
        return -np.inf, 0.0
    if x <= SERIES_MAX_X:
        g = _series_scalar(x)
        return math.log(g), g * math.exp(-0.5 * x * x)
    if x <= SIMPSON_MAX_X:
        s = _simpson_scaled(x, tol)
        return 0.5 * x * x + math.log(s), s
    lg = _asymptotic_log_scalar(x)
    return lg, math.exp(lg - 0.5 * x * x)


@njit(cache=True)
def _surrogate_log_growth(x):
    """Series/asymptotic log G (no quadrature), used to locate the root."""
    if x <= 0.0:
        return -np.inf, 0.0
    if x <= SIMPSON_MAX_X:
        g = _series_scalar(x)
        return math.log(g), g * math.exp(-0.5 * x * x)
    lg = _asymptotic_log_scalar(x)
    return lg, math.exp(lg - 0.5 * x * x)


@njit(cache=True)
def _newton(log_target, x, tol, quad_tol, max_iter, exact):
    lo = 0.0
    hi = np.inf
    for _ in range(max_iter):
        if exact:
            lg, s = _log_growth_scalar(x, quad_tol)
        else:
            lg, s = _surrogate_log_growth(x)
        f = lg - log_target
        if f == 0.0:
            return x, True
        if f > 0.0:
            hi = x
        else:
            lo = x
        xn = x - f * s
        if not (lo < xn < hi):
            xn = 0.5 * (lo + hi) if hi < np.inf else 2.0 * x
        if abs(xn - x) <= tol * max(x, 1.0):
            return xn, True
        x = xn
    return x, False


@njit(cache=True)
def _solve_log_growth_scalar(log_target, tol, quad_tol, max_iter):
    """Root of log G(x) = log_target; returns (x, converged).

    Safeguarded Newton on log G, whose derivative is exp(x^2/2)/G(x), using
    the quadrature-free evaluators (the series is exact to rounding on
    x <= 8, where the production path would use quadrature).
    """
    if log_target < 0.0:
        x = math.exp(log_target)
    else:
        x = math.sqrt(2.0 * log_target + 2.0)
    return _newton(log_target, x, tol, quad_tol, max_iter, False)


@njit(cache=True)
def _log_growth_many(xs, tol):
    out = np.empty(xs.size)
    for i in range(xs.size):
        out[i] = _log_growth_scalar(xs[i], tol)[0]
    return out


@njit(cache=True)
def _solve_many(log_targets, tol, quad_tol, max_iter):
    out = np.empty(log_targets.size)
    ok = True
    for i in range(log_targets.size):
        x, good = _solve_log_growth_scalar(log_targets[i], tol, quad_tol, max_iter)
        out[i] = x
        ok = ok and good
    return out, ok


# ------------------------------------------------------- vectorized numpy

def growth_series(x) -> np.ndarray:
    """``G(x)`` by its power series (all terms positive; any moderate ``x``)."""
    x = np.asarray(x, dtype=np.float64)
    flat = np.abs(np.atleast_1d(x)).ravel()
    term = flat.copy()
    total = flat.copy()
    x2 = flat * flat
    k = 0
    while True:
        k += 1
        term = term * x2 / (2.0 * k)
        piece = term / (2.0 * k + 1.0)
        total = total + piece
        if np.all(piece <= 1e-17 * total):
            break
    out = np.copysign(total, np.atleast_1d(x).ravel()).reshape(np.shape(x))
    return out if out.ndim else out[()]


def growth_simpson(x, tol: float = 1e-12) -> np.ndarray:
    """``G(x)`` by adaptive Simpson quadrature, one scalar at a time."""
    xs = np.atleast_1d(np.asarray(x, dtype=np.float64))
    out = np.empty(xs.shape)
    for i, v in enumerate(xs.ravel()):
        out.ravel()[i] = 0.0 if v <= 0 else _simpson_scaled(float(v), tol) * math.exp(0.5 * v * v)
    return out.reshape(np.shape(x)) if np.ndim(x) else out.ravel()[0]


def _asymptotic_log_np(x: np.ndarray) -> np.ndarray:
    inv2 = 1.0 / (x * x)
    term = np.ones_like(x)
    total = np.ones_like(x)
    live = np.ones(x.shape, dtype=bool)
    k = 0
    while live.any():
        k += 1
        nxt = term * (2.0 * k - 1.0) * inv2
        live &= (nxt < term) & (nxt > 1e-18 * total)
        term = np.where(live, nxt, term)
        total = np.where(live, total + nxt, total)
    return 0.5 * x * x - np.log(x) + np.log(total)


def _log_growth_np(x: np.ndarray) -> np.ndarray:
    out = np.full(x.shape, -np.inf)
    pos = x > 0
    small = pos & (x <= SIMPSON_MAX_X)
    big = x > SIMPSON_MAX_X
    if small.any():
        out[small] = np.log(growth_series(x[small]))
    if big.any():
        out[big] = _asymptotic_log_np(x[big])
    return out


def _solve_np(log_target: np.ndarray, tol: float, max_iter: int):
    lo = np.zeros_like(log_target)
    hi = np.ones_like(log_target)
    need = _log_growth_np(hi) < log_target
    while need.any():
        lo = np.where(need, hi, lo)
        hi = np.where(need, 2.0 * hi, hi)
        need = _log_growth_np(hi) < log_target
    with np.errstate(over="ignore", invalid="ignore"):
        x = np.where(log_target < -1.0, np.exp(np.minimum(log_target, 0.0)),
                     np.where(log_target > 1.0,
                              np.sqrt(np.abs(2.0 * log_target + np.log(np.abs(2.0 * log_target)))),
                              0.5 * (lo + hi)))
    x = np.where((lo < x) & (x < hi), x, 0.5 * (lo + hi))
    active = np.ones(x.shape, dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            return x, True
        xa = x[active]
        lg = _log_growth_np(xa)
        s = np.exp(lg - 0.5 * xa * xa)
        f = lg - log_target[active]
        la, ha = lo[active], hi[active]
        ha = np.where(f > 0, xa, ha)
        la = np.where(f > 0, la, xa)
        xn = xa - f * s
        xn = np.where((la < xn) & (xn < ha), xn, 0.5 * (la + ha))
        xn = np.where(f == 0.0, xa, xn)
        done = np.abs(xn - xa) <= tol * np.maximum(xa, 1.0)
        lo[active], hi[active] = la, ha
        x[active] = xn
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    return x, not active.any()


# ----------------------------------------------------------------- the law

@dataclass(frozen=True)
class ExcursionLaw:
    """Distribution of one excursion-block maximum.

    Parameters
    ----------
    quad_tol
        Relative tolerance for the growth integral.
    newton_tol
        Step tolerance of the quantile solver, in units of ``x``.
    max_iter
        Iteration cap of the quantile solver.
    """

    quad_tol: float = 1e-12
    newton_tol: float = 1e-13
    max_iter: int = 200

    def __post_init__(self):
        if not (self.quad_tol > 0 and self.newton_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    def log_growth(self, x):
        """``log G(x)``; ``-inf`` for ``x <= 0``.  Never overflows."""
        xs = np.asarray(x, dtype=np.float64)
        flat = np.atleast_1d(xs).ravel()
        if np.any(~np.isfinite(flat)):
            raise ValueError("x must be finite")
        if USE_NUMBA:
            out = _log_growth_many(flat, self.quad_tol)
        else:
            out = _log_growth_np(flat)
        return out.reshape(xs.shape) if xs.ndim else out[0]

    def growth_integral(self, x):
        xs = np.asarray(x, dtype=np.float64)
        if np.any(xs < 0):
            raise ValueError("growth_integral needs x >= 0")
        lg = self.log_growth(xs)
        if np.any(lg > LOG_MAX_DOUBLE):
            raise GrowthOverflowError(f"G(x) overflows float64 for x > {math.sqrt(2 * LOG_MAX_DOUBLE):.2f}")
        return np.exp(lg)

    def cdf(self, x):
        lg = self.log_growth(x)
        with np.errstate(over="ignore"):
            return np.exp(-0.5 * np.exp(-lg))

    def log_sf_(self, x):
        lg = self.log_growth(x)
        with np.errstate(over="ignore", divide="ignore"):
            y = 0.5 * np.exp(-lg)
            small = y < 1e-5
            ys = np.where(small, y, 1.0)
            yl = np.where(small, 1.0, y)
            # log y taken from lg directly: y itself underflows once lg > ~745
            return np.where(small, -lg - math.log(2.0) + np.log1p(-0.5 * ys + ys * ys / 6.0),
                            np.log(-np.expm1(-yl)))

    def sf(self, x):
        lg = self.log_growth(x)
        with np.errstate(over="ignore"):
            return -np.expm1(-0.5 * np.exp(-lg))

    def _solve(self, log_target):
        lt = np.atleast_1d(np.asarray(log_target, dtype=np.float64)).ravel()
        if USE_NUMBA:
            x, ok = _solve_many(lt, self.newton_tol, self.quad_tol, self.max_iter)
        else:
            x, ok = _solve_np(lt.copy(), self.newton_tol, self.max_iter)
        if not ok:
            raise QuantileConvergenceError(f"quantile solver exceeded max_iter={self.max_iter}")
        return x

    def quantile(self, u):
        """Unique ``x > 0`` with ``F(x) = u`` for ``0 < u < 1``."""
        ua = np.asarray(u, dtype=np.float64)
        if np.any((ua <= 0) | (ua >= 1)):
            raise ValueError("quantile needs 0 < u < 1")
        # G(x) = -1 / (2 ln u)
        x = self._solve(-math.log(2.0) - np.log(-np.log(np.atleast_1d(ua).ravel())))
        return x.reshape(ua.shape) if ua.ndim else x[0]

    def max_quantile(self, n, u):
        """Quantile ``u`` of the maximum of ``n`` independent excursion maxima.

        Solves ``G(x) = n / (2 (-ln u))`` so that ``u**(1/n)`` is never formed.
        """
        ua = np.asarray(u, dtype=np.float64)
        na = np.asarray(n, dtype=np.float64)
        if np.any(na < 1):
            raise ValueError("n must be >= 1")
        if np.any((ua <= 0) | (ua >= 1)):
            raise ValueError("max_quantile needs 0 < u < 1")
        ub, nb = np.broadcast_arrays(ua, na)
        lt = np.log(nb.ravel()) - math.log(2.0) - np.log(-np.log(ub.ravel()))
        x = self._solve(lt)
        return x.reshape(ub.shape) if ub.ndim else x[0]

    def tail_ratio(self, x):
        """``(1 - F(x)) * 2 exp(x**2/2) / x``, which tends to 1 like ``1 - x**-2``."""
        xa = np.asarray(x, dtype=np.float64)
        if np.any(xa < 3):
            raise ValueError("tail_ratio is defined for x >= 3")
        val = np.exp(self.log_sf_(xa) + math.log(2.0) + 0.5 * xa * xa - np.log(xa))
        if not np.all(np.isfinite(val)):
            raise GrowthOverflowError("tail ratio not representable")
        return val


DEFAULT_LAW = ExcursionLaw()


def growth_integral(x, law: ExcursionLaw = DEFAULT_LAW):
    return law.growth_integral(x)


def excursion_cdf(x, law: ExcursionLaw = DEFAULT_LAW):
    return law.cdf(x)


def excursion_sf(x, law: ExcursionLaw = DEFAULT_LAW):
    return law.sf(x)


def excursion_quantile(u, law: ExcursionLaw = DEFAULT_LAW):
    return law.quantile(u)


def max_quantile_exact(n, u, law: ExcursionLaw = DEFAULT_LAW):
    """Exact draw of ``max(M_1..M_n)`` when ``u`` is uniform on (0, 1)."""
    return law.max_quantile(n, u)


def tail_ratio(x, law: ExcursionLaw = DEFAULT_LAW):
    return law.tail_ratio(x)
