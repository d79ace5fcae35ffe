"""Integral tests for lower envelopes and Feller's summability test.

Three roles of gauge appear:

* ``g`` gauges enter ``I(g) = int log g(t) / (t g(t)) dt``;
* ``h`` gauges enter ``J(h) = int exp(h(t) - e**h(t)) / t dt``;
* ``r`` sequences enter Feller's sum ``sum r_n / n * exp(-r_n**2 / 2)``.

``g`` gauges are represented by ``ln g`` so that fast-growing gauges such as
``e**t`` never overflow.  All iterated logarithms use the clamped convention
``log x = ln(max(x, e))``.

Verdicts for the parametric families come from their closed-form tail
exponents.  Numerical partial values are reported next to them but never
decide them: iterated-log integrands separate ``theta = 1.9`` from
``theta = 2.1`` only at truncations far beyond floating point.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .extreme_limits import clog

DEFAULT_T0 = 16.0
QUAD_RTOL = 1e-10


class GaugeError(ValueError):
    pass


class Verdict(str, enum.Enum):
    CONVERGES = "converges"
    DIVERGES = "diverges"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class ConvergenceVerdict:
    verdict: Verdict
    partial_value: float
    truncation: float
    reason: str = ""


def _iter_logs(t, depth):
    out = [np.asarray(t, dtype=np.float64)]
    for _ in range(depth):
        out.append(clog(out[-1]))
    return out[1:]


@dataclass(frozen=True, eq=False)
class GaugeFunction:
    """A gauge on ``[t0, inf)``.

    Build instances with the family constructors (:meth:`log_power`,
    :meth:`lll`, :meth:`feller`, :meth:`constant`, :meth:`tabulated`,
    :meth:`from_callable`) rather than directly.
    """

    kind: str
    role: str
    params: tuple = ()
    t0: float = DEFAULT_T0
    scale: float = 1.0
    _fn: Callable | None = field(default=None, repr=False)
    parent: "GaugeFunction | None" = field(default=None, repr=False)

    def __post_init__(self):
        if self.role not in ("g", "h", "r"):
            raise GaugeError(f"unknown role {self.role!r}")
        if not self.t0 >= 1:
            raise GaugeError("t0 must be >= 1")
        if not self.scale > 0:
            raise GaugeError("scale must be positive")

    # ---------------------------------------------------------- families
    @classmethod
    def log_power(cls, p: float, t0: float = DEFAULT_T0, scale: float = 1.0):
        """``g(t) = scale * (log t)**p``."""
        return cls("logpower", "g", (("p", float(p)),), t0, scale)

    @classmethod
    def lll(cls, theta: float, c: float = 0.0, t0: float = DEFAULT_T0, scale: float = 1.0):
        """``h(t) = log(c + log log t + theta log log log t)``.

        This is ``h = log(c + log g)`` for ``g = log t (log log t)**theta``;
        ``scale`` multiplies that ``g``, i.e. adds ``ln(scale)`` to ``c``.
        """
        return cls("lll", "h", (("theta", float(theta)), ("c", float(c))), t0, scale)

    @classmethod
    def feller(cls, theta: float, t0: float = DEFAULT_T0):
        """``r_n = (2 log log n + 3 log log log n + theta log log log log n)**(1/2)``."""
        return cls("feller", "r", (("theta", float(theta)),), t0)

    @classmethod
    def constant(cls, value: float, role: str = "g", t0: float = 1.0):
        if role == "g" and not value > 0:
            raise GaugeError("a g gauge must be positive")
        return cls("constant", role, (("value", float(value)),), t0)

    @classmethod
    def tabulated(cls, grid, values, role: str = "g", scale: float = 1.0):
        """Piecewise-linear interpolation in ``ln t`` (of ``ln g`` for ``g`` gauges)."""
        grid = np.asarray(grid, dtype=np.float64)
        values = np.asarray(values, dtype=np.float64)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 2:
            raise GaugeError("grid and values must be 1-d of equal length >= 2")
        if np.any(np.diff(grid) <= 0) or grid[0] < 1:
            raise GaugeError("grid must be increasing and start at >= 1")
        if role == "g":
            if np.any(values <= 0):
                raise GaugeError("a g gauge must be positive")
            ys = np.log(values)
        else:
            ys = values.copy()
        lx = np.log(grid)
        lo, hi = grid[0], grid[-1]

        def fn(t):
            t = np.asarray(t, dtype=np.float64)
            if np.any((t < lo * (1 - 1e-12)) | (t > hi * (1 + 1e-12))):
                raise GaugeError(f"tabulated gauge evaluated outside [{lo}, {hi}]")
            return np.interp(np.log(t), lx, ys)

        gauge = cls("tabulated", role, (("points", int(grid.size)), ("t_max", float(hi))),
                    float(lo), scale, fn)
        object.__setattr__(gauge, "_nodes", grid)
        return gauge

    @classmethod
    def from_callable(cls, fn: Callable, role: str = "g", t0: float = DEFAULT_T0,
                      log: bool = False, name: str = "callback"):
        """Wrap ``fn(t)``.  For ``g`` gauges, ``log=True`` means ``fn`` returns ``ln g``."""
        if role == "g" and not log:
            def lg(t, _f=fn):
                v = np.asarray(_f(np.asarray(t, dtype=np.float64)), dtype=np.float64)
                if np.any(v <= 0):
                    raise GaugeError("non-positive gauge value")
                return np.log(v)
            wrapped = lg
        else:
            def wrapped(t, _f=fn):
                return np.asarray(_f(np.asarray(t, dtype=np.float64)), dtype=np.float64)
        return cls("callback", role, (("name", name),), t0, 1.0, wrapped)

    # ------------------------------------------------------- derived views
    def scaled(self, c: float) -> "GaugeFunction":
        """The gauge for ``c * g``."""
        if self.role == "r":
            raise GaugeError("Feller sequences are not I-gauges; scaling is undefined")
        if self.kind in ("loglog", "clamped"):
            raise GaugeError("scale the underlying gauge instead")
        return GaugeFunction(self.kind, self.role, self.params, self.t0, self.scale * c,
                             self._fn, self.parent)

    def loglog(self) -> "GaugeFunction":
        """The ``h`` gauge ``log log g``."""
        if self.role != "g":
            raise GaugeError("log log is defined for g gauges")
        return GaugeFunction("loglog", "h", (), self.t0, 1.0, None, self)

    @property
    def param(self) -> dict:
        return dict(self.params)

    # -------------------------------------------------------- evaluation
    def log_g(self, t) -> np.ndarray:
        """``ln g(t)`` for ``g`` gauges."""
        if self.role != "g":
            raise GaugeError(f"{self.kind} is not a g gauge")
        t = np.asarray(t, dtype=np.float64)
        ls = math.log(self.scale)
        if self.kind == "logpower":
            return self.param["p"] * np.log(clog(t)) + ls
        if self.kind == "constant":
            return np.full(t.shape, math.log(self.param["value"])) + ls
        if self.kind == "clamped":
            lg = self.parent.log_g(t)
            l1 = clog(t)
            lo = np.log(l1)
            hi = lo + 3.0 * np.log(clog(l1))
            return np.minimum(np.maximum(lg, lo), hi)
        if self.kind in ("tabulated", "callback"):
            return self._fn(t) + ls
        raise GaugeError(f"no g evaluation for kind {self.kind}")

    def h(self, t) -> np.ndarray:
        """``h(t)`` for ``h`` gauges."""
        if self.role != "h":
            raise GaugeError(f"{self.kind} is not an h gauge")
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "lll":
            l2, l3 = _iter_logs(t, 3)[1:]
            p = self.param
            return clog(p["c"] + math.log(self.scale) + l2 + p["theta"] * l3)
        if self.kind == "loglog":
            # log log g = ln(max(ln(max(g, e)), e)) = ln(max(ln g, e))
            return np.log(np.maximum(self.parent.log_g(t), math.e))
        if self.kind == "constant":
            return np.full(t.shape, self.param["value"])
        if self.kind in ("tabulated", "callback"):
            return self._fn(t)
        raise GaugeError(f"no h evaluation for kind {self.kind}")

    def r(self, n) -> np.ndarray:
        if self.role != "r":
            raise GaugeError(f"{self.kind} is not an r sequence")
        n = np.asarray(n, dtype=np.float64)
        if self.kind == "feller":
            l2, l3, l4 = _iter_logs(n, 4)[1:]
            return np.sqrt(2.0 * l2 + 3.0 * l3 + self.param["theta"] * l4)
        if self.kind == "constant":
            return np.full(n.shape, self.param["value"])
        return self._fn(n)

    def value(self, t) -> np.ndarray:
        """``g(t)``, ``h(t)`` or ``r_t`` according to the role."""
        if self.role == "g":
            return np.exp(self.log_g(t))
        if self.role == "h":
            return self.h(t)
        return self.r(t)

    def describe(self) -> str:
        items = ",".join(f"{k}={v}" for k, v in self.params)
        s = f"{self.kind}:{items}" if items else self.kind
        if self.scale != 1.0:
            s += f" (x{self.scale:g})"
        if self.parent is not None:
            s += f" of {self.parent.describe()}"
        return s


# ------------------------------------------------------------- integrals

def _i_integrand_u(g: GaugeFunction):
    def f(u):
        t = math.exp(u)
        lg = float(g.log_g(t))
        # log g under the convention is max(ln g, 1); the dt/t factor is du
        return max(lg, 1.0) * math.exp(-lg)
    return f


def _j_integrand_u(h: GaugeFunction):
    def f(u):
        hv = float(h.h(math.exp(u)))
        return math.exp(hv - math.exp(hv)) if hv < 700 else 0.0
    return f


def _breaks(u0: float, u1: float, extra=()) -> np.ndarray:
    pts = [u0]
    u = u0
    while True:
        step = max(1.0, abs(u))  # pieces at most doubling in |u|
        u += step
        if u >= u1:
            break
        pts.append(u)
    pts.extend(x for x in extra if u0 < x < u1)
    pts.append(u1)
    return np.unique(pts)


def _integrate_u(f, g: GaugeFunction, T, lower, log_T):
    lo = g.t0 if lower is None else float(lower)
    if lo < g.t0:
        raise GaugeError(f"lower limit {lo} below the gauge domain start {g.t0}")
    u0 = math.log(lo)
    u1 = math.log(T) if log_T is None else float(log_T)
    if not u1 > u0:
        raise GaugeError("truncation must exceed the lower limit")
    base = g.parent if g.parent is not None else g
    extra = np.log(base._nodes) if getattr(base, "_nodes", None) is not None else ()
    pts = _breaks(u0, u1, extra)
    parts = []
    for a, b in zip(pts[:-1], pts[1:]):
        val, _ = integrate.quad(f, a, b, epsabs=0.0, epsrel=QUAD_RTOL, limit=200)
        if not math.isfinite(val):
            raise GaugeError("non-finite integrand")
        parts.append(val)
    return math.fsum(parts)


def integral_I(g: GaugeFunction, T: float | None = None, *, lower: float | None = None,
               log_T: float | None = None) -> float:
    """``int_{t0}^{T} log g(t) / (t g(t)) dt`` (``log_T`` may replace ``T``)."""
    if g.role != "g":
        raise GaugeError("I needs a g gauge")
    return _integrate_u(_i_integrand_u(g), g, T, lower, log_T)


def integral_J(h: GaugeFunction, T: float | None = None, *, lower: float | None = None,
               log_T: float | None = None) -> float:
    """``int_{t0}^{T} exp(h(t) - e**h(t)) / t dt`` (``log_T`` may replace ``T``)."""
    if h.role != "h":
        raise GaugeError("J needs an h gauge")
    return _integrate_u(_j_integrand_u(h), h, T, lower, log_T)


def feller_sum(r: GaugeFunction, N: int, start: int = 16, chunk: int = 1 << 20) -> float:
    """``sum_{start <= n <= N} r_n / n * exp(-r_n**2 / 2)``."""
    if r.role != "r":
        raise GaugeError("feller_sum needs an r sequence")
    if start < 1:
        raise GaugeError("start must be >= 1")
    parts = []
    for a in range(start, int(N) + 1, chunk):
        n = np.arange(a, min(a + chunk, int(N) + 1), dtype=np.float64)
        rn = r.r(n)
        parts.append(float(np.sum(rn / n * np.exp(-0.5 * rn * rn))))
    return math.fsum(parts)


# --------------------------------------------------------------- verdicts

DEFAULT_TRUNCATION = {"logpower": 1e12, "lll": 1e300, "feller": 10 ** 6, "constant": 1e12}


def _closed_form(g: GaugeFunction):
    p = g.param
    if g.kind == "logpower":
        # u = log t: integrand ~ p log u / u**p
        return p["p"] > 1, f"I ~ int p ln(u) / u**p du with p={p['p']}: finite iff p > 1"
    if g.kind == "lll":
        # v = log log t: integrand ~ e**-c v**(1 - theta)
        return p["theta"] > 2, (f"J ~ int v**(1-theta) dv with theta={p['theta']}: finite iff theta > 2;"
                                " c and scale only multiply the tail")
    if g.kind == "feller":
        # term ~ 1 / (n log n (log log n) (log log log n)**(theta/2)), up to constants
        return p["theta"] > 2, f"terms ~ 1/(n L1 L2 L3**(theta/2)) with theta={p['theta']}: summable iff theta > 2"
    if g.kind == "constant":
        return False, "integrand is a positive constant times 1/t"
    if g.kind == "loglog" and g.parent is not None:
        inner = _closed_form(g.parent)
        if inner is not None:
            return inner[0], "J(log log g) = I(g); " + inner[1]
    return None


def classify(gauge: GaugeFunction, truncation: float | None = None) -> ConvergenceVerdict:
    """Closed-form verdict plus a numerical partial value at ``truncation``."""
    kind = gauge.parent.kind if gauge.kind == "loglog" else gauge.kind
    T = truncation if truncation is not None else DEFAULT_TRUNCATION.get(kind, 1e12)
    if gauge.kind == "tabulated":
        T = min(T, gauge.param["t_max"])
    if gauge.role == "g":
        partial = integral_I(gauge, T)
    elif gauge.role == "h":
        partial = integral_J(gauge, T)
    else:
        partial = feller_sum(gauge, int(T))
    cf = _closed_form(gauge)
    if cf is None:
        return ConvergenceVerdict(Verdict.INCONCLUSIVE, partial, float(T),
                                  "no closed-form tail exponent for this gauge")
    ok, why = cf
    return ConvergenceVerdict(Verdict.CONVERGES if ok else Verdict.DIVERGES, partial, float(T), why)


def phi_condition_report(g: GaugeFunction, n_max: int, points: int = 40):
    """``(n, n |log g(n+1) / log g(n) - 1|)`` on a geometric grid of integers."""
    if n_max < 10:
        raise GaugeError("n_max must be >= 10")
    ns = np.unique(np.round(np.geomspace(10, n_max, points)).astype(np.int64))
    ns = ns[ns >= g.t0]
    nf = ns.astype(np.float64)
    if g.role == "g":
        a = np.maximum(g.log_g(nf), 1.0)
        b = np.maximum(g.log_g(nf + 1.0), 1.0)
    else:
        a = clog(g.value(nf))
        b = clog(g.value(nf + 1.0))
    return ns, nf * np.abs(b / a - 1.0)


def clamp_gauge(g: GaugeFunction) -> GaugeFunction:
    """``min(max(g, log x), log x (log log x)**3)``."""
    if g.role != "g":
        raise GaugeError("clamping applies to g gauges")
    return GaugeFunction("clamped", "g", (), g.t0, 1.0, None, g)


# ------------------------------------------------------------ CLI grammar

_FAMILY_KEYS = {
    "logpower": ({"p"}, GaugeFunction.log_power),
    "lll": ({"theta", "c"}, GaugeFunction.lll),
    "feller": ({"theta"}, GaugeFunction.feller),
    "const": ({"value", "role"}, GaugeFunction.constant),
}
_COMMON_KEYS = {"t0", "scale"}


def parse_gauge(spec: str) -> GaugeFunction:
    """Parse ``kind:key=value,...``, e.g. ``lll:theta=2.5,c=0``."""
    kind, _, rest = spec.strip().partition(":")
    kind = kind.strip().lower()
    if kind not in _FAMILY_KEYS:
        raise GaugeError(f"unknown gauge kind {kind!r}; expected one of {sorted(_FAMILY_KEYS)}")
    allowed, ctor = _FAMILY_KEYS[kind]
    kwargs = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, val = item.partition("=")
        key = key.strip()
        if not eq:
            raise GaugeError(f"expected key=value, got {item!r}")
        if key not in allowed | _COMMON_KEYS:
            raise GaugeError(f"unknown key {key!r} for gauge {kind}")
        if kind == "feller" and key == "scale":
            raise GaugeError("feller sequences take no scale")
        kwargs[key] = val.strip() if key == "role" else float(val)
    required = {"logpower": {"p"}, "lll": {"theta"}, "feller": {"theta"}, "const": {"value"}}[kind]
    if missing := required - kwargs.keys():
        raise GaugeError(f"gauge {kind} needs {sorted(missing)}")
    scale = kwargs.pop("scale", 1.0)
    gauge = ctor(**kwargs)
    return gauge.scaled(scale) if scale != 1.0 else gauge
