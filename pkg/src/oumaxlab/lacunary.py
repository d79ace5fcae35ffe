"""Lacunary cosine series ``f_n(w) = sqrt(2) sum_{k <= n} cos(2 pi n_k w)``.

Phases are reduced modulo 1 in fixed point before any floating-point work:
``w`` is a binary fraction (a Python int over ``2**bits``) and
``frac(n_k w)`` is computed exactly, then its top 53 bits become a float.
With 64-bit floats for ``w`` all phase information is gone once
``n_k > 2**53``.

Two exact regimes are supported:

* frequencies below ``2**64`` with ``w`` carried to 128 bits;
* ``n_k = 2**(j k)``, where ``frac(n_k w)`` is a bit window of ``w`` and
  ``w`` simply carries as many bits as the longest window needs.

A uniform ``w`` is a string of fair random bits: words ``0, 1, 2, ...`` of
its random stream, most significant first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import rng
from ._accel import USE_NUMBA, njit, prange
from .extreme_limits import LOG_4PI, clog, norm_a, norm_b

TWO_PI = 2.0 * math.pi
SQRT2 = math.sqrt(2.0)
MAX_EXACT = 1 << 64
INV_2_53 = 1.0 / (1 << 53)
PHASE_BITS = 128


class PhaseOverflowError(OverflowError):
    """A frequency left the exact-phase regime."""


# ------------------------------------------------------------ frequencies

@dataclass(frozen=True)
class FrequencySequence:
    """``geometric``: ``n_k = q**k``.  ``berkes``: ``n_1 = 1`` and

        n_{k+1} = max(n_k + 1, ceil(n_k (1 + k**-beta (log k)**lam)))

    with the ratio rounded to the nearest double and applied as an exact
    rational.  ``BerkesPoly(alpha)`` is ``beta = alpha, lam = 1``.
    """

    kind: str
    q: int = 0
    alpha: float = 0.0
    beta: float = 0.0
    lam: float = 1.0
    length_cap: int = 100_000
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.kind == "geometric":
            if int(self.q) != self.q or self.q < 2:
                raise ValueError("geometric frequencies need an integer q >= 2")
        elif self.kind == "berkes":
            if not 0 <= self.alpha < 0.5:
                raise ValueError("alpha must lie in [0, 1/2)")
        else:
            raise ValueError(f"unknown frequency family {self.kind!r}")
        if self.length_cap < 1:
            raise ValueError("length cap must be >= 1")

    @classmethod
    def geometric(cls, q: int, length_cap: int = 100_000):
        return cls("geometric", q=int(q), length_cap=length_cap)

    @classmethod
    def berkes_poly(cls, alpha: float, length_cap: int = 100_000):
        return cls("berkes", alpha=float(alpha), beta=float(alpha), lam=1.0, length_cap=length_cap)

    @classmethod
    def ratio_schedule(cls, alpha: float, beta: float, lam: float, length_cap: int = 100_000):
        """Ratios ``1 + k**-beta (log k)**lam``, judged against ``alpha``."""
        return cls("berkes", alpha=float(alpha), beta=float(beta), lam=float(lam), length_cap=length_cap)

    @property
    def shift(self) -> int:
        """``j`` when ``q = 2**j``, else 0."""
        if self.kind == "geometric" and self.q & (self.q - 1) == 0:
            return self.q.bit_length() - 1
        return 0

    @property
    def label(self) -> str:
        if self.kind == "geometric":
            return f"geometric:q={self.q}"
        if self.beta == self.alpha and self.lam == 1.0:
            return f"berkes:alpha={self.alpha:g}"
        return f"berkes:alpha={self.alpha:g},beta={self.beta:g},lam={self.lam:g}"

    def ratio(self, k: int) -> float:
        """The schedule ratio ``n_{k+1} / n_k`` before integer rounding."""
        if self.kind == "geometric":
            return float(self.q)
        return 1.0 + k ** (-self.beta) * math.log(max(k, math.e)) ** self.lam

    def exact_length(self) -> int:
        """How many terms stay in the exact-phase regime of a 128-bit ``w``."""
        if self.shift:
            return self.length_cap
        if self.kind == "geometric":
            return min(self.length_cap, int(math.floor(63.999999 / math.log2(self.q))))
        return min(self.length_cap, len(self._berkes_terms()))

    def _berkes_terms(self) -> list[int]:
        if "terms" not in self._cache:
            out = [1]
            k = 1
            while len(out) < self.length_cap:
                nxt = max(out[-1] + 1, math.ceil(out[-1] * Fraction(self.ratio(k))))
                if nxt >= MAX_EXACT:
                    break
                out.append(nxt)
                k += 1
            self._cache["terms"] = out
        return self._cache["terms"]

    def terms(self, n: int) -> list[int]:
        """``n_1 .. n_n`` as Python ints."""
        if n < 1:
            raise ValueError("n must be >= 1")
        if n > self.length_cap:
            raise ValueError(f"n={n} exceeds the length cap {self.length_cap}")
        if self.kind == "geometric":
            return [self.q ** k for k in range(1, n + 1)]
        t = self._berkes_terms()
        if n > len(t):
            raise PhaseOverflowError(f"term {len(t) + 1} of {self.label} reaches 2**64")
        return t[:n]


def check_condition(freq: FrequencySequence, kmax: int | None = None) -> dict:
    """Ratio traces and closed-form verdicts for the two gap conditions.

    ``lacunary``: ``liminf n_{k+1}/n_k > 1``.  ``berkes``:
    ``k**alpha (n_{k+1}/n_k - 1) -> inf``.  Verdicts use the schedule's
    closed form; the traces are the realized integer ratios.
    """
    if freq.kind == "geometric":
        alpha = freq.alpha
        lac = True
        berkes = alpha > 0  # k**alpha (q - 1) diverges iff alpha > 0
        why = f"ratio is constantly {freq.q}"
        kmax = kmax or min(freq.exact_length(), 60)
    else:
        alpha, beta, lam = freq.alpha, freq.beta, freq.lam
        lac = False  # ratios tend to 1
        # k**alpha * k**-beta * (log k)**lam
        berkes = beta < alpha or (beta == alpha and lam > 0)
        why = f"k**alpha (ratio - 1) = k**({alpha:g} - {beta:g}) (log k)**{lam:g}"
        kmax = kmax or freq.exact_length()
    n = min(kmax, freq.exact_length()) if not freq.shift else kmax
    ks = np.arange(1, n)
    if freq.kind == "geometric":
        ratios = np.full(ks.size, float(freq.q))
    else:
        t = freq.terms(n)
        ratios = np.array([t[i] / t[i - 1] for i in range(1, n)], dtype=np.float64)
    return {
        "family": freq.label,
        "k": ks,
        "ratio": ratios,
        "scaled_gap": ks ** alpha * (ratios - 1.0),
        "schedule_scaled_gap": np.array([k ** alpha * (freq.ratio(int(k)) - 1.0) for k in ks]),
        "satisfies_lacunary": lac,
        "satisfies_berkes": berkes,
        "alpha": alpha,
        "reason": why,
    }


# ------------------------------------------------------------ phase points

@dataclass(frozen=True)
class PhasePoint:
    """``w = fraction / 2**bits`` with ``0 <= fraction < 2**bits``."""

    fraction: int
    bits: int = PHASE_BITS

    def __post_init__(self):
        if self.bits < PHASE_BITS:
            raise ValueError(f"need at least {PHASE_BITS} bits")
        if not 0 <= self.fraction < (1 << self.bits):
            raise ValueError("fraction must lie in [0, 2**bits)")

    @classmethod
    def from_fraction(cls, num: int, den_log2: int, bits: int = PHASE_BITS):
        """The dyadic rational ``num / 2**den_log2``."""
        if den_log2 > bits:
            raise ValueError("not representable at this precision")
        return cls((num % (1 << den_log2)) << (bits - den_log2), bits)

    @classmethod
    def from_float(cls, w: float, bits: int = PHASE_BITS):
        fr = Fraction(w) % 1
        return cls(int(fr * (1 << bits)), bits)

    @classmethod
    def random(cls, seed: int, index: int, bits: int = PHASE_BITS):
        """Uniform ``w`` from the leading words of stream ``index``."""
        words = -(-bits // 64)
        raw = rng.Stream(seed, index).raw(words)
        value = 0
        for w in raw:
            value = (value << 64) | int(w)
        return cls(value >> (64 * words - bits), bits)

    def with_bits(self, bits: int) -> "PhasePoint":
        if bits >= self.bits:
            return PhasePoint(self.fraction << (bits - self.bits), bits)
        return PhasePoint(self.fraction >> (self.bits - bits), bits)

    def frac_mul(self, n: int) -> int:
        """Top 64 bits of ``frac(n w)``, exact."""
        if n < 0:
            raise ValueError("frequencies are non-negative")
        if n >= MAX_EXACT and (n & (n - 1) or n.bit_length() - 1 > self.bits - 64):
            raise PhaseOverflowError("frequency beyond the exact-phase regime for this point")
        mask = (1 << self.bits) - 1
        return ((n * self.fraction) & mask) >> (self.bits - 64)

    def phase(self, n: int) -> float:
        """``frac(n w)`` as a float in ``[0, 1)``."""
        return (self.frac_mul(n) >> 11) * INV_2_53

    def __float__(self):
        return self.fraction / (1 << self.bits)


def lacunary_partial(omega: PhasePoint, n: int, freq: FrequencySequence) -> float:
    """``f_n(w)``."""
    return SQRT2 * math.fsum(math.cos(TWO_PI * omega.phase(m)) for m in freq.terms(n))


def partial_sums(omega: PhasePoint, n: int, freq: FrequencySequence) -> np.ndarray:
    """``f_1(w) .. f_n(w)``."""
    c = np.array([math.cos(TWO_PI * omega.phase(m)) for m in freq.terms(n)])
    return SQRT2 * np.cumsum(c)


def running_stat(omega: PhasePoint, n: int, freq: FrequencySequence) -> float:
    """``a(n) max_{k <= n} f_k / sqrt(k) - b(n) + log(4 pi) / 2``."""
    f = partial_sums(omega, n, freq)
    m = float(np.max(f / np.sqrt(np.arange(1, n + 1))))
    return norm_a(n) * m - norm_b(n) + 0.5 * LOG_4PI


# ------------------------------------------------------------ quadrature

def square_integral(n: int, freq: FrequencySequence, nodes: int | None = None) -> float:
    """Rectangle rule for ``int_0^1 f_n(w)**2 dw`` on ``nodes`` equispaced points.

    Default ``nodes = 4 n_n``; the rule is exact for trigonometric
    polynomials of degree below ``nodes``, so this reproduces ``n``.
    """
    terms = freq.terms(n)
    m = nodes or 4 * terms[-1]
    if m > 1 << 26:
        raise ValueError(f"{m} quadrature nodes is too many")
    j = np.arange(m, dtype=np.int64)
    f = np.zeros(m)
    for nk in terms:
        f += np.cos(TWO_PI * ((nk % m) * j % m) / m)
    f *= SQRT2
    return float(np.mean(f * f))


def cross_integral(n1: int, n2: int, nodes: int) -> float:
    """Rectangle rule for ``int_0^1 cos(2 pi n1 w) cos(2 pi n2 w) dw``."""
    j = np.arange(nodes, dtype=np.int64)
    a = np.cos(TWO_PI * ((n1 % nodes) * j % nodes) / nodes)
    b = np.cos(TWO_PI * ((n2 % nodes) * j % nodes) / nodes)
    return float(np.mean(a * b))


# --------------------------------------------------------------- kernels

@njit(cache=True, inline="always")
def _mulhi(a, b):
    """High 64 bits of the 128-bit product of two uint64."""
    m32 = np.uint64(0xFFFFFFFF)
    s32 = np.uint64(32)
    a0 = a & m32
    a1 = a >> s32
    b0 = b & m32
    b1 = b >> s32
    p00 = a0 * b0
    p01 = a0 * b1
    p10 = a1 * b0
    p11 = a1 * b1
    mid = (p00 >> s32) + (p01 & m32) + (p10 & m32)
    return p11 + (p01 >> s32) + (p10 >> s32) + (mid >> s32)


@njit(cache=True, inline="always")
def _word(key, gamma, i):
    return rng.nb_raw(key, gamma, np.uint64(i))


@njit(cache=True)
def _lac_one(key, gamma, shift, freqs, n, k_lo, cut):
    """Max of ``f_k / sqrt(k)`` over ``k <= n`` and whether
    ``a(k) max_{j<=k} f_j/sqrt(j) <= cut[k - k_lo]`` for some ``k >= k_lo``."""
    hi = _word(key, gamma, 0)
    lo = _word(key, gamma, 1)
    s = 0.0
    m = -np.inf
    hit = False
    cur = hi
    nxt = lo
    wi = 1
    for k in range(1, n + 1):
        if shift > 0:
            off = shift * k
            w = off // 64
            while wi < w + 1:
                wi += 1
                cur = nxt
                nxt = _word(key, gamma, wi)
            b = off % 64
            if b == 0:
                p = cur
            else:
                p = (cur << np.uint64(b)) | (nxt >> np.uint64(64 - b))
        else:
            nk = freqs[k - 1]
            p = nk * hi + _mulhi(nk, lo)
        x = np.float64(p >> np.uint64(11)) * INV_2_53
        s += SQRT2 * math.cos(TWO_PI * x)
        v = s / math.sqrt(k)
        if v > m:
            m = v
        if k >= k_lo and not hit:
            if norm_a_k(k) * m <= cut[k - k_lo]:
                hit = True
    return m, hit


@njit(cache=True, inline="always")
def norm_a_k(k):
    l1 = math.log(max(float(k), math.e))
    return math.sqrt(2.0 * math.log(max(l1, math.e)))


@njit(cache=True, parallel=True)
def _lac_many(keys, gammas, shift, freqs, n, k_lo, cut):
    r = keys.size
    mx = np.empty(r)
    hits = np.zeros(r, dtype=np.bool_)
    for i in prange(r):
        mx[i], hits[i] = _lac_one(keys[i], gammas[i], shift, freqs, n, k_lo, cut)
    return mx, hits


def _lac_one_np(key, gamma, shift, freqs, n, k_lo, cut):
    ks = np.arange(1, n + 1, dtype=np.int64)
    if shift > 0:
        words = rng.raw_block(key, gamma, 0, (shift * n) // 64 + 2)
        off = shift * ks
        w = off // 64
        b = (off % 64).astype(np.uint64)
        cur = words[w]
        nxt = words[w + 1]
        with np.errstate(over="ignore"):
            p = np.where(b == 0, cur, (cur << b) | (nxt >> (np.uint64(64) - np.where(b == 0, 1, b).astype(np.uint64))))
    else:
        hi, lo = (int(v) for v in rng.raw_block(key, gamma, 0, 2))
        p = np.array([(int(nk) * hi + ((int(nk) * lo) >> 64)) & (MAX_EXACT - 1) for nk in freqs[:n]],
                     dtype=np.uint64)
    x = (p >> np.uint64(11)).astype(np.float64) * INV_2_53
    f = np.cumsum(SQRT2 * np.cos(TWO_PI * x))
    run = np.maximum.accumulate(f / np.sqrt(ks))
    tail = np.asarray(norm_a(ks[k_lo - 1:])) * run[k_lo - 1:]
    return float(run[-1]), bool(np.any(tail <= cut))


def _freq_array(freq: FrequencySequence, n: int) -> np.ndarray:
    if freq.shift:
        if n > freq.length_cap:
            raise ValueError(f"n={n} exceeds the length cap {freq.length_cap}")
        return np.zeros(1, dtype=np.uint64)
    return np.array(freq.terms(n), dtype=np.uint64)


def omega_point(freq: FrequencySequence, n: int, seed: int, index: int) -> PhasePoint:
    """The phase point the ensemble kernels use for ``(seed, index)``."""
    bits = PHASE_BITS
    if freq.shift:
        bits = max(bits, 64 * ((freq.shift * n) // 64 + 2))
    return PhasePoint.random(seed, index, bits)


def lacunary_ensemble(freq: FrequencySequence, n: int, seed: int, omegas: int, first: int = 0,
                      k_lo: int | None = None, cut=None) -> tuple[np.ndarray, np.ndarray]:
    """``max_{k <= n} f_k / sqrt(k)`` for uniform ``w`` samples, plus hit flags.

    ``hit`` marks ``a(k) max_{j <= k} f_j / sqrt(j) <= cut[k - k_lo]`` for some
    ``k_lo <= k <= n``.  Sample ``i`` uses :func:`omega_point` ``(seed, first + i)``.
    """
    if n < 1 or omegas < 1:
        raise ValueError("n and omegas must be >= 1")
    freqs = _freq_array(freq, n)
    if k_lo is None:
        k_lo, cut = n, np.array([-np.inf])
    cut = np.asarray(cut, dtype=np.float64)
    if cut.size != n - k_lo + 1:
        raise ValueError("cut must cover k_lo .. n")
    keys, gammas = rng.stream_keys(seed, first, omegas)
    if USE_NUMBA:
        return _lac_many(keys, gammas, freq.shift, freqs, n, k_lo, cut)
    out = [_lac_one_np(int(k), int(g), freq.shift, freqs, n, k_lo, cut) for k, g in zip(keys, gammas)]
    return np.array([o[0] for o in out]), np.array([o[1] for o in out], dtype=bool)


def shorack_statistic(freq: FrequencySequence, n: int, seed: int, omegas: int, first: int = 0) -> np.ndarray:
    """``a(n) max_{k <= n} f_k / sqrt(k) - b(n)`` over uniform ``w``."""
    mx, _ = lacunary_ensemble(freq, n, seed, omegas, first)
    return norm_a(n) * mx - norm_b(n)


def gauge_experiment(freq: FrequencySequence, h, n: int, omegas: int, seed: int = 0,
                     first: int = 0) -> dict:
    """Fraction of ``w`` with ``F_k(w) <= -h(k)`` for some ``k`` in ``(n/2, n]``.

    ``h`` is an h-role :class:`~oumaxlab.gauge_tests.GaugeFunction` or a
    plain number (constant gauge).  The event is a finite-``n`` diagnostic;
    the theorem's content is the closed-form classification reported
    alongside it.
    """
    from .gauge_tests import GaugeFunction, classify, phi_condition_report

    if n < 2:
        raise ValueError("n must be >= 2")
    k_lo = n // 2 + 1
    ks = np.arange(k_lo, n + 1, dtype=np.float64)
    if isinstance(h, (int, float)):
        hv = np.full(ks.size, float(h))
        verdict, phi = None, None
    else:
        if h.role != "h":
            raise ValueError("gauge_experiment needs an h gauge")
        hv = np.asarray(h.h(np.maximum(ks, h.t0)))
        verdict = classify(h)
        _, phi_vals = phi_condition_report(h, max(n, 10))
        phi = float(phi_vals[-1]) if phi_vals.size else None
    # F_k <= -h(k)  <=>  a(k) max <= b(k) - log(4 pi)/2 - h(k)
    cut = np.asarray(norm_b(ks)) - 0.5 * LOG_4PI - hv
    _, hits = lacunary_ensemble(freq, n, seed, omegas, first, k_lo, cut)
    return {
        "family": freq.label,
        "gauge": "constant" if verdict is None else h.describe(),
        "n": n,
        "omegas": omegas,
        "window": [k_lo, n],
        "fraction": float(np.mean(hits)),
        "verdict": None if verdict is None else verdict.verdict.value,
        "phi_tail": phi,
    }
