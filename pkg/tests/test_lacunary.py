import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oumaxlab import lacunary as lac
from oumaxlab.extreme_limits import LOG_4PI, norm_a
from oumaxlab.gauge_tests import GaugeFunction

G2, G3 = lac.FrequencySequence.geometric(2), lac.FrequencySequence.geometric(3)
B04 = lac.FrequencySequence.berkes_poly(0.4)
SQRT2 = math.sqrt(2)


def _exact_partial(num, m, terms):
    return SQRT2 * math.fsum(math.cos(2 * math.pi * float(Fraction(num * nk, 2**m) % 1)) for nk in terms)


# ------------------------------------------------------------ frequencies

def test_geometric_terms():
    assert G3.terms(4) == [3, 9, 27, 81]
    assert G2.shift == 1 and lac.FrequencySequence.geometric(8).shift == 3 and G3.shift == 0
    assert G3.exact_length() == 40
    with pytest.raises(ValueError):
        lac.FrequencySequence.geometric(1)
    with pytest.raises(ValueError):
        G3.terms(0)


def test_berkes_terms():
    t = B04.terms(B04.exact_length())
    assert t[0] == 1 and len(t) == 73 and t[-1] < 2**64
    assert all(b > a for a, b in zip(t, t[1:]))
    assert all(b >= a * Fraction(B04.ratio(k)) for k, (a, b) in enumerate(zip(t, t[1:]), start=1))
    with pytest.raises(lac.PhaseOverflowError):
        B04.terms(74)
    with pytest.raises(ValueError):
        lac.FrequencySequence.berkes_poly(0.5)


def test_check_condition_examples():
    r = lac.check_condition(G2)
    assert r["satisfies_lacunary"] and np.all(r["ratio"] == 2.0)
    r = lac.check_condition(B04)
    assert r["satisfies_berkes"] and not r["satisfies_lacunary"]
    k = r["k"][r["k"] >= 3].astype(float)
    np.testing.assert_allclose(r["schedule_scaled_gap"][r["k"] >= 3], np.log(k), rtol=1e-12)
    # ratio 1 + 1/k judged at alpha = 0.4: k**(alpha - 1) -> 0
    weak = lac.FrequencySequence.ratio_schedule(0.4, 1.0, 0.0)
    assert not lac.check_condition(weak)["satisfies_berkes"]


# ------------------------------------------------------------ phase points

def test_phase_point_validation():
    with pytest.raises(ValueError):
        lac.PhasePoint(1, 64)
    with pytest.raises(ValueError):
        lac.PhasePoint(1 << 128)
    with pytest.raises(ValueError):
        lac.PhasePoint.from_fraction(1, 200)
    assert lac.PhasePoint.from_float(0.25).phase(4) == 0.0
    assert lac.PhasePoint.from_float(0.75).phase(3) == 0.25
    assert float(lac.PhasePoint.from_fraction(3, 2)) == 0.75


def test_frac_mul_regime():
    w = lac.PhasePoint.random(1, 0)
    assert w.frac_mul(2**64 - 1) >= 0
    with pytest.raises(lac.PhaseOverflowError):
        w.frac_mul(2**64 + 1)
    with pytest.raises(lac.PhaseOverflowError):
        w.frac_mul(2**100)
    wide = lac.PhasePoint.random(1, 0, 256)
    assert wide.frac_mul(2**100) == (wide.fraction >> (256 - 100 - 64)) & (2**64 - 1)


def test_random_point_bits():
    a = lac.PhasePoint.random(2, 5, 192)
    b = lac.PhasePoint.random(2, 5, 128)
    assert a.fraction >> 64 == b.fraction
    assert a.with_bits(128) == b


# -------------------------------------------------------- partial sums

@pytest.mark.parametrize("freq", [G2, G3, B04])
def test_omega_zero(freq):
    w = lac.PhasePoint(0)
    assert lac.lacunary_partial(w, 30, freq) == pytest.approx(SQRT2 * 30, rel=1e-15)


def test_omega_half_dyadic():
    assert lac.lacunary_partial(lac.PhasePoint.from_fraction(1, 1), 50, G2) == pytest.approx(SQRT2 * 50)


@settings(max_examples=40)
@given(st.integers(0, 2**100 - 1), st.integers(1, 100), st.sampled_from([G2, G3, B04]))
def test_dyadic_points_are_exact(num, m, freq):
    num %= 2**m
    n = min(40, freq.exact_length())
    w = lac.PhasePoint.from_fraction(num, m)
    assert lac.lacunary_partial(w, n, freq) == pytest.approx(_exact_partial(num, m, freq.terms(n)),
                                                              rel=1e-13, abs=1e-13)


@settings(max_examples=30)
@given(st.integers(0, 2**128 - 1), st.sampled_from([G2, G3, B04]))
def test_parseval_bound(frac, freq):
    n = min(40, freq.exact_length())
    assert abs(lac.lacunary_partial(lac.PhasePoint(frac), n, freq)) <= SQRT2 * n + 1e-12


@pytest.mark.parametrize("freq", [G3, B04, lac.FrequencySequence.geometric(7)])
def test_precision_guard_192_bits(freq):
    n = max(k for k in range(1, freq.exact_length() + 1) if freq.terms(k)[-1] < 2**60)
    for i in range(20):
        w = lac.PhasePoint.random(3, i, 192)
        assert abs(lac.lacunary_partial(w, n, freq) - lac.lacunary_partial(w.with_bits(128), n, freq)) < 1e-9


def test_partial_sums_and_running_stat():
    w = lac.PhasePoint.random(4, 0)
    f = lac.partial_sums(w, 30, G3)
    assert f[-1] == pytest.approx(lac.lacunary_partial(w, 30, G3), abs=1e-12)
    m = np.max(f / np.sqrt(np.arange(1, 31)))
    l2 = math.log(math.log(30))
    b30 = 2 * l2 + 0.5 * max(math.log(l2), 1.0)
    assert lac.running_stat(w, 30, G3) == pytest.approx(norm_a(30) * m - b30 + LOG_4PI / 2)


def test_running_stat_n1_omega0():
    assert lac.running_stat(lac.PhasePoint(0), 1, G2) == pytest.approx(2 - 2.5 + LOG_4PI / 2, abs=1e-14)
    assert lac.running_stat(lac.PhasePoint(0), 1, G2) == pytest.approx(0.76551, abs=1e-5)


# ------------------------------------------------------------ quadrature

@pytest.mark.parametrize("n,freq", [(20, G2), (12, G3), (15, B04)])
def test_square_integral_is_n(n, freq):
    assert lac.square_integral(n, freq) == pytest.approx(n, rel=1e-6)


def test_square_integral_node_cap():
    with pytest.raises(ValueError):
        lac.square_integral(40, G2)


@pytest.mark.parametrize("a,b", [(2, 4), (3, 9), (5, 12), (1024, 2048)])
def test_cross_terms_vanish(a, b):
    nodes = 4 * max(a, b)
    assert abs(lac.cross_integral(a, b, nodes)) < 1e-12
    assert lac.cross_integral(a, a, nodes) == pytest.approx(0.5)


# --------------------------------------------------------------- kernels

@pytest.mark.parametrize("freq,n", [(G2, 300), (lac.FrequencySequence.geometric(8), 100), (G3, 40), (B04, 73)])
def test_ensemble_matches_exact_reference(freq, n):
    mx, _ = lac.lacunary_ensemble(freq, n, seed=5, omegas=6, first=10)
    for i in range(6):
        w = lac.omega_point(freq, n, 5, 10 + i)
        f = lac.partial_sums(w, n, freq)
        assert mx[i] == pytest.approx(np.max(f / np.sqrt(np.arange(1, n + 1))), abs=1e-11)


def test_ensemble_hits_match_reference():
    n, k_lo = 200, 101
    ks = np.arange(k_lo, n + 1)
    cut = np.full(ks.size, 1.0)
    _, hits = lac.lacunary_ensemble(G2, n, seed=6, omegas=50, k_lo=k_lo, cut=cut)
    for i in range(50):
        f = lac.partial_sums(lac.omega_point(G2, n, 6, i), n, G2)
        run = np.maximum.accumulate(f / np.sqrt(np.arange(1, n + 1)))
        assert hits[i] == bool(np.any(norm_a(ks) * run[k_lo - 1:] <= cut))
    with pytest.raises(ValueError):
        lac.lacunary_ensemble(G2, n, seed=6, omegas=5, k_lo=k_lo, cut=cut[:-1])


def test_uniform_points():
    x = np.array([float(lac.omega_point(G3, 10, 7, i)) for i in range(5000)])
    assert abs(x.mean() - 0.5) <= 4 * math.sqrt(1 / 12 / x.size)
    assert np.all((x >= 0) & (x < 1))


# ------------------------------------------------------ gauge experiment

def test_gauge_experiment_constants():
    assert lac.gauge_experiment(G2, 1e6, 1000, 200, seed=8)["fraction"] == 0.0
    assert lac.gauge_experiment(G2, -1e6, 1000, 200, seed=8)["fraction"] == 1.0


def test_gauge_experiment_lll_ordering():
    lo = lac.gauge_experiment(G2, GaugeFunction.lll(0.0), 10**4, 1000, seed=9)
    hi = lac.gauge_experiment(G2, GaugeFunction.lll(4.0), 10**4, 1000, seed=9)
    assert 0 < lo["fraction"] < 1 and lo["fraction"] > hi["fraction"]
    assert lo["verdict"] == "diverges" and hi["verdict"] == "converges"
    with pytest.raises(ValueError):
        lac.gauge_experiment(G2, GaugeFunction.log_power(2), 100, 10)
