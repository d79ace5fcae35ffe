import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oumaxlab import rng

SEEDS = st.integers(0, 2**64 - 1)


def test_mix64_reference_values():
    # SplitMix64 finalizer of the Weyl sequence seeded at 0: the first
    # published outputs of splitmix64(seed=0).
    g = rng.GOLDEN
    assert rng.mix64(g) == 0xE220A8397B1DCDAF
    assert rng.mix64(2 * g) == 0x6E789E6AA1B965F4


@given(SEEDS, st.integers(0, 10**6))
def test_stream_key_deterministic_and_odd(seed, index):
    k1, g1 = rng.stream_key(seed, index)
    k2, g2 = rng.stream_key(seed, index)
    assert (k1, g1) == (k2, g2)
    assert g1 & 1 == 1


def test_stream_key_rejects_negative_index():
    with pytest.raises(ValueError):
        rng.stream_key(0, -1)


def test_distinct_streams_differ():
    keys, gammas = rng.stream_keys(7, 0, 1000)
    assert len(set(keys.tolist())) == 1000
    assert len(set(gammas.tolist())) == 1000


@settings(max_examples=25, deadline=None)
@given(SEEDS, st.integers(0, 1000), st.integers(0, 5000), st.integers(1, 300))
def test_numba_and_numpy_streams_agree(seed, index, start, count):
    k, g = rng.stream_key(seed, index)
    raw = rng.raw_block(k, g, start, count)
    assert all(int(rng.nb_raw(np.uint64(k), np.uint64(g), np.uint64(start + i))) == int(r)
               for i, r in enumerate(raw))
    # normals go through libm (numba) vs numpy's vectorized log/sin/cos
    a = rng.normal_block(k, g, start, count)
    b = rng.nb_normal_block(np.uint64(k), np.uint64(g), start, count)
    np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-15)


def test_blocks_are_counter_indexed():
    k, g = rng.stream_key(3, 4)
    whole = rng.normal_block(k, g, 0, 100)
    assert np.array_equal(whole[37:71], rng.normal_block(k, g, 37, 34))
    raw = rng.raw_block(k, g, 0, 50)
    assert np.array_equal(raw[10:20], rng.raw_block(k, g, 10, 10))


def test_uniform_range_and_moments():
    k, g = rng.stream_key(1, 0)
    u = rng.uniform_block(k, g, 0, 400_000)
    assert u.min() > 0 and u.max() <= 1
    assert abs(u.mean() - 0.5) < 4 * np.sqrt(1 / 12 / u.size)


def test_normal_moments():
    z = rng.Stream(9, 2).normals(400_000)
    n = z.size
    assert abs(z.mean()) < 4 / np.sqrt(n)
    assert abs(z.var() - 1) < 4 * np.sqrt(2 / n)
    assert abs(np.mean(z**3)) < 4 * np.sqrt(15 / n)


def test_streams_uncorrelated():
    a = rng.Stream(5, 0).normals(200_000)
    b = rng.Stream(5, 1).normals(200_000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 4 / np.sqrt(a.size)


def test_stream_cursor_advances():
    s = rng.Stream(11, 3)
    first = s.normals(10)
    second = s.normals(10)
    k, g = rng.stream_key(11, 3)
    assert np.array_equal(np.concatenate([first, second]), rng.normal_block(k, g, 0, 20))
