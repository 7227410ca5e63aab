import numpy as np
import pytest
import scipy.stats
from numba import njit

from nctransport.rng import CounterStream, stream_key, uniform_at


@njit
def _compiled_draws(seed, index, n):
    key = stream_key(np.uint64(seed), np.uint64(index))
    out = np.empty(n)
    for i in range(n):
        out[i] = uniform_at(key, np.uint64(i))
    return out


def test_python_and_compiled_streams_agree():
    py = CounterStream(99, 7).random(1000)
    np.testing.assert_array_equal(py, _compiled_draws(99, 7, 1000))


def test_scalar_and_vector_draws_continue_the_same_sequence():
    a = CounterStream(3, 4)
    seq = [a.random() for _ in range(5)] + list(a.random(5))
    np.testing.assert_array_equal(seq, CounterStream(3, 4).random(10))


def test_open_interval_and_uniformity():
    u = CounterStream(1).random(1_000_000)
    assert u.min() > 0.0 and u.max() < 1.0
    assert scipy.stats.kstest(u, "uniform").pvalue > 0.001


@pytest.mark.parametrize("seeds", [((0, 0), (0, 1)), ((0, 0), (1, 0)), ((5, 6), (6, 5))])
def test_substreams_differ_and_are_uncorrelated(seeds):
    a = CounterStream(*seeds[0]).random(100_000)
    b = CounterStream(*seeds[1]).random(100_000)
    assert not np.array_equal(a, b)
    assert abs(np.corrcoef(a, b)[0, 1]) < 4 / np.sqrt(100_000)


def test_large_seed_wraps():
    CounterStream(2**64 + 5).random(3)
