import numpy as np
from scipy import stats

from offline_plugin.rng import categorical, derive_seed, hash_keys, uniform


def test_uniform_is_pure_function_of_keys():
    a = uniform(5, np.arange(100), 3)
    b = uniform(5, np.arange(100), 3)
    np.testing.assert_array_equal(a, b)
    # slicing the counter range reproduces the same numbers
    np.testing.assert_array_equal(uniform(5, np.arange(40, 60), 3), a[40:60])


def test_keys_separate_streams():
    assert not np.array_equal(uniform(1, np.arange(10)), uniform(2, np.arange(10)))
    assert not np.array_equal(uniform(1, np.arange(10), 0), uniform(1, np.arange(10), 1))
    assert derive_seed(0, 1, 2) != derive_seed(0, 2, 1)


def test_uniform_range_and_distribution():
    u = uniform(123, np.arange(200_000))
    assert u.min() >= 0.0 and u.max() < 1.0
    assert stats.kstest(u, "uniform").pvalue > 1e-3


def test_large_seed_is_accepted():
    assert hash_keys(2**64 - 1).dtype == np.uint64
    assert 0 <= derive_seed(2**63 + 5, 1) < 2**64


def test_categorical_never_draws_past_last_category():
    cdf = np.array([0.2, 0.5, 1.0])
    draws = categorical(np.broadcast_to(cdf, (5, 3)), np.array([0.0, 0.19, 0.2, 0.99, 0.9999999]))
    np.testing.assert_array_equal(draws, [0, 0, 1, 2, 2])
