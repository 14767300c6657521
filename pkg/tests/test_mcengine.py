"""Monte Carlo engine: streams, running statistics, distances, intervals."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import wasserstein_distance

from bridgelab.mcengine import (SampleStats, bootstrap_wasserstein,
                                empirical_tail, parallel_map, run_batches,
                                stream, wasserstein_1d, wilson_interval)

finite_floats = st.floats(min_value=-50.0, max_value=50.0,
                          allow_nan=False, allow_infinity=False)
sample_lists = st.lists(finite_floats, min_size=1, max_size=40)


def test_stream_is_deterministic_and_keyed_by_index():
    a = stream(7, 3).standard_normal(8)
    b = stream(7, 3).standard_normal(8)
    c = stream(7, 4).standard_normal(8)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_stream_distinguishes_seeds():
    assert not np.array_equal(stream(1, 0).standard_normal(4),
                              stream(2, 0).standard_normal(4))


def _close(s: SampleStats, t: SampleStats) -> bool:
    return (s.n == t.n
            and np.allclose(s.mean, t.mean, rtol=1e-12, atol=1e-12)
            and np.allclose(s.variance, t.variance, rtol=1e-9, atol=1e-12))


@given(sample_lists, sample_lists)
@settings(max_examples=60, deadline=None)
def test_merge_matches_pooled_statistics(xs, ys):
    pooled = SampleStats.from_samples(np.array(xs + ys))
    merged = SampleStats.from_samples(np.array(xs)).merge(
        SampleStats.from_samples(np.array(ys)))
    assert _close(merged, pooled)


@given(sample_lists, sample_lists, sample_lists)
@settings(max_examples=60, deadline=None)
def test_merge_is_associative(xs, ys, zs):
    a = SampleStats.from_samples(np.array(xs))
    b = SampleStats.from_samples(np.array(ys))
    c = SampleStats.from_samples(np.array(zs))
    assert _close(a.merge(b).merge(c), a.merge(b.merge(c)))


def test_stats_ci_and_mcvalue_are_consistent():
    s = SampleStats.from_samples(stream(0, 0).standard_normal(4096))
    lo, hi = s.ci95
    assert lo < s.mean < hi
    v = s.as_mcvalue()
    assert v.n == 4096
    assert v.std_error == pytest.approx(s.std_error)
    assert hi - lo == pytest.approx(2 * 1.959963984540054 * s.std_error)


def test_wasserstein_against_scipy():
    rng = stream(11, 0)
    a = rng.standard_normal(500)
    b = rng.standard_normal(500) + 0.3
    assert wasserstein_1d(a, b) == pytest.approx(
        wasserstein_distance(a, b), rel=1e-12)


def test_wasserstein_translation_and_identity():
    a = stream(12, 0).standard_normal(256)
    assert wasserstein_1d(a, a) == 0.0
    assert wasserstein_1d(a, a + 1.5) == pytest.approx(1.5, rel=1e-12)
    # p=2: squared distance between equal-size sorted samples
    b = np.sort(stream(12, 1).standard_normal(256))
    expected = (np.mean((np.sort(a) - b) ** 2)) ** 0.5
    assert wasserstein_1d(a, b, p=2.0) == pytest.approx(expected, rel=1e-12)


def test_bootstrap_wasserstein_brackets_the_point_estimate():
    rng = stream(13, 0)
    a = rng.standard_normal(400)
    b = rng.standard_normal(400) + 0.5
    w, se, (lo, hi) = bootstrap_wasserstein(a, b, rng=stream(13, 1))
    assert lo <= w <= hi
    assert se > 0
    assert w == pytest.approx(wasserstein_1d(a, b), rel=1e-12)


def test_wilson_interval_matches_quadratic_root_oracle():
    # the Wilson limits are the roots in p of (p_hat - p)^2 = z^2 p(1-p)/n;
    # recover them independently with a polynomial root finder
    z = 1.959963984540054
    for successes, n in ((842, 1000), (3, 50), (0, 987), (987, 987)):
        p_hat = successes / n
        roots = np.roots([1 + z ** 2 / n,
                          -(2 * p_hat + z ** 2 / n),
                          p_hat ** 2])
        lo, hi = wilson_interval(successes, n)
        assert lo == pytest.approx(min(roots), abs=1e-12)
        assert hi == pytest.approx(max(roots), abs=1e-12)


def test_wilson_zero_count_upper_limit_floor():
    # with zero exceedances the upper limit equals z^2/(n + z^2)
    z = 1.959963984540054
    n = 100_000
    _, hi = wilson_interval(0, n)
    assert hi == pytest.approx(z ** 2 / (n + z ** 2), rel=1e-12)
    assert hi == pytest.approx(3.8413e-5, abs=1e-8)


@given(st.integers(min_value=0, max_value=60), st.integers(min_value=1, max_value=60))
@settings(max_examples=80, deadline=None)
def test_wilson_interval_contains_the_point_estimate(successes, n):
    successes = min(successes, n)
    lo, hi = wilson_interval(successes, n)
    tol = 1e-12
    assert -tol <= lo <= successes / n + tol
    assert successes / n - tol <= hi <= 1.0 + tol


def test_empirical_tail_agrees_with_wilson():
    samples = stream(14, 0).standard_normal(2000)
    est = empirical_tail(samples, 1.0)
    k = int(np.sum(samples > 1.0))
    lo, hi = wilson_interval(k, 2000)
    assert est.successes == k
    assert est.n == 2000
    assert est.p_hat == pytest.approx(k / 2000)
    assert (est.ci_low, est.ci_high) == (pytest.approx(lo), pytest.approx(hi))


def _chunk_task(rng, index):
    return float(rng.standard_normal() + index)


def test_run_batches_is_worker_count_invariant():
    serial = run_batches(_chunk_task, 12, seed=5, workers=1)
    parallel = run_batches(_chunk_task, 12, seed=5, workers=4)
    assert serial.n == parallel.n == 12
    assert serial.mean == parallel.mean
    assert serial.variance == parallel.variance


def test_parallel_map_preserves_task_order():
    def task(rng, index):
        return (index, float(rng.standard_normal()))

    serial = parallel_map(task, 8, seed=9, workers=1)
    parallel = parallel_map(task, 8, seed=9, workers=3)
    assert serial == parallel
    assert [i for i, _ in serial] == list(range(8))
