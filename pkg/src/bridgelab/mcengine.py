"""Deterministic Monte Carlo plumbing.

Randomness is organised as counter-based streams: the pair (seed, index)
fully determines a stream, streams with distinct indices are independent, and
nothing depends on scheduling.  Batch runs therefore produce bit-identical
results for any worker count: task i always draws from stream (seed, i) and
the reduction happens in task order after all tasks finish.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import BatchError

_MASK64 = (1 << 64) - 1
_Z95 = 1.959963984540054  # two-sided 95% normal quantile


@dataclass(frozen=True)
class RngStream:
    """A (seed, index)-keyed random stream.

    Backed by the Philox counter-based bit generator with a 128-bit key built
    from the pair, so distinct indices give statistically independent streams
    and replaying a pair replays the exact draws.
    """

    seed: int
    index: int = 0

    def generator(self) -> np.random.Generator:
        key = ((self.seed & _MASK64) << 64) | (self.index & _MASK64)
        return np.random.Generator(np.random.Philox(key=key))


def stream(seed: int, index: int = 0) -> np.random.Generator:
    """Shorthand for RngStream(seed, index).generator()."""
    return RngStream(seed, index).generator()


@dataclass(frozen=True)
class MCValue:
    """A Monte Carlo estimate with its standard error."""

    value: float
    std_error: float
    n: int

    def within(self, target: float, n_sigma: float = 3.0) -> bool:
        return abs(self.value - target) <= n_sigma * self.std_error


@dataclass(frozen=True)
class SampleStats:
    """Streaming summary of scalar or vector samples.

    ``mean``/``variance`` are numpy arrays (0-d for scalars); ``variance`` is
    the unbiased sample variance and ``std_error`` is sqrt(variance/n).
    Merging two summaries reproduces the summary of the pooled samples.
    """

    n: int
    mean: np.ndarray
    variance: np.ndarray

    @staticmethod
    def from_samples(samples) -> "SampleStats":
        x = np.asarray(samples, dtype=float)
        if x.ndim == 0:
            x = x[None]
        n = x.shape[0]
        if n == 0:
            raise ValueError("empty sample")
        mean = x.mean(axis=0)
        var = x.var(axis=0, ddof=1) if n > 1 else np.zeros_like(mean)
        return SampleStats(n=n, mean=np.asarray(mean), variance=np.asarray(var))

    @property
    def std_error(self) -> np.ndarray:
        return np.sqrt(self.variance / self.n)

    @property
    def ci95(self):
        half = _Z95 * self.std_error
        return self.mean - half, self.mean + half

    def merge(self, other: "SampleStats") -> "SampleStats":
        """Pool with another summary (pairwise update of mean and M2)."""
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        m2 = (self.variance * max(self.n - 1, 0)
              + other.variance * max(other.n - 1, 0)
              + delta ** 2 * (self.n * other.n / n))
        var = m2 / (n - 1) if n > 1 else np.zeros_like(mean)
        return SampleStats(n=n, mean=mean, variance=var)

    def as_mcvalue(self) -> MCValue:
        return MCValue(float(self.mean), float(self.std_error), self.n)


def parallel_map(task, n_tasks: int, seed: int, workers: int = 1) -> list:
    """Run task(rng, index) for index = 0..n_tasks-1, deterministically.

    Results come back ordered by index whatever the worker count.  Failures
    are collected and re-raised together as a BatchError.
    """
    if n_tasks <= 0:
        raise ValueError("n_tasks must be positive")
    if workers < 1:
        raise ValueError("workers must be >= 1")

    def run_one(index):
        return task(stream(seed, index), index)

    results = [None] * n_tasks
    failures = {}
    if workers == 1:
        for i in range(n_tasks):
            try:
                results[i] = run_one(i)
            except Exception as exc:  # noqa: BLE001 - reported in bulk
                failures[i] = exc
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {i: pool.submit(run_one, i) for i in range(n_tasks)}
            for i, fut in futures.items():
                try:
                    results[i] = fut.result()
                except Exception as exc:  # noqa: BLE001
                    failures[i] = exc
    if failures:
        raise BatchError(failures)
    return results


def run_batches(task, n_tasks: int, seed: int, workers: int = 1) -> SampleStats:
    """Parallel map + summary.  task(rng, index) -> scalar or 1-d vector."""
    results = parallel_map(task, n_tasks, seed, workers)
    return SampleStats.from_samples(np.asarray(results, dtype=float))


def wasserstein_1d(a, b, p: float = 1.0) -> float:
    """Order-p Wasserstein distance between two empirical 1-d samples.

    Equal sizes: sorted-sample coupling, exact for the empirical measures.
    Unequal sizes: both are reduced to the same midpoint-quantile grid first.
    """
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample")
    if p < 1:
        raise ValueError("p must be >= 1")
    if a.size != b.size:
        m = min(a.size, b.size)
        q = (np.arange(m) + 0.5) / m
        a = np.quantile(a, q)
        b = np.quantile(b, q)
    diff = np.abs(a - b)
    return float(np.mean(diff ** p) ** (1.0 / p))


def bootstrap_wasserstein(a, b, p: float = 1.0, n_boot: int = 200,
                          rng: np.random.Generator | None = None):
    """W_p(a, b) with a bootstrap standard error and 95% CI.

    Returns (estimate, std_error, (lo, hi)).
    """
    if rng is None:
        rng = stream(0, 0)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    w = wasserstein_1d(a, b, p)
    reps = np.empty(n_boot)
    for k in range(n_boot):
        ra = a[rng.integers(0, a.size, a.size)]
        rb = b[rng.integers(0, b.size, b.size)]
        reps[k] = wasserstein_1d(ra, rb, p)
    se = float(reps.std(ddof=1))
    lo, hi = np.quantile(reps, [0.025, 0.975])
    return w, se, (float(lo), float(hi))


def wilson_interval(successes: int, n: int, z: float = _Z95):
    """Wilson score 95% interval for a binomial proportion.

    Stays informative at zero counts: the upper limit is ~z^2/n, never 0.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    if not 0 <= successes <= n:
        raise ValueError("successes out of range")
    phat = successes / n
    denom = 1.0 + z * z / n
    centre = (phat + z * z / (2 * n)) / denom
    half = (z / denom) * np.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n))
    return max(centre - half, 0.0), min(centre + half, 1.0)


@dataclass(frozen=True)
class TailEstimate:
    """Empirical tail probability with its Wilson interval."""

    p_hat: float
    ci_low: float
    ci_high: float
    successes: int
    n: int


def empirical_tail(samples, threshold: float) -> TailEstimate:
    """P(sample >= threshold) with a Wilson 95% interval."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("empty sample")
    k = int(np.count_nonzero(x >= threshold))
    lo, hi = wilson_interval(k, x.size)
    return TailEstimate(p_hat=k / x.size, ci_low=lo, ci_high=hi,
                        successes=k, n=x.size)
