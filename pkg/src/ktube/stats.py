"""Small statistical helpers: batch means, bootstrap, Wilson intervals, KS, chi-square."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .errors import InsufficientData

KS_COEF = 1.95
CHI2_LEVEL = 0.999


@dataclass(frozen=True)
class Estimate:
    """A point estimate with its standard error and sample count."""

    value: float
    std_error: float
    n: int
    method: str
    info: dict = field(default_factory=dict, compare=False)

    def merge(self, other: "Estimate") -> "Estimate":
        """Count-weighted combination of two independent estimates of one quantity."""
        n = self.n + other.n
        if n == 0:
            return Estimate(math.nan, math.nan, 0, self.method)
        w1, w2 = self.n / n, other.n / n
        value = w1 * self.value + w2 * other.value
        se = math.hypot(w1 * self.std_error, w2 * other.std_error)
        return Estimate(value, se, n, self.method)

    def zscore(self, target: float) -> float:
        if self.std_error == 0.0:
            return 0.0 if self.value == target else math.inf
        return (self.value - target) / self.std_error

    def within(self, target: float, k: float = 3.0) -> bool:
        return abs(self.zscore(target)) <= k


def merge_all(estimates: Sequence[Estimate]) -> Estimate:
    """Fold estimates left to right; the result does not depend on the grouping."""
    n = sum(e.n for e in estimates)
    value = sum(e.n * e.value for e in estimates) / n
    se = math.sqrt(sum((e.n * e.std_error) ** 2 for e in estimates)) / n
    return Estimate(value, se, n, estimates[0].method)


def batch_means(x: np.ndarray, batch: int = 1000, method: str = "batch-means") -> Estimate:
    """Mean of a (trajectories, steps) array with a batch-means standard error.

    Each row is cut into consecutive batches of ``batch`` values; the batches
    of all rows are treated as approximately independent.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    m, length = x.shape
    nb = length // batch
    if nb >= 1 and m * nb >= 10:
        # leftover values past the last full batch enter the mean only
        means = x[:, : nb * batch].reshape(m, nb, batch).mean(axis=2).ravel()
        return Estimate(float(x.mean()), float(means.std(ddof=1) / math.sqrt(means.size)), x.size, method)
    if m < 2:
        raise InsufficientData(f"need at least 10 batches of {batch} (or 2 trajectories), got {x.shape}")
    rows = x.mean(axis=1)
    return Estimate(float(x.mean()), float(rows.std(ddof=1) / math.sqrt(m)), x.size, "trajectory-means")


def bootstrap_se(values: np.ndarray, stat: Callable[[np.ndarray], float | np.ndarray],
                 rng: np.random.Generator, n_boot: int = 200) -> np.ndarray:
    """Standard error of ``stat`` under resampling of the rows of ``values``."""
    m = values.shape[0]
    reps = [stat(values[rng.integers(0, m, m)]) for _ in range(n_boot)]
    return np.asarray(reps).std(axis=0, ddof=1)


def wilson_interval(k: int, n: int, level: float = CHI2_LEVEL) -> tuple[float, float]:
    z = stats.norm.ppf(0.5 + level / 2.0)
    p = k / n
    den = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass(frozen=True)
class KSResult:
    statistic: float
    threshold: float
    n: int

    @property
    def passed(self) -> bool:
        return self.statistic < self.threshold


def ks_uniform(u: np.ndarray) -> KSResult:
    """KS distance of samples on [0, 1] to the uniform law, gated at 1.95 / sqrt(n)."""
    u = np.asarray(u, dtype=float).ravel()
    d = float(stats.kstest(u, "uniform").statistic)
    return KSResult(d, KS_COEF / math.sqrt(u.size), u.size)


@dataclass(frozen=True)
class ChiSquareResult:
    """Goodness of fit of binned counts.

    ``statistic`` is chi-square distributed with ``dof`` degrees of freedom
    under the null; the test passes when it stays below the 0.999 quantile.
    """

    statistic: float
    dof: int
    threshold: float
    p_value: float
    observed: np.ndarray
    expected: np.ndarray
    method: str

    @property
    def passed(self) -> bool:
        return self.statistic < self.threshold


def pearson_chi2(counts: np.ndarray, probs: np.ndarray) -> ChiSquareResult:
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)
    n = counts.sum()
    exp = n * probs
    chi2 = float(np.sum((counts - exp) ** 2 / exp))
    dof = counts.size - 1
    return ChiSquareResult(chi2, dof, float(stats.chi2.ppf(CHI2_LEVEL, dof)),
                           float(stats.chi2.sf(chi2, dof)), counts, exp, "pearson")


def batch_chi2(labels: np.ndarray, probs: np.ndarray, batch: int = 1000) -> ChiSquareResult:
    """Chi-square test for bin labels of a Markov chain.

    Bin frequencies are averaged over batches of ``batch`` consecutive labels
    per row; the covariance of the batch frequency vectors replaces the
    multinomial covariance (a Hotelling test).  The statistic returned is
    the chi-square quantile matching the F p-value, so it is comparable with
    the usual 0.999 gate.
    """
    labels = np.atleast_2d(labels)
    k = probs.size
    m, length = labels.shape
    nb = length // batch
    if m * nb < 4 * k:
        raise InsufficientData(f"need at least {4 * k} batches of {batch} labels")
    lab = labels[:, : nb * batch].reshape(m * nb, batch)
    freq = np.stack([np.bincount(row, minlength=k) for row in lab]).astype(float) / batch
    n_b = freq.shape[0]
    diff = freq.mean(axis=0) - probs
    p = k - 1
    cov = np.cov(freq[:, :p], rowvar=False)
    t2 = float(n_b * diff[:p] @ np.linalg.solve(cov, diff[:p]))
    f = t2 * (n_b - p) / (p * (n_b - 1))
    pval = float(stats.f.sf(f, p, n_b - p))
    chi2 = float(stats.chi2.isf(pval, p)) if pval > 0 else math.inf
    counts = np.bincount(labels.ravel(), minlength=k).astype(float)
    return ChiSquareResult(chi2, p, float(stats.chi2.ppf(CHI2_LEVEL, p)), pval, counts,
                           counts.sum() * probs, "batch-hotelling")


@dataclass(frozen=True)
class NormalityReport:
    n: int
    skewness: float
    skewness_se: float
    excess_kurtosis: float
    kurtosis_se: float
    ks_distance: float

    @property
    def passed(self) -> bool:
        return abs(self.skewness) < 3 * self.skewness_se and abs(self.excess_kurtosis) < 3 * self.kurtosis_se


def normality_check(samples, min_samples: int = 10_000) -> NormalityReport:
    """Moment and KS diagnostics of rescaled endpoints against a fitted normal."""
    x = np.asarray(samples, dtype=float).ravel()
    m = x.size
    if m < min_samples:
        raise InsufficientData(f"need >= {min_samples} samples, got {m}")
    sd = x.std(ddof=1)
    ks = float(stats.kstest(x, "norm", args=(x.mean(), sd)).statistic)
    return NormalityReport(m, float(stats.skew(x)), math.sqrt(6.0 / m),
                           float(stats.kurtosis(x)), math.sqrt(24.0 / m), ks)
