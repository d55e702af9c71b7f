"""Small estimator toolbox shared by the harness and the test suite."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

Z_99 = 2.5758293035489004  # two-sided 99% normal quantile


@dataclass(frozen=True)
class SummaryStats:
    """Mean with its standard error and a recorded-level CI."""

    mean: float
    se: float
    ci_low: float
    ci_high: float
    ci_level: float
    n: int

    def to_json(self) -> dict:
        return {
            "mean": self.mean,
            "se": self.se,
            "ci": [self.ci_low, self.ci_high],
            "ci_level": self.ci_level,
            "n": self.n,
        }


def summarize(samples: np.ndarray, ci_level: float = 0.99) -> SummaryStats:
    x = np.asarray(samples, dtype=float)
    n = len(x)
    mean = float(x.mean())
    se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    z = float(sps.norm.ppf(0.5 + ci_level / 2.0))
    return SummaryStats(mean, se, mean - z * se, mean + z * se, ci_level, n)


def binned_tv(a: np.ndarray, b: np.ndarray, bins: int = 64) -> float:
    """Total-variation estimate between two samples on a common binning.

    Uses a fixed grid of ``bins`` bins spanning the pooled range.  This is
    an estimator of the TV distance between the binned laws, not the exact
    TV between the underlying distributions.
    """
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi <= lo:
        return 0.0
    edges = np.linspace(lo, hi, bins + 1)
    pa, _ = np.histogram(a, bins=edges)
    pb, _ = np.histogram(b, bins=edges)
    return 0.5 * float(np.abs(pa / len(a) - pb / len(b)).sum())


def ks_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sample Kolmogorov-Smirnov statistic."""
    return float(sps.ks_2samp(a, b, method="asymp").statistic)


def uniform_chi2_pvalue(u: np.ndarray, bins: int = 20) -> float:
    """Chi-square p-value for uniformity of values in [0, 1]."""
    counts, _ = np.histogram(u, bins=bins, range=(0.0, 1.0))
    return float(sps.chisquare(counts).pvalue)


def binomial_pit(k: np.ndarray, n: int, p: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Randomized probability integral transform of Binomial(n, p) counts.

    Under the null the output is iid uniform, which pools tests across
    events with different success probabilities.
    """
    k = np.asarray(k)
    p = np.asarray(p, dtype=float)
    upper = sps.binom.cdf(k, n, p)
    lower = sps.binom.cdf(k - 1, n, p)
    return lower + rng.random(len(k)) * (upper - lower)


def fit_decay_rate(t: np.ndarray, y: np.ndarray) -> float:
    """Least-squares slope of log(y) against t, returned as a decay rate."""
    mask = y > 0.0
    if mask.sum() < 2:
        raise ValueError("need at least two positive values to fit a decay rate")
    slope, _ = np.polyfit(t[mask], np.log(y[mask]), 1)
    return -float(slope)
