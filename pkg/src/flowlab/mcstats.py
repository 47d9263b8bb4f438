"""Small Monte Carlo statistics toolbox: standard errors, intervals, diagnostics."""
from __future__ import annotations

import math

import numpy as np


def mean_se(samples: np.ndarray) -> tuple[float, float]:
    """Sample mean and its standard error (jackknife of the mean reduces to s/sqrt(n))."""
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if n == 0:
        return math.nan, math.nan
    if n == 1:
        return float(x[0]), 0.0
    lo, hi = x.min(), x.max()
    if lo == hi:
        # constant samples: exact mean, exactly zero SE (t=0 moment checks
        # must attain their bounds with equality)
        return float(lo), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(n))


def power_mean_se(samples: np.ndarray, p: float) -> tuple[float, float]:
    """(E ξ^p)^{1/p} across samples with a delta-method (jackknife-equivalent) SE."""
    x = np.asarray(samples, dtype=float).ravel()
    mp, se_mp = mean_se(x**p)
    if mp <= 0.0:
        return 0.0, 0.0
    val = mp ** (1.0 / p)
    # d/dm m^{1/p} = (1/p) m^{1/p-1}
    return float(val), float(abs(1.0 / p) * mp ** (1.0 / p - 1.0) * se_mp)


def pooled_se(*ses: float) -> float:
    return math.sqrt(sum(float(s) ** 2 for s in ses))


def wilson_interval(successes: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score 95% interval for a binomial proportion."""
    if n == 0:
        return 0.0, 1.0
    phat = successes / n
    denom = 1.0 + z * z / n
    centre = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def effective_sample_size(weights: np.ndarray) -> float:
    """(Σw)² / Σw² — the usual importance-sampling variance diagnostic."""
    w = np.asarray(weights, dtype=float).ravel()
    s2 = float(np.sum(w * w))
    if s2 == 0.0:
        return 0.0
    s = float(np.sum(w))
    return s * s / s2


def tail_mass_fraction(samples: np.ndarray, top_fraction: float = 0.001) -> float:
    """Fraction of the sample-mean estimate carried by the largest `top_fraction` of paths.

    Used as a heavy-tail diagnostic for exponential integrands: a value above
    0.5 means the estimate hinges on a handful of paths and is unreliable.
    """
    x = np.asarray(samples, dtype=float).ravel()
    total = float(np.sum(x))
    if total <= 0.0 or x.size == 0:
        return 0.0
    k = max(1, int(math.ceil(top_fraction * x.size)))
    top = np.partition(x, x.size - k)[x.size - k:]
    return float(np.sum(top) / total)


def richardson_bias(est_h: float, est_2h: float, est_4h: float) -> float:
    """First-order bias estimate at step h from estimates at h, 2h, 4h.

    Under est(dt) = target + C·dt the differences est(2h)-est(h) and
    (est(4h)-est(2h))/2 both estimate C·h; take the larger magnitude to be
    conservative against statistical noise.
    """
    return max(abs(est_2h - est_h), abs(est_4h - est_2h) / 2.0)
