"""Single-chain convergence diagnostics and posterior summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DataError

__all__ = [
    "ScalarChain",
    "PosteriorSummary",
    "geweke_z",
    "geweke_report",
    "summarize",
    "summary_table",
    "GEWEKE_STRICT",
    "GEWEKE_CONVENTIONAL",
]

GEWEKE_STRICT = 1.6
GEWEKE_CONVENTIONAL = 1.96


@dataclass
class ScalarChain:
    """Named vector of retained draws for one scalar parameter."""

    name: str
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, float)
        if self.values.ndim != 1:
            raise DataError("chain values must be one-dimensional")
        if not np.all(np.isfinite(self.values)):
            raise DataError(f"chain {self.name!r} contains non-finite values")


@dataclass
class PosteriorSummary:
    """Mean / SD / 2.5% / median / 97.5% of one scalar chain."""

    name: str
    mean: float
    sd: float
    q2_5: float
    median: float
    q97_5: float


def _spectral_variance(window):
    """Spectral density at zero via overlapping batch means.

    Batch length floor(sqrt(n)); estimates the asymptotic variance constant
    sigma2 such that Var(mean) ~ sigma2 / n.
    """
    n = window.size
    b = max(int(math.sqrt(n)), 1)
    if b >= n:
        return float(window.var(ddof=0))
    csum = np.concatenate([[0.0], np.cumsum(window)])
    batch_means = (csum[b:] - csum[:-b]) / b  # n - b + 1 overlapping batches
    centered = batch_means - window.mean()
    return float(n * b / ((n - b) * (n - b + 1.0)) * np.sum(centered ** 2))


def geweke_z(chain, frac_a=0.1, frac_b=0.5):
    """Geweke convergence z-score.

    Compares the mean of the first ``frac_a`` fraction of the chain against
    the last ``frac_b`` fraction, standardized by spectral-density-at-zero
    estimates of each window's mean variance.  |z| below ~1.6-1.96 is
    consistent with stationarity.
    """
    if isinstance(chain, ScalarChain):
        values = chain.values
        name = chain.name
    else:
        values = np.asarray(chain, float)
        name = "chain"
    n = values.size
    if n < 100:
        raise DataError(f"{name}: need at least 100 draws for a Geweke score, got {n}")
    if frac_a <= 0 or frac_b <= 0 or frac_a + frac_b > 1:
        raise DataError("window fractions must be positive with frac_a + frac_b <= 1")
    n_a = int(frac_a * n)
    n_b = int(frac_b * n)
    first = values[:n_a]
    last = values[n - n_b:]
    s_a = _spectral_variance(first)
    s_b = _spectral_variance(last)
    if s_a <= 0 or s_b <= 0:
        raise DataError(f"{name}: zero variance inside a Geweke window (degenerate chain)")
    return float((first.mean() - last.mean()) / math.sqrt(s_a / n_a + s_b / n_b))


def geweke_report(store, frac_a=0.1, frac_b=0.5):
    """Geweke scores for every scalar parameter of a ChainStore.

    Returns a list of dicts with the z-score plus pass flags at the strict
    (1.6) and conventional (1.96) thresholds.
    """
    rows = []
    for name, values in store.scalar_chains().items():
        z = geweke_z(ScalarChain(name, values), frac_a=frac_a, frac_b=frac_b)
        rows.append(
            {
                "parameter": name,
                "z": z,
                "pass_strict_1.6": abs(z) < GEWEKE_STRICT,
                "pass_1.96": abs(z) < GEWEKE_CONVENTIONAL,
            }
        )
    return rows


def summarize(chain, name=None):
    """Posterior summary of one scalar chain: mean, SD (ddof=1), and the
    2.5/50/97.5 percent empirical quantiles with linear interpolation."""
    if isinstance(chain, ScalarChain):
        values = chain.values
        name = name or chain.name
    else:
        values = np.asarray(chain, float)
        name = name or "chain"
    if values.size < 2:
        raise DataError(f"{name}: need at least 2 draws to summarize")
    q2_5, median, q97_5 = np.quantile(values, [0.025, 0.5, 0.975])
    return PosteriorSummary(
        name=name,
        mean=float(values.mean()),
        sd=float(values.std(ddof=1)),
        q2_5=float(q2_5),
        median=float(median),
        q97_5=float(q97_5),
    )


def summary_table(store):
    """PosteriorSummary for every scalar parameter of a ChainStore."""
    return [summarize(values, name=name) for name, values in store.scalar_chains().items()]
