"""Closed-form moments and exact lattice PMFs, independent of the simulator.

Let X ~ Uniform{1..m} with mean ``mu = (m + 1) / 2``, variance
``s2 = (m**2 - 1) / 12`` and fourth cumulant ``c4 = -(m**4 - 1) / 120``.

Sum of k draws, S_k. Cumulants add, so S_k has mean ``k mu``, variance
``k s2``, zero third central moment (X is symmetric) and fourth central
moment ``3 (k s2)**2 + k c4``; its excess kurtosis is ``c4 / (k s2**2)``,
the single-draw excess kurtosis divided by k.

Mixture over K ~ Uniform{1..T} (layer 3). With ``M = E[S_K] = E[K] mu`` and
``d_k = k mu - M``, expand ``(S_k - M) = (S_k - k mu) + d_k`` and average
the conditional central moments over k:

    E[(V - M)^2] = mean_k( k s2 + d_k^2 )
    E[(V - M)^3] = mean_k( 3 k s2 d_k + d_k^3 )
    E[(V - M)^4] = mean_k( 3 (k s2)^2 + k c4 + 6 k s2 d_k^2 + d_k^4 )

The second line is the law of total variance. Expanding around the common
mean instead of composing raw moments avoids catastrophic cancellation
when T * m is large.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "TheoreticalMoments",
    "Pmf",
    "SupportBudgetError",
    "uniform_moments",
    "sum_moments",
    "mixture_moments",
    "exact_sum_pmf",
    "mixture_pmf",
    "pmf_moments",
    "normal_cdf_distance",
]

DEFAULT_SUPPORT_BUDGET = 10**7


class SupportBudgetError(ValueError):
    pass


@dataclass(frozen=True)
class TheoreticalMoments:
    mean: float
    variance: float
    skewness: float
    excess_kurtosis: float

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


@dataclass
class Pmf:
    offset: int
    probs: np.ndarray

    def support(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + self.probs.size)

    def prob(self, value: int) -> float:
        i = value - self.offset
        return float(self.probs[i]) if 0 <= i < self.probs.size else 0.0


def _check_m(m):
    if m < 2:
        raise ValueError(f"m must be >= 2, got {m}")


def _uniform_parts(m):
    mu = (m + 1) / 2.0
    s2 = (m * m - 1) / 12.0
    c4 = -(m ** 4 - 1) / 120.0
    return mu, s2, c4


def uniform_moments(m: int) -> TheoreticalMoments:
    _check_m(m)
    mu, s2, _ = _uniform_parts(m)
    return TheoreticalMoments(mu, s2, 0.0, -6.0 * (m * m + 1) / (5.0 * (m * m - 1)))


def sum_moments(k: int, m: int) -> TheoreticalMoments:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    base = uniform_moments(m)
    return TheoreticalMoments(k * base.mean, k * base.variance, 0.0, base.excess_kurtosis / k)


def mixture_moments(T: int, m: int) -> TheoreticalMoments:
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    _check_m(m)
    mu, s2, c4 = _uniform_parts(m)
    k = np.arange(1, T + 1, dtype=np.float64)
    mean = (T + 1) / 2.0 * mu
    d = k * mu - mean
    v = k * s2
    mu2 = np.mean(v + d * d)
    mu3 = np.mean(3.0 * v * d + d ** 3)
    mu4 = np.mean(3.0 * v * v + k * c4 + 6.0 * v * d * d + d ** 4)
    return TheoreticalMoments(mean, float(mu2), float(mu3 / mu2 ** 1.5), float(mu4 / mu2 ** 2 - 3.0))


def _budget(cells, budget):
    if cells > budget:
        raise SupportBudgetError(f"support of {cells} cells exceeds budget {budget}")


def exact_sum_pmf(k: int, m: int, budget: int = DEFAULT_SUPPORT_BUDGET) -> Pmf:
    """PMF of the sum of k iid Uniform{1..m} by repeated convolution."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    _check_m(m)
    _budget(k * m, budget)
    base = np.full(m, 1.0 / m)
    probs = base
    for _ in range(k - 1):
        probs = np.convolve(probs, base)
        probs /= probs.sum()
    return Pmf(k, probs)


def mixture_pmf(T: int, m: int, budget: int = DEFAULT_SUPPORT_BUDGET) -> Pmf:
    """PMF of S_K with K ~ Uniform{1..T}, on the common support [1, T*m]."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    _check_m(m)
    _budget(T * m, budget)
    base = np.full(m, 1.0 / m)
    total = np.zeros(T * m)
    step = base
    for k in range(1, T + 1):
        # step is the PMF of S_k, supported on [k, k*m]
        total[k - 1:k - 1 + step.size] += step
        if k < T:
            step = np.convolve(step, base)
            step /= step.sum()
    total /= T
    return Pmf(1, total / total.sum())


def pmf_moments(p: Pmf) -> TheoreticalMoments:
    x = p.support().astype(np.float64)
    w = p.probs
    mean = float(np.dot(w, x))
    d = x - mean
    d2 = d * d
    var = float(np.dot(w, d2))
    if var <= 0.0:
        return TheoreticalMoments(mean, 0.0, 0.0, 0.0)
    mu3 = float(np.dot(w, d2 * d))
    mu4 = float(np.dot(w, d2 * d2))
    return TheoreticalMoments(mean, var, mu3 / var ** 1.5, mu4 / var ** 2 - 3.0)


def normal_cdf_distance(p: Pmf) -> float:
    """Sup distance between the PMF's CDF and the moment-matched normal CDF.

    Both one-sided limits are checked at every lattice point, since the
    lattice CDF jumps there.
    """
    mom = pmf_moments(p)
    x = p.support().astype(np.float64)
    cdf = np.cumsum(p.probs)
    left = cdf - p.probs
    phi = special.ndtr((x - mom.mean) / mom.std)
    return float(max(np.max(np.abs(cdf - phi)), np.max(np.abs(left - phi))))
