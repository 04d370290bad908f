"""Per-set statistics and normality diagnostics.

Conventions: ``std_dev`` is the sample (n - 1) standard deviation, while
skewness ``g1 = m3 / m2**1.5`` and excess kurtosis ``g2 = m4 / m2**2 - 3`` use
the population (biased) central moments. Quantiles are type 7 (linear
interpolation at ``h = (n - 1) p``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import special

__all__ = [
    "Moments",
    "DegenerateError",
    "Histogram",
    "BoxplotStats",
    "Normality",
    "SetSummary",
    "quartiles",
    "jarque_bera",
    "ks_normal",
    "shapiro_wilk",
    "percent_metrics",
    "histogram",
    "boxplot_stats",
    "summarize",
]


class DegenerateError(ValueError):
    """Statistic undefined for the input (empty, too short, or zero spread)."""


class Moments:
    """Mergeable one-pass accumulator of count and central moment sums.

    ``m2``, ``m3`` and ``m4`` are sums of powered deviations from the mean
    (Welford / Pebay recurrences), so ``m2 / count`` is the population
    variance.
    """

    __slots__ = ("count", "mean", "m2", "m3", "m4")

    def __init__(self, count=0, mean=0.0, m2=0.0, m3=0.0, m4=0.0):
        self.count = int(count)
        self.mean = float(mean)
        self.m2 = float(m2)
        self.m3 = float(m3)
        self.m4 = float(m4)

    def __repr__(self):
        return (f"Moments(count={self.count}, mean={self.mean!r}, m2={self.m2!r}, "
                f"m3={self.m3!r}, m4={self.m4!r})")

    def __eq__(self, other):
        if not isinstance(other, Moments):
            return NotImplemented
        return self.as_tuple() == other.as_tuple()

    def as_tuple(self):
        return (self.count, self.mean, self.m2, self.m3, self.m4)

    def copy(self) -> Moments:
        return Moments(*self.as_tuple())

    def update(self, x: float) -> Moments:
        n1 = self.count
        n = n1 + 1
        delta = float(x) - self.mean
        delta_n = delta / n
        delta_n2 = delta_n * delta_n
        term1 = delta * delta_n * n1
        self.mean += delta_n
        self.m4 += term1 * delta_n2 * (n * n - 3 * n + 3) + 6 * delta_n2 * self.m2 - 4 * delta_n * self.m3
        self.m3 += term1 * delta_n * (n - 2) - 3 * delta_n * self.m2
        self.m2 += term1
        self.count = n
        return self

    def extend(self, values) -> Moments:
        for x in values:
            self.update(x)
        return self

    @classmethod
    def from_values(cls, values) -> Moments:
        """Two-pass batch construction; same result as streaming, faster."""
        x = np.asarray(values, dtype=np.float64)
        if x.size == 0:
            return cls()
        mean = x.mean()
        # refine the mean with the residual sum to recover the last ulp
        mean += (x - mean).sum() / x.size
        d = x - mean
        d2 = d * d
        return cls(x.size, mean, d2.sum(), (d2 * d).sum(), (d2 * d2).sum())

    def merge(self, other: Moments) -> Moments:
        a, b = self, other
        if a.count == 0:
            return b.copy()
        if b.count == 0:
            return a.copy()
        na, nb = a.count, b.count
        n = na + nb
        delta = b.mean - a.mean
        delta2 = delta * delta
        mean = (na * a.mean + nb * b.mean) / n
        m2 = a.m2 + b.m2 + delta2 * na * nb / n
        m3 = (a.m3 + b.m3 + delta2 * delta * na * nb * (na - nb) / (n * n)
              + 3.0 * delta * (na * b.m2 - nb * a.m2) / n)
        m4 = (a.m4 + b.m4
              + delta2 * delta2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
              + 6.0 * delta2 * (na * na * b.m2 + nb * nb * a.m2) / (n * n)
              + 4.0 * delta * (na * b.m3 - nb * a.m3) / n)
        return Moments(n, mean, m2, m3, m4)

    __add__ = merge

    @property
    def variance_pop(self) -> float:
        if self.count == 0:
            raise DegenerateError("variance of an empty stream")
        return self.m2 / self.count

    @property
    def variance(self) -> float:
        if self.count < 2:
            raise DegenerateError("sample variance needs at least two values")
        return self.m2 / (self.count - 1)

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    @property
    def skewness(self) -> float:
        if self.count == 0 or self.m2 <= 0.0:
            raise DegenerateError("skewness undefined for zero variance")
        return math.sqrt(self.count) * self.m3 / self.m2 ** 1.5

    @property
    def excess_kurtosis(self) -> float:
        if self.count == 0 or self.m2 <= 0.0:
            raise DegenerateError("kurtosis undefined for zero variance")
        return self.count * self.m4 / (self.m2 * self.m2) - 3.0


def quartiles(values) -> tuple:
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise DegenerateError("quartiles of an empty vector")
    q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75], method="linear")
    return float(q1), float(med), float(q3)


def jarque_bera(g1: float, g2: float, n: int) -> tuple:
    """JB statistic and its chi-square(2) upper-tail p-value."""
    if n < 8:
        raise DegenerateError(f"Jarque-Bera needs n >= 8, got {n}")
    stat = n / 6.0 * (g1 * g1 + g2 * g2 / 4.0)
    # chi-square with 2 degrees of freedom has survival exp(-x / 2)
    return stat, math.exp(-stat / 2.0)


def ks_normal(values, mu: float, sigma: float) -> tuple:
    """One-sample KS distance to Normal(mu, sigma) with asymptotic p-value.

    When mu and sigma were estimated from ``values`` the p-value is
    anti-conservative (the Lilliefors effect); callers flag that case.
    """
    x = np.sort(np.asarray(values, dtype=np.float64))
    n = x.size
    if n < 8:
        raise DegenerateError(f"KS needs n >= 8, got {n}")
    if not sigma > 0.0:
        raise DegenerateError("KS needs sigma > 0")
    cdf = special.ndtr((x - mu) / sigma)
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - cdf)
    d_minus = np.max(cdf - (i - 1) / n)
    d = float(max(d_plus, d_minus))
    return d, float(special.kolmogorov(math.sqrt(n) * d))


# Shapiro-Wilk, Royston's AS R94 approximation. Polynomial coefficients are
# in ascending powers.
_SW_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_SW_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_SW_C3 = (0.5440, -0.39978, 0.025054, -6.714e-4)
_SW_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_SW_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_SW_C6 = (-0.4803, -0.082676, 0.0030302)
_SW_G = (-2.273, 0.459)
_SW_SMALL = 1e-19


def _poly(coefs, x):
    return sum(c * x ** p for p, c in enumerate(coefs))


@lru_cache(maxsize=64)
def _sw_coefficients(n: int) -> np.ndarray:
    if n == 3:
        return np.array([-math.sqrt(0.5), 0.0, math.sqrt(0.5)])
    m = special.ndtri((np.arange(1, n + 1) - 0.375) / (n + 0.25))
    ss = float(np.dot(m, m))
    u = 1.0 / math.sqrt(n)
    a = np.empty(n)
    an = m[-1] / math.sqrt(ss) + _poly(_SW_C1, u)
    if n > 5:
        an1 = m[-2] / math.sqrt(ss) + _poly(_SW_C2, u)
        phi = (ss - 2 * m[-1] ** 2 - 2 * m[-2] ** 2) / (1 - 2 * an ** 2 - 2 * an1 ** 2)
        a[:] = m / math.sqrt(phi)
        a[-1], a[-2] = an, an1
        a[0], a[1] = -an, -an1
    else:
        phi = (ss - 2 * m[-1] ** 2) / (1 - 2 * an ** 2)
        a[:] = m / math.sqrt(phi)
        a[-1], a[0] = an, -an
    a.setflags(write=False)
    return a


def shapiro_wilk(values) -> tuple:
    """Shapiro-Wilk W and p-value for 3 <= n <= 5000 (AS R94)."""
    x = np.sort(np.asarray(values, dtype=np.float64))
    n = x.size
    if not 3 <= n <= 5000:
        raise DegenerateError(f"Shapiro-Wilk needs 3 <= n <= 5000, got {n}")
    if x[-1] - x[0] < _SW_SMALL * max(1.0, abs(x[-1])):
        raise DegenerateError("Shapiro-Wilk undefined for a constant sample")
    a = _sw_coefficients(n)
    xc = x - x.mean()
    w = float(np.dot(a, xc) ** 2 / np.dot(xc, xc))
    w = min(w, 1.0)

    if n == 3:
        p = 6.0 / math.pi * (math.asin(math.sqrt(w)) - math.asin(math.sqrt(0.75)))
        return w, max(p, 0.0)

    w1 = 1.0 - w
    if w1 <= 0.0:
        return w, 1.0
    y = math.log(w1)
    if n <= 11:
        gamma = _poly(_SW_G, n)
        if y >= gamma:
            return w, _SW_SMALL
        y = -math.log(gamma - y)
        mu = _poly(_SW_C3, n)
        s = math.exp(_poly(_SW_C4, n))
    else:
        ln = math.log(n)
        mu = _poly(_SW_C5, ln)
        s = math.exp(_poly(_SW_C6, ln))
    return w, float(special.ndtr(-(y - mu) / s))


@dataclass
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray


def histogram(values, bins: int, integer: bool = False) -> Histogram:
    """Equal-width histogram over ``[min, max]``; last bin is right-closed.

    With ``integer=True`` the range is widened to ``[min - 0.5, max + 0.5]``
    so that ``bins == max - min + 1`` puts each integer in its own bin.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise DegenerateError("histogram of an empty vector")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    lo, hi = float(x.min()), float(x.max())
    if integer:
        lo, hi = lo - 0.5, hi + 0.5
    elif lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(x, bins=bins, range=(lo, hi))
    return Histogram(edges, counts.astype(np.int64))


@dataclass
class BoxplotStats:
    min: float
    q1: float
    median: float
    q3: float
    max: float
    lower_fence: float
    upper_fence: float
    outlier_count: int


def boxplot_stats(values) -> BoxplotStats:
    x = np.asarray(values, dtype=np.float64)
    q1, med, q3 = quartiles(x)
    iqr = q3 - q1
    lower, upper = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    outliers = int(np.count_nonzero((x < lower) | (x > upper)))
    return BoxplotStats(float(x.min()), q1, med, q3, float(x.max()), lower, upper, outliers)


@dataclass
class Normality:
    jb_stat: Optional[float] = None
    jb_p: Optional[float] = None
    sw_W: Optional[float] = None
    sw_p: Optional[float] = None
    ks_D: Optional[float] = None
    ks_p: Optional[float] = None
    # KS compares against a normal fitted to the same sample
    ks_params_estimated: bool = True


@dataclass
class SetSummary:
    set_index: int
    realized_k: Optional[int]
    count: int
    mean: float
    median: float
    std_dev: Optional[float]
    skewness: Optional[float]
    excess_kurtosis: Optional[float]
    min: float
    q1: float
    q3: float
    max: float
    outlier_count: int
    pct_mean: float = 0.0
    pct_median: float = 0.0
    pct_std: Optional[float] = None
    normality: Normality = field(default_factory=Normality)
    moments: Moments = field(default_factory=Moments, repr=False)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "set_index", "realized_k", "count", "mean", "median", "std_dev", "skewness",
            "excess_kurtosis", "min", "q1", "q3", "max", "outlier_count",
            "pct_mean", "pct_median", "pct_std")}
        d["normality"] = dict(vars(self.normality))
        return d


def percent_metrics(summary: SetSummary, cfg, per_value_k: bool = False) -> tuple:
    """Mean, median and std as percentages of the set's maximum possible value.

    The basis is ``realized_k * m`` when the set has one summand count, and
    ``T * m`` when the count varies per value (layer 3).
    """
    from .layers import Layer

    if cfg.layer is Layer.THREE or per_value_k or summary.realized_k is None:
        basis = cfg.total_additions * cfg.max_number
    else:
        basis = summary.realized_k * cfg.max_number
    pct_std = None if summary.std_dev is None else 100.0 * summary.std_dev / basis
    return 100.0 * summary.mean / basis, 100.0 * summary.median / basis, pct_std


def _optional(fn, *args):
    try:
        return fn(*args)
    except DegenerateError:
        return None


def summarize(result, cfg) -> SetSummary:
    """Full per-set summary for a generated :class:`SetResult`."""
    x = np.asarray(result.values, dtype=np.float64)
    mom = Moments.from_values(x)
    box = boxplot_stats(x)
    std = _optional(lambda: mom.std)
    g1 = _optional(lambda: mom.skewness)
    g2 = _optional(lambda: mom.excess_kurtosis)

    normality = Normality()
    if g1 is not None and x.size >= 8:
        normality.jb_stat, normality.jb_p = jarque_bera(g1, g2, x.size)
    sw = _optional(shapiro_wilk, x)
    if sw is not None:
        normality.sw_W, normality.sw_p = sw
    if std and x.size >= 8:
        normality.ks_D, normality.ks_p = ks_normal(x, mom.mean, std)

    summary = SetSummary(
        set_index=result.set_index,
        realized_k=result.realized_k,
        count=int(x.size),
        mean=mom.mean,
        median=box.median,
        std_dev=std,
        skewness=g1,
        excess_kurtosis=g2,
        min=box.min,
        q1=box.q1,
        q3=box.q3,
        max=box.max,
        outlier_count=box.outlier_count,
        normality=normality,
        moments=mom,
    )
    summary.pct_mean, summary.pct_median, summary.pct_std = percent_metrics(
        summary, cfg, per_value_k=result.per_value_k is not None)
    return summary
