import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from layersum.analysis import (DegenerateError, Moments, boxplot_stats, histogram, jarque_bera,
                               ks_normal, percent_metrics, quartiles, shapiro_wilk, summarize)
from layersum.layers import RunConfig, generate_set
from layersum.oracles import exact_sum_pmf, normal_cdf_distance


def batch(x):
    """Two-pass central moment sums, computed in extended precision."""
    x = np.asarray(x, dtype=np.longdouble)
    mean = x.sum() / x.size
    d = x - mean
    return float(mean), float((d**2).sum()), float((d**3).sum()), float((d**4).sum())


def rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


# -- moments ---------------------------------------------------------------


def test_moments_hand_example():
    m = Moments().extend([1, 2, 3])
    assert (m.count, m.mean, m.m2) == (3, 2.0, 2.0)
    assert m.variance_pop == pytest.approx(2 / 3)


def test_constant_stream():
    m = Moments().extend([5, 5, 5, 5])
    assert m.m2 == m.m3 == m.m4 == 0
    with pytest.raises(DegenerateError):
        m.skewness
    with pytest.raises(DegenerateError):
        m.excess_kurtosis


def test_empty_moments():
    m = Moments()
    assert m.as_tuple() == (0, 0.0, 0.0, 0.0, 0.0)
    with pytest.raises(DegenerateError):
        m.variance_pop


def test_uniform_kurtosis():
    rng = np.random.default_rng(1)
    x = rng.integers(1, 101, 10**6)
    m = Moments.from_values(x)
    assert m.excess_kurtosis == pytest.approx(-1.20024, abs=0.03)


def test_streaming_matches_batch_on_large_stream():
    rng = np.random.default_rng(5)
    x = rng.integers(0, 10**9, 10**6).astype(np.float64)
    m = Moments().extend(x.tolist())
    mean, m2, m3, m4 = batch(x)
    assert rel(m.mean, mean) < 1e-9
    assert rel(m.m2, m2) < 1e-9
    # m3 is near zero for symmetric data, so compare it on the m2**1.5 scale
    assert abs(m.m3 - m3) / m2**1.5 * math.sqrt(x.size) < 1e-9
    assert rel(m.m4, m4) < 1e-9


def test_from_values_matches_streaming():
    rng = np.random.default_rng(2)
    x = rng.exponential(size=5000) * 1e3
    a, b = Moments().extend(x), Moments.from_values(x)
    assert a.count == b.count
    for f in ("mean", "m2", "m3", "m4"):
        assert rel(getattr(a, f), getattr(b, f)) < 1e-10


def test_merge_examples():
    merged = Moments().extend([1, 2]).merge(Moments().extend([3]))
    assert merged.as_tuple() == pytest.approx(Moments().extend([1, 2, 3]).as_tuple(), abs=1e-12)
    x = Moments().extend([4.0, 8.0, 1.5])
    assert x.merge(Moments()) == x
    assert Moments().merge(x) == x


def test_chunked_tree_merge():
    rng = np.random.default_rng(3)
    x = rng.gamma(2.0, 50.0, size=10**5)
    cuts = np.sort(rng.choice(np.arange(1, x.size), 15, replace=False))
    parts = [Moments.from_values(c) for c in np.split(x, cuts)]
    while len(parts) > 1:
        parts = [parts[i].merge(parts[i + 1]) if i + 1 < len(parts) else parts[i]
                 for i in range(0, len(parts), 2)]
    whole = Moments().extend(x)
    for f in ("mean", "m2", "m3", "m4"):
        assert rel(getattr(parts[0], f), getattr(whole, f)) < 1e-10


arrays = st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=40)


@settings(max_examples=200, deadline=None)
@given(arrays, arrays, arrays)
def test_merge_associative_and_commutative(a, b, c):
    A, B, C = (Moments().extend(v) for v in (a, b, c))
    left = A.merge(B).merge(C)
    right = A.merge(B.merge(C))
    swapped = C.merge(A).merge(B)
    scale = [1.0, max(abs(left.mean), 1.0), left.m2 + 1.0, left.m2**1.5 + 1.0, left.m2**2 + 1.0]
    for i in range(1, 5):
        assert abs(left.as_tuple()[i] - right.as_tuple()[i]) <= 1e-10 * scale[i]
        assert abs(left.as_tuple()[i] - swapped.as_tuple()[i]) <= 1e-10 * scale[i]
    assert left.count == right.count == swapped.count


def test_streaming_g1_g2_vs_batch_random_vectors():
    rng = np.random.default_rng(8)
    for _ in range(200):
        n = int(rng.integers(3, 3000))
        x = rng.lognormal(0, 1, n) * rng.uniform(1, 1e6)
        m = Moments().extend(x.tolist())
        mean, m2, m3, m4 = batch(x)
        g1 = math.sqrt(n) * m3 / m2**1.5
        g2 = n * m4 / m2**2 - 3
        assert abs(m.skewness - g1) <= 1e-8 * max(abs(g1), 1)
        assert abs(m.excess_kurtosis - g2) <= 1e-8 * max(abs(g2), 1)


# -- quantiles, boxplots, histograms -----------------------------------------


def test_quartiles_examples():
    assert quartiles([1, 2, 3, 4, 5]) == (2, 3, 4)
    assert quartiles([1, 2, 3, 4]) == (1.75, 2.5, 3.25)
    assert quartiles([7]) == (7, 7, 7)
    with pytest.raises(DegenerateError):
        quartiles([])


def _type7(sorted_x, p):
    h = (len(sorted_x) - 1) * p
    lo = math.floor(h)
    hi = min(lo + 1, len(sorted_x) - 1)
    return sorted_x[lo] + (h - lo) * (sorted_x[hi] - sorted_x[lo])


def test_quartiles_against_sort_oracle():
    rng = np.random.default_rng(0)
    for n in range(1, 51):
        for _ in range(5):
            x = rng.normal(size=n).tolist()
            s = sorted(x)
            expected = tuple(_type7(s, p) for p in (0.25, 0.5, 0.75))
            assert quartiles(x) == pytest.approx(expected, abs=1e-12)


def test_boxplot_examples():
    b = boxplot_stats([1, 2, 3, 4, 5])
    assert (b.q3 - b.q1, b.lower_fence, b.upper_fence, b.outlier_count) == (2, -1, 7, 0)
    b = boxplot_stats([1, 2, 3, 4, 100])
    assert (b.q1, b.q3, b.upper_fence, b.outlier_count) == (2, 4, 7, 1)
    b = boxplot_stats([3, 3, 3, 3])
    assert (b.q3 - b.q1, b.outlier_count) == (0, 0)
    assert b.min <= b.q1 <= b.median <= b.q3 <= b.max


def test_histogram_examples():
    h = histogram(np.arange(1, 101), 10)
    assert h.counts.tolist() == [10] * 10
    h = histogram([7], 3)
    assert np.count_nonzero(h.counts) == 1 and h.counts.sum() == 1
    with pytest.raises(DegenerateError):
        histogram([], 3)


def test_histogram_integer_alignment():
    h = histogram([2, 3, 3, 4, 4, 4], 3, integer=True)
    assert h.bin_edges.tolist() == [1.5, 2.5, 3.5, 4.5]
    assert h.counts.tolist() == [1, 2, 3]


def test_triangular_histogram_peak():
    cfg = RunConfig(layer="fixed", k=2, total_numbers=10**6, total_sets=1, seed=7)
    values = generate_set(cfg, 1).values
    h = histogram(values, 199, integer=True)
    assert h.bin_edges[0] == 1.5 and h.bin_edges[-1] == 200.5
    assert h.counts.sum() == 10**6
    centers = (h.bin_edges[:-1] + h.bin_edges[1:]) / 2
    # adjacent bins near the apex differ by 1% of their expectation, which is
    # one binomial standard error at this size, so locate the apex on a
    # triangle-smoothed profile
    smooth = np.convolve(h.counts, np.bartlett(21), mode="same")
    assert centers[np.argmax(smooth)] == 101
    exact = exact_sum_pmf(2, 100)
    assert exact.support()[np.argmax(exact.probs)] == 101


# -- normality tests ----------------------------------------------------------


def test_jarque_bera_examples():
    assert jarque_bera(0.0, 0.0, 50) == (0.0, 1.0)
    stat, p = jarque_bera(0.0, -1.2, 1000)
    assert stat == pytest.approx(60.0, abs=1e-12)
    assert p == pytest.approx(math.exp(-30), rel=1e-12) and p < 1e-12
    with pytest.raises(DegenerateError):
        jarque_bera(0.1, 0.1, 7)


def test_jarque_bera_sum_of_100_uniforms():
    accepted = 0
    for seed in range(100):
        cfg = RunConfig(layer="fixed", k=100, total_numbers=1000, total_sets=1, seed=seed)
        m = Moments.from_values(generate_set(cfg, 1).values)
        _, p = jarque_bera(m.skewness, m.excess_kurtosis, m.count)
        accepted += p > 0.001
    assert accepted >= 95


def test_ks_at_exact_quantiles():
    n, mu, sigma = 100, 3.0, 2.0
    x = mu + sigma * special.ndtri((np.arange(1, n + 1) - 0.5) / n)
    d, p = ks_normal(x, mu, sigma)
    assert d == pytest.approx(0.005, abs=1e-12)


def test_ks_uniform_vs_fitted_normal():
    x = np.random.default_rng(4).integers(1, 101, 10**4)
    d, p = ks_normal(x, x.mean(), x.std(ddof=1))
    # max gap of the lattice uniform CDF to its moment-matched normal
    oracle = normal_cdf_distance(exact_sum_pmf(1, 100))
    assert 0.06 <= oracle <= 0.066
    assert abs(d - oracle) < 0.015
    assert p < 1e-10


def test_ks_degenerate():
    with pytest.raises(DegenerateError):
        ks_normal(np.arange(10.0), 0.0, 0.0)
    with pytest.raises(DegenerateError):
        ks_normal([1.0, 2.0], 0.0, 1.0)


# Reference values produced by the Fortran AS R94 routine as shipped in
# scipy.stats.shapiro (scipy 1.15).
SW_WEIGHTS = [148, 154, 158, 160, 161, 162, 166, 170, 182, 195, 236]
SW_WEIGHTS_REF = (0.7888146948631716, 0.006703814061898823)
SW_X25 = [0.139, 0.157, 0.175, 0.256, 0.344, 0.413, 0.503, 0.577, 0.614, 0.655, 0.954, 1.392,
          1.557, 1.648, 1.690, 1.994, 2.174, 2.206, 3.245, 3.510, 3.571, 4.354, 4.980, 6.084,
          8.351]
SW_X25_REF = (0.8346662753381485, 0.0009134904825887374)
SW_LINEAR50_REF = (0.9555826875589973, 0.058091862177350316)


def test_shapiro_wilk_reference_values():
    for data, (w_ref, p_ref) in ((SW_WEIGHTS, SW_WEIGHTS_REF), (SW_X25, SW_X25_REF),
                                 (np.arange(1, 51), SW_LINEAR50_REF)):
        w, p = shapiro_wilk(data)
        assert w == pytest.approx(w_ref, abs=1e-6)
        assert p == pytest.approx(p_ref, rel=1e-4)
    # the classic eleven-weights example has W = 0.79 to two decimals
    assert round(shapiro_wilk(SW_WEIGHTS)[0], 2) == 0.79


def test_shapiro_wilk_matches_scipy_across_sizes():
    scipy_stats = pytest.importorskip("scipy.stats")
    rng = np.random.default_rng(12)
    for n in (3, 4, 5, 6, 7, 10, 11, 12, 20, 50, 200, 1000, 5000):
        for x in (rng.normal(size=n), rng.exponential(size=n), rng.uniform(size=n)):
            w, p = shapiro_wilk(x)
            ref = scipy_stats.shapiro(x)
            assert 0 < w <= 1
            assert w == pytest.approx(ref.statistic, abs=1e-6)
            assert p == pytest.approx(ref.pvalue, rel=1e-3, abs=1e-9)


def test_shapiro_wilk_errors():
    with pytest.raises(DegenerateError):
        shapiro_wilk([5, 5, 5])
    with pytest.raises(DegenerateError):
        shapiro_wilk([1, 2])
    with pytest.raises(DegenerateError):
        shapiro_wilk(np.arange(5001))


# -- summaries and percent metrics -----------------------------------------------


class _Stub:
    def __init__(self, mean, median, std, k):
        self.mean, self.median, self.std_dev, self.realized_k = mean, median, std, k


def test_percent_metrics_examples():
    cfg1 = RunConfig(layer="1", seed=0)
    pm, _, _ = percent_metrics(_Stub(504982, 504863, 2827.526251, 10000), cfg1)
    assert round(pm, 1) == 50.5
    cfg2 = RunConfig(layer="2", seed=0)
    pm, pmed, _ = percent_metrics(_Stub(305, 305, 70.942868, 6), cfg2)
    assert pm == pytest.approx(50.83, abs=0.01)
    cfg3 = RunConfig(layer="3", seed=0)
    _, _, ps = percent_metrics(_Stub(256254, 261975, 145170, None), cfg3)
    assert round(ps, 1) == 14.5


def test_summarize_fields():
    cfg = RunConfig(layer="3", seed=4, total_sets=2, total_numbers=1000, total_additions=50)
    s = summarize(generate_set(cfg, 2), cfg)
    assert s.min <= s.q1 <= s.median <= s.q3 <= s.max
    assert 0 <= s.pct_mean <= 100 and 0 <= s.pct_median <= 100 and s.pct_std >= 0
    n = s.normality
    assert n.jb_stat >= 0 and 0 <= n.jb_p <= 1
    assert 0 < n.sw_W <= 1 and 0 <= n.sw_p <= 1
    assert 0 <= n.ks_D <= 1 and n.ks_params_estimated


def test_summarize_small_sets_drop_tests():
    cfg = RunConfig(layer="1", seed=4, total_sets=3, total_numbers=5, total_additions=3)
    s = summarize(generate_set(cfg, 1), cfg)
    assert s.normality.jb_stat is None and s.normality.ks_D is None
    assert s.normality.sw_W is not None or s.max == s.min
