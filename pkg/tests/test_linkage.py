import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from explink.errors import DomainError
from explink.linkage import (
    ALPHA_MAX,
    Alpha,
    Linkage,
    LinkageStats,
    classic_linkage,
    explink,
    explink_alpha_gradient,
    explink_f_gradients,
    merge_stats,
)

from oracles import central_difference, relative_error


def _psi(values, alpha):
    return float(explink(LinkageStats.from_values(values, alpha), alpha))


def _mp_psi(values, alpha):
    mpmath.mp.dps = 50
    w = [mpmath.e ** (mpmath.mpf(alpha) * mpmath.mpf(f)) for f in values]
    return float(sum(wi * mpmath.mpf(f) for wi, f in zip(w, values)) / sum(w))


class TestAlpha:
    def test_bounds(self):
        Alpha(ALPHA_MAX)
        with pytest.raises(DomainError):
            Alpha(ALPHA_MAX + 1e-9)
        with pytest.raises(DomainError):
            Alpha(float("nan"))

    def test_clamped(self):
        assert Alpha.clamped(1e6).value == ALPHA_MAX
        assert Alpha.clamped(-1e6).value == -ALPHA_MAX

    @pytest.mark.parametrize("text", ["neg-inf", "pos-inf", "-1.5", "0.0"])
    def test_parse_round_trip(self, text):
        assert str(Alpha.parse(text)) == str(Alpha.parse(str(Alpha.parse(text))))

    def test_finite_rejects_infinity(self):
        with pytest.raises(DomainError):
            Alpha.finite(math.inf)


class TestExplink:
    def test_mean_at_zero(self):
        assert _psi([1, 2, 3], 0.0) == 2.0

    def test_limits(self):
        s = LinkageStats.from_values([1, 2, 3], 0.0)
        assert explink(s, Alpha.neg_inf()) == 1
        assert explink(s, Alpha.pos_inf()) == 3

    def test_alpha_one(self):
        e = math.e
        expected = (e + 2 * e**2 + 3 * e**3) / (e + e**2 + e**3)
        assert _psi([1, 2, 3], 1.0) == pytest.approx(expected, rel=1e-14)
        assert _psi([1, 2, 3], 1.0) == pytest.approx(2.5752, abs=5e-5)

    def test_singleton_for_every_alpha(self):
        for a in (-ALPHA_MAX, -3.0, 0.0, 7.5, ALPHA_MAX):
            assert _psi([4.25], a) == 4.25

    def test_no_overflow_at_extreme_scale(self):
        f = np.array([1e4, 1e4 + 1.0, 2e4])
        for a in (-ALPHA_MAX, ALPHA_MAX):
            v = _psi(f, a)
            assert np.isfinite(v)
            assert v == pytest.approx(f.min() if a < 0 else f.max())

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_high_precision(self, seed):
        rng = np.random.default_rng(seed)
        f = rng.uniform(-5, 5, 12)
        a = rng.uniform(-8, 8)
        assert _psi(f, a) == pytest.approx(_mp_psi(f, a), rel=1e-12)

    def test_stats_alpha_mismatch(self):
        with pytest.raises(DomainError):
            explink(LinkageStats.from_values([1.0, 2.0], 0.5), Alpha(0.25))

    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            LinkageStats.from_values([], 0.0)


class TestClassic:
    def test_singleton(self):
        s = LinkageStats.from_values([4.0])
        assert [classic_linkage(s, k) for k in ("sl", "avg", "comp")] == [4.0, 4.0, 4.0]

    def test_two_values(self):
        s = LinkageStats.from_values([1.0, 5.0])
        assert [classic_linkage(s, k) for k in ("sl", "avg", "comp")] == [1.0, 3.0, 5.0]

    def test_agree_with_explink_limits(self):
        f = np.random.default_rng(4).normal(size=20)
        s = LinkageStats.from_values(f, 0.0)
        assert classic_linkage(s, "sl") == explink(s, Alpha.neg_inf())
        assert classic_linkage(s, "comp") == explink(s, Alpha.pos_inf())
        assert classic_linkage(s, "avg") == pytest.approx(float(explink(s, Alpha(0.0))), abs=1e-14)

    def test_unknown_kind(self):
        with pytest.raises(DomainError):
            Linkage("ward")
        with pytest.raises(DomainError):
            Linkage("explink")


class TestMerge:
    def test_two_singletons(self):
        m = merge_stats(LinkageStats.from_values([1.0]), LinkageStats.from_values([3.0]), Alpha(0.0))
        assert explink(m, Alpha(0.0)) == 2.0

    def test_alpha_mismatch(self):
        with pytest.raises(DomainError):
            merge_stats(LinkageStats.from_values([1.0], 1.0), LinkageStats.from_values([3.0], 2.0))

    def test_empty_rejected(self):
        a = LinkageStats.from_values([1.0])
        empty = LinkageStats(*(np.asarray(v) for v in (0, 0.0, np.inf, -np.inf, -np.inf, 0.0, 0.0, 0.0, -1, -1)))
        with pytest.raises(DomainError):
            merge_stats(a, empty)

    @pytest.mark.parametrize("seed", range(10))
    def test_random_split_matches_recomputation(self, seed):
        rng = np.random.default_rng(seed)
        f = rng.uniform(-10, 10, 30)
        a = float(rng.uniform(-ALPHA_MAX, ALPHA_MAX))
        cut = int(rng.integers(1, 30))
        merged = merge_stats(LinkageStats.from_values(f[:cut], a), LinkageStats.from_values(f[cut:], a), a)
        fresh = LinkageStats.from_values(f, a)
        assert float(explink(merged, a)) == pytest.approx(float(explink(fresh, a)), rel=1e-9)
        for name in ("count", "min_f", "max_f", "shift"):
            assert getattr(merged, name) == getattr(fresh, name)
        for name in ("sum_f", "w_sum", "wf_sum", "wff_sum"):
            assert getattr(merged, name) == pytest.approx(getattr(fresh, name), rel=1e-9)

    def test_extremal_keys(self):
        a = LinkageStats.from_values([2.0, 1.0], keys=[7, 3])
        b = LinkageStats.from_values([1.0, 5.0], keys=[1, 9])
        m = merge_stats(a, b)
        assert m.argmin == 1 and m.argmax == 9


class TestGradients:
    def test_alpha_gradient_constant(self):
        assert explink_alpha_gradient([2.0, 2.0, 2.0], Alpha(1.3)) == 0.0

    def test_alpha_gradient_two_point(self):
        assert explink_alpha_gradient([0.0, 1.0], Alpha(0.0)) == 0.25

    def test_alpha_gradient_infinite_rejected(self):
        with pytest.raises(DomainError):
            explink_alpha_gradient([0.0, 1.0], Alpha.neg_inf())

    def test_alpha_gradient_finite_difference(self):
        f = np.random.default_rng(11).normal(size=10)
        fd = central_difference(lambda a: _psi(f, float(a[0])), np.array([-1.3]), h=1e-5)
        assert relative_error(explink_alpha_gradient(f, Alpha(-1.3)), fd[0]) <= 1e-5

    def test_alpha_gradient_from_stats(self):
        f = np.random.default_rng(12).normal(size=15)
        s = LinkageStats.from_values(f, 0.8)
        assert float(explink_alpha_gradient(s, 0.8)) == pytest.approx(explink_alpha_gradient(f, 0.8), rel=1e-9)

    def test_f_gradient_mean(self):
        np.testing.assert_allclose(explink_f_gradients(np.arange(5.0), Alpha(0.0)), np.full(5, 0.2))

    def test_f_gradient_min_selector(self):
        np.testing.assert_array_equal(explink_f_gradients([2.0, 1.0, 3.0], Alpha.neg_inf()), [0, 1, 0])
        np.testing.assert_array_equal(explink_f_gradients([3.0, 1.0, 3.0], Alpha.pos_inf()), [1, 0, 0])

    def test_f_gradient_finite_difference(self):
        f = np.random.default_rng(13).normal(size=8)
        fd = central_difference(lambda x: _psi(x, 0.7), f, h=1e-5)
        assert relative_error(explink_f_gradients(f, Alpha(0.7)), fd) <= 1e-5

    def test_f_gradients_sum_to_one(self):
        f = np.random.default_rng(14).normal(size=9)
        assert explink_f_gradients(f, Alpha(-2.0)).sum() == pytest.approx(1.0)


values = st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40)
alphas = st.floats(-ALPHA_MAX, ALPHA_MAX)


@settings(max_examples=200, deadline=None)
@given(values, alphas)
def test_bounds_property(f, a):
    v = _psi(f, a)
    assert min(f) <= v <= max(f)


@settings(max_examples=100, deadline=None)
@given(values, st.lists(alphas, min_size=2, max_size=6))
def test_monotone_in_alpha(f, grid):
    grid = sorted(grid)
    vals = [_psi(f, a) for a in grid]
    spread = max(f) - min(f)
    for lo, hi in zip(vals, vals[1:]):
        assert hi >= lo - 1e-12 * (spread + max(abs(x) for x in f) + 1)


@settings(max_examples=100, deadline=None)
@given(values, values, values, alphas)
def test_merge_order_irrelevant(f1, f2, f3, a):
    s = [LinkageStats.from_values(f, a) for f in (f1, f2, f3)]
    left = merge_stats(merge_stats(s[0], s[1]), s[2])
    right = merge_stats(s[0], merge_stats(s[2], s[1]))
    fresh = _psi(f1 + f2 + f3, a)
    scale = max(abs(x) for x in f1 + f2 + f3) + 1
    assert abs(float(explink(left, a)) - fresh) <= 1e-9 * scale
    assert abs(float(explink(right, a)) - fresh) <= 1e-9 * scale
