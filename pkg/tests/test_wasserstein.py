import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate
from scipy.stats import norm

from ergowass.errors import InvalidArgument
from ergowass.occupation import ring_masses
from ergowass.targets import Gaussian1D
from ergowass.wasserstein import (
    default_depth,
    fg_multiscale_sum,
    gaussian_histogram,
    histogramize,
    load_histogram,
    lt_function,
    save_histogram,
    wasserstein_1d_exact,
    wasserstein_1d_to_law,
    wasserstein_exact_small,
)

coords = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def cloud(n, d=1):
    return arrays(np.float64, (n, d), elements=coords)


def brute_force(x, y, p):
    n = len(x)
    best = math.inf
    for perm in itertools.permutations(range(n)):
        cost = sum(np.linalg.norm(np.atleast_1d(x[i] - y[j])) ** p for i, j in enumerate(perm))
        best = min(best, cost / n)
    return best ** (1.0 / p)


class TestHistogram:
    def test_defaults(self):
        assert default_depth(1) == 12
        assert default_depth(2) == 6
        assert default_depth(5) == 2

    def test_single_point(self):
        h = histogramize(np.array([[0.1]]), max_ring=4, depth=10)
        for level in range(11):
            ids, m = h.level(0, level)
            assert ids.size == 1 and m[0] == 1.0
        assert h.ring_mass[0] == 1.0
        assert h.overflow_mass == 0.0

    def test_uniform_level_masses(self):
        n = 20_000
        x = np.random.default_rng(0).uniform(-1, 1, size=(n, 1))
        h = histogramize(x, max_ring=2, depth=4)
        for level in range(5):
            ids, m = h.level(0, level)
            cells = 2**level
            assert ids.size == cells
            p = 1.0 / cells
            assert np.max(np.abs(m - p)) <= 3 * math.sqrt(p * (1 - p) / n) + 1e-12

    def test_doubled_point_equals_double_mass(self):
        a = histogramize(np.array([[0.3, -0.2], [0.3, -0.2]]), max_ring=3, depth=5)
        b = histogramize(np.array([[0.3, -0.2]]), max_ring=3, depth=5)
        assert a.cells.keys() == b.cells.keys()
        for key in a.cells:
            np.testing.assert_array_equal(a.cells[key][0], b.cells[key][0])
            np.testing.assert_allclose(a.cells[key][1], b.cells[key][1])

    @settings(max_examples=40)
    @given(st.integers(1, 3).flatmap(
        lambda d: arrays(np.float64, st.tuples(st.integers(1, 30), st.just(d)), elements=coords)))
    def test_nesting_and_mass_conservation(self, pts):
        d = pts.shape[1]
        depth = min(4, 20 // d)
        h = histogramize(pts, max_ring=4, depth=depth)
        assert h.overflow_mass + h.ring_mass.sum() == pytest.approx(1.0)
        masses, over = ring_masses(pts, 4)
        np.testing.assert_allclose(h.ring_mass, masses, atol=1e-12)
        assert h.overflow_mass == pytest.approx(over)
        for n in range(5):
            for level in range(depth):
                pids, pm = h.level(n, level)
                cids, cm = h.level(n, level + 1)
                parents = cids >> d
                for pid, mass in zip(pids, pm):
                    assert cm[parents == pid].sum() == pytest.approx(mass)
                assert pm.sum() == pytest.approx(h.ring_mass[n])
                assert np.all(cids < 2 ** (d * (level + 1)))

    def test_errors(self):
        with pytest.raises(InvalidArgument):
            histogramize(np.array([[np.nan]]))
        with pytest.raises(InvalidArgument):
            histogramize(np.zeros((2, 3)), depth=7)

    def test_gaussian_histogram_matches_sampling(self):
        exact = gaussian_histogram([0.0], [1.0], max_ring=4, depth=5)
        x = np.random.default_rng(1).standard_normal((200_000, 1))
        emp = histogramize(x, max_ring=4, depth=5)
        s = fg_multiscale_sum(exact, emp, 1.0).value
        assert s < 0.1
        assert exact.ring_mass.sum() + exact.overflow_mass == pytest.approx(1.0, abs=1e-12)
        assert exact.moment(2) >= 1.0 - 1e-12


class TestMultiscaleSum:
    def test_identical_is_zero(self):
        h = histogramize(np.random.default_rng(2).normal(size=(50, 2)), 6, 4)
        assert fg_multiscale_sum(h, h, 1.0).value == 0.0

    def test_dirac_pair(self):
        h1 = histogramize(np.array([[0.0]]), max_ring=3, depth=10)
        h2 = histogramize(np.array([[0.5]]), max_ring=3, depth=10)
        s = fg_multiscale_sum(h1, h2, 1.0)
        assert s.value == 1.998046875
        assert s.value == sum(2.0**-k * 2 for k in range(1, 11))
        assert s.upper >= s.value

    @settings(max_examples=30)
    @given(cloud(8), cloud(8), st.sampled_from([1.0, 2.0]))
    def test_symmetry(self, x, y, p):
        h1, h2 = histogramize(x, 7, 6), histogramize(y, 7, 6)
        assert fg_multiscale_sum(h1, h2, p).value == pytest.approx(fg_multiscale_sum(h2, h1, p).value, rel=1e-12)

    @settings(max_examples=30)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 2), st.sampled_from([1.0, 1.5, 2.0]))
    def test_scaling_by_two(self, seed, d, p):
        rng = np.random.default_rng(seed)
        def away_from_unit_ball(n):
            x = rng.uniform(-30, 30, size=(n, d))
            return x[np.max(np.abs(x), axis=1) > 1.0]
        x, y = away_from_unit_ball(10), away_from_unit_ball(10)
        if len(x) == 0 or len(y) == 0:
            return
        depth = 12 // d
        s = fg_multiscale_sum(histogramize(x, 7, depth), histogramize(y, 7, depth), p).value
        s2 = fg_multiscale_sum(histogramize(2 * x, 7, depth), histogramize(2 * y, 7, depth), p).value
        assert s2 == pytest.approx(2.0**p * s, rel=1e-12)

    def test_geometry_mismatch(self):
        a = histogramize(np.zeros((1, 1)), 3, 4)
        b = histogramize(np.zeros((1, 1)), 3, 5)
        with pytest.raises(InvalidArgument):
            fg_multiscale_sum(a, b, 1.0)

    def test_residuals_shrink_with_truncation(self):
        x = np.random.default_rng(3).normal(size=(100, 1))
        y = np.random.default_rng(4).normal(size=(100, 1))
        coarse = fg_multiscale_sum(histogramize(x, 4, 4), histogramize(y, 4, 4), 1.0)
        fine = fg_multiscale_sum(histogramize(x, 8, 10), histogramize(y, 8, 10), 1.0)
        assert fine.ring_residual < coarse.ring_residual
        assert fine.level_residual < coarse.level_residual


class TestExact1d:
    def test_equal_is_zero(self):
        x = np.random.default_rng(5).normal(size=11)
        assert wasserstein_1d_exact(x, x[::-1], 2) == 0.0

    @given(coords, coords, st.floats(1, 6))
    def test_diracs(self, a, b, p):
        assert wasserstein_1d_exact([a], [b], p) == pytest.approx(abs(a - b), rel=1e-12, abs=1e-12)

    def test_five_points_brute_force(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            x, y = rng.normal(size=5), rng.normal(size=5)
            for p in (1.0, 2.0, 3.5):
                assert abs(wasserstein_1d_exact(x, y, p) - brute_force(x, y, p)) < 1e-12

    def test_unequal_sizes_and_weights(self):
        # {0, 1} vs {0, 0.5, 1}: the middle third moves by 1/2 over mass 1/6 on each side
        assert wasserstein_1d_exact([0.0, 1.0], [0.0, 0.5, 1.0], 1) == pytest.approx(1 / 6)
        w = wasserstein_1d_exact([0.0, 1.0], [0.0, 1.0], 1, mu_weights=[0.25, 0.75], nu_weights=[0.5, 0.5])
        assert w == pytest.approx(0.25)

    @settings(max_examples=50)
    @given(cloud(6), cloud(6), cloud(6), st.sampled_from([1.0, 2.0, 3.0]))
    def test_metric_axioms(self, x, y, z, p):
        dxy = wasserstein_1d_exact(x, y, p)
        assert dxy == pytest.approx(wasserstein_1d_exact(y, x, p), rel=1e-12, abs=1e-12)
        assert dxy <= wasserstein_1d_exact(x, z, p) + wasserstein_1d_exact(z, y, p) + 1e-9

    def test_rejects_multivariate(self):
        with pytest.raises(InvalidArgument):
            wasserstein_1d_exact(np.zeros((3, 2)), np.zeros((3, 2)), 1)
        with pytest.raises(InvalidArgument):
            wasserstein_1d_exact([0.0], [1.0], 0.5)


class TestToLaw:
    class _NoClosedForm:
        def __init__(self, law):
            self.quantile = law.quantile
            self.cdf = law.cdf

    @pytest.mark.parametrize("n", [1, 2, 7, 40])
    def test_closed_form_matches_quadrature(self, n):
        law = Gaussian1D(0.3, 2.0)
        x = np.random.default_rng(n).normal(size=n)
        closed = wasserstein_1d_to_law(x, law, 1)
        generic = wasserstein_1d_to_law(x, self._NoClosedForm(law), 1)
        assert closed == pytest.approx(generic, rel=1e-7)

    def test_p2_against_direct_integral(self):
        law = Gaussian1D(0.0, 1.0)
        x = np.sort(np.random.default_rng(8).normal(size=9))
        total = 0.0
        for k in range(9):
            v, _ = integrate.quad(lambda u: (x[k] - norm.ppf(u)) ** 2, k / 9, (k + 1) / 9, limit=200)
            total += v
        assert wasserstein_1d_to_law(x, law, 2) == pytest.approx(math.sqrt(total), rel=1e-8)

    def test_dirac_at_mean(self):
        # W_1(delta_0, N(0, 1)) = E|Z| = sqrt(2 / pi)
        assert wasserstein_1d_to_law([0.0], Gaussian1D(0.0, 1.0), 1) == pytest.approx(math.sqrt(2 / math.pi))


class TestExactSmall:
    def test_identical(self):
        x = np.random.default_rng(9).normal(size=(6, 2))
        assert wasserstein_exact_small(x, x[::-1], 2) == 0.0

    def test_two_points(self):
        x = np.array([[0.0, 0.0], [1.0, 0.0]])
        y = np.array([[0.0, 1.0], [3.0, 0.0]])
        c1 = (1.0 + 2.0) / 2
        c2 = (math.sqrt(10) + math.sqrt(2)) / 2
        assert wasserstein_exact_small(x, y, 1) == pytest.approx(min(c1, c2))

    @settings(max_examples=20, deadline=None)
    @given(cloud(5, 2), cloud(5, 2), cloud(5, 2), st.sampled_from([1.0, 2.0]))
    def test_metric_axioms(self, x, y, z, p):
        dxy = wasserstein_exact_small(x, y, p)
        assert dxy == pytest.approx(wasserstein_exact_small(y, x, p), rel=1e-12, abs=1e-12)
        assert dxy <= wasserstein_exact_small(x, z, p) + wasserstein_exact_small(z, y, p) + 1e-9

    def test_errors(self):
        with pytest.raises(InvalidArgument):
            wasserstein_exact_small(np.zeros((3, 1)), np.zeros((4, 1)))
        with pytest.raises(InvalidArgument):
            wasserstein_exact_small(np.zeros((65, 1)), np.zeros((65, 1)))


class TestLt:
    def test_dirac_case_bound_for_large_p(self):
        for t in (1.0, 10.0, 1e4, 1e8):
            for u in (1e-6, 0.01, 0.5, 1.0):
                v = lt_function(u, t, 2.0, 0.25, 1)
                assert v.regime == "p>d(1-beta)"
                assert v.series <= u ** 2 / (1 - 2.0**-2) * (1 + 1e-12)

    def test_critical_case_tipping_at_zero(self):
        p, beta, d = 0.75, 0.25, 1
        for t in (1.0, 3.0, 100.0):
            u = 0.9 * t ** (-beta / (1 - beta))
            v = lt_function(u, t, p, beta, d)
            assert v.regime == "p=d(1-beta)"
            assert v.tipping_level == 0
            assert v.series <= u ** (1 / (2 * beta)) / (1 - 2.0**-p) * (1 + 1e-12)

    def test_series_matches_brute_sum(self):
        for u, t, p, beta, d in [(0.3, 50.0, 1.0, 0.5, 3), (0.9, 2.0, 0.4, 0.25, 2), (1e-3, 1e6, 3.0, 0.1, 1)]:
            ls = np.arange(400)
            brute = np.sum(2.0 ** (-p * ls) * np.minimum(u ** (1 / (2 * beta)), math.sqrt(u / t) * 2.0 ** (d * ls * (1 - beta))))
            assert lt_function(u, t, p, beta, d).series == pytest.approx(brute, rel=1e-12)

    @given(st.floats(1e-6, 1.0), st.floats(1.0, 1e8), st.floats(1.0, 1e8),
           st.floats(0.2, 4.0), st.floats(0.05, 0.5), st.integers(1, 4))
    def test_nonincreasing_in_t(self, u, t1, t2, p, beta, d):
        lo, hi = sorted((t1, t2))
        assert lt_function(u, hi, p, beta, d).series <= lt_function(u, lo, p, beta, d).series * (1 + 1e-12)

    @given(st.floats(1e-6, 1.0), st.floats(1e-6, 1.0), st.floats(1.0, 1e8),
           st.floats(0.2, 4.0), st.floats(0.05, 0.5), st.integers(1, 4))
    def test_nondecreasing_in_u(self, u1, u2, t, p, beta, d):
        lo, hi = sorted((u1, u2))
        assert lt_function(lo, t, p, beta, d).series <= lt_function(hi, t, p, beta, d).series * (1 + 1e-12)

    def test_invalid(self):
        with pytest.raises(InvalidArgument):
            lt_function(0.0, 1.0, 1.0, 0.5, 1)
        with pytest.raises(InvalidArgument):
            lt_function(0.5, 0.5, 1.0, 0.5, 1)
        with pytest.raises(InvalidArgument):
            lt_function(0.5, 1.0, 1.0, 0.6, 1)


class TestHistogramSerialization:
    def test_round_trip(self, tmp_path):
        x = np.random.default_rng(10).normal(scale=3, size=(40, 2))
        h = histogramize(x, max_ring=2, depth=5)
        dest = tmp_path / "h.csv"
        save_histogram(h, dest)
        back = load_histogram(dest)
        assert back.geometry() == h.geometry()
        assert back.overflow_mass == h.overflow_mass
        np.testing.assert_allclose(back.ring_mass, h.ring_mass, atol=1e-15)
        for key in h.cells:
            np.testing.assert_array_equal(back.cells[key][0], h.cells[key][0])
            np.testing.assert_array_equal(back.cells[key][1], h.cells[key][1])
        other = histogramize(np.zeros((1, 2)), 2, 5)
        assert fg_multiscale_sum(back, other, 1.0).value == fg_multiscale_sum(h, other, 1.0).value
