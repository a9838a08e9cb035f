import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ergowass.covariance import (
    BivariateGaussianSpec,
    catalog_apply,
    catalog_variance,
    empirical_autocovariance,
    euler_fou_variance,
    fou_covariance_asymptotic,
    hermite_bound,
    lemma_rows,
    mc_covariance,
    orthant_covariance,
    parse_tag,
    stationary_fou_paths,
    variance_decay_check,
    write_lemma_report,
)
from ergowass.errors import InvalidArgument, OutOfDomain
from ergowass.targets import fou_variance

TAGS = ("identity", "indicator:0", "indicator:0.5", "clipped:1")


class TestCatalog:
    def test_parse(self):
        assert parse_tag("identity") == ("identity", None)
        assert parse_tag("indicator:-0.5") == ("indicator", -0.5)
        assert parse_tag("clipped:2") == ("clipped", 2.0)
        for bad in ("square", "identity:1", "clipped:0"):
            with pytest.raises(InvalidArgument):
                parse_tag(bad)

    @pytest.mark.parametrize("tag", TAGS + ("clipped:0.3", "indicator:-1"))
    @pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
    def test_exact_variance_against_sampling(self, tag, sigma):
        x = sigma * np.random.default_rng(0).standard_normal(400_000)
        v = catalog_apply(tag, x)
        var = v.var(ddof=1)
        se = math.sqrt(np.mean((v - v.mean()) ** 4) / v.size)
        assert abs(var - catalog_variance(tag, sigma)) < 4 * se


class TestHermiteBound:
    def test_zero_covariance(self):
        assert hermite_bound(BivariateGaussianSpec(1.0, 0.0), 1.0, 1.0) == 0.0

    def test_identity_has_slack_two(self):
        spec = BivariateGaussianSpec(1.0, 0.3)
        assert hermite_bound(spec, 1.0, 1.0) == pytest.approx(0.6)

    def test_orthant_example(self):
        # arcsin(0.4) / (2 pi) evaluated independently to ten digits
        assert orthant_covariance(0.4) == pytest.approx(0.0654949402, abs=1e-10)
        spec = BivariateGaussianSpec(1.0, 0.4)
        assert hermite_bound(spec, 0.25, 0.25) == pytest.approx(0.2)
        assert orthant_covariance(0.4) <= hermite_bound(spec, 0.25, 0.25)

    def test_out_of_domain(self):
        spec = BivariateGaussianSpec(1.0, 0.6)
        assert not spec.lemma_applies()
        with pytest.raises(OutOfDomain):
            hermite_bound(spec, 1.0, 1.0)
        with pytest.raises(InvalidArgument):
            BivariateGaussianSpec(1.0, 1.5)

    @given(st.floats(-0.5, 0.5), st.floats(0, 10), st.floats(0, 10))
    def test_scaling_reduction(self, rho, vf, vg):
        unit = hermite_bound(BivariateGaussianSpec(1.0, rho), vf, vg)
        scaled = hermite_bound(BivariateGaussianSpec(2.0, 4.0 * rho), vf, vg)
        assert scaled == pytest.approx(unit, rel=1e-12, abs=1e-15)


class TestMonteCarlo:
    @pytest.mark.parametrize("f", TAGS)
    @pytest.mark.parametrize("g", TAGS)
    def test_independent_pair(self, f, g):
        # one independent stream per pair so the 16 checks are not one draw reused
        seed = [1, TAGS.index(f), TAGS.index(g)]
        est, se = mc_covariance(BivariateGaussianSpec(1.0, 0.0), f, g, 50_000, seed=seed)
        assert abs(est) < 3 * se

    def test_identity(self):
        est, se = mc_covariance(BivariateGaussianSpec(1.0, 0.3), "identity", "identity", 100_000, seed=2)
        assert abs(est - 0.3) < 3 * se

    def test_orthant(self):
        est, se = mc_covariance(BivariateGaussianSpec(1.0, 0.4), "indicator:0", "indicator:0", 200_000, seed=3)
        assert abs(est - orthant_covariance(0.4)) < 3 * se

    def test_jackknife_matches_brute_force(self):
        spec = BivariateGaussianSpec(1.3, 0.5)
        n = 40
        est, se = mc_covariance(spec, "clipped:1", "indicator:0.5", n, seed=4)
        rng = np.random.default_rng(4)
        z = rng.standard_normal((2, n))
        r = spec.correlation
        u = 1.3 * z[0]
        v = 1.3 * (r * z[0] + math.sqrt(1 - r * r) * z[1])
        a, b = catalog_apply("clipped:1", u), catalog_apply("indicator:0.5", v)
        assert est == pytest.approx(np.cov(a, b)[0, 1], rel=1e-12)
        loo = np.array([np.cov(np.delete(a, i), np.delete(b, i))[0, 1] for i in range(n)])
        brute = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
        assert se == pytest.approx(brute, rel=1e-9)


class TestLemmaGrid:
    def test_rows_all_pass(self):
        rows = lemma_rows(rhos=(-0.5, -0.3, -0.1, 0.1, 0.3, 0.5), samples=50_000, seed=5)
        assert len(rows) == 6 * 16
        assert all(r[-1] for r in rows)

    def test_report_csv(self):
        rows = lemma_rows(rhos=(0.1,), tags=("identity",), samples=1000, seed=6)
        buf = io.StringIO()
        write_lemma_report(rows, buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "f,g,rho,estimate,se,bound,pass"
        assert len(lines) == 2


class TestFouCovariance:
    def test_substitution_example(self):
        assert fou_covariance_asymptotic(1.0, 1.0, 0.75, 16.0) == pytest.approx(0.09375)

    def test_vanishes_at_half(self):
        vals = [fou_covariance_asymptotic(1.0, 1.0, 0.5 + e, 4.0) for e in (1e-1, 1e-3, 1e-6)]
        assert vals[-1] < 1e-5 and vals[0] > vals[1] > vals[2]
        with pytest.raises(OutOfDomain):
            fou_covariance_asymptotic(1.0, 1.0, 0.5, 4.0)
        with pytest.raises(InvalidArgument):
            fou_covariance_asymptotic(1.0, 1.0, 0.7, 0.5)

    @given(st.floats(0.51, 0.99), st.floats(1, 1e3), st.floats(1, 1e3), st.floats(0.1, 3), st.floats(0.1, 3))
    def test_monotone(self, h, t1, t2, s1, s2):
        lo, hi = sorted((t1, t2))
        assert fou_covariance_asymptotic(1.0, 1.0, h, hi) <= fou_covariance_asymptotic(1.0, 1.0, h, lo)
        slo, shi = sorted((s1, s2))
        assert fou_covariance_asymptotic(1.0, slo, h, 5.0) <= fou_covariance_asymptotic(1.0, shi, h, 5.0)

    def test_euler_variance_limit(self):
        for h in (0.3, 0.5, 0.75):
            assert euler_fou_variance(1.0, 1.0, h, 2.0**-12) == pytest.approx(fou_variance(1.0, 1.0, h), rel=2e-3)
        assert euler_fou_variance(1.0, 1.0, 0.5, 0.1) == pytest.approx(0.1 / (1 - 0.9**2))

    def test_simulated_covariance(self):
        dt = 2.0**-3
        _, states = stationary_fou_paths(1.0, 1.0, 0.75, 2.0**13, dt, 256, seed=7)
        taus = np.array([10.0, 30.0, 100.0])
        emp = empirical_autocovariance(states, np.rint(taus / dt).astype(int))
        theory = np.array([fou_covariance_asymptotic(1.0, 1.0, 0.75, t) for t in taus])
        assert np.all(np.abs(emp / theory - 1.0) < 0.15)


class TestVarianceDecay:
    def test_whole_line_is_zero(self):
        rep = variance_decay_check(hurst=0.75, thresholds=(math.inf,), times=[8.0, 16.0, 32.0],
                                   replications=4, seed=0, dt=2.0**-3)
        assert np.all(rep.msd[math.inf] == 0.0)
        assert rep.passed[math.inf]

    def test_report_shape(self):
        rep = variance_decay_check(hurst=0.5, thresholds=(0.0, 1.0), times=[16.0, 32.0, 64.0],
                                   replications=8, seed=1, dt=2.0**-3)
        assert set(rep.exponents) == {0.0, 1.0}
        assert rep.target_exponent == 1.0
        assert rep.msd[0.0].shape == (3,)

    def test_invalid_grid(self):
        with pytest.raises(InvalidArgument):
            variance_decay_check(times=[4.0, 2.0], replications=4)
