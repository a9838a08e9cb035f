"""Exit criteria, each run at its stated tolerance; one summary line per criterion."""

import itertools
import math
import os

import numpy as np
import pytest

from _golden import evaluate, expected, load_rows
from ergowass.covariance import (
    BivariateGaussianSpec,
    lemma_rows,
    mc_covariance,
    orthant_covariance,
    variance_decay_check,
)
from ergowass.harness import load_config, run_experiment
from ergowass.noise import (
    FbmSpec,
    embedded_autocovariance,
    fbm_covariance,
    fgn_autocovariance,
    sample_fbm,
)
from ergowass.rates import RegimeInput, abstract_rate, limit_rate_wp
from ergowass.wasserstein import (
    fg_multiscale_sum,
    histogramize,
    lt_function,
    wasserstein_1d_exact,
    wasserstein_exact_small,
)

pytestmark = pytest.mark.acceptance

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")


def run_config(name):
    return run_experiment(load_config(os.path.join(CONFIGS, name)))


def test_criterion_01_stationary_ou(acceptance_record):
    res = run_config("ou_1d.ini")
    slope = res.fit.slope
    ok = -0.6 <= slope <= -0.4 and res.verdict.passed
    acceptance_record(1, "1D OU W1 slope in [-0.6, -0.4]", ok, f"slope {slope:.4f}")
    assert ok


def test_criterion_02_three_dimensional_ou(acceptance_record):
    res = run_config("ou_3d.ini")
    slope = res.fit.slope
    ok = slope <= -0.25 and res.verdict.passed
    acceptance_record(2, "3D OU multiscale slope <= -0.25", ok, f"slope {slope:.4f}")
    assert ok


def test_criterion_03_fractional_ou(acceptance_record):
    hi = run_config("fou_h75.ini").fit.slope
    lo = run_config("fou_h25.ini").fit.slope
    ok = hi <= -0.17 and lo <= -0.4
    acceptance_record(3, "fOU slopes (H=0.75 <= -0.17, H=0.25 <= -0.4)", ok,
                      f"H=0.75 slope {hi:.4f}, H=0.25 slope {lo:.4f}")
    assert ok


def test_criterion_04_variance_decay(acceptance_record):
    times = 2.0 ** np.arange(6, 14)
    parts, ok = [], True
    for h in (0.3, 0.75):
        rep = variance_decay_check(hurst=h, thresholds=(-1.0, 1.0), times=times,
                                   replications=256, seed=0, dt=0.125, tolerance=0.15)
        ok = ok and rep.all_pass
        parts.append(f"H={h}: " + ", ".join(f"{e:.3f}" for e in rep.exponents.values())
                     + f" vs {rep.target_exponent:.2f}")
    acceptance_record(4, "half-line variance decay within 0.15", ok, "; ".join(parts))
    assert ok


def _assignment_brute_force(x, y, p):
    n = len(x)
    best = math.inf
    for perm in itertools.permutations(range(n)):
        best = min(best, sum(abs(x[i] - y[j]) ** p for i, j in enumerate(perm)) / n)
    return best ** (1.0 / p)


def test_criterion_05_exact_oracles(acceptance_record):
    rng = np.random.default_rng(5)
    worst_1d = 0.0
    for k in range(500):
        p = (1.0, 2.0, 3.0)[k % 3]
        x, y = rng.normal(size=5), rng.normal(size=5)
        worst_1d = max(worst_1d, abs(wasserstein_1d_exact(x, y, p) - _assignment_brute_force(x, y, p)))
    perms = np.array(list(itertools.permutations(range(8))))
    worst_2d = 0.0
    for k in range(100):
        p = (1.0, 2.0)[k % 2]
        x, y = rng.normal(size=(8, 2)), rng.normal(size=(8, 2))
        cost = np.linalg.norm(x[:, None, :] - y[None, :, :], axis=2) ** p
        exhaustive = cost[np.arange(8), perms].sum(axis=1).min() / 8
        worst_2d = max(worst_2d, abs(wasserstein_exact_small(x, y, p) - exhaustive ** (1.0 / p)))
    ok = worst_1d <= 1e-12 and worst_2d <= 1e-12
    acceptance_record(5, "exact solvers match brute force", ok,
                      f"max gap 1D {worst_1d:.1e}, 2D {worst_2d:.1e}")
    assert ok


def test_criterion_06_multiscale_dominance(acceptance_record):
    p = 1.0
    parts, ok = [], True
    for d in (1, 2):
        rng = np.random.default_rng([0, d])
        ratios = []
        for _ in range(100):
            x, y = rng.standard_normal((32, d)), rng.standard_normal((32, d))
            hx, hy = histogramize(x), histogramize(y)
            assert fg_multiscale_sum(hx, hx, p).value == 0.0
            w = wasserstein_1d_exact(x, y, p) ** p if d == 1 else wasserstein_exact_small(x, y, p) ** p
            ratios.append(w / fg_multiscale_sum(hx, hy, p).value)
        ratios = np.array(ratios)
        k_hat = ratios[:50].max()
        held = ratios[50:].max()
        ok = ok and held <= 1.05 * k_hat
        parts.append(f"d={d}: calibrated {k_hat:.4f}, held-out max {held:.4f}")
    acceptance_record(6, "held-out ratio within 1.05 of calibrated constant", ok, "; ".join(parts))
    assert ok


def test_criterion_07_fbm_exactness(acceptance_record):
    n_samples = 100_000
    parts, ok = [], True
    for h in (0.25, 0.5, 0.75):
        exact = all(
            np.allclose(embedded_autocovariance(h, n), fgn_autocovariance(n, h), rtol=0, atol=1e-12)
            for n in (2, 16, 256, 4096)
        )
        spec = FbmSpec(h, 1.0, 4)
        x = sample_fbm(spec, dim=n_samples, seed=[7, int(h * 100)]).values[1:]
        t = spec.dt * np.arange(1, 5)
        target = fbm_covariance(t[:, None], t[None, :], h)
        worst = 0.0
        for i in range(4):
            for j in range(i, 4):
                prod = x[i] * x[j]
                se = prod.std(ddof=1) / math.sqrt(n_samples)
                worst = max(worst, abs(prod.mean() - target[i, j]) / se)
        ok = ok and exact and worst < 3.0
        parts.append(f"H={h}: construction {'exact' if exact else 'MISMATCH'}, worst {worst:.2f} SE")
    acceptance_record(7, "fBm covariance exact and within 3 SE", ok, "; ".join(parts))
    assert ok


def test_criterion_08_covariance_lemma(acceptance_record):
    rows = lemma_rows(rhos=(-0.5, -0.3, -0.1, 0.1, 0.3, 0.5), samples=200_000, seed=8)
    grid_ok = all(r[-1] for r in rows)
    est, se = mc_covariance(BivariateGaussianSpec(1.0, 0.4), "indicator:0", "indicator:0", 200_000, seed=80)
    orthant = orthant_covariance(0.4)
    orth_ok = abs(est - orthant) < 3 * se
    worst = max(abs(r[3]) / r[5] for r in rows if r[5] > 0)
    ok = grid_ok and orth_ok
    acceptance_record(8, "Hermite bound grid and orthant case", ok,
                      f"{sum(r[-1] for r in rows)}/{len(rows)} rows, worst |cov|/bound {worst:.3f}, "
                      f"orthant {est:.5f} vs {orthant:.5f} (se {se:.1e})")
    assert ok


def test_criterion_09_rate_tables(acceptance_record):
    rows = load_rows()
    mismatches = []
    for row in rows:
        exp, log, boundary = expected(row)
        got, got_log, got_boundary = evaluate(row)
        if not (abs(got - exp) <= 1e-12 and bool(got_log) == log and bool(got_boundary) == boundary):
            mismatches.append(row["function"])
    monotone = True
    for p, d, beta, gamma in [(1, 3, .5, .5), (1, 1, .5, .5), (2, 10, .5, .5), (3, 2, .4, .4), (0.5, 2, .25, .4)]:
        lim = limit_rate_wp(p, d, beta, gamma).exponent
        gaps = [abs(abstract_rate(RegimeInput(p, q, d, beta, gamma)).exponent / p - lim) for q in (1e2, 1e4, 1e6)]
        monotone = monotone and gaps[0] >= gaps[1] >= gaps[2] and gaps[2] < 1e-5
    ok = len(rows) == 60 and not mismatches and monotone
    acceptance_record(9, "rate golden file and large-q consistency", ok,
                      f"{len(rows) - len(mismatches)}/{len(rows)} rows, large-q {'ok' if monotone else 'FAIL'}")
    assert ok


def test_criterion_10_lt_ratio(acceptance_record):
    regimes = {"p>d(1-beta)": (2.0, 0.25, 1), "p=d(1-beta)": (0.75, 0.25, 1), "p<d(1-beta)": (1.0, 0.5, 3)}
    us = np.logspace(-6, 0, 20)
    ts = np.logspace(0, 8, 20)
    parts, ok = [], True
    for name, (p, beta, d) in regimes.items():
        vals = [lt_function(u, t, p, beta, d) for u in us for t in ts]
        assert all(v.regime == name for v in vals)
        worst = max(v.ratio for v in vals)
        ok = ok and worst <= vals[0].constant
        parts.append(f"{name}: max ratio {worst:.3f} <= {vals[0].constant:.3f}")
    acceptance_record(10, "L_t series over case bound bounded", ok, "; ".join(parts))
    assert ok
