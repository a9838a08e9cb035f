"""Gaussian covariance bound checks and fractional OU covariance diagnostics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import InvalidArgument, OutOfDomain
from .noise import FbmSpec, fgn_autocovariance, sample_fbm
from .rates import fit_rate
from .sde import ConstantDiffusion, LinearDrift, integrate_batch

__all__ = [
    "BivariateGaussianSpec",
    "parse_tag",
    "catalog_apply",
    "catalog_variance",
    "hermite_bound",
    "mc_covariance",
    "orthant_covariance",
    "lemma_rows",
    "write_lemma_report",
    "fou_covariance_asymptotic",
    "euler_fou_variance",
    "stationary_fou_paths",
    "empirical_autocovariance",
    "VarianceDecayReport",
    "variance_decay_check",
]

CATALOG = ("identity", "indicator", "clipped")


@dataclass(frozen=True)
class BivariateGaussianSpec:
    """Centered pair (U, V) with equal standard deviations and covariance ``rho_cov``."""

    sigma_u: float
    rho_cov: float

    def __post_init__(self):
        if not self.sigma_u > 0:
            raise InvalidArgument("sigma_u must be positive")
        if abs(self.rho_cov) > self.sigma_u**2 * (1 + 1e-12):
            raise InvalidArgument("|rho_cov| cannot exceed sigma_u^2")

    @property
    def correlation(self):
        return self.rho_cov / self.sigma_u**2

    def lemma_applies(self):
        """Hypothesis of the bound, stated on the correlation: |rho_cov| / sigma_u^2 <= 1/2."""
        return abs(self.correlation) <= 0.5 + 1e-12


def parse_tag(tag):
    """Split a catalog tag ("identity", "indicator:a", "clipped:c") into (kind, parameter)."""
    kind, _, arg = str(tag).partition(":")
    if kind not in CATALOG:
        raise InvalidArgument(f"unknown function tag {tag!r}")
    if kind == "identity":
        if arg:
            raise InvalidArgument("identity takes no parameter")
        return kind, None
    value = float(arg) if arg else 0.0
    if kind == "clipped" and not value > 0:
        raise InvalidArgument("clipping level must be positive")
    return kind, value


def catalog_apply(tag, x):
    kind, a = parse_tag(tag)
    x = np.asarray(x, dtype=float)
    if kind == "identity":
        return x
    if kind == "indicator":
        return (x <= a).astype(float)
    return np.clip(x, -a, a)


def catalog_variance(tag, sigma):
    """Exact Var f(U) for U ~ N(0, sigma^2)."""
    kind, a = parse_tag(tag)
    if kind == "identity":
        return sigma**2
    if kind == "indicator":
        prob = float(ndtr(a / sigma))
        return prob * (1.0 - prob)
    z = a / sigma
    phi = math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    tail = 1.0 - float(ndtr(z))
    # E clip(U)^2; the mean is zero by symmetry
    return sigma**2 * (2.0 * float(ndtr(z)) - 1.0 - 2.0 * z * phi) + 2.0 * a * a * tail


def hermite_bound(spec: BivariateGaussianSpec, var_f, var_g):
    """2 sqrt(Var f(U) Var g(U)) sigma_U^-2 |Cov(U, V)|."""
    if var_f < 0 or var_g < 0:
        raise InvalidArgument("variances must be non-negative")
    if not spec.lemma_applies():
        raise OutOfDomain(
            f"Gaussian covariance lemma needs |correlation| <= 1/2, got {spec.correlation:.4g}"
        )
    return 2.0 * math.sqrt(var_f * var_g) * abs(spec.rho_cov) / spec.sigma_u**2


def orthant_covariance(rho):
    """Cov(1{U <= 0}, 1{V <= 0}) for unit-variance U, V with correlation rho."""
    return math.asin(rho) / (2.0 * math.pi)


def _draw_pair(spec, samples, seed):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((2, samples))
    r = spec.correlation
    u = spec.sigma_u * z[0]
    v = spec.sigma_u * (r * z[0] + math.sqrt(max(0.0, 1.0 - r * r)) * z[1])
    return u, v


def mc_covariance(spec, f, g, samples, seed=None):
    """Unbiased estimate of Cov(f(U), g(V)) and its jackknife standard error."""
    if samples < 3:
        raise InvalidArgument("need at least 3 samples")
    u, v = _draw_pair(spec, samples, seed)
    a = catalog_apply(f, u)
    b = catalog_apply(g, v)
    a = a - a.mean()
    b = b - b.mean()
    n = samples
    s = float(np.dot(a, b))
    estimate = s / (n - 1)
    # leave-one-out estimates have the closed form (S - a_i b_i n / (n - 1)) / (n - 2)
    loo = (s - a * b * n / (n - 1)) / (n - 2)
    se = math.sqrt((n - 1) / n * float(np.sum((loo - loo.mean()) ** 2)))
    return estimate, se


def lemma_rows(sigma=1.0, rhos=(-0.5, -0.3, -0.1, 0.1, 0.3, 0.5), tags=None, samples=200_000, seed=0):
    """Rows (f, g, rho, estimate, se, bound, pass) over the catalog and correlation grid.

    ``pass`` holds when |estimate| - 3 se does not exceed the bound.
    """
    tags = tags or ("identity", "indicator:0", "indicator:0.5", "clipped:1")
    ss = np.random.SeedSequence(seed)
    rows = []
    combos = [(f, g, rho) for rho in rhos for f in tags for g in tags]
    for (f, g, rho), child in zip(combos, ss.spawn(len(combos))):
        spec = BivariateGaussianSpec(sigma, rho * sigma**2)
        est, se = mc_covariance(spec, f, g, samples, child)
        bound = hermite_bound(spec, catalog_variance(f, sigma), catalog_variance(g, sigma))
        rows.append((f, g, rho, est, se, bound, abs(est) - 3 * se <= bound))
    return rows


def write_lemma_report(rows, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["f", "g", "rho", "estimate", "se", "bound", "pass"])
    for f, g, rho, est, se, bound, ok in rows:
        writer.writerow([f, g, repr(rho), repr(est), repr(se), repr(bound), int(ok)])


# --------------------------------------------------------------------------- #
# Fractional OU


def fou_covariance_asymptotic(lam, sigma, hurst, tau):
    """Leading term sigma^2 H (2H - 1) lam^-2 tau^(2H - 2) of Cov(Y_s, Y_{s+tau})."""
    if not 0.5 < hurst < 1:
        raise OutOfDomain("the covariance asymptotic needs hurst in (1/2, 1)")
    if not tau >= 1:
        raise InvalidArgument("tau must be >= 1")
    if not lam > 0 or not sigma > 0:
        raise InvalidArgument("lambda and sigma must be positive")
    return sigma**2 * hurst * (2 * hurst - 1) / lam**2 * tau ** (2 * hurst - 2)


def euler_fou_variance(lam, sigma, hurst, dt, tol=1e-14):
    """Stationary variance of X_{k+1} = (1 - lam dt) X_k + sigma (B^H_{(k+1)dt} - B^H_{k dt}).

    Equals sigma^2 dt^(2H) (g_0 + 2 sum_k a^k g_k) / (1 - a^2) with a = 1 - lam dt
    and g the unit fractional Gaussian noise autocovariance; tends to
    sigma^2 lam^(-2H) H Gamma(2H) as dt -> 0.
    """
    a = 1.0 - lam * dt
    if not 0 < a < 1:
        raise InvalidArgument("need 0 < lam * dt < 1")
    n = int(math.ceil(math.log(tol) / math.log(a))) + 1
    g = fgn_autocovariance(n, hurst)
    s = g[0] + 2.0 * float(np.sum(g[1:n] * a ** np.arange(1, n)))
    return sigma**2 * dt ** (2 * hurst) * s / (1.0 - a * a)


def stationary_fou_paths(lam, sigma, hurst, horizon, dt, replications, seed, burn_in=16.0):
    """Euler fOU paths started from the discrete stationary variance and burnt in.

    Returns (times, states) with ``states`` of shape (steps + 1, replications)
    covering [0, horizon] after the discarded burn-in.
    """
    steps = int(round((horizon + burn_in) / dt))
    keep = int(round(horizon / dt))
    ss = np.random.SeedSequence(seed)
    init_seed, noise_seed = ss.spawn(2)
    var = euler_fou_variance(lam, sigma, hurst, dt)
    x0 = math.sqrt(var) * np.random.default_rng(init_seed).standard_normal((replications, 1))
    noise = sample_fbm(FbmSpec(hurst, steps * dt, steps), dim=replications, seed=noise_seed)
    inc = noise.increments.reshape(steps, replications, 1)
    path = integrate_batch(
        LinearDrift(lam), ConstantDiffusion.scalar(sigma), x0, inc, dt, record=True
    )
    states = path[steps - keep :, :, 0]
    return dt * np.arange(keep + 1), states


def empirical_autocovariance(states, lags):
    """Mean of Y_s Y_{s+lag} over time and replications (the mean is known to be 0)."""
    states = np.asarray(states, dtype=float)
    out = []
    for k in lags:
        out.append(float(np.mean(states[: states.shape[0] - k] * states[k:])))
    return np.array(out)


@dataclass
class VarianceDecayReport:
    """E|nu_t(A) - nu(A)|^2 per half-line A = (-inf, a] and fitted decay exponents."""

    hurst: float
    times: np.ndarray
    thresholds: list
    msd: dict
    se: dict
    exponents: dict
    target_exponent: float
    tolerance: float
    passed: dict = field(default_factory=dict)

    @property
    def all_pass(self):
        return all(self.passed.values())


def variance_decay_check(
    lam=1.0, sigma=1.0, hurst=0.75, thresholds=(0.0,), times=None, replications=64, seed=0,
    dt=2.0**-6, burn_in=16.0, tolerance=0.15,
) -> VarianceDecayReport:
    """Estimate the decay of E|nu_t(A) - nu(A)|^2 for a stationary fractional OU process.

    ``thresholds`` are the right ends a of the half-lines, in units of the
    stationary standard deviation; ``math.inf`` gives the whole line. The
    reference nu is the stationary law of the simulated Euler chain, so the
    time-discretization bias does not masquerade as a decay floor.
    """
    if replications < 2:
        raise InvalidArgument("need at least 2 replications")
    times = np.asarray(times if times is not None else 2.0 ** np.arange(4, 11), dtype=float)
    if np.any(np.diff(times) <= 0):
        raise InvalidArgument("time grid must be strictly increasing")
    sd = math.sqrt(euler_fou_variance(lam, sigma, hurst, dt))
    _, states = stationary_fou_paths(lam, sigma, hurst, times[-1], dt, replications, seed, burn_in)
    counts = np.rint(times / dt).astype(int) + 1
    target = min(2.0 - 2.0 * hurst, 1.0)
    msd, se, exps, passed = {}, {}, {}, {}
    for a in thresholds:
        inside = states <= a * sd if math.isfinite(a) else np.ones_like(states, dtype=bool)
        nu_a = float(ndtr(a)) if math.isfinite(a) else 1.0
        running = np.cumsum(inside, axis=0)[counts - 1] / counts[:, None]
        err2 = (running - nu_a) ** 2
        m = err2.mean(axis=1)
        msd[a] = m
        se[a] = err2.std(axis=1, ddof=1) / math.sqrt(replications)
        if np.all(m > 0):
            fit = fit_rate(np.column_stack([times, m]))
            exps[a] = -fit.slope
            passed[a] = abs(exps[a] - target) <= tolerance
        else:
            exps[a] = None
            passed[a] = bool(np.all(m == 0))
    return VarianceDecayReport(
        hurst, times, list(thresholds), msd, se, exps, target, tolerance, passed
    )
