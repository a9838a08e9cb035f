"""Piecewise rate exponents and empirical power-law fits.

Every function returns a :class:`RateResult` whose ``exponent`` is the decay
exponent of t. ``quantity`` says what decays: ``"moment"`` for E W_p^p and
``"norm"`` for ||W_p||_p = (E W_p^p)^(1/p). Inputs sitting exactly on a case
boundary left open by the tables get the smaller neighbouring exponent with
``boundary=True`` and ``log_factor=True``.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import InvalidArgument

__all__ = [
    "RegimeInput",
    "RateResult",
    "abstract_rate",
    "limit_rate_wp",
    "poincare_rate",
    "nonmarkov_rate",
    "nonmarkov_shorthand",
    "d_thresholds",
    "fractional_rate",
    "fit_rate",
    "FitResult",
    "rate_table",
    "write_rate_table",
]

_TOL = 1e-12


def _eq(a, b):
    return math.isclose(a, b, rel_tol=_TOL, abs_tol=_TOL)


@dataclass(frozen=True)
class RegimeInput:
    p: float
    q: float
    d: int
    beta: float
    gamma: float

    def __post_init__(self):
        if not self.p > 0:
            raise InvalidArgument("p must be positive")
        if not self.q > self.p:
            raise InvalidArgument("q must exceed p")
        if int(self.d) != self.d or self.d < 1:
            raise InvalidArgument("d must be a positive integer")
        if not 0 < self.beta <= 0.5:
            raise InvalidArgument("beta must lie in (0, 1/2]")
        if not 0 < self.gamma <= 0.5:
            raise InvalidArgument("gamma must lie in (0, 1/2]")


@dataclass(frozen=True)
class RateResult:
    """Decay exponent of t with its qualifiers.

    ``strict`` marks exponents only attained up to an arbitrarily small loss;
    ``epsilon`` is the loss already subtracted from ``exponent``.
    ``log_power`` is the power of log(1 + t) multiplying the bound.
    """

    exponent: float
    log_factor: bool
    regime: str
    boundary: bool = False
    strict: bool = False
    epsilon: float = 0.0
    quantity: str = "moment"
    log_power: float = 0.0

    def __post_init__(self):
        if self.exponent < -_TOL:
            raise InvalidArgument(f"negative exponent {self.exponent}")

    def as_norm(self, p):
        """The matching ||W_p||_p exponent when ``quantity`` is the p-th moment."""
        if self.quantity == "norm":
            return self
        return RateResult(
            self.exponent / p, self.log_factor, self.regime, self.boundary,
            self.strict, self.epsilon / p, "norm", self.log_power / p,
        )

    def as_moment(self, p):
        if self.quantity == "moment":
            return self
        return RateResult(
            self.exponent * p, self.log_factor, self.regime, self.boundary,
            self.strict, self.epsilon * p, "moment", self.log_power * p,
        )

    def label(self):
        text = f"{self.exponent:.6g}"
        if self.strict and self.epsilon == 0:
            text += "-"
        if self.log_factor:
            text += " (log)"
        return text


def _boundary(candidates, regime):
    return RateResult(min(candidates), True, regime, boundary=True, log_power=1.0)


def abstract_rate(inp: RegimeInput) -> RateResult:
    """Exponent of E W_p^p under A(beta, q, gamma), three cases on p vs d(1 - beta)."""
    p, q, d, beta, gamma = inp.p, inp.q, inp.d, inp.beta, inp.gamma
    c = d * (1.0 - beta)
    r = p / q
    q_branch = gamma * (q - p) / (q * (1.0 - beta))
    if _eq(p, c):
        if _eq(r, beta):
            return _boundary([gamma, q_branch], "p=d(1-beta), p/q=beta")
        if r < beta:
            return RateResult(gamma, True, "p=d(1-beta), p/q<beta", log_power=1.0)
        return RateResult(q_branch, False, "p=d(1-beta), p/q>beta")
    if p < c:
        small = gamma * p / c
        threshold = d / (d + q)
        if _eq(r, threshold):
            return _boundary([small, q_branch], "p<d(1-beta), p/q=d/(d+q)")
        if r < threshold:
            return RateResult(small, False, "p<d(1-beta), small p/q")
        return RateResult(q_branch, False, "p<d(1-beta), large p/q")
    if _eq(r, beta):
        return _boundary([gamma, q_branch], "p>d(1-beta), p/q=beta")
    if r < beta:
        return RateResult(gamma, False, "p>d(1-beta), small p/q")
    return RateResult(q_branch, False, "p>d(1-beta), large p/q")


def limit_rate_wp(p, d, beta, gamma) -> RateResult:
    """Exponent of ||W_p||_p when q > p / beta."""
    RegimeInput(p, p / beta + 1.0, d, beta, gamma)
    c = d * (1.0 - beta)
    if _eq(p, c):
        return RateResult(gamma / p, True, "p=d(1-beta)", quantity="norm", log_power=1.0 / p)
    if p < c:
        return RateResult(gamma / c, False, "p<d(1-beta)", quantity="norm")
    return RateResult(gamma / p, False, "p>d(1-beta)", quantity="norm")


def poincare_rate(p, q, d) -> RateResult:
    """Exponent of E W_p^p in the stationary Markov case with a Poincare-type inequality."""
    res = abstract_rate(RegimeInput(p, q, d, 0.5, 0.5))
    regime = res.regime.replace("d(1-beta)", "d/2").replace("beta", "1/2")
    return RateResult(res.exponent, res.log_factor, regime, res.boundary, log_power=res.log_power)


def d_thresholds(d):
    """(d_minus, d_plus) = ((d + sqrt(d^2 + 8d)) / 4, (d + 1 + sqrt((d+1)^2 + 4d)) / 2)."""
    d_minus = (d + math.sqrt(d * d + 8.0 * d)) / 4.0
    d_plus = (d + 1.0 + math.sqrt((d + 1.0) ** 2 + 4.0 * d)) / 2.0
    return d_minus, d_plus


def nonmarkov_rate(p, q, d, gamma) -> RateResult:
    """Exponent of E W_p^p for processes with conditional TV decay, beta(q) = (1 - 1/q) / 2.

    Rows are selected by p against (d/2)(1 + 1/q). The first row has a gap
    dq/(d+q) <= p <= dq/(q+1) covered by neither indicator; inputs there are
    reported as boundary cases.
    """
    if not p > 0 or not q > max(p, 1.0):
        raise InvalidArgument("need p > 0 and q > max(p, 1)")
    if int(d) != d or d < 1:
        raise InvalidArgument("d must be a positive integer")
    if not 0 < gamma <= 0.5:
        raise InvalidArgument("gamma must lie in (0, 1/2]")
    pivot = 0.5 * d * (1.0 + 1.0 / q)
    small = 2.0 * gamma * p * q / ((q + 1.0) * d)
    q_branch = 2.0 * gamma * (q - p) / (q + 1.0)
    if _eq(p, pivot):
        d_minus, d_plus = d_thresholds(d)
        if _eq(q, d_plus):
            return _boundary([q_branch, gamma], "p=(d/2)(1+1/q), q=d_+")
        if q > d_plus:
            return RateResult(gamma, True, "p=(d/2)(1+1/q), q>d_+", log_power=1.0)
        return RateResult(q_branch, False, "p=(d/2)(1+1/q), d_-<q<d_+")
    if p < pivot:
        lo, hi = d * q / (d + q), d * q / (q + 1.0)
        if p < lo and not _eq(p, lo):
            return RateResult(small, False, "p<(d/2)(1+1/q), p<dq/(d+q)")
        if p > hi and not _eq(p, hi):
            return RateResult(q_branch, False, "p<(d/2)(1+1/q), p>dq/(q+1)")
        return _boundary([small, q_branch], "p<(d/2)(1+1/q), uncovered strip")
    split = 0.5 * (q - 1.0)
    if _eq(p, split):
        return _boundary([gamma, q_branch], "p>(d/2)(1+1/q), p=(q-1)/2")
    if p < split:
        return RateResult(gamma, False, "p>(d/2)(1+1/q), p<(q-1)/2")
    return RateResult(q_branch, False, "p>(d/2)(1+1/q), p>(q-1)/2")


def nonmarkov_shorthand(p, d, gamma, epsilon=0.0) -> RateResult:
    """||W_p||_p exponent 2 gamma (1/(2p) min (1/d)^-) when all moments are finite.

    The (1/d)^- term is returned as 2 gamma / d - epsilon with ``strict=True``.
    """
    if not p > 0 or epsilon < 0:
        raise InvalidArgument("need p > 0 and epsilon >= 0")
    if p > d / 2.0:
        return RateResult(gamma / p, False, "p>d/2", quantity="norm")
    return RateResult(
        max(2.0 * gamma / d - epsilon, 0.0), False, "p<=d/2", strict=True,
        epsilon=epsilon, quantity="norm",
    )


def fractional_rate(zeta=None, hurst=None, p=1.0, d=1, epsilon=0.0, fou=False) -> RateResult:
    """||W_p||_p exponent for additive SDEs driven by a moving-average Gaussian noise.

    Parameters
    ----------
    zeta : float, optional
        Tail exponent of the kernel (> 3/2). Ignored when ``hurst`` is given.
    hurst : float, optional
        Hurst index of a fractional Brownian driver; implies zeta = 5/2 - H.
    fou : bool
        Stationary one-dimensional fractional OU: exponent (1/p)(1/2 min (1 - H)), no loss.
    """
    if not p > 0 or epsilon < 0 or int(d) != d or d < 1:
        raise InvalidArgument("need p > 0, epsilon >= 0 and a positive integer d")
    if fou:
        if hurst is None or not 0 < hurst < 1:
            raise InvalidArgument("fractional OU needs hurst in (0, 1)")
        if d != 1:
            raise InvalidArgument("fractional OU rate is one-dimensional")
        return RateResult(min(0.5, 1.0 - hurst) / p, False, "fOU", quantity="norm")
    base = min(1.0 / (2.0 * p), 1.0 / d)
    if hurst is not None:
        if not 0 < hurst < 1:
            raise InvalidArgument("hurst must lie in (0, 1)")
        return RateResult(
            max((1.0 - hurst) * base - epsilon, 0.0), False, "fBm", strict=True,
            epsilon=epsilon, quantity="norm",
        )
    if zeta is None or not zeta > 1.5:
        raise InvalidArgument("zeta must exceed 3/2")
    memory = (zeta - 1.5) * base - epsilon
    if _eq(zeta, 2.5):
        return RateResult(
            max(memory, 0.0), True, "zeta=5/2", boundary=True, strict=True,
            epsilon=epsilon, quantity="norm", log_power=1.0,
        )
    if zeta > 2.5:
        half, inv_d = 1.0 / (2.0 * p), 1.0 / d - epsilon
        strict = inv_d <= half
        return RateResult(
            max(min(half, inv_d), 0.0), False, "very short memory", strict=strict,
            epsilon=epsilon if strict else 0.0, quantity="norm",
        )
    return RateResult(
        max(memory, 0.0), False, "short and long memory", strict=True,
        epsilon=epsilon, quantity="norm",
    )


# --------------------------------------------------------------------------- #
# Fitting


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    residual: float
    slope_se: float
    n_points: int


def fit_rate(series, window=None) -> FitResult:
    """Least squares of log(value) on log(t).

    Parameters
    ----------
    series : sequence of (t, value) pairs, value > 0
    window : slice or (start, stop), optional
        Index range of ``series`` to use.

    Returns
    -------
    FitResult
        ``residual`` is the residual standard error of the regression.
    """
    arr = np.asarray(series, dtype=float)
    if window is not None:
        arr = arr[window if isinstance(window, slice) else slice(*window)]
    if arr.ndim != 2 or arr.shape[0] < 3:
        raise InvalidArgument("need at least 3 (t, value) points")
    t, v = arr[:, 0], arr[:, 1]
    if np.any(v <= 0) or np.any(t <= 0):
        raise InvalidArgument("times and values must be positive")
    x, y = np.log(t), np.log(v)
    reg = stats.linregress(x, y)
    resid = y - (reg.intercept + reg.slope * x)
    dof = max(len(x) - 2, 1)
    return FitResult(
        float(reg.slope), float(reg.intercept),
        float(math.sqrt(np.sum(resid**2) / dof)), float(reg.stderr), int(len(x)),
    )


# --------------------------------------------------------------------------- #
# Table dumps


def rate_table(ps, qs, ds, betas, gammas):
    """Rows (p, q, d, beta, gamma, exponent, log, regime) of the abstract table."""
    rows = []
    for p, q, d, beta, gamma in itertools.product(ps, qs, ds, betas, gammas):
        if not q > p:
            continue
        res = abstract_rate(RegimeInput(p, q, d, beta, gamma))
        rows.append((p, q, d, beta, gamma, res.exponent, res.log_factor, res.regime))
    return rows


def write_rate_table(rows, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["p", "q", "d", "beta", "gamma", "exponent", "log", "regime"])
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
