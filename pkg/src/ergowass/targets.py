"""Invariant laws: closed-form Gaussians and long-run empirical surrogates."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import ndtr, ndtri

from .errors import InvalidArgument
from .occupation import OccupationMeasure, load_point_cloud, save_point_cloud

__all__ = [
    "Gaussian1D",
    "GaussianDiag",
    "EmpiricalSurrogate",
    "MIN_SURROGATE_BURN_IN",
    "DEFAULT_SURROGATE_SIZE",
    "ou_invariant",
    "fou_invariant",
    "fou_variance",
    "surrogate_invariant",
    "quantile",
    "sample",
    "poincare_decay",
]

MIN_SURROGATE_BURN_IN = 1.0
DEFAULT_SURROGATE_SIZE = 2**16
_CHUNK = 2048


@dataclass(frozen=True)
class Gaussian1D:
    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise InvalidArgument("variance must be positive")

    dim = 1

    @property
    def sd(self):
        return math.sqrt(self.variance)

    def cdf(self, x):
        return ndtr((np.asarray(x, dtype=float) - self.mean) / self.sd)

    def quantile(self, u):
        # ndtri is accurate to a few ulps over (0, 1)
        return self.mean + self.sd * ndtri(np.asarray(u, dtype=float))

    def sample(self, n, seed=None):
        rng = np.random.default_rng(seed)
        return self.mean + self.sd * rng.standard_normal(n)


@dataclass(frozen=True)
class GaussianDiag:
    mean: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        v = np.atleast_1d(np.asarray(self.variances, dtype=float))
        if m.shape != v.shape or m.ndim != 1:
            raise InvalidArgument("mean and variances must be vectors of equal length")
        if np.any(v <= 0):
            raise InvalidArgument("variances must be positive")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "variances", v)

    @property
    def dim(self):
        return self.mean.shape[0]

    def marginal(self, i):
        return Gaussian1D(float(self.mean[i]), float(self.variances[i]))

    def quantile(self, u, coordinate=0):
        return self.marginal(coordinate).quantile(u)

    def sample(self, n, seed=None):
        rng = np.random.default_rng(seed)
        return self.mean + np.sqrt(self.variances) * rng.standard_normal((n, self.dim))


@dataclass(frozen=True)
class EmpiricalSurrogate:
    """Cloud of independent terminal states standing in for the invariant law."""

    points: np.ndarray
    burn_in: float
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[0] < 1:
            raise InvalidArgument("surrogate cloud must be non-empty")
        if self.burn_in < MIN_SURROGATE_BURN_IN:
            raise InvalidArgument(
                f"surrogate burn-in {self.burn_in} below the minimum {MIN_SURROGATE_BURN_IN}"
            )
        pts = np.array(pts)
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def size(self):
        return self.points.shape[0]

    def sampling_floor(self):
        """Scale n^(-1/2) of the W_1 sampling error of the cloud itself."""
        return 1.0 / math.sqrt(self.size)

    def quantile(self, u, coordinate=0):
        return np.quantile(self.points[:, coordinate], u, method="inverted_cdf")

    def sample(self, n, seed=None):
        rng = np.random.default_rng(seed)
        return self.points[rng.integers(0, self.size, n)]


def ou_invariant(lam, sigma) -> Gaussian1D:
    """N(0, sigma^2 / (2 lam))."""
    if not lam > 0 or not sigma > 0:
        raise InvalidArgument("lambda and sigma must be positive")
    return Gaussian1D(0.0, sigma**2 / (2.0 * lam))


def fou_variance(lam, sigma, hurst):
    """sigma_H^2 = sigma^2 lam^(-2H) H Gamma(2H)."""
    if not 0 < hurst < 1:
        raise InvalidArgument("hurst must lie in (0, 1)")
    if not lam > 0 or not sigma > 0:
        raise InvalidArgument("lambda and sigma must be positive")
    return sigma**2 * lam ** (-2.0 * hurst) * hurst * float(gamma_fn(2.0 * hurst))


def fou_invariant(lam, sigma, hurst) -> Gaussian1D:
    return Gaussian1D(0.0, fou_variance(lam, sigma, hurst))


def surrogate_invariant(
    process, t_burn, sample_count=DEFAULT_SURROGATE_SIZE, seed=0, dt=2.0**-8, x0=None,
    cache_dir=None,
) -> EmpiricalSurrogate:
    """Terminal states at time ``t_burn`` of ``sample_count`` independent runs.

    Runs start at ``x0`` (default the origin) and are integrated in chunks of
    2048 with seeds spawned from ``seed``. With ``cache_dir`` the cloud is
    stored under a hash of the process description and the arguments.
    """
    if t_burn < MIN_SURROGATE_BURN_IN:
        raise InvalidArgument(f"t_burn must be at least {MIN_SURROGATE_BURN_IN}")
    if sample_count < 1:
        raise InvalidArgument("sample_count must be positive")
    dim = process.dim or np.atleast_1d(x0).shape[0]
    x0 = np.zeros(dim) if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float))
    steps = process.steps_for(t_burn, dt)
    key = process.content_hash(seed, float(t_burn), int(sample_count), float(dt), x0.tolist())
    prov = {"hash": key, "seed": seed, "t_burn": t_burn, "dt": dt}
    if cache_dir is not None:
        path = os.path.join(cache_dir, f"surrogate-{key[:16]}.bin")
        if os.path.exists(path):
            return EmpiricalSurrogate(load_point_cloud(path).points, t_burn, prov)
    chunks = []
    seqs = np.random.SeedSequence(seed).spawn(math.ceil(sample_count / _CHUNK))
    for i, ss in enumerate(seqs):
        r = min(_CHUNK, sample_count - i * _CHUNK)
        chunks.append(process.terminal_states(x0, dt, steps, ss, r))
    pts = np.concatenate(chunks)
    if cache_dir is not None:
        os.makedirs(cache_dir, exist_ok=True)
        save_point_cloud(OccupationMeasure(pts, t_burn), path)
    return EmpiricalSurrogate(pts, t_burn, prov)


def quantile(law, u):
    """Quantile of a one-dimensional law (first coordinate for multivariate ones)."""
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u >= 1)):
        raise InvalidArgument("u must lie in (0, 1)")
    return law.quantile(u)


def sample(law, n, seed=None):
    return law.sample(n, seed)


def poincare_decay(c_poincare, t):
    """e(t) = exp(-2 t / C)."""
    if not c_poincare > 0 or np.any(np.asarray(t) < 0):
        raise InvalidArgument("need C > 0 and t >= 0")
    return np.exp(-2.0 * np.asarray(t, dtype=float) / c_poincare)
