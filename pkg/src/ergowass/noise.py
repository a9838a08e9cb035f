"""Gaussian driving noises: Brownian motion, exact fBm, moving-average processes.

All samplers are pure functions of their arguments and an integer seed; each
call builds its own ``numpy.random.Generator`` so nothing is shared between
callers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import fft as sp_fft
from scipy import integrate
from scipy.signal import fftconvolve
from scipy.special import gamma as gamma_fn

from .errors import CirculantEmbeddingError, InvalidArgument

__all__ = [
    "FbmSpec",
    "KernelSpec",
    "NoisePath",
    "sample_brownian",
    "sample_fbm",
    "sample_moving_average",
    "fbm_covariance",
    "fgn_autocovariance",
    "embedded_autocovariance",
    "mvn_variance_constant",
]

# ratio between consecutive far-past cell edges of the moving-average grid
FAR_PAST_RATIO = 1.1
_ROW_CHUNK = 4096


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class NoisePath:
    """A sampled noise trajectory on a uniform grid.

    ``values`` has shape ``(steps + 1, dim)`` and starts at zero. Paths built by
    :func:`sample_moving_average` also keep the two-sided Brownian past that
    generated them (``past_edges``, ``past_increments``), ordered by distance
    from time 0.
    """

    times: np.ndarray
    values: np.ndarray
    generator_tag: str
    seed: int | None = None
    past_edges: np.ndarray | None = field(default=None, repr=False)
    past_increments: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if times.ndim != 1 or times.shape[0] != values.shape[0]:
            raise InvalidArgument("times and values must have matching lengths")
        if times.shape[0] < 2 or np.any(np.diff(times) <= 0):
            raise InvalidArgument("times must be strictly increasing")
        if np.any(values[0] != 0.0):
            raise InvalidArgument("noise paths start at zero")
        if self.generator_tag not in ("bm", "fbm", "moving_average"):
            raise InvalidArgument(f"unknown generator tag {self.generator_tag!r}")
        object.__setattr__(self, "times", _readonly(times))
        object.__setattr__(self, "values", _readonly(values))

    @property
    def steps(self) -> int:
        return self.times.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def dt(self) -> float:
        """Grid step; raises if the grid is not uniform."""
        d = np.diff(self.times)
        if not np.allclose(d, d[0], rtol=1e-9, atol=0.0):
            raise InvalidArgument("noise grid is not uniform")
        return float(d[0])

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)


@dataclass(frozen=True)
class FbmSpec:
    """Grid on which an exact fractional Brownian motion is synthesised."""

    hurst: float
    horizon: float
    steps: int

    def __post_init__(self):
        if not 0.0 < self.hurst < 1.0:
            # H = 1 (allowed for moving-average kernels) is degenerate for fBm
            raise InvalidArgument(f"hurst must lie in (0, 1), got {self.hurst}")
        if not self.horizon > 0:
            raise InvalidArgument("horizon must be positive")
        if int(self.steps) != self.steps or self.steps < 2:
            raise InvalidArgument("steps must be an integer >= 2")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps


def sample_brownian(steps, dt, dim=1, seed=None) -> NoisePath:
    """Standard Wiener process on ``steps`` uniform steps of size ``dt``."""
    if int(steps) != steps or steps < 1:
        raise InvalidArgument("steps must be a positive integer")
    if not dt > 0:
        raise InvalidArgument("dt must be positive")
    rng = np.random.default_rng(seed)
    inc = rng.standard_normal((int(steps), int(dim))) * math.sqrt(dt)
    values = np.zeros((int(steps) + 1, int(dim)))
    np.cumsum(inc, axis=0, out=values[1:])
    return NoisePath(np.arange(int(steps) + 1) * dt, values, "bm", seed=seed)


def fbm_covariance(s, t, hurst):
    """Cov(B^H_s, B^H_t) = (s^2H + t^2H - |t - s|^2H) / 2."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    h2 = 2.0 * hurst
    return 0.5 * (np.abs(s) ** h2 + np.abs(t) ** h2 - np.abs(t - s) ** h2)


def fgn_autocovariance(n, hurst):
    """Autocovariance of unit-step fractional Gaussian noise at lags 0..n-1."""
    k = np.arange(n, dtype=float)
    h2 = 2.0 * hurst
    return 0.5 * (np.abs(k + 1) ** h2 - 2.0 * k**h2 + np.abs(k - 1) ** h2)


@lru_cache(maxsize=16)
def _circulant_eigenvalues(hurst, n):
    """Eigenvalues of the size-2n circulant matrix embedding fGn lags 0..n."""
    gam = fgn_autocovariance(n + 1, hurst)
    row = np.concatenate([gam, gam[-2:0:-1]])
    lam = sp_fft.fft(row).real
    tol = 1e-10 * np.max(np.abs(lam))
    neg = lam < -tol
    if np.any(neg):
        raise CirculantEmbeddingError(
            f"circulant embedding for H={hurst}, n={n} has {int(neg.sum())} negative "
            f"eigenvalues (min {lam.min():.3e})",
            min_eigenvalue=float(lam.min()),
            n_negative=int(neg.sum()),
        )
    return _readonly(np.clip(lam, 0.0, None))


def embedded_autocovariance(hurst, n):
    """Lag-0..n-1 autocovariance realised by the circulant embedding itself.

    Inverting the eigenvalues used by :func:`sample_fbm` recovers the covariance
    the generator actually targets; it equals :func:`fgn_autocovariance` up to
    FFT round-off.
    """
    m = sp_fft.next_fast_len(int(n))
    lam = _circulant_eigenvalues(float(hurst), m)
    return sp_fft.ifft(lam).real[:n]


def sample_fbm(spec: FbmSpec, dim=1, seed=None) -> NoisePath:
    """Exact fractional Brownian motion by circulant embedding of its increments.

    Each complex Gaussian vector yields two independent coordinates (real and
    imaginary parts), both exactly fGn-distributed.
    """
    n = int(spec.steps)
    dim = int(dim)
    m = sp_fft.next_fast_len(n)
    lam = _circulant_eigenvalues(float(spec.hurst), m)
    size = lam.shape[0]
    rng = np.random.default_rng(seed)
    pairs = (dim + 1) // 2
    z = rng.standard_normal((size, pairs)) + 1j * rng.standard_normal((size, pairs))
    y = sp_fft.fft(np.sqrt(lam / size)[:, None] * z, axis=0)[:n]
    fgn = np.empty((n, 2 * pairs))
    fgn[:, 0::2] = y.real
    fgn[:, 1::2] = y.imag
    fgn = fgn[:, :dim] * spec.dt**spec.hurst
    values = np.zeros((n + 1, dim))
    np.cumsum(fgn, axis=0, out=values[1:])
    return NoisePath(np.arange(n + 1) * spec.dt, values, "fbm", seed=seed)


def mvn_variance_constant(hurst):
    """Var(G_1) for the pure power kernel g(t) = t^(H - 1/2).

    The Mandelbrot-van Ness integral equals fBm divided by the usual
    normalising constant, so Cov(G_s, G_t) = this * fbm_covariance(s, t, H).
    """
    h = float(hurst)
    return gamma_fn(h + 0.5) * gamma_fn(2.0 - 2.0 * h) / (2.0 * h * gamma_fn(1.5 - h))


# --------------------------------------------------------------------------- #
# Moving-average kernels


def _power_integral(e, x, y):
    """Integral of s^e over [x, y], 0 <= x <= y, without cancellation."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros(np.broadcast(x, y).shape)
    x, y = np.broadcast_arrays(x, y)
    pos = x > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        if e == -1.0:
            out[pos] = np.log1p((y[pos] - x[pos]) / x[pos])
            if np.any(~pos & (y > 0)):
                raise InvalidArgument("1/s is not integrable at 0")
        else:
            b = e + 1.0
            xp, yp = x[pos], y[pos]
            out[pos] = xp**b * np.expm1(b * np.log1p((yp - xp) / xp)) / b
            z = ~pos
            if np.any(z):
                if b <= 0:
                    raise InvalidArgument(f"s^{e} is not integrable at 0")
                out[z] = y[z] ** b / b
    return out


def _log_integral(x, y):
    """Integral of log(s) over [x, y], x > 0."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return y * np.log(y) - y - (x * np.log(x) - x)


@dataclass(frozen=True)
class KernelSpec:
    """Kernel g of a moving-average Gaussian process with stationary increments.

    ``g(t) = t^(H - 1/2)`` on ``(0, t0]``; beyond ``t0`` it continues as
    ``alpha + c1 * t^(2 - zeta) + c2 * t^(1 - zeta)`` (``log t`` replaces the
    first power when zeta = 2), with coefficients fixed so that g is C^2 at
    ``t0``. Then ``|g''(u)| <= C u^-zeta`` on ``[1, inf)``; ``tail_coefficient``
    is that C, derived from the construction when not given.

    ``past_truncation`` is how far back the two-sided Brownian integral is
    discretised.
    """

    hurst: float
    zeta: float
    t0: float
    past_truncation: float
    tail_coefficient: float | None = None

    def __post_init__(self):
        h = self.hurst
        if not 0.0 < h <= 1.0:
            raise InvalidArgument(f"hurst must lie in (0, 1], got {h}")
        if not self.zeta > 1.5:
            raise InvalidArgument(f"zeta must exceed 3/2, got {self.zeta}")
        if not self.t0 > 0:
            raise InvalidArgument("t0 must be positive")
        if not self.past_truncation > 0:
            raise InvalidArgument("past_truncation must be positive")
        object.__setattr__(self, "_terms", self._continuation_terms())
        derived = self._derived_tail_coefficient()
        if self.tail_coefficient is None:
            object.__setattr__(self, "tail_coefficient", derived)
        elif self.tail_coefficient < derived * (1 - 1e-9):
            raise InvalidArgument(
                f"tail_coefficient {self.tail_coefficient} is below the bound "
                f"{derived} implied by the kernel construction"
            )
        grid = np.geomspace(self.t0, max(10 * self.t0, 1e6), 400)
        if np.any(self.g(grid) < 0):
            raise InvalidArgument("kernel continuation becomes negative")

    @classmethod
    def with_default_truncation(cls, hurst, zeta, t0, horizon, tol=1e-3):
        """Kernel whose past truncation keeps the neglected tail below ``tol``.

        The neglected contribution at time ``horizon`` has standard deviation at
        most :meth:`tail_sd_bound`; the truncation is chosen so that this bound
        is ``tol`` times the standard deviation of the causal part at
        ``horizon``.
        """
        probe = cls(hurst, zeta, t0, past_truncation=1.0)
        c = probe.tail_coefficient
        scale = math.sqrt(probe.causal_variance(horizon))
        if c == 0.0:
            return cls(hurst, zeta, t0, past_truncation=max(1.0, horizon))
        z = float(zeta)
        target = tol * scale * (z - 1.0) * math.sqrt(2.0 * z - 3.0) / (horizon * c)
        trunc = target ** (1.0 / (1.5 - z))
        return cls(hurst, zeta, t0, past_truncation=max(trunc, horizon, 1.0))

    # -- kernel evaluation ------------------------------------------------ #

    def _continuation_terms(self):
        h, z, t0 = float(self.hurst), float(self.zeta), float(self.t0)
        e = h - 0.5
        v = t0**e
        d1 = e * t0 ** (e - 1)
        d2 = e * (e - 1) * t0 ** (e - 2)
        if z == 2.0:
            basis1 = ("log", None)
            b1 = (math.log(t0), 1 / t0, -1 / t0**2)
        else:
            p = 2.0 - z
            basis1 = ("pow", p)
            b1 = (t0**p, p * t0 ** (p - 1), p * (p - 1) * t0 ** (p - 2))
        p2 = 1.0 - z
        b2 = (t0**p2, p2 * t0 ** (p2 - 1), p2 * (p2 - 1) * t0 ** (p2 - 2))
        c1, c2 = np.linalg.solve([[b1[1], b2[1]], [b1[2], b2[2]]], [d1, d2])
        alpha = v - c1 * b1[0] - c2 * b2[0]
        return ((alpha, "pow", 0.0), (c1, *basis1), (c2, "pow", p2))

    def _derived_tail_coefficient(self):
        h, z, t0 = float(self.hurst), float(self.zeta), float(self.t0)
        e = h - 0.5
        inner = 0.0
        if t0 > 1.0:
            k = abs(e * (e - 1))
            inner = k * max(1.0, t0 ** (z + e - 2))
        (_, _, _), (c1, kind1, p1), (c2, _, p2) = self._terms
        k1 = 1.0 if kind1 == "log" else abs(p1 * (p1 - 1))
        k2 = abs(p2 * (p2 - 1))
        outer = abs(c1) * k1 + abs(c2) * k2 / max(1.0, t0)
        return float(max(inner, outer))

    def g(self, t):
        """Evaluate the kernel; t must be positive (g may be singular at 0)."""
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0):
            raise InvalidArgument("the kernel is only defined on (0, inf); use integral()")
        out = np.empty_like(t)
        inner = t <= self.t0
        out[inner] = t[inner] ** (self.hurst - 0.5)
        to = t[~inner]
        acc = np.zeros_like(to)
        for coef, kind, p in self._terms:
            acc += coef * (np.log(to) if kind == "log" else to**p)
        out[~inner] = acc
        return out

    def integral(self, x, y):
        """Exact integral of g over [x, y] for 0 <= x <= y (vectorised)."""
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        t0 = float(self.t0)
        out = np.zeros(x.shape)
        lo = x < t0
        if np.any(lo):
            out[lo] += _power_integral(self.hurst - 0.5, x[lo], np.minimum(y[lo], t0))
        hi = y > t0
        if np.any(hi):
            a = np.maximum(x[hi], t0)
            b = y[hi]
            acc = np.zeros(a.shape)
            for coef, kind, p in self._terms:
                if coef == 0.0:
                    continue
                if kind == "log":
                    acc += coef * _log_integral(a, b)
                else:
                    acc += coef * _power_integral(p, a, b)
            out[hi] += acc
        return out

    def causal_variance(self, t):
        """Variance of the causal part int_0^t g(t - u) dW_u, i.e. int_0^t g^2."""
        pts = [self.t0] if self.t0 < t else None
        f = lambda s: float(self.g(np.array([s]))[0]) ** 2 if s > 0 else 0.0
        val, _ = integrate.quad(f, 0.0, t, points=pts, limit=200)
        return val

    def tail_sd_bound(self, horizon):
        """Upper bound on the sd of the past contribution beyond the truncation.

        From |g''(u)| <= C u^-zeta: |g(t + s) - g(s)| <= t C s^(1 - zeta) / (zeta - 1),
        hence sd <= t C T^(3/2 - zeta) / ((zeta - 1) sqrt(2 zeta - 3)).
        """
        z = float(self.zeta)
        tr = max(float(self.past_truncation), 1.0)
        return (
            horizon
            * self.tail_coefficient
            * tr ** (1.5 - z)
            / ((z - 1.0) * math.sqrt(2.0 * z - 3.0))
        )


def _far_past_edges(start, truncation):
    """Geometric cell edges start * r^i, the last one at or beyond ``truncation``."""
    if truncation <= start:
        return np.array([start])
    n = int(math.ceil(math.log(truncation / start) / math.log(FAR_PAST_RATIO) - 1e-12))
    return start * FAR_PAST_RATIO ** np.arange(n + 1)


def sample_moving_average(spec: KernelSpec, steps, dt, dim=1, seed=None) -> NoisePath:
    """Moving-average Gaussian process with stationary increments.

    ``G_t = int_{-T}^0 (g(t - u) - g(-u)) dW_u + int_0^t g(t - u) dW_u`` with
    ``T = spec.past_truncation`` (rounded up to the far-past grid). Each Brownian
    cell contributes its increment times the exact cell average of the kernel,
    so the t^(H - 1/2) singularity is never evaluated. Cells of width ``dt``
    cover the future and the near past ``[-min(T, horizon), 0]``; beyond that the
    past uses geometrically growing cells.

    Random draws are taken in the order: causal increments, near-past cells by
    distance from 0, far-past cells by distance from 0. With g = 1 the path is
    therefore the Brownian path of :func:`sample_brownian` for the same seed, and
    enlarging the truncation only appends far-past cells.
    """
    if int(steps) != steps or steps < 1:
        raise InvalidArgument("steps must be a positive integer")
    if not dt > 0:
        raise InvalidArgument("dt must be positive")
    steps = int(steps)
    dim = int(dim)
    horizon = steps * dt
    trunc = float(spec.past_truncation)
    k_near = int(math.ceil(min(trunc, horizon) / dt - 1e-9))
    edges_far = _far_past_edges(k_near * dt, trunc)
    n_far = edges_far.shape[0] - 1

    rng = np.random.default_rng(seed)
    future = rng.standard_normal((steps, dim)) * math.sqrt(dt)
    near = rng.standard_normal((k_near, dim)) * math.sqrt(dt)
    far = rng.standard_normal((n_far, dim)) * np.sqrt(np.diff(edges_far))[:, None]

    m = np.arange(k_near + steps + 1, dtype=float)
    cell_avg = spec.integral(m[:-1] * dt, m[1:] * dt) / dt
    w = np.concatenate([near[::-1], future], axis=0)
    conv = fftconvolve(cell_avg[:, None], w, axes=0)[: k_near + steps]
    values = np.zeros((steps + 1, dim))
    base = conv[k_near - 1] if k_near > 0 else 0.0
    values[1:] = conv[k_near - 1 + np.arange(1, steps + 1)] - base

    if n_far > 0:
        times = np.arange(1, steps + 1) * dt
        v0, v1 = edges_far[:-1], edges_far[1:]
        width = v1 - v0
        for start in range(0, steps, _ROW_CHUNK):
            tj = times[start : start + _ROW_CHUNK, None]
            coef = (spec.integral(v1, v1 + tj) - spec.integral(v0, v0 + tj)) / width
            values[1 + start : 1 + start + tj.shape[0]] += coef @ far

    past_edges = np.concatenate([np.arange(k_near + 1) * dt, edges_far[1:]])
    past_inc = np.concatenate([near, far], axis=0)
    return NoisePath(
        np.arange(steps + 1) * dt,
        values,
        "moving_average",
        seed=seed,
        past_edges=_readonly(past_edges),
        past_increments=_readonly(past_inc),
    )
