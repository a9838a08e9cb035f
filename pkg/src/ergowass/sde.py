"""Euler-Maruyama integration over a catalogue of mean-reverting drifts.

States may carry a leading replication axis: ``x0`` of shape ``(d,)`` gives a
path of shape ``(steps + 1, d)``, ``x0`` of shape ``(R, d)`` integrates ``R``
independent copies at once given increments of shape ``(steps, R, d')``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.signal import lfilter

from .errors import DivergenceError, InvalidArgument
from .noise import NoisePath, sample_brownian

__all__ = [
    "LinearDrift",
    "DoubleWellDrift",
    "WeakMeanRevertingDrift",
    "CustomDrift",
    "ConstantDiffusion",
    "StateDependentDiffusion",
    "PathSample",
    "DriftConditionReport",
    "euler_maruyama",
    "integrate_additive",
    "integrate_batch",
    "check_drift_conditions",
    "explosion_threshold",
]


# --------------------------------------------------------------------------- #
# Drifts


@dataclass(frozen=True)
class LinearDrift:
    """b(x) = -rate * x."""

    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise InvalidArgument("linear drift rate must be positive")

    def __call__(self, x):
        return -self.rate * np.asarray(x, dtype=float)

    @property
    def lipschitz(self):
        return float(self.rate)

    def describe(self):
        return f"linear(rate={self.rate!r})"


@dataclass(frozen=True)
class DoubleWellDrift:
    """Gradient drift of U(x) = curvature |x|^2 / 2 - curvature * radius * sqrt(|x|^2 + eps^2).

    ``eps = curvature * radius / (nonconvexity + curvature)`` so that the largest
    one-sided Lipschitz constant, reached at the origin, equals ``nonconvexity``.
    The wells sit near ``|x| = radius``; outside the ball of that radius the
    drift is contracting.
    """

    nonconvexity: float
    curvature: float
    radius: float

    def __post_init__(self):
        if self.nonconvexity < 0 or not self.curvature > 0 or self.radius < 0:
            raise InvalidArgument("need nonconvexity >= 0, curvature > 0, radius >= 0")
        if self.radius == 0 and self.nonconvexity > 0:
            raise InvalidArgument("a double well with radius 0 cannot be non-convex")

    @property
    def eps(self):
        return self.curvature * self.radius / (self.nonconvexity + self.curvature)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = -self.curvature * x
        if self.radius > 0:
            r2 = np.sum(x * x, axis=-1, keepdims=True)
            out = out + self.curvature * self.radius * x / np.sqrt(r2 + self.eps**2)
        return out

    def potential(self, x):
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1)
        return 0.5 * self.curvature * r2 - self.curvature * self.radius * np.sqrt(
            r2 + self.eps**2
        )

    @property
    def lipschitz(self):
        return float(self.curvature + self.nonconvexity + self.curvature)

    def describe(self):
        return (
            f"double_well(nonconvexity={self.nonconvexity!r}, "
            f"curvature={self.curvature!r}, radius={self.radius!r})"
        )


@dataclass(frozen=True)
class WeakMeanRevertingDrift:
    """b(x) = -strength * x |x|^(2a - 2) outside B(0, M), so <b(x), x> = -strength |x|^2a.

    Inside the ball the radial factor |x|^(2a - 2) is replaced by the cubic
    ``A + C |x|^3`` matching its value and slope at M, which keeps b locally
    Lipschitz and sends it to zero at the origin.
    """

    exponent: float
    strength: float
    inner_radius: float

    def __post_init__(self):
        if not 0 < self.exponent <= 1:
            raise InvalidArgument("exponent a must lie in (0, 1]")
        if not self.strength > 0 or self.inner_radius < 0:
            raise InvalidArgument("need strength > 0 and inner_radius >= 0")
        if self.inner_radius == 0 and self.exponent < 1:
            raise InvalidArgument("inner_radius must be positive when a < 1")

    def _radial(self, r):
        a, m = self.exponent, self.inner_radius
        out = np.empty_like(r)
        outer = r > m
        out[outer] = r[outer] ** (2 * a - 2)
        if m > 0:
            c = (2 * a - 2) * m ** (2 * a - 5) / 3.0
            base = m ** (2 * a - 2) - c * m**3
            out[~outer] = base + c * r[~outer] ** 3
        return out

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        r = np.sqrt(np.sum(x * x, axis=-1, keepdims=True))
        return -self.strength * x * self._radial(r)

    @property
    def lipschitz(self):
        return float(self.strength * max(1.0, self.inner_radius ** (2 * self.exponent - 2)) * 3)

    def describe(self):
        return (
            f"weak_mean_reverting(exponent={self.exponent!r}, "
            f"strength={self.strength!r}, inner_radius={self.inner_radius!r})"
        )


@dataclass(frozen=True)
class CustomDrift:
    """User drift; ``func`` maps (..., d) arrays to (..., d) arrays."""

    func: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    name: str = "custom"

    def __call__(self, x):
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)

    def describe(self):
        return f"custom(name={self.name!r}, lipschitz={self.lipschitz!r})"


# --------------------------------------------------------------------------- #
# Diffusions


@dataclass(frozen=True)
class ConstantDiffusion:
    """Constant d x d' matrix sigma."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @classmethod
    def scalar(cls, sigma, dim=1):
        return cls(sigma * np.eye(dim))

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def noise_dim(self):
        return self.matrix.shape[1]

    def __call__(self, x):
        return self.matrix

    def describe(self):
        return f"constant({self.matrix.tolist()!r})"


@dataclass(frozen=True)
class StateDependentDiffusion:
    """sigma(x) given by ``func``: (..., d) -> (..., d, d').

    ``growth_exponent`` is the r of ||sigma(x)|| <= C (1 + |x|)^(1 - r/2);
    ``ellipticity_floor`` (when positive) is checked on the visited states.
    """

    func: Callable[[np.ndarray], np.ndarray]
    noise_dim: int
    growth_exponent: float = 0.5
    ellipticity_floor: float = 0.0
    name: str = "state_dependent"

    def __post_init__(self):
        if not 0 < self.growth_exponent <= 0.5:
            raise InvalidArgument("growth exponent r must lie in (0, 1/2]")
        if self.ellipticity_floor < 0:
            raise InvalidArgument("ellipticity floor must be non-negative")

    def __call__(self, x):
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)

    def check_ellipticity(self, states):
        """Smallest eigenvalue of sigma sigma^T over ``states`` against the floor."""
        s = self(states)
        ssT = s @ np.swapaxes(s, -1, -2)
        low = float(np.min(np.linalg.eigvalsh(ssT)))
        return low >= self.ellipticity_floor, low

    def describe(self):
        return f"state_dependent(name={self.name!r}, r={self.growth_exponent!r})"


# --------------------------------------------------------------------------- #
# Paths and integrators


@dataclass(frozen=True)
class PathSample:
    """Integrated trajectory. ``states`` has shape (steps + 1, [R,] d)."""

    times: np.ndarray
    states: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.times.shape[0] != self.states.shape[0]:
            raise InvalidArgument("times and states lengths differ")

    @property
    def horizon(self):
        return float(self.times[-1])

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])

    def truncate(self, horizon):
        """Prefix of the path up to (and including) time ``horizon``."""
        k = int(round(horizon / self.dt))
        return PathSample(self.times[: k + 1], self.states[: k + 1], dict(self.provenance))


def explosion_threshold(x0):
    """Norm beyond which a state is declared divergent: 1e6 * (1 + |x0|)."""
    x0 = np.asarray(x0, dtype=float)
    return 1e6 * (1.0 + float(np.max(np.linalg.norm(np.atleast_2d(x0), axis=-1))))


def _check_states(x, thr, step, seed):
    norms = np.linalg.norm(x, axis=-1)
    bad = ~(norms <= thr)
    if np.any(bad):
        raise DivergenceError(
            f"state norm exceeded {thr:.3g} at step {step}", step=step, seed=seed
        )


def _euler(drift, diffusion, x0, dw, dt, record=True, seed=None):
    x0 = np.asarray(x0, dtype=float)
    steps = dw.shape[0]
    thr = explosion_threshold(x0)
    constant = isinstance(diffusion, ConstantDiffusion)

    if constant and isinstance(drift, LinearDrift):
        a = 1.0 - drift.rate * dt
        additive = dw @ diffusion.matrix.T
        if record:
            out = np.empty((steps + 1,) + x0.shape)
            out[0] = x0
            out[1:] = lfilter([1.0], [1.0, -a], additive, axis=0, zi=(a * x0)[None])[0]
            lim = np.max(np.abs(out), axis=tuple(range(1, out.ndim)))
            if not np.all(lim <= thr / math.sqrt(x0.shape[-1])):
                for k in np.nonzero(~(lim <= thr / math.sqrt(x0.shape[-1])))[0]:
                    _check_states(out[k], thr, int(k), seed)
            return out
        # terminal state only: X_n = a^n x0 + sum_k a^(n-1-k) N_k
        powers = a ** np.arange(steps - 1, -1, -1, dtype=float)
        x = a**steps * x0 + np.tensordot(powers, additive, axes=(0, 0))
        _check_states(x, thr, steps, seed)
        return x

    if constant:
        additive = dw @ diffusion.matrix.T
    lim_inf = thr / math.sqrt(x0.shape[-1])
    x = x0.copy()
    out = None
    if record:
        out = np.empty((steps + 1,) + x0.shape)
        out[0] = x0
    for k in range(steps):
        if constant:
            noise = additive[k]
        else:
            noise = np.einsum("...ij,...j->...i", diffusion(x), dw[k])
        x = x + drift(x) * dt + noise
        if not np.all(np.abs(x) < lim_inf):
            _check_states(x, thr, k + 1, seed)
        if record:
            out[k + 1] = x
    return out if record else x


def _validate_linear_step(drift, dt):
    if isinstance(drift, LinearDrift) and not drift.rate * dt < 1:
        raise InvalidArgument(f"unstable step: rate * dt = {drift.rate * dt} >= 1")


def euler_maruyama(drift, diffusion, x0, dt, steps, noise=None, seed=None) -> PathSample:
    """Integrate dX = b(X) dt + sigma(X) dW with the explicit Euler scheme.

    ``noise`` is a Brownian :class:`NoisePath` on the same grid; when omitted it
    is drawn from ``seed``. The path is never trimmed (burn-in is the caller's
    business).
    """
    if not dt > 0:
        raise InvalidArgument("dt must be positive")
    if int(steps) != steps or steps < 1:
        raise InvalidArgument("steps must be a positive integer")
    _validate_linear_step(drift, dt)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    noise_dim = diffusion.noise_dim
    if noise is None:
        noise = sample_brownian(steps, dt, dim=noise_dim, seed=seed)
    if noise.steps != steps or not math.isclose(noise.dt, dt, rel_tol=1e-9):
        raise InvalidArgument("noise grid does not match (dt, steps)")
    if noise.dim != noise_dim:
        raise InvalidArgument("noise dimension does not match the diffusion")
    states = _euler(drift, diffusion, x0, noise.increments, dt, seed=noise.seed)
    if isinstance(diffusion, StateDependentDiffusion) and diffusion.ellipticity_floor > 0:
        ok, low = diffusion.check_ellipticity(states)
        if not ok:
            raise InvalidArgument(f"ellipticity floor violated: min eigenvalue {low:.3g}")
    prov = {
        "drift": drift.describe(),
        "diffusion": diffusion.describe(),
        "noise": noise.generator_tag,
        "seed": noise.seed,
    }
    return PathSample(np.array(noise.times), states, prov)


def _as_sigma(sigma, dim):
    if isinstance(sigma, ConstantDiffusion):
        return sigma
    s = np.asarray(sigma, dtype=float)
    if s.ndim == 0:
        return ConstantDiffusion.scalar(float(s), dim)
    return ConstantDiffusion(s)


def integrate_additive(drift, sigma, x0, noise: NoisePath) -> PathSample:
    """Euler scheme for dX = b(X) dt + sigma dG with a given noise path G.

    ``sigma`` is a scalar (times identity) or an invertible square matrix.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    diff = _as_sigma(sigma, x0.shape[-1])
    m = diff.matrix
    if m.shape[0] != m.shape[1] or np.linalg.matrix_rank(m) < m.shape[0]:
        raise InvalidArgument("sigma must be an invertible square matrix")
    if noise.dim != m.shape[1]:
        raise InvalidArgument("noise dimension does not match sigma")
    dt = noise.dt
    _validate_linear_step(drift, dt)
    states = _euler(drift, diff, x0, noise.increments, dt, seed=noise.seed)
    prov = {
        "drift": drift.describe(),
        "diffusion": diff.describe(),
        "noise": noise.generator_tag,
        "seed": noise.seed,
    }
    return PathSample(np.array(noise.times), states, prov)


def integrate_batch(drift, diffusion, x0, increments, dt, record=False):
    """Integrate ``R`` independent copies; ``increments`` has shape (steps, R, d').

    Returns the terminal states (R, d), or the full (steps + 1, R, d) array when
    ``record`` is set.
    """
    _validate_linear_step(drift, dt)
    return _euler(drift, diffusion, np.asarray(x0, dtype=float), increments, dt, record=record)


# --------------------------------------------------------------------------- #
# Drift diagnostics


@dataclass
class DriftConditionReport:
    """Empirical fit of the contraction condition and Hajek diagnostics.

    ``kappa``, ``radius`` and ``nonconvexity`` estimate the (kappa, R, lambda) of
    <b(x) - b(y), x - y> <= -kappa |x - y|^2 for |x|, |y| >= R, <= lambda |x - y|^2
    otherwise. ``haj_shell_max`` lists (inner radius, max Hajek left-hand side)
    per radial shell.
    """

    kappa: float
    radius: float
    nonconvexity: float
    kappa_far: float
    haj_q: float
    haj_shell_max: list
    haj_radius: float | None
    violating_pair: tuple | None = None
    pairs_checked: int = 0


def _uniform_ball(rng, n, dim, radius):
    v = rng.standard_normal((n, dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * radius * rng.random((n, 1)) ** (1.0 / dim)


def check_drift_conditions(
    drift, q, sample_count, radius, seed=None, dim=1, diffusion=None, declared=None
) -> DriftConditionReport:
    """Probe the contraction and Hajek conditions on random points of B(0, radius).

    ``declared`` may hold a (kappa, R, lambda) triple; the first sampled pair
    violating it is reported. Nothing is asserted.
    """
    if sample_count < 2:
        raise InvalidArgument("sample_count must be at least 2")
    if q < 1:
        raise InvalidArgument("q must be >= 1")
    rng = np.random.default_rng(seed)
    x = _uniform_ball(rng, sample_count, dim, radius)
    y = _uniform_ball(rng, sample_count, dim, radius)
    diff = x - y
    d2 = np.sum(diff * diff, axis=1)
    keep = d2 > 1e-24
    x, y, diff, d2 = x[keep], y[keep], diff[keep], d2[keep]
    ratio = np.sum((drift(x) - drift(y)) * diff, axis=1) / d2
    rmin = np.minimum(np.linalg.norm(x, axis=1), np.linalg.norm(y, axis=1))

    far = rmin >= radius / 2
    kappa_far = float(-np.max(ratio[far])) if np.any(far) else float("nan")
    target = kappa_far / 2 if kappa_far > 0 else 0.0
    best = (float(radius), float("nan"))
    for r in np.linspace(0.0, radius, 65):
        outside = rmin >= r
        if not np.any(outside):
            continue
        worst = float(np.max(ratio[outside]))
        if worst < 0 and -worst >= target:
            best = (float(r), -worst)
            break
    r_fit, kappa = best
    inside = rmin < r_fit
    lam = max(0.0, float(np.max(ratio[inside]))) if np.any(inside) else 0.0

    violating = None
    if declared is not None:
        k_d, r_d, l_d = declared
        bound = np.where(rmin >= r_d, -k_d, l_d)
        bad = np.nonzero(ratio > bound + 1e-12)[0]
        if bad.size:
            i = int(bad[0])
            violating = (x[i].copy(), y[i].copy())

    pts = np.concatenate([x, y])
    norms = np.linalg.norm(pts, axis=1)
    lhs = np.sum(drift(pts) * pts, axis=1)
    if diffusion is not None:
        s = np.broadcast_to(diffusion(pts), pts.shape + (diffusion.noise_dim,))
        frob = np.sum(s * s, axis=(-2, -1))
        sx = np.einsum("nij,ni->nj", s, pts)
        with np.errstate(invalid="ignore", divide="ignore"):
            cross = np.where(norms > 0, np.sum(sx * sx, axis=1) / norms**2, 0.0)
        lhs = lhs + 0.5 * frob + (q / 2 - 1) * cross
    edges = np.linspace(0.0, radius, 17)
    shells = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (norms >= lo) & (norms < hi)
        shells.append((float(lo), float(np.max(lhs[sel])) if np.any(sel) else float("nan")))
    haj_radius = None
    for i in range(len(shells)):
        tail = [m for _, m in shells[i:] if not math.isnan(m)]
        if tail and all(m < 0 for m in tail):
            haj_radius = shells[i][0]
            break
    return DriftConditionReport(
        kappa=kappa,
        radius=r_fit,
        nonconvexity=lam,
        kappa_far=kappa_far,
        haj_q=float(q),
        haj_shell_max=shells,
        haj_radius=haj_radius,
        violating_pair=violating,
        pairs_checked=int(ratio.shape[0]),
    )
