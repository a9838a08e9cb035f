"""Wasserstein distances: dyadic multiscale sums, exact 1D and small-instance solvers.

Cell geometry
-------------
Ring ``n`` is B_0 = (-1, 1]^d for n = 0 and (-2^n, 2^n]^d minus (-2^(n-1), 2^(n-1)]^d
otherwise. At level ``l`` the cube (-1, 1]^d is tiled by 2^(dl) half-open cubes of
side 2^(1-l); the cells of ring ``n`` are the scaled tiles 2^n F intersected with
B_n. Per coordinate, y in (-1, 1] lies in tile ``ceil(y 2^(l-1)) + 2^(l-1) - 1``,
and the d coordinate indices are bit-interleaved (Morton order) so the parent
of a level-l cell is ``cell >> d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.special import gammaln, ndtr, ndtri

from .errors import InvalidArgument
from .occupation import OccupationMeasure, ring_index

__all__ = [
    "DyadicHistogram",
    "FGSum",
    "LtValue",
    "default_depth",
    "histogramize",
    "gaussian_histogram",
    "fg_multiscale_sum",
    "wasserstein_1d_exact",
    "wasserstein_1d_to_law",
    "wasserstein_exact_small",
    "lt_function",
    "save_histogram",
    "load_histogram",
]

MAX_RING_DEFAULT = 8


def default_depth(d):
    """Default tiling depth, floor(12 / d)."""
    return max(12 // int(d), 1)


def _as_points(measure):
    if isinstance(measure, OccupationMeasure):
        return measure.points
    pts = np.asarray(getattr(measure, "points", measure), dtype=float)
    return pts[:, None] if pts.ndim == 1 else pts


def _morton(coords, bits):
    """Interleave ``bits`` low bits of each column of ``coords`` (shape (m, d))."""
    m, d = coords.shape
    code = np.zeros(m, dtype=np.int64)
    for b in range(bits):
        for i in range(d):
            code |= ((coords[:, i] >> b) & 1) << (b * d + i)
    return code


@dataclass
class DyadicHistogram:
    """Sparse cell masses indexed by (ring, level).

    ``cells[(n, l)]`` is a pair (sorted Morton cell ids, masses). Only cells
    with positive mass are stored.
    """

    dim: int
    max_ring: int
    depth: int
    cells: dict
    overflow_mass: float
    ring_mass: np.ndarray
    moment_fn: Callable[[float], float] | None = field(default=None, repr=False)

    def geometry(self):
        return (self.dim, self.max_ring, self.depth)

    def level(self, n, level):
        return self.cells.get((n, level), (np.empty(0, np.int64), np.empty(0)))

    def moment(self, q):
        """q-th moment (or an upper bound on it) of the underlying measure."""
        if self.moment_fn is None:
            raise InvalidArgument("histogram carries no moment information")
        return float(self.moment_fn(q))


def _check_depth(depth, d):
    if int(depth) != depth or depth < 0:
        raise InvalidArgument("depth must be a non-negative integer")
    if depth * d > 20:
        raise InvalidArgument(f"depth {depth} exceeds the memory guard 20/d for d={d}")


def histogramize(measure, max_ring=MAX_RING_DEFAULT, depth=None, weights=None) -> DyadicHistogram:
    """Dyadic histogram of a point cloud (uniform weights unless ``weights`` given)."""
    pts = _as_points(measure)
    if not np.all(np.isfinite(pts)):
        raise InvalidArgument("points must have finite coordinates")
    count, d = pts.shape
    depth = default_depth(d) if depth is None else depth
    _check_depth(depth, d)
    w = np.full(count, 1.0 / count) if weights is None else np.asarray(weights, dtype=float)
    rings = ring_index(pts)
    norms = np.linalg.norm(pts, axis=1)

    def moment_fn(q, norms=norms, w=w):
        return float(np.sum(w * norms**q))

    inside = rings <= max_ring
    ring_mass = np.bincount(rings[inside], weights=w[inside], minlength=max_ring + 1)
    overflow = float(np.sum(w[~inside]))
    cells = {}
    half = 1 << max(depth - 1, 0)
    for n in np.unique(rings[inside]):
        sel = rings == n
        y = pts[sel] * 2.0 ** (-int(n))
        wn = w[sel]
        if depth == 0:
            cells[(int(n), 0)] = (np.zeros(1, np.int64), np.array([wn.sum()]))
            continue
        j = (np.ceil(y * half) + (half - 1)).astype(np.int64)
        code = _morton(j, depth)
        for level in range(depth, -1, -1):
            c = code >> (d * (depth - level))
            ids, inv = np.unique(c, return_inverse=True)
            cells[(int(n), level)] = (ids, np.bincount(inv, weights=wn))
    return DyadicHistogram(d, int(max_ring), int(depth), cells, overflow, ring_mass, moment_fn)


def _gaussian_moment_bound(mean, var):
    """q -> upper bound on E|X|^q for X ~ N(mean, diag(var)) via Minkowski."""
    mean_norm = float(np.linalg.norm(mean))
    vmax = float(np.max(var))
    d = len(var)

    def bound(q):
        chi = math.exp(0.5 * q * math.log(2.0) + gammaln((d + q) / 2) - gammaln(d / 2))
        return (mean_norm + (vmax ** (q / 2) * chi) ** (1.0 / q)) ** q

    return bound


def gaussian_histogram(mean, var, max_ring=MAX_RING_DEFAULT, depth=None) -> DyadicHistogram:
    """Exact cell masses of N(mean, diag(var)) on the dyadic cells.

    Each cell of ring n > 0 is the box 2^n F minus the inner cube
    (-2^(n-1), 2^(n-1)]^d; both are products of intervals, so masses are exact
    products of one-dimensional interval probabilities.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    var = np.atleast_1d(np.asarray(var, dtype=float))
    if mean.shape != var.shape or np.any(var <= 0):
        raise InvalidArgument("need matching mean/variance vectors with positive variances")
    d = mean.shape[0]
    depth = default_depth(d) if depth is None else depth
    _check_depth(depth, d)
    sd = np.sqrt(var)

    def interval_prob(i, lo, hi):
        lo = np.asarray(lo, dtype=float)
        hi = np.maximum(np.asarray(hi, dtype=float), lo)
        a = (lo - mean[i]) / sd[i]
        b = (hi - mean[i]) / sd[i]
        # difference of upper tails is more accurate on the positive side
        return np.where(a > 0, ndtr(-a) - ndtr(-b), ndtr(b) - ndtr(a))

    cells = {}
    ring_mass = np.zeros(max_ring + 1)
    for n in range(max_ring + 1):
        outer, inner = 2.0**n, (2.0 ** (n - 1) if n > 0 else 0.0)
        for level in range(depth + 1):
            k = 1 << level
            edges = outer * (-1.0 + 2.0 * np.arange(k + 1) / k)
            lo, hi = edges[:-1], edges[1:]
            full = [interval_prob(i, lo, hi) for i in range(d)]
            if n > 0:
                clo, chi = np.maximum(lo, -inner), np.minimum(hi, inner)
                part = [interval_prob(i, clo, chi) for i in range(d)]
            box_full = full[0]
            box_part = part[0] if n > 0 else None
            for i in range(1, d):
                box_full = np.multiply.outer(box_full, full[i])
                if n > 0:
                    box_part = np.multiply.outer(box_part, part[i])
            mass = box_full - box_part if n > 0 else box_full
            mass = np.maximum(np.asarray(mass).reshape(-1), 0.0)
            idx = np.indices((k,) * d).reshape(d, -1).T.astype(np.int64)
            code = _morton(idx, level)
            order = np.argsort(code)
            ids, m = code[order], mass[order]
            keep = m > 0
            cells[(n, level)] = (ids[keep], m[keep])
            if level == 0:
                ring_mass[n] = float(m.sum())
    overflow = max(0.0, 1.0 - float(ring_mass.sum()))
    return DyadicHistogram(
        d, int(max_ring), int(depth), cells, overflow, ring_mass, _gaussian_moment_bound(mean, var)
    )


@dataclass(frozen=True)
class FGSum:
    """Truncated multiscale sum with residual bounds for the neglected rings and levels."""

    value: float
    ring_residual: float
    level_residual: float

    @property
    def upper(self):
        return self.value + self.ring_residual + self.level_residual

    def __float__(self):
        return self.value


def _abs_diff_sum(a, b):
    ids = np.concatenate([a[0], b[0]])
    if ids.size == 0:
        return 0.0
    vals = np.concatenate([a[1], -b[1]])
    _, inv = np.unique(ids, return_inverse=True)
    return float(np.sum(np.abs(np.bincount(inv, weights=vals))))


def fg_multiscale_sum(h1: DyadicHistogram, h2: DyadicHistogram, p, q=None) -> FGSum:
    """S = sum_n 2^(pn) sum_l 2^(-pl) sum_F |mu(2^n F cap B_n) - nu(2^n F cap B_n)|.

    The sum runs over rings 0..max_ring and levels 0..depth. The ring residual
    bounds the omitted rings through mu(B_n) <= M(q) 2^(-(n-1)q) with ``q``
    (default p + 4) and the moments carried by the histograms; the level residual
    bounds the omitted levels by the geometric tail 2^(-pl) times the ring masses.
    """
    if not p > 0:
        raise InvalidArgument("p must be positive")
    if h1.geometry() != h2.geometry():
        raise InvalidArgument(f"histogram geometries differ: {h1.geometry()} vs {h2.geometry()}")
    _, max_ring, depth = h1.geometry()
    total = 0.0
    for n in range(max_ring + 1):
        ring = 0.0
        for level in range(depth + 1):
            ring += 2.0 ** (-p * level) * _abs_diff_sum(h1.level(n, level), h2.level(n, level))
        total += 2.0 ** (p * n) * ring

    ring_weights = 2.0 ** (p * np.arange(max_ring + 1))
    level_tail = 2.0 ** (-p * (depth + 1)) / (1.0 - 2.0 ** (-p))
    level_residual = float(level_tail * np.sum(ring_weights * (h1.ring_mass + h2.ring_mass)))

    q = p + 4.0 if q is None else float(q)
    if not q > p:
        raise InvalidArgument("residual moment order q must exceed p")
    try:
        moments = h1.moment(q) + h2.moment(q)
        ring_residual = (
            moments
            / (1.0 - 2.0 ** (-p))
            * 2.0**q
            * 2.0 ** ((p - q) * (max_ring + 1))
            / (1.0 - 2.0 ** (p - q))
        )
    except InvalidArgument:
        ring_residual = math.inf
    return FGSum(total, float(ring_residual), level_residual)


# --------------------------------------------------------------------------- #
# Exact solvers


def _one_dim(x, name):
    if isinstance(x, OccupationMeasure):
        if x.dim != 1:
            raise InvalidArgument(f"{name} must be one-dimensional")
        return x.points[:, 0]
    a = np.asarray(x, dtype=float)
    if a.ndim == 2 and a.shape[1] == 1:
        a = a[:, 0]
    if a.ndim != 1:
        raise InvalidArgument(f"{name} must be one-dimensional")
    return a


def _normalised(w, n, name):
    if w is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(w, dtype=float)
    if w.shape != (n,) or np.any(w < 0) or not math.isclose(w.sum(), 1.0, rel_tol=1e-9):
        raise InvalidArgument(f"{name} weights must be non-negative and sum to 1")
    return w


def wasserstein_1d_exact(mu, nu, p=1.0, mu_weights=None, nu_weights=None) -> float:
    """W_p between two discrete measures on the line via the quantile coupling.

    The quantile functions are step functions; merging their breakpoints gives
    an exact finite sum.
    """
    if not p >= 1:
        raise InvalidArgument("p must be >= 1")
    x, y = _one_dim(mu, "mu"), _one_dim(nu, "nu")
    if x.size == 0 or y.size == 0:
        raise InvalidArgument("measures must be non-empty")
    wx = _normalised(mu_weights, x.size, "mu")
    wy = _normalised(nu_weights, y.size, "nu")
    ox, oy = np.argsort(x, kind="stable"), np.argsort(y, kind="stable")
    x, wx, y, wy = x[ox], wx[ox], y[oy], wy[oy]
    if mu_weights is None and nu_weights is None and x.size == y.size:
        return float(np.mean(np.abs(x - y) ** p) ** (1.0 / p))
    cx, cy = np.cumsum(wx), np.cumsum(wy)
    cx[-1] = cy[-1] = 1.0
    u = np.union1d(cx, cy)
    du = np.diff(np.concatenate([[0.0], u]))
    mid = u - 0.5 * du
    ix = np.minimum(np.searchsorted(cx, mid, side="left"), x.size - 1)
    iy = np.minimum(np.searchsorted(cy, mid, side="left"), y.size - 1)
    return float(np.sum(du * np.abs(x[ix] - y[iy]) ** p) ** (1.0 / p))


def _psi(z):
    # antiderivative of the standard normal cdf
    return z * ndtr(z) + np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def wasserstein_1d_to_law(points, law, p=1.0) -> float:
    """W_p between the uniform empirical measure on ``points`` and a continuous law.

    ``law`` needs ``quantile`` (vectorised) and, for accurate quadrature, ``cdf``;
    Gaussian laws (``mean``/``variance``
    attributes) with p = 1 use the closed form of the integrated CDF gap.
    """
    if not p >= 1:
        raise InvalidArgument("p must be >= 1")
    x = np.sort(_one_dim(points, "points"))
    n = x.size
    gaussian = hasattr(law, "mean") and hasattr(law, "variance") and np.ndim(law.mean) == 0
    if gaussian and p == 1:
        m, s = float(law.mean), math.sqrt(float(law.variance))
        z = (x - m) / s
        total = _psi(z[0]) + _psi(-z[-1])
        if n > 1:
            # on (x_k, x_{k+1}] the empirical cdf equals c = k / n
            a, b = z[:-1], z[1:]
            c = np.arange(1, n) / n
            zc = ndtri(c)
            inner = np.clip(zc, a, b)
            # integral of (c - Phi) on [a, inner] plus (Phi - c) on [inner, b]
            left = c * (inner - a) - (_psi(inner) - _psi(a))
            right = (_psi(b) - _psi(inner)) - c * (b - inner)
            total = total + np.sum(left + right)
        return float(s * total)

    def quantile(u):
        return np.asarray(law.quantile(u), dtype=float)

    edges = np.arange(n + 1) / n
    total = 0.0
    if n > 2:
        lo, hi = edges[1:-2], edges[2:-1]
        # the integrand has a kink where the quantile crosses x_k; split there
        cdf = getattr(law, "cdf", None)
        mid = np.clip(np.asarray(cdf(x[1:-1]), dtype=float), lo, hi) if cdf else lo
        for a, b in ((lo, mid), (mid, hi)):
            half = 0.5 * (b - a)
            u = (a + b)[:, None] * 0.5 + half[:, None] * _GL_NODES[None, :]
            gap = np.abs(x[1:-1, None] - quantile(u)) ** p
            total += float(np.sum(half[:, None] * _GL_WEIGHTS[None, :] * gap))
    for k in {0, n - 1}:
        val, _ = integrate.quad(
            lambda uu, k=k: abs(x[k] - float(quantile(np.array([uu]))[0])) ** p,
            edges[k],
            edges[k + 1],
            limit=200,
        )
        total += val
    return float(total ** (1.0 / p))


def wasserstein_exact_small(mu, nu, p=1.0) -> float:
    """Exact W_p between two uniform clouds of equal size (at most 64 points)."""
    if not p >= 1:
        raise InvalidArgument("p must be >= 1")
    x, y = _as_points(mu), _as_points(nu)
    if x.shape[0] != y.shape[0]:
        raise InvalidArgument("supports must have equal size")
    if x.shape[0] > 64:
        raise InvalidArgument("exact small solver accepts at most 64 points")
    if x.shape[1] != y.shape[1]:
        raise InvalidArgument("dimensions differ")
    cost = cdist(x, y) ** p
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean() ** (1.0 / p))


# --------------------------------------------------------------------------- #
# The L_t(u) series


@dataclass(frozen=True)
class LtValue:
    """Exact series value, the case bound (without constant) and the case constant."""

    series: float
    case_bound: float
    regime: str
    constant: float
    tipping_level: int

    @property
    def ratio(self):
        return self.series / self.case_bound


def lt_function(u, t, p, beta, d) -> LtValue:
    """L_t(u) = sum_l 2^(-pl) min(u^(1/(2 beta)), (u/t)^(1/2) 2^(d l (1 - beta))).

    With c = d(1 - beta) the minimum equals the second argument below the
    tipping level l0 and the first from l0 on, so the series is a finite sum
    plus a geometric tail. The case bound is, with x = u t^(beta/(1-beta)),

    * p > c: min(u^(1/(2 beta)), (u/t)^(1/2))
    * p = c: u^(1/(2 beta)) if x <= 1, else (u/t)^(1/2) (1 + log x)
    * p < c: u^(1/(2 beta)) min(1, x^(-p/(2 beta d)))

    and ``constant`` is an explicit C with series <= C * case_bound.
    """
    if not (0 < u <= 1 and t >= 1 and p > 0 and 0 < beta <= 0.5 and d >= 1):
        raise InvalidArgument("need u in (0,1], t >= 1, p > 0, beta in (0,1/2], d >= 1")
    c = d * (1.0 - beta)
    a = u ** (1.0 / (2.0 * beta))
    b = math.sqrt(u / t)
    ratio = a / b
    l0 = 0 if ratio <= 1 else max(0, math.ceil(math.log2(ratio) / c))
    while l0 > 0 and b * 2.0 ** (c * (l0 - 1)) >= a:
        l0 -= 1
    while b * 2.0 ** (c * l0) < a:
        l0 += 1
    levels = np.arange(l0, dtype=float)
    head = float(np.sum(b * 2.0 ** ((c - p) * levels)))
    series = head + a * 2.0 ** (-p * l0) / (1.0 - 2.0 ** (-p))

    x = u * t ** (beta / (1.0 - beta))
    tail = 1.0 / (1.0 - 2.0 ** (-p))
    if math.isclose(p, c, rel_tol=1e-12):
        regime = "p=d(1-beta)"
        bound = a if x <= 1 else b * (1.0 + math.log(x))
        constant = 1.0 + tail + 1.0 / (2.0 * beta * d * math.log(2.0))
    elif p > c:
        regime = "p>d(1-beta)"
        bound = min(a, b)
        constant = 1.0 / (1.0 - 2.0 ** (c - p)) + tail
    else:
        regime = "p<d(1-beta)"
        bound = a * min(1.0, x ** (-p / (2.0 * beta * d)))
        constant = 2.0**c / (2.0 ** (c - p) - 1.0) + tail
    return LtValue(series, bound, regime, constant, l0)


# --------------------------------------------------------------------------- #
# Serialization


def save_histogram(h: DyadicHistogram, path):
    """Sparse triplet CSV: a ``# d,max_ring,depth,overflow`` line then ``n,level,cell,mass``."""
    with open(path, "w") as fh:
        fh.write(f"# {h.dim},{h.max_ring},{h.depth},{h.overflow_mass!r}\n")
        fh.write("n,level,cell,mass\n")
        for (n, level) in sorted(h.cells):
            ids, m = h.cells[(n, level)]
            for i, v in zip(ids, m):
                fh.write(f"{n},{level},{int(i)},{float(v)!r}\n")


def load_histogram(path) -> DyadicHistogram:
    """Inverse of :func:`save_histogram` (moment information is not stored)."""
    with open(path) as fh:
        d, max_ring, depth, overflow = fh.readline()[1:].strip().split(",")
        fh.readline()
        rows = [line.strip().split(",") for line in fh if line.strip()]
    d, max_ring, depth = int(d), int(max_ring), int(depth)
    grouped = {}
    for n, level, cell, mass in rows:
        grouped.setdefault((int(n), int(level)), []).append((int(cell), float(mass)))
    cells = {
        k: (np.array([c for c, _ in v], np.int64), np.array([m for _, m in v]))
        for k, v in grouped.items()
    }
    ring_mass = np.zeros(max_ring + 1)
    for (n, level), (_, m) in cells.items():
        if level == 0:
            ring_mass[n] = m.sum()
    return DyadicHistogram(d, max_ring, depth, cells, float(overflow), ring_mass)
