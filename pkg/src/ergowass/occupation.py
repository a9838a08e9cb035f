"""Occupation measures of sampled paths: construction, moments, ring masses, caching."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument

__all__ = [
    "OccupationMeasure",
    "build_occupation",
    "moment",
    "ring_index",
    "ring_mass",
    "ring_masses",
    "save_point_cloud",
    "load_point_cloud",
]


@dataclass(frozen=True)
class OccupationMeasure:
    """Uniformly weighted point cloud.

    Attributes
    ----------
    points : ndarray, shape (count, d)
    t_effective : float
        Length of the time window the cloud represents.
    provenance : dict
        Seed and burn-in of the generating path, when known.
    """

    points: np.ndarray
    t_effective: float
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise InvalidArgument("an occupation measure needs at least one point")
        if not self.t_effective > 0:
            raise InvalidArgument("t_effective must be positive")
        pts = np.array(pts)
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def count(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def weights(self):
        return np.full(self.count, 1.0 / self.count)


def build_occupation(path, burn_in=0.0, thinning=1) -> OccupationMeasure:
    """Occupation measure of ``path`` on the window [burn_in, horizon].

    Grid states with time >= burn_in are kept (every ``thinning``-th one) with
    equal weights; ``path.states`` may be (steps + 1, d) or (steps + 1,).
    """
    if burn_in < 0:
        raise InvalidArgument("burn_in must be non-negative")
    if int(thinning) != thinning or thinning < 1:
        raise InvalidArgument("thinning must be a positive integer")
    times = np.asarray(path.times, dtype=float)
    horizon = float(times[-1])
    if not burn_in < horizon:
        raise InvalidArgument("burn_in must be smaller than the path horizon")
    start = int(np.searchsorted(times, burn_in, side="left"))
    states = np.asarray(path.states, dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    pts = states[start::thinning]
    if pts.shape[0] == 0:
        raise InvalidArgument("empty occupation window")
    prov = {"burn_in": float(burn_in), "thinning": int(thinning)}
    seed = getattr(path, "provenance", {}).get("seed")
    if seed is not None:
        prov["seed"] = seed
    return OccupationMeasure(pts, horizon - burn_in, prov)


def _points(measure):
    if isinstance(measure, OccupationMeasure):
        return measure.points
    pts = np.asarray(getattr(measure, "points", measure), dtype=float)
    return pts[:, None] if pts.ndim == 1 else pts


def moment(measure, q) -> float:
    """M(q) = mean of |x|^q (Euclidean norm) under uniform weights."""
    if not q > 0:
        raise InvalidArgument("q must be positive")
    norms = np.linalg.norm(_points(measure), axis=1)
    return float(np.mean(norms**q))


def ring_index(points):
    """Index n of the ring B_n containing each point (max-norm, half-open rings).

    B_0 = (-1, 1]^d and B_n = (-2^n, 2^n]^d minus (-2^(n-1), 2^(n-1)]^d. A
    coordinate x lies in (-2^n, 2^n] iff -2^n < x <= 2^n, so the ring of a point
    is the smallest n with that property for every coordinate.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if not np.all(np.isfinite(pts)):
        raise InvalidArgument("points must be finite")
    # per coordinate: smallest n >= 0 with x <= 2^n (x > 0) or x > -2^n (x <= 0)
    pos = np.where(pts > 0, pts, 0.0)
    neg = np.where(pts < 0, -pts, 0.0)
    # x <= 2^n  <=>  n >= ceil(log2 x); frexp gives x = m 2^e with m in [0.5, 1)
    m, e = np.frexp(pos)
    n_pos = np.where(m == 0.5, e - 1, e)
    # -x < 2^n strictly  <=>  n > log2(-x)  <=>  n = floor(log2(-x)) + 1
    n_neg = np.frexp(neg)[1]
    n = np.maximum(np.where(pos > 0, n_pos, 0), np.where(neg > 0, n_neg, 0))
    return np.maximum(n, 0).max(axis=1).astype(np.int64)


def ring_masses(measure, max_ring=None):
    """Masses of the rings 0..max_ring and the overflow beyond max_ring."""
    idx = ring_index(_points(measure))
    top = int(idx.max()) if max_ring is None else int(max_ring)
    counts = np.bincount(np.minimum(idx, top + 1), minlength=top + 2)
    masses = counts / idx.shape[0]
    return masses[: top + 1], float(masses[top + 1])


def ring_mass(measure, n) -> float:
    """Fraction of mass of ``measure`` in the ring B_n."""
    if int(n) != n or n < 0:
        raise InvalidArgument("ring index must be a non-negative integer")
    idx = ring_index(_points(measure))
    return float(np.count_nonzero(idx == n) / idx.shape[0])


_BIN_HEADER = struct.Struct("<qqd")


def save_point_cloud(measure: OccupationMeasure, path, fmt=None):
    """Write the cloud as CSV (``d,count,t_effective`` header) or little-endian binary.

    The binary layout is int64 d, int64 count, float64 t_effective followed by
    row-major float64 coordinates. ``fmt`` defaults to the file suffix.
    """
    path = str(path)
    fmt = fmt or ("csv" if path.endswith(".csv") else "bin")
    pts = measure.points
    if fmt == "csv":
        with open(path, "w") as fh:
            fh.write(f"{measure.dim},{measure.count},{measure.t_effective!r}\n")
            for row in pts:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
    elif fmt == "bin":
        with open(path, "wb") as fh:
            fh.write(_BIN_HEADER.pack(measure.dim, measure.count, float(measure.t_effective)))
            fh.write(np.ascontiguousarray(pts, dtype="<f8").tobytes())
    else:
        raise InvalidArgument(f"unknown point-cloud format {fmt!r}")


def load_point_cloud(path, fmt=None) -> OccupationMeasure:
    """Inverse of :func:`save_point_cloud`."""
    path = str(path)
    fmt = fmt or ("csv" if path.endswith(".csv") else "bin")
    if fmt == "csv":
        with open(path) as fh:
            d, count, t_eff = fh.readline().strip().split(",")
            d, count = int(d), int(count)
            rows = [[float(v) for v in line.split(",")] for line in fh if line.strip()]
        pts = np.array(rows, dtype=float).reshape(count, d)
        return OccupationMeasure(pts, float(t_eff))
    with open(path, "rb") as fh:
        d, count, t_eff = _BIN_HEADER.unpack(fh.read(_BIN_HEADER.size))
        pts = np.frombuffer(fh.read(), dtype="<f8").reshape(count, d)
    if not math.isfinite(t_eff):
        raise InvalidArgument("corrupt point-cloud header")
    return OccupationMeasure(pts.copy(), t_eff)
