"""Run a configured experiment: simulate, measure W_p^p along prefix windows, fit, compare."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergenceError
from ..occupation import OccupationMeasure
from ..rates import FitResult, RateResult, fit_rate
from ..targets import GaussianDiag, Gaussian1D, fou_variance, surrogate_invariant
from ..wasserstein import (
    fg_multiscale_sum,
    gaussian_histogram,
    histogramize,
    wasserstein_1d_exact,
    wasserstein_1d_to_law,
    wasserstein_exact_small,
)
from .config import ExperimentConfig

__all__ = [
    "ExperimentResult",
    "Verdict",
    "replication_seed",
    "start_seed",
    "build_target",
    "replicate",
    "occupation_windows",
    "run_experiment",
    "compare_to_theory",
]

SMALL_SUPPORT = 64


def replication_seed(base_seed, r):
    """Seed of replication ``r``: first word of SeedSequence(base_seed, spawn_key=(r,))."""
    ss = np.random.SeedSequence(int(base_seed), spawn_key=(int(r),))
    return int(ss.generate_state(1, np.uint64)[0])


def start_seed(base_seed, r):
    """Seed of the initial condition draw of replication ``r``."""
    ss = np.random.SeedSequence(int(base_seed), spawn_key=(int(r), 1))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class Verdict:
    passed: bool
    slope: float
    theory_exponent: float
    tolerance: float

    def describe(self):
        word = "PASS" if self.passed else "FAIL"
        return (
            f"{word}: fitted slope {self.slope:.4f} vs bound "
            f"{-self.theory_exponent + self.tolerance:.4f} "
            f"(theory exponent {self.theory_exponent:.4f}, tolerance {self.tolerance})"
        )


@dataclass
class ExperimentResult:
    times: np.ndarray
    means: np.ndarray
    ses: np.ndarray
    counts: np.ndarray
    fit: FitResult | None = None
    theory: RateResult | None = None
    verdict: Verdict | None = None
    seeds: list = field(default_factory=list)
    base_seed: int = 0
    config_hash: str = ""
    sampling_floor: float | None = None
    values: np.ndarray | None = None

    @classmethod
    def empty(cls):
        z = np.empty(0)
        return cls(z, z, z, np.empty(0, dtype=int))

    @property
    def seed_range(self):
        return (0, len(self.seeds) - 1) if self.seeds else None


def compare_to_theory(result, rate, slope_tolerance) -> Verdict:
    """One-sided check: pass iff fitted slope <= -(theory exponent) + tolerance.

    ``result`` may be an :class:`ExperimentResult` or a bare slope. The exponent
    is the one of E W_p^p, the quantity whose mean is fitted.
    """
    slope = result if isinstance(result, (int, float)) else result.fit.slope
    exponent = rate.exponent if isinstance(rate, RateResult) else float(rate)
    return Verdict(bool(slope <= -exponent + slope_tolerance), float(slope), exponent, slope_tolerance)


def build_target(cfg: ExperimentConfig):
    """Closed-form Gaussian, surrogate cloud, or None for self-distance."""
    proc = cfg.process
    if cfg.target_kind == "self":
        return None
    if cfg.target_kind == "surrogate":
        s = cfg.surrogate
        return surrogate_invariant(proc, s["burn_in"], s["size"], s["seed"], s["dt"])
    lam = proc.drift.rate
    sig = np.diag(proc.diffusion.matrix)
    if proc.noise == "fbm":
        var = np.array([fou_variance(lam, s, proc.hurst) for s in sig])
    else:
        var = sig**2 / (2.0 * lam)
    if proc.dim == 1:
        return Gaussian1D(0.0, float(var[0]))
    return GaussianDiag(np.zeros(proc.dim), var)


def _target_histogram(cfg, target):
    if cfg.metric != "fg-sum" or target is None:
        return None
    if isinstance(target, Gaussian1D):
        return gaussian_histogram([target.mean], [target.variance], cfg.max_ring, cfg.depth)
    if isinstance(target, GaussianDiag):
        return gaussian_histogram(target.mean, target.variances, cfg.max_ring, cfg.depth)
    return histogramize(target.points, cfg.max_ring, cfg.depth)


def _initial_state(cfg, target, r):
    if cfg.start == "origin":
        return np.zeros(cfg.dim)
    draw = target.sample(1, start_seed(cfg.base_seed, r))
    return np.atleast_1d(np.asarray(draw, dtype=float).reshape(-1))


def simulate_replication(cfg: ExperimentConfig, target, r):
    """Full path of replication ``r`` over [0, burn_in + max t]."""
    steps = int(round((cfg.burn_in + cfg.times[-1]) / cfg.dt))
    seed = replication_seed(cfg.base_seed, r)
    try:
        return cfg.process.simulate(_initial_state(cfg, target, r), cfg.dt, steps, seed)
    except DivergenceError as exc:
        raise DivergenceError(
            f"replication {r} (seed {seed}) diverged: {exc}", exc.step, seed
        ) from exc


def occupation_windows(cfg: ExperimentConfig, path):
    """Occupation measures on the prefix windows [burn_in, burn_in + t_k], grid points inclusive."""
    start = int(round(cfg.burn_in / cfg.dt))
    out = []
    for t in cfg.times:
        stop = start + int(round(t / cfg.dt))
        pts = path.states[start : stop + 1 : cfg.thinning]
        out.append(OccupationMeasure(pts, t, {"burn_in": cfg.burn_in}))
    return out


def _metric(cfg, target, target_hist, measure, r, k):
    pts = measure.points
    p = cfg.p
    if cfg.metric == "exact-1d":
        if target is None:
            return wasserstein_1d_exact(pts, pts, p) ** p
        if isinstance(target, Gaussian1D):
            return wasserstein_1d_to_law(pts, target, p) ** p
        return wasserstein_1d_exact(pts, target.points, p) ** p
    if cfg.metric == "fg-sum":
        h = histogramize(pts, cfg.max_ring, cfg.depth)
        return fg_multiscale_sum(h, h if target is None else target_hist, p).value
    m = min(SMALL_SUPPORT, pts.shape[0])
    sub = pts[np.linspace(0, pts.shape[0] - 1, m).astype(int)]
    if target is None:
        return 0.0
    ref = np.asarray(target.sample(m, [replication_seed(cfg.base_seed, r), k]), dtype=float)
    return wasserstein_exact_small(sub, ref.reshape(m, -1), p) ** p


def replicate(cfg: ExperimentConfig, target, target_hist, r):
    """Metric values of replication ``r`` at every time of the grid."""
    path = simulate_replication(cfg, target, r)
    return np.array(
        [_metric(cfg, target, target_hist, m, r, k) for k, m in enumerate(occupation_windows(cfg, path))]
    )


def _worker(args):
    return replicate(*args)


def run_experiment(cfg: ExperimentConfig, jobs=1, target=None) -> ExperimentResult:
    """Simulate every replication, aggregate means and standard errors, fit, compare."""
    if target is None:
        target = build_target(cfg)
    target_hist = _target_histogram(cfg, target)
    tasks = [(cfg, target, target_hist, r) for r in range(cfg.replications)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_worker, tasks))
    else:
        rows = [_worker(t) for t in tasks]
    values = np.vstack(rows)
    times = np.asarray(cfg.times)
    means = values.mean(axis=0)
    ses = values.std(axis=0, ddof=1) / math.sqrt(cfg.replications)
    counts = np.full(times.shape, cfg.replications)
    result = ExperimentResult(
        times, means, ses, counts,
        seeds=[replication_seed(cfg.base_seed, r) for r in range(cfg.replications)],
        base_seed=cfg.base_seed, config_hash=cfg.config_hash, values=values,
    )
    if target is not None and hasattr(target, "sampling_floor"):
        result.sampling_floor = target.sampling_floor()
    if times.size >= 3 and np.all(means > 0):
        result.fit = fit_rate(np.column_stack([times, means]))
        result.theory = cfg.theory()
        if result.theory is not None:
            result.verdict = compare_to_theory(result, result.theory, cfg.slope_tolerance)
    return result
