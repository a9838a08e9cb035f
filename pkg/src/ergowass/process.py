"""ProcessSpec: a drift plus a diffusion or additive Gaussian noise, ready to simulate."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .noise import FbmSpec, KernelSpec, sample_brownian, sample_fbm, sample_moving_average
from .sde import (
    ConstantDiffusion,
    StateDependentDiffusion,
    euler_maruyama,
    integrate_additive,
    integrate_batch,
)

__all__ = ["ProcessSpec", "NOISE_KINDS"]

NOISE_KINDS = ("brownian", "fbm", "moving_average")


@dataclass(frozen=True)
class ProcessSpec:
    """One ergodic dynamic dX = b(X) dt + sigma dG.

    ``noise`` selects G: a Brownian motion (``diffusion`` may then be state
    dependent), a fractional Brownian motion of index ``hurst`` or a
    moving-average process with kernel ``kernel``; the last two require a
    constant diffusion matrix.
    """

    drift: object
    diffusion: object
    noise: str = "brownian"
    hurst: float | None = None
    kernel: KernelSpec | None = None

    def __post_init__(self):
        if self.noise not in NOISE_KINDS:
            raise InvalidArgument(f"unknown noise kind {self.noise!r}")
        if self.noise != "brownian" and not isinstance(self.diffusion, ConstantDiffusion):
            raise InvalidArgument("non-Brownian noise requires a constant diffusion matrix")
        if self.noise == "fbm" and (self.hurst is None or not 0 < self.hurst < 1):
            raise InvalidArgument("fbm noise needs hurst in (0, 1)")
        if self.noise == "moving_average" and self.kernel is None:
            raise InvalidArgument("moving-average noise needs a kernel")

    @property
    def dim(self):
        return self.diffusion.dim if isinstance(self.diffusion, ConstantDiffusion) else None

    @property
    def noise_dim(self):
        return self.diffusion.noise_dim

    def canonical(self):
        """Stable text description used for hashing and provenance."""
        parts = [self.drift.describe(), self.diffusion.describe(), self.noise]
        if self.noise == "fbm":
            parts.append(f"hurst={self.hurst!r}")
        if self.noise == "moving_average":
            k = self.kernel
            parts.append(
                f"kernel(hurst={k.hurst!r}, zeta={k.zeta!r}, t0={k.t0!r}, "
                f"past={k.past_truncation!r}, C={k.tail_coefficient!r})"
            )
        return "|".join(parts)

    def content_hash(self, *extra):
        text = self.canonical() + "|" + "|".join(repr(e) for e in extra)
        return hashlib.sha256(text.encode()).hexdigest()

    def noise_path(self, dt, steps, seed, dim=None):
        dim = self.noise_dim if dim is None else dim
        if self.noise == "brownian":
            return sample_brownian(steps, dt, dim=dim, seed=seed)
        if self.noise == "fbm":
            return sample_fbm(FbmSpec(self.hurst, dt * steps, steps), dim=dim, seed=seed)
        return sample_moving_average(self.kernel, steps, dt, dim=dim, seed=seed)

    def simulate(self, x0, dt, steps, seed):
        """Single Euler path from ``x0`` over ``steps`` steps of size ``dt``."""
        noise = self.noise_path(dt, steps, seed)
        if self.noise == "brownian":
            return euler_maruyama(self.drift, self.diffusion, x0, dt, steps, noise=noise)
        return integrate_additive(self.drift, self.diffusion, x0, noise)

    def terminal_states(self, x0, dt, steps, seed, replications):
        """Terminal states of ``replications`` independent paths, shape (R, d)."""
        x0 = np.asarray(x0, dtype=float)
        if x0.ndim == 1:
            x0 = np.broadcast_to(x0, (replications, x0.shape[0])).copy()
        k = self.noise_dim
        noise = self.noise_path(dt, steps, seed, dim=replications * k)
        inc = noise.increments.reshape(steps, replications, k)
        if isinstance(self.diffusion, StateDependentDiffusion) and self.noise != "brownian":
            raise InvalidArgument("state-dependent diffusion needs Brownian noise")
        return integrate_batch(self.drift, self.diffusion, x0, inc, dt)

    def steps_for(self, horizon, dt):
        steps = int(round(horizon / dt))
        if steps < 1 or not math.isclose(steps * dt, horizon, rel_tol=1e-9):
            raise InvalidArgument(f"horizon {horizon} is not a multiple of dt {dt}")
        return steps
