"""Experiment configuration: an INI file with flat sectioned keys.

Sections
--------
``[process]``
    ``drift`` (linear | double_well | weak_mean_reverting) and its parameters
    (``rate``; ``nonconvexity``, ``curvature``, ``radius``; ``exponent``,
    ``strength``, ``inner_radius``), ``dim``, ``sigma`` (scalar or comma list of
    diagonal entries), ``noise`` (brownian | fbm | moving_average), ``hurst``,
    and for moving averages ``zeta``, ``t0``, ``past_truncation``.
``[target]``
    ``kind`` (closed-form | surrogate | self); surrogates read ``burn_in``,
    ``size``, ``seed``, ``dt``.
``[experiment]``
    ``p``, ``t_min``, ``t_max``, ``ratio``, ``replications``, ``dt``,
    ``burn_in``, ``start`` (stationary | origin), ``base_seed``, ``metric``
    (exact-1d | fg-sum | exact-small), ``thinning``, ``max_ring``, ``depth``.
``[theory]``
    ``source`` (abstract | poincare | nonmarkov | limit | shorthand |
    fractional | fou | none), the rate parameters ``q``, ``d``, ``beta``,
    ``gamma``, ``zeta``, ``hurst``, ``epsilon``, and ``slope_tolerance``.
``[output]``
    ``directory``.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ErgowassError
from ..noise import KernelSpec
from ..process import ProcessSpec
from ..rates import (
    RegimeInput,
    abstract_rate,
    fractional_rate,
    limit_rate_wp,
    nonmarkov_rate,
    nonmarkov_shorthand,
    poincare_rate,
)
from ..sde import ConstantDiffusion, DoubleWellDrift, LinearDrift, WeakMeanRevertingDrift

__all__ = ["ExperimentConfig", "load_config", "parse_config", "METRICS", "TARGET_KINDS"]

METRICS = ("exact-1d", "fg-sum", "exact-small")
TARGET_KINDS = ("closed-form", "surrogate", "self")
STARTS = ("stationary", "origin")


def _get(section, key, cast=float, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigError(f"missing key [{section.name}] {key}")
        return default
    raw = section[key].strip()
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for [{section.name}] {key}: {raw!r}") from exc


def _int(raw):
    value = float(raw)
    if value != int(value):
        raise ValueError(raw)
    return int(value)


def _floats(raw):
    return [float(v) for v in raw.split(",") if v.strip()]


@dataclass(frozen=True)
class ExperimentConfig:
    process: ProcessSpec
    target_kind: str
    p: float
    times: tuple
    replications: int
    dt: float
    burn_in: float
    start: str
    base_seed: int
    metric: str
    thinning: int
    max_ring: int
    depth: int | None
    theory_source: str
    theory_params: dict
    slope_tolerance: float
    surrogate: dict
    output_dir: str
    text: str

    @property
    def dim(self):
        return self.process.dim

    @property
    def config_hash(self):
        """First 16 hex digits of the SHA-256 of the canonical text, [output] excluded."""
        parser = _parser_from_text(self.text)
        parser.remove_section("output")
        buf = io.StringIO()
        parser.write(buf)
        return hashlib.sha256(buf.getvalue().encode()).hexdigest()[:16]

    def with_overrides(self, seed=None, out=None, replications=None):
        parser = _parser_from_text(self.text)
        if seed is not None:
            parser["experiment"]["base_seed"] = str(int(seed))
        if out is not None:
            if not parser.has_section("output"):
                parser.add_section("output")
            parser["output"]["directory"] = str(out)
        if replications is not None:
            parser["experiment"]["replications"] = str(int(replications))
        return _build(parser)

    def theory(self):
        """Theoretical exponent of E W_p^p (or None when no source is configured)."""
        src, prm, p = self.theory_source, self.theory_params, self.p
        d = int(prm.get("d", self.dim))
        try:
            if src == "none":
                return None
            if src == "abstract":
                return abstract_rate(
                    RegimeInput(p, prm["q"], d, prm.get("beta", 0.5), prm.get("gamma", 0.5))
                )
            if src == "poincare":
                return poincare_rate(p, prm.get("q", 1e6), d)
            if src == "nonmarkov":
                return nonmarkov_rate(p, prm.get("q", 1e6), d, prm.get("gamma", 0.5))
            if src == "limit":
                return limit_rate_wp(p, d, prm.get("beta", 0.5), prm.get("gamma", 0.5)).as_moment(p)
            if src == "shorthand":
                return nonmarkov_shorthand(
                    p, d, prm.get("gamma", 0.5), prm.get("epsilon", 0.0)
                ).as_moment(p)
            if src == "fractional":
                return fractional_rate(
                    prm.get("zeta"), prm.get("hurst"), p, d, prm.get("epsilon", 0.0)
                ).as_moment(p)
            if src == "fou":
                return fractional_rate(hurst=prm.get("hurst"), p=p, d=d, fou=True).as_moment(p)
        except (KeyError, ErgowassError) as exc:
            raise ConfigError(f"theory source {src!r}: {exc}") from exc
        raise ConfigError(f"unknown theory source {src!r}")


def _parser_from_text(text):
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from exc
    return parser


def _process(sec):
    kind = _get(sec, "drift", str, required=True)
    dim = _get(sec, "dim", _int, 1)
    sigma = _get(sec, "sigma", _floats, [1.0])
    if len(sigma) == 1:
        sigma = sigma * dim
    if len(sigma) != dim or any(s <= 0 for s in sigma):
        raise ConfigError("sigma needs one positive entry or one per dimension")
    try:
        if kind == "linear":
            drift = LinearDrift(_get(sec, "rate", float, 1.0))
        elif kind == "double_well":
            drift = DoubleWellDrift(
                _get(sec, "nonconvexity", float, 1.0),
                _get(sec, "curvature", float, 1.0),
                _get(sec, "radius", float, 1.0),
            )
        elif kind == "weak_mean_reverting":
            drift = WeakMeanRevertingDrift(
                _get(sec, "exponent", float, 0.5),
                _get(sec, "strength", float, 1.0),
                _get(sec, "inner_radius", float, 1.0),
            )
        else:
            raise ConfigError(f"unknown drift {kind!r}")
        noise = _get(sec, "noise", str, "brownian")
        kernel = None
        if noise == "moving_average":
            kernel = KernelSpec(
                hurst=_get(sec, "hurst", float, 0.5),
                zeta=_get(sec, "zeta", float, required=True),
                t0=_get(sec, "t0", float, 1.0),
                past_truncation=_get(sec, "past_truncation", float, required=True),
            )
        return ProcessSpec(
            drift, ConstantDiffusion(np.diag(sigma)), noise, _get(sec, "hurst", float), kernel
        )
    except ErgowassError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"[process]: {exc}") from exc


def _build(parser):
    for name in ("process", "experiment"):
        if not parser.has_section(name):
            raise ConfigError(f"missing section [{name}]")
    process = _process(parser["process"])
    ex = parser["experiment"]
    p = _get(ex, "p", float, 1.0)
    t_min = _get(ex, "t_min", float, required=True)
    t_max = _get(ex, "t_max", float, required=True)
    ratio = _get(ex, "ratio", float, 2.0)
    if not (p >= 1 and t_min > 0 and t_max >= t_min and ratio > 1):
        raise ConfigError("need p >= 1, 0 < t_min <= t_max and ratio > 1")
    n_t = int(math.floor(math.log(t_max / t_min) / math.log(ratio) + 1e-9)) + 1
    times = tuple(float(t_min * ratio**k) for k in range(n_t))
    replications = _get(ex, "replications", _int, 8)
    if replications < 8:
        raise ConfigError("replications must be at least 8")
    dt = _get(ex, "dt", float, 2.0**-8)
    burn_in = _get(ex, "burn_in", float, 0.0)
    if not dt > 0 or burn_in < 0:
        raise ConfigError("need dt > 0 and burn_in >= 0")
    for t in times + (burn_in,):
        if not math.isclose(round(t / dt) * dt, t, rel_tol=1e-9, abs_tol=1e-12):
            raise ConfigError(f"time {t} is not a multiple of dt {dt}")
    start = _get(ex, "start", str, "stationary")
    if start not in STARTS:
        raise ConfigError(f"start must be one of {STARTS}")
    metric = _get(ex, "metric", str, "exact-1d")
    if metric not in METRICS:
        raise ConfigError(f"metric must be one of {METRICS}")
    if metric == "exact-1d" and process.dim != 1:
        raise ConfigError("exact-1d needs a one-dimensional process")
    thinning = _get(ex, "thinning", _int, 1)
    if thinning < 1:
        raise ConfigError("thinning must be positive")

    tg = parser["target"] if parser.has_section("target") else {}
    kind = tg.get("kind", "closed-form").strip() if tg else "closed-form"
    if kind not in TARGET_KINDS:
        raise ConfigError(f"target kind must be one of {TARGET_KINDS}")
    if kind == "closed-form" and not isinstance(process.drift, LinearDrift):
        raise ConfigError("closed-form targets exist only for linear drifts")
    if kind == "closed-form" and process.noise == "moving_average":
        raise ConfigError("no closed-form target for moving-average noise; use a surrogate")
    if start == "stationary" and kind != "closed-form":
        raise ConfigError("a stationary start needs a closed-form target")
    surrogate = {}
    if kind == "surrogate":
        sec = parser["target"]
        surrogate = {
            "burn_in": _get(sec, "burn_in", float, 16.0),
            "size": _get(sec, "size", _int, 2**16),
            "seed": _get(sec, "seed", _int, 0),
            "dt": _get(sec, "dt", float, dt),
        }

    th = parser["theory"] if parser.has_section("theory") else None
    source = th.get("source", "none").strip() if th is not None else "none"
    params = {}
    if th is not None:
        for key in ("q", "d", "beta", "gamma", "zeta", "hurst", "epsilon"):
            if key in th:
                params[key] = _get(th, key, float)
    if "hurst" not in params and process.hurst is not None:
        params["hurst"] = process.hurst
    tol = _get(th, "slope_tolerance", float, 0.1) if th is not None else 0.1

    out = "out"
    if parser.has_section("output"):
        out = parser["output"].get("directory", out).strip()

    buf = io.StringIO()
    parser.write(buf)
    cfg = ExperimentConfig(
        process=process,
        target_kind=kind,
        p=p,
        times=times,
        replications=replications,
        dt=dt,
        burn_in=burn_in,
        start=start,
        base_seed=_get(ex, "base_seed", _int, 0),
        metric=metric,
        thinning=thinning,
        max_ring=_get(ex, "max_ring", _int, 8),
        depth=_get(ex, "depth", _int, None),
        theory_source=source,
        theory_params=params,
        slope_tolerance=tol,
        surrogate=surrogate,
        output_dir=out,
        text=buf.getvalue(),
    )
    cfg.theory()
    return cfg


def parse_config(text) -> ExperimentConfig:
    """Build a validated :class:`ExperimentConfig` from INI text."""
    return _build(_parser_from_text(text))


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
