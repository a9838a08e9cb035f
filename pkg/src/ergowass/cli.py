"""Command line entry point: ``ergowass {simulate,rate,verify,covcheck,plot}``.

Exit codes: 0 when every verdict passes, 1 when any verdict fails, 2 on a
configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import glob
import json
import math
import os
import sys

import numpy as np

from .covariance import lemma_rows, variance_decay_check, write_lemma_report
from .errors import ConfigError, ErgowassError
from .harness.config import load_config
from .harness.experiment import build_target, occupation_windows, run_experiment, simulate_replication
from .harness.report import emit_report, read_csv, read_sidecar, render_svg
from .occupation import save_point_cloud
from .rates import rate_table, write_rate_table

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

DEFAULT_RATE_GRID = {
    "p": "0.5,1,2,3",
    "q": "4,10,100",
    "d": "1,2,3,4",
    "beta": "0.25,0.5",
    "gamma": "0.5",
}


def _config(args):
    if not args.config:
        raise ConfigError("--config is required for this command")
    cfg = load_config(args.config)
    return cfg.with_overrides(seed=args.seed, out=args.out)


def _out_dir(args, cfg=None):
    if args.out:
        return args.out
    return cfg.output_dir if cfg is not None else "out"


def cmd_simulate(args):
    cfg = _config(args)
    reps = args.replications or cfg.replications
    target = build_target(cfg) if cfg.start == "stationary" else None
    cache = os.path.join(_out_dir(args, cfg), "cache")
    os.makedirs(cache, exist_ok=True)
    for r in range(reps):
        path = simulate_replication(cfg, target, r)
        measure = occupation_windows(cfg, path)[-1]
        dest = os.path.join(cache, f"occupation-{cfg.config_hash}-r{r}.bin")
        save_point_cloud(measure, dest)
        print(f"replication {r}: {measure.count} points over t={measure.t_effective:g} -> {dest}")
    return EXIT_OK


def _floats(raw):
    return [float(v) for v in raw.split(",") if v.strip()]


def cmd_rate(args):
    grid = dict(DEFAULT_RATE_GRID)
    if args.config:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            parser.read(args.config)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        if parser.has_section("rate_table"):
            grid.update({k: v for k, v in parser["rate_table"].items() if k in grid})
        if parser.has_section("experiment"):
            cfg = _config(args)
            res = cfg.theory()
            if res is not None:
                print(
                    f"theory [{cfg.theory_source}]: E W_p^p exponent {res.exponent:.6g}, "
                    f"log factor {res.log_factor}, regime {res.regime}, boundary {res.boundary}"
                )
    try:
        rows = rate_table(*(_floats(grid[k]) for k in ("p", "q")),
                          [int(v) for v in _floats(grid["d"])],
                          *(_floats(grid[k]) for k in ("beta", "gamma")))
    except (ValueError, ErgowassError) as exc:
        raise ConfigError(f"[rate_table]: {exc}") from exc
    out = _out_dir(args)
    os.makedirs(out, exist_ok=True)
    dest = os.path.join(out, "rate_table.csv")
    with open(dest, "w", newline="") as fh:
        write_rate_table(rows, fh)
    print(f"{len(rows)} rate rows -> {dest}")
    return EXIT_OK


def cmd_verify(args):
    cfg = _config(args)
    result = run_experiment(cfg, jobs=args.jobs)
    out = _out_dir(args, cfg)
    files = emit_report(result, "csv", out) + emit_report(result, "svg", out)
    for t, m, s in zip(result.times, result.means, result.ses):
        print(f"t={t:<10g} mean={m:.6g} se={s:.3g}")
    print("wrote " + ", ".join(files))
    if result.verdict is None:
        print("no theory comparison configured")
        return EXIT_OK
    print(result.verdict.describe())
    return EXIT_OK if result.verdict.passed else EXIT_FAIL


def cmd_covcheck(args):
    sec = {}
    if args.config:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            parser.read(args.config)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        if parser.has_section("covcheck"):
            sec = dict(parser["covcheck"])
    try:
        seed = args.seed if args.seed is not None else int(sec.get("seed", 0))
        rhos = _floats(sec.get("rhos", "-0.5,-0.3,-0.1,0.1,0.3,0.5"))
        samples = int(float(sec.get("samples", 200000)))
        hursts = _floats(sec.get("hurst", "0.3,0.75"))
        thresholds = _floats(sec.get("thresholds", "-1,1"))
        reps = int(sec.get("replications", 256))
        dt = float(sec.get("dt", 0.125))
        t_min, t_max = float(sec.get("t_min", 64)), float(sec.get("t_max", 8192))
    except ValueError as exc:
        raise ConfigError(f"[covcheck]: {exc}") from exc
    if not t_max > t_min > 0:
        raise ConfigError("[covcheck]: need 0 < t_min < t_max")
    out = _out_dir(args)
    os.makedirs(out, exist_ok=True)
    rows = lemma_rows(rhos=rhos, samples=samples, seed=seed)
    with open(os.path.join(out, "lemma_report.csv"), "w", newline="") as fh:
        write_lemma_report(rows, fh)
    ok = all(r[-1] for r in rows)
    print(f"covariance bound: {sum(r[-1] for r in rows)}/{len(rows)} rows within the bound")
    times = 2.0 ** np.arange(math.log2(t_min), math.log2(t_max) + 0.5)
    with open(os.path.join(out, "variance_decay.csv"), "w") as fh:
        fh.write("hurst,threshold,exponent,target,pass\n")
        for h in hursts:
            rep = variance_decay_check(hurst=h, thresholds=thresholds, times=times,
                                       replications=reps, seed=seed, dt=dt)
            for a in thresholds:
                e = rep.exponents[a]
                fh.write(f"{h!r},{a!r},{e!r},{rep.target_exponent!r},{int(rep.passed[a])}\n")
                shown = "n/a (identically zero)" if e is None else f"{e:.4f}"
                print(f"H={h}: half-line a={a}: exponent {shown} vs {rep.target_exponent:.4f}"
                      f" -> {'pass' if rep.passed[a] else 'FAIL'}")
            ok = ok and rep.all_pass
    return EXIT_OK if ok else EXIT_FAIL


def cmd_plot(args):
    cfg = load_config(args.config).with_overrides(out=args.out) if args.config else None
    out = _out_dir(args, cfg)
    pattern = f"series-{cfg.config_hash}.csv" if cfg is not None else "series-*.csv"
    files = sorted(glob.glob(os.path.join(out, pattern)))
    if not files:
        raise ConfigError(f"no cached series matching {pattern} in {out}")
    for path in files:
        t, m, _, _ = read_csv(path)
        side = path[:-4] + ".json"
        fit = theory = None
        if os.path.exists(side):
            doc = read_sidecar(side)
            if doc.get("fit"):
                fit = (doc["fit"]["slope"], doc["fit"]["intercept"])
            if doc.get("theory"):
                theory = doc["theory"]["exponent"]
        dest = path[:-4] + ".svg"
        with open(dest, "w") as fh:
            fh.write(render_svg(t, m, fit, theory, os.path.basename(path[:-4])))
        print(f"rendered {dest}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "rate": cmd_rate,
    "verify": cmd_verify,
    "covcheck": cmd_covcheck,
    "plot": cmd_plot,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="ergowass", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="experiment INI file")
        p.add_argument("--seed", type=int, help="override the base seed")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        p.add_argument("--out", help="output directory")
        if name == "simulate":
            p.add_argument("--replications", type=int, help="number of paths to cache")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ErgowassError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
