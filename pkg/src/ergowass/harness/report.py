"""CSV tables, JSON sidecars and log-log SVG plots of experiment series."""

from __future__ import annotations

import csv
import json
import math
import os
import xml.etree.ElementTree as ET

import numpy as np

from ..errors import InvalidArgument
from .experiment import ExperimentResult

__all__ = ["emit_report", "write_csv", "read_csv", "write_sidecar", "read_sidecar", "render_svg"]

CSV_HEADER = ["t", "mean", "se", "n"]
_W, _H, _PAD = 640, 420, 60


def write_csv(result: ExperimentResult, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for t, m, s, n in zip(result.times, result.means, result.ses, result.counts):
            writer.writerow([repr(float(t)), repr(float(m)), repr(float(s)), int(n)])


def read_csv(path):
    """Arrays (t, mean, se, n) from a series CSV."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise InvalidArgument(f"{path}: expected header {CSV_HEADER}, got {header}")
        rows = [r for r in reader if r]
    t = np.array([float(r[0]) for r in rows])
    m = np.array([float(r[1]) for r in rows])
    s = np.array([float(r[2]) for r in rows])
    n = np.array([int(r[3]) for r in rows], dtype=int)
    return t, m, s, n


def write_sidecar(result: ExperimentResult, path):
    fit = result.fit
    doc = {
        "config_hash": result.config_hash,
        "base_seed": result.base_seed,
        "replication_seeds": [int(s) for s in result.seeds],
        "fit": None
        if fit is None
        else {"slope": fit.slope, "intercept": fit.intercept, "slope_se": fit.slope_se,
              "residual": fit.residual},
        "theory": None
        if result.theory is None
        else {"exponent": result.theory.exponent, "log_factor": result.theory.log_factor,
              "regime": result.theory.regime, "boundary": result.theory.boundary},
        "verdict": None
        if result.verdict is None
        else {"passed": result.verdict.passed, "slope": result.verdict.slope,
              "theory_exponent": result.verdict.theory_exponent,
              "tolerance": result.verdict.tolerance},
        "sampling_floor": result.sampling_floor,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_sidecar(path):
    with open(path) as fh:
        return json.load(fh)


def render_svg(times, means, fit=None, theory_exponent=None, title=""):
    """Log-log scatter of (times, means) with the fitted line and a theory-slope guide.

    ``fit`` is a (slope, intercept) pair in natural-log coordinates; the guide
    has slope -theory_exponent and passes through the first point.
    """
    svg = ET.Element(
        "svg", xmlns="http://www.w3.org/2000/svg", width=str(_W), height=str(_H),
        viewBox=f"0 0 {_W} {_H}",
    )
    ET.SubElement(svg, "title").text = title or "log-log series"
    ET.SubElement(
        svg, "rect", x="0", y="0", width=str(_W), height=str(_H), fill="white"
    )
    times = np.asarray(times, dtype=float)
    means = np.asarray(means, dtype=float)
    ok = (times > 0) & (means > 0)
    if not np.any(ok):
        return ET.tostring(svg, encoding="unicode")
    lx, ly = np.log10(times[ok]), np.log10(means[ok])
    x0, x1 = lx.min() - 0.1, lx.max() + 0.1
    lines = [ly]
    if fit is not None:
        lines.append((fit[1] + fit[0] * np.log(times[ok])) / math.log(10))
    y0 = min(v.min() for v in lines) - 0.1
    y1 = max(v.max() for v in lines) + 0.1

    def sx(v):
        return _PAD + (v - x0) / (x1 - x0) * (_W - 2 * _PAD)

    def sy(v):
        return _H - _PAD - (v - y0) / (y1 - y0) * (_H - 2 * _PAD)

    axes = ET.SubElement(svg, "g", {"class": "axes", "stroke": "black"})
    ET.SubElement(axes, "line", x1=str(_PAD), y1=str(_H - _PAD), x2=str(_W - _PAD), y2=str(_H - _PAD))
    ET.SubElement(axes, "line", x1=str(_PAD), y1=str(_PAD), x2=str(_PAD), y2=str(_H - _PAD))
    ET.SubElement(svg, "text", {"text-anchor": "middle"}, x=str(_W / 2), y=str(_H - 15)).text = "log10 t"
    ET.SubElement(svg, "text", x="15", y=str(_H / 2)).text = "log10 mean"
    pts = ET.SubElement(svg, "g", {"class": "points", "fill": "steelblue"})
    for a, b in zip(lx, ly):
        ET.SubElement(pts, "circle", cx=f"{sx(a):.2f}", cy=f"{sy(b):.2f}", r="4")
    if fit is not None:
        slope, intercept = fit
        ya = (intercept + slope * x0 * math.log(10)) / math.log(10)
        yb = (intercept + slope * x1 * math.log(10)) / math.log(10)
        ET.SubElement(
            svg, "line", {"class": "fit", "stroke": "crimson", "stroke-width": "2"},
            x1=f"{sx(x0):.2f}", y1=f"{sy(ya):.2f}", x2=f"{sx(x1):.2f}", y2=f"{sy(yb):.2f}",
        )
    if theory_exponent is not None:
        ya = ly[0]
        yb = ly[0] - theory_exponent * (x1 - lx[0])
        ET.SubElement(
            svg, "line",
            {"class": "theory", "stroke": "gray", "stroke-dasharray": "6,4"},
            x1=f"{sx(lx[0]):.2f}", y1=f"{sy(ya):.2f}", x2=f"{sx(x1):.2f}", y2=f"{sy(yb):.2f}",
        )
    return ET.tostring(svg, encoding="unicode")


def emit_report(result: ExperimentResult, fmt, out_dir, stem=None):
    """Write ``csv`` (table plus JSON sidecar) or ``svg`` output; returns the written paths.

    File names are ``<stem>.csv``, ``<stem>.json`` and ``<stem>.svg`` with the
    stem defaulting to ``series-<config hash>``.
    """
    os.makedirs(out_dir, exist_ok=True)
    stem = stem or f"series-{result.config_hash or 'nohash'}"
    base = os.path.join(out_dir, stem)
    if fmt == "csv":
        write_csv(result, base + ".csv")
        write_sidecar(result, base + ".json")
        return [base + ".csv", base + ".json"]
    if fmt == "svg":
        fit = None if result.fit is None else (result.fit.slope, result.fit.intercept)
        theory = None if result.theory is None else result.theory.exponent
        with open(base + ".svg", "w") as fh:
            fh.write(render_svg(result.times, result.means, fit, theory, stem))
        return [base + ".svg"]
    raise InvalidArgument(f"unknown report format {fmt!r}")
