"""Standard report figures from polyflow time-series CSV files.

Inputs are classified by their header: trajectory files carry the simulator
schema (t, E, D, ..., audit_residual, picard columns), closure files carry
(t, closure_deviation).  Emitted figures:

* energy decay curves E(t), D(t),
* audit residual integral vs step size on log-log axes with the fitted
  convergence order (needs trajectory files at two or more step sizes;
  otherwise the per-step residual series is shown),
* per-step fixed-point contraction ratios as bars,
* closure deviation time series,

plus ``summary.txt`` with max E(t)/E(0), the trapezoid integral of D, and
the fitted audit order.  Rendering is deterministic: fixed style, fixed
dpi, raster output with no timestamps, so identical inputs reproduce
identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

__all__ = ["ReportSpec", "SchemaError", "render_report", "main"]

# Documented simulator schema (the consumed external interface).
TRAJECTORY_COLUMNS = (
    "t",
    "E", "E_rho", "E_u", "E_g",
    "D", "D_visc", "D_div", "D_g",
    "E_eta", "D_eta", "cross_term",
    "E_tot_rel", "entropy_rel", "mass_entropy_rel", "D_tot",
    "audit_residual", "audit_residual_norm",
    "min_one_plus_g", "max_abs_m",
    "picard_iters", "picard_last_ratio",
)
CLOSURE_COLUMNS = ("t", "closure_deviation")

FIGURES = ("energy", "audit", "picard", "closure")

_STYLE = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
    "font.size": 9,
    "svg.hashsalt": "polyflow-report",
}


class SchemaError(ValueError):
    """Input file does not match a documented column layout."""


@dataclass
class ReportSpec:
    """What to read and where to put the figures."""

    inputs: list
    out_dir: str
    figures: tuple = FIGURES

    def __post_init__(self):
        for path in self.inputs:
            if not os.path.exists(path):
                raise SchemaError(f"input file does not exist: {path}")
        unknown = set(self.figures) - set(FIGURES)
        if unknown:
            raise SchemaError(f"unknown figure selection: {sorted(unknown)}")


def read_csv(path):
    """-> (kind, columns dict of float arrays); kind in {trajectory, closure}."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty file")
        rows = [row for row in reader if row]
    if tuple(header) == CLOSURE_COLUMNS:
        kind = "closure"
    elif tuple(header) == TRAJECTORY_COLUMNS:
        kind = "trajectory"
    else:
        missing = set(TRAJECTORY_COLUMNS) - set(header)
        raise SchemaError(
            f"{path}: header does not match the documented schema; "
            f"missing columns {sorted(missing)[:4]}"
        )
    data = np.array([[float(v) for v in row] for row in rows])
    if data.size == 0:
        raise SchemaError(f"{path}: no data rows")
    return kind, {name: data[:, i] for i, name in enumerate(header)}


def _nan_filter(*arrays):
    mask = np.ones(len(arrays[0]), dtype=bool)
    for a in arrays:
        mask &= np.isfinite(a)
    return [a[mask] for a in arrays]


def _step_size(t):
    return float(np.median(np.diff(t))) if len(t) > 1 else math.nan


def fit_audit_order(runs):
    """Least-squares slope of log integral(|residual|) against log dt.

    `runs` are trajectory column dicts; returns (order, points) or
    (nan, points) when fewer than two distinct step sizes are present.
    """
    points = []
    for cols in runs:
        t, r = _nan_filter(cols["t"][1:], cols["audit_residual"][1:])
        if len(t) < 2:
            continue
        dt = _step_size(cols["t"])
        integral = float(np.sum(np.abs(r)) * dt)
        if integral > 0 and math.isfinite(dt):
            points.append((dt, integral))
    dts = sorted({round(p[0], 12) for p in points})
    if len(dts) < 2:
        return math.nan, points
    x = np.log([p[0] for p in points])
    y = np.log([p[1] for p in points])
    slope = float(np.polyfit(x, y, 1)[0])
    return slope, points


def _new_axes(title, xlabel, ylabel):
    fig, ax = plt.subplots()
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    return fig, ax


def _save(fig, out_dir, name):
    path = os.path.join(out_dir, name)
    fig.savefig(path, metadata={"Software": "polyflow-report"})
    plt.close(fig)
    return path


def _fig_energy(trajectories, out_dir):
    fig, ax = _new_axes("fluctuation energy and dissipation", "t", "value")
    all_zero = True
    for i, cols in enumerate(trajectories):
        label = f"run {i}: " if len(trajectories) > 1 else ""
        if np.any(cols["E"] > 0) or np.any(cols["D"] > 0):
            all_zero = False
        ax.plot(cols["t"], cols["E"], label=label + "E(t)")
        ax.plot(cols["t"], cols["D"], "--", label=label + "D(t)")
    if not all_zero:
        ax.set_yscale("log")
    else:
        ax.annotate("zero-energy run", (0.5, 0.5), xycoords="axes fraction",
                    ha="center")
    ax.legend(loc="upper right")
    return _save(fig, out_dir, "energy_decay.png")


def _fig_audit(trajectories, out_dir):
    order, points = fit_audit_order(trajectories)
    if points and not math.isnan(order):
        fig, ax = _new_axes(
            "energy-law residual refinement", "dt", "integral |residual| dt"
        )
        dts = np.array([p[0] for p in points])
        vals = np.array([p[1] for p in points])
        idx = np.argsort(dts)
        ax.loglog(dts[idx], vals[idx], "o-", label="measured")
        ref = vals[idx][-1] * (dts[idx] / dts[idx][-1]) ** order
        ax.loglog(dts[idx], ref, ":", label=f"fit, order {order:.3f}")
        ax.legend()
    else:
        fig, ax = _new_axes("energy-law residual", "t", "|residual|")
        plotted = False
        for cols in trajectories:
            t, r = _nan_filter(cols["t"][1:], cols["audit_residual"][1:])
            if len(t) and np.any(r != 0):
                ax.semilogy(t, np.abs(r))
                plotted = True
            elif len(t):
                ax.plot(t, np.abs(r))
                plotted = True
        if not plotted:
            ax.annotate("no audit data", (0.5, 0.5), xycoords="axes fraction",
                        ha="center")
    return _save(fig, out_dir, "audit_residual.png")


def _fig_picard(trajectories, out_dir):
    fig, ax = _new_axes(
        "fixed-point contraction per step", "step", "last difference ratio"
    )
    plotted = False
    for cols in trajectories:
        ratios = cols["picard_last_ratio"][1:]
        steps = np.arange(1, len(ratios) + 1)
        keep = np.isfinite(ratios)
        if np.any(keep):
            ax.bar(steps[keep], ratios[keep], width=0.8, alpha=0.7)
            plotted = True
    if plotted:
        ax.axhline(1.0, color="k", linewidth=0.8)
        ax.set_yscale("log")
    else:
        ax.annotate("no iteration data", (0.5, 0.5), xycoords="axes fraction",
                    ha="center")
    return _save(fig, out_dir, "picard_ratios.png")


def _fig_closure(closures, out_dir):
    fig, ax = _new_axes("closure deviation", "t", "relative deviation")
    plotted = False
    for cols in closures:
        if np.any(cols["closure_deviation"] > 0):
            ax.semilogy(cols["t"], cols["closure_deviation"])
        else:
            ax.plot(cols["t"], cols["closure_deviation"])
        plotted = True
    if not plotted:
        ax.annotate("no closure data", (0.5, 0.5), xycoords="axes fraction",
                    ha="center")
    return _save(fig, out_dir, "closure_deviation.png")


def render_report(spec: ReportSpec):
    """Render the selected figures and the summary; returns written paths."""
    os.makedirs(spec.out_dir, exist_ok=True)
    trajectories, closures = [], []
    for path in spec.inputs:
        kind, cols = read_csv(path)
        (trajectories if kind == "trajectory" else closures).append(cols)

    plt.rcdefaults()
    plt.rcParams.update(_STYLE)
    written = []
    if "energy" in spec.figures and trajectories:
        written.append(_fig_energy(trajectories, spec.out_dir))
    if "audit" in spec.figures and trajectories:
        written.append(_fig_audit(trajectories, spec.out_dir))
    if "picard" in spec.figures and trajectories:
        written.append(_fig_picard(trajectories, spec.out_dir))
    if "closure" in spec.figures:
        written.append(_fig_closure(closures, spec.out_dir))

    summary_path = os.path.join(spec.out_dir, "summary.txt")
    with open(summary_path, "w", encoding="utf-8") as fh:
        fh.write(_summary_text(spec, trajectories, closures))
    written.append(summary_path)
    return written


def _summary_text(spec, trajectories, closures) -> str:
    lines = ["polyflow report summary", "=" * 24]
    for i, cols in enumerate(trajectories):
        e = cols["E"]
        if e[0] > 0:
            ratio = float(np.max(e) / e[0])
            flag = ""
        else:
            ratio = 1.0
            flag = "  [zero-energy run: ratio 1 by convention]"
        int_d = float(np.trapezoid(cols["D"], cols["t"]))
        lines.append(
            f"trajectory {i}: steps {len(e) - 1}, dt {_step_size(cols['t']):.6g}"
        )
        lines.append(f"  max E(t)/E(0) = {ratio:.9g}{flag}")
        lines.append(f"  integral D dt (trapezoid) = {int_d:.9g}")
        mono = np.all(np.diff(e) <= np.maximum(e[:-1] * 1e-10, 1e-14))
        lines.append(f"  energy monotone non-increasing: {bool(mono)}")
    order, points = fit_audit_order(trajectories)
    if math.isnan(order):
        lines.append("fitted audit order: n/a (need runs at two step sizes)")
    else:
        pts = ", ".join(f"(dt={p[0]:.4g}, I={p[1]:.4g})" for p in sorted(points))
        lines.append(f"fitted audit order: {order:.4f} from {pts}")
    for i, cols in enumerate(closures):
        lines.append(
            f"closure series {i}: max deviation = "
            f"{float(np.max(cols['closure_deviation'])):.6g}"
        )
    lines.append(f"inputs: {', '.join(os.path.basename(p) for p in spec.inputs)}")
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="render_report",
        description="render standard figures from polyflow CSV output",
    )
    parser.add_argument("csv", nargs="+", help="trajectory and/or closure CSV files")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument(
        "--figures", nargs="+", default=list(FIGURES), choices=FIGURES,
        help="subset of figures to render",
    )
    args = parser.parse_args(argv)
    try:
        spec = ReportSpec(inputs=args.csv, out_dir=args.out,
                          figures=tuple(args.figures))
        written = render_report(spec)
    except SchemaError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    for path in written:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
