"""Deterministic figure rendering from benchmark CSV files.

Three figure kinds:

* ``pingpong``     — bandwidth and latency vs message size, log-x, one
                     series per backend.
* ``speedup``      — strong-scaling speedup vs rank count on linear and
                     log axes; the single-rank baseline pins (1, 1.0).
* ``percent-edge`` — percentage speedup improvement of the stream-triggered
                     backends over the baseline, vs average halo edge bytes.

Rendering is pure: fixed style, fixed dpi, no timestamps, so identical
inputs produce identical image bytes.  When replicate rows exist and a
confidence level is requested, shaded 95% t-interval bands are drawn.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402
from scipy import stats  # noqa: E402

from .data import PlotDataError, backends, edge_bytes_lookup, load_rows, series

FIGURE_KINDS = ("pingpong", "speedup", "percent-edge")

_STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.marker": "o",
    "lines.markersize": 3.5,
}

_COLORS = {
    "baseline": "#555555",
    "st-send": "#1f77b4",
    "st-rsend": "#d62728",
}


@dataclass
class PlotSpec:
    csv_paths: list[str]
    kind: str  # pingpong | speedup | percent-edge
    out_path: str
    replicates: bool = False

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise PlotDataError(f"unknown figure kind {self.kind!r}; "
                                f"choose from {FIGURE_KINDS}")


def _mean_and_band(samples: list[float], with_band: bool):
    arr = np.asarray(samples, dtype=float)
    mean = float(arr.mean())
    if not with_band or arr.size < 2:
        return mean, None
    half = float(stats.t.ppf(0.975, arr.size - 1)
                 * arr.std(ddof=1) / np.sqrt(arr.size))
    return mean, half


def _collapse(points, with_band):
    xs, means, halves = [], [], []
    for x, samples in points:
        mean, half = _mean_and_band(samples, with_band)
        xs.append(x)
        means.append(mean)
        halves.append(half)
    return xs, means, halves


def _plot_series(ax, name, xs, means, halves):
    color = _COLORS.get(name)
    ax.plot(xs, means, label=name, color=color)
    if any(h is not None for h in halves):
        lo = [m - (h or 0.0) for m, h in zip(means, halves)]
        hi = [m + (h or 0.0) for m, h in zip(means, halves)]
        ax.fill_between(xs, lo, hi, alpha=0.2, color=color, linewidth=0)


def render(spec: PlotSpec) -> dict:
    """Render the figure and return the plotted series for inspection:
    {figure-label: {backend: (xs, ys)}}."""
    rows = load_rows(spec.csv_paths)
    with plt.rc_context(_STYLE):
        if spec.kind == "pingpong":
            plotted = _render_pingpong(rows, spec)
        elif spec.kind == "speedup":
            plotted = _render_speedup(rows, spec)
        else:
            plotted = _render_percent_edge(rows, spec)
    return plotted


def _render_pingpong(rows, spec):
    latency = series(rows, "latency_ns", "size_bytes")
    bandwidth = series(rows, "bandwidth_gbps", "size_bytes")
    fig, (ax_bw, ax_lat) = plt.subplots(2, 1, figsize=(6, 7))
    plotted = {"bandwidth": {}, "latency": {}}
    for name, points in bandwidth.items():
        xs, means, halves = _collapse(points, spec.replicates)
        _plot_series(ax_bw, name, xs, means, halves)
        plotted["bandwidth"][name] = (xs, means)
    for name, points in latency.items():
        xs, means, halves = _collapse(points, spec.replicates)
        _plot_series(ax_lat, name, xs, means, halves)
        plotted["latency"][name] = (xs, means)
    for ax, ylabel in ((ax_bw, "bandwidth (GB/s)"), (ax_lat, "latency (ns)")):
        ax.set_xscale("log", base=2)
        ax.set_xlabel("message size (bytes)")
        ax.set_ylabel(ylabel)
        ax.legend()
    ax_lat.set_yscale("log")
    fig.suptitle("GPU ping-pong by backend")
    _save(fig, spec.out_path)
    return plotted


def _render_speedup(rows, spec):
    speedup = series(rows, "speedup", "ranks")
    fig, (ax_lin, ax_log) = plt.subplots(1, 2, figsize=(9, 4))
    plotted = {"speedup": {}}
    for name, points in speedup.items():
        xs, means, halves = _collapse(points, spec.replicates)
        _plot_series(ax_lin, name, xs, means, halves)
        _plot_series(ax_log, name, xs, means, halves)
        plotted["speedup"][name] = (xs, means)
    ax_lin.set_title("linear")
    ax_log.set_title("log")
    ax_log.set_xscale("log", base=2)
    ax_log.set_yscale("log", base=2)
    for ax in (ax_lin, ax_log):
        ax.set_xlabel("ranks")
        ax.set_ylabel("speedup vs single-rank baseline")
        ax.legend()
    fig.suptitle("Strong-scaling speedup")
    _save(fig, spec.out_path)
    return plotted


def _render_percent_edge(rows, spec):
    speedup = series(rows, "speedup", "ranks")
    if "baseline" not in speedup:
        raise PlotDataError("percent-edge figure needs a baseline series")
    edges = edge_bytes_lookup(rows)
    base = {x: samples for x, samples in speedup["baseline"]}
    fig, ax = plt.subplots(figsize=(6, 4))
    plotted = {"percent-edge": {}}
    for name, points in speedup.items():
        if name == "baseline":
            continue
        xs, ys = [], []
        for ranks, samples in points:
            if ranks not in base or ranks not in edges:
                continue
            base_mean = float(np.mean(base[ranks]))
            mean = float(np.mean(samples))
            xs.append(edges[ranks])
            ys.append((mean / base_mean - 1.0) * 100.0)
        if not xs:
            raise PlotDataError(f"empty percent-edge series for {name!r}")
        order = np.argsort(xs)
        xs = [xs[i] for i in order]
        ys = [ys[i] for i in order]
        ax.plot(xs, ys, label=name, color=_COLORS.get(name))
        plotted["percent-edge"][name] = (xs, ys)
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xscale("log", base=2)
    ax.set_xlabel("average edge bytes")
    ax.set_ylabel("% speedup improvement over baseline")
    ax.legend()
    fig.suptitle("Improvement over the CPU-driven baseline by edge size")
    _save(fig, spec.out_path)
    return plotted


def _save(fig, out_path: str) -> None:
    fig.tight_layout()
    fig.savefig(out_path, metadata={"Software": "stmpi-plots"})
    plt.close(fig)
