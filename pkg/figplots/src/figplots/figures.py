"""Figure registry and rendering.

Every figure is built from the simulation CLI's CSV/JSON files alone;
nothing is recomputed here beyond arithmetic needed for display (gap
differences between already-tabulated levels). Output PNG/SVG pairs are
deterministic for fixed inputs: the SVG hash salt is pinned and
timestamp metadata is stripped.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .io import InputDataError, ReadOnlyGuard, Table, curve_label, read_json, read_table  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "figplots"

FIGSIZE = (6.4, 4.2)


@dataclass
class FigureSpec:
    """What to render: figure id, input paths, axis scales, output path."""

    figure_id: str
    inputs: list[Path]
    out_dir: Path
    name: str | None = None
    xscale: str | None = None
    yscale: str | None = None
    levels: tuple[int, int] = (2, 7)

    def output_name(self) -> str:
        return self.name if self.name else self.figure_id


def _split_inputs(spec: FigureSpec) -> tuple[list[Table], list[Path]]:
    tables = [read_table(p) for p in spec.inputs if p.suffix == ".csv"]
    jsons = [p for p in spec.inputs if p.suffix == ".json"]
    return tables, jsons


def _require_tables(tables: list[Table], figure_id: str, n_min: int = 1) -> None:
    if len(tables) < n_min:
        raise InputDataError(
            f"{figure_id} needs at least {n_min} CSV input(s), got {len(tables)}"
        )


def _new_axes():
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.grid(alpha=0.3)
    return fig, ax


def _series_plot(spec: FigureSpec, column: str, ylabel: str):
    tables, _ = _split_inputs(spec)
    _require_tables(tables, spec.figure_id)
    fig, ax = _new_axes()
    for tab in tables:
        ax.plot(tab.column("t"), tab.column(column), lw=1.0, label=curve_label(tab))
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    return fig


def _distance_linear(spec: FigureSpec):
    return _series_plot(spec, "trace_distance", "trace distance")


def _distance_log_t(spec: FigureSpec):
    fig = _series_plot(spec, "trace_distance", "trace distance")
    fig.axes[0].set_xscale("log")
    return fig


def _entropy(spec: FigureSpec):
    return _series_plot(spec, "vn_entropy", "von Neumann entropy [bits]")


def _bath_corr(spec: FigureSpec):
    return _series_plot(spec, "bath_corr", "bath correlation |C(t)|")


def _scaling_fit(spec: FigureSpec):
    tables, jsons = _split_inputs(spec)
    _require_tables(tables, spec.figure_id)
    fig, ax = _new_axes()
    param_name = "parameter"
    for tab in tables:
        x = tab.column("param")
        median = tab.column("tg_median")
        mean = tab.column("tg_mean")
        good = np.isfinite(median) & (median > 0)
        label = curve_label(tab)
        ax.plot(x[good], median[good], "o-", ms=4, lw=1.0, label=f"median, {label}")
        good_mean = np.isfinite(mean) & (mean > 0)
        ax.plot(x[good_mean], mean[good_mean], "s--", ms=3, lw=0.8,
                label=f"mean, {label}")
        if tab.manifest and "config" in tab.manifest:
            param_name = (
                tab.manifest["config"].get("scaling", {}).get("param", param_name)
            )
    for js in jsons:
        fit = read_json(js)
        slope, intercept = fit.get("slope"), fit.get("intercept")
        if slope is None or intercept is None:
            continue
        x = tables[0].column("param")
        span = np.geomspace(x.min(), x.max(), 64)
        ax.plot(span, 10.0 ** intercept * span ** slope, "k--", lw=1.2,
                label=f"fit: slope={slope:.2f}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(param_name)
    ax.set_ylabel("equilibration time t_g")
    ax.legend(fontsize=8)
    return fig


def _nm_windows(spec: FigureSpec):
    tables, _ = _split_inputs(spec)
    _require_tables(tables, spec.figure_id)
    fig, ax = _new_axes()
    width = 0.35
    ticks, tick_labels = [], []
    for i, tab in enumerate(tables):
        windows = tab.column("window", str)
        mom = tab.column("mean_of_measure")
        modm = tab.column("measure_of_mean")
        base = i * (len(windows) + 1.0)
        pos = base + np.arange(len(windows), dtype=float)
        ax.bar(pos - width / 2, mom, width, color="tab:blue",
               label="mean of measure" if i == 0 else None)
        ax.bar(pos + width / 2, modm, width, color="tab:red",
               label="measure of mean" if i == 0 else None)
        ticks.extend(pos)
        tick_labels.extend(f"{w}\n{curve_label(tab)}" for w in windows)
    ax.set_xticks(ticks)
    ax.set_xticklabels(tick_labels, fontsize=7)
    ax.set_ylabel("backflow measure")
    ax.legend(fontsize=8)
    return fig


def _ensemble_spread(spec: FigureSpec):
    tables, _ = _split_inputs(spec)
    _require_tables(tables, spec.figure_id)
    tab = tables[0]
    fig, ax = _new_axes()
    t = tab.column("t")
    for name in tab.columns_with_prefix("d"):
        ax.plot(t, tab.column(name), color="0.7", lw=0.5)
    ax.plot(t, tab.column("mean_trace_distance"), color="tab:blue", lw=1.5,
            label=f"ensemble mean, {curve_label(tab)}")
    ax.set_xscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("trace distance")
    ax.legend(fontsize=8)
    return fig


def _ensemble_means(spec: FigureSpec):
    tables, _ = _split_inputs(spec)
    _require_tables(tables, spec.figure_id)
    fig, ax = _new_axes()
    for tab in tables:
        ax.plot(tab.column("t"), tab.column("mean_trace_distance"), lw=1.0,
                label=curve_label(tab))
    ax.set_xscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("mean trace distance")
    ax.legend(fontsize=8)
    return fig


def _spectrum_levels(spec: FigureSpec):
    tables, _ = _split_inputs(spec)
    _require_tables(tables, spec.figure_id)
    tab = tables[0]
    x = tab.column(tab.header[0])
    fig, ax = _new_axes()
    for name in tab.columns_with_prefix("level_"):
        ax.plot(x, tab.column(name), lw=0.8, color="tab:red", alpha=0.7)
    if np.all(x > 0):
        ax.set_xscale("log")
    ax.set_xlabel(tab.header[0])
    ax.set_ylabel("energy")
    return fig


def _gap_deviation(spec: FigureSpec):
    tables, _ = _split_inputs(spec)
    _require_tables(tables, spec.figure_id)
    tab = tables[0]
    levels = tab.columns_with_prefix("level_")
    i, j = spec.levels
    if not (0 <= i < len(levels) and 0 <= j < len(levels)) or i == j:
        raise InputDataError(
            f"level pair {spec.levels} out of range for {len(levels)} levels"
        )
    x = tab.column(tab.header[0])
    gap = tab.column(levels[j]) - tab.column(levels[i])
    dev = np.abs(gap - gap[0])
    fig, ax = _new_axes()
    ax.plot(x[1:], dev[1:], "o-", ms=4, lw=1.0,
            label=f"|gap({levels[i]}, {levels[j]}) - initial|")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(tab.header[0])
    ax.set_ylabel("gap deviation")
    ax.legend(fontsize=8)
    return fig


def _angle_scan(spec: FigureSpec):
    tables, _ = _split_inputs(spec)
    _require_tables(tables, spec.figure_id)
    fig, ax = _new_axes()
    for tab in tables:
        ax.plot(tab.column("theta"), tab.column("dephased_estimate"), "o-",
                ms=3, lw=1.0, label=curve_label(tab))
    ax.set_xlabel("initial spin angle theta")
    ax.set_ylabel("dephased long-time estimate")
    ax.legend(fontsize=8)
    return fig


FIGURES = {
    "fig2a": (_distance_linear, "trace distance vs t, torus against strip"),
    "fig2b": (_distance_linear, "torus trace distance vs t at several g"),
    "fig2c": (_scaling_fit, "planar t_g vs g, log-log, with fit overlay"),
    "fig2d": (_nm_windows, "backflow measure by averaging order and window"),
    "fig3a": (_distance_log_t, "connected trace distance vs t at several g"),
    "fig3b": (_scaling_fit, "connected t_g vs g or k, log-log, with fit overlay"),
    "fig3c": (_ensemble_means, "ensemble-mean distance vs t across sizes"),
    "fig3d": (_ensemble_spread, "per-realization trajectories and their mean"),
    "fig4a": (_spectrum_levels, "eigenvalue curves along the sweep"),
    "fig4b": (_gap_deviation, "tracked gap deviation, log-log"),
    "fig_corr": (_bath_corr, "bath correlation vs t"),
    "fig_entropy": (_entropy, "entropy vs t"),
    "fig_angle": (_angle_scan, "dephased estimate vs initial spin angle"),
}


def render(spec: FigureSpec) -> list[Path]:
    """Build one figure and write its PNG and SVG.

    Inputs are checksummed before and after; any modification aborts.
    Returns the written paths.
    """
    if spec.figure_id not in FIGURES:
        known = ", ".join(sorted(FIGURES))
        raise InputDataError(f"unknown figure id {spec.figure_id!r} (known: {known})")
    if not spec.inputs:
        raise InputDataError(f"{spec.figure_id} got no input files")
    builder, _ = FIGURES[spec.figure_id]

    guarded = list(spec.inputs)
    for p in spec.inputs:
        manifest = p.parent / "manifest.json"
        if manifest.is_file() and manifest not in guarded:
            guarded.append(manifest)
    for p in guarded:
        if not p.is_file():
            raise InputDataError(f"input file {p} does not exist")
    guard = ReadOnlyGuard(guarded)

    fig = builder(spec)
    ax = fig.axes[0]
    if spec.xscale is not None:
        ax.set_xscale(spec.xscale)
    if spec.yscale is not None:
        ax.set_yscale(spec.yscale)
    fig.suptitle(spec.figure_id)

    spec.out_dir.mkdir(parents=True, exist_ok=True)
    png = spec.out_dir / f"{spec.output_name()}.png"
    svg = spec.out_dir / f"{spec.output_name()}.svg"
    fig.savefig(png, dpi=150, metadata={"Software": None})
    fig.savefig(svg, metadata={"Date": None})
    plt.close(fig)

    guard.verify()
    return [png, svg]
