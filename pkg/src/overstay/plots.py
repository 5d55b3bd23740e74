"""Static SVG figures built from the same arrays that go into the CSV outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed ids and no timestamp, so repeated runs write identical files
plt.rcParams["svg.hashsalt"] = "overstay"
_SVG_META = {"Date": None, "Creator": None}

DAY_PANELS = (
    ("net_power_kw", "net power [kW]"),
    ("cumulative_profit", "profit [$]"),
    ("occupancy", "occupied poles"),
    ("cumulative_overstay_h", "overstay [h]"),
    ("cumulative_services", "services"),
)


def _save(fig, path):
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return path


def plot_day(series_by_mode: dict, path, peak=(13.0, 18.0)):
    fig, axes = plt.subplots(len(DAY_PANELS), 1, figsize=(7, 10), sharex=True)
    for ax, (key, label) in zip(axes, DAY_PANELS):
        for mode, series in series_by_mode.items():
            ax.step(series["clock"], series[key], where="post", label=mode)
        ax.axvspan(*peak, color="0.9", zorder=0)
        ax.set_ylabel(label)
    axes[0].legend(loc="upper right", fontsize=8)
    axes[-1].set_xlabel("time of day [h]")
    fig.tight_layout()
    return _save(fig, path)


def plot_histograms(values_by_metric: dict, path, bins=12):
    """values_by_metric: metric -> {mode: per-episode values}."""
    fig, axes = plt.subplots(1, len(values_by_metric), figsize=(12, 3.5))
    for ax, (metric, by_mode) in zip(np.atleast_1d(axes), values_by_metric.items()):
        allv = np.concatenate([np.asarray(v, dtype=float) for v in by_mode.values()])
        edges = np.histogram_bin_edges(allv, bins=bins)
        for mode, vals in by_mode.items():
            ax.hist(vals, bins=edges, alpha=0.6, label=mode)
        ax.set_title(metric)
    np.atleast_1d(axes)[0].legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def plot_sensitivity(poles, profit_pct, overstay_pct, path):
    x = np.arange(len(poles))
    fig, ax = plt.subplots(figsize=(7, 3.5))
    clean = lambda vals: [np.nan if v is None else v for v in vals]  # noqa: E731
    ax.bar(x - 0.2, clean(profit_pct), width=0.4, label="profit")
    ax.bar(x + 0.2, clean(overstay_pct), width=0.4, label="overstay")
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xticks(x, [str(p) for p in poles])
    ax.set_xlabel("number of poles")
    ax.set_ylabel("improvement [%]")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)
