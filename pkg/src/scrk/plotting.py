"""Figure rendering for solve traces and experiment aggregates.

Figures are drawn from the delimited output files (not from in-memory
objects), so a rendered plot always reflects what was written to disk.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402 - backend must be set first


def _read_csv(path) -> dict[str, list[str]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        columns = {name: [] for name in header}
        for row in reader:
            for name, value in zip(header, row):
                columns[name].append(value)
    return columns


def render_trace(trace_csv, png_path) -> Path:
    """Single-run convergence figure: log relative error (or residual) vs iteration."""
    cols = _read_csv(trace_csv)
    ks = [int(k) for k in cols["k"]]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    if any(cols["log10_rel_error"]):
        ys = [float(v) for v in cols["log10_rel_error"]]
        ax.set_ylabel("log10 relative error")
    else:
        ys = [float(v) for v in cols["residual_norm"]]
        ax.set_yscale("log")
        ax.set_ylabel("residual norm")
    ax.plot(ks, ys, lw=1.5)
    ax.set_xlabel("iteration")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    png_path = Path(png_path)
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return png_path


def render_aggregates(aggregate_csvs: dict[str, object], png_path, quantity: str = "log10 relative error") -> Path:
    """Median lines with 0.1/0.9-quantile bands for each experiment variant."""
    fig, ax = plt.subplots(figsize=(6.5, 4.2))
    for name, path in aggregate_csvs.items():
        cols = _read_csv(path)
        ks = [int(k) for k in cols["k"]]
        med = [float(v) for v in cols["median"]]
        q10 = [float(v) for v in cols["q10"]]
        q90 = [float(v) for v in cols["q90"]]
        (line,) = ax.plot(ks, med, lw=1.6, label=name)
        ax.fill_between(ks, q10, q90, color=line.get_color(), alpha=0.2, lw=0)
    ax.set_xlabel("iteration")
    ax.set_ylabel(quantity)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    png_path = Path(png_path)
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return png_path
