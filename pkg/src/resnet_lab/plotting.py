"""PNG figures for sweeps and flow traces (headless Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def sweep_figure(xs, ys, slope, xlabel, ylabel, path):
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.loglog(xs, ys, "o-", label="measured")
    keep = ys > 0
    if np.isfinite(slope) and keep.any():
        x0, y0 = xs[keep][0], ys[keep][0]
        ax.loglog(xs, y0 * (xs / x0) ** slope, "--", label=f"slope {slope:.3f}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def trace_figure(trace, path):
    s = trace.column("s")
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    for name in ("E", "E_s"):
        values = trace.column(name)
        ax.semilogy(s, np.maximum(values, np.finfo(float).tiny), label=name)
    ax.set_xlabel("s")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
