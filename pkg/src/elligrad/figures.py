"""Figure rendering for benchmark results and feature projections.

Each renderer takes a result object from :mod:`elligrad.bench` (or a
projected point cloud) and writes one PNG.  Figures are drawn on
explicit Agg canvases rather than through pyplot, so rendering works on
headless machines and leaves no global state behind.  They accompany
the CSV reports; the CSV stays the machine-readable contract.
"""

from __future__ import annotations

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure
from scipy import stats as spstats

from .bench import (
    BASIN_D2,
    Chi2Result,
    EfficiencyResult,
    RateResult,
    StationarityResult,
    TimeResult,
)

__all__ = [
    "fig_rate",
    "fig_chi2",
    "fig_efficiency",
    "fig_time",
    "fig_stationarity",
    "fig_projection",
]

#: One fixed color per method so every figure reads the same way.
METHOD_COLORS = {
    "isg": "tab:blue",
    "idg": "tab:red",
    "fp": "tab:green",
    "mm": "tab:orange",
}


def _new_axes(xlabel: str, ylabel: str, title: str):
    fig = Figure(figsize=(6.4, 4.8), dpi=120)
    FigureCanvasAgg(fig)
    ax = fig.add_subplot(111)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    return fig, ax


def _save(fig: Figure, path) -> str:
    fig.savefig(path, bbox_inches="tight")
    return str(path)


def fig_rate(result: RateResult, path) -> str:
    """Log-log mean squared distance against sample count, with a 1/n
    guide through the final point."""
    fig, ax = _new_axes("samples n", "mean d²(θ*, θₙ)", "Online convergence rate")
    ax.loglog(result.checkpoints, result.mean_d2, "o-", color="tab:blue", ms=3, label="mean d²")
    n = np.asarray(result.checkpoints, dtype=float)
    guide = result.mean_d2[-1] * n[-1] / n
    ax.loglog(n, guide, "--", color="gray", lw=1, label="slope −1 guide")
    ax.legend(title=f"fitted slope {result.slope_last_decade:.3f}")
    return _save(fig, path)


def fig_chi2(result: Chi2Result, path) -> str:
    """Histogram of the ``N d²`` statistics with the limiting
    chi-square density."""
    fig, ax = _new_axes("N d²", "density", f"Limit law against χ²({result.dof})")
    bins = max(10, result.completed // 12)
    ax.hist(result.stats, bins=bins, density=True, color="tab:blue", alpha=0.55, label="trials")
    grid = np.linspace(0, max(result.stats.max(), result.dof * 2), 400)
    ax.plot(grid, spstats.chi2.pdf(grid, result.dof), color="tab:red", lw=1.5, label="χ² density")
    ax.legend(title=f"KS {result.ks_stat:.4f} (1% crit {result.ks_critical:.4f})")
    return _save(fig, path)


def fig_efficiency(result: EfficiencyResult, path) -> str:
    """Final accuracy of each method across dataset sizes."""
    fig, ax = _new_axes("samples N", "mean d²(θ*, θ̂)", "Accuracy against dataset size")
    sizes = np.asarray(result.sizes, dtype=float)
    for method in result.methods:
        vals = [result.mean(n, method) for n in result.sizes]
        ax.loglog(sizes, vals, "o-", ms=4, color=METHOD_COLORS[method], label=method)
    ax.legend()
    return _save(fig, path)


def fig_time(result: TimeResult, path) -> str:
    """Median wall-clock seconds of each method across dataset sizes."""
    fig, ax = _new_axes("samples N", "median seconds", "Wall-clock time against dataset size")
    sizes = np.asarray(result.sizes, dtype=float)
    for method in result.methods:
        vals = [result.median(n, method) for n in result.sizes]
        ax.loglog(sizes, vals, "o-", ms=4, color=METHOD_COLORS[method], label=method)
    ax.legend()
    return _save(fig, path)


def fig_stationarity(result: StationarityResult, path) -> str:
    """Terminal distance per trial against the true shape parameter,
    split at the basin threshold."""
    fig, ax = _new_axes("true β", "final d²(θ*, θ̂)", "Full-scope terminal states")
    ok = result.correct
    ax.semilogy(result.beta_true[ok], result.d2_final[ok], "o", ms=4, color="tab:blue",
                label=f"reached truth ({int(ok.sum())})")
    if np.any(~ok):
        ax.semilogy(result.beta_true[~ok], result.d2_final[~ok], "x", ms=5, color="tab:red",
                    label=f"elsewhere ({int((~ok).sum())})")
    ax.axhline(BASIN_D2, color="gray", ls="--", lw=1, label=f"threshold {BASIN_D2}")
    ax.legend(title=f"correct fraction {result.fraction_correct:.2f}")
    return _save(fig, path)


def fig_projection(points: np.ndarray, path, labels=None) -> str:
    """Scatter of a two-column projection, optionally annotated."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ValueError("projection figure needs a K x 2 array")
    fig, ax = _new_axes("component 1", "component 2", "Feature projection")
    ax.plot(points[:, 0], points[:, 1], "o", ms=5, color="tab:blue")
    if labels is not None:
        for (x, y), text in zip(points, labels):
            ax.annotate(str(text), (x, y), textcoords="offset points", xytext=(4, 4), fontsize=8)
    return _save(fig, path)
