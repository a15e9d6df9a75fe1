"""Figures written next to the CSV outputs of the CLI.

Everything renders through the non-interactive Agg backend, so the module is
safe to import on headless machines.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import matplotlib.ticker  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.4,
    "savefig.dpi": 120,
}

METHOD_STYLE = {
    "fusion": {"color": "#1f77b4", "marker": "o", "label": "fusion"},
    "no_fusion": {"color": "#d62728", "marker": "s", "label": "no fusion"},
}


def figsize(scale: float = 1.0, ratio: float | None = None) -> tuple[float, float]:
    """Width and height in inches for a figure ``scale`` times a 5.5 in column."""
    ratio = (np.sqrt(5.0) - 1.0) / 2.0 if ratio is None else ratio
    width = 5.5 * scale
    return width, width * ratio


def _save(fig, path: str | Path, note: str | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # drop the version-bearing software tag so reruns are byte-stable
    metadata = {"Software": None}
    if note:
        metadata["Comment"] = note
    fig.savefig(path, metadata=metadata)
    plt.close(fig)
    return path


def plot_curve(
    rows: Sequence[tuple[float, float | None, float]], path: str | Path, title: str | None = None, note: str | None = None
) -> Path:
    """Estimated curve (and the true one when known) from ``curve_rows`` output."""
    a = np.array([r[0] for r in rows])
    est = np.array([r[2] for r in rows])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(0.9))
        if all(r[1] is not None for r in rows):
            ax.plot(a, [r[1] for r in rows], color="0.3", ls="--", label="truth")
        ax.plot(a, est, color=METHOD_STYLE["fusion"]["color"], label="estimate")
        ax.set_xlabel("exposure a")
        ax.set_ylabel("dose response")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path, note)


def plot_cv(
    lambda_grid: Sequence[float], risks: np.ndarray, chosen: float, path: str | Path, note: str | None = None
) -> Path:
    """Per-fold and mean cross-validated risk against the ridge penalty."""
    grid = np.asarray(lambda_grid, dtype=float)
    risks = np.asarray(risks, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(0.9))
        for k in range(risks.shape[0]):
            ax.plot(grid, risks[k], color="0.75", lw=0.8)
        ax.plot(grid, risks.mean(axis=0), color="k", marker="o", ms=3, label="mean over folds")
        ax.axvline(chosen, color=METHOD_STYLE["fusion"]["color"], ls=":", label=f"chosen {chosen:g}")
        ax.set_xlabel("lambda")
        ax.set_ylabel("cross-validated risk")
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path, note)


def plot_benchmark(rows: Iterable, path: str | Path, note: str | None = None) -> Path:
    """Median risk against sample size, one panel per (scenario, measure) cell.

    ``rows`` are ``RiskReport``-like records with ``scenario``, ``ref_measure``,
    ``n``, ``method`` and ``risk`` attributes; quartile bands are shaded.
    ``note`` is stored in the PNG text metadata.
    """
    cells: dict[tuple[str, str], dict[str, dict[int, list[float]]]] = {}
    for r in rows:
        cells.setdefault((r.scenario, r.ref_measure), {}).setdefault(r.method, {}).setdefault(int(r.n), []).append(r.risk)
    keys = sorted(cells)
    if not keys:
        raise ValueError("no benchmark rows to plot")
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(keys), figsize=(3.0 * len(keys), 2.8), squeeze=False)
        for ax, key in zip(axes[0], keys):
            for method, by_n in sorted(cells[key].items()):
                ns = np.array(sorted(by_n))
                q = np.array([np.percentile(by_n[n], [25, 50, 75]) for n in ns])
                style = METHOD_STYLE.get(method, {"color": "0.4", "marker": "x", "label": method})
                ax.plot(ns, q[:, 1], color=style["color"], marker=style["marker"], ms=4, label=style["label"])
                ax.fill_between(ns, q[:, 0], q[:, 2], color=style["color"], alpha=0.15, lw=0)
            ax.set_xscale("log")
            ax.set_yscale("log")
            all_ns = sorted({n for by_n in cells[key].values() for n in by_n})
            ax.set_xticks(all_ns)
            ax.set_xticklabels([str(n) for n in all_ns])
            ax.xaxis.set_minor_locator(matplotlib.ticker.NullLocator())
            ax.set_xlabel("n")
            ax.set_title(f"{key[0]}, {key[1]}")
        axes[0][0].set_ylabel("median risk")
        axes[0][0].legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path, note)
