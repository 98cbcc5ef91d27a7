"""PNG figures written next to the CSV/JSON outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .montecarlo import Table2Report  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def empirical_cdf(errors_ns) -> tuple[np.ndarray, np.ndarray]:
    x = np.sort(np.asarray(errors_ns, dtype=float))
    return x, np.arange(1, x.size + 1) / x.size


def plot_table2(report: Table2Report, path, budget_ns: float = 900.0) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    distances = sorted({c.distance_m for c in report.cells})
    width = 0.8 / len(distances)
    scs_values = sorted({c.scs_khz for c in report.cells})
    for j, d in enumerate(distances):
        xs, ys = [], []
        for i, scs in enumerate(scs_values):
            cell = report.cell(scs, d)
            x = i + (j - (len(distances) - 1) / 2) * width
            if cell.failed:
                ax.text(x, budget_ns * 0.05, "sync\nfailure", ha="center", va="bottom", fontsize=7, rotation=90)
            else:
                xs.append(x)
                ys.append(cell.result.p90_ns)
        ax.bar(xs, ys, width=width, label=f"{d / 1000:g} km")
    ax.axhline(budget_ns, color="k", linestyle="--", linewidth=1, label=f"{budget_ns:g} ns budget")
    ax.set_xticks(range(len(scs_values)), [f"{s} kHz" for s in scs_values])
    ax.set_ylabel("p90 timing error (ns)")
    ax.set_yscale("log")
    ax.legend()
    return _save(fig, path)


def plot_cdf(errors_ns, path, threshold_ns: float | None = None, title: str = "") -> Path:
    x, y = empirical_cdf(errors_ns)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.step(x, y, where="post")
    if threshold_ns is not None:
        ax.axvline(threshold_ns, color="r", linestyle=":", label=f"failure threshold {threshold_ns:g} ns")
        ax.legend()
    ax.axhline(0.9, color="gray", linewidth=0.5)
    ax.set_xlabel("timing error (ns)")
    ax.set_ylabel("empirical CDF")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_distribution(node_ids, totals_ns, budget_ns: float, path) -> Path:
    fig, ax = plt.subplots(figsize=(max(4, 0.4 * len(node_ids)), 4))
    ax.bar(range(len(node_ids)), totals_ns)
    ax.axhline(budget_ns, color="k", linestyle="--", linewidth=1, label=f"{budget_ns:g} ns budget")
    ax.set_xticks(range(len(node_ids)), node_ids, rotation=90 if len(node_ids) > 12 else 0)
    ax.set_ylabel("end-to-end error (ns)")
    ax.legend()
    return _save(fig, path)
