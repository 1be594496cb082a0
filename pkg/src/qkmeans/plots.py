"""Figure rendering for the report-producing CLI commands.

Each renderer takes the already-serialized report payload and writes PNG
files next to the delimited output, returning the paths it wrote.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["render_scaling", "render_bench", "render_id"]


def _fit_line(ax, ks, fit) -> None:
    xs = np.linspace(min(ks), max(ks), 64)
    ax.plot(xs, np.exp(fit["intercept"]) * xs ** fit["slope"], "--", color="gray",
            label=f"slope {fit['slope']:.3f} (R^2 {fit['r_squared']:.3f})")


def render_scaling(report: dict, out_base: str) -> list[str]:
    """Log-log beta and eta against k with their fitted power laws."""
    points = report["points"]
    ks = [p["k"] for p in points]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    for ax, key, fit, label in (
        (axes[0], "beta", report["fit_beta"], "beta"),
        (axes[1], "eta_centers", report["fit_eta"], "eta (centers)"),
    ):
        ys = [p[key] for p in points]
        for rec in report["records"]:
            if math.isfinite(rec[key]):
                ax.plot(rec["k"], rec[key], ".", color="lightsteelblue", markersize=4)
        ax.plot(ks, ys, "o-", color="tab:blue", label=label)
        _fit_line(ax, ks, fit)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("k")
        ax.set_ylabel(label)
        ax.legend(fontsize=8)
    fig.suptitle(f"scaling fit: eps_hat={report['eps_hat']:.4f}")
    fig.tight_layout()
    path = f"{out_base}_scaling.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return [path]


def render_bench(rows: list[dict], out_base: str) -> list[str]:
    """Mean seeding time against k per algorithm, log-log."""
    algos = sorted({r["algo"] for r in rows})
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for algo in algos:
        ks = sorted({r["k"] for r in rows if r["algo"] == algo})
        means = [
            np.mean([r["time_ms"] for r in rows if r["algo"] == algo and r["k"] == k])
            for k in ks
        ]
        ax.plot(ks, means, "o-", label=algo)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("k")
    ax.set_ylabel("seeding time (ms)")
    ax.legend()
    fig.tight_layout()
    path = f"{out_base}_time.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return [path]


def render_id(report: dict, out_base: str) -> list[str]:
    """Per-neighborhood-size intrinsic-dimension estimates with grand mean."""
    per = report["per_k_nn"]
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ks = [p["k_nn"] for p in per]
    means = [p["mean"] for p in per]
    for p in per:
        ax.plot([p["k_nn"]] * len(p["estimates"]), p["estimates"], ".", color="lightsteelblue")
    ax.plot(ks, means, "o-", color="tab:blue", label="mean per k_nn")
    ax.axhline(report["grand_mean"], color="gray", linestyle="--",
               label=f"grand mean {report['grand_mean']:.3f}")
    ax.set_xlabel("k_nn")
    ax.set_ylabel("intrinsic dimension estimate")
    ax.legend()
    fig.tight_layout()
    path = f"{out_base}_id.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return [path]
