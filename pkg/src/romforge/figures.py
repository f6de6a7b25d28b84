"""Report figures rendered to files next to the CSV output."""

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SPLIT_COLORS = {"train": "tab:blue", "validation": "tab:red", "mixed": "tab:purple"}


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_report_figures(report, out_dir):
    """Render the standard validation figures; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    rows = report.rows

    fig, ax = plt.subplots(figsize=(max(6.0, 0.12 * len(rows)), 3.6))
    xs = np.arange(len(rows))
    colors = [_SPLIT_COLORS.get(r["split"], "gray") for r in rows]
    ax.bar(xs, [r["delta_b_max_pct"] for r in rows], color=colors)
    ax.set_xlabel("case index")
    ax.set_ylabel("reduced-inverse error [%]")
    ax.set_title("Reconstructed inverse, Frobenius error per case")
    written.append(_finish(fig, os.path.join(out_dir, "delta_b.png")))

    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    ref = np.array([t["theta_ref"] for t in report.theta_rows])
    pred = np.array([t["theta_pred"] for t in report.theta_rows])
    comp = np.array([t["component"] for t in report.theta_rows])
    for c in np.unique(comp):
        m = comp == c
        ax.plot(ref[m], pred[m], ".", ms=3, label=f"component {c}")
    lim = [ref.min(), ref.max()]
    ax.plot(lim, lim, "k-", lw=0.8)
    ax.set_xlabel("reference coefficient")
    ax.set_ylabel("predicted coefficient")
    ax.set_title("Matrix-mode coefficients")
    if np.unique(comp).size <= 10:
        ax.legend(fontsize=7)
    written.append(_finish(fig, os.path.join(out_dir, "theta_scatter.png")))

    fig, ax = plt.subplots(figsize=(max(6.0, 0.12 * len(rows)), 3.6))
    ax.plot(xs, [r["ml_disp_max_pct"] for r in rows], "o", ms=4, label="max")
    ax.plot(xs, [r["ml_disp_mean_pct"] for r in rows], "s", ms=3, label="mean")
    ax.set_xlabel("case index")
    ax.set_ylabel("displacement error [%]")
    ax.set_title("Online model vs full order, terminal state")
    ax.legend()
    written.append(_finish(fig, os.path.join(out_dir, "displacement_errors.png")))

    fig, ax = plt.subplots(figsize=(max(6.0, 0.12 * len(rows)), 3.6))
    ax.bar(xs, [r["energy_rel_err_pct"] for r in rows], color=colors)
    ax.set_xlabel("case index")
    ax.set_ylabel("energy error [%]")
    ax.set_title("Energy against full order")
    written.append(_finish(fig, os.path.join(out_dir, "energy.png")))
    return written
