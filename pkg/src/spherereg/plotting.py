"""Matplotlib figure rendering for reports.

Figures are written as PNG next to the delimited output they illustrate;
PNG is used because the Agg backend produces byte-identical files for
identical inputs, which the determinism contract requires.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_DPI = 110


def plot_noise_sweep(rows, path) -> None:
    """FMR / mean IR / RR against noise standard deviation."""
    sigmas = [row["noise_std"] for row in rows]
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    for key, marker in (("FMR", "o"), ("IR", "s"), ("RR", "^")):
        ax.plot(sigmas, [row[key] for row in rows], marker=marker, label=key)
    ax.set_xlabel("noise std")
    ax.set_ylabel("score")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def plot_registration_errors(evaluations, path) -> None:
    """Rotation error vs translation error, one marker per pair."""
    rre_deg = [np.rad2deg(e.rre) for e in evaluations]
    rte_vals = [e.rte for e in evaluations]
    passed = [e.rr_pass for e in evaluations]
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    for ok, color, label in ((True, "tab:blue", "RMSE pass"),
                             (False, "tab:red", "RMSE fail")):
        xs = [t for t, p in zip(rte_vals, passed) if p == ok]
        ys = [r for r, p in zip(rre_deg, passed) if p == ok]
        if xs:
            ax.scatter(xs, ys, c=color, label=label, s=24)
    ax.set_xlabel("translation error")
    ax.set_ylabel("rotation error (deg)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def plot_invariance(rotation_errors, shift_errors, path) -> None:
    """Histograms of descriptor residuals under rotation and azimuth shift."""
    fig, axes = plt.subplots(1, 2, figsize=(7.5, 3.2))
    for ax, values, title in ((axes[0], rotation_errors, "SO(3) rotation"),
                              (axes[1], shift_errors, "azimuth shift")):
        values = np.asarray(values)
        floored = np.log10(np.maximum(values, 1e-18))
        ax.hist(floored, bins=24, color="tab:blue")
        ax.set_xlabel("log10 descriptor L2 residual")
        ax.set_title(title)
    axes[0].set_ylabel("count")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def plot_training_log(log, path) -> None:
    epochs = [row.epoch for row in log]
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    ax.plot(epochs, [row.mean_loss for row in log], marker="o", label="mean loss")
    vals = [row.val_fmr for row in log]
    if not all(np.isnan(vals)):
        ax.plot(epochs, vals, marker="s", label="val FMR")
    ax.set_xlabel("epoch")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
