"""Figures for observer runs: trajectory overlays and error-norm decay.

Figures are rendered with the non-interactive Agg backend and written as
SVG with a fixed hash salt and no date stamp, so reruns give identical files.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.dpi": 100,
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 7,
    "lines.linewidth": 1.2,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "koopman-observer",
    "svg.fonttype": "none",
}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_trajectories(path, designs, time_unit="t"):
    """Solid true states, dashed estimates; one column per design.

    ``designs`` is a list of ``(alpha, records)`` pairs.
    """
    n = designs[0][1][0].x_true.shape[1]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(n, len(designs), figsize=(3.4 * len(designs), 2.2 * n),
                                 squeeze=False, sharex="col")
        colors = plt.cm.tab10.colors
        for col, (alpha, records) in enumerate(designs):
            for row in range(n):
                ax = axes[row, col]
                for k, rec in enumerate(records):
                    c = colors[k % len(colors)]
                    ax.plot(rec.times, rec.x_true[:, row], "-", color=c)
                    ax.plot(rec.times, rec.x_hat[:, row], "--", color=c)
                ax.set_ylabel(f"$x_{row + 1}$")
                if row == 0:
                    ax.set_title(rf"$\alpha = {alpha:g}$")
            axes[-1, col].set_xlabel(time_unit)
        axes[0, 0].plot([], [], "k-", label="true state")
        axes[0, 0].plot([], [], "k--", label="estimate")
        axes[0, 0].legend(loc="best")
        fig.tight_layout()
        _save(fig, path)


def plot_error_decay(path, designs, time_unit="t"):
    """Lifted error norms on a log scale, one colour per design."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.8, 3.0))
        colors = plt.cm.tab10.colors
        for k, (alpha, records) in enumerate(designs):
            c = colors[k % len(colors)]
            for j, rec in enumerate(records):
                e = np.where(rec.e_lifted_norm > 0, rec.e_lifted_norm, np.nan)
                ax.semilogy(rec.times, e, color=c, alpha=0.85,
                            label=rf"$\alpha = {alpha:g}$" if j == 0 else None)
        ax.set_xlabel(time_unit)
        ax.set_ylabel(r"$\|\bar\Phi(x) - \hat\Phi\|$")
        ax.legend(loc="best")
        fig.tight_layout()
        _save(fig, path)
