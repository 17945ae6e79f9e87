"""Report figures written next to the CSV/JSON outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.bbox": "tight",
}

# PNG metadata otherwise carries the matplotlib version string.
_META = {"Software": None}


def _save(fig, path):
    fig.savefig(path, metadata=_META)
    plt.close(fig)


def plot_run(trace, prices, path, title: str = "") -> None:
    """Price, executed position and cumulative trade-ledger reward of one run."""
    with plt.rc_context(RC):
        fig, axes = plt.subplots(3, 1, figsize=(7, 6), sharex=True)
        steps = np.arange(len(trace))
        axes[0].plot(steps, prices.closes[: len(trace)], lw=0.6, color="0.2")
        axes[0].set_ylabel("close")
        axes[1].step(steps, trace.trade_actions, where="post", lw=0.6, color="tab:blue")
        axes[1].set_yticks([-1, 0, 1])
        axes[1].set_ylabel("position")
        axes[2].plot(steps, np.cumsum(trace.trade_rewards), lw=0.8, color="tab:green", label="trader")
        axes[2].plot(steps, np.cumsum(trace.rewards), lw=0.8, color="tab:orange", alpha=0.7, label="learner")
        axes[2].set_ylabel("cumulative reward")
        axes[2].set_xlabel("step")
        axes[2].legend(frameon=False)
        copies = np.flatnonzero(trace.copied)
        if copies.size:
            axes[1].plot(copies, np.zeros(copies.size), "|", ms=3, color="tab:red", alpha=0.4)
        if title:
            axes[0].set_title(title)
        _save(fig, path)


def plot_sweep(reports, path, title: str = "") -> None:
    """Trade count, trade length and Sharpe ratio against cost."""
    reports = list(reports)
    costs = [r.cost for r in reports]
    labels = [f"{c:g}" for c in costs]
    x = np.arange(len(reports))
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, 3, figsize=(9, 2.8))
        for ax, attr, name in zip(axes, ("trade_num", "trade_length", "sharpe_ratio"),
                                  ("trade num", "trade length", "sharpe ratio")):
            ax.bar(x, [getattr(r, attr) for r in reports], color="tab:blue", width=0.6)
            ax.set_xticks(x, labels)
            ax.set_xlabel("cost")
            ax.set_title(name)
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        _save(fig, path)
