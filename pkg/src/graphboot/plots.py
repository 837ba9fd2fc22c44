"""Figure rendering for the CLI report paths.

Each function takes already-computed report data and writes one PNG next
to the delimited output it illustrates. Rendering is headless (Agg).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

DPI = 150


def _new_axes(n_panels: int = 1, width: float = 6.0, height: float = 3.4):
    fig, axes = plt.subplots(1, n_panels, figsize=(width * n_panels, height))
    return fig, (axes if n_panels > 1 else [axes])


def save_training_curves(rows: list[dict], path: str) -> None:
    """Loss terms on the left, lr and EMA decay on the right."""
    epochs = [r["epoch"] for r in rows]
    fig, (ax_loss, ax_sched) = _new_axes(2)
    ax_loss.plot(epochs, [r["loss"] for r in rows], label="loss", lw=1.2)
    ax_loss.plot(epochs, [r["loss_node_term"] for r in rows], label="node term", lw=0.9)
    ax_loss.plot(epochs, [r["loss_neighbor_term"] for r in rows], label="neighbor term", lw=0.9)
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_loss.legend(frameon=False, fontsize=8)
    ax_sched.plot(epochs, [r["lr"] for r in rows], label="lr", lw=1.0)
    ax_sched.set_xlabel("epoch")
    ax_sched.set_ylabel("lr")
    twin = ax_sched.twinx()
    twin.plot(epochs, [r["ema_decay"] for r in rows], color="tab:red", label="ema decay", lw=1.0)
    twin.set_ylabel("ema decay")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def save_eval_summary(stats: dict[str, tuple[float, float]], path: str) -> None:
    """Bar chart of metric means with std error bars."""
    names = list(stats)
    means = [stats[n][0] for n in names]
    stds = [stats[n][1] for n in names]
    fig, (ax,) = _new_axes(1, width=max(5.0, 1.1 * len(names)))
    ax.bar(range(len(names)), means, yerr=stds, capsize=3, color="tab:blue", alpha=0.8)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("score")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def save_homophily_profile(profiles: dict[str, tuple[np.ndarray, np.ndarray]],
                           path: str) -> None:
    """One panel per ordering key: intra-class fraction per sorted bin."""
    fig, axes = _new_axes(len(profiles), width=4.5)
    for ax, (name, (fractions, sizes)) in zip(axes, profiles.items()):
        ax.bar(range(len(fractions)), fractions, color="tab:green", alpha=0.8)
        ax.set_xticks(range(len(fractions)))
        ax.set_xticklabels([f"bin {b}\n(n={s})" for b, s in enumerate(sizes)], fontsize=7)
        ax.set_ylim(0, 1)
        ax.set_ylabel("intra-class fraction")
        ax.set_title(f"pairs sorted by {name}", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def save_ablation_summary(rows: list[dict], path: str) -> None:
    """Mean accuracy per variant with per-seed scatter."""
    variants = []
    for r in rows:
        if r["variant"] not in variants:
            variants.append(r["variant"])
    fig, (ax,) = _new_axes(1, width=5.5)
    for i, variant in enumerate(variants):
        accs = [r["accuracy_mean"] for r in rows if r["variant"] == variant]
        ax.bar(i, float(np.mean(accs)), color="tab:purple", alpha=0.65)
        ax.scatter([i] * len(accs), accs, color="black", s=12, zorder=3)
    ax.set_xticks(range(len(variants)))
    ax.set_xticklabels(variants, fontsize=8)
    ax.set_ylabel("probe accuracy")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
