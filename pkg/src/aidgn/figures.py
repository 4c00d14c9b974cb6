"""Render run metrics and comparison summaries to PNG files alongside the
delimited outputs. Figures are a convenience view; every number they show
is read back from the metrics/summary files, never recomputed."""

from __future__ import annotations

import json

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

_STYLE = {
    "figure.figsize": (7.0, 4.3),
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 130,
}


def render_training_curves(metrics_path, out_path) -> None:
    records = []
    with open(metrics_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(json.loads(line))
    if not records:
        return
    steps = [r["step"] for r in records]
    with plt.rc_context(_STYLE):
        fig, (ax_loss, ax_acc) = plt.subplots(1, 2)
        ax_loss.plot(steps, [r["loss"] for r in records], label="loss", color="tab:blue")
        if any(r["reg"] for r in records):
            ax_loss.plot(steps, [r["reg"] for r in records], label="regularizer",
                         color="tab:orange")
        ax_loss.set_xlabel("step")
        ax_loss.set_ylabel("per-sample objective")
        ax_loss.legend(frameon=False)

        for key, color in (("val_acc", "tab:green"), ("target_acc", "tab:red")):
            series = [(s, r[key]) for s, r in zip(steps, records) if r.get(key) is not None]
            if series:
                ax_acc.plot(*zip(*series), label=key.replace("_", " "), color=color)
        ax_acc.set_xlabel("step")
        ax_acc.set_ylabel("accuracy")
        ax_acc.set_ylim(0.0, 1.02)
        ax_acc.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(out_path)
        plt.close(fig)


def render_compare_chart(rows: list[dict], out_path) -> None:
    """Bar chart of per-seed target accuracy and entropy for the two arms."""
    arms = sorted({r["arm"] for r in rows})
    seeds = sorted({int(r["seed"]) for r in rows})
    with plt.rc_context(_STYLE):
        fig, (ax_acc, ax_ent) = plt.subplots(1, 2)
        width = 0.8 / max(len(arms), 1)
        for k, arm in enumerate(arms):
            by_seed = {int(r["seed"]): r for r in rows if r["arm"] == arm}
            xs = [i + k * width for i in range(len(seeds))]
            ax_acc.bar(xs, [by_seed[s]["target_acc"] for s in seeds], width=width, label=arm)
            ax_ent.bar(xs, [by_seed[s]["mean_entropy"] for s in seeds], width=width, label=arm)
        ticks = [i + width * (len(arms) - 1) / 2 for i in range(len(seeds))]
        for ax, ylabel in ((ax_acc, "target accuracy"), (ax_ent, "target entropy")):
            ax.set_xticks(ticks)
            ax.set_xticklabels([str(s) for s in seeds])
            ax.set_xlabel("seed")
            ax.set_ylabel(ylabel)
            ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(out_path)
        plt.close(fig)
