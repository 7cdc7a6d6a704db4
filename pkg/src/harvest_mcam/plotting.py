"""SVG figures rebuilt from the CSV outputs only."""

from __future__ import annotations

import csv
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# stable element ids and no timestamp, so reruns give identical files
matplotlib.rcParams["svg.hashsalt"] = "harvest-mcam"
_META = {"Date": None, "Creator": None}


def _by_regime(path, column):
    series = defaultdict(lambda: ([], []))
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            xs, ys = series[int(row["alpha"])]
            xs.append(float(row["x"]))
            ys.append(float(row[column]))
    return dict(sorted(series.items()))


def _panels(n):
    fig, axes = plt.subplots(1, n, figsize=(5 * n, 3.6), squeeze=False)
    return fig, axes[0]


def plot_value(value_csv, out_svg) -> None:
    data = _by_regime(value_csv, "V")
    fig, axes = _panels(len(data))
    for ax, (alpha, (xs, ys)) in zip(axes, data.items()):
        ax.plot(xs, ys)
        ax.set_title(f"regime {alpha}")
        ax.set_xlabel("x")
        ax.set_ylabel("value function")
    fig.tight_layout()
    fig.savefig(out_svg, format="svg", metadata=_META)
    plt.close(fig)


def plot_policy(policy_csv, out_svg) -> None:
    """Left column: control type (-1 renew, 0 diffusion, 1 harvest); right: regular control."""
    steps = _by_regime(policy_csv, "step_type")
    rates = _by_regime(policy_csv, "c")
    m = len(steps)
    fig, axes = plt.subplots(m, 2, figsize=(10, 3.2 * m), squeeze=False)
    for row, alpha in enumerate(steps):
        xs, ys = steps[alpha]
        ax = axes[row, 0]
        ax.step(xs, ys, where="mid")
        ax.set_yticks([-1, 0, 1])
        ax.set_yticklabels(["renew", "diffusion", "harvest"])
        ax.set_title(f"control type, regime {alpha}")
        ax.set_xlabel("x")
        xs, ys = rates[alpha]
        ax = axes[row, 1]
        ax.step(xs, ys, where="mid")
        ax.set_title(f"regular control, regime {alpha}")
        ax.set_xlabel("x")
        ax.set_ylabel("c")
    fig.tight_layout()
    fig.savefig(out_svg, format="svg", metadata=_META)
    plt.close(fig)


def plot_sweep(sweep_csv, out_svg) -> None:
    series = defaultdict(lambda: ([], []))
    with open(sweep_csv, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            xs, ys = series[row["mode"]]
            xs.append(float(row["N"]))
            ys.append(float(row["distance"]))
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for mode, (xs, ys) in sorted(series.items()):
        ax.plot(xs, ys, marker="o", label=mode)
    ax.set_xscale("log", base=2)
    ax.set_xlabel("noise intensity N")
    ax.set_ylabel("sup |V - q(x - lambda)|")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_svg, format="svg", metadata=_META)
    plt.close(fig)
