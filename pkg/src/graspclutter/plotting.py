"""Success-coverage figure for benchmark reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_success_coverage(curves: dict, path) -> None:
    """One line per variant; the legend carries each curve's AUC."""
    fig, ax = plt.subplots(figsize=(6.0, 4.5), dpi=100)
    for name, curve in curves.items():
        c, s = curve.coverages, curve.success_rates
        if len(c) and c[0] > 0:
            c = [0.0, *c]
            s = [s[0], *s]
        ax.plot(c, s, marker=".", markersize=3, label=f"{name} (AUC {curve.auc:.3f})")
    ax.set_xlabel("coverage")
    ax.set_ylabel("success rate")
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8, loc="lower left")
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
