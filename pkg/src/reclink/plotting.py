"""Figures written next to the tabular outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_frontier(rows: Sequence[dict], path: str | Path) -> None:
    """Estimated (and, when known, actual) PPV against TPR along the loss grid."""
    fig, ax = plt.subplots(figsize=(5, 4))
    est = [(r["est_tpr"], r["est_ppv"]) for r in rows]
    ax.plot(*zip(*est), "o--", label="posterior estimate")
    actual = [(r["tpr"], r["ppv"]) for r in rows if not np.isnan(r["tpr"])]
    if actual:
        ax.plot(*zip(*actual), "s-", label="against truth")
    ax.set_xlabel("TPR")
    ax.set_ylabel("PPV")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_n_matched(posterior, path: str | Path) -> None:
    """Trace of n(Z) summed over blocks, per chain, and the retained-draw histogram."""
    fig, (left, right) = plt.subplots(1, 2, figsize=(9, 3.5))
    if posterior.results:
        n_chains = len(posterior.results[0].traces)
        for c in range(n_chains):
            total = np.sum([r.traces[c] for r in posterior.results], axis=0)
            left.plot(total, lw=0.8, label=f"chain {c}")
        left.legend()
    left.set_xlabel("iteration")
    left.set_ylabel("n(Z)")
    counts = np.count_nonzero(posterior.z, axis=1)
    if len(counts):
        right.hist(counts, bins=min(30, max(1, np.ptp(counts) + 1)))
    right.set_xlabel("n(Z), retained draws")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
