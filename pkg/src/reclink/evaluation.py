"""Scoring against known matches and the precision/recall frontier."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .estimator import LossParams, estimate_tpr_ppv, point_estimate, posterior_match_probs

FRONTIER_COLUMNS = ("lambda_fnm", "lambda_fm1", "lambda_fm2", "tpr", "ppv", "est_tpr", "est_ppv", "n_matched")
DEFAULT_GRID = tuple(LossParams(1.0, k, 2.0 * k) for k in (1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0))


@dataclass
class TruthLabels:
    """True partner (1-based index into B, 0 for none) per record of A.

    Records flagged ``uncertain`` are left out of every count.
    """

    partner: np.ndarray
    uncertain: np.ndarray | None = None

    def __post_init__(self):
        self.partner = np.asarray(self.partner, dtype=np.int64)
        if self.uncertain is None:
            self.uncertain = np.zeros(len(self.partner), dtype=bool)
        self.uncertain = np.asarray(self.uncertain, dtype=bool)
        matched = self.partner[self.partner > 0]
        if len(np.unique(matched)) != len(matched):
            raise ValueError("truth labels are not bipartite")

    @property
    def scored(self) -> np.ndarray:
        return ~self.uncertain


@dataclass
class Scores:
    tpr: float
    ppv: float
    true_positives: int
    n_true: int
    n_proposed: int


def actual_tpr_ppv(z_hat: np.ndarray, truth: TruthLabels) -> Scores:
    """Recall and precision of ``z_hat`` against the truth (NaN for a zero denominator)."""
    z_hat = np.asarray(z_hat)
    if len(z_hat) != len(truth.partner):
        raise ValueError("estimate and truth disagree on n_A")
    keep = truth.scored
    zh, tr = z_hat[keep], truth.partner[keep]
    tp = int(np.count_nonzero((zh == tr) & (tr > 0)))
    n_true = int(np.count_nonzero(tr > 0))
    n_prop = int(np.count_nonzero(zh > 0))
    tpr = tp / n_true if n_true else float("nan")
    ppv = tp / n_prop if n_prop else float("nan")
    return Scores(tpr, ppv, tp, n_true, n_prop)


def frontier_sweep(z_draws: np.ndarray, n_b: int, grid: Iterable[LossParams] = DEFAULT_GRID,
                   truth: TruthLabels | None = None,
                   estimator: Callable[[LossParams], np.ndarray] | None = None) -> list[dict]:
    """One row per loss setting with estimated (and, given truth, actual) TPR / PPV.

    ``estimator(lam)`` may supply the point estimate (e.g. merged across
    blocks); by default it is computed from ``z_draws``.
    """
    if estimator is None:
        probs = posterior_match_probs(z_draws, n_b)

        def estimator(lam):
            return point_estimate(probs, lam)

    rows = []
    for lam in grid:
        z_hat = estimator(lam)
        est = estimate_tpr_ppv(z_hat, z_draws)
        row = {
            "lambda_fnm": float(lam.fnm), "lambda_fm1": float(lam.fm1), "lambda_fm2": float(lam.fm2),
            "tpr": float("nan"), "ppv": float("nan"),
            "est_tpr": est.tpr, "est_ppv": est.ppv,
            "n_matched": int(np.count_nonzero(z_hat)),
        }
        if truth is not None:
            sc = actual_tpr_ppv(z_hat, truth)
            row.update(tpr=sc.tpr, ppv=sc.ppv, true_positives=sc.true_positives)
        rows.append(row)
    return rows


def write_frontier(rows: Sequence[dict], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(FRONTIER_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in FRONTIER_COLUMNS])


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None or np.isnan(v):
        return "NA"
    return f"{v:.6f}"


def matches_at_precision(points: Sequence[tuple[float, float]], level: float) -> float:
    """Most true matches achieved by any frontier point with PPV >= ``level``.

    ``points`` are (ppv, true positives) pairs; -inf if none reaches the level.
    """
    best = -np.inf
    for ppv, tp in points:
        if not np.isnan(ppv) and ppv >= level:
            best = max(best, tp)
    return best


def compare_frontiers(better: Sequence[tuple[float, float]], baseline: Sequence[tuple[float, float]],
                      strict: bool = True) -> tuple[bool, list[tuple[float, float, float]]]:
    """Check ``better`` dominates ``baseline`` at every PPV level both reach.

    Levels are the PPV values of either frontier inside the PPV range
    covered by both.
    Returns (holds, [(level, better_tp, baseline_tp), ...]).
    """
    pb = [p for p, _ in better if not np.isnan(p)]
    pa = [p for p, _ in baseline if not np.isnan(p)]
    if not pb or not pa:
        return False, []
    lo, top = max(min(pb), min(pa)), min(max(pb), max(pa))
    levels = sorted({p for p in pb + pa if lo <= p <= top})
    detail = []
    ok = True
    for q in levels:
        tb, ta = matches_at_precision(better, q), matches_at_precision(baseline, q)
        detail.append((q, tb, ta))
        ok &= (tb > ta) if strict else (tb >= ta)
    return ok, detail
