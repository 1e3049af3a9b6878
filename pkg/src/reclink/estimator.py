"""Point estimates of the matching and posterior TPR / PPV estimates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .comparison import ConfigurationError


@dataclass(frozen=True)
class LossParams:
    """Losses for a false non-match, a false match, and a match to the wrong record."""

    fnm: float = 1.0
    fm1: float = 1.0
    fm2: float = 2.0

    def __post_init__(self):
        if min(self.fnm, self.fm1, self.fm2) <= 0:
            raise ConfigurationError("loss parameters must be positive")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.fnm, self.fm1, self.fm2)


@dataclass(frozen=True)
class LambdaConditions:
    weak_ok: bool
    strong_ok: bool


def check_lambda_conditions(lam: LossParams) -> LambdaConditions:
    """Sufficient conditions for the thresholding rule to give a bipartite Bayes estimate.

    ``weak_ok`` is the weaker pair (fnm <= fm1, fm2 >= (3 fnm + fm1) / 2);
    ``strong_ok`` the stronger pair (fm1 >= fnm, fm2 >= fnm + fm1).
    """
    fnm, fm1, fm2 = lam.as_tuple()
    weak = 0 < fnm <= fm1 and 2 * fm2 >= 3 * fnm + fm1
    strong = fm1 >= fnm > 0 and fm2 >= fnm + fm1
    return LambdaConditions(weak, strong)


@dataclass
class MatchProbabilities:
    """Empirical posterior match probabilities.

    Sparse triplets ``(rows, cols, probs)`` over observed matches
    (``cols`` 1-based) plus ``p_nonmatch[i] = P(Z_i = 0)``.
    """

    n_a: int
    n_b: int
    rows: np.ndarray
    cols: np.ndarray
    probs: np.ndarray
    p_nonmatch: np.ndarray
    n_draws: int

    def dense(self) -> np.ndarray:
        """(n_A, n_B + 1) table with column 0 holding the non-match probability."""
        out = np.zeros((self.n_a, self.n_b + 1))
        out[:, 0] = self.p_nonmatch
        out[self.rows, self.cols] = self.probs
        return out

    def for_record(self, i: int) -> dict[int, float]:
        sel = self.rows == i
        out = {0: float(self.p_nonmatch[i])}
        out.update({int(j): float(p) for j, p in zip(self.cols[sel], self.probs[sel])})
        return out

    def best(self) -> tuple[np.ndarray, np.ndarray]:
        """Most probable partner (0 if none was sampled) and its probability, per record."""
        best_j = np.zeros(self.n_a, dtype=np.int64)
        best_p = np.zeros(self.n_a)
        # ties resolve to the smallest j: sort by (row, -prob, col)
        order = np.lexsort((self.cols, -self.probs, self.rows))
        rows = self.rows[order]
        first = np.ones(len(rows), dtype=bool)
        first[1:] = rows[1:] != rows[:-1]
        best_j[rows[first]] = self.cols[order][first]
        best_p[rows[first]] = self.probs[order][first]
        return best_j, best_p

    @classmethod
    def from_dense(cls, table: np.ndarray, n_draws: int = 0) -> MatchProbabilities:
        table = np.asarray(table, dtype=float)
        rows, cols = np.nonzero(table[:, 1:] > 0)
        return cls(table.shape[0], table.shape[1] - 1, rows, cols + 1, table[rows, cols + 1],
                   table[:, 0].copy(), n_draws)


def posterior_match_probs(z_draws: np.ndarray, n_b: int) -> MatchProbabilities:
    """Frequencies of Z_i = j over the retained draws (shape (T, n_A))."""
    z_draws = np.asarray(z_draws, dtype=np.int64)
    if z_draws.ndim != 2 or z_draws.shape[0] == 0:
        raise ValueError("need a non-empty (T, n_A) array of draws")
    T, n_a = z_draws.shape
    keys = np.arange(n_a, dtype=np.int64)[None, :] * (n_b + 1) + z_draws
    uniq, counts = np.unique(keys.ravel(), return_counts=True)
    rows, cols = np.divmod(uniq, n_b + 1)
    probs = counts / T
    p0 = np.zeros(n_a)
    zero = cols == 0
    p0[rows[zero]] = probs[zero]
    return MatchProbabilities(n_a, n_b, rows[~zero], cols[~zero], probs[~zero], p0, T)


def bayes_estimate(probs: MatchProbabilities, lam: LossParams = LossParams()) -> np.ndarray:
    """Per-record thresholding rule; requires the weak lambda conditions.

    Record i is matched to its most probable partner j when
    P(Z_i = j) > fm1 / (fm1 + fnm) + P(Z_i not in {0, j}) (fm2 - fm1 - fnm) / (fm1 + fnm).
    Equality is a non-match.
    """
    if not check_lambda_conditions(lam).weak_ok:
        raise ConfigurationError(
            f"loss parameters {lam.as_tuple()} do not satisfy the thresholding conditions; use bayes_estimate_lsap"
        )
    fnm, fm1, fm2 = lam.as_tuple()
    best_j, best_p = probs.best()
    other = 1.0 - probs.p_nonmatch - best_p
    threshold = fm1 / (fm1 + fnm) + other * (fm2 - fm1 - fnm) / (fm1 + fnm)
    return np.where((best_j > 0) & (best_p > threshold), best_j, 0)


def bayes_estimate_lsap(probs: MatchProbabilities, lam: LossParams = LossParams()) -> np.ndarray:
    """Minimize the posterior expected loss over bipartite estimates by linear assignment.

    Columns are the sampled candidates, up to n_A never-sampled records of B
    (all interchangeable), and n_A non-match columns.
    """
    fnm, fm1, fm2 = lam.as_tuple()
    n_a, n_b = probs.n_a, probs.n_b
    p0 = probs.p_nonmatch
    candidates = np.unique(probs.cols)
    unseen = np.setdiff1d(np.arange(1, n_b + 1), candidates, assume_unique=True)[:n_a]
    cols = np.concatenate([candidates, unseen]).astype(np.int64)
    pos = np.searchsorted(cols[: len(candidates)], probs.cols)
    pmat = np.zeros((n_a, len(cols)))
    pmat[probs.rows, pos] = probs.probs
    match_cost = fm1 * p0[:, None] + fm2 * (1.0 - p0[:, None] - pmat)
    nonmatch_cost = np.repeat((fnm * (1.0 - p0))[:, None], n_a, axis=1)
    cost = np.hstack([match_cost, nonmatch_cost])
    row_ind, col_ind = linear_sum_assignment(cost)
    z_hat = np.zeros(n_a, dtype=np.int64)
    hit = col_ind < len(cols)
    z_hat[row_ind[hit]] = cols[col_ind[hit]]
    return z_hat


def point_estimate(probs: MatchProbabilities, lam: LossParams = LossParams()) -> np.ndarray:
    """Thresholding rule when its conditions hold, assignment solver otherwise."""
    if check_lambda_conditions(lam).weak_ok:
        return bayes_estimate(probs, lam)
    return bayes_estimate_lsap(probs, lam)


def expected_loss(z_hat: np.ndarray, probs: MatchProbabilities, lam: LossParams) -> float:
    """Posterior expected loss of ``z_hat``, summed over records."""
    fnm, fm1, fm2 = lam.as_tuple()
    z_hat = np.asarray(z_hat)
    p0 = probs.p_nonmatch
    table = dict(zip(zip(probs.rows.tolist(), probs.cols.tolist()), probs.probs.tolist()))
    total = 0.0
    for i, h in enumerate(z_hat.tolist()):
        if h == 0:
            total += fnm * (1 - p0[i])
        else:
            total += fm1 * p0[i] + fm2 * (1 - p0[i] - table.get((i, h), 0.0))
    return total


@dataclass
class RateEstimate:
    """Posterior-averaged TPR and PPV of a point estimate.

    Draws with no matches have no TPR term and are skipped
    (``n_tpr_skipped``). PPV is NaN when the estimate proposes no match.
    """

    tpr: float
    ppv: float
    n_draws: int
    n_tpr_skipped: int

    @property
    def ppv_missing(self) -> bool:
        return bool(np.isnan(self.ppv))


def rate_terms(z_hat: np.ndarray, z_draws: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """(true positives per draw, matches per draw, matches proposed by z_hat)."""
    z_hat = np.asarray(z_hat)
    z_draws = np.asarray(z_draws)
    hits = ((z_draws == z_hat[None, :]) & (z_hat[None, :] > 0)).sum(axis=1)
    return hits, (z_draws > 0).sum(axis=1), int(np.count_nonzero(z_hat))


def estimate_tpr_ppv(z_hat: np.ndarray, z_draws: np.ndarray) -> RateEstimate:
    """Average TPR(z_hat, Z_t) and PPV(z_hat, Z_t) over the retained draws."""
    z_draws = np.asarray(z_draws)
    if z_draws.ndim != 2 or z_draws.shape[1] != len(z_hat):
        raise ValueError("estimate and draws disagree on n_A")
    hits, n_true, n_hat = rate_terms(z_hat, z_draws)
    ok = n_true > 0
    tpr = float(np.mean(hits[ok] / n_true[ok])) if ok.any() else float("nan")
    ppv = float(np.mean(hits / n_hat)) if n_hat > 0 else float("nan")
    return RateEstimate(tpr, ppv, z_draws.shape[0], int(np.count_nonzero(~ok)))
