"""Matching labelings, disagreement parameters, priors and the posterior.

A matching is a plain integer vector ``z`` of length n_A with ``z[i] = j``
(1-based record in B) or 0 for a non-match. Levels of all fields are laid
out side by side on one axis of length ``sum(L_f)``; ``ComparisonData``
supplies the offsets.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import betaln, gammaln

from .comparison import ComparisonData

GROUP_PARAM_MIN_SIZE = 50


class BipartiteError(AssertionError):
    pass


def check_matching(z: np.ndarray, n_b: int) -> None:
    """Raise :class:`BipartiteError` unless ``z`` is a valid bipartite labeling."""
    z = np.asarray(z)
    if z.ndim != 1:
        raise BipartiteError("matching must be a vector")
    if np.any(z < 0) or np.any(z > n_b):
        raise BipartiteError(f"matching values must lie in 0..{n_b}")
    matched = z[z > 0]
    if len(np.unique(matched)) != len(matched):
        raise BipartiteError("a record in B is matched more than once")


def n_matched(z: np.ndarray) -> int:
    return int(np.count_nonzero(np.asarray(z) > 0))


@dataclass(frozen=True)
class Grouping:
    """Partition of the records of A into groups ``0..n_groups-1``."""

    group_of: np.ndarray
    n_groups: int

    @classmethod
    def pooled(cls, n_a: int) -> Grouping:
        return cls(np.zeros(n_a, dtype=np.int64), 1)

    @classmethod
    def record_specific(cls, n_a: int) -> Grouping:
        return cls(np.arange(n_a, dtype=np.int64), n_a)

    @classmethod
    def from_labels(cls, labels: Sequence) -> Grouping:
        _, inverse = np.unique(np.asarray(labels), return_inverse=True)
        inverse = inverse.reshape(-1).astype(np.int64)
        return cls(inverse, int(inverse.max()) + 1)

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.group_of, minlength=self.n_groups)

    @property
    def is_record_specific(self) -> bool:
        return self.n_groups == len(self.group_of)


@dataclass(frozen=True)
class ModelStructure:
    """Which grouping each parameter family follows.

    u always follows the user grouping. m and p follow it only when every
    group is large enough to identify them, and are pooled otherwise.
    """

    u: Grouping
    m: Grouping
    p: Grouping

    @classmethod
    def from_grouping(cls, grouping: Grouping, m_min_size: int = GROUP_PARAM_MIN_SIZE,
                      p_min_size: int = GROUP_PARAM_MIN_SIZE) -> ModelStructure:
        pooled = Grouping.pooled(len(grouping.group_of))
        smallest = grouping.sizes.min()
        m = grouping if not grouping.is_record_specific and smallest >= m_min_size else pooled
        p = grouping if smallest >= p_min_size else pooled
        return cls(grouping, m, p)

    @classmethod
    def pooled(cls, n_a: int) -> ModelStructure:
        g = Grouping.pooled(n_a)
        return cls(g, g, g)

    @classmethod
    def record_specific(cls, n_a: int) -> ModelStructure:
        return cls.from_grouping(Grouping.record_specific(n_a))


@dataclass
class PriorConfig:
    alpha_p: float = 1.0
    beta_p: float = 1.0
    dirichlet_alpha: list[np.ndarray] | None = None

    def alphas(self, n_levels: Sequence[int]) -> list[np.ndarray]:
        if self.dirichlet_alpha is None:
            return [np.ones(L) for L in n_levels]
        out = [np.asarray(a, dtype=float) for a in self.dirichlet_alpha]
        if [len(a) for a in out] != list(n_levels):
            raise ValueError("dirichlet_alpha does not match the field levels")
        return out

    def alpha_concat(self, n_levels: Sequence[int]) -> np.ndarray:
        return np.concatenate(self.alphas(n_levels))

    def __post_init__(self):
        if self.alpha_p <= 0 or self.beta_p <= 0:
            raise ValueError("Beta hyperparameters must be positive")
        if self.dirichlet_alpha is not None:
            if any(np.any(np.asarray(a) <= 0) for a in self.dirichlet_alpha):
                raise ValueError("Dirichlet hyperparameters must be positive")


@dataclass
class DisagreementParams:
    """m of shape (G_m, sum L_f) and u of shape (G_u, sum L_f), one simplex per field segment."""

    m: np.ndarray
    u: np.ndarray
    offsets: np.ndarray

    def m_field(self, f: int) -> np.ndarray:
        return self.m[:, self.offsets[f]:self.offsets[f + 1]]

    def u_field(self, f: int) -> np.ndarray:
        return self.u[:, self.offsets[f]:self.offsets[f + 1]]

    def check(self, atol: float = 1e-12) -> None:
        for arr in (self.m, self.u):
            if np.any(arr < 0):
                raise ValueError("negative probability")
            sums = np.add.reduceat(arr, self.offsets[:-1], axis=1)
            if not np.allclose(sums, 1.0, rtol=0, atol=atol):
                raise ValueError("a disagreement simplex does not sum to one")

    def log_ratio(self, structure: ModelStructure) -> np.ndarray:
        """log m - log u per record of A and (field, level), shape (n_A, sum L_f)."""
        with np.errstate(divide="ignore"):
            log_m = np.log(self.m)
            log_u = np.log(self.u)
        return log_m[structure.m.group_of] - log_u[structure.u.group_of]


@dataclass
class SufficientStats:
    """Matched counts per m-group and unmatched counts per u-group, over (field, level)."""

    n_m: np.ndarray
    n_u: np.ndarray
    n_matched: int
    n_matched_by_group: np.ndarray


def matched_levels(z: np.ndarray, cd: ComparisonData) -> tuple[np.ndarray, np.ndarray]:
    """(matched record indices, their pattern level indicator rows)."""
    z = np.asarray(z)
    rows = np.flatnonzero(z > 0)
    pats = cd.pair_patterns[rows, z[rows] - 1]
    return rows, cd.level_matrix[pats]


def sufficient_stats(z: np.ndarray, cd: ComparisonData, structure: ModelStructure,
                     field_counts: np.ndarray | None = None) -> SufficientStats:
    """Tabulate matched / unmatched pairs by disagreement level.

    Unmatched counts are the per-record pattern tabulation minus the matched
    pair; pairs are never enumerated.
    """
    if field_counts is None:
        field_counts = cd.field_counts
    rows, lv = matched_levels(z, cd)
    width = field_counts.shape[1]
    per_record_matched = np.zeros((cd.n_a, width), dtype=np.int64)
    per_record_matched[rows] = lv
    n_m = np.zeros((structure.m.n_groups, width), dtype=np.int64)
    np.add.at(n_m, structure.m.group_of, per_record_matched)
    unmatched = field_counts - per_record_matched
    if structure.u.is_record_specific and np.array_equal(structure.u.group_of, np.arange(cd.n_a)):
        n_u = unmatched
    else:
        n_u = np.zeros((structure.u.n_groups, width), dtype=np.int64)
        np.add.at(n_u, structure.u.group_of, unmatched)
    by_group = np.bincount(structure.p.group_of[rows], minlength=structure.p.n_groups)
    return SufficientStats(n_m, n_u, len(rows), by_group)


def _xlogy(counts: np.ndarray, probs: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(counts > 0, counts * np.log(probs), 0.0)
    return float(terms.sum())


def log_likelihood(z: np.ndarray, params: DisagreementParams, cd: ComparisonData,
                   structure: ModelStructure) -> float:
    """Log-likelihood of the comparison data; -inf when a zero-probability level is observed."""
    st = sufficient_stats(z, cd, structure)
    return _xlogy(st.n_m, params.m) + _xlogy(st.n_u, params.u)


def log_prior_matching(z: np.ndarray, p: np.ndarray, n_b: int, prior: PriorConfig,
                       structure: ModelStructure) -> float:
    z = np.asarray(z)
    p = np.atleast_1d(np.asarray(p, dtype=float))
    n = n_matched(z)
    by_group = np.bincount(structure.p.group_of[z > 0], minlength=structure.p.n_groups)
    sizes = structure.p.sizes
    out = gammaln(n_b - n + 1) - gammaln(n_b + 1)
    out -= structure.p.n_groups * betaln(prior.alpha_p, prior.beta_p)
    with np.errstate(divide="ignore", invalid="ignore"):
        out += np.sum((by_group + prior.alpha_p - 1) * np.log(p))
        out += np.sum((sizes - by_group + prior.beta_p - 1) * np.log1p(-p))
    return float(out)


def log_dirichlet_prior(params: DisagreementParams, alpha: np.ndarray) -> float:
    """Sum of Dirichlet log-densities of every m and u simplex."""
    offsets = params.offsets
    log_norm = 0.0
    for f in range(len(offsets) - 1):
        a = alpha[offsets[f]:offsets[f + 1]]
        log_norm += gammaln(a).sum() - gammaln(a.sum())
    total = 0.0
    for arr in (params.m, params.u):
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(alpha - 1 != 0, (alpha - 1) * np.log(arr), 0.0)
        total += float(terms.sum()) - arr.shape[0] * log_norm
    return total


def log_posterior_unnormalized(z: np.ndarray, params: DisagreementParams, p: np.ndarray,
                               cd: ComparisonData, prior: PriorConfig,
                               structure: ModelStructure) -> float:
    """log P(z, p) + Dirichlet priors on m and u + log-likelihood."""
    alpha = prior.alpha_concat(cd.n_levels)
    return (log_prior_matching(z, p, cd.n_b, prior, structure)
            + log_dirichlet_prior(params, alpha)
            + log_likelihood(z, params, cd, structure))
