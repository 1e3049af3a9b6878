"""Three-step Gibbs sampler over (p, m/u, Z).

Step 3 draws each Z_i from its full conditional in two stages: first the
non-match option or a comparison pattern (weighted by the number of free
records in B with that pattern), then a free record uniformly within the
chosen pattern. The dense path counts free records per pattern by
scanning all of B; the sparse path starts from the per-record pattern
tabulation and subtracts the currently matched records. Both produce the
same integer counts, hence identical chains.

Random streams: ``SeedSequence(seed, spawn_key=stream_key + (chain,))`` is
spawned into two children, the first driving the parameter and Z draws and
the second the per-iteration visit order.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numba
import numpy as np

from .comparison import ComparisonData, ConfigurationError
from .model import (
    DisagreementParams,
    ModelStructure,
    PriorConfig,
    check_matching,
    sufficient_stats,
)

U_CORRECTION_MODES = ("off", "fixed", "soft")
PATHS = ("auto", "dense", "sparse")


@dataclass
class SamplerConfig:
    iterations: int = 1000
    burn_in: int = 100
    seed: int = 0
    chains: int = 1
    thin: int = 1
    sparse_threshold_ratio: float = 200.0
    path: str = "auto"
    u_correction: str = "off"
    u_strength: float = 1.0
    record_specific: bool = False
    store_params: bool = False
    debug: bool = False

    def __post_init__(self):
        if self.iterations < 1 or self.thin < 1 or self.chains < 1:
            raise ConfigurationError("iterations, thin and chains must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ConfigurationError("burn_in must be in [0, iterations)")
        if self.u_correction not in U_CORRECTION_MODES:
            raise ConfigurationError(f"u_correction must be one of {U_CORRECTION_MODES}")
        if self.u_correction == "soft" and self.u_strength <= 0:
            raise ConfigurationError("soft u_correction needs a positive strength")
        if self.path not in PATHS:
            raise ConfigurationError(f"path must be one of {PATHS}")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def use_sparse(self, n_a: int, n_b: int) -> bool:
        if self.path != "auto":
            return self.path == "sparse"
        return n_a < n_b / self.sparse_threshold_ratio


@dataclass
class PosteriorSample:
    """Retained draws of one chain.

    ``z`` has shape (T, n_A); ``n_matched_trace`` covers every iteration,
    burn-in included.
    """

    z: np.ndarray
    n_matched_trace: np.ndarray
    burn_in: int
    seed: int
    chain: int
    stream_key: tuple
    config_digest: str
    sparse: bool
    p: np.ndarray | None = None
    m: np.ndarray | None = None
    u: np.ndarray | None = None
    seconds: float = 0.0

    @property
    def n_draws(self) -> int:
        return self.z.shape[0]

    @property
    def n_a(self) -> int:
        return self.z.shape[1]

    def n_matched(self) -> np.ndarray:
        return np.count_nonzero(self.z > 0, axis=1)


def stream_generators(seed: int, stream_key: Sequence[int] = (), chain: int = 0):
    """(draw generator, visit-order generator) for one chain."""
    root = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in stream_key) + (int(chain),))
    draws, order = root.spawn(2)
    return np.random.Generator(np.random.PCG64(draws)), np.random.Generator(np.random.PCG64(order))


# -- U-correction ----------------------------------------------------------------


@dataclass
class UCorrectionTerms:
    """Margins laid out on the concatenated level axis, one row per u-group."""

    mode: str
    fixed_cols: np.ndarray
    values: np.ndarray
    strength: float = 1.0

    @classmethod
    def none(cls, n_groups: int, width: int) -> UCorrectionTerms:
        return cls("off", np.zeros(width, dtype=bool), np.zeros((n_groups, width)))

    @classmethod
    def build(cls, mode: str, margins: dict[str, np.ndarray] | None, cd: ComparisonData,
              structure: ModelStructure, strength: float = 1.0) -> UCorrectionTerms:
        """``margins[name]`` is (L_f,) pooled or (n_A, L_f) per record of this block."""
        offsets = cd.level_offsets
        width = offsets[-1]
        G = structure.u.n_groups
        if mode == "off" or not margins:
            return cls.none(G, width)
        cols = np.zeros(width, dtype=bool)
        values = np.zeros((G, width))
        sizes = structure.u.sizes[:, None]
        for f, spec in enumerate(cd.specs):
            if spec.name not in margins:
                continue
            marg = np.asarray(margins[spec.name], dtype=float)
            lo, hi = offsets[f], offsets[f + 1]
            if marg.shape[-1] != hi - lo:
                raise ConfigurationError(f"margin for {spec.name!r} has {marg.shape[-1]} levels, expected {hi - lo}")
            if marg.ndim == 1:
                values[:, lo:hi] = marg
            else:
                if marg.shape[0] != cd.n_a:
                    raise ConfigurationError(f"per-record margin for {spec.name!r} has {marg.shape[0]} rows")
                acc = np.zeros((G, hi - lo))
                np.add.at(acc, structure.u.group_of, marg)
                values[:, lo:hi] = acc / sizes
            cols[lo:hi] = True
        return cls(mode, cols, values, strength)


# -- steps 1 and 2 -----------------------------------------------------------------


def sample_p(z: np.ndarray, prior: PriorConfig, structure: ModelStructure, rng: np.random.Generator) -> np.ndarray:
    """p_g ~ Beta(n_g(Z) + alpha_p, n_A,g - n_g(Z) + beta_p)."""
    z = np.asarray(z)
    n_g = np.bincount(structure.p.group_of[z > 0], minlength=structure.p.n_groups)
    return rng.beta(n_g + prior.alpha_p, structure.p.sizes - n_g + prior.beta_p)


def dirichlet_segments(alpha: np.ndarray, offsets: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Independent Dirichlet draws for every row and every field segment of ``alpha``."""
    g = rng.standard_gamma(alpha)
    sums = np.add.reduceat(g, offsets[:-1], axis=1)
    return g / np.repeat(sums, np.diff(offsets), axis=1)


def sample_phi(z: np.ndarray, cd: ComparisonData, prior: PriorConfig, structure: ModelStructure,
               rng: np.random.Generator, correction: UCorrectionTerms | None = None) -> DisagreementParams:
    """m ~ Dirichlet(n_m + alpha) per m-group, u ~ Dirichlet(n_u + alpha) per u-group.

    Under a fixed U-correction the corrected fields of u are set to their
    margins; under a soft one, strength * margin is added to the Dirichlet
    parameter.
    """
    offsets = cd.level_offsets
    alpha = prior.alpha_concat(cd.n_levels)
    st = sufficient_stats(z, cd, structure)
    m = dirichlet_segments(st.n_m + alpha, offsets, rng)
    u_alpha = st.n_u + alpha
    if correction is not None and correction.mode == "soft":
        u_alpha = u_alpha + correction.strength * correction.values * correction.fixed_cols
    u = dirichlet_segments(u_alpha, offsets, rng)
    if correction is not None and correction.mode == "fixed":
        u[:, correction.fixed_cols] = correction.values[:, correction.fixed_cols]
    return DisagreementParams(m, u, offsets)


# -- step 3 ------------------------------------------------------------------------


def pattern_log_ratios(params: DisagreementParams, cd: ComparisonData, structure: ModelStructure) -> np.ndarray:
    """sum_f log(m / u) for every record of A and every pattern, shape (n_A, P)."""
    lr = params.log_ratio(structure)
    idx = cd.level_offsets[:-1][None, :] + cd.patterns - 1
    out = lr[:, idx[:, 0]].copy()
    for f in range(1, idx.shape[1]):
        out += lr[:, idx[:, f]]
    return out


def precompute_likelihood_sums(params: DisagreementParams, cd: ComparisonData,
                               structure: ModelStructure) -> np.ndarray:
    """sum_j exp(sum_f log(m/u)) over all of B for each record of A, via pattern counts."""
    return (cd.counts * np.exp(pattern_log_ratios(params, cd, structure))).sum(axis=1)


@dataclass
class SparseIndex:
    """Records of B grouped by pattern for each record of A (sorted by j within a pattern)."""

    ptr: np.ndarray
    js: np.ndarray

    @classmethod
    def build(cls, cd: ComparisonData) -> SparseIndex:
        js = np.argsort(cd.pair_patterns, axis=1, kind="stable").astype(np.int32)
        ptr = np.zeros((cd.n_a, cd.n_patterns + 1), dtype=np.int64)
        ptr[:, 1:] = np.cumsum(cd.counts, axis=1)
        return cls(ptr, js)


@numba.njit(cache=True)
def _draw_z(z, owner, pp, counts, llr, log_odds, order, uniforms, sparse, ptr, js, debug):
    n_a, n_b = pp.shape
    n_pat = counts.shape[1]
    free = np.empty(n_pat, np.int64)
    logw = np.empty(n_pat)
    n_match = 0
    for i in range(n_a):
        if z[i] > 0:
            n_match += 1
    for k in range(order.shape[0]):
        i = order[k]
        if z[i] > 0:
            owner[z[i] - 1] = -1
            z[i] = 0
            n_match -= 1
        if sparse:
            for q in range(n_pat):
                free[q] = counts[i, q]
            for i2 in range(n_a):
                if z[i2] > 0:
                    free[pp[i, z[i2] - 1]] -= 1
        else:
            for q in range(n_pat):
                free[q] = 0
            for j in range(n_b):
                if owner[j] < 0:
                    free[pp[i, j]] += 1
        log_w0 = math.log(n_b - n_match)
        top = log_w0
        for q in range(n_pat):
            if free[q] > 0:
                logw[q] = math.log(free[q]) + log_odds[i] + llr[i, q]
                if logw[q] > top:
                    top = logw[q]
        w0 = math.exp(log_w0 - top)
        total = w0
        for q in range(n_pat):
            if free[q] > 0:
                total += math.exp(logw[q] - top)
        target = uniforms[k, 0] * total
        if target < w0:
            continue
        acc = w0
        chosen = -1
        for q in range(n_pat):
            if free[q] > 0:
                chosen = q
                acc += math.exp(logw[q] - top)
                if target < acc:
                    break
        r = int(uniforms[k, 1] * free[chosen])
        if r >= free[chosen]:
            r = free[chosen] - 1
        pick = -1
        if sparse:
            for s in range(ptr[i, chosen], ptr[i, chosen + 1]):
                j = js[i, s]
                if owner[j] < 0:
                    if r == 0:
                        pick = j
                        break
                    r -= 1
        else:
            for j in range(n_b):
                if pp[i, j] == chosen and owner[j] < 0:
                    if r == 0:
                        pick = j
                        break
                    r -= 1
        if debug and (pick < 0 or owner[pick] >= 0):
            raise AssertionError("step 3 picked an occupied record")
        owner[pick] = i
        z[i] = pick + 1
        n_match += 1
    return z


def owner_index(z: np.ndarray, n_b: int) -> np.ndarray:
    """owner[j] = i if record j of B (0-based) is matched to i, else -1."""
    owner = np.full(n_b, -1, dtype=np.int64)
    rows = np.flatnonzero(z > 0)
    owner[z[rows] - 1] = rows
    return owner


def sample_Z(z: np.ndarray, params: DisagreementParams, p: np.ndarray, cd: ComparisonData,
             structure: ModelStructure, rng: np.random.Generator, order: Sequence[int] | None = None,
             sparse: bool = False, sparse_index: SparseIndex | None = None, debug: bool = False,
             llr: np.ndarray | None = None) -> np.ndarray:
    """Redraw Z_i for every record in ``order`` from its full conditional.

    Non-match weight is n_B - n(Z_-i); a free record j of B gets
    p/(1-p) * exp(sum_f log(m/u)); records matched elsewhere get 0.
    """
    z = np.array(z, dtype=np.int64)
    if order is None:
        order = rng.permutation(cd.n_a)
    order = np.asarray(order, dtype=np.int64)
    uniforms = rng.random((len(order), 2))
    if llr is None:
        llr = pattern_log_ratios(params, cd, structure)
    pg = np.clip(np.asarray(p, dtype=float), 1e-300, 1 - 1e-16)
    log_odds = (np.log(pg) - np.log1p(-pg))[structure.p.group_of]
    if sparse:
        if sparse_index is None:
            sparse_index = SparseIndex.build(cd)
        ptr, js = sparse_index.ptr, sparse_index.js
    else:
        ptr = np.zeros((1, 1), dtype=np.int64)
        js = np.zeros((1, 1), dtype=np.int32)
    return _draw_z(z, owner_index(z, cd.n_b), cd.pair_patterns, cd.counts, llr, log_odds,
                   order, uniforms, sparse, ptr, js, debug)


def conditional_probabilities(i: int, z: np.ndarray, params: DisagreementParams, p: np.ndarray,
                              cd: ComparisonData, structure: ModelStructure) -> np.ndarray:
    """P(Z_i = j | rest) for j = 0..n_B, evaluated pair by pair."""
    z = np.asarray(z)
    others = np.delete(z, i)
    taken = set(int(v) for v in others[others > 0])
    lr = params.log_ratio(structure)[i]
    offsets = cd.level_offsets
    pg = p[structure.p.group_of[i]]
    w = np.zeros(cd.n_b + 1)
    w[0] = cd.n_b - len(taken)
    for j in range(1, cd.n_b + 1):
        if j in taken:
            continue
        levels = cd.comparison_vector(i, j - 1)
        w[j] = pg / (1 - pg) * math.exp(sum(lr[offsets[f] + levels[f] - 1] for f in range(len(levels))))
    return w / w.sum()


# -- chains ------------------------------------------------------------------------


def run_chain(cd: ComparisonData, prior: PriorConfig | None = None, config: SamplerConfig | None = None,
              structure: ModelStructure | None = None, margins: dict[str, np.ndarray] | None = None,
              chain: int = 0, stream_key: Sequence[int] = (),
              callback: Callable | None = None) -> PosteriorSample:
    """Run one Gibbs chain from the empty matching.

    ``callback(iteration, z, p, params)`` is invoked after every iteration.
    """
    prior = prior or PriorConfig()
    config = config or SamplerConfig()
    if structure is None:
        structure = ModelStructure.record_specific(cd.n_a) if config.record_specific else ModelStructure.pooled(cd.n_a)
    correction = UCorrectionTerms.build(config.u_correction, margins, cd, structure, config.u_strength)
    rng, order_rng = stream_generators(config.seed, stream_key, chain)
    sparse = config.use_sparse(cd.n_a, cd.n_b)
    index = SparseIndex.build(cd) if sparse else None

    n_keep = len(range(config.burn_in, config.iterations, config.thin))
    z_draws = np.zeros((n_keep, cd.n_a), dtype=np.int32)
    trace = np.zeros(config.iterations, dtype=np.int64)
    p_draws = m_draws = u_draws = None
    if config.store_params:
        p_draws = np.zeros((n_keep, structure.p.n_groups))
        width = cd.level_offsets[-1]
        m_draws = np.zeros((n_keep, structure.m.n_groups, width))
        u_draws = np.zeros((n_keep, structure.u.n_groups, width))

    start = time.perf_counter()
    z = np.zeros(cd.n_a, dtype=np.int64)
    kept = 0
    for it in range(config.iterations):
        p = sample_p(z, prior, structure, rng)
        params = sample_phi(z, cd, prior, structure, rng, correction)
        order = order_rng.permutation(cd.n_a)
        z = sample_Z(z, params, p, cd, structure, rng, order=order, sparse=sparse,
                     sparse_index=index, debug=config.debug)
        check_matching(z, cd.n_b)
        trace[it] = np.count_nonzero(z)
        if callback is not None:
            callback(it, z, p, params)
        if it >= config.burn_in and (it - config.burn_in) % config.thin == 0:
            z_draws[kept] = z
            if config.store_params:
                p_draws[kept] = p
                m_draws[kept] = params.m
                u_draws[kept] = params.u
            kept += 1
    return PosteriorSample(
        z=z_draws, n_matched_trace=trace, burn_in=config.burn_in, seed=config.seed, chain=chain,
        stream_key=tuple(stream_key), config_digest=config.digest(), sparse=sparse,
        p=p_draws, m=m_draws, u=u_draws, seconds=time.perf_counter() - start,
    )


def run_chains(cd: ComparisonData, prior: PriorConfig | None = None, config: SamplerConfig | None = None,
               structure: ModelStructure | None = None, margins: dict[str, np.ndarray] | None = None,
               stream_key: Sequence[int] = ()) -> list[PosteriorSample]:
    config = config or SamplerConfig()
    return [run_chain(cd, prior, config, structure, margins, chain=c, stream_key=stream_key)
            for c in range(config.chains)]


def pooled_draws(samples: Sequence[PosteriorSample]) -> np.ndarray:
    return np.concatenate([s.z for s in samples], axis=0)


def gelman_rubin(samples: Sequence[PosteriorSample],
                 summary: Callable[[PosteriorSample], np.ndarray] | None = None) -> float:
    """Potential scale reduction factor of a scalar summary (default n(Z)) across chains.

    Returns 1.0 when every chain is constant at the same value.
    """
    if len(samples) < 2:
        raise ConfigurationError("Gelman-Rubin needs at least two chains")
    summary = summary or PosteriorSample.n_matched
    draws = np.array([np.asarray(summary(s), dtype=float) for s in samples])
    n = draws.shape[1]
    if n < 2:
        raise ConfigurationError("Gelman-Rubin needs at least two draws per chain")
    within = draws.var(axis=1, ddof=1).mean()
    between = n * draws.mean(axis=1).var(ddof=1)
    if within == 0:
        return 1.0 if between == 0 else math.inf
    pooled = (n - 1) / n * within + between / n
    return float(math.sqrt(pooled / within))
