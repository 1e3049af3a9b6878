"""Independent brute-force references used by the test-suite."""

import itertools

import numpy as np
from scipy.special import betaln, gammaln

from reclink.comparison import DataFile, FieldSpec, naive_comparison_vector

TOY_NAMES = ["first", "last", "year"]
TOY_A = [("John", "Lundrigan", 1848), ("Jedediah", "Smith", 1844)]
TOY_B = [
    ("John", "Lundgren", 1848),
    ("Jon", "Lundregan", 1850),
    ("Jedidiah", "Smith", 1845),
    ("John", "Smith", 1844),
    ("Jedediah", "S", 1844),
]
# cutpoints that reproduce the discretized panel of the toy comparison table
TOY_NAME_CUTS = (0.05, 0.2, 0.53)
TOY_YEAR_CUTS = (0.5, 2.5, 5.0)


def toy_files():
    return DataFile.from_records(TOY_A, TOY_NAMES), DataFile.from_records(TOY_B, TOY_NAMES)


def toy_specs(prefix_weight=0.0, common=()):
    return [
        FieldSpec("first", "string", TOY_NAME_CUTS, common_values=common, prefix_weight=prefix_weight),
        FieldSpec("last", "string", TOY_NAME_CUTS, prefix_weight=prefix_weight),
        FieldSpec("year", "numeric", TOY_YEAR_CUTS),
    ]


def naive_gamma(a, b, specs):
    """(n_A, n_B, F) comparison levels computed pair by pair."""
    return np.array([[naive_comparison_vector(a, b, specs, i, j) for j in range(len(b))] for i in range(len(a))])


def all_matchings(n_a, n_b):
    """Every bipartite labeling z (1-based, 0 = non-match)."""
    out = []
    for k in range(min(n_a, n_b) + 1):
        for rows in itertools.combinations(range(n_a), k):
            for cols in itertools.permutations(range(1, n_b + 1), k):
                z = np.zeros(n_a, dtype=np.int64)
                z[list(rows)] = cols
                out.append(z)
    return out


def _mvbeta(counts):
    return gammaln(counts).sum(axis=-1) - gammaln(counts.sum(axis=-1))


def exact_log_posterior(z, gamma, n_levels, record_specific=False, alpha_p=1.0, beta_p=1.0, alpha=1.0):
    """log P(z | gamma) up to a constant with p, m and u integrated out."""
    n_a, n_b, F = gamma.shape
    n = int(np.sum(z > 0))
    out = gammaln(n_b - n + 1) - gammaln(n_b + 1) + betaln(n + alpha_p, n_a - n + beta_p)
    for f in range(F):
        L = n_levels[f]
        n_m = np.zeros(L)
        n_u = np.zeros((n_a, L))
        for i in range(n_a):
            for j in range(n_b):
                lvl = gamma[i, j, f] - 1
                if z[i] == j + 1:
                    n_m[lvl] += 1
                else:
                    n_u[i, lvl] += 1
        out += _mvbeta(n_m + alpha)
        if record_specific:
            out += _mvbeta(n_u + alpha).sum()
        else:
            out += _mvbeta(n_u.sum(axis=0) + alpha)
    return out


def exact_posterior(gamma, n_levels, **kw):
    """(list of matchings, normalized posterior probabilities)."""
    n_a, n_b, _ = gamma.shape
    zs = all_matchings(n_a, n_b)
    lp = np.array([exact_log_posterior(z, gamma, n_levels, **kw) for z in zs])
    w = np.exp(lp - lp.max())
    return zs, w / w.sum()


def exact_match_probabilities(zs, probs, n_b):
    """P(Z_i = j) as an (n_A, n_B + 1) array."""
    n_a = len(zs[0])
    out = np.zeros((n_a, n_b + 1))
    for z, pr in zip(zs, probs):
        out[np.arange(n_a), z] += pr
    return out


def expected_loss(z_hat, zs, probs, lam):
    """Posterior expected loss of z_hat under the match/non-match loss."""
    fnm, fm1, fm2 = lam
    total = 0.0
    for z, pr in zip(zs, probs):
        loss = 0.0
        for zi, hi in zip(z, z_hat):
            if zi == hi:
                continue
            if hi == 0:
                loss += fnm
            elif zi == 0:
                loss += fm1
            else:
                loss += fm2
        total += pr * loss
    return total


def expected_loss_from_marginals(z_hat, marg, lam):
    """Same quantity from the (n_A, n_B + 1) marginal table; loss is additive over records."""
    fnm, fm1, fm2 = lam
    total = 0.0
    for i, h in enumerate(z_hat):
        p0 = marg[i, 0]
        if h == 0:
            total += fnm * (1 - p0)
        else:
            total += fm1 * p0 + fm2 * (1 - p0 - marg[i, h])
    return total


def exhaustive_minimum(marg, lam):
    """Minimum posterior expected loss over every bipartite estimate."""
    n_a, width = marg.shape
    best = np.inf
    for z in all_matchings(n_a, width - 1):
        best = min(best, expected_loss_from_marginals(z, marg, lam))
    return best


def batch_means_se(x, n_batches=50):
    """Monte Carlo standard error of the mean of a correlated series."""
    x = np.asarray(x, dtype=float)
    size = len(x) // n_batches
    means = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return means.std(ddof=1) / np.sqrt(n_batches)
