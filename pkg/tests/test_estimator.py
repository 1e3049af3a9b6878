import itertools

import numpy as np
import pytest

from oracles import exhaustive_minimum, expected_loss_from_marginals
from reclink.comparison import ConfigurationError
from reclink.estimator import (
    LossParams,
    MatchProbabilities,
    bayes_estimate,
    bayes_estimate_lsap,
    check_lambda_conditions,
    estimate_tpr_ppv,
    expected_loss,
    point_estimate,
    posterior_match_probs,
)


def _random_mixture(rng, n_a, n_b, k=6):
    """A posterior given as a mixture of k random bipartite matchings."""
    draws = []
    for _ in range(k):
        z = np.zeros(n_a, dtype=np.int64)
        m = rng.integers(0, min(n_a, n_b) + 1)
        rows = rng.choice(n_a, m, replace=False)
        z[rows] = rng.choice(n_b, m, replace=False) + 1
        draws.append(z)
    weights = rng.dirichlet(np.ones(k))
    table = np.zeros((n_a, n_b + 1))
    for w, z in zip(weights, draws):
        table[np.arange(n_a), z] += w
    return MatchProbabilities.from_dense(table)


class TestMatchProbs:
    def test_counting_example(self):
        probs = posterior_match_probs(np.array([[1, 0], [1, 2]]), 3)
        assert probs.for_record(0) == {0: 0.0, 1: 1.0}
        assert probs.for_record(1) == {0: 0.5, 2: 0.5}

    def test_single_draw_is_degenerate(self):
        probs = posterior_match_probs(np.array([[2, 0, 1]]), 4)
        assert set(np.unique(probs.dense())) <= {0.0, 1.0}

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        z = np.stack([rng.permutation(6)[:4] for _ in range(50)])
        probs = posterior_match_probs(z, 6)
        np.testing.assert_allclose(probs.dense().sum(axis=1), 1.0)

    def test_empty_sample_rejected(self):
        with pytest.raises(ValueError):
            posterior_match_probs(np.zeros((0, 2), dtype=int), 3)


class TestLambdaConditions:
    @pytest.mark.parametrize("lam,weak,strong", [
        ((1, 1, 2), True, True),
        ((1, 3, 3), True, False),
        ((2, 1, 5), False, False),
    ])
    def test_examples(self, lam, weak, strong):
        c = check_lambda_conditions(LossParams(*lam))
        assert (c.weak_ok, c.strong_ok) == (weak, strong)

    def test_positive_losses_required(self):
        with pytest.raises(ConfigurationError):
            LossParams(0, 1, 2)


def _single_record(p_best, p_other, n_b=6):
    table = np.zeros((1, n_b + 1))
    table[0, 5] = p_best
    table[0, 2] = p_other
    table[0, 0] = 1 - p_best - p_other
    return MatchProbabilities.from_dense(table)


class TestThreshold:
    def test_default_losses_match(self):
        assert bayes_estimate(_single_record(0.6, 0.1), LossParams(1, 1, 2)).tolist() == [5]

    def test_stricter_losses_reject(self):
        assert bayes_estimate(_single_record(0.6, 0.1), LossParams(1, 2, 4)).tolist() == [0]

    def test_tie_is_non_match(self):
        assert bayes_estimate(_single_record(0.5, 0.1), LossParams(1, 1, 2)).tolist() == [0]

    def test_refuses_outside_conditions(self):
        with pytest.raises(ConfigurationError):
            bayes_estimate(_single_record(0.6, 0.1), LossParams(1, 1, 1.4))
        # the dispatcher routes the same input to the assignment solver
        assert point_estimate(_single_record(0.6, 0.1), LossParams(1, 1, 1.4)).tolist() == [5]

    def test_bipartite_and_monotone(self):
        rng = np.random.default_rng(1)
        grid = [LossParams(1, k, 2 * k) for k in (1, 1.5, 2, 3, 5)]
        for _ in range(300):
            probs = _random_mixture(rng, 4, 6)
            counts = []
            for lam in grid:
                z = bayes_estimate(probs, lam)
                matched = z[z > 0]
                assert len(np.unique(matched)) == len(matched)
                counts.append(len(matched))
            assert counts == sorted(counts, reverse=True)


class TestLSAP:
    def test_certain_posterior(self):
        z = np.array([3, 0, 1, 6])
        probs = posterior_match_probs(z[None, :], 6)
        for lam in (LossParams(1, 1, 2), LossParams(1, 1, 1.4), LossParams(2, 1, 5)):
            assert bayes_estimate_lsap(probs, lam).tolist() == z.tolist()

    @pytest.mark.parametrize("lam", [LossParams(1, 1, 1.4), LossParams(1, 1, 2), LossParams(2, 1, 2.5)])
    def test_equals_exhaustive_minimum(self, lam):
        rng = np.random.default_rng(2)
        for _ in range(40):
            n_a, n_b = int(rng.integers(1, 5)), int(rng.integers(1, 7))
            n_a = min(n_a, n_b)
            probs = _random_mixture(rng, n_a, n_b)
            dense = probs.dense()
            best = exhaustive_minimum(dense, lam.as_tuple())
            got = bayes_estimate_lsap(probs, lam)
            assert expected_loss_from_marginals(got, dense, lam.as_tuple()) == pytest.approx(best, abs=1e-12)
            assert expected_loss(got, probs, lam) == pytest.approx(best, abs=1e-12)

    def test_agrees_with_threshold_under_conditions(self):
        rng = np.random.default_rng(3)
        lam = LossParams(1, 1, 2)
        for _ in range(100):
            probs = _random_mixture(rng, 3, 5)
            a = expected_loss(bayes_estimate(probs, lam), probs, lam)
            b = expected_loss(bayes_estimate_lsap(probs, lam), probs, lam)
            assert a == pytest.approx(b, abs=1e-12)

    def test_unsampled_records_of_b_used(self):
        # record 2 is cheaper matched to a j it was never sampled with than left unmatched:
        # (1, 2) and (1, 3) cost 0.3 + 1.05, (1, 0) costs 0.3 + 1.25, (2, 1) costs 0.9 + 0.75
        probs = posterior_match_probs(np.array([[1, 0]] * 3 + [[2, 1]]), 3)
        lam = LossParams(5, 1, 1.2)
        z = bayes_estimate_lsap(probs, lam)
        assert z[0] == 1 and z[1] in (2, 3)
        assert expected_loss(z, probs, lam) == pytest.approx(1.35)


class TestRates:
    def test_hand_example(self):
        est = estimate_tpr_ppv(np.array([1, 0]), np.array([[1, 2], [1, 0]]))
        assert est.tpr == pytest.approx(0.75) and est.ppv == pytest.approx(1.0)
        assert est.n_tpr_skipped == 0

    def test_identical_and_disjoint(self):
        draws = np.array([[1, 2, 0]] * 4)
        est = estimate_tpr_ppv(draws[0], draws)
        assert (est.tpr, est.ppv) == (1.0, 1.0)
        est = estimate_tpr_ppv(np.array([2, 1, 3]), draws)
        assert (est.tpr, est.ppv) == (0.0, 0.0)

    def test_empty_estimate_flags_ppv(self):
        est = estimate_tpr_ppv(np.zeros(2, dtype=int), np.array([[1, 0], [0, 0]]))
        assert est.ppv_missing and est.tpr == 0.0 and est.n_tpr_skipped == 1

    def test_all_draws_empty(self):
        est = estimate_tpr_ppv(np.array([1, 0]), np.zeros((3, 2), dtype=int))
        assert np.isnan(est.tpr) and est.ppv == 0.0 and est.n_tpr_skipped == 3

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            estimate_tpr_ppv(np.array([1, 0, 0]), np.array([[1, 0]]))

    def test_terms_exact_on_enumerated_mixture(self):
        zs = [np.array(z) for z in itertools.product(range(3), repeat=2) if z[0] == 0 or z[0] != z[1]]
        draws = np.stack(zs)
        z_hat = np.array([1, 2])
        expected_ppv = np.mean([((z == z_hat) & (z_hat > 0)).sum() / 2 for z in zs])
        assert estimate_tpr_ppv(z_hat, draws).ppv == pytest.approx(expected_ppv)
