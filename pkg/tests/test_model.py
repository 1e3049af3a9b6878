import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import naive_gamma, toy_files, toy_specs
from reclink.comparison import DataFile, FieldSpec, build_comparison_data
from reclink.model import (
    BipartiteError,
    DisagreementParams,
    Grouping,
    ModelStructure,
    PriorConfig,
    check_matching,
    log_likelihood,
    log_posterior_unnormalized,
    log_prior_matching,
    sufficient_stats,
)
from reclink.sampler import conditional_probabilities, dirichlet_segments
from reclink.synthetic import SyntheticConfig, generate_synthetic


def _one_by_one():
    a = DataFile(["1"], {"x": np.array(["A"], dtype=object)})
    cd = build_comparison_data(a, a, [FieldSpec("x", "categorical")])
    return cd


def _random_instance(seed, n_a=10, n_b=50):
    data = generate_synthetic(SyntheticConfig(n_a=n_a, n_b=n_b, overlap=0.5, seed=seed))
    specs = [FieldSpec("first", "string", (0.1, 0.3)), FieldSpec("year", "numeric", (1.5, 3.5)),
             FieldSpec("place", "categorical")]
    return data, specs, build_comparison_data(data.a, data.b, specs)


def _random_matching(rng, n_a, n_b):
    k = rng.integers(0, min(n_a, n_b) + 1)
    z = np.zeros(n_a, dtype=np.int64)
    rows = rng.choice(n_a, k, replace=False)
    z[rows] = rng.choice(n_b, k, replace=False) + 1
    return z


class TestMatching:
    def test_valid(self):
        check_matching(np.array([0, 3, 1]), 3)

    @pytest.mark.parametrize("z", [[1, 1], [0, 4], [-1, 0], [[1]]])
    def test_invalid(self, z):
        with pytest.raises(BipartiteError):
            check_matching(np.array(z), 3)


class TestStructure:
    def test_record_specific_pools_m_and_p(self):
        s = ModelStructure.record_specific(80)
        assert s.u.n_groups == 80 and s.m.n_groups == 1 and s.p.n_groups == 1

    def test_small_groups_pool_m_and_p(self):
        g = Grouping.from_labels(["a"] * 60 + ["b"] * 30)
        s = ModelStructure.from_grouping(g)
        assert s.u.n_groups == 2 and s.m.n_groups == 1 and s.p.n_groups == 1

    def test_large_groups_keep_m_and_p(self):
        g = Grouping.from_labels(["a"] * 60 + ["b"] * 50)
        s = ModelStructure.from_grouping(g)
        assert s.m.n_groups == 2 and s.p.n_groups == 2

    def test_prior_validation(self):
        with pytest.raises(ValueError):
            PriorConfig(alpha_p=0)
        with pytest.raises(ValueError):
            PriorConfig(dirichlet_alpha=[np.array([1.0, -1.0])])
        with pytest.raises(ValueError):
            PriorConfig(dirichlet_alpha=[np.ones(3)]).alphas([2])


class TestSufficientStats:
    def test_empty_matching(self):
        a, b = toy_files()
        cd = build_comparison_data(a, b, toy_specs())
        st_ = sufficient_stats(np.zeros(2, dtype=np.int64), cd, ModelStructure.record_specific(2))
        assert st_.n_m.sum() == 0 and st_.n_matched == 0
        for f in range(3):
            seg = st_.n_u[:, cd.level_offsets[f]:cd.level_offsets[f + 1]]
            assert (seg.sum(axis=1) == 5).all()

    def test_toy_matching(self):
        a, b = toy_files()
        cd = build_comparison_data(a, b, toy_specs())
        st_ = sufficient_stats(np.array([1, 3]), cd, ModelStructure.pooled(2))
        # rows (1,1) = (1,2,1) and (2,3) = (2,1,2)
        expected = np.zeros(12, dtype=np.int64)
        for f, levels in enumerate([(1, 2), (2, 1), (1, 2)]):
            for lvl in levels:
                expected[4 * f + lvl - 1] += 1
        np.testing.assert_array_equal(st_.n_m[0], expected)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 1000))
    def test_equals_naive_count(self, seed):
        data, specs, cd = _random_instance(seed % 7)
        rng = np.random.default_rng(seed)
        z = _random_matching(rng, cd.n_a, cd.n_b)
        gamma = naive_gamma(data.a, data.b, specs)
        for structure in (ModelStructure.pooled(cd.n_a), ModelStructure.record_specific(cd.n_a)):
            got = sufficient_stats(z, cd, structure)
            width = cd.level_offsets[-1]
            n_m = np.zeros(width, dtype=np.int64)
            n_u = np.zeros((cd.n_a, width), dtype=np.int64)
            for i in range(cd.n_a):
                for j in range(cd.n_b):
                    cols = cd.level_offsets[:-1] + gamma[i, j] - 1
                    if z[i] == j + 1:
                        n_m[cols] += 1
                    else:
                        n_u[i, cols] += 1
            np.testing.assert_array_equal(got.n_m.sum(axis=0), n_m)
            np.testing.assert_array_equal(got.n_u.sum(axis=0), n_u.sum(axis=0))
            if structure.u.is_record_specific:
                np.testing.assert_array_equal(got.n_u, n_u)
            assert got.n_matched == np.count_nonzero(z)


class TestLikelihood:
    def test_one_by_one(self):
        cd = _one_by_one()
        params = DisagreementParams(np.array([[0.9, 0.1]]), np.array([[0.1, 0.9]]), cd.level_offsets)
        s = ModelStructure.pooled(1)
        assert log_likelihood(np.array([1]), params, cd, s) == pytest.approx(math.log(0.9))
        assert log_likelihood(np.array([0]), params, cd, s) == pytest.approx(math.log(0.1))

    def test_zero_probability_level(self):
        cd = _one_by_one()
        params = DisagreementParams(np.array([[0.0, 1.0]]), np.array([[0.1, 0.9]]), cd.level_offsets)
        assert log_likelihood(np.array([1]), params, cd, ModelStructure.pooled(1)) == -math.inf

    @pytest.mark.parametrize("record_specific", [False, True])
    def test_equals_product_form(self, record_specific):
        data, specs, cd = _random_instance(3, 5, 10)
        rng = np.random.default_rng(0)
        s = ModelStructure.record_specific(5) if record_specific else ModelStructure.pooled(5)
        alpha = np.ones(cd.level_offsets[-1])
        params = DisagreementParams(dirichlet_segments(np.tile(alpha, (s.m.n_groups, 1)), cd.level_offsets, rng),
                                    dirichlet_segments(np.tile(alpha, (s.u.n_groups, 1)), cd.level_offsets, rng),
                                    cd.level_offsets)
        gamma = naive_gamma(data.a, data.b, specs)
        z = _random_matching(rng, 5, 10)
        direct = 0.0
        for i in range(5):
            for j in range(10):
                cols = cd.level_offsets[:-1] + gamma[i, j] - 1
                table = params.m[0] if z[i] == j + 1 else params.u[s.u.group_of[i]]
                direct += np.log(table[cols]).sum()
        assert log_likelihood(z, params, cd, s) == pytest.approx(direct, rel=1e-12)


class TestPosterior:
    def test_empty_matching_finite(self):
        a, b = toy_files()
        cd = build_comparison_data(a, b, toy_specs())
        offsets = cd.level_offsets
        params = DisagreementParams(np.full((1, 12), 0.25), np.full((1, 12), 0.25), offsets)
        lp = log_posterior_unnormalized(np.zeros(2, dtype=np.int64), params, np.array([0.3]), cd, PriorConfig(),
                                        ModelStructure.pooled(2))
        assert np.isfinite(lp)

    def test_hand_expanded_prior(self):
        # n_B = 5, one of two records matched, p = 0.3, flat Beta prior (normalizer 1)
        lp = log_prior_matching(np.array([2, 0]), np.array([0.3]), 5, PriorConfig(), ModelStructure.pooled(2))
        expected = math.log(math.factorial(4) / math.factorial(5)) + math.log(0.3) + math.log(0.7)
        assert lp == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("record_specific", [False, True])
    def test_single_change_matches_step3_odds(self, record_specific):
        data, specs, cd = _random_instance(5, 6, 15)
        rng = np.random.default_rng(1)
        s = ModelStructure.record_specific(6) if record_specific else ModelStructure.pooled(6)
        offsets = cd.level_offsets
        width = offsets[-1]
        for _ in range(20):
            params = DisagreementParams(dirichlet_segments(np.ones((1, width)), offsets, rng),
                                        dirichlet_segments(np.ones((s.u.n_groups, width)), offsets, rng), offsets)
            p = rng.uniform(0.05, 0.95, size=1)
            z = _random_matching(rng, 6, 15)
            i = int(rng.integers(6))
            z[i] = 0
            probs = conditional_probabilities(i, z, params, p, cd, s)
            free = [j for j in range(1, 16) if j not in set(z.tolist())]
            j = int(rng.choice(free))
            z1 = z.copy()
            z1[i] = j
            diff = (log_posterior_unnormalized(z1, params, p, cd, PriorConfig(), s)
                    - log_posterior_unnormalized(z, params, p, cd, PriorConfig(), s))
            assert diff == pytest.approx(math.log(probs[j] / probs[0]), abs=1e-9)
