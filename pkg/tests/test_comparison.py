import jellyfish
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import TOY_NAME_CUTS, naive_gamma, toy_files, toy_specs
from reclink.comparison import (
    ConfigurationError,
    DataFile,
    FieldSpec,
    build_comparison_data,
    compare_categorical,
    compare_numeric,
    decode_patterns,
    discretize_distance,
    encode_patterns,
    jaro_winkler_distance,
    jaro_winkler_matrix,
    relabel_common,
)

WORDS = st.text(alphabet="abcdeJohnSmit", min_size=1, max_size=9)
CUTS_4 = (0.05, 0.1, 0.15, 0.22, 0.3, 0.45)


class TestJaroWinkler:
    @pytest.mark.parametrize("a,b,expected", [
        ("John", "John", 0.0),
        ("John", "Jon", 0.0833),
        ("Smith", "S", 0.267),
        ("John", "Jedidiah", 0.542),
    ])
    def test_plain_jaro_values(self, a, b, expected):
        assert jaro_winkler_distance(a, b, 0.0) == pytest.approx(expected, abs=1e-3)

    def test_winkler_boost_against_reference(self):
        ref = 1 - jellyfish.jaro_winkler_similarity("John", "Jon")
        assert jaro_winkler_distance("John", "Jon", 0.1) == pytest.approx(ref, abs=1e-12)
        assert jaro_winkler_distance("John", "Jon", 0.1) == pytest.approx(1 - (11 / 12 + 2 * 0.1 * (1 / 12)), abs=1e-12)

    @settings(max_examples=300, deadline=None)
    @given(WORDS, WORDS)
    def test_matches_reference_implementation(self, a, b):
        assert jaro_winkler_distance(a, b, 0.0) == pytest.approx(1 - jellyfish.jaro_similarity(a, b), abs=1e-12)
        assert jaro_winkler_distance(a, b, 0.1) == pytest.approx(
            1 - jellyfish.jaro_winkler_similarity(a, b), abs=1e-12)

    @settings(max_examples=300, deadline=None)
    @given(st.text(max_size=8), st.text(max_size=8), st.floats(0, 0.24))
    def test_metric_properties(self, a, b, w):
        d = jaro_winkler_distance(a, b, w)
        assert 0.0 <= d <= 1.0
        assert d == jaro_winkler_distance(b, a, w)
        assert jaro_winkler_distance(a, a, w) == 0.0
        if a and b and a != b:
            assert d > 0

    def test_empty_strings(self):
        assert jaro_winkler_distance("", "") == 0.0
        assert jaro_winkler_distance("", "x") == 1.0
        assert jaro_winkler_distance("x", "") == 1.0

    def test_rejects_bad_prefix_weight(self):
        with pytest.raises(ValueError):
            jaro_winkler_distance("a", "b", 0.3)

    def test_matrix_agrees_with_scalar(self):
        xs, ys = ["John", "Jon", ""], ["Jedidiah", "John", "Smith", ""]
        mat = jaro_winkler_matrix(xs, ys, 0.1)
        for i, x in enumerate(xs):
            for j, y in enumerate(ys):
                assert mat[i, j] == jaro_winkler_distance(x, y, 0.1)


class TestDiscretization:
    @pytest.mark.parametrize("d,level", [(0.0, 1), (0.0833, 2), (0.542, 7), (0.05, 1), (0.0500001, 2)])
    def test_distance_levels(self, d, level):
        assert discretize_distance(d, CUTS_4) == level

    @pytest.mark.parametrize("a,b,level", [(1848, 1848, 1), (1848, 1850, 2), (1848, 1860, 4), (1850, 1848, 2)])
    def test_numeric_levels(self, a, b, level):
        assert compare_numeric(a, b, (1.5, 2.5, 4.5)) == level

    def test_categorical(self):
        assert compare_categorical("OH", "OH") == 1
        assert compare_categorical("OH", "PA") == 2
        assert compare_categorical("OH", "oh") == 2

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_monotone(self, d1, d2):
        lo, hi = sorted((d1, d2))
        assert discretize_distance(lo, CUTS_4) <= discretize_distance(hi, CUTS_4)

    def test_relabel_common(self):
        common = ("John", "William")
        assert relabel_common(1, "John", "John", common, 5) == 5
        assert relabel_common(1, "Jedediah", "Jedediah", common, 5) == 1
        assert relabel_common(2, "John", "Jon", common, 5) == 2


class TestFieldSpec:
    def test_level_counts(self):
        assert FieldSpec("f", "string", CUTS_4).n_levels == 7
        assert FieldSpec("f", "string", CUTS_4, common_values=("John",)).n_levels == 8
        assert FieldSpec("f", "categorical").n_levels == 2
        assert FieldSpec("f", "numeric", (1.5, 2.5, 4.5)).n_levels == 4

    def test_common_level_label(self):
        spec = FieldSpec("f", "string", TOY_NAME_CUTS, common_values=("John",))
        assert spec.common_level == 5 and spec.level_label(5) == "C" and spec.level_label(1) == "1"

    @pytest.mark.parametrize("kw", [
        dict(kind="string", cutpoints=(0.2, 0.1)),
        dict(kind="string", cutpoints=(0.0, 0.1)),
        dict(kind="string", cutpoints=(0.1, 1.0)),
        dict(kind="string", cutpoints=()),
        dict(kind="categorical", cutpoints=(1.0,)),
        dict(kind="numeric", cutpoints=(-1.0,)),
        dict(kind="vector", cutpoints=(0.1,)),
        dict(kind="string", cutpoints=(0.1,), prefix_weight=0.3),
        dict(kind="string", cutpoints=(0.1,), common_values=tuple("abcdefghijk")),
    ])
    def test_invalid_specs(self, kw):
        with pytest.raises(ConfigurationError):
            FieldSpec("f", **kw)

    def test_many_common_values_with_override(self):
        spec = FieldSpec("f", "string", (0.1,), common_values=tuple("abcdefghijk"), allow_many_common=True)
        assert spec.n_levels == 3


class TestComparisonData:
    def test_toy_discretized_panel(self):
        a, b = toy_files()
        cd = build_comparison_data(a, b, toy_specs())
        expected = np.array([
            [[1, 2, 1], [2, 2, 2], [4, 4, 3], [1, 4, 3], [4, 4, 3]],
            [[4, 4, 3], [3, 4, 4], [2, 1, 2], [4, 1, 1], [1, 3, 1]],
        ])
        got = np.array([[cd.comparison_vector(i, j) for j in range(5)] for i in range(2)])
        np.testing.assert_array_equal(got, expected)

    def test_toy_common_name_panel(self):
        a, b = toy_files()
        plain = build_comparison_data(a, b, toy_specs())
        cd = build_comparison_data(a, b, toy_specs(common=("John",)))
        C = cd.specs[0].common_level
        got = np.array([[cd.comparison_vector(i, j) for j in range(5)] for i in range(2)])
        assert got[0, 0, 0] == C and got[0, 3, 0] == C
        # everything else is unchanged
        base = np.array([[plain.comparison_vector(i, j) for j in range(5)] for i in range(2)])
        mask = np.ones_like(got, dtype=bool)
        mask[0, 0, 0] = mask[0, 3, 0] = False
        np.testing.assert_array_equal(got[mask], base[mask])
        assert got[1, 4, 0] == 1

    def test_single_identical_record(self):
        a = DataFile.from_records([("Ann", "Lee", 1900)], ["first", "last", "year"])
        cd = build_comparison_data(a, a, toy_specs())
        assert cd.n_patterns == 1
        np.testing.assert_array_equal(cd.patterns[0], [1, 1, 1])
        assert cd.counts.tolist() == [[1]]

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_hashed_form_equals_naive(self, seed):
        rng = np.random.default_rng(seed)
        names = ["John", "Jon", "Joan", "Smith", "Smyth", "Jedediah", "Mary", ""]
        n_a, n_b = rng.integers(1, 6), rng.integers(1, 20)

        def make(n):
            rows = [(rng.choice(names), rng.choice(names), int(rng.integers(1840, 1850)),
                     str(rng.choice(["OH", "PA"]))) for _ in range(n)]
            return DataFile.from_records(rows, ["first", "last", "year", "place"])

        a, b = make(n_a), make(n_b)
        specs = toy_specs(prefix_weight=0.1, common=("John",)) + [FieldSpec("place", "categorical")]
        cd = build_comparison_data(a, b, specs)
        gamma = naive_gamma(a, b, specs)
        np.testing.assert_array_equal(cd.patterns[cd.pair_patterns], gamma)
        assert (cd.counts.sum(axis=1) == n_b).all()
        assert len(np.unique(cd.keys)) == cd.n_patterns
        # per-record tabulation over (field, level)
        for i in range(n_a):
            for f, spec in enumerate(specs):
                seg = cd.field_counts[i, cd.level_offsets[f]:cd.level_offsets[f + 1]]
                np.testing.assert_array_equal(seg, np.bincount(gamma[i, :, f] - 1, minlength=spec.n_levels))

    def test_encode_decode_roundtrip(self):
        n_levels = (4, 7, 2, 5)
        rng = np.random.default_rng(0)
        levels = np.stack([rng.integers(1, L + 1, 200) for L in n_levels], axis=1)
        keys = encode_patterns(levels, n_levels)
        np.testing.assert_array_equal(decode_patterns(keys, n_levels), levels)
        assert len(np.unique(keys)) == len(np.unique(levels, axis=0))

    def test_schema_mismatch(self):
        a, b = toy_files()
        with pytest.raises(ConfigurationError):
            build_comparison_data(a, b, [FieldSpec("place", "categorical")])
