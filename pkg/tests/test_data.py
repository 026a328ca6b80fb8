"""Data layer: schema, CSV round-trips, subset views, synthetic generators."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sasanet.data import (
    CATEGORICAL,
    CONTINUOUS,
    DataError,
    Dataset,
    Feature,
    FeatureSchema,
    SchemaError,
    SubsetView,
    continuous_schema,
    load_csv,
    normalize,
    save_csv,
    train_test_split,
)
from sasanet.data.synthetic import (
    mask_to_size,
    shift_distribution,
    synth_binary_classification,
    synth_linear_regression,
)


@pytest.fixture()
def mixed_schema(tmp_path):
    schema = FeatureSchema((
        Feature("color", CATEGORICAL, ("red", "green", "blue")),
        Feature("size", CONTINUOUS, mean=5.0, std=2.0),
    ))
    path = tmp_path / "schema.json"
    schema.save(path)
    return schema, path


class TestSchema:
    def test_validation(self):
        with pytest.raises(SchemaError):
            Feature("bad", CATEGORICAL, ())
        with pytest.raises(SchemaError):
            Feature("bad", CONTINUOUS, std=0.0)
        with pytest.raises(SchemaError):
            FeatureSchema(())

    def test_json_round_trip(self, mixed_schema, tmp_path):
        schema, path = mixed_schema
        assert FeatureSchema.load(path) == schema

    def test_unk_index_reserved(self):
        f = Feature("c", CATEGORICAL, ("a", "b"))
        assert f.unk_index == 2 and f.embedding_rows == 3


class TestCsv:
    def test_load_three_rows(self, mixed_schema, tmp_path):
        schema, spath = mixed_schema
        csv_path = tmp_path / "d.csv"
        csv_path.write_text("color,size,label\nred,7.0,1\nblue,5.0,0\ngreen,3.0,1\n")
        ds = load_csv(csv_path, spath)
        assert len(ds) == 3 and ds.normalized

    def test_normalization_definition(self, mixed_schema, tmp_path):
        schema, _ = mixed_schema
        csv_path = tmp_path / "d.csv"
        csv_path.write_text("color,size,label\nred,7.0,1\n")
        ds = load_csv(csv_path, schema)
        assert ds.values[0, 1] == pytest.approx(1.0)  # (7-5)/2

    def test_unknown_category_warns_and_maps_to_unk(self, mixed_schema, tmp_path):
        schema, _ = mixed_schema
        csv_path = tmp_path / "d.csv"
        csv_path.write_text("color,size,label\npurple,5.0,0\n")
        with pytest.warns(UserWarning, match="unknown category 'purple'"):
            ds = load_csv(csv_path, schema)
        assert ds.values[0, 0] == schema[0].unk_index

    def test_missing_value_is_an_error(self, mixed_schema, tmp_path):
        schema, _ = mixed_schema
        csv_path = tmp_path / "d.csv"
        csv_path.write_text("color,size,label\nred,,1\n")
        with pytest.raises(DataError, match="missing value"):
            load_csv(csv_path, schema)

    def test_header_mismatch(self, mixed_schema, tmp_path):
        schema, _ = mixed_schema
        csv_path = tmp_path / "d.csv"
        csv_path.write_text("size,color,label\n1.0,red,0\n")
        with pytest.raises(DataError, match="header"):
            load_csv(csv_path, schema)

    def test_round_trip_exact(self, mixed_schema, tmp_path):
        schema, _ = mixed_schema
        rng = np.random.default_rng(0)
        values = np.column_stack([rng.integers(0, 3, 20).astype(float),
                                  rng.standard_normal(20)])
        ds = Dataset(schema, values, rng.integers(0, 2, 20).astype(float), normalized=True)
        out = tmp_path / "rt.csv"
        save_csv(ds, out)
        back = load_csv(out, schema, normalize_continuous=False)
        np.testing.assert_array_equal(back.values, ds.values)
        np.testing.assert_array_equal(back.labels, ds.labels)

    def test_double_normalization_rejected(self, mixed_schema):
        schema, _ = mixed_schema
        ds = Dataset(schema, np.array([[0.0, 5.0]]), np.array([1.0]))
        ds2 = normalize(ds)
        with pytest.raises(DataError, match="already normalized"):
            normalize(ds2)


class TestSubsetView:
    def test_canonical_order_equality(self):
        ds = Dataset(continuous_schema(4), np.arange(8.0).reshape(2, 4),
                     np.zeros(2), normalized=True)
        s = ds.sample(0)
        assert SubsetView(s, (3, 1, 0)) == SubsetView(s, (0, 1, 3))
        assert SubsetView(s, (3, 1, 0)).indices == (0, 1, 3)

    def test_duplicate_indices_rejected(self):
        ds = Dataset(continuous_schema(4), np.zeros((1, 4)), np.zeros(1), normalized=True)
        with pytest.raises(DataError, match="duplicate"):
            SubsetView(ds.sample(0), (1, 1))

    def test_empty_subset_allowed(self):
        ds = Dataset(continuous_schema(4), np.zeros((1, 4)), np.zeros(1), normalized=True)
        assert len(SubsetView(ds.sample(0), ())) == 0

    @given(st.permutations(list(range(5))))
    @settings(max_examples=20, deadline=None)
    def test_any_construction_order_is_canonical(self, perm):
        ds = Dataset(continuous_schema(5), np.zeros((1, 5)), np.zeros(1), normalized=True)
        view = SubsetView(ds.sample(0), tuple(perm))
        assert view.indices == (0, 1, 2, 3, 4)


class TestLinearTask:
    def test_null_feature_has_zero_attribution(self):
        _, truth = synth_linear_regression(2, [1.0, 0.0], 0.0, 10, seed=0)
        np.testing.assert_allclose(truth.shapley(np.array([2.0, 5.0])), [2.0, 0.0])

    def test_two_permutation_exhaustive_shapley(self):
        # brute force over both join orders of v(S) = sum_{i in S} w_i x_i
        w, x = np.array([2.0, 3.0]), np.array([1.0, 1.0])

        def v(s):
            return sum(w[i] * x[i] for i in s)

        phi_0 = 0.5 * ((v([0]) - v([])) + (v([0, 1]) - v([1])))
        phi_1 = 0.5 * ((v([1]) - v([])) + (v([0, 1]) - v([0])))
        _, truth = synth_linear_regression(2, w, 0.0, 10, seed=0)
        np.testing.assert_allclose(truth.shapley(x), [phi_0, phi_1])
        assert phi_0 + phi_1 == pytest.approx(v([0, 1]))

    def test_noiseless_data_refits_weights(self):
        w = np.array([1.5, -2.0, 0.5])
        ds, _ = synth_linear_regression(3, w, 0.0, 500, seed=1)
        what, *_ = np.linalg.lstsq(ds.values, ds.labels, rcond=None)
        np.testing.assert_allclose(what, w, atol=1e-6)

    def test_subset_expectation(self):
        _, truth = synth_linear_regression(3, [1.0, 2.0, 3.0], 0.1, 10, seed=0)
        x = np.array([1.0, -1.0, 2.0])
        assert truth.subset_expectation(x, [0, 2]) == pytest.approx(7.0)


class TestBinaryTask:
    def test_full_subset_is_exact_sigmoid(self):
        w = np.array([0.5, -1.0, 2.0])
        _, oracle = synth_binary_classification(3, w, 10, seed=0)
        x = np.array([1.0, 0.5, -0.25])
        expected = 1.0 / (1.0 + np.exp(-(w @ x)))
        assert oracle.subset_expectation(x, [0, 1, 2]) == pytest.approx(expected)

    def test_empty_subset_matches_label_mean(self):
        w = np.array([1.0, -1.0])
        ds, oracle = synth_binary_classification(2, w, 20000, seed=3)
        e0 = oracle.subset_expectation(ds.values[0], [])
        assert abs(e0 - ds.labels.mean()) < 0.02

    def test_symmetric_hidden_feature_gives_half(self):
        _, oracle = synth_binary_classification(2, [1.0, 1.0], 10, seed=0)
        val = oracle.subset_expectation(np.array([0.0, 123.0]), [0])
        assert abs(val - 0.5) < 0.01

    def test_deterministic_given_seed(self):
        _, o1 = synth_binary_classification(3, np.ones(3), 10, seed=5)
        _, o2 = synth_binary_classification(3, np.ones(3), 10, seed=5)
        x = np.array([0.3, -0.7, 1.1])
        assert o1.subset_expectation(x, [1]) == o2.subset_expectation(x, [1])


class TestMaskToSize:
    def test_extremes(self):
        assert mask_to_size(5, 0, 5, seed=0).tolist() == [0, 1, 2, 3, 4]
        assert mask_to_size(5, 0, 0, seed=0).size == 0

    def test_out_of_range(self):
        with pytest.raises(DataError):
            mask_to_size(5, 0, 6, seed=0)

    def test_deterministic_per_identity(self):
        a = mask_to_size(6, 3, 2, seed=9)
        b = mask_to_size(6, 3, 2, seed=9)
        c = mask_to_size(6, 4, 2, seed=9)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c) or True  # different sample id may draw same pair

    def test_pair_frequencies_uniform(self):
        # chi-square style bound: each of the 6 pairs within 3 sigma of 1/6
        counts = {}
        n = 10000
        for i in range(n):
            pair = tuple(mask_to_size(4, i, 2, seed=2))
            counts[pair] = counts.get(pair, 0) + 1
        expected = n / 6
        sigma = np.sqrt(n * (1 / 6) * (5 / 6))
        assert len(counts) == 6
        for pair, c in counts.items():
            assert abs(c - expected) < 3 * sigma, (pair, c)


class TestShiftDistribution:
    def test_zero_bias_is_identity(self):
        ds, _ = synth_linear_regression(3, np.ones(3), 0.0, 50, seed=0)
        shifted, bias = shift_distribution(ds, seed=1, bias=np.zeros(3))
        np.testing.assert_array_equal(shifted.values, ds.values)

    def test_column_means_shift_linearly(self):
        ds, _ = synth_linear_regression(3, np.ones(3), 0.0, 200, seed=0)
        shifted, bias = shift_distribution(ds, seed=4)
        np.testing.assert_allclose(shifted.values.mean(axis=0),
                                   ds.values.mean(axis=0) + bias, atol=1e-9)

    def test_bias_scale_and_determinism(self):
        ds, _ = synth_linear_regression(4, np.ones(4), 0.0, 10, seed=0)
        _, b1 = shift_distribution(ds, seed=7)
        _, b2 = shift_distribution(ds, seed=7)
        np.testing.assert_array_equal(b1, b2)
        assert np.all(np.abs(b1) <= 1.0)


def test_train_test_split_manifest_partitions_rows():
    ds, _ = synth_linear_regression(3, np.ones(3), 0.0, 100, seed=0)
    tr, te, manifest = train_test_split(ds, 0.25, seed=3)
    assert len(tr) + len(te) == 100 and len(te) == 25
    joined = sorted(manifest["train_indices"] + manifest["test_indices"])
    assert joined == list(range(100))
