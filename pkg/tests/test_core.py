import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mvlbm.core import (DataError, FeatureSet, FeatureType, Kind, MultiViewDataset, PartitionState, View,
                        ViewSchema, ari, check_simplex, load_dataset, load_manifest_labels, one_hot,
                        read_labels, save_dataset, validate_dataset, write_labels)


def _pair_count_ari(a, b):
    """Brute-force ARI from pair counts."""
    n = len(a)
    pairs = list(itertools.combinations(range(n), 2))
    both = sum(a[i] == a[j] and b[i] == b[j] for i, j in pairs)
    same_a = sum(a[i] == a[j] for i, j in pairs)
    same_b = sum(b[i] == b[j] for i, j in pairs)
    total = len(pairs)
    expected = same_a * same_b / total
    top = (same_a + same_b) / 2
    if top == expected:
        return math.nan  # undefined, e.g. both partitions all singletons
    return (both - expected) / (top - expected)


def _two_view(n=6):
    rng = np.random.default_rng(0)
    v1 = View([FeatureSet.from_external(FeatureType.nominal(5), rng.integers(1, 6, (n, 3))),
               FeatureSet(FeatureType.continuous(), rng.normal(size=(n, 2)))])
    v2 = View([FeatureSet(FeatureType.count(), rng.poisson(2.0, (n, 4)).astype(float))])
    return MultiViewDataset([v1, v2])


class TestFeatureType:
    def test_levels_required(self):
        with pytest.raises(ValueError):
            FeatureType(Kind.NOMINAL)
        with pytest.raises(ValueError):
            FeatureType.ordinal(1)
        with pytest.raises(ValueError):
            FeatureType(Kind.CONTINUOUS, 3)

    def test_json_round_trip(self):
        for ft in (FeatureType.nominal(5), FeatureType.ordinal(3), FeatureType.continuous(), FeatureType.count()):
            assert FeatureType.from_json(ft.to_json()) == ft


class TestFeatureSet:
    def test_external_coding_is_bijective(self):
        ft = FeatureType.ordinal(4)
        vals = np.array([[1, 2], [4, np.nan]])
        fs = FeatureSet.from_external(ft, vals)
        assert fs.data[0, 0] == 0 and fs.data[1, 0] == 3
        assert not fs.observed[1, 1]
        np.testing.assert_array_equal(fs.to_external(), vals)

    def test_mask_shape_checked(self):
        with pytest.raises(DataError):
            FeatureSet(FeatureType.continuous(), np.zeros((2, 2)), np.ones((2, 3), bool))

    def test_schema(self):
        ds = _two_view()
        assert ds.views[0].schema == ViewSchema(((FeatureType.nominal(5), 3), (FeatureType.continuous(), 2)))
        assert ds.views[0].d == 5
        with pytest.raises(ValueError):
            ViewSchema(())


class TestValidate:
    def test_valid(self):
        assert validate_dataset(_two_view()) == []

    def test_nominal_level_too_large(self):
        ds = _two_view()
        ds.views[0].feature_sets[0].data[2, 1] = 5  # internal code 5 means external level m + 1 = 6
        rep = validate_dataset(ds)
        assert len(rep) == 1
        assert (rep[0].view, rep[0].feature_set, rep[0].cell) == (0, 0, (2, 1))

    def test_row_count_mismatch(self):
        ds = _two_view()
        fs = ds.views[1].feature_sets[0]
        ds.views[1].feature_sets[0] = FeatureSet(fs.ftype, fs.data[:-1])
        rep = validate_dataset(ds)
        assert len(rep) == 1 and "row count mismatch" in rep[0].message

    def test_missing_cells_ignored(self):
        ds = _two_view()
        fs = ds.views[1].feature_sets[0]
        fs.data[0, 0] = -3.5
        fs.observed[0, 0] = False
        assert validate_dataset(ds) == []

    def test_count_rules(self):
        ds = _two_view()
        ds.views[1].feature_sets[0].data[1, 1] = 1.5
        ds.views[1].feature_sets[0].data[3, 2] = -1
        msgs = sorted(v.message for v in validate_dataset(ds))
        assert msgs == ["negative count", "non-integer count"]

    def test_pure(self):
        ds = _two_view()
        ds.views[0].feature_sets[1].data[0, 0] = np.inf
        assert validate_dataset(ds) == validate_dataset(ds)


class TestARI:
    def test_identical(self):
        assert ari([0, 1, 2, 2], [0, 1, 2, 2]) == 1.0

    def test_permuted_labels(self):
        assert ari([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0

    def test_pair_count_oracle(self):
        a, b = [0, 0, 1, 1], [0, 1, 0, 1]
        assert ari(a, b) == pytest.approx(_pair_count_ari(a, b), abs=1e-12)
        assert ari(a, b) == pytest.approx(-0.5, abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=3, max_size=15))
    def test_symmetric_and_relabel_invariant(self, pairs):
        a = np.array([p[0] for p in pairs])
        b = np.array([p[1] for p in pairs])
        if len(set(a)) == 1 and len(set(b)) == 1:
            return
        perm = np.array([2, 0, 3, 1])
        assert ari(a, b) == pytest.approx(ari(b, a), abs=1e-12)
        assert ari(a, b) == pytest.approx(ari(perm[a], b), abs=1e-12)
        oracle = _pair_count_ari(list(a), list(b))
        if math.isfinite(oracle):
            assert ari(a, b) == pytest.approx(oracle, abs=1e-9)


class TestPartitionState:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 30), st.integers(0, 10 ** 6))
    def test_one_hot_rows_sum_to_one(self, K, L, n, seed):
        r = np.random.default_rng(seed)
        ps = PartitionState([r.integers(0, K, n)], [[r.integers(0, L, n)]], (K,), ((L,),))
        for z in ps.z:
            np.testing.assert_array_equal(z.sum(1), 1.0)
        for ws in ps.w:
            for w in ws:
                np.testing.assert_array_equal(w.sum(1), 1.0)

    def test_range_checked(self):
        with pytest.raises(ValueError):
            PartitionState([np.array([0, 3])], [[np.array([0])]], (3,), ((1,),))
        with pytest.raises(ValueError):
            PartitionState([np.array([0])], [[np.array([0])]], (0,), ((1,),))

    def test_copy_is_independent(self):
        ps = PartitionState([np.array([0, 1])], [[np.array([0, 0])]], (2,), ((1,),))
        cp = ps.copy()
        cp.row_labels[0][0] = 1
        assert ps.row_labels[0][0] == 0


def test_one_hot_and_simplex():
    np.testing.assert_array_equal(one_hot([1, 0], 3), [[0, 1, 0], [1, 0, 0]])
    assert check_simplex([0.2, 0.8])
    assert not check_simplex([0.2, 0.9])
    assert not check_simplex([-0.1, 1.1])


class TestIO:
    def test_round_trip(self, tmp_path):
        ds = _two_view()
        ds.views[0].feature_sets[1].observed[1, 1] = False
        ds.views[0].feature_sets[1].data[1, 1] = np.nan
        rows = [np.array([0, 1, 0, 1, 2, 2]), np.array([1, 1, 0, 0, 0, 1])]
        cols = [[np.array([0, 1, 0]), np.array([0, 0])], [np.array([1, 0, 1, 0])]]
        path = save_dataset(ds, tmp_path, rows, cols)
        back = load_dataset(path)
        for v0, v1 in zip(ds.views, back.views):
            assert v0.schema == v1.schema
            for a, b in zip(v0.feature_sets, v1.feature_sets):
                np.testing.assert_array_equal(a.observed, b.observed)
                np.testing.assert_array_equal(a.data[a.observed], b.data[b.observed])
        r2, c2 = load_manifest_labels(path)
        for a, b in zip(rows, r2):
            np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(cols[1][0], c2[1][0])

    def test_missing_is_empty_cell(self, tmp_path):
        ds = MultiViewDataset([View([FeatureSet(FeatureType.continuous(), np.array([[1.5, np.nan]]))])])
        path = save_dataset(ds, tmp_path)
        manifest = json.loads(path.read_text())
        text = (tmp_path / manifest["views"][0]["feature_sets"][0]["csv"]).read_text()
        assert text == "1.5,\n"

    def test_labels_one_based(self, tmp_path):
        write_labels(tmp_path / "l.csv", np.array([0, 2, 1]))
        assert (tmp_path / "l.csv").read_text() == "1\n3\n2\n"
        np.testing.assert_array_equal(read_labels(tmp_path / "l.csv"), [0, 2, 1])

    def test_bad_manifest(self, tmp_path):
        (tmp_path / "m.json").write_text("{")
        with pytest.raises(DataError):
            load_dataset(tmp_path / "m.json")

    def test_ragged_csv(self, tmp_path):
        (tmp_path / "x.csv").write_text("1,2\n3\n")
        (tmp_path / "m.json").write_text(json.dumps(
            {"views": [{"feature_sets": [{"type": "continuous", "csv": "x.csv"}]}]}))
        with pytest.raises(DataError):
            load_dataset(tmp_path / "m.json")

    def test_subset_and_permute(self):
        ds = _two_view()
        sub = ds.subset([1])
        assert sub.n_views == 1 and sub.views[0].schema == ds.views[1].schema
        order = np.arange(ds.n)[::-1]
        perm = ds.permute_rows(order)
        np.testing.assert_array_equal(perm.views[1].feature_sets[0].data, ds.views[1].feature_sets[0].data[::-1])
