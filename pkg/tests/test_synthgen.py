import json

import numpy as np
import pytest
from scipy import stats

from mvlbm.core import Kind
from mvlbm.synthgen import GeneratorSpec, generate, generate_with_complete, make_pi, mask_missing, table1_spec


class TestMakePi:
    def test_independent(self):
        np.testing.assert_allclose(make_pi(3, 0.0), np.full((3, 3), 1 / 9), atol=1e-15)

    def test_identity(self):
        np.testing.assert_allclose(make_pi(3, 1.0), np.eye(3) / 3, atol=1e-15)

    def test_half(self):
        pi = make_pi(3, 0.5)
        assert pi[0, 1] == pytest.approx(1 / 18, abs=1e-15)
        assert pi[1, 1] == pytest.approx(2 / 9, abs=1e-15)

    @pytest.mark.parametrize("K", [1, 2, 3, 5])
    @pytest.mark.parametrize("delta", [0.0, 0.3, 0.875, 1.0])
    def test_marginals(self, K, delta):
        pi = make_pi(K, delta)
        np.testing.assert_allclose(pi.sum(0), 1 / K, atol=1e-15)
        np.testing.assert_allclose(pi.sum(1), 1 / K, atol=1e-15)
        assert pi.sum() == pytest.approx(1.0, abs=1e-14)

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            make_pi(0, 0.5)
        with pytest.raises(ValueError):
            make_pi(3, 1.5)


class TestGenerate:
    def test_shapes_and_types(self):
        ds, rows, cols = generate(table1_spec(n=300, d=60, seed=1))
        assert ds.n == 300 and ds.n_views == 2
        assert sum(v.d for v in ds.views) == 480
        kinds = [fs.ftype.kind for fs in ds.views[0].feature_sets]
        assert kinds == [Kind.NOMINAL, Kind.CONTINUOUS, Kind.ORDINAL, Kind.COUNT]
        assert [len(r) for r in rows] == [300, 300]
        assert all(len(c) == 60 for cs in cols for c in cs)
        nom = ds.views[0].feature_sets[0].data
        assert set(np.unique(nom)) <= {0, 1, 2, 3, 4}
        assert set(np.unique(ds.views[1].feature_sets[2].data)) <= {0, 1, 2}

    def test_reproducible(self):
        a = generate(table1_spec(n=50, d=10, seed=9))
        b = generate(table1_spec(n=50, d=10, seed=9))
        for fa, fb in zip(a[0].views[0].feature_sets, b[0].views[0].feature_sets):
            np.testing.assert_array_equal(fa.data, fb.data)
        np.testing.assert_array_equal(a[1][1], b[1][1])

    def test_full_dependence_gives_equal_labels(self):
        _, rows, _ = generate(table1_spec(n=300, d=5, delta_dep=1.0, seed=2))
        np.testing.assert_array_equal(rows[0], rows[1])

    def test_block_mean_close_to_truth(self):
        ds, rows, cols = generate(table1_spec(n=1200, d=300, seed=3))
        x = ds.views[0].feature_sets[1].data
        block = x[np.ix_(rows[0] == 0, cols[0][1] == 0)]
        # mean of ~40k N(100, 1) draws
        assert abs(block.mean() - 100) < 0.1

    def test_independent_labels_chi_square(self):
        _, rows, _ = generate(table1_spec(n=10_000, d=1, seed=4))
        table = np.zeros((3, 3))
        np.add.at(table, (rows[0], rows[1]), 1)
        chi2 = stats.chi2_contingency(table, correction=False)[0]
        assert chi2 < stats.chi2.ppf(0.999, 4)

    def test_spec_json_round_trip(self):
        spec = table1_spec(n=40, d=7, delta_dep=0.5, missing_fraction=0.15, seed=11)
        back = GeneratorSpec.from_json(json.loads(json.dumps(spec.to_json())))
        a, b = generate(spec), generate(back)
        for fa, fb in zip(a[0].views[1].feature_sets, b[0].views[1].feature_sets):
            np.testing.assert_array_equal(fa.observed, fb.observed)
            np.testing.assert_array_equal(np.nan_to_num(fa.data, nan=-1), np.nan_to_num(fb.data, nan=-1))

    def test_with_complete(self):
        spec = table1_spec(n=60, d=10, missing_fraction=0.35, seed=5)
        masked, complete, rows, _ = generate_with_complete(spec)
        again, rows2, _ = generate(spec)
        np.testing.assert_array_equal(rows[0], rows2[0])
        for fm, fc, fa in zip(masked.views[0].feature_sets, complete.views[0].feature_sets,
                              again.views[0].feature_sets):
            assert fc.observed.all()
            np.testing.assert_array_equal(fm.data[fm.observed], fc.data[fm.observed])
            np.testing.assert_array_equal(fm.observed, fa.observed)

    def test_invalid_spec(self):
        spec = table1_spec()
        with pytest.raises(ValueError):
            spec.replace(delta_dep=-0.1)
        with pytest.raises(ValueError):
            spec.replace(missing_fraction=1.0)


class TestMask:
    def test_exact_count(self):
        ds, _, _ = generate(table1_spec(n=300, d=60, seed=0))
        out = mask_missing(ds, 0.35, np.random.default_rng(0))
        masked = sum(int((~fs.observed).sum()) for v in out.views for fs in v.feature_sets)
        assert masked == 50_400
        assert all(np.isnan(fs.data[~fs.observed]).all() for v in out.views for fs in v.feature_sets)
        # the input is left untouched
        assert all(fs.observed.all() for v in ds.views for fs in v.feature_sets)

    def test_zero_is_identity(self):
        ds, _, _ = generate(table1_spec(n=30, d=5, seed=0))
        out = mask_missing(ds, 0.0, np.random.default_rng(0))
        for a, b in zip(ds.views[0].feature_sets, out.views[0].feature_sets):
            np.testing.assert_array_equal(a.data, b.data)
            assert b.observed.all()

    def test_reproducible(self):
        ds, _, _ = generate(table1_spec(n=30, d=5, seed=0))
        a = mask_missing(ds, 0.2, np.random.default_rng(7))
        b = mask_missing(ds, 0.2, np.random.default_rng(7))
        for fa, fb in zip(a.views[1].feature_sets, b.views[1].feature_sets):
            np.testing.assert_array_equal(fa.observed, fb.observed)
