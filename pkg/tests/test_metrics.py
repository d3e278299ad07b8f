import numpy as np
import pytest

from mvlbm.core import PartitionState
from mvlbm.dist import GaussianParams, MultinomialParams
from mvlbm.metrics import clustering_scores, imputation_mae, match_view, parameter_mae
from mvlbm.synthgen import generate_with_complete, table1_spec


class _Fit:
    def __init__(self, alpha, parts):
        self.model = type("M", (), {"alpha": alpha})()
        self.partitions = parts


def _gauss_truth():
    mu = np.array([[0.0, 5.0, -3.0], [10.0, 2.0, 7.0]])
    return GaussianParams(mu, np.ones_like(mu))


def test_perfect_recovery_zero_error():
    t = _gauss_truth()
    parts = PartitionState([np.zeros(4, int)], [[np.zeros(3, int)]], (2,), ((3,),))
    res = parameter_mae([[t]], _Fit([[t]], parts))
    assert res[0][0] == {"mu": 0.0, "sigma": 0.0}


def test_label_permutation_invariance():
    t = _gauss_truth()
    rp, cp = [1, 0], [2, 0, 1]
    e = GaussianParams(t.mu[rp][:, cp] + 0.1, t.sigma2[rp][:, cp])
    parts = PartitionState([np.zeros(4, int)], [[np.zeros(3, int)]], (2,), ((3,),))
    res = parameter_mae([[t]], _Fit([[e]], parts))
    assert res[0][0]["mu"] == pytest.approx(0.1, abs=1e-12)
    perm, cols = match_view([{"mu": t.mu}], [{"mu": e.mu}])
    assert list(perm) == [1, 0]
    np.testing.assert_array_equal(t.mu[:, :] + 0.1, e.mu[list(perm)][:, cols[0]])


def test_shape_mismatch_gives_nan():
    t = MultinomialParams(np.full((2, 2, 3), 1 / 3))
    e = MultinomialParams(np.full((3, 2, 3), 1 / 3))
    parts = PartitionState([np.zeros(4, int)], [[np.zeros(2, int)]], (3,), ((2,),))
    assert np.isnan(parameter_mae([[t]], _Fit([[e]], parts))[0][0]["p"])


def test_imputation_error():
    masked, complete, _, _ = generate_with_complete(table1_spec(n=30, d=6, missing_fraction=0.2, seed=1))
    res = imputation_mae(complete, masked, complete)
    assert all(v == 0.0 for row in res for v in row)
    shifted = complete.copy()
    shifted.views[0].feature_sets[1].data = shifted.views[0].feature_sets[1].data + 2.0
    assert imputation_mae(complete, masked, shifted)[0][1] == pytest.approx(2.0)


def test_clustering_scores_perfect():
    rows = [np.array([0, 0, 1, 1, 2])]
    parts = PartitionState([np.array([2, 2, 0, 0, 1])], [[np.array([1, 0, 1])]], (3,), ((2,),))
    res = clustering_scores(parts, rows, [[np.array([0, 1, 0])]])
    assert res["row"] == [1.0] and res["col"] == [[1.0]]
