"""Evaluation metrics: label agreement, matched parameter errors, imputation error."""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import FeatureSet, Kind, MultiViewDataset, ari
from .dist import BosParams, GaussianParams, MultinomialParams, PoissonParams


def _param_arrays(params, ftype, count_means=None) -> dict[str, np.ndarray]:
    """Named per-block quantities, each shaped (K, L) or (K, L, m)."""
    if isinstance(params, MultinomialParams):
        return {"p": params.p}
    if isinstance(params, BosParams):
        return {"mu": params.mu.astype(float), "beta": params.beta}
    if isinstance(params, GaussianParams):
        return {"mu": params.mu, "sigma": np.sqrt(params.sigma2)}
    if isinstance(params, PoissonParams):
        return {"rate": params.delta if count_means is None else count_means}
    raise TypeError(type(params))


def _block_cost(true_q: dict, est_q: dict, row_perm) -> np.ndarray:
    """(L_true, L_est) summed absolute error for a fixed row matching."""
    cost = 0.0
    for name, t in true_q.items():
        e = est_q[name][list(row_perm)]
        diff = np.abs(t[:, :, None] - e[:, None, :]) if t.ndim == 2 else \
            np.abs(t[:, :, None, :] - e[:, None, :, :]).sum(-1)
        scale = np.mean(np.abs(t - t.mean())) + 1e-12
        cost = cost + diff.sum(0) / scale
    return cost


def match_view(true_q: list[dict], est_q: list[dict]):
    """Best row permutation for a view and column assignments per feature set.

    Rows are matched by brute force over permutations (K <= 8), columns by
    the Hungarian method given the rows; the objective is the sum over
    sets of scale-normalized absolute parameter errors.
    """
    K = next(iter(true_q[0].values())).shape[0]
    best = None
    for perm in itertools.permutations(range(K)):
        total, cols = 0.0, []
        for t, e in zip(true_q, est_q):
            cost = _block_cost(t, e, perm)
            r, c = linear_sum_assignment(cost)
            total += cost[r, c].sum()
            cols.append(c)
        if best is None or total < best[0]:
            best = (total, perm, cols)
    return best[1], best[2]


def count_block_means(fs: FeatureSet, row_labels, col_labels, delta: np.ndarray) -> np.ndarray:
    """Implied mean cell count per block: mean over the block's cells of ``n_i. n_.j delta``."""
    x = np.where(fs.observed, fs.data, 0.0)
    a, b = x.sum(1), x.sum(0)
    K, L = delta.shape
    out = np.full((K, L), np.nan)
    for k in range(K):
        ak = a[row_labels == k]
        for l in range(L):
            bl = b[col_labels == l]
            if ak.size and bl.size:
                out[k, l] = ak.mean() * bl.mean() * delta[k, l]
    return out


def parameter_mae(true_alpha: list[list], fit, dataset: MultiViewDataset | None = None) -> list[list[dict]]:
    """Permutation-matched mean absolute error per view, feature set and parameter.

    Count blocks are compared through implied block means (``dataset`` is
    required for those); the truth is the rate table. Returns ``nan``
    entries when cluster counts differ from the truth.
    """
    out = []
    for v, (t_sets, e_sets) in enumerate(zip(true_alpha, fit.model.alpha)):
        tq, eq = [], []
        for s, (t, e) in enumerate(zip(t_sets, e_sets)):
            cm = None
            if isinstance(e, PoissonParams):
                if dataset is None:
                    raise ValueError("count parameter error needs the dataset")
                fs = dataset.views[v].feature_sets[s]
                cm = count_block_means(fs, fit.partitions.row_labels[v], fit.partitions.col_labels[v][s], e.delta)
            tq.append(_param_arrays(t, None))
            eq.append(_param_arrays(e, None, cm))
        shapes_ok = all(next(iter(a.values())).shape[:2] == next(iter(b.values())).shape[:2]
                        for a, b in zip(tq, eq))
        if not shapes_ok:
            out.append([{name: float("nan") for name in a} for a in tq])
            continue
        perm, cols = match_view(tq, [{k: np.nan_to_num(x, nan=0.0) for k, x in e.items()} for e in eq])
        view = []
        for t, e, c in zip(tq, eq, cols):
            row = {}
            for name, tv in t.items():
                ev = e[name][list(perm)][:, c]
                row[name] = float(np.mean(np.abs(tv - ev)))
            view.append(row)
        out.append(view)
    return out


def imputation_mae(truth: MultiViewDataset, masked: MultiViewDataset, imputed: MultiViewDataset) -> list[list[float]]:
    """Mean absolute error over masked cells per feature set (``nan`` if none masked).

    Nominal sets report the mismatch rate since their levels are unordered.
    """
    out = []
    for tv, mv, iv in zip(truth.views, masked.views, imputed.views):
        row = []
        for tf, mf, jf in zip(tv.feature_sets, mv.feature_sets, iv.feature_sets):
            miss = ~mf.observed
            if not miss.any():
                row.append(float("nan"))
                continue
            t, e = tf.data[miss], jf.data[miss]
            if tf.ftype.kind == Kind.NOMINAL:
                row.append(float(np.mean(t != e)))
            else:
                row.append(float(np.mean(np.abs(t - e))))
        out.append(row)
    return out


def clustering_scores(fit_partitions, true_rows, true_cols=None) -> dict:
    """Row ARI per view and column ARI per feature set."""
    res = {"row": [ari(p, t) for p, t in zip(fit_partitions.row_labels, true_rows)]}
    if true_cols is not None:
        res["col"] = [[ari(p, t) for p, t in zip(ps, ts)] for ps, ts in zip(fit_partitions.col_labels, true_cols)]
    return res
