"""Independent reference computations used by the unit and acceptance tests."""

import itertools

import numpy as np
from scipy.optimize import minimize

from mvlbm.core import Kind
from mvlbm.dist import (BosParams, GaussianParams, MultinomialParams, PoissonMargins, PoissonParams, bos_block,
                        log_density)


def penalized_objective(z, a, lam, delta):
    with np.errstate(divide="ignore"):
        return float(-np.sum(np.where(a > 0, a * np.log(z), 0.0)) + lam * np.sum(np.log(delta + z)))


def brute_force_threshold(a, lam, delta=1e-8):
    """Global minimizer over the simplex by multi-start L-BFGS on softmax coordinates.

    One start per subset of coordinates pushed to the ``delta`` scale, so
    every local basin of the separable objective is visited.
    """
    a = np.asarray(a, dtype=float)
    K = a.size

    def f(theta):
        z = np.exp(theta - theta.max())
        z /= z.sum()
        zg = -a + lam * z / (delta + z)  # z_k * d/dz_k
        grad = zg - z * zg.sum()
        return penalized_objective(z, a, lam, delta), grad

    best = None
    for small in itertools.product([False, True], repeat=K):
        if all(small):
            continue
        theta0 = np.where(small, np.log(delta), np.log(np.maximum(a - lam, 1e-3)))
        res = minimize(f, theta0, jac=True, method="L-BFGS-B",
                       options={"gtol": 1e-14, "ftol": 1e-15, "maxiter": 5000})
        z = np.exp(res.x - res.x.max())
        z /= z.sum()
        val = penalized_objective(z, a, lam, delta)
        if best is None or val < best[0]:
            best = (val, z)
    return best[1]


def _block(params, k, l, levels):
    if isinstance(params, MultinomialParams):
        return MultinomialParams(params.p[k, l])
    if isinstance(params, BosParams):
        return bos_block(int(params.mu[k, l]), float(params.beta[k, l]), levels)
    if isinstance(params, GaussianParams):
        return GaussianParams(params.mu[k, l], params.sigma2[k, l])
    return PoissonParams(params.delta[k, l])


def brute_force_cdll(dataset, model, row_labels, col_labels):
    """Cell-by-cell ``log p(x, z, w)`` through the scalar density API."""
    total = 0.0
    n = dataset.n
    for i in range(n):
        total += float(np.log(model.pi[tuple(int(r[i]) for r in row_labels)]))
    for v, view in enumerate(dataset.views):
        for s, fs in enumerate(view.feature_sets):
            rho = model.rho[v][s]
            for j in range(fs.d):
                total += float(np.log(rho[col_labels[v][s][j]]))
            margins = PoissonMargins.from_data(np.nan_to_num(fs.data), fs.observed)
            for i in range(n):
                for j in range(fs.d):
                    if not fs.observed[i, j]:
                        continue
                    k, l = int(row_labels[v][i]), int(col_labels[v][s][j])
                    blk = _block(model.alpha[v][s], k, l, fs.ftype.levels)
                    x = fs.data[i, j]
                    if fs.ftype.kind in (Kind.NOMINAL, Kind.ORDINAL):
                        total += log_density(blk, int(x) + 1)
                    elif fs.ftype.kind == Kind.COUNT:
                        total += log_density(blk, x, margins, (i, j))
                    else:
                        total += log_density(blk, x)
    return total


def hand_log_lambda(psi1, psi2, pi1, pi2, C):
    """Loop-level evaluation of the coupled-versus-independent log ratio."""
    total = 0.0
    for i in range(psi1.shape[0]):
        num = sum(pi1[a] * pi2[b] * C[a, b] * psi1[i, a] * psi2[i, b]
                  for a in range(len(pi1)) for b in range(len(pi2)))
        den = sum(pi1[a] * psi1[i, a] for a in range(len(pi1))) * sum(pi2[b] * psi2[i, b] for b in range(len(pi2)))
        total += np.log(num) - np.log(den)
    return total
