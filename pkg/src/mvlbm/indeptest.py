"""Two-view independence test for row clusterings.

The joint mixing matrix is factored as ``diag(pi1) C diag(pi2)``; under
independence ``C`` is all ones. ``C`` is estimated by exponentiated
gradient ascent with a Sinkhorn projection onto the marginal constraints,
and the pseudo-likelihood-ratio statistic is calibrated by permuting the
rows of the second view. All permutation replicates are solved together
as one batch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import MultiViewDataset, NumericalFailure
from .engine import FitResult, _Context


@dataclass
class DensityMatrix:
    """Row-normalized marginal densities; ``log_scale`` holds the removed log factors."""

    psi: np.ndarray
    log_scale: np.ndarray


@dataclass
class CouplingMatrix:
    C: np.ndarray
    pi1: np.ndarray
    pi2: np.ndarray
    converged: bool = True
    n_iter: int = 0

    @property
    def pi_hat(self) -> np.ndarray:
        return compose_pi(self.pi1, self.pi2, self.C)

    def residuals(self) -> tuple[float, float]:
        return (float(np.max(np.abs(self.C @ self.pi2 - 1))),
                float(np.max(np.abs(self.C.T @ self.pi1 - 1))))


@dataclass
class IndependenceTestResult:
    log_lambda: float
    p_value: float
    c_hat: CouplingMatrix
    permutation_stats: np.ndarray
    kept1: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    kept2: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    perm_converged: np.ndarray | None = None

    @property
    def pi_hat(self) -> np.ndarray:
        return self.c_hat.pi_hat

    @property
    def B(self) -> int:
        return len(self.permutation_stats)

    def to_json(self, include_replicates: bool = False) -> dict:
        out = {
            "statistic": self.log_lambda,
            "B": self.B,
            "p_value": self.p_value,
            "converged": bool(self.c_hat.converged),
            "n_iter": int(self.c_hat.n_iter),
            "replicates_converged": None if self.perm_converged is None else int(self.perm_converged.sum()),
            "kept_clusters_view1": [int(k) for k in self.kept1],
            "kept_clusters_view2": [int(k) for k in self.kept2],
            "c_hat": self.c_hat.C.tolist(),
            "pi_hat": self.pi_hat.tolist(),
            "pi1": self.c_hat.pi1.tolist(),
            "pi2": self.c_hat.pi2.tolist(),
        }
        if include_replicates:
            out["permutation_stats"] = self.permutation_stats.tolist()
        return out

    def write_json(self, path, include_replicates: bool = False) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(include_replicates), fh, indent=2)
            fh.write("\n")


# ------------------------------------------------------------------ factorization

def factorize_pi(pi: np.ndarray):
    """Split a joint matrix into its margins and coupling ``C = pi / (pi1 pi2^T)``."""
    pi = np.asarray(pi, dtype=float)
    pi1 = pi.sum(axis=1)
    pi2 = pi.sum(axis=0)
    if (pi1 <= 0).any() or (pi2 <= 0).any():
        raise ValueError("factorization needs strictly positive margins")
    return pi1, pi2, pi / np.outer(pi1, pi2)


def compose_pi(pi1, pi2, C) -> np.ndarray:
    return np.asarray(pi1)[:, None] * np.asarray(C) * np.asarray(pi2)[None, :]


# ------------------------------------------------------------------ densities

def density_matrix(dataset: MultiViewDataset, fit: FitResult, view: int = 0) -> DensityMatrix:
    """Per-row marginal component densities of one view under a single-view fit.

    Column labels are fixed at the fit's final partition; each row is
    divided by its maximum so that at least one entry equals 1.
    """
    sub = dataset.subset([view])
    if fit.model.pi.ndim != 1:
        raise ValueError("density_matrix expects a single-view fit")
    ctx = _Context(sub, fit.config.variance_floor)
    rs = ctx.row_sides(fit.partitions.col_labels, fit.model.L)
    logpsi = ctx.view_row_scores(0, rs[0], fit.model.alpha[0])
    mx = logpsi.max(axis=1)
    if not np.all(np.isfinite(mx)):
        raise NumericalFailure(f"row {int(np.argmin(np.isfinite(mx)))} has zero density under every cluster")
    return DensityMatrix(np.exp(logpsi - mx[:, None]), mx)


# ------------------------------------------------------------------ coupling

def _coupled(a, b, C):
    """Coupled mixture density per replicate and row: a (n,K1), b (R,n,K2), C (R,K1,K2)."""
    aC = (a[None, :, :, None] * C[:, None, :, :]).sum(axis=2)  # (R, n, K2)
    return (aC * b).sum(axis=-1)


def _sinkhorn(M, pi1, pi2, max_inner, tol):
    """Scale each ``M[r]`` to ``diag(v) M diag(u)`` with both margin constraints met."""
    R, K1, K2 = M.shape
    v = np.ones((R, K1))
    u = np.ones((R, K2))
    live = np.arange(R)
    for _ in range(max_inner):
        Ml = M[live]
        ul = 1.0 / (Ml * (pi1 * v[live])[:, :, None]).sum(axis=1)
        vl = 1.0 / (Ml * (pi2 * ul)[:, None, :]).sum(axis=2)
        u[live], v[live] = ul, vl
        resid = np.abs(ul * (Ml * (pi1 * vl)[:, :, None]).sum(axis=1) - 1.0).max(axis=1)
        live = live[resid >= tol]
        if live.size == 0:
            break
    return v[:, :, None] * M * u[:, None, :]


def _estimate_batch(P1, P2, pi1, pi2, s, max_outer, max_inner, tol):
    """Solve every replicate's coupling problem; returns (C, converged, iterations).

    ``P1`` is (n, K1); ``P2`` is (R, n, K2), one row order per replicate.
    Each replicate is updated independently of the others, so its result
    does not depend on the batch it is solved in.
    """
    R = P2.shape[0]
    K1, K2 = P1.shape[1], P2.shape[2]
    a = P1 * pi1[None, :]
    b = P2 * pi2[None, None, :]
    C = np.ones((R, K1, K2))
    step = np.full(R, float(s))
    active = np.ones(R, dtype=bool)
    iters = np.zeros(R, dtype=int)
    denom = _coupled(a, b, C)
    if (denom <= 0).any():
        raise NumericalFailure("independent mixture density is zero for some row")
    f = np.log(denom).sum(axis=1)
    for _ in range(max_outer):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        G = np.einsum("ik,ril,ri->rkl", P1, P2[idx], 1.0 / denom[idx])
        M = C[idx] * np.exp(step[idx, None, None] * G - 1.0)
        Cn = _sinkhorn(M, pi1, pi2, max_inner, 1e-13)
        dn = _coupled(a, b[idx], Cn)
        with np.errstate(divide="ignore"):
            fn = np.log(dn).sum(axis=1)
        ok = np.isfinite(fn) & (fn >= f[idx] - 1e-12 * np.abs(f[idx]))
        iters[idx] += 1
        # a step that lowers the objective is rejected and the step size halved
        bad = idx[~ok]
        step[bad] *= 0.5
        active[bad[step[bad] < 1e-300]] = False
        acc = idx[ok]
        if acc.size:
            change = np.abs(Cn[ok] - C[acc]).reshape(acc.size, -1).max(axis=1)
            C[acc] = Cn[ok]
            denom[acc] = dn[ok]
            f[acc] = fn[ok]
            active[acc[change < tol]] = False
    return C, ~active, iters


def estimate_coupling(psi1, psi2, pi1, pi2, s: float = 1e-5, max_outer: int = 1000, max_inner: int = 1000,
                      tol: float = 1e-8) -> CouplingMatrix:
    """Maximize the coupled log-likelihood over C subject to both marginal constraints."""
    psi1 = np.asarray(psi1, dtype=float)
    psi2 = np.asarray(psi2, dtype=float)
    pi1 = np.asarray(pi1, dtype=float)
    pi2 = np.asarray(pi2, dtype=float)
    if psi1.shape[0] != psi2.shape[0]:
        raise ValueError("psi matrices must have the same number of rows")
    if (pi1 <= 0).any() or (pi2 <= 0).any():
        raise ValueError("cluster proportions must be strictly positive")
    C, conv, it = _estimate_batch(psi1, psi2[None], pi1, pi2, s, max_outer, max_inner, tol)
    return CouplingMatrix(C[0], pi1, pi2, bool(conv[0]), int(it[0]))


def log_lambda(psi1, psi2, pi1, pi2, C) -> float:
    """Sum over rows of log(coupled / independent) mixture densities."""
    psi1 = np.asarray(psi1, dtype=float)
    psi2 = np.asarray(psi2, dtype=float)
    a = psi1 * np.asarray(pi1)[None, :]
    b = psi2 * np.asarray(pi2)[None, :]
    den = a.sum(axis=1) * b.sum(axis=1)
    if (den <= 0).any():
        raise NumericalFailure("zero independent mixture density")
    # coupled density written as den + a (C - 1) b so that C = 1 gives exactly 0
    excess = ((a @ (np.asarray(C) - 1.0)) * b).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return float(np.sum(np.log1p(excess / den)))


def _batch_log_lambda(P1, P2, pi1, pi2, C):
    a = P1 * pi1[None, :]
    b = P2 * pi2[None, None, :]
    den = a.sum(axis=1)[None, :] * b.sum(axis=2)
    excess = _coupled(a, b, C - 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.sum(np.log1p(excess / den), axis=1)


# ------------------------------------------------------------------ test

def _live_clusters(fit: FitResult) -> np.ndarray:
    counts = np.bincount(fit.partitions.row_labels[0], minlength=fit.model.K[0])
    return np.nonzero((fit.model.pi > 0) & (counts > 0))[0]


def permutation_test(fit1: FitResult, fit2: FitResult, dataset: MultiViewDataset, B: int = 200, seed: int = 0,
                     views=(0, 1), s: float = 1e-5, max_outer: int = 1000, max_inner: int = 1000,
                     tol: float = 1e-8, chunk: int = 50) -> IndependenceTestResult:
    """Pseudo-likelihood-ratio permutation test of independent row clusterings.

    ``fit1``/``fit2`` are single-view fits of ``dataset.views[views[0]]``
    and ``dataset.views[views[1]]``. Empty clusters are dropped before
    testing. Replicate ``b`` permutes the rows of the second view with a
    generator seeded by ``(seed, b)``; only the coupling is re-estimated.
    """
    if B < 1:
        raise ValueError("B must be >= 1")
    d1 = density_matrix(dataset, fit1, views[0])
    d2 = density_matrix(dataset, fit2, views[1])
    k1, k2 = _live_clusters(fit1), _live_clusters(fit2)
    psi1, psi2 = d1.psi[:, k1], d2.psi[:, k2]
    pi1 = fit1.model.pi[k1] / fit1.model.pi[k1].sum()
    pi2 = fit2.model.pi[k2] / fit2.model.pi[k2].sum()
    if (psi1.sum(1) <= 0).any() or (psi2.sum(1) <= 0).any():
        raise NumericalFailure("a row has zero density on every retained cluster")

    C0, cv0, it0 = _estimate_batch(psi1, psi2[None], pi1, pi2, s, max_outer, max_inner, tol)
    chat = CouplingMatrix(C0[0], pi1, pi2, bool(cv0[0]), int(it0[0]))
    obs = float(_batch_log_lambda(psi1, psi2[None], pi1, pi2, C0)[0])

    n = psi1.shape[0]
    perms = np.stack([np.random.default_rng([seed, b]).permutation(n) for b in range(B)])
    stats = np.empty(B)
    conv = np.empty(B, dtype=bool)
    for start in range(0, B, chunk):
        sl = slice(start, min(start + chunk, B))
        Bm = psi2[perms[sl]]
        C, cv, _ = _estimate_batch(psi1, Bm, pi1, pi2, s, max_outer, max_inner, tol)
        stats[sl] = _batch_log_lambda(psi1, Bm, pi1, pi2, C)
        conv[sl] = cv
    p = float(np.mean(obs <= stats))
    return IndependenceTestResult(obs, p, chat, stats, k1, k2, conv)
