"""Block distributions: log densities, weighted M-step updates, sampling.

Two layers live here. The scalar API (:func:`log_density`,
:func:`multinomial_update`, :func:`gaussian_update`, :func:`poisson_update`,
:func:`bos_update`, :func:`sample`, :func:`param_count`) works on single
blocks with levels coded ``1..m``. The ``*Family`` classes work on whole
feature sets in the internal ``0..m-1`` coding and are what the SEM-Gibbs
engine calls; both layers share the same formulas.

Parameter containers hold arrays whose leading axes index blocks, so a
single block is simply a container of 0-d arrays.
"""

from __future__ import annotations

import dataclasses
import functools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln, xlogy

from .core import FeatureSet, FeatureType, Kind

TINY = 1e-300
BETA_CLIP = 1e-9
DEFAULT_VARIANCE_FLOOR = 1e-6


def safe_log(x):
    return np.log(np.maximum(x, TINY))


class EmptyBlockError(ValueError):
    """An M-step update was asked to fit a block carrying zero weight."""


# ------------------------------------------------------------------ params

@dataclass
class MultinomialParams:
    p: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)


@dataclass
class BosParams:
    mu: np.ndarray  # 1-based position
    beta: np.ndarray
    levels: int | None = dataclasses.field(default=None, metadata={"static": True})

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=int)
        self.beta = np.asarray(self.beta, dtype=float)


@dataclass
class GaussianParams:
    mu: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.sigma2 = np.asarray(self.sigma2, dtype=float)


@dataclass
class PoissonParams:
    delta: np.ndarray

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=float)


BlockParams = MultinomialParams | BosParams | GaussianParams | PoissonParams

PARAM_CLASSES = {
    "multinomial": MultinomialParams,
    "bos": BosParams,
    "gaussian": GaussianParams,
    "poisson": PoissonParams,
}


def array_fields(params_or_cls) -> list[str]:
    return [f.name for f in dataclasses.fields(params_or_cls) if not f.metadata.get("static")]


def params_map(params, fn):
    """Apply ``fn`` to every array field, returning a new container."""
    static = {f.name: getattr(params, f.name) for f in dataclasses.fields(params) if f.metadata.get("static")}
    return type(params)(**{name: fn(getattr(params, name)) for name in array_fields(params)}, **static)


def params_copy(params):
    return params_map(params, np.copy)


def params_to_json(params) -> dict:
    name = next(k for k, v in PARAM_CLASSES.items() if isinstance(params, v))
    out = {"family": name}
    for field_name in array_fields(params):
        out[field_name] = getattr(params, field_name).tolist()
    return out


def params_from_json(obj: dict):
    cls = PARAM_CLASSES[obj["family"]]
    return cls(**{name: np.asarray(obj[name]) for name in array_fields(cls)})


@dataclass
class PoissonMargins:
    """Row and column sums of a count feature set over observed cells."""

    row_sums: np.ndarray
    col_sums: np.ndarray

    @classmethod
    def from_data(cls, x: np.ndarray, observed: np.ndarray | None = None) -> "PoissonMargins":
        x = np.asarray(x, dtype=float)
        if observed is None:
            observed = np.ones(x.shape, dtype=bool)
        ox = np.where(observed, x, 0.0)
        return cls(ox.sum(axis=1), ox.sum(axis=0))

    def scale(self, i: int, j: int) -> float:
        return float(self.row_sums[i] * self.col_sums[j])


# ------------------------------------------------------------------ BOS

@functools.lru_cache(maxsize=None)
def bos_trajectory_table(m: int) -> np.ndarray:
    """Coefficients of the BOS pmf over all search trajectories.

    Returns ``T`` with shape ``(m, m, m, m)`` such that
    ``P(x | mu, beta) = sum_{a,b} T[mu-1, x-1, a, b] beta**a (1-beta)**b``
    where ``a`` counts accurate comparisons and ``b`` blind ones.
    """
    if m < 2 or m > 12:
        raise ValueError("BOS enumeration supports 2 <= m <= 12")
    table = np.zeros((m, m, m, m))
    for mu in range(1, m + 1):

        @functools.lru_cache(maxsize=None)
        def dist(lo: int, hi: int) -> np.ndarray:
            out = np.zeros((m, m, m))
            if lo == hi:
                out[lo - 1, 0, 0] = 1.0
                return out
            size = hi - lo + 1
            for y in range(lo, hi + 1):
                parts = [(lo, y - 1), (y, y), (y + 1, hi)]
                parts = [(a, b) for a, b in parts if a <= b]
                for a, b in parts:
                    sub = dist(a, b)
                    out[:, :, 1:] += (b - a + 1) / size ** 2 * sub[:, :, :-1]

                def gap(iv):
                    a, b = iv
                    return 0 if a <= mu <= b else min(abs(mu - a), abs(mu - b))

                best = min(parts, key=gap)
                out[:, 1:, :] += dist(*best)[:, :-1, :] / size
            return out

        table[mu - 1] = dist(1, m)
    return table


@functools.lru_cache(maxsize=None)
def _bos_flat(m: int):
    T = bos_trajectory_table(m).reshape(m, m, m * m)
    a = np.repeat(np.arange(m), m).astype(float)
    b = np.tile(np.arange(m), m).astype(float)
    return T, a, b


def _bos_powers(beta: np.ndarray, m: int) -> np.ndarray:
    _, a, b = _bos_flat(m)
    beta = np.asarray(beta, dtype=float)[..., None]
    return beta ** a * (1.0 - beta) ** b


def bos_pmf(mu, beta, m: int) -> np.ndarray:
    """BOS probabilities of levels ``1..m``; broadcasts over ``mu``/``beta``."""
    T, _, _ = _bos_flat(m)
    mu = np.asarray(mu, dtype=int)
    beta = np.broadcast_to(np.asarray(beta, dtype=float), mu.shape)
    P = _bos_powers(beta, m)  # (..., m*m)
    return np.einsum("...xk,...k->...x", T[mu - 1], P)


def bos_loglik(counts: np.ndarray, mu: int, beta: float) -> float:
    counts = np.asarray(counts, dtype=float)
    pmf = bos_pmf(mu, np.clip(beta, BETA_CLIP, 1 - BETA_CLIP), counts.size)
    return float(np.sum(counts * safe_log(pmf)))


def bos_fit_counts(counts: np.ndarray, init_beta=None, inner_iters: int = 200,
                   tol: float = 1e-6, grid: int = 201):
    """Maximum-likelihood BOS fit for a batch of weighted level counts.

    ``counts`` has shape ``(B, m)``. For every candidate position the
    precision starts at the best point of a ``grid``-point scan (or at
    ``init_beta`` when that scores higher) and is refined by EM on the
    trajectory latent variables; the position with highest likelihood
    wins. Returns ``(mu, beta, loglik)`` arrays of shape ``(B,)``.
    """
    counts = np.atleast_2d(np.asarray(counts, dtype=float))
    B, m = counts.shape
    T, a, b = _bos_flat(m)
    lo, hi = BETA_CLIP, 1.0 - BETA_CLIP

    g = np.linspace(lo, hi, grid)
    f_grid = np.einsum("uxk,gk->gux", T, _bos_powers(g, m))
    ll_grid = np.einsum("bx,gux->bgu", counts, safe_log(f_grid))
    beta = g[np.argmax(ll_grid, axis=1)]  # (B, m)
    if init_beta is not None:
        init = np.clip(np.broadcast_to(np.asarray(init_beta, float)[:, None], (B, m)), lo, hi)
        f0 = np.einsum("uxk,buk->bux", T, _bos_powers(init, m))
        ll0 = np.einsum("bx,bux->bu", counts, safe_log(f0))
        beta = np.where(ll0 > ll_grid.max(axis=1), init, beta)

    for _ in range(inner_iters):
        P = _bos_powers(beta, m)  # (B, m_mu, K)
        terms = T[None] * P[:, :, None, :]  # (B, m_mu, m_x, K)
        f = terms.sum(-1)
        ea = (terms * a).sum(-1) / np.maximum(f, TINY)
        eb = (terms * b).sum(-1) / np.maximum(f, TINY)
        num = np.einsum("bx,bux->bu", counts, ea)
        den = np.einsum("bx,bux->bu", counts, ea + eb)
        new = np.clip(num / np.maximum(den, TINY), lo, hi)
        done = np.max(np.abs(new - beta)) < tol
        beta = new
        if done:
            break

    f = np.einsum("uxk,buk->bux", T, _bos_powers(beta, m))
    ll = np.einsum("bx,bux->bu", counts, safe_log(f))
    best = np.argmax(ll, axis=1)
    idx = np.arange(B)
    return best + 1, beta[idx, best], ll[idx, best]


def bos_simulate(mu, beta, m: int, rng: np.random.Generator) -> np.ndarray:
    """Draw levels ``1..m`` by running the ordinal search process."""
    mu = np.asarray(mu, dtype=int)
    beta = np.broadcast_to(np.asarray(beta, dtype=float), mu.shape)
    lo = np.ones(mu.shape, dtype=int)
    hi = np.full(mu.shape, m, dtype=int)
    for _ in range(m - 1):
        size = hi - lo + 1
        y = lo + np.minimum((rng.random(mu.shape) * size).astype(int), size - 1)
        accurate = rng.random(mu.shape) < beta
        # blind pick: interval chosen with probability proportional to its size
        u = rng.random(mu.shape) * size
        left = u < (y - lo)
        right = u >= (y - lo + 1)
        # accurate pick: interval nearest to mu
        acc_left = (mu < y) & (y > lo)
        acc_right = (mu > y) & (y < hi)
        go_left = np.where(accurate, acc_left, left)
        go_right = np.where(accurate, acc_right, right)
        new_lo = np.where(go_left, lo, np.where(go_right, y + 1, y))
        new_hi = np.where(go_left, y - 1, np.where(go_right, hi, y))
        active = size > 1
        lo = np.where(active, new_lo, lo)
        hi = np.where(active, new_hi, hi)
    return lo


# ------------------------------------------------------------------ scalar API

def log_density(params, x, margins: PoissonMargins | None = None, cell: tuple[int, int] | None = None):
    """Log probability (density) of ``x`` under one block's parameters.

    Nominal/ordinal ``x`` is a level in ``1..m``. Poisson blocks need
    ``margins`` and the ``cell`` index that selects the row/column sums.
    """
    if isinstance(params, MultinomialParams):
        m = params.p.shape[-1]
        x = int(x)
        if not 1 <= x <= m:
            raise ValueError(f"level {x} outside 1..{m}")
        return float(safe_log(params.p[..., x - 1]))
    if isinstance(params, BosParams):
        m = _levels_from_context(params, x)
        x = int(x)
        beta = np.clip(params.beta, BETA_CLIP, 1 - BETA_CLIP)
        return float(safe_log(bos_pmf(params.mu, beta, m)[..., x - 1]))
    if isinstance(params, GaussianParams):
        x = float(x)
        if not math.isfinite(x):
            raise ValueError("continuous value must be finite")
        s2 = float(params.sigma2)
        return -0.5 * math.log(2 * math.pi * s2) - (x - float(params.mu)) ** 2 / (2 * s2)
    if isinstance(params, PoissonParams):
        if margins is None or cell is None:
            raise ValueError("Poisson log density needs margins and a cell index")
        if x < 0 or x != int(x):
            raise ValueError("count must be a non-negative integer")
        rate = margins.scale(*cell) * float(params.delta)
        return float(xlogy(x, rate) - rate - gammaln(x + 1)) if rate > 0 or x == 0 else float(safe_log(0.0))
    raise TypeError(f"unknown parameter type {type(params)!r}")


def _levels_from_context(params: BosParams, x) -> int:
    m = params.levels
    if m is None:
        raise ValueError("BosParams used in the scalar API need a .levels attribute; use bos_block()")
    x = int(x)
    if not 1 <= x <= m:
        raise ValueError(f"level {x} outside 1..{m}")
    return m


def bos_block(mu: int, beta: float, m: int) -> BosParams:
    """A single BOS block that remembers its number of levels."""
    if not 1 <= mu <= m:
        raise ValueError(f"position {mu} outside 1..{m}")
    if not 0.0 <= beta <= 1.0:
        raise ValueError("precision must lie in [0, 1]")
    return BosParams(mu, beta, levels=m)


def multinomial_update(counts) -> MultinomialParams:
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        raise EmptyBlockError("multinomial block has zero total weight")
    return MultinomialParams(counts / total)


def gaussian_update(values, weights=None, variance_floor: float = DEFAULT_VARIANCE_FLOOR) -> GaussianParams:
    """Weighted mean and biased weighted variance, floored."""
    x = np.asarray(values, dtype=float)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    total = w.sum()
    if total <= 0:
        raise EmptyBlockError("gaussian block has zero total weight")
    mu = np.sum(w * x) / total
    var = np.sum(w * (x - mu) ** 2) / total
    return GaussianParams(mu, max(var, variance_floor))


def poisson_update(block_sum: float, margin_product: float) -> PoissonParams:
    """Block count total over the sum of ``n_i. * n_.j`` across the block."""
    if margin_product <= 0:
        raise EmptyBlockError("poisson block has zero marginal product")
    return PoissonParams(block_sum / margin_product)


def bos_update(values, weights=None, m: int | None = None, inner_iters: int = 200,
               tol: float = 1e-6) -> BosParams:
    """Fit (mu, beta) to weighted levels in ``1..m``."""
    x = np.asarray(values, dtype=int)
    if m is None:
        raise ValueError("number of levels m is required")
    w = np.ones(x.shape) if weights is None else np.asarray(weights, dtype=float)
    counts = np.bincount(x - 1, weights=w, minlength=m)[:m]
    if counts.sum() <= 0:
        raise EmptyBlockError("BOS block has zero total weight")
    mu, beta, _ = bos_fit_counts(counts[None], inner_iters=inner_iters, tol=tol)
    return bos_block(int(mu[0]), float(beta[0]), m)


def sample(params, rng: np.random.Generator, size=None, margins: PoissonMargins | None = None,
           cell: tuple[int, int] | None = None):
    """Draw from one block. Levels are returned in ``1..m``."""
    if isinstance(params, MultinomialParams):
        p = params.p / params.p.sum()
        return rng.choice(p.size, size=size, p=p) + 1
    if isinstance(params, BosParams):
        m = params.levels
        if m is None:
            raise ValueError("use bos_block() to build sampleable BOS params")
        shape = () if size is None else size
        out = bos_simulate(np.full(shape, int(params.mu)), float(params.beta), m, rng)
        return int(out) if size is None else out
    if isinstance(params, GaussianParams):
        return rng.normal(float(params.mu), math.sqrt(float(params.sigma2)), size=size)
    if isinstance(params, PoissonParams):
        if margins is None or cell is None:
            raise ValueError("Poisson sampling needs margins and a cell index")
        return rng.poisson(margins.scale(*cell) * float(params.delta), size=size)
    raise TypeError(f"unknown parameter type {type(params)!r}")


def param_count(ftype: FeatureType) -> int:
    """Free parameters per block (the ICL ``eta``)."""
    if ftype.kind == Kind.NOMINAL:
        return ftype.levels - 1
    if ftype.kind in (Kind.ORDINAL, Kind.CONTINUOUS):
        return 2
    return 1


# ------------------------------------------------------------------ families

def _categorical_draw(prob: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(prob, axis=-1)
    u = rng.random(prob.shape[:-1]) * cdf[..., -1]
    return np.minimum((cdf <= u[..., None]).sum(-1), prob.shape[-1] - 1)


@dataclass
class SetStats:
    """Partition-independent precomputations for one feature set."""

    n: int
    d: int
    observed: np.ndarray
    arrays: dict


class Family:
    """Feature-set level operations for one distribution family.

    ``row_side``/``col_side`` collapse the data over the column (row)
    partition; the resulting summaries feed both the Gibbs scores and the
    M-step, so each is computed once per half-iteration.
    """

    name = ""

    def __init__(self, ftype: FeatureType):
        self.ftype = ftype

    @property
    def eta(self) -> int:
        return param_count(self.ftype)

    def prepare(self, fs: FeatureSet) -> SetStats:
        raise NotImplementedError

    def row_side(self, st: SetStats, W: np.ndarray):
        raise NotImplementedError

    def col_side(self, st: SetStats, Z: np.ndarray):
        raise NotImplementedError

    def row_scores(self, st: SetStats, rs, params) -> np.ndarray:
        raise NotImplementedError

    def col_scores(self, st: SetStats, cs, params) -> np.ndarray:
        raise NotImplementedError

    def mstep(self, st: SetStats, cs, W: np.ndarray, prev):
        raise NotImplementedError

    def draw(self, st: SetStats, params, k, l, rows, cols, rng) -> np.ndarray:
        raise NotImplementedError

    def cell_logpdf(self, st: SetStats, x, params, k, l, rows, cols) -> np.ndarray:
        raise NotImplementedError

    def block_vector(self, params) -> np.ndarray:
        """Per-block parameters stacked on a trailing axis, shape (K, L, q)."""
        raise NotImplementedError

    def aggregate(self, history: Sequence) -> object:
        """Mean of continuous parameters across snapshots (mode for BOS mu)."""
        return type(history[0])(**{name: np.mean([getattr(h, name) for h in history], axis=0)
                                   for name in array_fields(history[0])})

    def block_mean(self, params, k, l, rows, cols, st: SetStats) -> np.ndarray:
        """Point imputation in internal coding (mean or mode)."""
        raise NotImplementedError


class _Categorical(Family):
    def prepare(self, fs):
        m = self.ftype.levels
        n, d = fs.data.shape
        codes = np.where(fs.observed, fs.data, 0).astype(int)
        E = np.zeros((n, d, m))
        E[np.arange(n)[:, None], np.arange(d)[None, :], codes] = 1.0
        E *= fs.observed[:, :, None]
        return SetStats(n, d, fs.observed, {
            "codes": codes,
            "E2": E.reshape(n, d * m),
            "Et": np.ascontiguousarray(E.transpose(0, 2, 1)),
        })

    def log_table(self, params) -> np.ndarray:
        raise NotImplementedError

    def row_side(self, st, W):
        return st.arrays["Et"] @ W  # (n, m, L)

    def col_side(self, st, Z):
        m = self.ftype.levels
        return (Z.T @ st.arrays["E2"]).reshape(Z.shape[1], st.d, m)  # (K, d, m)

    def row_scores(self, st, rs, params):
        lt = self.log_table(params)  # (K, L, m)
        K, L, m = lt.shape
        return rs.reshape(st.n, m * L) @ lt.transpose(2, 1, 0).reshape(m * L, K)

    def col_scores(self, st, cs, params):
        lt = self.log_table(params)
        K, L, m = lt.shape
        return cs.transpose(1, 0, 2).reshape(st.d, K * m) @ lt.transpose(0, 2, 1).reshape(K * m, L)

    def block_counts(self, cs, W):
        return (cs.transpose(0, 2, 1) @ W).transpose(0, 2, 1)  # (K, L, m)

    def cell_logpdf(self, st, x, params, k, l, rows, cols):
        lt = self.log_table(params)
        return lt[k, l, np.asarray(x, dtype=int)]


class NominalFamily(_Categorical):
    name = "multinomial"

    def log_table(self, params):
        return safe_log(params.p)

    def mstep(self, st, cs, W, prev):
        counts = self.block_counts(cs, W)
        total = counts.sum(-1, keepdims=True)
        p = np.where(total > 0, counts / np.maximum(total, TINY), prev.p)
        return MultinomialParams(p)

    def draw(self, st, params, k, l, rows, cols, rng):
        return _categorical_draw(params.p[k, l], rng)

    def block_vector(self, params):
        return params.p

    def block_mean(self, params, k, l, rows, cols, st):
        return np.argmax(params.p[k, l], axis=-1)


class OrdinalFamily(_Categorical):
    name = "bos"

    def __init__(self, ftype, inner_iters: int = 200, tol: float = 1e-6):
        super().__init__(ftype)
        self.inner_iters = inner_iters
        self.tol = tol

    def log_table(self, params):
        beta = np.clip(params.beta, BETA_CLIP, 1 - BETA_CLIP)
        return safe_log(bos_pmf(params.mu, beta, self.ftype.levels))

    def mstep(self, st, cs, W, prev):
        counts = self.block_counts(cs, W)
        K, L, m = counts.shape
        flat = counts.reshape(K * L, m)
        live = flat.sum(-1) > 0
        mu = prev.mu.reshape(-1).copy()
        beta = prev.beta.reshape(-1).copy()
        if live.any():
            mu_new, beta_new, _ = bos_fit_counts(flat[live], init_beta=beta[live],
                                                 inner_iters=self.inner_iters, tol=self.tol)
            mu[live] = mu_new
            beta[live] = beta_new
        return BosParams(mu.reshape(K, L), beta.reshape(K, L), self.ftype.levels)

    def draw(self, st, params, k, l, rows, cols, rng):
        return bos_simulate(params.mu[k, l], params.beta[k, l], self.ftype.levels, rng) - 1

    def block_vector(self, params):
        return np.stack([params.mu.astype(float), params.beta], axis=-1)

    def aggregate(self, history):
        mus = np.stack([h.mu for h in history])  # (T, K, L)
        m = self.ftype.levels
        counts = np.stack([(mus == r).sum(0) for r in range(1, m + 1)], axis=-1)
        return BosParams(np.argmax(counts, axis=-1) + 1, np.mean([h.beta for h in history], axis=0), m)

    def block_mean(self, params, k, l, rows, cols, st):
        beta = np.clip(params.beta, BETA_CLIP, 1 - BETA_CLIP)
        return np.argmax(bos_pmf(params.mu[k, l], beta[k, l], self.ftype.levels), axis=-1)


class GaussianFamily(Family):
    name = "gaussian"

    def __init__(self, ftype, variance_floor: float = DEFAULT_VARIANCE_FLOOR):
        super().__init__(ftype)
        self.variance_floor = variance_floor

    def prepare(self, fs):
        O = fs.observed.astype(float)
        x = np.where(fs.observed, fs.data, 0.0)
        return SetStats(fs.n, fs.d, fs.observed, {"O": O, "x": x, "x2": x * x})

    def row_side(self, st, W):
        a = st.arrays
        return a["O"] @ W, a["x"] @ W, a["x2"] @ W

    def col_side(self, st, Z):
        a = st.arrays
        return Z.T @ a["O"], Z.T @ a["x"], Z.T @ a["x2"]

    @staticmethod
    def _scores(cnt, s1, s2, mu, s2v):
        inv = 1.0 / s2v
        return (-0.5 * cnt @ np.log(2 * np.pi * s2v) - 0.5 * s2 @ inv
                + s1 @ (mu * inv) - 0.5 * cnt @ (mu * mu * inv))

    def row_scores(self, st, rs, params):
        cnt, s1, s2 = rs
        return self._scores(cnt, s1, s2, params.mu.T, params.sigma2.T)

    def col_scores(self, st, cs, params):
        cnt, s1, s2 = cs
        return self._scores(cnt.T, s1.T, s2.T, params.mu, params.sigma2)

    def mstep(self, st, cs, W, prev):
        cnt, s1, s2 = (c @ W for c in cs)
        live = cnt > 0
        safe = np.maximum(cnt, TINY)
        mu = np.where(live, s1 / safe, prev.mu)
        var = np.where(live, s2 / safe - mu * mu, prev.sigma2)
        return GaussianParams(mu, np.maximum(var, self.variance_floor))

    def draw(self, st, params, k, l, rows, cols, rng):
        return rng.normal(params.mu[k, l], np.sqrt(params.sigma2[k, l]))

    def cell_logpdf(self, st, x, params, k, l, rows, cols):
        mu, s2 = params.mu[k, l], params.sigma2[k, l]
        return -0.5 * np.log(2 * np.pi * s2) - (x - mu) ** 2 / (2 * s2)

    def block_vector(self, params):
        return np.stack([params.mu, params.sigma2], axis=-1)

    def block_mean(self, params, k, l, rows, cols, st):
        return params.mu[k, l]


class PoissonFamily(Family):
    name = "poisson"

    def prepare(self, fs):
        O = fs.observed.astype(float)
        x = np.where(fs.observed, fs.data, 0.0)
        a = x.sum(axis=1)
        b = x.sum(axis=0)
        const = xlogy(x, a[:, None] * b[None, :]) - gammaln(x + 1.0) * O
        return SetStats(fs.n, fs.d, fs.observed, {
            "O": O, "x": x, "a": a, "b": b, "Ob": O * b[None, :],
            "c_row": const.sum(axis=1), "c_col": const.sum(axis=0),
        })

    def margins(self, st) -> PoissonMargins:
        return PoissonMargins(st.arrays["a"], st.arrays["b"])

    def row_side(self, st, W):
        a = st.arrays
        return a["x"] @ W, a["Ob"] @ W

    def col_side(self, st, Z):
        a = st.arrays
        return Z.T @ a["x"], (Z * a["a"][:, None]).T @ a["O"]

    def row_scores(self, st, rs, params):
        sx, sb = rs
        a = st.arrays
        return sx @ safe_log(params.delta).T - a["a"][:, None] * (sb @ params.delta.T) + a["c_row"][:, None]

    def col_scores(self, st, cs, params):
        cx, ca = cs
        a = st.arrays
        return cx.T @ safe_log(params.delta) - a["b"][:, None] * (ca.T @ params.delta) + a["c_col"][:, None]

    def mstep(self, st, cs, W, prev):
        cx, ca = cs
        block_sum = cx @ W
        margin = (ca * st.arrays["b"][None, :]) @ W
        live = margin > 0
        delta = np.where(live, block_sum / np.maximum(margin, TINY), prev.delta)
        return PoissonParams(delta)

    def _rate(self, st, params, k, l, rows, cols):
        a = st.arrays
        return a["a"][rows] * a["b"][cols] * params.delta[k, l]

    def draw(self, st, params, k, l, rows, cols, rng):
        return rng.poisson(self._rate(st, params, k, l, rows, cols)).astype(float)

    def cell_logpdf(self, st, x, params, k, l, rows, cols):
        rate = self._rate(st, params, k, l, rows, cols)
        return np.where(x > 0, x * safe_log(rate), 0.0) - rate - gammaln(x + 1.0)

    def block_vector(self, params):
        return params.delta[..., None]

    def block_mean(self, params, k, l, rows, cols, st):
        return np.round(self._rate(st, params, k, l, rows, cols))


def family_for(ftype: FeatureType, variance_floor: float = DEFAULT_VARIANCE_FLOOR) -> Family:
    if ftype.kind == Kind.NOMINAL:
        return NominalFamily(ftype)
    if ftype.kind == Kind.ORDINAL:
        return OrdinalFamily(ftype)
    if ftype.kind == Kind.CONTINUOUS:
        return GaussianFamily(ftype, variance_floor)
    return PoissonFamily(ftype)
