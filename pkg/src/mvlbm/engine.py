"""SEM-Gibbs inference for the multi-view latent block model.

One iteration runs five steps: joint row-label sampling, row M-step
(with the optional soft-threshold on the joint mixing array), column-label
sampling per feature set, column M-step, and imputation of missing cells.
Masks stay authoritative: imputed values never feed back into likelihoods.

Labels are handled as integer vectors internally; one-hot matrices are
built only where a matrix product needs them.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (FeatureSet, Kind, MultiViewDataset, NumericalFailure, PartitionState,
                   PenaltyTooLarge, View, ViewSchema, one_hot)
from .dist import (BosParams, GaussianParams, MultinomialParams, PoissonParams, TINY,
                   DEFAULT_VARIANCE_FLOOR, Family, family_for, params_copy)


@dataclass
class FitConfig:
    """Run settings. ``lam`` is the sparsity penalty (``lambda`` in JSON)."""

    total_iters: int = 150
    burn_in: int = 100
    resample_iters: int | None = None
    resample_fraction: float = 0.20
    lam: float = 0.0
    seed: int = 0
    variance_floor: float = DEFAULT_VARIANCE_FLOOR
    bos_inner_iters: int = 200
    n_init: int = 3
    init_iters: int = 50

    def __post_init__(self):
        if self.resample_iters is None:
            self.resample_iters = self.burn_in
        if not 0 <= self.burn_in < self.total_iters:
            raise ValueError("need 0 <= burn_in < total_iters")
        if self.resample_iters > self.burn_in:
            raise ValueError("resample_iters must not exceed burn_in")
        if not 0.0 < self.resample_fraction <= 1.0:
            raise ValueError("resample_fraction must lie in (0, 1]")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.n_init < 1:
            raise ValueError("n_init must be >= 1")
        if self.init_iters < 2:
            raise ValueError("init_iters must be >= 2")

    def check_penalty(self, K) -> None:
        cells = int(np.prod(K))
        if self.lam > 0 and not self.lam < 1.0 / cells:
            raise PenaltyTooLarge(f"penalty too large: lambda={self.lam} must be < 1/{cells}")

    def to_json(self) -> dict:
        out = dataclasses.asdict(self)
        out["lambda"] = out.pop("lam")
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "FitConfig":
        obj = dict(obj)
        if "lambda" in obj:
            obj["lam"] = obj.pop("lambda")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown FitConfig fields: {sorted(unknown)}")
        return cls(**obj)

    def replace(self, **kw) -> "FitConfig":
        return dataclasses.replace(self, **kw)


@dataclass
class ModelState:
    """Joint mixing array, column proportions and block parameters."""

    pi: np.ndarray
    rho: list[list[np.ndarray]]
    alpha: list[list[object]]
    schemas: list[ViewSchema]

    @property
    def K(self) -> tuple[int, ...]:
        return tuple(self.pi.shape)

    @property
    def L(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(len(r) for r in rs) for rs in self.rho)

    def copy(self) -> "ModelState":
        return ModelState(self.pi.copy(), [[r.copy() for r in rs] for rs in self.rho],
                          [[params_copy(a) for a in al] for al in self.alpha], list(self.schemas))


@dataclass
class Trace:
    loglik: np.ndarray
    pi: list[np.ndarray]
    rho: list[list[list[np.ndarray]]]
    alpha: list[list[list[object]]]
    n_alive: np.ndarray


@dataclass
class FitResult:
    model: ModelState
    partitions: PartitionState
    trace: Trace
    imputed: MultiViewDataset
    loglik: float
    alive: np.ndarray
    config: FitConfig = field(default_factory=FitConfig)

    @property
    def K(self):
        return self.model.K

    @property
    def L(self):
        return self.model.L


# ------------------------------------------------------------------ context

class _Context:
    """Per-dataset families and sufficient statistics."""

    def __init__(self, dataset: MultiViewDataset, variance_floor=DEFAULT_VARIANCE_FLOOR,
                 bos_inner_iters: int = 200):
        self.dataset = dataset
        self.families: list[list[Family]] = []
        self.stats = []
        for view in dataset.views:
            fams, sts = [], []
            for fs in view.feature_sets:
                fam = family_for(fs.ftype, variance_floor)
                if fs.ftype.kind == Kind.ORDINAL:
                    fam.inner_iters = bos_inner_iters
                fams.append(fam)
                sts.append(fam.prepare(fs))
            self.families.append(fams)
            self.stats.append(sts)

    @property
    def n(self):
        return self.dataset.n

    def sets(self, v):
        return zip(self.families[v], self.stats[v])

    def row_sides(self, col_labels, L):
        return [[fam.row_side(st, one_hot(c, l)) for (fam, st), c, l in zip(self.sets(v), cs, ls)]
                for v, (cs, ls) in enumerate(zip(col_labels, L))]

    def col_sides(self, row_labels, K):
        return [[fam.col_side(st, one_hot(row_labels[v], K[v])) for fam, st in self.sets(v)]
                for v in range(len(K))]

    def view_row_scores(self, v, rs_v, alpha_v) -> np.ndarray:
        """(n, K_v) log-likelihood of each row's view-v cells per row cluster."""
        out = 0.0
        for (fam, st), rs, a in zip(self.sets(v), rs_v, alpha_v):
            out = out + fam.row_scores(st, rs, a)
        return out


def _default_params(fam: Family, st, K: int, L: int):
    kind = fam.ftype.kind
    if kind == Kind.NOMINAL:
        m = fam.ftype.levels
        return MultinomialParams(np.full((K, L, m), 1.0 / m))
    if kind == Kind.ORDINAL:
        return BosParams(np.ones((K, L), dtype=int), np.full((K, L), 0.5), fam.ftype.levels)
    if kind == Kind.CONTINUOUS:
        x = st.arrays["x"][st.observed]
        mu = float(x.mean()) if x.size else 0.0
        var = float(x.var()) if x.size else 1.0
        return GaussianParams(np.full((K, L), mu), np.full((K, L), max(var, fam.variance_floor)))
    a = st.arrays
    tot = a["x"].sum()
    return PoissonParams(np.full((K, L), 1.0 / tot if tot > 0 else 0.0))


# ------------------------------------------------------------------ sampling

def _draw_from_logits(logp: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one index per row of ``logp`` (n, C); -inf entries are never picked."""
    mx = logp.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(mx)):
        bad = int(np.argmin(np.isfinite(mx[:, 0])))
        raise NumericalFailure(f"all label probabilities underflow for item {bad}")
    p = np.exp(logp - mx)
    cdf = np.cumsum(p, axis=1)
    u = rng.random(len(p)) * cdf[:, -1]
    idx = (cdf <= u[:, None]).sum(axis=1)
    # guard the u == total edge; never land on a zero-probability entry
    idx = np.minimum(idx, p.shape[1] - 1)
    bad = p[np.arange(len(p)), idx] == 0
    if bad.any():
        idx[bad] = np.argmax(p[bad], axis=1)
    return idx


def _normalise_logits(logp: np.ndarray) -> np.ndarray:
    mx = logp.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(mx)):
        raise NumericalFailure("all label probabilities underflow")
    p = np.exp(logp - mx)
    return p / p.sum(axis=1, keepdims=True)


def _joint_logits(ctx: _Context, model: ModelState, rs, alive=None) -> np.ndarray:
    K = model.K
    with np.errstate(divide="ignore"):
        logpi = np.log(model.pi if alive is None else np.where(alive, model.pi, 0.0))
    joint = np.broadcast_to(logpi, (ctx.n,) + K).copy()
    for v in range(len(K)):
        shape = [ctx.n] + [1] * len(K)
        shape[v + 1] = K[v]
        joint += ctx.view_row_scores(v, rs[v], model.alpha[v]).reshape(shape)
    return joint.reshape(ctx.n, -1)


def _split_joint(idx: np.ndarray, K) -> list[np.ndarray]:
    return [np.asarray(a, dtype=int) for a in np.unravel_index(idx, K)]


def row_probabilities(dataset: MultiViewDataset, model: ModelState, col_labels, *,
                      variance_floor=DEFAULT_VARIANCE_FLOOR) -> np.ndarray:
    """Normalized joint row-label probabilities, shape ``(n,) + K``."""
    ctx = _Context(dataset, variance_floor)
    rs = ctx.row_sides(col_labels, model.L)
    return _normalise_logits(_joint_logits(ctx, model, rs)).reshape((ctx.n,) + model.K)


def sample_row_partitions(dataset: MultiViewDataset, model: ModelState, col_labels,
                          rng: np.random.Generator) -> list[np.ndarray]:
    """Draw joint row labels given column labels; returns one label vector per view."""
    ctx = _Context(dataset)
    rs = ctx.row_sides(col_labels, model.L)
    return _split_joint(_draw_from_logits(_joint_logits(ctx, model, rs), rng), model.K)


def soft_threshold(freq: np.ndarray, lam: float) -> np.ndarray:
    """Normalized soft-threshold ``(a - lam)_+ / sum (a - lam)_+``."""
    freq = np.asarray(freq, dtype=float)
    if lam <= 0:
        return freq.copy()
    kept = np.maximum(freq - lam, 0.0)
    total = kept.sum()
    if total <= 0:
        raise PenaltyTooLarge("penalty too large: every joint cluster would be removed")
    return kept / total


def joint_frequencies(row_labels, K) -> np.ndarray:
    n = len(row_labels[0])
    flat = np.ravel_multi_index(tuple(row_labels), K)
    return np.bincount(flat, minlength=int(np.prod(K))).reshape(K) / n


def row_mstep(row_labels, lam: float, model: ModelState, dataset: MultiViewDataset, col_labels,
              *, ctx: _Context | None = None, cs=None):
    """Return ``(pi, alpha)`` after the row-wise M-step."""
    ctx = ctx or _Context(dataset)
    K = model.K
    pi = soft_threshold(joint_frequencies(row_labels, K), lam)
    cs = cs if cs is not None else ctx.col_sides(row_labels, K)
    alpha = [[fam.mstep(st, c, one_hot(w, l), prev)
              for (fam, st), c, w, l, prev in zip(ctx.sets(v), cs[v], col_labels[v], model.L[v], model.alpha[v])]
             for v in range(len(K))]
    return pi, alpha


def _col_logits(fam, st, cs, alpha, rho):
    with np.errstate(divide="ignore"):
        return fam.col_scores(st, cs, alpha) + np.log(rho)[None, :]


def column_probabilities(dataset: MultiViewDataset, model: ModelState, row_labels) -> list[list[np.ndarray]]:
    ctx = _Context(dataset)
    cs = ctx.col_sides(row_labels, model.K)
    return [[_normalise_logits(_col_logits(fam, st, c, a, r))
             for (fam, st), c, a, r in zip(ctx.sets(v), cs[v], model.alpha[v], model.rho[v])]
            for v in range(len(model.K))]


def sample_column_partitions(dataset: MultiViewDataset, model: ModelState, row_labels,
                             rng: np.random.Generator) -> list[list[np.ndarray]]:
    """Draw column labels per feature set given row labels."""
    ctx = _Context(dataset)
    cs = ctx.col_sides(row_labels, model.K)
    return [[_draw_from_logits(_col_logits(fam, st, c, a, r), rng)
             for (fam, st), c, a, r in zip(ctx.sets(v), cs[v], model.alpha[v], model.rho[v])]
            for v in range(len(model.K))]


def column_mstep(col_labels, row_labels, dataset: MultiViewDataset, model: ModelState,
                 *, ctx: _Context | None = None, cs=None):
    """Return ``(rho, alpha)`` after the column-wise M-step."""
    ctx = ctx or _Context(dataset)
    cs = cs if cs is not None else ctx.col_sides(row_labels, model.K)
    rho, alpha = [], []
    for v in range(len(model.K)):
        rv, av = [], []
        for (fam, st), c, w, l, prev in zip(ctx.sets(v), cs[v], col_labels[v], model.L[v], model.alpha[v]):
            rv.append(np.bincount(w, minlength=l) / len(w))
            av.append(fam.mstep(st, c, one_hot(w, l), prev))
        rho.append(rv)
        alpha.append(av)
    return rho, alpha


def resample_if_empty(labels: np.ndarray, n_clusters: int, fraction: float, rng: np.random.Generator,
                      iteration: int | None = None, resample_iters: int | None = None) -> np.ndarray:
    """Reassign a random ``fraction`` of items uniformly when a cluster is empty."""
    if iteration is not None and resample_iters is not None and iteration > resample_iters:
        return labels
    labels = np.asarray(labels, dtype=int)
    if np.bincount(labels, minlength=n_clusters).min() > 0:
        return labels
    out = labels.copy()
    count = max(1, int(math.floor(fraction * len(labels) + 1e-9)))
    chosen = rng.choice(len(labels), size=min(count, len(labels)), replace=False)
    out[chosen] = rng.integers(0, n_clusters, size=len(chosen))
    return out


def _draw_missing(ctx: _Context, model: ModelState, row_labels, col_labels, rng):
    draws = []
    for v in range(len(model.K)):
        dv = []
        for (fam, st), w, a in zip(ctx.sets(v), col_labels[v], model.alpha[v]):
            rows, cols = np.nonzero(~st.observed)
            if len(rows) == 0:
                dv.append(None)
                continue
            k, l = row_labels[v][rows], w[cols]
            dv.append(fam.draw(st, a, k, l, rows, cols, rng))
        draws.append(dv)
    return draws


def impute_missing(dataset: MultiViewDataset, model: ModelState, row_labels, col_labels,
                   rng: np.random.Generator) -> MultiViewDataset:
    """Copy of ``dataset`` with every missing cell drawn from its block distribution.

    Observed cells and the masks themselves are left untouched.
    """
    ctx = _Context(dataset)
    return _fill(dataset, _draw_missing(ctx, model, row_labels, col_labels, rng))


def _fill(dataset: MultiViewDataset, values) -> MultiViewDataset:
    views = []
    for view, vals in zip(dataset.views, values):
        sets = []
        for fs, val in zip(view.feature_sets, vals):
            data = fs.data.copy()
            if val is not None:
                data[~fs.observed] = val
            sets.append(FeatureSet(fs.ftype, data, fs.observed.copy()))
        views.append(View(sets, view.name))
    return MultiViewDataset(views)


class _ImputationAccumulator:
    def __init__(self, ctx: _Context):
        self.ctx = ctx
        self.store = []
        self.count = 0
        for v in range(len(ctx.families)):
            sv = []
            for fam, st in ctx.sets(v):
                miss = int((~st.observed).sum())
                if miss == 0:
                    sv.append(None)
                elif fam.ftype.categorical:
                    sv.append(np.zeros((miss, fam.ftype.levels)))
                else:
                    sv.append(np.zeros(miss))
            self.store.append(sv)

    def add(self, draws):
        self.count += 1
        for sv, dv in zip(self.store, draws):
            for s, (acc, d) in enumerate(zip(sv, dv)):
                if acc is None:
                    continue
                if acc.ndim == 2:
                    acc[np.arange(len(d)), np.asarray(d, dtype=int)] += 1
                else:
                    acc += d

    def result(self):
        out = []
        for v, sv in enumerate(self.store):
            ov = []
            for (fam, _), acc in zip(self.ctx.sets(v), sv):
                if acc is None:
                    ov.append(None)
                elif acc.ndim == 2:
                    ov.append(np.argmax(acc, axis=1).astype(float))
                elif fam.ftype.kind == Kind.COUNT:
                    ov.append(np.round(acc / self.count))
                else:
                    ov.append(acc / self.count)
            out.append(ov)
        return out


# ------------------------------------------------------------------ likelihood

def _cdll(ctx: _Context, model: ModelState, row_labels, col_labels, rs=None, alive=None) -> float:
    K = model.K
    pi = model.pi if alive is None else np.where(alive, model.pi, 0.0)
    with np.errstate(divide="ignore"):
        total = float(np.log(pi[tuple(row_labels)]).sum())
        for rv, cv in zip(model.rho, col_labels):
            for r, c in zip(rv, cv):
                total += float(np.log(r[c]).sum())
    if rs is None:
        rs = ctx.row_sides(col_labels, model.L)
    n = ctx.n
    for v in range(len(K)):
        total += float(ctx.view_row_scores(v, rs[v], model.alpha[v])[np.arange(n), row_labels[v]].sum())
    return total


def complete_data_log_likelihood(dataset: MultiViewDataset, model: ModelState, partitions: PartitionState,
                                 variance_floor=DEFAULT_VARIANCE_FLOOR) -> float:
    """``log p(x, z, w)`` over observed cells; ``-inf`` when a dead cell is occupied."""
    ctx = _Context(dataset, variance_floor)
    return _cdll(ctx, model, partitions.row_labels, partitions.col_labels)


# ------------------------------------------------------------------ driver

def _stream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, *keys])


_PH_INIT, _PH_ROW, _PH_ROW_RS, _PH_COL, _PH_COL_RS, _PH_IMP = range(6)


def _kmeans_rows(view_data: list[FeatureSet], k: int, seed: int) -> np.ndarray:
    from sklearn.cluster import KMeans

    x = np.hstack([np.where(fs.observed, fs.data, np.nan) for fs in view_data])
    col_mean = np.nanmean(np.where(np.isnan(x).all(0), 0.0, x), axis=0)
    x = np.where(np.isnan(x), col_mean, x)
    km = KMeans(n_clusters=k, init="k-means++", n_init=1, random_state=seed % (2 ** 32))
    return km.fit_predict(x).astype(int)


def initial_partitions(dataset: MultiViewDataset, K, L, seed: int) -> PartitionState:
    """Random labels; k-means++ rows for views made only of continuous sets."""
    rng = _stream(seed, 0, _PH_INIT)
    rows, cols = [], []
    for v, view in enumerate(dataset.views):
        if K[v] > 1 and all(fs.ftype.kind == Kind.CONTINUOUS for fs in view.feature_sets):
            rows.append(_kmeans_rows(view.feature_sets, K[v], seed + v))
        else:
            rows.append(rng.integers(0, K[v], size=dataset.n))
        cols.append([rng.integers(0, l, size=fs.d) for fs, l in zip(view.feature_sets, L[v])])
    return PartitionState(rows, cols, K, L)


def _check_dims(dataset: MultiViewDataset, K, L):
    if len(K) != dataset.n_views or len(L) != dataset.n_views:
        raise ValueError("K and L must have one entry per view")
    for v, view in enumerate(dataset.views):
        if len(L[v]) != len(view.feature_sets):
            raise ValueError(f"view {v}: L needs one entry per feature set")


def _fit_from_partitions(ctx, K, L, row_labels, col_labels, config) -> ModelState:
    schemas = ctx.dataset.schemas
    pi = joint_frequencies(row_labels, K)
    rho = [[np.bincount(c, minlength=l) / len(c) for c, l in zip(cs, ls)] for cs, ls in zip(col_labels, L)]
    cs = ctx.col_sides(row_labels, K)
    alpha = [[fam.mstep(st, c, one_hot(w, l), _default_params(fam, st, K[v], l))
              for (fam, st), c, w, l in zip(ctx.sets(v), cs[v], col_labels[v], L[v])]
             for v in range(len(K))]
    return ModelState(pi, rho, alpha, schemas)


def _aggregate(ctx, history: list[ModelState]) -> ModelState:
    pi = np.mean([h.pi for h in history], axis=0)
    pi = pi / pi.sum()
    V = len(history[0].rho)
    rho, alpha = [], []
    for v in range(V):
        rv, av = [], []
        for s, fam in enumerate(ctx.families[v]):
            r = np.mean([h.rho[v][s] for h in history], axis=0)
            rv.append(r / r.sum())
            av.append(fam.aggregate([h.alpha[v][s] for h in history]))
        rho.append(rv)
        alpha.append(av)
    return ModelState(pi, rho, alpha, history[0].schemas)


def _classify(ctx, model: ModelState, col_labels, alive):
    """One deterministic argmax sweep: rows given columns, then columns given rows."""
    rs = ctx.row_sides(col_labels, model.L)
    joint = _joint_logits(ctx, model, rs, alive)
    rows = _split_joint(np.argmax(joint, axis=1), model.K)
    cs = ctx.col_sides(rows, model.K)
    cols = []
    for v in range(len(model.K)):
        cv = []
        for (fam, st), c, a, r in zip(ctx.sets(v), cs[v], model.alpha[v], model.rho[v]):
            cv.append(np.argmax(_col_logits(fam, st, c, a, r), axis=1))
        cols.append(cv)
    return rows, cols


def _run_chain(ctx: _Context, K, L, config: FitConfig, init: PartitionState, seed: int) -> FitResult:
    row_labels = [r.copy() for r in init.row_labels]
    col_labels = [[c.copy() for c in cs] for cs in init.col_labels]
    V = len(K)
    model = _fit_from_partitions(ctx, K, L, row_labels, col_labels, config)
    alive = np.ones(K, dtype=bool)
    loglik = np.empty(config.total_iters)
    n_alive = np.empty(config.total_iters, dtype=int)
    trace_pi, trace_rho, trace_alpha = [], [], []
    history: list[ModelState] = []
    acc = _ImputationAccumulator(ctx)
    rs = ctx.row_sides(col_labels, L)

    for it in range(1, config.total_iters + 1):
        post = it > config.burn_in
        # step 1: joint row labels
        rng = _stream(seed, it, _PH_ROW)
        idx = _draw_from_logits(_joint_logits(ctx, model, rs, alive), rng)
        row_labels = _split_joint(idx, K)
        if it <= config.resample_iters:
            rng = _stream(seed, it, _PH_ROW_RS)
            row_labels = [resample_if_empty(r, k, config.resample_fraction, rng) for r, k in zip(row_labels, K)]
        # step 2: row M-step (penalty only after burn-in)
        freq = joint_frequencies(row_labels, K)
        if post and config.lam > 0:
            pi = soft_threshold(np.where(alive, freq, 0.0), config.lam)
            alive = pi > 0
        else:
            pi = freq
        cs = ctx.col_sides(row_labels, K)
        half = [[fam.mstep(st, c, one_hot(w, l), prev)
                 for (fam, st), c, w, l, prev in zip(ctx.sets(v), cs[v], col_labels[v], L[v], model.alpha[v])]
                for v in range(V)]
        model = ModelState(pi, model.rho, half, model.schemas)
        # step 3: column labels
        rng = _stream(seed, it, _PH_COL)
        new_cols = []
        for v in range(V):
            cv = []
            for (fam, st), c, a, r, l in zip(ctx.sets(v), cs[v], model.alpha[v], model.rho[v], L[v]):
                w = _draw_from_logits(_col_logits(fam, st, c, a, r), rng)
                if it <= config.resample_iters:
                    w = resample_if_empty(w, l, config.resample_fraction, _stream(seed, it, _PH_COL_RS, v, len(cv)))
                cv.append(w)
            new_cols.append(cv)
        col_labels = new_cols
        # step 4: column M-step
        rho, alpha = column_mstep(col_labels, row_labels, ctx.dataset, model, ctx=ctx, cs=cs)
        model = ModelState(pi, rho, alpha, model.schemas)
        # step 5: imputation (draws kept only after burn-in)
        if post:
            acc.add(_draw_missing(ctx, model, row_labels, col_labels, _stream(seed, it, _PH_IMP)))
            history.append(model)

        rs = ctx.row_sides(col_labels, L)
        ll = _cdll(ctx, model, row_labels, col_labels, rs, alive)
        if math.isnan(ll):
            raise NumericalFailure(f"complete-data log-likelihood is NaN at iteration {it}")
        loglik[it - 1] = ll
        n_alive[it - 1] = int(alive.sum())
        trace_pi.append(pi)
        trace_rho.append(rho)
        trace_alpha.append(alpha)

    agg = _aggregate(ctx, history)
    final_rows, final_cols = _classify(ctx, agg, col_labels, alive)
    parts = PartitionState(final_rows, final_cols, K, L)
    final_ll = _cdll(ctx, agg, final_rows, final_cols, alive=alive)
    imputed = _fill(ctx.dataset, acc.result()) if acc.count else ctx.dataset.copy()
    trace = Trace(loglik, trace_pi, trace_rho, trace_alpha, n_alive)
    return FitResult(agg, parts, trace, imputed, final_ll, alive, config)


def run_sem_gibbs(dataset: MultiViewDataset, K, L, config: FitConfig | None = None,
                  init: PartitionState | None = None) -> FitResult:
    """Fit the multi-view LBM with ``K[v]`` row and ``L[v][s]`` column clusters.

    Parameters
    ----------
    dataset : MultiViewDataset
    K : sequence of int
        Row clusters per view.
    L : sequence of sequence of int
        Column clusters per feature set.
    config : FitConfig, optional
    init : PartitionState, optional
        Starting labels. Without it, each view is seeded by the best of
        ``config.n_init`` short single-view chains from random starts
        (ranked by classification log-likelihood), and the joint chain
        starts from those labels.

    Returns
    -------
    FitResult
    """
    config = config or FitConfig()
    K = tuple(int(k) for k in K)
    L = tuple(tuple(int(l) for l in ls) for ls in L)
    _check_dims(dataset, K, L)
    config.check_penalty(K)
    ctx = _Context(dataset, config.variance_floor, config.bos_inner_iters)
    if init is None:
        init = multistart_partitions(dataset, K, L, config, ctx)
    elif init.K != K or init.L != L:
        raise ValueError("init partition sizes differ from K/L")
    return _run_chain(ctx, K, L, config, init, config.seed)


def column_profiles(fam: Family, st, row_labels: np.ndarray, K: int) -> np.ndarray:
    """(d, q) summary of each column under a row partition, used to seed k-means.

    Categorical sets give per-row-cluster level frequencies, the others
    per-row-cluster means (counts on a log scale, continuous standardized).
    """
    Z = one_hot(row_labels, K)
    cs = fam.col_side(st, Z)
    if fam.ftype.categorical:
        tot = cs.sum(-1, keepdims=True)
        prof = np.where(tot > 0, cs / np.maximum(tot, TINY), 1.0 / fam.ftype.levels)
        return prof.transpose(1, 0, 2).reshape(st.d, -1)
    cnt = Z.T @ st.observed.astype(float)
    means = (Z.T @ st.arrays["x"]) / np.maximum(cnt, 1.0)
    if fam.ftype.kind == Kind.COUNT:
        means = np.log1p(means)
    else:
        obs = st.arrays["x"][st.observed]
        means = (means - obs.mean()) / (obs.std() + 1e-12)
    return means.T


def kmeans_columns(ctx, row_labels, K, L, seed: int):
    """Column labels per feature set from k-means++ on column profiles."""
    from sklearn.cluster import KMeans

    if isinstance(ctx, MultiViewDataset):
        ctx = _Context(ctx)

    out = []
    for v in range(len(K)):
        cv = []
        for (fam, st), l in zip(ctx.sets(v), L[v]):
            prof = column_profiles(fam, st, row_labels[v], K[v])
            if l == 1 or l >= st.d:
                cv.append(np.arange(st.d) % l)
                continue
            km = KMeans(n_clusters=l, init="k-means++", n_init=4, random_state=seed % (2 ** 32))
            cv.append(km.fit_predict(prof).astype(int))
        out.append(cv)
    return out


def multistart_partitions(dataset: MultiViewDataset, K, L, config: FitConfig,
                          ctx: _Context | None = None) -> PartitionState:
    """Per-view best labels from short unpenalized chains.

    Each of the ``n_init`` random starts runs a short chain; its row labels
    then seed a second short chain whose column labels come from k-means++
    on column profiles. All candidates compete on classification
    log-likelihood.
    """
    burn = config.init_iters * 3 // 5
    short = config.replace(total_iters=config.init_iters, burn_in=burn, resample_iters=burn, lam=0.0)
    rows, cols = [], []
    for v in range(len(K)):
        sub = dataset.subset([v])
        sub_ctx = _Context(sub, config.variance_floor, config.bos_inner_iters) if ctx is None else _SubContext(ctx, v)
        Kv, Lv = (K[v],), (L[v],)
        best = None
        for r in range(config.n_init):
            seed = int(_stream(config.seed, 7, v, r).integers(2 ** 62))
            res = _run_chain(sub_ctx, Kv, Lv, short, initial_partitions(sub, Kv, Lv, seed), seed)
            reseeded = PartitionState(res.partitions.row_labels,
                                      kmeans_columns(sub_ctx, res.partitions.row_labels, Kv, Lv, seed), Kv, Lv)
            res2 = _run_chain(sub_ctx, Kv, Lv, short, reseeded, seed + 1)
            for cand in (res, res2):
                if best is None or cand.loglik > best.loglik:
                    best = cand
        rows.append(best.partitions.row_labels[0])
        cols.append(best.partitions.col_labels[0])
    return PartitionState(rows, cols, K, L)


class _SubContext(_Context):
    """View ``v`` of an existing context, reusing its statistics."""

    def __init__(self, ctx: _Context, v: int):
        self.dataset = ctx.dataset.subset([v])
        self.families = [ctx.families[v]]
        self.stats = [ctx.stats[v]]


def point_impute(dataset: MultiViewDataset, fit: FitResult, draws: int = 0, seed: int = 0) -> MultiViewDataset:
    """Fill missing cells from a fitted model.

    With ``draws == 0`` each cell gets its block's point value (mode for
    categorical sets, mean for continuous, rounded mean for counts).
    Otherwise ``draws`` samples are pooled the same way the sampler pools
    its post-burn-in draws.
    """
    ctx = _Context(dataset, fit.config.variance_floor)
    rows, cols = fit.partitions.row_labels, fit.partitions.col_labels
    if draws > 0:
        acc = _ImputationAccumulator(ctx)
        for t in range(draws):
            acc.add(_draw_missing(ctx, fit.model, rows, cols, _stream(seed, 11, t)))
        return _fill(dataset, acc.result())
    values = []
    for v in range(len(fit.model.K)):
        vals = []
        for (fam, st), w, a in zip(ctx.sets(v), cols[v], fit.model.alpha[v]):
            r, c = np.nonzero(~st.observed)
            if len(r) == 0:
                vals.append(None)
                continue
            val = np.asarray(fam.block_mean(a, rows[v][r], w[c], r, c, st), dtype=float)
            vals.append(np.round(val) if fam.ftype.kind == Kind.COUNT else val)
        values.append(vals)
    return _fill(dataset, values)
