"""Ground-truth data generator with controllable between-view dependence."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .core import FeatureSet, FeatureType, Kind, MultiViewDataset, View
from .dist import (BosParams, GaussianParams, MultinomialParams, PoissonParams, bos_simulate,
                   params_from_json, params_to_json)


def make_pi(K: int, delta_dep: float) -> np.ndarray:
    """Two-view joint mixing matrix ``(1-d)/K^2 11' + d/K I``."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if not 0.0 <= delta_dep <= 1.0:
        raise ValueError("delta_dep must lie in [0, 1]")
    return (1.0 - delta_dep) / K ** 2 * np.ones((K, K)) + delta_dep / K * np.eye(K)


@dataclass
class SetSpec:
    """One feature set: its type, width, column proportions and block table.

    Count blocks hold the cell rate directly in ``PoissonParams.delta``.
    """

    ftype: FeatureType
    d: int
    rho: np.ndarray
    alpha: object

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)


@dataclass
class GeneratorSpec:
    n: int
    K: int
    views: list[list[SetSpec]]
    delta_dep: float = 0.0
    missing_fraction: float = 0.0
    seed: int = 0
    pi: np.ndarray | None = None  # overrides make_pi when given (any V)

    def __post_init__(self):
        if not 0.0 <= self.delta_dep <= 1.0:
            raise ValueError("delta_dep must lie in [0, 1]")
        if not 0.0 <= self.missing_fraction < 1.0:
            raise ValueError("missing_fraction must lie in [0, 1)")
        for sets in self.views:
            for s in sets:
                if abs(s.rho.sum() - 1) > 1e-10 or (s.rho < 0).any():
                    raise ValueError("rho must lie on the simplex")
        if self.pi is None and len(self.views) != 2:
            raise ValueError("give an explicit pi when V != 2")

    @property
    def V(self) -> int:
        return len(self.views)

    def joint_pi(self) -> np.ndarray:
        if self.pi is not None:
            return np.asarray(self.pi, dtype=float)
        return make_pi(self.K, self.delta_dep)

    def to_json(self) -> dict:
        return {
            "n": self.n, "K": self.K, "delta_dep": self.delta_dep,
            "missing_fraction": self.missing_fraction, "seed": self.seed,
            "pi": None if self.pi is None else np.asarray(self.pi).tolist(),
            "views": [[{**s.ftype.to_json(), "d": s.d, "rho": s.rho.tolist(), "alpha": params_to_json(s.alpha)}
                       for s in sets] for sets in self.views],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GeneratorSpec":
        if obj.get("preset") == "table1":
            spec = table1_spec(obj.get("n", 300), obj.get("d", 60), obj.get("delta_dep", 0.0),
                               obj.get("missing_fraction", 0.0), obj.get("seed", 0))
            return spec
        views = []
        for sets in obj["views"]:
            vs = []
            for s in sets:
                ft = FeatureType.from_json(s)
                alpha = params_from_json(s["alpha"])
                if ft.kind == Kind.ORDINAL:
                    alpha = BosParams(alpha.mu, alpha.beta, ft.levels)
                vs.append(SetSpec(ft, int(s["d"]), s["rho"], alpha))
            views.append(vs)
        pi = obj.get("pi")
        return cls(int(obj["n"]), int(obj["K"]), views, float(obj.get("delta_dep", 0.0)),
                   float(obj.get("missing_fraction", 0.0)), int(obj.get("seed", 0)),
                   None if pi is None else np.asarray(pi, dtype=float))

    def replace(self, **kw) -> "GeneratorSpec":
        return dataclasses.replace(self, **kw)


# block tables indexed [row cluster, column cluster]
TABLE1_NOMINAL = np.array([
    [[.05, .05, .8, .05, .05], [.1, .25, .3, .3, .05], [.1, .2, .4, .2, .1]],
    [[.05, .1, .7, .1, .05], [.8, .05, .05, .05, .05], [.4, .05, .1, .05, .4]],
    [[.2, .5, .2, .05, .05], [.8, .05, .05, .05, .05], [.05, .8, .05, .05, .05]],
])
TABLE1_CONT_MU = np.array([[100, 0.5, -90], [10, -15, -95], [-20, -30, 500]], dtype=float)
TABLE1_CONT_SD = np.array([[1, 5, 5], [4, 1, 5], [1, 3, 4]], dtype=float)
TABLE1_ORD_MU = np.array([[3, 1, 3], [2, 3, 2], [2, 1, 2]])
TABLE1_ORD_BETA = np.array([[.4, .2, .7], [.1, .5, .8], [.5, .8, .2]])
TABLE1_COUNT = np.array([[8.7, 1.95, 8.16], [1.33, 1.95, 25], [7.27, 7.14, 2.76]])


def table1_sets(d: int = 60) -> list[SetSpec]:
    rho = np.full(3, 1 / 3)
    return [
        SetSpec(FeatureType.nominal(5), d, rho, MultinomialParams(TABLE1_NOMINAL)),
        SetSpec(FeatureType.continuous(), d, rho, GaussianParams(TABLE1_CONT_MU, TABLE1_CONT_SD ** 2)),
        SetSpec(FeatureType.ordinal(3), d, rho, BosParams(TABLE1_ORD_MU, TABLE1_ORD_BETA, 3)),
        SetSpec(FeatureType.count(), d, rho, PoissonParams(TABLE1_COUNT)),
    ]


def table1_spec(n: int = 300, d: int = 60, delta_dep: float = 0.0, missing_fraction: float = 0.0,
                seed: int = 0) -> GeneratorSpec:
    """Two views, four feature sets each (nominal, continuous, ordinal, count), K = L = 3."""
    return GeneratorSpec(n, 3, [table1_sets(d), table1_sets(d)], delta_dep, missing_fraction, seed)


def _draw_set(s: SetSpec, rows: np.ndarray, cols: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    k = rows[:, None]
    l = cols[None, :]
    shape = (len(rows), len(cols))
    a = s.alpha
    kind = s.ftype.kind
    if kind == Kind.NOMINAL:
        p = a.p[k, l]
        cdf = np.cumsum(p, axis=-1)
        u = rng.random(shape) * cdf[..., -1]
        return np.minimum((cdf <= u[..., None]).sum(-1), s.ftype.levels - 1).astype(float)
    if kind == Kind.ORDINAL:
        mu = np.broadcast_to(a.mu[k, l], shape)
        return (bos_simulate(mu, a.beta[k, l], s.ftype.levels, rng) - 1).astype(float)
    if kind == Kind.CONTINUOUS:
        return rng.normal(a.mu[k, l], np.sqrt(a.sigma2[k, l]), size=shape)
    return rng.poisson(np.broadcast_to(a.delta[k, l], shape)).astype(float)


def generate(spec: GeneratorSpec):
    """Draw a dataset with its true labels.

    Returns
    -------
    dataset : MultiViewDataset
    row_labels : list of int arrays, one per view (0-based)
    col_labels : list of lists of int arrays, one per feature set
    """
    rng = np.random.default_rng(spec.seed)
    pi = spec.joint_pi()
    flat = rng.choice(pi.size, size=spec.n, p=pi.ravel() / pi.sum())
    row_labels = [np.asarray(a, dtype=int) for a in np.unravel_index(flat, pi.shape)]
    views, col_labels = [], []
    for v, sets in enumerate(spec.views):
        fsets, cl = [], []
        for s in sets:
            cols = rng.choice(len(s.rho), size=s.d, p=s.rho)
            fsets.append(FeatureSet(s.ftype, _draw_set(s, row_labels[v], cols, rng)))
            cl.append(cols)
        views.append(View(fsets, f"view{v + 1}"))
        col_labels.append(cl)
    dataset = MultiViewDataset(views)
    if spec.missing_fraction > 0:
        dataset = mask_missing(dataset, spec.missing_fraction, np.random.default_rng([spec.seed, 1]))
    return dataset, row_labels, col_labels


def generate_with_complete(spec: GeneratorSpec):
    """Like :func:`generate` but also returns the data before masking.

    The mask has its own random stream, so the complete data equal the
    output of ``generate`` at ``missing_fraction=0``.
    """
    complete, rows, cols = generate(spec.replace(missing_fraction=0.0))
    masked = complete
    if spec.missing_fraction > 0:
        masked = mask_missing(complete, spec.missing_fraction, np.random.default_rng([spec.seed, 1]))
    return masked, complete, rows, cols


def mask_missing(dataset: MultiViewDataset, fraction: float, rng: np.random.Generator) -> MultiViewDataset:
    """Mask exactly ``floor(fraction * total cells)`` cells, uniformly across all views."""
    if not 0.0 <= fraction < 1.0:
        raise ValueError("fraction must lie in [0, 1)")
    out = dataset.copy()
    sets = [fs for v in out.views for fs in v.feature_sets]
    sizes = np.array([fs.data.size for fs in sets])
    total = int(sizes.sum())
    count = int(np.floor(fraction * total + 1e-9))
    if count == 0:
        return out
    chosen = rng.choice(total, size=count, replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    for s, fs in enumerate(sets):
        local = chosen[(chosen >= offsets[s]) & (chosen < offsets[s + 1])] - offsets[s]
        mask = fs.observed.ravel().copy()
        mask[local] = False
        fs.observed = mask.reshape(fs.data.shape)
        fs.data = np.where(fs.observed, fs.data, np.nan)
    return out
