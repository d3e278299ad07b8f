"""ICL-BIC and the model-space searches built on it."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .core import MultiViewDataset, PartitionState
from .dist import param_count
from .engine import FitConfig, FitResult, _Context, kmeans_columns, multistart_partitions, run_sem_gibbs


def icl_terms(fit: FitResult, dataset: MultiViewDataset) -> dict:
    """The four additive parts of the ICL-BIC and their sum.

    All cells count towards ``n * d``, whether observed or not.
    """
    n = dataset.n
    K = fit.model.K
    L = fit.model.L
    row_pen = (sum(K) - 1) / 2.0 * math.log(n)
    col_pen = 0.0
    block_pen = 0.0
    for v, view in enumerate(dataset.views):
        col_pen += (sum(L[v]) - 1) / 2.0 * math.log(view.d)
        for fs, l in zip(view.feature_sets, L[v]):
            block_pen += K[v] * l * param_count(fs.ftype) / 2.0 * math.log(n * fs.d)
    ll = float(fit.loglik)
    return {"loglik": ll, "row_penalty": row_pen, "col_penalty": col_pen, "block_penalty": block_pen,
            "icl": ll - row_pen - col_pen - block_pen}


def compute_icl(fit: FitResult, dataset: MultiViewDataset) -> float:
    return icl_terms(fit, dataset)["icl"]


@dataclass
class ModelCard:
    K: tuple[int, ...]
    L: tuple[tuple[int, ...], ...]
    icl: float
    fit: FitResult | None = None
    terms: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        """Compact descriptor, e.g. ``3,3|3,3,3,3|3,3,3,3``."""
        return ",".join(map(str, self.K)) + "|" + "|".join(",".join(map(str, ls)) for ls in self.L)


@dataclass
class SearchConfig:
    fit: FitConfig = field(default_factory=FitConfig)
    proposal_iters: int = 50
    proposal_burn_in: int = 30
    K_max: int = 8
    L_max: int = 8
    max_steps: int = 100
    refit_winner: bool = True
    jobs: int = 1

    def proposal_config(self, seed_offset: int = 0) -> FitConfig:
        burn = min(self.proposal_burn_in, self.fit.burn_in)
        return self.fit.replace(total_iters=self.proposal_iters, burn_in=burn,
                                resample_iters=min(self.fit.resample_iters, burn),
                                seed=self.fit.seed + seed_offset)


@dataclass
class SearchLog:
    rows: list = field(default_factory=list)

    def add(self, iteration: int, proposal: str, icl: float, accepted: bool):
        self.rows.append((iteration, proposal, icl, accepted))

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "proposal", "icl", "accepted"])
            for it, prop, icl, acc in self.rows:
                w.writerow([it, prop, repr(float(icl)), int(acc)])


def fit_card(dataset: MultiViewDataset, K, L, config: FitConfig, init: PartitionState | None = None) -> ModelCard:
    fit = run_sem_gibbs(dataset, K, L, config, init)
    terms = icl_terms(fit, dataset)
    return ModelCard(tuple(K), tuple(tuple(l) for l in L), terms["icl"], fit, terms)


# ------------------------------------------------------------------ proposals

def _stacked_rows(fit: FitResult, v: int, ctx: _Context) -> np.ndarray:
    K = fit.model.K[v]
    return np.hstack([fam.block_vector(a).reshape(K, -1) for fam, a in zip(ctx.families[v], fit.model.alpha[v])])


def _closest_pair(vectors: np.ndarray) -> tuple[int, int]:
    best, pair = math.inf, (0, 1)
    for a, b in itertools.combinations(range(len(vectors)), 2):
        dist = float(np.linalg.norm(vectors[a] - vectors[b]))
        if dist < best:
            best, pair = dist, (a, b)
    return pair


def _merge_labels(labels: np.ndarray, a: int, b: int) -> np.ndarray:
    out = np.where(labels == b, a, labels)
    return np.where(out > b, out - 1, out)


def split_rows(parts: PartitionState, v: int) -> PartitionState:
    """Add an empty row cluster to view ``v``; the resampling policy seeds it."""
    K = list(parts.K)
    K[v] += 1
    return PartitionState([r.copy() for r in parts.row_labels], parts.copy().col_labels, K, parts.L)


def split_cols(parts: PartitionState, v: int, s: int) -> PartitionState:
    L = [list(ls) for ls in parts.L]
    L[v][s] += 1
    return PartitionState([r.copy() for r in parts.row_labels], parts.copy().col_labels, parts.K, L)


def merge_rows(fit: FitResult, v: int, ctx: _Context) -> PartitionState:
    """Join the two row clusters of view ``v`` whose stacked parameters are closest."""
    parts = fit.partitions
    a, b = _closest_pair(_stacked_rows(fit, v, ctx))
    rows = [r.copy() for r in parts.row_labels]
    rows[v] = _merge_labels(rows[v], a, b)
    K = list(parts.K)
    K[v] -= 1
    return PartitionState(rows, parts.copy().col_labels, K, parts.L)


def merge_cols(fit: FitResult, v: int, s: int, ctx: _Context) -> PartitionState:
    parts = fit.partitions
    fam = ctx.families[v][s]
    bv = fam.block_vector(fit.model.alpha[v][s])  # (K, L, q)
    vec = bv.transpose(1, 0, 2).reshape(bv.shape[1], -1)
    a, b = _closest_pair(vec)
    cols = parts.copy().col_labels
    cols[v][s] = _merge_labels(cols[v][s], a, b)
    L = [list(ls) for ls in parts.L]
    L[v][s] -= 1
    return PartitionState(parts.row_labels, cols, parts.K, L)


def neighbours(card: ModelCard, dataset: MultiViewDataset, cfg: SearchConfig,
               views=None) -> list[tuple[str, PartitionState]]:
    """Row proposals (K_v + 1, K_v - 1) for every view, then column proposals per set."""
    fit = card.fit
    ctx = _Context(dataset)
    views = range(len(card.K)) if views is None else views
    props = []
    for v in views:
        if card.K[v] < cfg.K_max:
            props.append((f"K{v + 1}+1", split_rows(fit.partitions, v)))
        if card.K[v] > 1:
            props.append((f"K{v + 1}-1", merge_rows(fit, v, ctx)))
    for v in views:
        for s, l in enumerate(card.L[v]):
            d = dataset.views[v].feature_sets[s].d
            if l < min(cfg.L_max, d):
                props.append((f"L{v + 1}.{s + 1}+1", split_cols(fit.partitions, v, s)))
            if l > 1:
                props.append((f"L{v + 1}.{s + 1}-1", merge_cols(fit, v, s, ctx)))
    return props


def _improve(dataset, start: ModelCard, cfg: SearchConfig, log: SearchLog | None) -> ModelCard:
    incumbent = start
    for step in range(1, cfg.max_steps + 1):
        props = neighbours(incumbent, dataset, cfg)
        pcfg = cfg.proposal_config(step)
        cards = Parallel(n_jobs=cfg.jobs)(
            delayed(fit_card)(dataset, p.K, p.L, pcfg, p) for _, p in props)
        best_i = int(np.argmax([c.icl for c in cards])) if cards else -1
        for i, ((name, _), c) in enumerate(zip(props, cards)):
            if log is not None:
                log.add(step, f"{name}:{c.label}", c.icl, False)
        if best_i < 0 or not cards[best_i].icl > incumbent.icl:
            break
        winner = cards[best_i]
        if cfg.refit_winner:
            winner = fit_card(dataset, winner.K, winner.L, cfg.fit, winner.fit.partitions)
        if not winner.icl > incumbent.icl:
            break
        if log is not None:
            log.add(step, f"accept:{winner.label}", winner.icl, True)
        incumbent = winner
    return incumbent


def greedy_search_single_view(dataset: MultiViewDataset, cfg: SearchConfig | None = None,
                              start: tuple | None = None, log: SearchLog | None = None) -> ModelCard:
    """Hill-climb over ``(K, L_1..L_S)`` one coordinate at a time on a single view.

    ``dataset`` must hold exactly one view; ``start`` defaults to all ones.
    """
    cfg = cfg or SearchConfig()
    if dataset.n_views != 1:
        raise ValueError("single-view search needs a one-view dataset")
    S = len(dataset.views[0].feature_sets)
    K, L = ((1,), ((1,) * S,)) if start is None else start
    card = fit_card(dataset, K, L, cfg.fit)
    if log is not None:
        log.add(0, f"start:{card.label}", card.icl, True)
    return _improve(dataset, card, cfg, log)


def search_multi_view(dataset: MultiViewDataset, initial_cards: list[ModelCard], cfg: SearchConfig | None = None,
                      log: SearchLog | None = None) -> ModelCard:
    """Joint search started from per-view single-view results."""
    cfg = cfg or SearchConfig()
    if len(initial_cards) != dataset.n_views:
        raise ValueError("need one initial card per view")
    K = tuple(c.K[0] for c in initial_cards)
    L = tuple(c.L[0] for c in initial_cards)
    init = PartitionState([c.fit.partitions.row_labels[0] for c in initial_cards],
                          [c.fit.partitions.col_labels[0] for c in initial_cards], K, L)
    card = fit_card(dataset, K, L, cfg.fit, init)
    if log is not None:
        log.add(0, f"start:{card.label}", card.icl, True)
    return _improve(dataset, card, cfg, log)


def exhaustive_search(dataset: MultiViewDataset, K_values=(2, 3, 4), L_values=(2, 3, 4),
                      config: FitConfig | None = None, jobs: int = 1, log: SearchLog | None = None):
    """Fit every tuple with K and each set's L tied across views.

    Row labels are seeded once per K by the multi-start routine; each
    tuple then seeds its columns by k-means++ on column profiles and runs
    one chain. Returns the best card and the list of all cards.
    """
    config = config or FitConfig()
    V = dataset.n_views
    S = len(dataset.views[0].feature_sets)
    if any(len(v.feature_sets) != S for v in dataset.views):
        raise ValueError("tied search needs the same number of feature sets in every view")
    ctx = _Context(dataset, config.variance_floor, config.bos_inner_iters)
    mid = sorted(L_values)[len(L_values) // 2]
    cards = []
    for k in K_values:
        K = (k,) * V
        rows = multistart_partitions(dataset, K, ((mid,) * S,) * V, config, ctx).row_labels
        inits = []
        for ls in itertools.product(L_values, repeat=S):
            L = (tuple(ls),) * V
            inits.append(PartitionState(rows, kmeans_columns(ctx, rows, K, L, config.seed), K, L))
        cards += Parallel(n_jobs=jobs)(delayed(fit_card)(dataset, p.K, p.L, config, p) for p in inits)
    if log is not None:
        for c in cards:
            log.add(0, c.label, c.icl, False)
    best = max(cards, key=lambda c: c.icl)
    return best, cards
