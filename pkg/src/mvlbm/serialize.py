"""Model JSON documents and trace CSV output.

A model document carries everything needed to rebuild a fit for
density evaluation, imputation and scoring: schema, cluster counts,
parameters, final labels, the run configuration and a trace summary.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .core import DataError, FeatureType, Kind, PartitionState, ViewSchema
from .dist import BosParams, params_from_json, params_to_json
from .engine import FitConfig, FitResult, ModelState, Trace

FORMAT = "mvlbm-model"
VERSION = 1


def model_to_json(fit: FitResult, icl: dict | None = None) -> dict:
    m = fit.model
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "schema": [[{**ft.to_json(), "d": d} for ft, d in sch.feature_sets] for sch in m.schemas],
        "K": list(m.K),
        "L": [list(ls) for ls in m.L],
        "pi": {"shape": list(m.pi.shape), "values": m.pi.ravel().tolist()},
        "alive": fit.alive.ravel().astype(int).tolist(),
        "rho": [[r.tolist() for r in rs] for rs in m.rho],
        "alpha": [[params_to_json(a) for a in al] for al in m.alpha],
        "partitions": {
            "rows": [r.tolist() for r in fit.partitions.row_labels],
            "cols": [[c.tolist() for c in cs] for cs in fit.partitions.col_labels],
        },
        "loglik": fit.loglik,
        "config": fit.config.to_json(),
        "trace": {
            "iterations": int(len(fit.trace.loglik)),
            "loglik_first": float(fit.trace.loglik[0]) if len(fit.trace.loglik) else None,
            "loglik_last": float(fit.trace.loglik[-1]) if len(fit.trace.loglik) else None,
            "loglik_max": float(np.max(fit.trace.loglik)) if len(fit.trace.loglik) else None,
            "alive_cells_final": int(fit.trace.n_alive[-1]) if len(fit.trace.n_alive) else None,
        },
    }
    if icl is not None:
        doc["icl"] = icl
    return doc


def model_from_json(doc: dict) -> FitResult:
    """Rebuild a :class:`FitResult` (without per-iteration history)."""
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise DataError("not a model document")
    try:
        return _model_from_json(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed model document: {exc}") from exc


def _model_from_json(doc: dict) -> FitResult:
    schemas = [ViewSchema(tuple((FeatureType.from_json(f), int(f["d"])) for f in sets)) for sets in doc["schema"]]
    pi = np.asarray(doc["pi"]["values"], dtype=float).reshape(doc["pi"]["shape"])
    alpha = []
    for sch, al in zip(schemas, doc["alpha"]):
        row = []
        for (ft, _), a in zip(sch.feature_sets, al):
            p = params_from_json(a)
            if ft.kind == Kind.ORDINAL:
                p = BosParams(p.mu, p.beta, ft.levels)
            row.append(p)
        alpha.append(row)
    rho = [[np.asarray(r, dtype=float) for r in rs] for rs in doc["rho"]]
    model = ModelState(pi, rho, alpha, schemas)
    parts = PartitionState(doc["partitions"]["rows"], doc["partitions"]["cols"], model.K, model.L)
    alive = np.asarray(doc.get("alive", [1] * pi.size), dtype=bool).reshape(pi.shape)
    trace = Trace(np.array([]), [], [], [], np.array([], dtype=int))
    return FitResult(model, parts, trace, None, float(doc.get("loglik", np.nan)), alive,
                     FitConfig.from_json(doc.get("config", {})))


def save_model(fit: FitResult, path, icl: dict | None = None, extra: dict | None = None) -> None:
    doc = model_to_json(fit, icl)
    doc.update(extra or {})
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_model(path) -> FitResult:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    return model_from_json(doc)


def write_trace(fit: FitResult, path) -> None:
    """One row per iteration: log-likelihood, alive joint cells and flattened pi."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        size = fit.model.pi.size
        w.writerow(["iteration", "loglik", "alive_cells"] + [f"pi_{i}" for i in range(size)])
        for it, (ll, na, pi) in enumerate(zip(fit.trace.loglik, fit.trace.n_alive, fit.trace.pi), start=1):
            w.writerow([it, repr(float(ll)), int(na)] + [repr(float(x)) for x in np.ravel(pi)])
