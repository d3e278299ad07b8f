"""Command-line interface: simulate, fit, test, impute, eval.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Every run writes ``run_manifest.json`` into its output directory.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from . import __version__
from .core import (DataError, MultiViewDataset, MVLBMError, NumericalFailure, PenaltyTooLarge, load_dataset,
                   load_manifest_labels, save_dataset, validate_dataset, write_labels)
from .engine import FitConfig, point_impute, run_sem_gibbs
from .indeptest import permutation_test
from .metrics import clustering_scores, imputation_mae, parameter_mae
from .select import (SearchConfig, SearchLog, greedy_search_single_view, icl_terms, search_multi_view)
from .serialize import load_model, save_model, write_trace
from .synthgen import GeneratorSpec, generate_with_complete

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(MVLBMError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ------------------------------------------------------------------ helpers

def _parse_ints(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from exc
    if not vals or min(vals) < 1:
        raise UsageError(f"cluster counts must be positive integers: {text!r}")
    return vals


def parse_K_L(K_text: str, L_text: str, n_views: int):
    """``--K 3,3 --L "3,3,3,3;3,3,3,3"``; a single K or L group is reused for every view."""
    K = _parse_ints(K_text)
    groups = [_parse_ints(g) for g in L_text.split(";")]
    if len(K) == 1:
        K = K * n_views
    if len(groups) == 1:
        groups = groups * n_views
    if len(K) != n_views or len(groups) != n_views:
        raise UsageError(f"K/L describe {len(K)}/{len(groups)} views, dataset has {n_views}")
    return K, tuple(groups)


def _load_valid(manifest) -> MultiViewDataset:
    ds = load_dataset(manifest)
    problems = validate_dataset(ds)
    if problems:
        raise DataError("invalid dataset:\n  " + "\n  ".join(str(p) for p in problems))
    return ds


def _fit_config(args) -> FitConfig:
    obj = {}
    if args.config:
        try:
            obj = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    if args.lam is not None:
        obj["lambda"] = args.lam
    if args.iters is not None:
        obj["total_iters"] = args.iters
    if args.burn_in is not None:
        obj["burn_in"] = args.burn_in
    if args.seed is not None:
        obj["seed"] = args.seed
    try:
        return FitConfig.from_json(obj)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, PenaltyTooLarge):
            raise
        raise UsageError(str(exc)) from exc


def _write_partitions(fit, out: Path, prefix: str = "", view_indices=None) -> list[str]:
    """Label CSVs named by dataset view number (1-based)."""
    names = []
    idx = range(len(fit.partitions.row_labels)) if view_indices is None else view_indices
    for v, rows in enumerate(fit.partitions.row_labels):
        name = f"{prefix}rows_view{idx[v] + 1}.csv"
        write_labels(out / name, rows)
        names.append(name)
        for s, cols in enumerate(fit.partitions.col_labels[v]):
            name = f"{prefix}cols_view{idx[v] + 1}_set{s + 1}.csv"
            write_labels(out / name, cols)
            names.append(name)
    return names


def _save_imputed(dataset: MultiViewDataset, out: Path) -> Path:
    """Write filled data with every cell marked observed so imputed values reach the CSVs."""
    full = dataset.copy()
    for view in full.views:
        for fs in view.feature_sets:
            fs.observed = ~np.isnan(fs.data)
    return save_dataset(full, out)


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    return obj


# ------------------------------------------------------------------ simulate

def _simulate_one(spec: GeneratorSpec, out: Path) -> list[str]:
    masked, complete, rows, cols = generate_with_complete(spec)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(masked, out, rows, cols)
    written = ["manifest.json"]
    if spec.missing_fraction > 0:
        save_dataset(complete, out / "complete", rows, cols)
        written.append("complete/manifest.json")
    (out / "spec.json").write_text(json.dumps(spec.to_json(), indent=2) + "\n")
    written.append("spec.json")
    return [str(out / w) for w in written]


def cmd_simulate(args, out: Path) -> dict:
    if args.spec:
        try:
            obj = json.loads(Path(args.spec).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read spec {args.spec}: {exc}") from exc
    elif args.preset:
        obj = {"preset": args.preset}
    else:
        raise UsageError("give --spec FILE or --preset table1")
    for key, val in (("n", args.n), ("d", args.d), ("delta_dep", args.delta), ("missing_fraction", args.missing)):
        if val is not None:
            obj[key] = val
    try:
        spec = GeneratorSpec.from_json(obj)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"invalid spec: {exc}") from exc
    if args.d is not None and obj.get("preset") is None:
        raise UsageError("--d only applies to presets")
    base = spec.seed if args.seed is None else args.seed
    R = args.replicates
    if R < 1:
        raise UsageError("--replicates must be >= 1")
    specs = [spec.replace(seed=base + r) for r in range(R)]
    dirs = [out] if R == 1 else [out / f"rep{r + 1:03d}" for r in range(R)]
    written = Parallel(n_jobs=args.jobs)(delayed(_simulate_one)(s, d) for s, d in zip(specs, dirs))
    return {"seed": base, "inputs": [args.spec] if args.spec else [], "outputs": sum(written, [])}


# ------------------------------------------------------------------ fit

def _save_fit(fit, dataset, out: Path, prefix: str = "", view_indices=None) -> list[str]:
    terms = icl_terms(fit, dataset)
    extra = None if view_indices is None else {"view_indices": [int(v) + 1 for v in view_indices]}
    save_model(fit, out / f"{prefix}model.json", terms, extra)
    (out / f"{prefix}icl.json").write_text(json.dumps(terms, indent=2) + "\n")
    write_trace(fit, out / f"{prefix}trace.csv")
    names = [f"{prefix}model.json", f"{prefix}icl.json", f"{prefix}trace.csv"]
    names += _write_partitions(fit, out, prefix, view_indices)
    return [str(out / n) for n in names]


def cmd_fit(args, out: Path) -> dict:
    dataset = _load_valid(args.manifest)
    config = _fit_config(args)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    view_indices = None
    if args.views:
        view_indices = [v - 1 for v in args.views]
        if len(set(view_indices)) != len(view_indices) or not all(0 <= v < dataset.n_views for v in view_indices):
            raise UsageError("--views needs distinct view numbers from 1 to the number of views")
        dataset = dataset.subset(view_indices)
    if not args.search:
        if not (args.K and args.L):
            raise UsageError("give --K and --L, or --search")
        K, L = parse_K_L(args.K, args.L, dataset.n_views)
        config.check_penalty(K)
        fit = run_sem_gibbs(dataset, K, L, config)
        outputs += _save_fit(fit, dataset, out, view_indices=view_indices)
        _save_imputed(fit.imputed, out / "imputed")
        outputs.append(str(out / "imputed" / "manifest.json"))
        return {"seed": config.seed, "inputs": [args.manifest], "outputs": outputs,
                "config": config.to_json(), "K": K, "L": L}

    scfg = SearchConfig(fit=config, proposal_iters=args.proposal_iters,
                        proposal_burn_in=min(args.proposal_burn_in, args.proposal_iters - 1),
                        K_max=args.K_max, L_max=args.L_max, jobs=args.jobs)
    log = SearchLog()
    cards = []
    orig = list(range(dataset.n_views)) if view_indices is None else view_indices
    for v in range(dataset.n_views):
        vlog = SearchLog()
        card = greedy_search_single_view(dataset.subset([v]), scfg, log=vlog)
        for it, prop, icl, acc in vlog.rows:
            log.add(it, f"view{orig[v] + 1}:{prop}", icl, acc)
        vdir = out / "single" / f"view{orig[v] + 1}"
        vdir.mkdir(parents=True, exist_ok=True)
        outputs += _save_fit(card.fit, dataset.subset([v]), vdir, view_indices=[orig[v]])
        cards.append(card)

    retained = list(range(dataset.n_views))
    if not args.no_test and dataset.n_views > 1:
        rows, dependent = [], set()
        for a, b in itertools.combinations(range(dataset.n_views), 2):
            res = permutation_test(cards[a].fit, cards[b].fit, dataset, B=args.B, seed=config.seed, views=(a, b))
            rows.append([orig[a] + 1, orig[b] + 1, repr(res.log_lambda), repr(res.p_value)])
            if res.p_value < args.alpha:
                dependent |= {a, b}
        _write_rows(out / "independence.csv", ["view_a", "view_b", "statistic", "p_value"], rows)
        outputs.append(str(out / "independence.csv"))
        retained = sorted(dependent)

    imputed_views = [c.fit.imputed.views[0] for c in cards]
    summary = {"single_view": [c.label for c in cards], "retained_views": [orig[v] + 1 for v in retained]}
    if len(retained) >= 2:
        sub = dataset.subset(retained)
        final = search_multi_view(sub, [cards[v] for v in retained], scfg, log)
        outputs += _save_fit(final.fit, sub, out, view_indices=[orig[v] for v in retained])
        for i, v in enumerate(retained):
            imputed_views[v] = final.fit.imputed.views[i]
        summary["multi_view"] = final.label
    else:
        summary["multi_view"] = None
    _save_imputed(MultiViewDataset(imputed_views), out / "imputed")
    outputs.append(str(out / "imputed" / "manifest.json"))
    log.to_csv(out / "search_log.csv")
    outputs.append(str(out / "search_log.csv"))
    (out / "search_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    outputs.append(str(out / "search_summary.json"))
    return {"seed": config.seed, "inputs": [args.manifest], "outputs": outputs, "config": config.to_json(),
            "search": summary}


# ------------------------------------------------------------------ test

def _single_view_model(path):
    fit = load_model(path)
    if fit.model.pi.ndim != 1:
        raise DataError(f"{path}: the test needs single-view models")
    return fit


def cmd_test(args, out: Path) -> dict:
    dataset = _load_valid(args.manifest)
    seed = 0 if args.seed is None else args.seed
    for p in args.models:
        if not Path(p).is_file():
            raise DataError(f"model file not found: {p}")
    fits = [_single_view_model(p) for p in args.models]
    out.mkdir(parents=True, exist_ok=True)
    if args.pairs == "all":
        if len(fits) != dataset.n_views:
            raise UsageError("--pairs all needs one model per view, in view order")
        pairs = list(itertools.combinations(range(dataset.n_views), 2))
        fit_of = dict(enumerate(fits))
    else:
        if len(fits) != 2:
            raise UsageError("give exactly two --models (or --pairs all)")
        views = tuple(v - 1 for v in args.views)
        if len(views) != 2 or not all(0 <= v < dataset.n_views for v in views) or views[0] == views[1]:
            raise UsageError("--views needs two distinct view numbers")
        pairs = [views]
        fit_of = {views[0]: fits[0], views[1]: fits[1]}
    for v, f in fit_of.items():
        if f.partitions.row_labels[0].shape[0] != dataset.n:
            raise DataError(f"model for view {v + 1} was fitted on {f.partitions.row_labels[0].shape[0]} rows, "
                            f"dataset has {dataset.n}")
    reports, rows = [], []
    for a, b in pairs:
        res = permutation_test(fit_of[a], fit_of[b], dataset, B=args.B, seed=seed, views=(a, b))
        rep = {"view_a": a + 1, "view_b": b + 1, **res.to_json(args.replicates)}
        reports.append(rep)
        rows.append([a + 1, b + 1, repr(res.log_lambda), repr(res.p_value), res.B])
    report = reports[0] if len(reports) == 1 else {"pairs": reports}
    (out / "test_report.json").write_text(json.dumps(report, indent=2) + "\n")
    _write_rows(out / "pvalues.csv", ["view_a", "view_b", "statistic", "p_value", "B"], rows)
    return {"seed": seed, "inputs": [args.manifest, *args.models],
            "outputs": [str(out / "test_report.json"), str(out / "pvalues.csv")]}


# ------------------------------------------------------------------ impute

def _model_dataset(dataset, fit, doc_path):
    doc = json.loads(Path(doc_path).read_text())
    idx = doc.get("view_indices")
    if idx is not None:
        dataset = dataset.subset([v - 1 for v in idx])
    if dataset.n_views != len(fit.model.K):
        raise DataError("model and dataset have different numbers of views")
    for view, sch in zip(dataset.views, fit.model.schemas):
        if view.schema != sch:
            raise DataError("model schema does not match the dataset")
    if fit.partitions.row_labels[0].shape[0] != dataset.n:
        raise DataError("model and dataset have different numbers of rows")
    return dataset


def cmd_impute(args, out: Path) -> dict:
    dataset = _load_valid(args.manifest)
    fit = load_model(args.model)
    dataset = _model_dataset(dataset, fit, args.model)
    seed = 0 if args.seed is None else args.seed
    filled = point_impute(dataset, fit, args.draws, seed)
    path = _save_imputed(filled, out)
    return {"seed": seed, "inputs": [args.manifest, args.model], "outputs": [str(path)]}


# ------------------------------------------------------------------ eval

def cmd_eval(args, out: Path) -> dict:
    fit = load_model(args.model)
    truth = _load_valid(args.truth)
    truth = _model_dataset(truth, fit, args.model)
    doc = json.loads(Path(args.model).read_text())
    idx = [v - 1 for v in doc.get("view_indices", range(1, truth.n_views + 1))]
    rows_true, cols_true = load_manifest_labels(args.truth)
    metrics = []
    if rows_true is not None:
        rows_true = [rows_true[v] for v in idx]
        cols_true = None if cols_true is None else [cols_true[v] for v in idx]
        for r in rows_true:
            if r.shape[0] != truth.n:
                raise DataError("label files do not match the dataset rows")
        sc = clustering_scores(fit.partitions, rows_true, cols_true)
        for v, a in enumerate(sc["row"]):
            metrics.append(["row_ari", idx[v] + 1, "", "", a])
        for v, sets in enumerate(sc.get("col", [])):
            for s, a in enumerate(sets):
                metrics.append(["col_ari", idx[v] + 1, s + 1, "", a])
    if args.spec:
        try:
            spec = GeneratorSpec.from_json(json.loads(Path(args.spec).read_text()))
        except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
            raise DataError(f"cannot read spec {args.spec}: {exc}") from exc
        true_alpha = [[s.alpha for s in spec.views[v]] for v in idx]
        for v, sets in enumerate(parameter_mae(true_alpha, fit, truth)):
            for s, d in enumerate(sets):
                for name, val in d.items():
                    metrics.append(["param_mae", idx[v] + 1, s + 1, name, val])
    if args.complete:
        complete = _load_valid(args.complete).subset(idx)
        imputed = load_dataset(args.imputed).subset(idx) if args.imputed else point_impute(truth, fit)
        for ds in (complete, imputed):
            if [v.schema for v in ds.views] != [v.schema for v in truth.views] or ds.n != truth.n:
                raise DataError("complete/imputed data are misaligned with the evaluated data")
        for v, sets in enumerate(imputation_mae(complete, truth, imputed)):
            for s, val in enumerate(sets):
                metrics.append(["imputation_mae", idx[v] + 1, s + 1, "", val])
    if not metrics:
        raise UsageError("nothing to evaluate: the truth manifest has no labels and no --spec/--complete given")
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "metrics.csv", ["metric", "view", "set", "param", "value"],
                [m[:4] + [repr(float(m[4]))] for m in metrics])
    inputs = [args.model, args.truth] + [p for p in (args.spec, args.complete, args.imputed) if p]
    return {"seed": None, "inputs": inputs, "outputs": [str(out / "metrics.csv")]}


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mvlbm", description="Multi-view latent block model: co-clustering of mixed-type views.")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides config/spec seeds)")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers for replicates and search proposals")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("simulate", help="draw synthetic datasets")
    s.add_argument("--spec", help="generator spec JSON (fields of GeneratorSpec, or {\"preset\": \"table1\"})")
    s.add_argument("--preset", choices=["table1"])
    s.add_argument("--n", type=int)
    s.add_argument("--d", type=int, help="columns per feature set (presets only)")
    s.add_argument("--delta", type=float, help="dependence level between the two views' row clusters")
    s.add_argument("--missing", type=float, help="fraction of cells masked after generation")
    s.add_argument("--replicates", type=int, default=1)

    f = sub.add_parser("fit", help="fit a model with fixed sizes or search for them")
    f.add_argument("manifest")
    f.add_argument("--K", help="row clusters per view, e.g. 3,3")
    f.add_argument("--L", help="column clusters per set, views separated by ';', e.g. '3,3,3,3;3,3,3,3'")
    f.add_argument("--views", nargs="+", type=int, help="fit only these views (1-based)")
    f.add_argument("--search", action="store_true")
    f.add_argument("--no-test", action="store_true", help="skip the independence gate before the joint search")
    f.add_argument("--config", help="FitConfig JSON")
    f.add_argument("--lambda", dest="lam", type=float)
    f.add_argument("--iters", type=int)
    f.add_argument("--burn-in", type=int)
    f.add_argument("--B", type=int, default=200, help="permutations for the independence gate")
    f.add_argument("--alpha", type=float, default=0.05, help="significance level of the gate")
    f.add_argument("--proposal-iters", type=int, default=50)
    f.add_argument("--proposal-burn-in", type=int, default=30)
    f.add_argument("--K-max", type=int, default=8)
    f.add_argument("--L-max", type=int, default=8)

    t = sub.add_parser("test", help="permutation test of independent row clusterings")
    t.add_argument("manifest")
    t.add_argument("--models", nargs="+", required=True, help="single-view model JSON files")
    t.add_argument("--views", nargs=2, type=int, default=[1, 2])
    t.add_argument("--pairs", choices=["all"])
    t.add_argument("--B", type=int, default=200)
    t.add_argument("--replicates", action="store_true", help="include permutation statistics in the report")

    i = sub.add_parser("impute", help="fill missing cells from a fitted model")
    i.add_argument("manifest")
    i.add_argument("--model", required=True)
    i.add_argument("--draws", type=int, default=0, help="pool this many draws instead of block point values")

    e = sub.add_parser("eval", help="clustering, parameter and imputation metrics")
    e.add_argument("--model", required=True)
    e.add_argument("--truth", required=True, help="manifest with true labels (the data the model was fitted on)")
    e.add_argument("--spec", help="generator spec echo with the true parameters")
    e.add_argument("--complete", help="manifest of the data before masking")
    e.add_argument("--imputed", help="manifest of imputed data (default: block point values)")
    return p


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "test": cmd_test, "impute": cmd_impute, "eval": cmd_eval}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if args.jobs < 1:
        print("mvlbm: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    try:
        info = COMMANDS[args.command](args, out)
    except (UsageError, PenaltyTooLarge) as exc:
        print(f"mvlbm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"mvlbm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, FileNotFoundError, KeyError) as exc:
        print(f"mvlbm: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    manifest = {
        "command": args.command,
        "argv": list(sys.argv[1:] if argv is None else argv),
        "config": {k: v for k, v in vars(args).items()},
        "seed": info.pop("seed", args.seed),
        "inputs": info.pop("inputs", []),
        "outputs": info.pop("outputs", []),
        "started": started.isoformat(),
        "wall_clock_seconds": time.perf_counter() - t0,
        "version": __version__,
        **info,
    }
    out.mkdir(parents=True, exist_ok=True)
    (out / "run_manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2) + "\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
