"""Data model shared by every other module.

Nominal and ordinal levels are coded ``1..m`` in files and in the scalar
distribution API, and ``0..m-1`` inside :class:`FeatureSet` arrays.
Missing cells are carried by a boolean ``observed`` mask; whatever value
sits under a ``False`` mask entry is ignored by every likelihood.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.metrics import adjusted_rand_score


class MVLBMError(Exception):
    """Base class for errors raised by the package."""


class DataError(MVLBMError, ValueError):
    """Malformed or inconsistent dataset."""


class NumericalFailure(MVLBMError, FloatingPointError):
    """A likelihood computation underflowed or produced an invalid value."""


class PenaltyTooLarge(MVLBMError, ValueError):
    """The sparsity penalty would remove every joint cluster."""


class Kind(str, Enum):
    NOMINAL = "nominal"
    ORDINAL = "ordinal"
    CONTINUOUS = "continuous"
    COUNT = "count"


@dataclass(frozen=True)
class FeatureType:
    kind: Kind
    levels: int | None = None

    def __post_init__(self):
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind in (Kind.NOMINAL, Kind.ORDINAL):
            if self.levels is None or int(self.levels) < 2:
                raise ValueError(f"{kind.value} feature needs levels >= 2, got {self.levels}")
            object.__setattr__(self, "levels", int(self.levels))
        elif self.levels is not None:
            raise ValueError(f"{kind.value} feature takes no levels")

    @classmethod
    def nominal(cls, m: int) -> "FeatureType":
        return cls(Kind.NOMINAL, m)

    @classmethod
    def ordinal(cls, m: int) -> "FeatureType":
        return cls(Kind.ORDINAL, m)

    @classmethod
    def continuous(cls) -> "FeatureType":
        return cls(Kind.CONTINUOUS)

    @classmethod
    def count(cls) -> "FeatureType":
        return cls(Kind.COUNT)

    @property
    def categorical(self) -> bool:
        return self.kind in (Kind.NOMINAL, Kind.ORDINAL)

    def to_json(self) -> dict:
        out = {"type": self.kind.value}
        if self.levels is not None:
            out["levels"] = self.levels
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "FeatureType":
        return cls(Kind(obj["type"]), obj.get("levels"))


@dataclass(frozen=True)
class ViewSchema:
    feature_sets: tuple[tuple[FeatureType, int], ...]

    def __post_init__(self):
        if len(self.feature_sets) == 0:
            raise ValueError("a view needs at least one feature set")
        for _, d in self.feature_sets:
            if d < 1:
                raise ValueError("feature set column count must be >= 1")

    @property
    def d(self) -> int:
        return sum(d for _, d in self.feature_sets)

    @property
    def types(self) -> list[FeatureType]:
        return [t for t, _ in self.feature_sets]


@dataclass
class FeatureSet:
    """One typed block of columns of a view.

    ``data`` holds internal codes for categorical sets (``0..m-1``).
    """

    ftype: FeatureType
    data: np.ndarray
    observed: np.ndarray | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2:
            raise DataError("feature set data must be a 2-D array")
        if self.observed is None:
            self.observed = ~np.isnan(self.data)
        else:
            self.observed = np.asarray(self.observed, dtype=bool)
            if self.observed.shape != self.data.shape:
                raise DataError("observed mask shape differs from data shape")

    @classmethod
    def from_external(cls, ftype: FeatureType, values, observed=None) -> "FeatureSet":
        """Build from file-level values (levels ``1..m``, NaN = missing)."""
        values = np.asarray(values, dtype=float)
        if observed is None:
            observed = ~np.isnan(values)
        data = values.copy()
        if ftype.categorical:
            data = data - 1.0
        return cls(ftype, data, observed)

    def to_external(self) -> np.ndarray:
        """Values in file coding with NaN at missing cells."""
        out = self.data.astype(float).copy()
        if self.ftype.categorical:
            out += 1.0
        out[~self.observed] = np.nan
        return out

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def copy(self) -> "FeatureSet":
        return FeatureSet(self.ftype, self.data.copy(), self.observed.copy())


@dataclass
class View:
    feature_sets: list[FeatureSet]
    name: str = ""

    @property
    def schema(self) -> ViewSchema:
        return ViewSchema(tuple((fs.ftype, fs.d) for fs in self.feature_sets))

    @property
    def n(self) -> int:
        return self.feature_sets[0].n

    @property
    def d(self) -> int:
        return sum(fs.d for fs in self.feature_sets)

    def copy(self) -> "View":
        return View([fs.copy() for fs in self.feature_sets], self.name)


@dataclass
class MultiViewDataset:
    views: list[View]

    @property
    def n(self) -> int:
        return self.views[0].n

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def schemas(self) -> list[ViewSchema]:
        return [v.schema for v in self.views]

    def subset(self, view_indices: Sequence[int]) -> "MultiViewDataset":
        return MultiViewDataset([self.views[v] for v in view_indices])

    def permute_rows(self, order: np.ndarray) -> "MultiViewDataset":
        return MultiViewDataset([
            View([FeatureSet(fs.ftype, fs.data[order], fs.observed[order]) for fs in v.feature_sets], v.name)
            for v in self.views
        ])

    def copy(self) -> "MultiViewDataset":
        return MultiViewDataset([v.copy() for v in self.views])

    @property
    def n_missing(self) -> int:
        return int(sum((~fs.observed).sum() for v in self.views for fs in v.feature_sets))


@dataclass(frozen=True)
class Violation:
    view: int
    feature_set: int | None
    cell: tuple[int, int] | None
    message: str

    def __str__(self):
        where = f"view {self.view}"
        if self.feature_set is not None:
            where += f", set {self.feature_set}"
        if self.cell is not None:
            where += f", cell {self.cell}"
        return f"{where}: {self.message}"


def validate_dataset(dataset: MultiViewDataset) -> list[Violation]:
    """Return every schema violation found; an empty list means valid.

    Only observed cells are inspected. At most one violation per
    (view, set, rule) is reported, naming the first offending cell.
    """
    report: list[Violation] = []
    if not dataset.views:
        return [Violation(0, None, None, "dataset has no views")]
    n = dataset.views[0].feature_sets[0].n if dataset.views[0].feature_sets else 0
    for v, view in enumerate(dataset.views):
        if not view.feature_sets:
            report.append(Violation(v, None, None, "view has no feature sets"))
            continue
        for s, fs in enumerate(view.feature_sets):
            if fs.n != n:
                report.append(Violation(v, s, None, f"row count mismatch: {fs.n} rows, expected {n}"))
            x = fs.data
            obs = fs.observed
            kind = fs.ftype.kind

            def first(bad, msg):
                idx = np.argwhere(bad & obs)
                if len(idx):
                    report.append(Violation(v, s, tuple(int(t) for t in idx[0]), msg))

            nonfinite = ~np.isfinite(x)
            if kind == Kind.CONTINUOUS:
                first(nonfinite, "non-finite continuous value")
                continue
            first(nonfinite, f"non-finite {kind.value} value")
            xs = np.where(nonfinite, 0.0, x)
            nonint = xs != np.round(xs)
            if kind == Kind.COUNT:
                first(nonint, "non-integer count")
                first(xs < 0, "negative count")
            else:
                m = fs.ftype.levels
                first(nonint, f"non-integer {kind.value} level")
                first((xs < 0) | (xs > m - 1), f"level out of range 1..{m}")
    return report


def ari(labels_a, labels_b) -> float:
    """Adjusted Rand index between two labelings of the same items."""
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"label vectors must be 1-D of equal length, got {a.shape} and {b.shape}")
    return float(adjusted_rand_score(a, b))


def one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    out = np.zeros((labels.size, k))
    out[np.arange(labels.size), labels] = 1.0
    return out


@dataclass
class PartitionState:
    """Hard row labels per view and column labels per feature set.

    Stored as integer labels; ``z`` and ``w`` expose the one-hot form.
    """

    row_labels: list[np.ndarray]
    col_labels: list[list[np.ndarray]]
    K: tuple[int, ...]
    L: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        self.row_labels = [np.asarray(r, dtype=int) for r in self.row_labels]
        self.col_labels = [[np.asarray(c, dtype=int) for c in cs] for cs in self.col_labels]
        self.K = tuple(int(k) for k in self.K)
        self.L = tuple(tuple(int(l) for l in ls) for ls in self.L)
        if any(k < 1 for k in self.K) or any(l < 1 for ls in self.L for l in ls):
            raise ValueError("cluster counts must be >= 1")
        for r, k in zip(self.row_labels, self.K):
            if r.size and (r.min() < 0 or r.max() >= k):
                raise ValueError("row label out of range")
        for cs, ls in zip(self.col_labels, self.L):
            for c, l in zip(cs, ls):
                if c.size and (c.min() < 0 or c.max() >= l):
                    raise ValueError("column label out of range")

    @property
    def z(self) -> list[np.ndarray]:
        return [one_hot(r, k) for r, k in zip(self.row_labels, self.K)]

    @property
    def w(self) -> list[list[np.ndarray]]:
        return [[one_hot(c, l) for c, l in zip(cs, ls)] for cs, ls in zip(self.col_labels, self.L)]

    def copy(self) -> "PartitionState":
        return PartitionState([r.copy() for r in self.row_labels],
                              [[c.copy() for c in cs] for cs in self.col_labels], self.K, self.L)


def check_simplex(p: np.ndarray, tol: float = 1e-10) -> bool:
    p = np.asarray(p)
    return bool(np.all(p >= 0) and abs(p.sum() - 1.0) <= tol)


# ---------------------------------------------------------------- file I/O

def _read_csv_matrix(path: Path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for line in csv.reader(fh):
            if not line:
                continue
            rows.append([float(c) if c.strip() != "" else math.nan for c in line])
    if not rows:
        return np.empty((0, 0))
    width = {len(r) for r in rows}
    if len(width) != 1:
        raise DataError(f"{path}: ragged CSV rows")
    return np.array(rows, dtype=float)


def _fmt(x: float, integer: bool) -> str:
    if math.isnan(x):
        return ""
    if integer:
        return str(int(round(x)))
    return repr(float(x))


def write_csv_matrix(path: Path, values: np.ndarray, integer: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in np.atleast_2d(values):
            writer.writerow([_fmt(x, integer) for x in row])


def read_labels(path: Path) -> np.ndarray:
    """Single-column label CSV, written 1-based, returned 0-based."""
    return _read_csv_matrix(Path(path))[:, 0].astype(int) - 1


def write_labels(path: Path, labels: np.ndarray) -> None:
    write_csv_matrix(Path(path), (np.asarray(labels) + 1)[:, None], integer=True)


def load_dataset(manifest_path) -> MultiViewDataset:
    """Load a dataset from its JSON manifest (CSV paths relative to it)."""
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    try:
        spec = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read manifest {manifest_path}: {exc}") from exc
    views = []
    for vi, vspec in enumerate(spec["views"]):
        sets = []
        for fspec in vspec["feature_sets"]:
            ftype = FeatureType.from_json(fspec)
            values = _read_csv_matrix(root / fspec["csv"])
            sets.append(FeatureSet.from_external(ftype, values))
        views.append(View(sets, vspec.get("name", f"view{vi + 1}")))
    return MultiViewDataset(views)


def load_manifest_labels(manifest_path) -> tuple[list[np.ndarray] | None, list[list[np.ndarray]] | None]:
    manifest_path = Path(manifest_path)
    spec = json.loads(manifest_path.read_text())
    root = manifest_path.parent
    rows = cols = None
    if spec.get("row_labels"):
        rows = [read_labels(root / p) for p in spec["row_labels"]]
    if spec.get("column_labels"):
        cols = [[read_labels(root / p) for p in ps] for ps in spec["column_labels"]]
    return rows, cols


def save_dataset(dataset: MultiViewDataset, out_dir, row_labels=None, col_labels=None,
                 prefix: str = "") -> Path:
    """Write manifest + one header-free CSV per feature set; returns manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"n": dataset.n, "views": []}
    for v, view in enumerate(dataset.views):
        vspec = {"name": view.name or f"view{v + 1}", "feature_sets": []}
        for s, fs in enumerate(view.feature_sets):
            name = f"{prefix}view{v + 1}_set{s + 1}_{fs.ftype.kind.value}.csv"
            write_csv_matrix(out_dir / name, fs.to_external(), integer=fs.ftype.kind != Kind.CONTINUOUS)
            vspec["feature_sets"].append({**fs.ftype.to_json(), "csv": name})
        manifest["views"].append(vspec)
    if row_labels is not None:
        manifest["row_labels"] = []
        for v, lab in enumerate(row_labels):
            name = f"{prefix}labels_view{v + 1}.csv"
            write_labels(out_dir / name, lab)
            manifest["row_labels"].append(name)
    if col_labels is not None:
        manifest["column_labels"] = []
        for v, sets in enumerate(col_labels):
            names = []
            for s, lab in enumerate(sets):
                name = f"{prefix}collabels_view{v + 1}_set{s + 1}.csv"
                write_labels(out_dir / name, lab)
                names.append(name)
            manifest["column_labels"].append(names)
    path = out_dir / f"{prefix}manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path
