"""Tabular ingestion, binarization and task-specific validation."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

ROLES = ("feature", "label", "protected", "legitimate", "treatment", "outcome")
TASKS = ("classification", "fair", "fair_csp", "robust", "policy")
MAX_DEFAULT_THRESHOLDS = 8

Cell = Union[float, str]


class DataError(ValueError):
    pass


class ParseError(DataError):
    pass


class SchemaError(DataError):
    pass


class EncodingError(DataError):
    pass


@dataclass
class RawTable:
    columns: list[str]
    rows: list[list[Cell]]
    roles: dict[str, str]

    @property
    def n(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list[Cell]:
        j = self.columns.index(name)
        return [row[j] for row in self.rows]

    def columns_with_role(self, role: str) -> list[str]:
        return [c for c in self.columns if self.roles.get(c) == role]


def _cell(text: str) -> Cell:
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        return text


def load_csv(
    source: Union[str, os.PathLike, io.TextIOBase],
    roles: Optional[Mapping[str, str]] = None,
) -> RawTable:
    """Read a headed CSV; columns without a declared role become features."""
    roles = dict(roles or {})
    for col, role in roles.items():
        if role not in ROLES:
            raise SchemaError(f"unknown role {role!r} for column {col!r}")
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            records = list(csv.reader(fh))
    else:
        records = list(csv.reader(source))
    records = [r for r in records if r]
    if not records:
        raise ParseError("empty CSV: no header row")
    header = [h.strip() for h in records[0]]
    if len(set(header)) != len(header):
        raise SchemaError("duplicate column names in header")
    for col in roles:
        if col not in header:
            raise SchemaError(f"declared column {col!r} not found in header")
    rows = []
    for lineno, rec in enumerate(records[1:], start=2):
        if len(rec) != len(header):
            raise ParseError(f"row {lineno}: expected {len(header)} cells, found {len(rec)}")
        cells = [_cell(c) for c in rec]
        for name, c in zip(header, cells):
            if c == "" or (isinstance(c, float) and math.isnan(c)):
                raise ParseError(f"row {lineno}: missing value in column {name!r}")
        rows.append(cells)
    full_roles = {c: roles.get(c, "feature") for c in header}
    return RawTable(header, rows, full_roles)


@dataclass
class BinarizationSpec:
    """Thresholds for numeric columns and category lists for categorical ones."""

    thresholds: dict[str, list[float]] = field(default_factory=dict)
    categories: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        for col, th in self.thresholds.items():
            if any(b <= a for a, b in zip(th, th[1:])):
                raise ValueError(f"thresholds for {col!r} must be strictly increasing")
        for col, cats in self.categories.items():
            if len(set(cats)) != len(cats):
                raise ValueError(f"categories for {col!r} contain duplicates")

    def to_json(self) -> dict:
        return {"thresholds": self.thresholds, "categories": self.categories}

    @classmethod
    def from_json(cls, doc: Mapping) -> "BinarizationSpec":
        return cls(
            {k: [float(v) for v in vs] for k, vs in doc.get("thresholds", {}).items()},
            {k: [str(v) for v in vs] for k, vs in doc.get("categories", {}).items()},
        )


@dataclass
class BinarizedDataset:
    X: np.ndarray
    feature_names: list[str]
    y: Optional[np.ndarray] = None
    t: Optional[np.ndarray] = None
    protected: Optional[np.ndarray] = None
    legitimate: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None
    label_names: Optional[list[str]] = None
    treatment_names: Optional[list[str]] = None
    group_names: Optional[list[str]] = None

    def __post_init__(self):
        self.X = np.asarray(self.X)
        if self.X.ndim != 2:
            raise ValueError("X must be a two-dimensional matrix")
        for name in ("y", "t", "protected", "legitimate"):
            val = getattr(self, name)
            if val is not None:
                setattr(self, name, np.asarray(val))
        if self.weights is None:
            self.weights = np.ones(self.X.shape[0])
        else:
            self.weights = np.asarray(self.weights, dtype=float)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        if self.label_names is not None:
            return len(self.label_names)
        return int(self.y.max()) + 1 if self.y is not None and len(self.y) else 0

    @property
    def n_treatments(self) -> int:
        if self.treatment_names is not None:
            return len(self.treatment_names)
        return int(self.t.max()) + 1 if self.t is not None and len(self.t) else 0


def _dense_codes(values: Sequence[Cell]) -> tuple[np.ndarray, list[str]]:
    """Map values to codes 0..K-1 in sorted order (numbers before strings)."""
    uniq = sorted(set(values), key=lambda v: (isinstance(v, str), v))
    index = {v: i for i, v in enumerate(uniq)}
    return np.array([index[v] for v in values], dtype=np.int64), [_fmt(v) for v in uniq]


def _fmt(v: Cell) -> str:
    if isinstance(v, float) and v == int(v):
        return str(int(v))
    return str(v)


def default_thresholds(values: Sequence[float], cap: int = MAX_DEFAULT_THRESHOLDS) -> list[float]:
    """Midpoints between consecutive distinct values, thinned by quantile to ``cap``."""
    uniq = np.unique(np.asarray(values, dtype=float))
    mids = (uniq[:-1] + uniq[1:]) / 2.0
    if len(mids) <= cap:
        return [float(m) for m in mids]
    picks = np.quantile(np.arange(len(mids)), np.linspace(0, 1, cap), method="nearest")
    return [float(mids[int(i)]) for i in np.unique(picks)]


def infer_spec(table: RawTable) -> BinarizationSpec:
    """Default encoding for every feature column that is not already 0/1."""
    spec = BinarizationSpec()
    for col in table.columns_with_role("feature"):
        vals = table.column(col)
        if all(isinstance(v, float) for v in vals):
            if set(vals) <= {0.0, 1.0}:
                continue
            spec.thresholds[col] = default_thresholds(vals)
        else:
            spec.categories[col] = sorted({_fmt(v) for v in vals})
    return spec


def _threshold_name(col: str, th: float) -> str:
    return f"{col}≤{_fmt(th)}"


def binarize(table: RawTable, spec: Optional[BinarizationSpec] = None) -> BinarizedDataset:
    """Encode feature columns as 0/1 and code the label, group and treatment columns."""
    spec = infer_spec(table) if spec is None else spec
    cols, names = [], []
    for col in table.columns_with_role("feature"):
        vals = table.column(col)
        if col in spec.thresholds:
            arr = np.array([_numeric(v, col, i) for i, v in enumerate(vals)])
            for th in spec.thresholds[col]:
                cols.append((arr <= th).astype(np.int8))
                names.append(_threshold_name(col, th))
        elif col in spec.categories:
            cats = spec.categories[col]
            pos = {c: k for k, c in enumerate(cats)}
            block = np.zeros((table.n, len(cats)), dtype=np.int8)
            for i, v in enumerate(vals):
                key = _fmt(v)
                if key not in pos:
                    raise EncodingError(f"row {i + 2}: value {key!r} of column {col!r} "
                                        "is not a declared category")
                block[i, pos[key]] = 1
            for k, c in enumerate(cats):
                cols.append(block[:, k])
                names.append(f"{col}={c}")
        else:
            if not all(v in (0.0, 1.0) for v in vals):
                bad = next(i for i, v in enumerate(vals) if v not in (0.0, 1.0))
                raise EncodingError(f"row {bad + 2}: column {col!r} is not binary and has no "
                                    "binarization rule")
            cols.append(np.array(vals, dtype=np.int8))
            names.append(col)
    X = np.column_stack(cols) if cols else np.zeros((table.n, 0), dtype=np.int8)

    ds = BinarizedDataset(X.astype(np.int8), names)
    labels = table.columns_with_role("label")
    treatments = table.columns_with_role("treatment")
    outcomes = table.columns_with_role("outcome")
    if len(labels) > 1 or len(treatments) > 1 or len(outcomes) > 1:
        raise SchemaError("at most one label, treatment and outcome column may be declared")
    if labels:
        ds.y, ds.label_names = _dense_codes(table.column(labels[0]))
    if treatments:
        ds.t, ds.treatment_names = _dense_codes(table.column(treatments[0]))
        if outcomes:
            ds.y = np.array([_numeric(v, outcomes[0], i)
                             for i, v in enumerate(table.column(outcomes[0]))])
    elif outcomes:
        raise SchemaError("an outcome column requires a treatment column")
    for role, attr in (("protected", "protected"), ("legitimate", "legitimate")):
        found = table.columns_with_role(role)
        if len(found) > 1:
            raise SchemaError(f"at most one {role} column may be declared")
        if found:
            codes, vals = _dense_codes(table.column(found[0]))
            setattr(ds, attr, codes)
            if role == "protected":
                ds.group_names = vals
    return ds


def _numeric(v: Cell, col: str, i: int) -> float:
    if not isinstance(v, float):
        raise EncodingError(f"row {i + 2}: value {v!r} of numeric column {col!r} is not a number")
    return v


def validate(dataset: BinarizedDataset, task: str) -> list[str]:
    """Diagnostics for ``task`` in classification/fair/fair_csp/robust/policy."""
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    diags: list[str] = []
    X = dataset.X
    nonbin = np.argwhere((X != 0) & (X != 1))
    if len(nonbin):
        i, j = nonbin[0]
        diags.append(f"non-binary feature value {X[i, j]} at row {i}, feature {j}")
    if len(dataset.feature_names) != X.shape[1]:
        diags.append("feature name count does not match X")
    w = dataset.weights
    if w.shape != (dataset.n,) or not np.all(np.isfinite(w)) or np.any(w < 0):
        diags.append("weights must be finite, nonnegative and one per row")

    def dense(codes, what, minimum, declared=None):
        if codes is None:
            return
        if codes.shape != (dataset.n,):
            diags.append(f"{what} length does not match X")
            return
        if not np.issubdtype(codes.dtype, np.integer):
            if not np.all(np.mod(codes, 1) == 0):
                diags.append(f"{what} codes must be integers")
                return
        present = np.unique(codes)
        if len(present) and (present[0] != 0 or present[-1] != len(present) - 1):
            diags.append(f"{what} codes are not dense from 0")
        if declared is not None and len(present) and present[-1] >= len(declared):
            diags.append(f"{what} code {present[-1]} has no declared name")
        if max(len(present), len(declared or ())) < minimum:
            diags.append(f"{what} needs at least {minimum} distinct values")

    if task == "policy":
        if dataset.t is None:
            diags.append("missing treatment column")
        else:
            dense(dataset.t, "treatment", 2, dataset.treatment_names)
        if dataset.y is None:
            diags.append("missing outcome column")
        elif dataset.y.shape != (dataset.n,) or not np.all(np.isfinite(dataset.y.astype(float))):
            diags.append("outcomes must be finite and one per row")
    else:
        if dataset.y is None:
            diags.append("missing label column")
        else:
            dense(dataset.y, "label", 2, dataset.label_names)
    if task in ("fair", "fair_csp"):
        if dataset.protected is None:
            diags.append("missing protected attribute")
        else:
            dense(dataset.protected, "protected group", 1)
    if task == "fair_csp" and dataset.legitimate is None:
        diags.append("missing legitimate factor")
    if dataset.legitimate is not None:
        dense(dataset.legitimate, "legitimate factor", 1)
    return diags
