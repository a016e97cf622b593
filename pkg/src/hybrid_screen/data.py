"""Descriptor-table ingestion and preprocessing.

Covers loading delimited descriptor exports, dropping unusable columns,
random and stratified partitioning, minority up-sampling and z-score scaling.
Every random operation takes an explicit seed.
"""
import csv
import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._seeding import make_rng
from .exceptions import DataError

CLASSIFICATION = "classification"
REGRESSION = "regression"
TASK_KINDS = (CLASSIFICATION, REGRESSION)

CONSTANT_STD_TOL = 1e-12


@dataclass
class DescriptorTable:
    """Compounds x descriptors matrix with optional labels.

    ``labels`` holds 0/1 floats for classification and real targets for
    regression; it is ``None`` for unlabeled tables (e.g. prediction input).
    """

    compound_ids: list
    feature_names: list
    matrix: np.ndarray
    labels: np.ndarray = None
    task_kind: str = CLASSIFICATION

    def __post_init__(self):
        self.compound_ids = [str(c) for c in self.compound_ids]
        self.feature_names = [str(f) for f in self.feature_names]
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise DataError("matrix must be two-dimensional")
        if self.task_kind not in TASK_KINDS:
            raise DataError(f"unknown task kind {self.task_kind!r}")
        n, p = self.matrix.shape
        if len(self.compound_ids) != n:
            raise DataError(
                f"{len(self.compound_ids)} compound ids for {n} matrix rows")
        if len(self.feature_names) != p:
            raise DataError(
                f"{len(self.feature_names)} feature names for {p} columns")
        if len(set(self.feature_names)) != p:
            raise DataError(
                f"duplicate feature names: {_duplicates(self.feature_names)}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.float64).ravel()
            if len(self.labels) != n:
                raise DataError(f"{len(self.labels)} labels for {n} rows")
            if self.task_kind == CLASSIFICATION and not np.all(
                    np.isin(self.labels, (0.0, 1.0))):
                raise DataError("classification labels must be 0 or 1")

    @property
    def n_rows(self):
        return self.matrix.shape[0]

    @property
    def n_features(self):
        return self.matrix.shape[1]

    def take(self, rows):
        rows = np.asarray(rows, dtype=np.intp)
        return DescriptorTable(
            [self.compound_ids[i] for i in rows],
            list(self.feature_names),
            self.matrix[rows],
            None if self.labels is None else self.labels[rows],
            self.task_kind,
        )

    def select_columns(self, columns):
        columns = np.asarray(columns, dtype=np.intp)
        return DescriptorTable(
            list(self.compound_ids),
            [self.feature_names[j] for j in columns],
            self.matrix[:, columns],
            self.labels,
            self.task_kind,
        )

    def with_labels(self, labels):
        return DescriptorTable(list(self.compound_ids), list(self.feature_names),
                               self.matrix, labels, self.task_kind)

    def project_by_name(self, names):
        """Return the columns ``names`` in that order, matched by name."""
        lookup = {f: j for j, f in enumerate(self.feature_names)}
        missing = [f for f in names if f not in lookup]
        if missing:
            shown = ", ".join(missing[:5])
            more = "" if len(missing) <= 5 else f" (+{len(missing) - 5} more)"
            raise DataError(f"missing feature columns: {shown}{more}")
        return self.select_columns([lookup[f] for f in names])


def concat_tables(tables):
    first = tables[0]
    for t in tables[1:]:
        if t.feature_names != first.feature_names:
            raise DataError("cannot concatenate tables with different columns")
        if t.task_kind != first.task_kind:
            raise DataError("cannot concatenate tables of different task kinds")
    labelled = [t.labels is not None for t in tables]
    if any(labelled) and not all(labelled):
        raise DataError("cannot concatenate labelled and unlabelled tables")
    return DescriptorTable(
        [c for t in tables for c in t.compound_ids],
        list(first.feature_names),
        np.vstack([t.matrix for t in tables]),
        np.concatenate([t.labels for t in tables]) if all(labelled) else None,
        first.task_kind,
    )


def _duplicates(items):
    seen, dup = set(), []
    for x in items:
        if x in seen and x not in dup:
            dup.append(x)
        seen.add(x)
    return ", ".join(dup[:5])


def _parse_cell(text):
    # empty, NaN, Inf, -Inf and anything unparseable all become non-finite
    try:
        return float(text)
    except ValueError:
        return math.nan


def load_table(path, id_column="Name", label_column=None,
               task_kind=CLASSIFICATION, delimiter=None):
    """Read a delimited descriptor export into a :class:`DescriptorTable`.

    Every column other than ``id_column`` and ``label_column`` becomes a
    feature. The delimiter is sniffed from the header (comma or tab) unless
    given explicitly.
    """
    if task_kind not in TASK_KINDS:
        raise DataError(f"unknown task kind {task_kind!r}")
    if not os.path.isfile(path):
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8-sig") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise DataError(f"{path}: missing header row")
        if delimiter is None:
            delimiter = "\t" if header_line.count("\t") > header_line.count(",") else ","
        fh.seek(0)
        reader = csv.reader(fh, delimiter=delimiter)
        header = [h.strip() for h in next(reader)]
        rows = [r for r in reader if r]

    if id_column not in header:
        raise DataError(f"{path}: id column {id_column!r} not found")
    if label_column is not None and label_column not in header:
        raise DataError(f"{path}: label column {label_column!r} not found")
    for lineno, r in enumerate(rows, start=2):
        if len(r) != len(header):
            raise DataError(
                f"{path}: line {lineno} has {len(r)} fields, expected {len(header)}")

    id_pos = header.index(id_column)
    label_pos = header.index(label_column) if label_column is not None else None
    feat_pos = [j for j in range(len(header)) if j not in (id_pos, label_pos)]
    names = [header[j] for j in feat_pos]
    if len(set(names)) != len(names):
        raise DataError(f"{path}: duplicate feature names: {_duplicates(names)}")
    ids = [r[id_pos].strip() for r in rows]
    if len(set(ids)) != len(ids):
        raise DataError(f"{path}: duplicate compound ids: {_duplicates(ids)}")

    matrix = np.empty((len(rows), len(feat_pos)), dtype=np.float64)
    for i, r in enumerate(rows):
        matrix[i] = [_parse_cell(r[j]) for j in feat_pos]

    labels = None
    if label_pos is not None:
        labels = np.array([_parse_cell(r[label_pos]) for r in rows])
        bad = np.flatnonzero(~np.isfinite(labels))
        if bad.size:
            raise DataError(
                f"{path}: non-numeric label in column {label_column!r} "
                f"for compound {ids[bad[0]]!r}")
    return DescriptorTable(ids, names, matrix, labels, task_kind)


def clean_features(train):
    """Drop columns that are constant or contain any non-finite value.

    Returns the reduced table and the surviving column indices, so the same
    projection can be applied to validation and test tables.
    """
    if train.n_rows < 1:
        raise DataError("cannot clean an empty table")
    m = train.matrix
    finite = np.all(np.isfinite(m), axis=0)
    varying = np.zeros(m.shape[1], dtype=bool)
    varying[finite] = np.ptp(m[:, finite], axis=0) > 0
    kept = np.flatnonzero(finite & varying)
    if kept.size == 0:
        raise DataError("no usable feature columns: all are constant or non-finite")
    return train.select_columns(kept), kept


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def split_random(table, fractions=(0.6, 0.2, 0.2), seed=0):
    """Random three-way split; rounding leftovers go to the first part."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) <= 0:
        raise DataError("need three positive fractions")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"fractions sum to {sum(fractions)}, expected 1")
    n = table.n_rows
    if n < 3:
        raise DataError(f"need at least 3 rows to split, got {n}")
    n_cv = _round_half_up(fractions[1] * n)
    n_test = _round_half_up(fractions[2] * n)
    n_train = n - n_cv - n_test
    if min(n_train, n_cv, n_test) < 1:
        raise DataError(f"split of {n} rows leaves an empty part")
    perm = make_rng(seed).permutation(n)
    return (table.take(np.sort(perm[:n_train])),
            table.take(np.sort(perm[n_train:n_train + n_cv])),
            table.take(np.sort(perm[n_train + n_cv:])))


def stratified_kfold(table, k=5, seed=0):
    """Assign each row a fold in ``[0, k)``.

    Classification rows are dealt round-robin class by class after a seeded
    shuffle, which keeps every class (and every fold size) balanced to within
    one row. Regression rows are dealt round-robin after a shuffle.
    """
    if k < 2:
        raise DataError(f"k must be at least 2, got {k}")
    n = table.n_rows
    rng = make_rng(seed)
    if table.task_kind == CLASSIFICATION:
        if table.labels is None:
            raise DataError("stratified folds need labels")
        order = []
        for cls in (0.0, 1.0):
            members = np.flatnonzero(table.labels == cls)
            if len(members) < k:
                raise DataError(
                    f"class {int(cls)} has {len(members)} members, fewer than k={k}")
            order.append(rng.permutation(members))
        order = np.concatenate(order)
    else:
        if n < k:
            raise DataError(f"{n} rows cannot fill {k} folds")
        order = rng.permutation(n)
    folds = np.empty(n, dtype=np.intp)
    folds[order] = np.arange(n) % k
    return folds


def upsample_minority(train, seed=0):
    """Balance classes by appending resampled copies of minority rows.

    Original rows are kept in place; ``n_major - n_minor`` minority rows
    drawn with replacement are appended after them.
    """
    if train.task_kind != CLASSIFICATION:
        raise DataError("up-sampling applies to classification tables only")
    if train.labels is None:
        raise DataError("up-sampling needs labels")
    pos = np.flatnonzero(train.labels == 1.0)
    neg = np.flatnonzero(train.labels == 0.0)
    if len(pos) == 0 or len(neg) == 0:
        raise DataError("up-sampling needs both classes present")
    minority, deficit = (pos, len(neg) - len(pos)) if len(pos) < len(neg) \
        else (neg, len(pos) - len(neg))
    if deficit == 0:
        return train
    extra = make_rng(seed).choice(minority, size=deficit, replace=True)
    return train.take(np.concatenate([np.arange(train.n_rows), extra]))


@dataclass
class Scaler:
    means: np.ndarray
    stds: np.ndarray
    constant_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64)
        self.stds = np.asarray(self.stds, dtype=np.float64)
        if self.means.ndim != 1 or self.means.shape != self.stds.shape:
            raise DataError("scaler means and stds must be equal-length vectors")
        if not np.all(self.stds >= 0):
            raise DataError("scaler stds must be non-negative")
        derived = self.stds < CONSTANT_STD_TOL
        if self.constant_mask is None:
            self.constant_mask = derived
        self.constant_mask = np.asarray(self.constant_mask, dtype=bool)
        if not np.array_equal(self.constant_mask, derived):
            raise DataError("constant_mask must flag exactly the near-zero stds")

    @property
    def n_features(self):
        return len(self.means)

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DataError(
                f"scaler fitted on {self.n_features} columns, got shape {X.shape}")
        safe = np.where(self.constant_mask, 1.0, self.stds)
        with np.errstate(invalid="ignore"):
            Z = (X - self.means) / safe
        Z[:, self.constant_mask] = 0.0
        Z[~np.isfinite(Z)] = 0.0
        return Z


def zscore_fit(train):
    """Column means and population standard deviations of ``train``."""
    m = train.matrix if isinstance(train, DescriptorTable) else np.asarray(train, float)
    if m.shape[0] < 1:
        raise DataError("cannot fit a scaler on zero rows")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        means = np.nanmean(m, axis=0)
        stds = np.nanstd(m, axis=0)
    means = np.where(np.isfinite(means), means, 0.0)
    stds = np.where(np.isfinite(stds), stds, 0.0)
    return Scaler(means, stds)


def zscore_apply(scaler, table):
    return DescriptorTable(list(table.compound_ids), list(table.feature_names),
                           scaler.transform(table.matrix), table.labels,
                           table.task_kind)


class ZScoreScaler(TransformerMixin, BaseEstimator):
    """Population z-scoring as a scikit-learn transformer.

    Constant columns map to 0, non-finite inputs map to 0 (the training
    mean) after scaling.
    """

    def fit(self, X, y=None):
        X = check_array(X, ensure_all_finite="allow-nan")
        self.scaler_ = zscore_fit(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "scaler_")
        X = check_array(X, ensure_all_finite=False)
        return self.scaler_.transform(X)
