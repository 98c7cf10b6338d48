# tabkit/data.py - Dataset model, CSV ingestion, preprocessing and column helpers

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import CONFIG
from utils import DataError
from tabkit.numkit import seeded_rng

logger = logging.getLogger(__name__)

NUMERIC = "numeric"
CATEGORICAL = "categorical"


class EmptyDatasetError(DataError):
    pass


class RaggedRowsError(DataError):
    pass


class UnknownColumnError(DataError):
    pass


class DuplicateColumnError(DataError):
    pass


class RowCountMismatchError(DataError):
    pass


class ImputationError(DataError):
    pass


class SplitError(DataError):
    pass

# ─── DATASET MODEL ─────────────────────────────────────────────────
@dataclass
class ColumnMeta:
    name: str
    kind: str = NUMERIC
    encoder: Optional[Dict[str, int]] = None
    scaler: Optional[Tuple[float, float]] = None  # (mean, std)
    impute_value: Optional[float] = None
    constant: bool = False

    @property
    def categories(self) -> List[str]:
        if not self.encoder:
            return []
        return [name for name, _ in sorted(self.encoder.items(), key=lambda kv: kv[1])]

    def to_dict(self):
        return {
            'name': self.name,
            'kind': self.kind,
            'encoder': dict(self.encoder) if self.encoder is not None else None,
            'scaler': list(self.scaler) if self.scaler is not None else None,
            'impute_value': self.impute_value,
            'constant': self.constant,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            name=doc['name'],
            kind=doc.get('kind', NUMERIC),
            encoder=doc.get('encoder'),
            scaler=tuple(doc['scaler']) if doc.get('scaler') is not None else None,
            impute_value=doc.get('impute_value'),
            constant=bool(doc.get('constant', False)),
        )


@dataclass
class Dataset:
    """Column-oriented table. ``X`` holds codes for categorical columns and
    NaN for missing cells; ``y`` holds class codes (or reals for regression)."""

    columns: List[ColumnMeta]
    X: np.ndarray
    y: Optional[np.ndarray] = None
    class_names: Optional[List[str]] = None
    target_name: Optional[str] = None
    task: str = "classification"
    notes: List[str] = field(default_factory=list)

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if len(self.columns) == 1 else X.reshape(1, -1)
        X.flags.writeable = False
        self.X = X
        if self.y is not None:
            dtype = np.int64 if self.task == "classification" else np.float64
            y = np.array(self.y, dtype=dtype).reshape(-1)
            y.flags.writeable = False
            self.y = y
        validate_dataset(self)

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def feature_names(self) -> List[str]:
        return [c.name for c in self.columns]

    @property
    def n_classes(self) -> int:
        if self.class_names is not None:
            return len(self.class_names)
        if self.y is None:
            return 0
        return int(self.y.max()) + 1 if len(self.y) else 0

    @property
    def has_missing(self) -> bool:
        return bool(np.isnan(self.X).any())

    def column_index(self, name: str) -> int:
        for i, col in enumerate(self.columns):
            if col.name == name:
                return i
        raise UnknownColumnError(f"Unknown column: {name}", column=name)

    def replace(self, **changes) -> "Dataset":
        if 'columns' not in changes:
            changes['columns'] = [dataclasses.replace(c) for c in self.columns]
        return dataclasses.replace(self, **changes)

    def subset_rows(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return self.replace(
            X=self.X[indices],
            y=self.y[indices] if self.y is not None else None,
        )

    def with_matrix(self, X) -> "Dataset":
        return self.replace(X=X)


def make_dataset(X, y=None, feature_names=None, class_names=None, target_name="target"):
    """Build an all-numeric Dataset from arrays"""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    names = feature_names or [f"x{i}" for i in range(X.shape[1])]
    columns = [ColumnMeta(name) for name in names]
    if y is not None and class_names is None:
        y = np.asarray(y)
        class_names = [str(c) for c in range(int(y.max()) + 1)] if len(y) else []
    return Dataset(columns, X, y, class_names, target_name if y is not None else None)


def validate_dataset(ds: Dataset) -> Dataset:
    """Shared consistency check for every Dataset produced by this module"""
    if ds.X.ndim != 2:
        raise DataError(f"X must be a 2-D matrix, got {ds.X.ndim} dimensions")
    if ds.X.shape[1] != len(ds.columns):
        raise DataError(f"X has {ds.X.shape[1]} columns but {len(ds.columns)} column entries")
    names = [c.name for c in ds.columns]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise DuplicateColumnError(f"Duplicate column names: {dupes}", columns=dupes)

    for j, col in enumerate(ds.columns):
        if col.kind == CATEGORICAL:
            if col.encoder is None:
                raise DataError(f"Categorical column {col.name} has no encoder")
            codes = sorted(col.encoder.values())
            if codes != list(range(len(codes))):
                raise DataError(f"Encoder of {col.name} is not contiguous 0..k-1")
        elif col.kind == NUMERIC:
            if col.encoder is not None:
                raise DataError(f"Numeric column {col.name} must not carry an encoder")
        else:
            raise DataError(f"Unknown column kind {col.kind} for {col.name}")
        if col.scaler is not None and not col.scaler[1] > 0:
            raise DataError(f"Scaler std of {col.name} must be > 0")

    if ds.y is not None:
        if len(ds.y) != ds.X.shape[0]:
            raise RowCountMismatchError(f"X has {ds.X.shape[0]} rows but y has {len(ds.y)}")
        if ds.task == "classification" and ds.class_names is not None and len(ds.y):
            if ds.y.min() < 0 or ds.y.max() >= len(ds.class_names):
                raise DataError("Class codes fall outside 0..|class_names|-1")
    return ds

# ─── CSV INGESTION ─────────────────────────────────────────────────
def _missing_mask(values: pd.Series, markers) -> np.ndarray:
    return values.str.strip().str.lower().isin(markers).to_numpy()


def _format_label(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def _encode_target(values: pd.Series, name: str, markers):
    missing = _missing_mask(values, markers)
    if missing.any():
        rows = np.flatnonzero(missing)[:5].tolist()
        raise DataError(f"Target column {name} has missing cells (rows {rows})", column=name)
    numeric = pd.to_numeric(values, errors="coerce")
    if not numeric.isna().any():
        labels = sorted(set(numeric.tolist()))
        lookup = {v: i for i, v in enumerate(labels)}
        return np.array([lookup[v] for v in numeric], dtype=np.int64), [_format_label(v) for v in labels]
    labels = list(pd.unique(values))
    lookup = {v: i for i, v in enumerate(labels)}
    return np.array([lookup[v] for v in values], dtype=np.int64), [str(v) for v in labels]


def from_frame(frame: pd.DataFrame, target_column=None, kind_overrides=None,
               missing_markers=None, task="classification") -> Dataset:
    """Convert a string-valued DataFrame into a Dataset"""
    markers = {str(m).strip().lower() for m in (missing_markers if missing_markers is not None else CONFIG['missing_markers'])}
    overrides = kind_overrides or {}
    frame = frame.copy()
    for col in frame.columns:
        frame[col] = frame[col].map(lambda v: "" if v is None or (isinstance(v, float) and np.isnan(v)) else str(v))

    if len(frame) == 0:
        raise EmptyDatasetError("empty dataset")
    for name in overrides:
        if name not in frame.columns:
            raise UnknownColumnError(f"Unknown column in kind overrides: {name}", column=name)

    y, class_names = None, None
    if target_column is not None:
        if target_column not in frame.columns:
            raise UnknownColumnError(f"Unknown target column: {target_column}", column=target_column)
        if task == "classification":
            y, class_names = _encode_target(frame[target_column], target_column, markers)
        else:
            y = pd.to_numeric(frame[target_column], errors="raise").to_numpy(dtype=np.float64)
        frame = frame.drop(columns=[target_column])

    columns, matrix = [], []
    for name in frame.columns:
        values = frame[name]
        missing = _missing_mask(values, markers)
        numeric = pd.to_numeric(values.where(~missing, None), errors="coerce")
        parseable = not (numeric.isna() & ~missing).any()
        kind = overrides.get(name, NUMERIC if parseable else CATEGORICAL)

        if kind == NUMERIC:
            if not parseable:
                bad = values[(numeric.isna() & ~missing).to_numpy()].iloc[0]
                raise DataError(f"Column {name} forced numeric but holds '{bad}'", column=name)
            columns.append(ColumnMeta(str(name), NUMERIC))
            matrix.append(numeric.to_numpy(dtype=np.float64))
        else:
            present = values[~missing]
            encoder = {str(v): i for i, v in enumerate(pd.unique(present))}
            codes = np.array([np.nan if m else encoder[v] for v, m in zip(values, missing)], dtype=np.float64)
            columns.append(ColumnMeta(str(name), CATEGORICAL, encoder=encoder))
            matrix.append(codes)

    X = np.column_stack(matrix) if matrix else np.zeros((len(frame), 0))
    n_missing = int(np.isnan(X).sum())
    if n_missing:
        logger.info(f"{n_missing} missing cells flagged for imputation")
    return Dataset(columns, X, y, class_names, target_column, task=task)


def load_csv(path, target_column=None, kind_overrides=None, missing_markers=None,
             task="classification") -> Dataset:
    """Read a header-first comma-delimited UTF-8 file"""
    path = Path(path)
    try:
        frame = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            na_filter=False,
            sep=CONFIG['csv_delimiter'],
            encoding=CONFIG['csv_encoding'],
            quotechar='"',
        )
    except pd.errors.EmptyDataError:
        raise EmptyDatasetError("empty dataset", path=str(path))
    except pd.errors.ParserError as e:
        raise RaggedRowsError(f"Ragged rows in {path.name}: {e}", path=str(path))

    if frame.isna().any().any():
        bad = frame.index[frame.isna().any(axis=1)][0]
        raise RaggedRowsError(f"Ragged rows in {path.name}: row {int(bad) + 1} has too few fields",
                              path=str(path), row=int(bad) + 1)
    logger.info(f"Loaded {path.name}: {len(frame)} rows x {len(frame.columns)} columns")
    return from_frame(frame, target_column, kind_overrides, missing_markers, task)


def to_frame(ds: Dataset, decode=True, include_target=True) -> pd.DataFrame:
    """DataFrame view; categorical codes decoded to labels when ``decode``"""
    data = {}
    for j, col in enumerate(ds.columns):
        values = ds.X[:, j]
        if decode and col.kind == CATEGORICAL:
            cats = col.categories
            data[col.name] = [None if np.isnan(v) else cats[int(v)] for v in values]
        else:
            data[col.name] = values.copy()
    if include_target and ds.y is not None:
        target = ds.target_name or "target"
        if decode and ds.task == "classification" and ds.class_names is not None:
            data[target] = [ds.class_names[int(c)] for c in ds.y]
        else:
            data[target] = ds.y.copy()
    return pd.DataFrame(data, columns=list(data.keys()))


def save_csv(ds: Dataset, path) -> Path:
    """Write the dataset back to CSV (target last, missing cells empty)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = to_frame(ds, decode=True)
    frame.to_csv(path, index=False, na_rep="", encoding=CONFIG['csv_encoding'])
    return path


def to_metadata(ds: Dataset) -> dict:
    return {
        'columns': [c.to_dict() for c in ds.columns],
        'class_names': ds.class_names,
        'target_name': ds.target_name,
        'task': ds.task,
    }


def from_metadata(doc) -> List[ColumnMeta]:
    return [ColumnMeta.from_dict(c) for c in doc['columns']]


def apply_metadata(ds: Dataset, doc) -> Dataset:
    """Re-express ``ds`` with stored encoders and scalers (e.g. at predict time)"""
    stored = {c.name: c for c in from_metadata(doc)}
    X = ds.X.copy()
    columns = []
    for j, col in enumerate(ds.columns):
        meta = stored.get(col.name)
        if meta is None:
            raise UnknownColumnError(f"Column {col.name} is not in the stored metadata", column=col.name)
        if meta.kind == CATEGORICAL and col.kind == CATEGORICAL:
            labels = col.categories
            remap = np.array([meta.encoder.get(label, np.nan) for label in labels], dtype=np.float64)
            present = ~np.isnan(X[:, j])
            X[present, j] = remap[X[present, j].astype(np.int64)]
        elif meta.kind == CATEGORICAL and col.kind == NUMERIC:
            # numeric-looking labels (e.g. "1", "2") stored as categories
            lookup = {float(k): v for k, v in meta.encoder.items() if _is_float(k)}
            X[:, j] = [lookup.get(v, np.nan) if not np.isnan(v) else np.nan for v in X[:, j]]
        if meta.impute_value is not None:
            X[np.isnan(X[:, j]), j] = meta.impute_value
        if meta.scaler is not None:
            mean, std = meta.scaler
            X[:, j] = (X[:, j] - mean) / std
        columns.append(dataclasses.replace(meta))
    return ds.replace(columns=columns, X=X)


def _is_float(text) -> bool:
    try:
        float(text)
        return True
    except (TypeError, ValueError):
        return False

# ─── PREPROCESSING ─────────────────────────────────────────────────
@dataclass(frozen=True)
class ImputePolicy:
    kind: str = "median"  # median | mode | constant
    value: Optional[str] = None

    @classmethod
    def parse(cls, value) -> "ImputePolicy":
        if isinstance(value, ImputePolicy):
            return value
        text = str(value)
        if text.startswith("constant"):
            _, _, const = text.partition(":")
            return cls("constant", const)
        if text in ("median", "mode"):
            return cls(text)
        raise ImputationError(f"Unknown imputation policy: {value}")


def _mode(values: np.ndarray) -> float:
    uniq, counts = np.unique(values, return_counts=True)
    return float(uniq[np.argmax(counts)])  # ties -> smallest value / code


def impute_missing(ds: Dataset, policy="median") -> Dataset:
    """Fill missing cells; median falls back to mode for categorical columns"""
    policy = ImputePolicy.parse(policy)
    if not ds.has_missing:
        return ds

    X = ds.X.copy()
    columns = [dataclasses.replace(c) for c in ds.columns]
    for j, col in enumerate(columns):
        missing = np.isnan(X[:, j])
        if not missing.any():
            continue
        present = X[~missing, j]

        if policy.kind == "constant":
            if col.kind == NUMERIC:
                fill = float(policy.value)
            else:
                label = str(policy.value)
                encoder = dict(col.encoder)
                if label not in encoder:
                    encoder[label] = len(encoder)
                col.encoder = encoder
                fill = float(encoder[label])
        else:
            if present.size == 0:
                raise ImputationError(f"Column {col.name} is entirely missing; cannot use {policy.kind}",
                                      column=col.name)
            if policy.kind == "median" and col.kind == NUMERIC:
                fill = float(np.median(present))
            else:
                if policy.kind == "median":
                    logger.warning(f"Median is undefined for categorical {col.name}; using mode")
                fill = _mode(present)

        X[missing, j] = fill
        col.impute_value = fill
        logger.info(f"Imputed {int(missing.sum())} cells of {col.name} with {fill}")
    return ds.replace(columns=columns, X=X)


def _apply_scalers(ds: Dataset, scalers, constant_flags) -> Dataset:
    X = ds.X.copy()
    columns = [dataclasses.replace(c) for c in ds.columns]
    for j, col in enumerate(columns):
        if scalers[j] is not None:
            mean, std = scalers[j]
            X[:, j] = (X[:, j] - mean) / std
            col.scaler = (mean, std)
        col.constant = constant_flags[j]
    return ds.replace(columns=columns, X=X)


def standardize(train: Dataset, others: Sequence[Dataset] = ()):
    """Z-score numeric columns with train statistics (population std).

    Returns ``(train_scaled, [others_scaled...])``. Constant columns are left
    unscaled and flagged on their ColumnMeta.
    """
    if train.n_rows == 0:
        raise EmptyDatasetError("empty dataset")

    scalers, flags = [], []
    for j, col in enumerate(train.columns):
        if col.kind != NUMERIC:
            scalers.append(None)
            flags.append(False)
            continue
        values = train.X[:, j]
        mean = float(np.nanmean(values))
        std = float(np.nanstd(values))
        if std == 0 or not np.isfinite(std):
            logger.warning(f"Column {col.name} is constant; left unscaled")
            scalers.append(None)
            flags.append(True)
        else:
            scalers.append((mean, std))
            flags.append(False)

    scaled_train = _apply_scalers(train, scalers, flags)
    scaled_others = []
    for other in others:
        if other.feature_names != train.feature_names:
            raise UnknownColumnError("Datasets to standardize must share the train columns")
        scaled_others.append(_apply_scalers(other, scalers, flags))
    return scaled_train, scaled_others


def constant_columns(ds: Dataset) -> List[str]:
    return [c.name for j, c in enumerate(ds.columns) if np.nanstd(ds.X[:, j]) == 0]

# ─── SPLITTING ─────────────────────────────────────────────────────
@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.3
    stratified: bool = False
    seed: int = 42


def _stratified_allocation(counts: Dict[int, int], n_test: int) -> Dict[int, int]:
    """Per-class test sizes: proportional, >=1 on each side, summing to n_test"""
    n = sum(counts.values())
    exact = {c: m * n_test / n for c, m in counts.items()}
    alloc = {c: min(max(1, int(np.floor(exact[c]))), counts[c] - 1) for c in counts}

    order = sorted(counts, key=lambda c: (-(exact[c] - np.floor(exact[c])), c))
    while sum(alloc.values()) < n_test:
        grown = False
        for c in order:
            if sum(alloc.values()) >= n_test:
                break
            if alloc[c] < counts[c] - 1:
                alloc[c] += 1
                grown = True
        if not grown:
            break
    shrink = sorted(counts, key=lambda c: (exact[c] - alloc[c], c))
    while sum(alloc.values()) > n_test:
        shrunk = False
        for c in shrink:
            if sum(alloc.values()) <= n_test:
                break
            if alloc[c] > 1:
                alloc[c] -= 1
                shrunk = True
        if not shrunk:
            break
    return alloc


def split_indices(ds: Dataset, spec: SplitSpec) -> Tuple[np.ndarray, np.ndarray]:
    n = ds.n_rows
    if not 0 < spec.test_fraction < 1:
        raise SplitError(f"test_fraction must be in (0, 1), got {spec.test_fraction}")
    n_test = int(round(n * spec.test_fraction))
    if n_test < 1 or n - n_test < 1:
        raise SplitError(f"test_fraction {spec.test_fraction} leaves an empty side for n={n}")

    rng = seeded_rng(spec.seed)
    if not spec.stratified:
        order = rng.permutation(n)
        return np.sort(order[n_test:]), np.sort(order[:n_test])

    if ds.y is None:
        raise SplitError("Stratified split needs a target column")
    classes, counts = np.unique(ds.y, return_counts=True)
    for c, m in zip(classes, counts):
        if m < 2:
            name = ds.class_names[c] if ds.class_names else str(c)
            raise SplitError(f"Class '{name}' has a single member; cannot stratify", class_name=name)

    alloc = _stratified_allocation({int(c): int(m) for c, m in zip(classes, counts)}, n_test)
    test_parts = []
    for c in classes:
        members = np.flatnonzero(ds.y == c)
        picked = members[rng.split(int(c)).permutation(len(members))[:alloc[int(c)]]]
        test_parts.append(picked)
    test_idx = np.sort(np.concatenate(test_parts))
    train_idx = np.setdiff1d(np.arange(n), test_idx)
    return train_idx, test_idx


def train_test_split(ds: Dataset, spec: SplitSpec) -> Tuple[Dataset, Dataset]:
    train_idx, test_idx = split_indices(ds, spec)
    logger.info(f"Split {ds.n_rows} rows -> train {len(train_idx)} / test {len(test_idx)}")
    return ds.subset_rows(train_idx), ds.subset_rows(test_idx)


def kfold_splits(ds, k: int, seed: int = 42) -> List[Tuple[np.ndarray, np.ndarray]]:
    """k (train_idx, valid_idx) pairs; the first n % k folds get one extra row"""
    n = ds if isinstance(ds, (int, np.integer)) else ds.n_rows
    if k < 2 or k > n:
        raise SplitError(f"k must satisfy 2 <= k <= n (k={k}, n={n})")
    order = seeded_rng(seed).permutation(n)
    base, extra = divmod(n, k)
    folds, start = [], 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        valid = np.sort(order[start:start + size])
        train = np.setdiff1d(np.arange(n), valid)
        folds.append((train, valid))
        start += size
    return folds

# ─── COLUMN HELPERS ────────────────────────────────────────────────
def select_columns(ds: Dataset, names: Iterable[str]) -> Dataset:
    idx = [ds.column_index(n) for n in names]
    return ds.replace(columns=[dataclasses.replace(ds.columns[i]) for i in idx], X=ds.X[:, idx])


def drop_columns(ds: Dataset, names: Iterable[str]) -> Dataset:
    drop = {ds.column_index(n) for n in names}
    keep = [i for i in range(ds.n_features) if i not in drop]
    return ds.replace(columns=[dataclasses.replace(ds.columns[i]) for i in keep], X=ds.X[:, keep])


def add_column(ds: Dataset, name: str, values, kind: str = NUMERIC) -> Dataset:
    """Append a column; categorical values are label-encoded by first appearance"""
    if name in ds.feature_names:
        raise DuplicateColumnError(f"Column {name} already exists", column=name)
    values = list(values)
    if len(values) != ds.n_rows:
        raise RowCountMismatchError(f"Column {name} has {len(values)} values for {ds.n_rows} rows")
    if kind == CATEGORICAL:
        labels = [str(v) for v in values]
        encoder = {v: i for i, v in enumerate(pd.unique(pd.Series(labels)))}
        meta = ColumnMeta(name, CATEGORICAL, encoder=encoder)
        column = np.array([encoder[v] for v in labels], dtype=np.float64)
    else:
        meta = ColumnMeta(name, NUMERIC)
        column = np.asarray(values, dtype=np.float64)
    return ds.replace(columns=[dataclasses.replace(c) for c in ds.columns] + [meta],
                      X=np.column_stack([ds.X, column]))


def _key_values(ds: Dataset, name: str):
    j = ds.column_index(name)
    col = ds.columns[j]
    if col.kind == CATEGORICAL:
        cats = col.categories
        return [None if np.isnan(v) else cats[int(v)] for v in ds.X[:, j]]
    return ds.X[:, j].tolist()


def merge_datasets(ds: Dataset, other: Dataset, on: Optional[str] = None) -> Dataset:
    """Positional merge without a key, inner join on ``on`` otherwise"""
    if on is None:
        if ds.n_rows != other.n_rows:
            raise RowCountMismatchError(
                f"Keyless merge needs equal row counts ({ds.n_rows} vs {other.n_rows})")
        left_idx = right_idx = np.arange(ds.n_rows)
        right_cols = list(range(other.n_features))
    else:
        ds.column_index(on)
        other.column_index(on)
        pairs = pd.merge(
            pd.DataFrame({'key': _key_values(ds, on), 'li': np.arange(ds.n_rows)}),
            pd.DataFrame({'key': _key_values(other, on), 'ri': np.arange(other.n_rows)}),
            on='key', how='inner', sort=False,
        )
        left_idx = pairs['li'].to_numpy(dtype=np.int64)
        right_idx = pairs['ri'].to_numpy(dtype=np.int64)
        right_cols = [j for j in range(other.n_features) if other.columns[j].name != on]

    names = ds.feature_names + [other.columns[j].name for j in right_cols]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise DuplicateColumnError(f"Duplicate column names after merge: {dupes}", columns=dupes)

    X = np.column_stack([ds.X[left_idx], other.X[np.ix_(right_idx, right_cols)]])
    columns = [dataclasses.replace(c) for c in ds.columns] + \
              [dataclasses.replace(other.columns[j]) for j in right_cols]
    if ds.y is not None:
        y, class_names, target = ds.y[left_idx], ds.class_names, ds.target_name
    elif other.y is not None:
        y, class_names, target = other.y[right_idx], other.class_names, other.target_name
    else:
        y, class_names, target = None, None, None
    return Dataset(columns, X, y, class_names, target, task=ds.task)


def column_ops(ds: Dataset, op: str, names=None, other: Optional[Dataset] = None,
               on: Optional[str] = None, values=None, kind: str = NUMERIC) -> Dataset:
    """Dispatch for the select / drop / add / merge helpers"""
    if op == "select":
        return select_columns(ds, names or [])
    if op == "drop":
        return drop_columns(ds, names or [])
    if op == "add":
        return add_column(ds, names, values, kind)
    if op == "merge":
        if other is None:
            raise DataError("merge needs another dataset")
        return merge_datasets(ds, other, on)
    raise DataError(f"Unknown column operation: {op}")


def select_features_by_importance(ds: Dataset, importances, threshold: float = 0.0) -> Dataset:
    """Drop columns whose importance is <= threshold"""
    importances = np.asarray(importances, dtype=np.float64)
    if len(importances) != ds.n_features:
        raise DataError("One importance value per feature is required")
    weak = [c.name for c, imp in zip(ds.columns, importances) if imp <= threshold]
    if len(weak) == ds.n_features:
        raise DataError("Every feature falls below the importance threshold")
    if weak:
        logger.info(f"Dropping {len(weak)} low-importance columns: {weak}")
    return drop_columns(ds, weak)

# ─── ANALYSIS ──────────────────────────────────────────────────────
def correlation_matrix(ds: Dataset) -> np.ndarray:
    """Pearson correlation of all feature columns (diagonal 1, constant -> 0)"""
    if ds.n_rows < 2:
        raise DataError("correlation_matrix needs at least 2 rows")
    if ds.has_missing:
        raise DataError("Impute missing cells before computing correlations")
    X = ds.X
    centered = X - X.mean(axis=0)
    std = np.sqrt((centered ** 2).mean(axis=0))
    d = X.shape[1]
    corr = np.zeros((d, d))
    varying = std > 0
    if varying.any():
        z = centered[:, varying] / std[varying]
        corr[np.ix_(varying, varying)] = (z.T @ z) / X.shape[0]
    corr = np.clip((corr + corr.T) / 2, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    flagged = [ds.columns[j].name for j in np.flatnonzero(~varying)]
    if flagged:
        logger.warning(f"Constant columns get zero correlation: {flagged}")
    return corr


def profile(ds: Dataset) -> dict:
    """Per-column summary for data inspection"""
    columns = []
    for j, col in enumerate(ds.columns):
        values = ds.X[:, j]
        missing = np.isnan(values)
        present = values[~missing]
        entry = {
            'name': col.name,
            'kind': col.kind,
            'missing': int(missing.sum()),
            'distinct': int(len(np.unique(present))),
        }
        if col.kind == NUMERIC and present.size:
            entry.update({
                'min': float(present.min()),
                'max': float(present.max()),
                'mean': float(present.mean()),
                'std': float(present.std()),
            })
        elif col.kind == CATEGORICAL:
            cats = col.categories
            codes, counts = np.unique(present.astype(np.int64), return_counts=True)
            entry['categories'] = {cats[c]: int(m) for c, m in zip(codes, counts)}
        columns.append(entry)

    summary = {'n_rows': ds.n_rows, 'n_features': ds.n_features, 'columns': columns,
               'missing_cells': int(np.isnan(ds.X).sum())}
    if ds.y is not None and ds.task == "classification":
        codes, counts = np.unique(ds.y, return_counts=True)
        names = ds.class_names or [str(c) for c in range(ds.n_classes)]
        summary['class_balance'] = {names[c]: int(m) for c, m in zip(codes, counts)}
    return summary
