"""CSV ingestion, dummy encoding, min-max scaling and repeated splits."""
from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .model import Dataset, ScalingSpec

logger = logging.getLogger(__name__)


class DataError(ValueError):
    """Malformed or unusable input data."""


MISSING = {"", "?", "na", "nan", "null", "none"}


@dataclass
class RawTable:
    """Parsed CSV with typed columns.

    ``columns`` maps name to either a float array (numeric) or a list of
    strings (categorical).  ``target`` holds the raw target values as strings.
    """

    names: list[str]
    columns: dict[str, np.ndarray | list[str]]
    target_name: str | None
    target: list[str]
    dropped_rows: int = 0
    warnings: list[str] = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return len(self.target)

    def is_numeric(self, name: str) -> bool:
        return isinstance(self.columns[name], np.ndarray)

    def take(self, idx) -> "RawTable":
        idx = np.asarray(idx, dtype=np.intp)
        cols = {}
        for name, col in self.columns.items():
            cols[name] = col[idx] if isinstance(col, np.ndarray) else [col[i] for i in idx]
        return RawTable(list(self.names), cols, self.target_name,
                        [self.target[i] for i in idx], 0, [])


def _is_float(s: str) -> bool:
    try:
        v = float(s)
    except ValueError:
        return False
    return math.isfinite(v)


def ingest_csv(path, target_column: str | None, categorical: Sequence[str] = (),
               numeric: Sequence[str] = ()) -> RawTable:
    """Read a comma-separated file with a header row.

    Columns whose every value parses as a number are numeric unless listed in
    ``categorical``; columns listed in ``numeric`` must parse or a
    :class:`DataError` naming the offending row and column is raised.  Rows
    with missing cells are dropped and counted.  With ``target_column=None``
    every column is a feature and the target is left empty.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise DataError(f"{path}: file is empty")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise DataError(f"{path}: no data rows")
    if target_column is not None and target_column not in header:
        raise DataError(f"{path}: target column {target_column!r} not in header {header}")
    width = len(header)
    kept = []
    dropped = 0
    for lineno, r in enumerate(body, start=2):
        if len(r) != width:
            raise DataError(f"{path}: row {lineno} has {len(r)} cells, expected {width}")
        cells = [c.strip() for c in r]
        if any(c.lower() in MISSING for c in cells):
            dropped += 1
            continue
        kept.append((lineno, cells))
    if not kept:
        raise DataError(f"{path}: every row has missing values")
    feature_names = [h for h in header if h != target_column]
    t_idx = header.index(target_column) if target_column is not None else None
    columns: dict[str, np.ndarray | list[str]] = {}
    for name in feature_names:
        j = header.index(name)
        values = [cells[j] for _, cells in kept]
        if name in categorical:
            columns[name] = values
            continue
        bad = next(((ln, v) for (ln, _), v in zip(kept, values) if not _is_float(v)), None)
        if bad is None:
            columns[name] = np.array([float(v) for v in values])
        elif name in numeric:
            raise DataError(f"{path}: row {bad[0]}, column {name!r}: cannot parse {bad[1]!r}")
        else:
            columns[name] = values
    target = [cells[t_idx] if t_idx is not None else "" for _, cells in kept]
    table = RawTable(feature_names, columns, target_column, target, dropped)
    if dropped:
        msg = f"{path}: dropped {dropped} rows with missing values"
        table.warnings.append(msg)
        logger.warning(msg)
    return table


def class_labels_of(table: RawTable) -> list:
    """Sorted distinct target values; numeric strings become numbers."""
    values = sorted(set(table.target), key=_label_key)
    return [_as_number(v) for v in values]


def _label_key(v: str):
    return (0, float(v), v) if _is_float(v) else (1, 0.0, v)


def _as_number(v: str):
    if not _is_float(v):
        return v
    f = float(v)
    return int(f) if f.is_integer() else f


def fit_scaling(train: RawTable) -> ScalingSpec:
    cols, lo, hi = [], [], []
    for name in train.names:
        col = train.columns[name]
        if isinstance(col, np.ndarray):
            cols.append((name, None))
            lo.append(float(col.min()))
            hi.append(float(col.max()))
        else:
            levels = sorted(set(col))
            cols.append((name, levels))
            lo.extend([0.0] * len(levels))
            hi.extend([1.0] * len(levels))
    return ScalingSpec(cols, np.array(lo), np.array(hi))


def transform(table: RawTable, spec: ScalingSpec, warn: list | None = None) -> np.ndarray:
    """Encode and scale a table with fitted scaling parameters; out-of-range values are clamped."""
    blocks = []
    pos = 0
    for name, levels in spec.columns:
        if name not in table.columns:
            raise DataError(f"column {name!r} missing from table")
        col = table.columns[name]
        if levels is None:
            if not isinstance(col, np.ndarray):
                raise DataError(f"column {name!r} is numeric in training data but not here")
            lo, hi = spec.minimum[pos], spec.maximum[pos]
            if hi > lo:
                z = (col - lo) / (hi - lo)
            else:
                z = np.zeros_like(col)
            blocks.append(np.clip(z, 0.0, 1.0)[:, None])
            pos += 1
        else:
            vals = [str(v) for v in (col.tolist() if isinstance(col, np.ndarray) else col)]
            index = {lv: i for i, lv in enumerate(levels)}
            block = np.zeros((len(vals), len(levels)))
            unseen = set()
            for i, v in enumerate(vals):
                j = index.get(v)
                if j is None:
                    unseen.add(v)
                else:
                    block[i, j] = 1.0
            if unseen:
                msg = f"column {name!r}: unseen levels {sorted(unseen)} encoded as all zeros"
                if warn is not None:
                    warn.append(msg)
                warnings.warn(msg, stacklevel=2)
            blocks.append(block)
            pos += len(levels)
    return np.hstack(blocks) if blocks else np.zeros((table.n_rows, 0))


def encode_labels(table: RawTable, class_labels: list) -> np.ndarray:
    index = {str(lv): k for k, lv in enumerate(class_labels)}
    for lv in class_labels:
        if isinstance(lv, (int, float)):
            index.setdefault(repr(lv), index[str(lv)])
    out = np.empty(table.n_rows, dtype=np.intp)
    for i, v in enumerate(table.target):
        k = index.get(v)
        if k is None and _is_float(v):
            k = index.get(str(_as_number(v)))
        if k is None:
            raise DataError(f"unknown class label {v!r}")
        out[i] = k
    return out


def encode_and_scale(train: RawTable, test: RawTable | None = None, class_labels=None,
                     regression: bool = False):
    """Fit encoding/scaling on ``train`` and apply it to both tables.

    Returns ``(train_data, test_data, spec)``; ``test_data`` is ``None`` when
    no test table is given.  Warnings are appended to ``test.warnings``.
    """
    spec = fit_scaling(train)
    names = spec.feature_names
    if regression:
        y_tr = np.array([float(v) for v in train.target])
        d_tr = Dataset(transform(train, spec), y_tr, None, names)
    else:
        class_labels = class_labels if class_labels is not None else class_labels_of(train)
        d_tr = Dataset(transform(train, spec), encode_labels(train, class_labels),
                       len(class_labels), names)
    d_te = None
    if test is not None:
        X_te = transform(test, spec, test.warnings)
        if regression:
            d_te = Dataset(X_te, np.array([float(v) for v in test.target]), None, names)
        else:
            d_te = Dataset(X_te, encode_labels(test, class_labels), len(class_labels), names)
    return d_tr, d_te, spec


def repeated_split(labels, train_fraction: float = 0.75, repetitions: int = 10,
                   seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Stratified random train/test index pairs.

    Every class keeps ``floor(train_fraction * n_k)`` members for training;
    the remaining ``round(train_fraction * N)`` minus that total go to the
    classes with the largest fractional parts (random order among equal
    parts), so each side deviates from proportional by under one member per
    class.  Each class keeps at least one member on each side.  Indices are
    returned sorted.
    """
    labels = np.asarray(labels)
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    classes, counts = np.unique(labels, return_counts=True)
    if np.any(counts < 2):
        small = classes[counts < 2].tolist()
        raise DataError(f"classes {small} have fewer than 2 members; cannot stratify")
    members = [np.flatnonzero(labels == c) for c in classes]
    exact = train_fraction * counts
    base = np.floor(exact).astype(int)
    extra = int(math.floor(train_fraction * labels.size + 0.5)) - int(base.sum())
    frac = exact - base
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(repetitions):
        n_tr = base.copy()
        order = sorted(range(classes.size), key=lambda k: (-frac[k], rng.random()))
        for k in order[:max(extra, 0)]:
            n_tr[k] += 1
        n_tr = np.clip(n_tr, 1, counts - 1)
        tr, te = [], []
        for k, m in enumerate(members):
            perm = rng.permutation(m)
            tr.append(perm[:n_tr[k]])
            te.append(perm[n_tr[k]:])
        out.append((np.sort(np.concatenate(tr)), np.sort(np.concatenate(te))))
    return out


def iter_splits(table: RawTable, splits, regression: bool = False,
                class_labels=None) -> Iterator[tuple[Dataset, Dataset, ScalingSpec]]:
    class_labels = None if regression else (class_labels or class_labels_of(table))
    for tr, te in splits:
        yield encode_and_scale(table.take(tr), table.take(te), class_labels, regression)
