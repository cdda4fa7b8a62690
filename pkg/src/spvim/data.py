"""Dataset container and delimited-text ingestion.

Input files are comma-delimited with a header row.  Rows containing any
missing cell (empty, ``NA``, ``NaN``, or ``null``, case-insensitive)
are dropped and counted.  Binary outcomes must be coded 0/1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError

TASKS = ("regression", "binary")
_MISSING = {"", "na", "nan", "null"}


@dataclass(frozen=True)
class Dataset:
    """An in-memory supervised-learning dataset.

    ``X`` is the ``n x p`` feature matrix, ``y`` the outcome vector.
    ``dropped_rows`` records how many input rows were discarded for
    missing cells during ingestion.
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple
    outcome_name: str
    task: str
    dropped_rows: int = 0

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise DataError("X must be 2-d and y 1-d with matching rows")
        if X.shape[0] == 0:
            raise DataError("dataset has no usable rows")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
            raise DataError("dataset contains non-finite values")
        if self.task not in TASKS:
            raise DataError(f"task must be one of {TASKS}, got {self.task!r}")
        if len(self.feature_names) != X.shape[1]:
            raise DataError("feature_names length must match feature count")
        if self.task == "binary":
            bad = sorted(float(v) for v in set(np.unique(y)) - {0.0, 1.0})
            if bad:
                raise DataError(
                    f"binary task requires outcomes in {{0, 1}}; found values {bad}"
                )
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def column(self, name: str) -> int:
        """0-based position of a feature column by name."""
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise DataError(f"unknown feature column {name!r}") from None


def load_dataset(path, outcome_column: str, task: str) -> Dataset:
    """Load a delimited text file with a header row.

    Rows with any missing cell are dropped (and counted); remaining
    cells must parse as numbers.  Row order follows the file.
    """
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if outcome_column not in header:
            raise DataError(f"{path}: no column named {outcome_column!r} in header {header}")
        y_pos = header.index(outcome_column)
        rows = []
        dropped = 0
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            cells = [c.strip() for c in row]
            if any(c.lower() in _MISSING for c in cells):
                dropped += 1
                continue
            try:
                rows.append([float(c) for c in cells])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: no usable rows after dropping {dropped} incomplete rows")
    table = np.asarray(rows, dtype=float)
    feature_names = tuple(h for i, h in enumerate(header) if i != y_pos)
    X = np.delete(table, y_pos, axis=1)
    return Dataset(
        X=X,
        y=table[:, y_pos],
        feature_names=feature_names,
        outcome_name=outcome_column,
        task=task,
        dropped_rows=dropped,
    )


def save_dataset(dataset: Dataset, path) -> None:
    """Write a dataset back to delimited text; reloads are exact."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(dataset.feature_names) + [dataset.outcome_name])
        for i in range(dataset.n):
            writer.writerow([repr(float(v)) for v in dataset.X[i]] + [repr(float(dataset.y[i]))])
