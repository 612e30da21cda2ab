"""Forecast accuracy metrics and cross-method min-max normalization."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from sddp.errors import ConfigError, ParseError, ShapeError

METRICS = ("MAE", "RMSE")


@dataclass(frozen=True)
class MetricPair:
    mae: float
    rmse: float

    def to_dict(self):
        return {"mae": self.mae, "rmse": self.rmse}


def metrics(predictions, targets):
    p = np.asarray(predictions, dtype=np.float64).reshape(-1)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if p.shape != y.shape:
        raise ShapeError(f"{p.shape[0]} predictions for {y.shape[0]} targets")
    if p.size == 0:
        raise ShapeError("metrics need at least one prediction")
    err = p - y
    if not np.all(np.isfinite(err)):
        raise ShapeError("predictions and targets must be finite")
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err * err)))
    # sqrt(mean e^2) >= mean |e| holds exactly; guard against last-bit rounding
    return MetricPair(mae, max(rmse, mae))


def minmax_normalize(column):
    """Map the best (smallest) error to 0 and the worst to 1.

    Returns ``(normalized, degenerate)``; a constant column (including a
    single method) maps to zeros with ``degenerate=True``.
    """
    e = np.asarray(column, dtype=np.float64).reshape(-1)
    if e.size == 0:
        raise ShapeError("normalization needs at least one method")
    if not np.all(np.isfinite(e)):
        raise ShapeError("error values must be finite")
    lo, hi = e.min(), e.max()
    if not hi > lo:
        return np.zeros_like(e), True
    return (e - lo) / (hi - lo), False


@dataclass
class ErrorTable:
    """Method x dataset grid of errors; ``values[m, d, k]`` with ``k`` over (MAE, RMSE)."""

    methods: list
    datasets: list
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        shape = (len(self.methods), len(self.datasets), len(METRICS))
        if self.values.shape != shape:
            raise ShapeError(f"error grid has shape {self.values.shape}, expected {shape}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("duplicate method names")

    def entry(self, method, dataset):
        v = self.values[self.methods.index(method), self.datasets.index(dataset)]
        return MetricPair(float(v[0]), float(v[1]))

    @classmethod
    def read_csv(cls, path):
        """Wide layout: ``method,<dataset>_MAE,<dataset>_RMSE,...``."""
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"file not found: {path}")
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ParseError("empty error table", 1)
        header = [h.strip() for h in rows[0]]
        cols = header[1:]
        datasets = []
        for c in cols:
            name, sep, metric = c.rpartition("_")
            if not sep or metric not in METRICS:
                raise ParseError(f"column {c!r} is not of the form <dataset>_MAE/_RMSE", 1)
            if name not in datasets:
                datasets.append(name)
        index = {c: j for j, c in enumerate(cols)}
        for d in datasets:
            for m in METRICS:
                if f"{d}_{m}" not in index:
                    raise ParseError(f"dataset {d!r} lacks a {m} column", 1)
        methods, grid = [], []
        for lineno, row in enumerate(rows[1:], start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno)
            try:
                nums = [float(c) for c in row[1:]]
            except ValueError:
                raise ParseError("non-numeric error value", lineno) from None
            methods.append(row[0].strip())
            grid.append([[nums[index[f"{d}_{m}"]] for m in METRICS] for d in datasets])
        return cls(methods, datasets, np.array(grid).reshape(len(methods), len(datasets), 2))

    def write_csv(self, path, values=None, fmt="{!r}"):
        values = self.values if values is None else values
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["method"] + [f"{d}_{m}" for d in self.datasets for m in METRICS])
            for i, m in enumerate(self.methods):
                w.writerow([m] + [fmt.format(float(v)) for v in values[i].reshape(-1)])


@dataclass
class NormalizedTable:
    table: ErrorTable
    normalized: np.ndarray
    degenerate: np.ndarray
    nce: np.ndarray = field(default=None)

    def nce_of(self, method):
        return float(self.nce[self.table.methods.index(method)])


def normalize_table(table):
    """Normalize every (dataset, metric) column independently and sum per method."""
    normalized = np.zeros_like(table.values)
    degenerate = np.zeros(table.values.shape[1:], dtype=bool)
    for d in range(table.values.shape[1]):
        for k in range(table.values.shape[2]):
            normalized[:, d, k], degenerate[d, k] = minmax_normalize(table.values[:, d, k])
    return NormalizedTable(table, normalized, degenerate, normalized.sum(axis=(1, 2)))


def cumulative_normalized_error(table):
    """Per-method sum of normalized MAE and RMSE across datasets (lower is better)."""
    return normalize_table(table).nce
