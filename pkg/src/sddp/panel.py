"""Time panels: CSV ingestion, chronological splits, scaling and masking."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from sddp.errors import ConfigError, DataError, ParseError, ShapeError
from sddp.linalg import rng_stream

MASK_STREAM = 0x6D61736B  # stream id reserved for missingness draws


@dataclass(frozen=True)
class TimePanel:
    """N predictors observed over T periods plus the target series.

    ``values[i, t]`` is predictor ``i`` at time ``t``.
    """

    values: np.ndarray
    target: np.ndarray
    names: Optional[tuple] = None
    target_name: Optional[str] = None
    horizon_hint: Optional[int] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        target = np.array(self.target, dtype=np.float64).reshape(-1)
        if values.ndim != 2:
            raise ShapeError(f"panel values must be N x T, got shape {values.shape}")
        if target.shape[0] != values.shape[1]:
            raise ShapeError(
                f"target length {target.shape[0]} does not match T={values.shape[1]}")
        if values.shape[1] < 2:
            raise DataError("a panel needs at least two time points")
        if self.names is not None:
            names = tuple(str(n) for n in self.names)
            if len(names) != values.shape[0]:
                raise ShapeError(f"{len(names)} names for {values.shape[0]} predictors")
            object.__setattr__(self, "names", names)
        values.setflags(write=False)
        target.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "target", target)

    @property
    def N(self):
        return self.values.shape[0]

    @property
    def T(self):
        return self.values.shape[1]

    def check_finite(self):
        if not (np.all(np.isfinite(self.values)) and np.all(np.isfinite(self.target))):
            raise DataError("panel contains non-finite entries")
        return self

    def columns(self, start, stop):
        return TimePanel(self.values[:, start:stop], self.target[start:stop],
                         self.names, self.target_name, self.horizon_hint)

    def with_values(self, values, target=None):
        return TimePanel(values, self.target if target is None else target,
                         self.names, self.target_name, self.horizon_hint)


@dataclass(frozen=True)
class MaskedPanel:
    """A panel whose covariates are partially observed.

    Missing cells hold 0.0 in ``panel.values``; ``mask[i, t] == 1`` marks an
    observed cell. The target is always fully observed.
    """

    panel: TimePanel
    mask: np.ndarray
    realized_missing: float = field(default=float("nan"))

    def __post_init__(self):
        mask = np.array(self.mask, dtype=np.int8)
        if mask.shape != self.panel.values.shape:
            raise ShapeError(f"mask shape {mask.shape} != panel shape {self.panel.values.shape}")
        if not np.isin(mask, (0, 1)).all():
            raise DataError("mask entries must be 0 or 1")
        if not np.all(np.isfinite(self.panel.values[mask == 1])):
            raise DataError("observed cells must be finite")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        if np.isnan(self.realized_missing):
            object.__setattr__(self, "realized_missing", float(1.0 - mask.mean()))

    @property
    def N(self):
        return self.panel.N

    @property
    def T(self):
        return self.panel.T


@dataclass(frozen=True)
class StandardizationStats:
    means: np.ndarray
    scales: np.ndarray
    target_mean: float
    target_scale: float
    degenerate: np.ndarray = None
    target_degenerate: bool = False

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64).reshape(-1)
        scales = np.asarray(self.scales, dtype=np.float64).reshape(-1)
        if means.shape != scales.shape:
            raise ShapeError("means and scales must have equal length")
        if np.any(scales <= 0):
            raise DataError("standardization scales must be strictly positive")
        if self.target_scale <= 0:
            raise DataError("target scale must be strictly positive")
        degenerate = (np.zeros(means.shape, dtype=bool) if self.degenerate is None
                      else np.asarray(self.degenerate, dtype=bool))
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "degenerate", degenerate)
        object.__setattr__(self, "target_mean", float(self.target_mean))
        object.__setattr__(self, "target_scale", float(self.target_scale))

    @property
    def N(self):
        return self.means.shape[0]

    def transform_values(self, values):
        return (np.asarray(values, dtype=np.float64) - self.means[:, None]) / self.scales[:, None]

    def inverse_values(self, values):
        return np.asarray(values, dtype=np.float64) * self.scales[:, None] + self.means[:, None]

    def transform_target(self, y):
        return (np.asarray(y, dtype=np.float64) - self.target_mean) / self.target_scale

    def inverse_target(self, y):
        return np.asarray(y, dtype=np.float64) * self.target_scale + self.target_mean

    def to_dict(self):
        return {
            "means": self.means.tolist(),
            "scales": self.scales.tolist(),
            "target_mean": self.target_mean,
            "target_scale": self.target_scale,
            "degenerate": self.degenerate.astype(int).tolist(),
            "target_degenerate": bool(self.target_degenerate),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["means"]), np.array(d["scales"]), d["target_mean"],
                   d["target_scale"], np.array(d["degenerate"], dtype=bool),
                   bool(d.get("target_degenerate", False)))


# --------------------------------------------------------------------------
# CSV io


def _read_rows(path, delimiter):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    # trailing blank lines are tolerated
    while rows and not any(cell.strip() for cell in rows[-1]):
        rows.pop()
    return rows


def _resolve_target(target_column, header, width):
    if isinstance(target_column, (int, np.integer)):
        idx = int(target_column)
        if not -width <= idx < width:
            raise ConfigError(f"target column index {idx} out of range for {width} columns")
        return idx % width
    if header is None:
        raise ConfigError("a named target column requires a header row")
    if target_column not in header:
        raise ConfigError(f"target column {target_column!r} not found in header")
    return header.index(target_column)


def _parse_table(path, target_column, delimiter=",", header=True, allow_missing=False):
    rows = _read_rows(path, delimiter)
    if not rows:
        raise ParseError(f"{path} is empty", line=1)
    first_line = 1
    names = None
    if header:
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
        first_line = 2
    width = len(names) if names is not None else len(rows[0]) if rows else 0
    if width < 2:
        raise ParseError("need a target column and at least one predictor", line=1)
    tcol = _resolve_target(target_column, names, width)
    data = np.zeros((len(rows), width))
    observed = np.ones((len(rows), width), dtype=np.int8)
    for r, row in enumerate(rows):
        line = first_line + r
        if len(row) != width:
            raise ParseError(f"expected {width} fields, found {len(row)}", line=line)
        for c, cell in enumerate(row):
            cell = cell.strip()
            if cell == "":
                if allow_missing and c != tcol:
                    observed[r, c] = 0
                    continue
                what = "target" if c == tcol else f"column {c + 1}"
                raise DataError(f"row {line}: empty cell in {what}")
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"row {line}: non-numeric value {cell!r} in column {c + 1}") from None
            if not np.isfinite(v):
                raise DataError(f"row {line}: non-finite value {cell!r} in column {c + 1}")
            data[r, c] = v
    keep = [c for c in range(width) if c != tcol]
    pnames = tuple(names[c] for c in keep) if names is not None else None
    tname = names[tcol] if names is not None else None
    panel = TimePanel(data[:, keep].T, data[:, tcol], pnames, tname)
    return panel, observed[:, keep].T


def load_panel(path, target_column=0, delimiter=",", header=True):
    """Read a CSV with one row per time point into an N x T panel.

    Every non-target column becomes a predictor; file row order is time order.
    """
    panel, _ = _parse_table(path, target_column, delimiter, header, allow_missing=False)
    return panel


def load_masked_panel(path, target_column=0, delimiter=",", header=True, mask_path=None):
    """Like :func:`load_panel` but empty covariate cells become masked entries.

    If ``mask_path`` is given (or ``<path>.mask.csv`` exists) the sidecar
    mask is used and must agree with the empty cells.
    """
    panel, observed = _parse_table(path, target_column, delimiter, header, allow_missing=True)
    sidecar = Path(mask_path) if mask_path is not None else Path(str(path) + ".mask.csv")
    if sidecar.exists():
        mask = _read_mask(sidecar, panel.values.shape, delimiter)
        if np.any((observed == 0) & (mask == 1)):
            raise DataError(f"{sidecar}: mask marks an empty cell as observed")
        observed = mask
    values = np.where(observed == 1, panel.values, 0.0)
    return MaskedPanel(panel.with_values(values), observed)


def _read_mask(path, shape, delimiter):
    rows = _read_rows(path, delimiter)
    n, t = shape
    if len(rows) != t:
        raise ParseError(f"{path}: expected {t} mask rows, found {len(rows)}", line=len(rows))
    mask = np.zeros((t, n), dtype=np.int8)
    for r, row in enumerate(rows):
        if len(row) != n:
            raise ParseError(f"{path}: expected {n} fields, found {len(row)}", line=r + 1)
        for c, cell in enumerate(row):
            if cell.strip() not in ("0", "1"):
                raise DataError(f"{path} row {r + 1}: mask cell must be 0 or 1, got {cell!r}")
            mask[r, c] = int(cell)
    return mask.T


def write_panel(panel, path, delimiter=",", mask=None):
    """Write a panel in the same layout :func:`load_panel` reads.

    The target is written first. Floats use ``repr`` so a reload is bit-exact.
    With a mask, missing cells are written empty and ``<path>.mask.csv`` is
    written alongside.
    """
    if isinstance(panel, MaskedPanel):
        mask, panel = panel.mask, panel.panel
    path = Path(path)
    names = panel.names or tuple(f"x{i + 1}" for i in range(panel.N))
    tname = panel.target_name or "y"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow([tname, *names])
        for t in range(panel.T):
            row = [repr(float(panel.target[t]))]
            for i in range(panel.N):
                if mask is not None and mask[i, t] == 0:
                    row.append("")
                else:
                    row.append(repr(float(panel.values[i, t])))
            w.writerow(row)
    if mask is not None:
        with open(str(path) + ".mask.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
            for t in range(panel.T):
                w.writerow([int(v) for v in mask[:, t]])
    return path


# --------------------------------------------------------------------------
# transforms


def chronological_split(panel, train_fraction=0.8):
    """First ``floor(fraction * T)`` columns train, the remainder test."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    base = panel.panel if isinstance(panel, MaskedPanel) else panel
    n_train = int(np.floor(train_fraction * base.T))
    if n_train < 2 or base.T - n_train < 1:
        raise DataError(f"split of T={base.T} at {train_fraction} leaves too few columns")
    if isinstance(panel, MaskedPanel):
        return (MaskedPanel(base.columns(0, n_train), panel.mask[:, :n_train]),
                MaskedPanel(base.columns(n_train, base.T), panel.mask[:, n_train:]))
    return base.columns(0, n_train), base.columns(n_train, base.T)


def compute_stats(values, target, mask=None):
    values = np.asarray(values, dtype=np.float64)
    if mask is None:
        means = values.mean(axis=1)
        stds = values.std(axis=1)
    else:
        w = np.asarray(mask, dtype=np.float64)
        counts = np.maximum(w.sum(axis=1), 1.0)
        means = (values * w).sum(axis=1) / counts
        stds = np.sqrt((w * (values - means[:, None]) ** 2).sum(axis=1) / counts)
    # a constant row can leave a rounding-level std behind; treat it as zero
    degenerate = ~(stds > 1e-12 * np.abs(means))
    scales = np.where(degenerate, 1.0, stds)
    t_mean = float(np.mean(target))
    t_std = float(np.std(target))
    t_deg = not t_std > 1e-12 * abs(t_mean)
    return StandardizationStats(means, scales, t_mean, 1.0 if t_deg else t_std,
                                degenerate, t_deg)


def standardize(panel, stats=None):
    """Z-score each predictor row and the target.

    Without ``stats`` the population mean and standard deviation of the
    given panel are used; otherwise the supplied (training) statistics are
    applied. Zero-variance rows get scale 1 and a degenerate flag.
    """
    masked = isinstance(panel, MaskedPanel)
    base = panel.panel if masked else panel
    mask = panel.mask if masked else None
    if stats is None:
        stats = compute_stats(base.values, base.target, mask)
    elif stats.N != base.N:
        raise ShapeError(f"stats cover {stats.N} predictors, panel has {base.N}")
    values = stats.transform_values(base.values)
    if masked:
        values = np.where(mask == 1, values, 0.0)
    out = base.with_values(values, stats.transform_target(base.target))
    if masked:
        return MaskedPanel(out, mask, panel.realized_missing), stats
    return out, stats


def unstandardize(panel, stats):
    masked = isinstance(panel, MaskedPanel)
    base = panel.panel if masked else panel
    values = stats.inverse_values(base.values)
    if masked:
        values = np.where(panel.mask == 1, values, 0.0)
    out = base.with_values(values, stats.inverse_target(base.target))
    return MaskedPanel(out, panel.mask, panel.realized_missing) if masked else out


def inject_missing(panel, rate, seed):
    """Mask each covariate cell independently with probability ``rate``."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"missing rate must lie in [0, 1), got {rate}")
    if isinstance(panel, MaskedPanel):
        panel = panel.panel
    stream = rng_stream(seed, MASK_STREAM)
    draws = stream.uniform(size=panel.values.shape)
    mask = (draws >= rate).astype(np.int8)
    values = np.where(mask == 1, panel.values, 0.0)
    realized = float(1.0 - mask.mean())
    return MaskedPanel(panel.with_values(values), mask, realized)


def full_mask(panel):
    return MaskedPanel(panel, np.ones(panel.values.shape, dtype=np.int8), 0.0)
