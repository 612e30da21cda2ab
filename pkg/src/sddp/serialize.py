"""Small helpers for lossless matrix CSVs, digests and JSON manifests."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from sddp.errors import ConfigError, DataError

FLOAT_FMT = "%.17g"


def digest(*arrays):
    """Hex SHA-256 over the shapes and float64 bytes of ``arrays``."""
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def dict_digest(d):
    return hashlib.sha256(dumps(d).encode("utf-8")).hexdigest()


def dumps(obj):
    """Canonical JSON text: sorted keys, fixed separators, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj), encoding="utf-8")


def read_json(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"file not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc


def write_matrix(path, m, header=None):
    """Write a 2-D array with 17 significant digits (exact float64 round-trip)."""
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header is not None:
            fh.write(",".join(header) + "\n")
        np.savetxt(fh, m, fmt=FLOAT_FMT, delimiter=",")


def read_matrix(path, header=False):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"file not found: {path}")
    try:
        m = np.loadtxt(path, delimiter=",", skiprows=1 if header else 0, ndmin=2)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    return m
