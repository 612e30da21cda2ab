"""Versioned JSON records for trained regressors.

Floats are written with ``repr`` semantics by :mod:`json`, so a reload
reproduces every parameter bit-exactly.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from sddp.errors import ConfigError, DataError
from sddp.net.arch import NetConfig, layout
from sddp.net.regressor import TemporalRegressor

FORMAT = "sddp-regressor"
LAYOUT_VERSION = 1


def regressor_to_dict(reg):
    return {
        "format": FORMAT,
        "layout_version": LAYOUT_VERSION,
        "config": reg.config.to_dict(),
        "layout": [[name, list(shape)] for name, shape in reg.layout],
        "init_stream": list(reg.init_stream) if reg.init_stream is not None else None,
        "params": [float(v) for v in reg.params],
    }


def regressor_from_dict(d):
    if d.get("format") != FORMAT:
        raise DataError(f"not a regressor record (format={d.get('format')!r})")
    if d.get("layout_version") != LAYOUT_VERSION:
        raise ConfigError(f"regressor layout version {d.get('layout_version')!r} "
                          f"is not supported (expected {LAYOUT_VERSION})")
    config = NetConfig.from_dict(d["config"])
    expected = [[name, list(shape)] for name, shape in layout(config)]
    if d["layout"] != expected:
        raise DataError("stored layout does not match the configured architecture")
    init = tuple(d["init_stream"]) if d.get("init_stream") is not None else None
    return TemporalRegressor(config, np.array(d["params"], dtype=np.float64), init)


def save_regressor(reg, path):
    Path(path).write_text(json.dumps(regressor_to_dict(reg)))
    return path


def load_regressor(path):
    return regressor_from_dict(json.loads(Path(path).read_text()))
