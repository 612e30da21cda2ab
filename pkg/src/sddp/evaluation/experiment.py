"""Repetition experiments: split, standardize, optionally mask, fit, score."""
from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from sddp.errors import SddpError
from sddp.evaluation.metrics import metrics
from sddp.linalg import derive_seed
from sddp.panel import (MaskedPanel, chronological_split, inject_missing, load_masked_panel,
                        load_panel)
from sddp.pipeline import fit_pipeline, holdout_forecasts
from sddp.serialize import dict_digest, dumps, write_json
from sddp.simulate import simulate

REPORT_SCHEMA = "sddp-experiment-report"
REPORT_VERSION = 1


@lru_cache(maxsize=4)
def _csv_panel(path, target_column, delimiter, header, mask):
    if mask is not None:
        return load_masked_panel(path, target_column, delimiter, header, mask_path=mask)
    return load_panel(path, target_column, delimiter, header)


def repetition_panel(cfg, r):
    """The full raw panel used by repetition ``r``."""
    src = cfg.panel
    if src.csv is not None:
        return _csv_panel(src.csv, src.target_column, src.delimiter, src.header, src.mask)
    return simulate(cfg.synthetic_config(derive_seed(cfg.base_seed, r, "data"))).panel


def _cell_key(rate, r, method):
    return (float(rate), int(r), method)


def run_cell(cfg, rate, r, method):
    """One (missing rate, repetition, method) cell; never raises on pipeline errors."""
    t0 = time.perf_counter()
    out = {"missing_rate": float(rate), "repetition": int(r), "method": method,
           "seed": derive_seed(cfg.base_seed, r, method)}
    try:
        panel = repetition_panel(cfg, r)
        if rate > 0:
            mask_seed = derive_seed(cfg.base_seed, r, "mask", repr(float(rate)))
            injected = inject_missing(panel, rate, mask_seed)
            if isinstance(panel, MaskedPanel):
                # keep cells that were already missing in the source data
                mask = injected.mask & panel.mask
                injected = MaskedPanel(injected.panel.with_values(
                    np.where(mask == 1, injected.panel.values, 0.0)), mask)
            panel = injected
            out["realized_missing"] = panel.realized_missing
        else:
            out["realized_missing"] = 0.0
        train, _ = chronological_split(panel, cfg.panel.train_fraction)
        n_train = train.T
        tc = replace(cfg.train, seed=out["seed"])
        pipe = fit_pipeline(train, method, cfg.horizon, cfg.window, cfg.K, cfg.kmax,
                            cfg.step_net(), cfg.head_net(), tc, cfg.refinement_passes,
                            cfg.panel.standardize, cfg.correlation_selection)
        preds, truth = holdout_forecasts(pipe, panel, n_train)
        m = metrics(preds, truth)
        out.update(status="ok", mae=m.mae, rmse=m.rmse, mse=m.rmse ** 2, K=pipe.K,
                   n_test=int(truth.shape[0]))
    except (SddpError, np.linalg.LinAlgError, FloatingPointError) as exc:
        out.update(status="failed", error=f"{type(exc).__name__}: {exc}")
    return out, time.perf_counter() - t0


def _run_cell_args(args):
    return run_cell(*args)


def percentile_interval(values, mean):
    """Empirical 2.5 / 97.5 percentiles, widened if needed to contain ``mean``."""
    lo, hi = np.percentile(values, [2.5, 97.5])
    return float(min(lo, mean)), float(max(hi, mean))


@dataclass
class ExperimentReport:
    cells: list
    summary: list
    runtimes: dict
    config: dict

    def to_dict(self):
        return {
            "schema": REPORT_SCHEMA,
            "version": REPORT_VERSION,
            "name": self.config.get("name"),
            "config": self.config,
            "config_digest": dict_digest(self.config),
            "base_seed": self.config["base_seed"],
            "repetitions": self.config["repetitions"],
            "cells": self.cells,
            "summary": self.summary,
        }

    def to_json(self):
        return dumps(self.to_dict())

    def cell(self, method, repetition, missing_rate=0.0):
        for c in self.cells:
            if (c["method"], c["repetition"], c["missing_rate"]) == (method, repetition,
                                                                       float(missing_rate)):
                return c
        raise KeyError((method, repetition, missing_rate))

    def values(self, method, key, missing_rate=0.0):
        """Per-repetition ``key`` values (NaN for failed cells), in repetition order."""
        cells = sorted((c for c in self.cells if c["method"] == method
                        and c["missing_rate"] == float(missing_rate)),
                       key=lambda c: c["repetition"])
        return np.array([c.get(key, np.nan) if c["status"] == "ok" else np.nan for c in cells])

    def write(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "report.json").write_text(self.to_json(), encoding="utf-8")
        write_json(directory / "runtimes.json", self.runtimes)
        cols = ["missing_rate", "method", "repetition", "status", "mae", "rmse", "K",
                "realized_missing", "seed", "error"]
        with open(directory / "report.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for c in self.cells:
                w.writerow([repr(c[k]) if isinstance(c.get(k), float) else c.get(k, "")
                            for k in cols])
        return directory


def _summarize(cells, cfg):
    rows = []
    for rate in cfg.missing_rates:
        for method in cfg.methods:
            group = [c for c in cells if c["method"] == method and c["missing_rate"] == float(rate)]
            ok = [c for c in group if c["status"] == "ok"]
            row = {"missing_rate": float(rate), "method": method, "n_ok": len(ok),
                   "n_failed": len(group) - len(ok)}
            for key in ("mae", "rmse"):
                if ok:
                    v = np.array([c[key] for c in ok])
                    mean = float(v.mean())
                    lo, hi = percentile_interval(v, mean)
                    row[key] = {"mean": mean, "lower": lo, "upper": hi,
                                "median": float(np.median(v))}
                else:
                    row[key] = None
            if rate > 0 and group:
                row["realized_missing_mean"] = float(np.mean([c["realized_missing"]
                                                              for c in group
                                                              if "realized_missing" in c]))
            rows.append(row)
    return rows


def run_experiment(cfg, workers=None):
    """Run every (missing rate, repetition, method) cell and aggregate.

    Each cell derives all randomness from ``(base_seed, repetition,
    method)`` (plus the rate for masks), so the report is identical for any
    number of workers.
    """
    workers = cfg.workers if workers is None else workers
    jobs = [(cfg, float(rate), r, m) for rate in cfg.missing_rates
            for r in range(cfg.repetitions) for m in cfg.methods]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell_args, jobs, chunksize=1))
    else:
        results = [_run_cell_args(j) for j in jobs]
    order = sorted(range(len(jobs)), key=lambda i: _cell_key(*jobs[i][1:]))
    cells = [results[i][0] for i in order]
    runtimes = {"cells": [{"missing_rate": results[i][0]["missing_rate"],
                           "repetition": results[i][0]["repetition"],
                           "method": results[i][0]["method"], "seconds": results[i][1]}
                          for i in order]}
    runtimes["mean_seconds"] = {m: float(np.mean([c["seconds"] for c in runtimes["cells"]
                                                  if c["method"] == m])) for m in cfg.methods}
    return ExperimentReport(cells, _summarize(cells, cfg), runtimes, cfg.to_dict())
