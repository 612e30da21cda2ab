"""End-to-end forecasting pipelines and their on-disk bundles.

A pipeline is fitted on a raw training panel (it standardizes internally)
and forecasts ``y_{t+h}`` at every ``t`` of any later panel of the same
predictors, using only information up to ``t``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from sddp.errors import ConfigError, DataError
from sddp.factors import FactorModel, extract_factors
from sddp.forecast import ForecastModel, fit_forecaster, fit_vanilla, predict
from sddp.linalg import derive_seed
from sddp.net import NetConfig, TrainConfig
from sddp.panel import MaskedPanel, StandardizationStats, compute_stats, standardize
from sddp.serialize import digest, dict_digest, read_json, write_json
from sddp.target_aware import (TargetAwarePanel, fit_sdpca_linear, fit_target_aware,
                               fit_target_aware_masked)

METHODS = ("sddp", "sdpca", "pca", "vanilla")
BUNDLE_VERSION = 1


@dataclass
class Pipeline:
    method: str
    horizon: int
    window: int
    stats: StandardizationStats
    forecaster: ForecastModel
    target_aware: Optional[TargetAwarePanel] = None
    factor_model: Optional[FactorModel] = None
    settings: Optional[dict] = None

    @property
    def K(self):
        return None if self.factor_model is None else self.factor_model.K

    def channels(self, panel):
        """Standardized forecaster input channels for a raw panel."""
        std, _ = standardize(panel, self.stats)
        base = std.panel if isinstance(std, MaskedPanel) else std
        mask = std.mask if isinstance(std, MaskedPanel) else None
        if self.method == "vanilla":
            return base.values, base.target
        if self.method in ("sddp", "sdpca"):
            xstar, _ = self.target_aware.transform(base.values, mask)
            return self.factor_model.project(xstar), base.target
        return self.factor_model.project(base.values), base.target

    def forecast(self, panel):
        """Original-scale forecasts of ``y_{t+h}`` made at each ``t`` of ``panel``."""
        channels, target = self.channels(panel)
        return predict(self.forecaster, channels, target)

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        write_json(directory / "forecaster.json", self.forecaster.to_dict())
        write_json(directory / "stats.json", self.stats.to_dict())
        if self.target_aware is not None:
            self.target_aware.save(directory / "target_aware")
        if self.factor_model is not None:
            self.factor_model.save(directory / "factors")
        manifest = {
            "format": "sddp-bundle",
            "version": BUNDLE_VERSION,
            "method": self.method,
            "horizon": self.horizon,
            "window": self.window,
            "K": self.K,
            "settings": self.settings or {},
        }
        manifest["config_digest"] = dict_digest(manifest)
        write_json(directory / "bundle.json", manifest)
        return directory

    @classmethod
    def load(cls, directory):
        directory = Path(directory)
        meta = read_json(directory / "bundle.json")
        if meta.get("format") != "sddp-bundle":
            raise ConfigError(f"{directory}: not a model bundle")
        if meta.get("version") != BUNDLE_VERSION:
            raise ConfigError(f"bundle version {meta.get('version')!r} is not supported")
        method = meta["method"]
        tap = TargetAwarePanel.load(directory / "target_aware") if method in ("sddp", "sdpca") else None
        fm = FactorModel.load(directory / "factors") if method != "vanilla" else None
        return cls(method, meta["horizon"], meta["window"],
                   StandardizationStats.from_dict(read_json(directory / "stats.json")),
                   ForecastModel.from_dict(read_json(directory / "forecaster.json")),
                   tap, fm, meta.get("settings"))


def identity_stats(panel):
    base = panel.panel if isinstance(panel, MaskedPanel) else panel
    return StandardizationStats(np.zeros(base.N), np.ones(base.N), 0.0, 1.0)


def fit_pipeline(panel, method="sddp", h=1, q0=8, K=None, kmax=None, net=None,
                 forecaster_net=None, tc=None, refinement_passes=1, standardize_inputs=True,
                 correlation=False):
    """Fit one method on a raw training panel (a ``TimePanel`` or ``MaskedPanel``).

    ``K=None`` selects the factor count with the eigenvalue-ratio rule. The
    step-one regressors use ``tc.seed``; the forecaster uses a seed derived
    from it. Baselines given a ``MaskedPanel`` see zero-filled covariates
    (the training mean after standardization).
    """
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")
    net = net or NetConfig()
    fnet = forecaster_net or net
    tc = tc or TrainConfig()
    ftc = replace(tc, seed=derive_seed(tc.seed, "forecaster"))
    masked = isinstance(panel, MaskedPanel)
    base = panel.panel if masked else panel
    if standardize_inputs:
        stats = compute_stats(base.values, base.target, panel.mask if masked else None)
    else:
        stats = identity_stats(panel)
    std, _ = standardize(panel, stats)
    sbase = std.panel if masked else std
    tap = fm = None
    if method == "vanilla":
        fc = fit_vanilla(sbase, h, q0, fnet, ftc, stats)
    else:
        if method == "sddp":
            if masked:
                tap = fit_target_aware_masked(std, h, q0, net, tc, refinement_passes)
            else:
                tap = fit_target_aware(std, h, q0, net, tc)
            source = tap.xstar
        elif method == "sdpca":
            _, tap = fit_sdpca_linear(sbase, h, q0)
            source = tap.xstar
        else:
            source = sbase.values
        fm = extract_factors(source, K, source=method, kmax=kmax, correlation=correlation)
        fc = fit_forecaster(fm.factors, sbase.target, h, q0, fnet, ftc, stats)
    settings = {
        "net": net.to_dict(),
        "forecaster_net": fnet.to_dict(),
        "train": tc.to_dict(),
        "refinement_passes": refinement_passes,
        "standardize": standardize_inputs,
        "panel_digest": digest(base.values, base.target),
    }
    return Pipeline(method, h, q0, stats, fc, tap, fm, settings)


def holdout_forecasts(pipeline, panel, n_train):
    """Forecasts for targets ``n_train..T-1`` made ``h`` steps earlier, with truth.

    ``panel`` is the full raw series; only data up to ``t`` informs the
    forecast issued at ``t``.
    """
    base = panel.panel if isinstance(panel, MaskedPanel) else panel
    h = pipeline.horizon
    if n_train - h < 0 or n_train >= base.T:
        raise DataError(f"no test targets for n_train={n_train}, h={h}, T={base.T}")
    preds = pipeline.forecast(panel)
    return preds[n_train - h:base.T - h], np.asarray(base.target[n_train:])
