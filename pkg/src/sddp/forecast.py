"""Forecasting head: a temporal net on factor channels plus the lagged target."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from sddp.errors import ConfigError, DataError, ShapeError
from sddp.linalg import RngStream
from sddp.net import NetConfig, TrainConfig, TrainReport, init_regressor, train
from sddp.net.store import regressor_from_dict, regressor_to_dict
from sddp.panel import StandardizationStats
from sddp.target_aware import build_windows


@dataclass(frozen=True)
class ForecastModel:
    """Trained forecaster with ``D = channels + 1`` inputs (last channel is ``y``).

    ``kind`` is ``"factor"`` for factor channels or ``"vanilla"`` for raw
    predictors. Each non-target channel is divided by its training
    root-mean-square (``channel_scales``) before entering the net, since
    factor magnitudes shrink like ``sqrt(lambda_k / N)``. ``target_stats``
    maps standardized forecasts back to the original target scale; without
    it forecasts stay standardized.
    """

    net: object
    horizon: int
    window: int
    kind: str = "factor"
    target_stats: Optional[StandardizationStats] = None
    report: Optional[TrainReport] = None
    channel_scales: Optional[np.ndarray] = None

    @property
    def channels(self):
        return self.net.config.input_channels - 1

    def to_dict(self):
        return {
            "format": "sddp-forecaster",
            "kind": self.kind,
            "horizon": self.horizon,
            "window": self.window,
            "net": regressor_to_dict(self.net),
            "channel_scales": None if self.channel_scales is None else
            [float(v) for v in self.channel_scales],
            "target_stats": None if self.target_stats is None else self.target_stats.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "sddp-forecaster":
            raise DataError("not a forecaster record")
        stats = d.get("target_stats")
        scales = d.get("channel_scales")
        return cls(regressor_from_dict(d["net"]), int(d["horizon"]), int(d["window"]),
                   d["kind"], None if stats is None else StandardizationStats.from_dict(stats),
                   None, None if scales is None else np.asarray(scales, dtype=np.float64))

    def scaled(self, channels):
        if self.channel_scales is None:
            return channels
        return channels / self.channel_scales[:, None]


def channel_rms(channels):
    """Root-mean-square of each channel; zero channels get scale 1."""
    rms = np.sqrt(np.mean(np.asarray(channels, dtype=np.float64) ** 2, axis=1))
    return np.where(rms > 0, rms, 1.0)


def stack_windows(channels, targets, q0):
    """Windows ``(T, D, q0)`` over the rows of ``channels`` followed by ``targets``."""
    ch = np.atleast_2d(np.asarray(channels, dtype=np.float64))
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if ch.shape[1] != y.shape[0]:
        raise ShapeError(f"channels cover {ch.shape[1]} steps but targets cover {y.shape[0]}")
    series = np.vstack([ch, y[None, :]])
    return np.stack([build_windows(s, q0) for s in series], axis=1)


def _fit(channels, targets, h, q0, net, tc, kind, target_stats):
    channels = np.asarray(channels, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if h < 1:
        raise ConfigError("horizon must be at least 1")
    if not y.shape[0] > q0 + h:
        raise DataError(f"need T > q0 + h, got T={y.shape[0]}, q0={q0}, h={h}")
    if not np.all(np.isfinite(channels)) or not np.all(np.isfinite(y)):
        raise DataError("forecaster inputs must be finite")
    net = replace(net or NetConfig(), input_channels=channels.shape[0] + 1, window=q0)
    tc = tc or TrainConfig()
    scales = channel_rms(channels)
    windows = stack_windows(channels / scales[:, None], y, q0)
    reg = init_regressor(net, RngStream(tc.seed, 0))
    fitted, report = train(reg, windows[:-h], y[h:], tc=tc)
    return ForecastModel(fitted, h, q0, kind, target_stats, report, scales)


def fit_forecaster(factors, targets, h, q0=None, net=None, tc=None, target_stats=None):
    """Train the forecaster on ``(factor lags, target lags) at t -> y_{t+h}``.

    ``factors`` is ``(K, T)`` and ``targets`` the standardized target. ``q0``
    defaults to the net's window.
    """
    factors = np.asarray(factors, dtype=np.float64)
    if factors.ndim != 2 or factors.shape[0] == 0:
        raise ConfigError("at least one factor channel is required; use fit_vanilla otherwise")
    q0 = q0 if q0 is not None else (net or NetConfig()).window
    return _fit(factors, targets, h, q0, net, tc, "factor", target_stats)


def fit_vanilla(panel, h, q0=None, net=None, tc=None, target_stats=None):
    """Baseline that feeds every raw predictor as a channel."""
    q0 = q0 if q0 is not None else (net or NetConfig()).window
    return _fit(panel.values, panel.target, h, q0, net, tc, "vanilla", target_stats)


def predict(model, channels, targets, standardized=False):
    """Forecasts of ``y_{t+h}`` made at every ``t`` from information up to ``t``.

    Returned on the original target scale unless ``standardized`` is set or
    the model carries no target statistics.
    """
    channels = np.atleast_2d(np.asarray(channels, dtype=np.float64))
    if channels.shape[0] != model.channels:
        raise ShapeError(f"model expects {model.channels} channels, got {channels.shape[0]}")
    out = model.net.predict(stack_windows(model.scaled(channels), targets, model.window))
    if model.target_stats is not None and not standardized:
        out = model.target_stats.inverse_target(out)
    return out
