"""Target-aware predictors: one temporal regressor per predictor.

Each predictor's lag window is regressed on the future target; the fitted
values form a new N x T panel whose rows are scaled by forecasting power.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from sddp.errors import ConfigError, DataError, ShapeError
from sddp.linalg import RngStream
from sddp.net import NetConfig, TemporalRegressor, TrainConfig, train_ensemble
from sddp.net.arch import init_params
from sddp.net.store import regressor_from_dict, regressor_to_dict
from sddp.panel import MaskedPanel
from sddp.serialize import dict_digest, read_json, read_matrix, write_json, write_matrix


@dataclass
class TargetAwarePanel:
    xstar: np.ndarray
    regressors: list
    horizon: int
    window: int
    imputed: Optional[np.ndarray] = None
    skipped: frozenset = frozenset()
    reports: list = field(default_factory=list)
    refinement_passes: int = 0
    seed: Optional[int] = None

    @property
    def N(self):
        return self.xstar.shape[0]

    def transform(self, values, mask=None, refinement_passes=None):
        """Apply the stored regressors to another panel of the same predictors.

        Returns ``(xstar, imputed)``; ``imputed`` is ``None`` without a mask.
        """
        values = np.asarray(values, dtype=np.float64)
        if values.shape[0] != self.N:
            raise ShapeError(f"panel has {values.shape[0]} predictors, model has {self.N}")
        passes = self.refinement_passes if refinement_passes is None else refinement_passes
        return _evaluate(self.regressors, values, self.window, mask, passes)

    def save(self, directory):
        """Write ``xstar.csv``, optional ``imputed.csv``, ``regressors.json`` and a manifest."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        write_matrix(directory / "xstar.csv", self.xstar)
        if self.imputed is not None:
            write_matrix(directory / "imputed.csv", self.imputed)
        records = [None if r is None else regressor_to_dict(r) for r in self.regressors]
        write_json(directory / "regressors.json", records)
        net = next((r.config.to_dict() for r in self.regressors if r is not None), None)
        write_json(directory / "target_aware.json", {
            "format": "sddp-target-aware",
            "horizon": self.horizon,
            "window": self.window,
            "N": self.N,
            "net_digest": None if net is None else dict_digest(net),
            "seed": self.seed,
            "skipped": sorted(int(i) for i in self.skipped),
            "refinement_passes": self.refinement_passes,
        })
        return directory

    @classmethod
    def load(cls, directory):
        directory = Path(directory)
        meta = read_json(directory / "target_aware.json")
        if meta.get("format") != "sddp-target-aware":
            raise ConfigError(f"{directory}: not a target-aware panel directory")
        regs = [None if r is None else regressor_from_dict(r)
                for r in read_json(directory / "regressors.json")]
        xstar = read_matrix(directory / "xstar.csv").reshape(meta["N"], -1)
        imputed = None
        if (directory / "imputed.csv").exists():
            imputed = read_matrix(directory / "imputed.csv").reshape(meta["N"], -1)
        return cls(xstar, regs, meta["horizon"], meta["window"], imputed,
                   frozenset(meta["skipped"]), [], meta["refinement_passes"], meta["seed"])


@dataclass(frozen=True)
class SdpcaCoefficients:
    """OLS lag coefficients; ``gamma[i, j]`` multiplies ``x[i, t - j]``."""

    gamma: np.ndarray
    intercepts: np.ndarray


def build_windows(series, q0, mask_row=None, return_counts=False):
    """Lag windows ending at every t, oldest first, left-padded with zeros.

    Returns a ``(T, q0)`` array. With ``mask_row``, unobserved positions are
    zero-filled. With ``return_counts`` the number of real observed entries
    per window is returned too.
    """
    if q0 < 1:
        raise ConfigError("window size q0 must be at least 1")
    x = np.asarray(series, dtype=np.float64).reshape(-1)
    obs = np.ones(x.shape, dtype=bool) if mask_row is None else np.asarray(mask_row) == 1
    if obs.shape != x.shape:
        raise ShapeError("mask_row must match the series length")
    x = np.where(obs, x, 0.0)
    t_len = x.shape[0]
    padded = np.concatenate([np.zeros(q0 - 1), x])
    pobs = np.concatenate([np.zeros(q0 - 1, dtype=bool), obs])
    idx = np.arange(t_len)[:, None] + np.arange(q0)[None, :]
    windows = padded[idx]
    if return_counts:
        return windows, pobs[idx].sum(axis=1)
    return windows


def _panel_windows(values, q0, mask=None):
    """``(N, T, 1, q0)`` window stack for every predictor."""
    n, t_len = values.shape
    out = np.empty((n, t_len, 1, q0))
    for i in range(n):
        out[i, :, 0, :] = build_windows(values[i], q0, None if mask is None else mask[i])
    return out


def _evaluate(regressors, values, q0, mask, passes):
    n, t_len = values.shape
    xstar = np.zeros((n, t_len))
    current = values if mask is None else np.where(mask == 1, values, 0.0)
    imputed = None
    for _ in range(1 + (passes if mask is not None else 0)):
        for i, reg in enumerate(regressors):
            if reg is not None:
                xstar[i] = reg.predict(build_windows(current[i], q0))
        if mask is None:
            break
        imputed = np.where(mask == 1, values, xstar)
        current = imputed
    return xstar, (None if mask is None else imputed.copy())


def _fit(values, target, h, q0, net, tc, weights):
    """Train one regressor per row of ``values``; returns regressors, reports, skipped."""
    n, t_len = values.shape
    n_samples = t_len - h
    net = replace(net, input_channels=1, window=q0)
    windows = _panel_windows(values, q0)[:, :n_samples]
    targets = np.asarray(target, dtype=np.float64)[h:]
    skipped = set()
    if weights is not None:
        weights = weights[:, :n_samples]
        for i in range(n):
            if weights[i].sum() < q0 + 2:
                skipped.add(i)
    members = [i for i in range(n) if i not in skipped]
    regressors = [None] * n
    reports = [None] * n
    lr = tc.learning_rate
    for attempt in range(2):
        if not members:
            break
        ttc = tc if attempt == 0 else replace(tc, learning_rate=lr / 10.0)
        streams = [RngStream(tc.seed, i) for i in members]
        params = np.stack([init_params(net, s) for s in streams])
        w = None if weights is None else weights[members]
        best, reps = train_ensemble(net, params, windows[members], targets, w, ttc, streams)
        retry = []
        for j, i in enumerate(members):
            reports[i] = reps[j]
            if reps[j].diverged:
                retry.append(i)
            else:
                regressors[i] = TemporalRegressor(net, best[j], init_stream=(streams[j].seed, i))
        members = retry
    skipped.update(members)
    for i in skipped:
        regressors[i] = None
    return regressors, reports, frozenset(skipped)


def fit_target_aware(panel, h, q0, net=None, tc=None):
    """Train a temporal regressor per predictor on ``(window_t, y_{t+h})`` pairs.

    The panel is expected to be standardized. Regressor ``i`` is initialized
    and shuffled from ``RngStream(tc.seed, i)``, so results do not depend on
    training order. Fitted values are then evaluated at every t, including
    the final ``h`` periods that have no training target.
    """
    if isinstance(panel, MaskedPanel):
        raise ConfigError("use fit_target_aware_masked for a MaskedPanel")
    net = net or NetConfig()
    tc = tc or TrainConfig()
    _check_sizes(panel, h, q0)
    regressors, reports, skipped = _fit(panel.values, panel.target, h, q0, net, tc, None)
    xstar, _ = _evaluate(regressors, panel.values, q0, None, 0)
    return TargetAwarePanel(xstar, regressors, h, q0, None, skipped, reports, 0, tc.seed)


def fit_target_aware_masked(mpanel, h, q0, net=None, tc=None, refinement_passes=1):
    """Masked variant: loss weights follow the mask, missing cells get imputed.

    Pass 0 zero-fills missing lags, trains with weight ``w[i, t]`` on each
    sample and evaluates. Each refinement pass rebuilds the windows from the
    imputed series (observed values kept, missing ones replaced by the
    current fitted values) and re-evaluates the already-trained regressors.
    """
    if refinement_passes < 0:
        raise ConfigError("refinement_passes must be nonnegative")
    net = net or NetConfig()
    tc = tc or TrainConfig()
    panel, mask = mpanel.panel, mpanel.mask
    _check_sizes(panel, h, q0)
    values = np.where(mask == 1, panel.values, 0.0)
    weights = mask.astype(np.float64)
    regressors, reports, skipped = _fit(values, panel.target, h, q0, net, tc, weights)
    xstar, imputed = _evaluate(regressors, values, q0, mask, refinement_passes)
    return TargetAwarePanel(xstar, regressors, h, q0, imputed, skipped, reports,
                            refinement_passes, tc.seed)


def _check_sizes(panel, h, q0):
    if h < 1 or q0 < 1:
        raise ConfigError("horizon h and window q0 must be at least 1")
    if not panel.T > q0 + h:
        raise DataError(f"need T > q0 + h, got T={panel.T}, q0={q0}, h={h}")


def fit_sdpca_linear(panel, h, q0, ridge=1e-10):
    """Per-predictor OLS of ``y_{t+h}`` on ``q0`` lags plus an intercept.

    Only complete windows (t >= q0 - 1) enter the fit. The fitted models are
    returned as linear regressors so the resulting panel behaves exactly like
    a trained target-aware panel.
    """
    if isinstance(panel, MaskedPanel):
        panel = panel.panel
    n, t_len = panel.values.shape
    n_samples = t_len - h - q0 + 1
    if n_samples < q0 + 1:
        raise DataError(f"only {n_samples} complete samples for {q0} lags")
    y = panel.target[q0 - 1 + h:]
    gamma = np.zeros((n, q0))
    intercepts = np.zeros(n)
    net = NetConfig(architecture="linear", input_channels=1, window=q0)
    regressors = [None] * n
    skipped = set()
    for i in range(n):
        win = build_windows(panel.values[i], q0)[q0 - 1:q0 - 1 + n_samples]
        design = np.column_stack([win[:, ::-1], np.ones(n_samples)])
        coef = _normal_equations(design, y, ridge)
        if coef is None:
            skipped.add(i)
            continue
        gamma[i], intercepts[i] = coef[:q0], coef[q0]
        regressors[i] = TemporalRegressor(net, np.concatenate([coef[:q0][::-1], coef[q0:]]))
    xstar, _ = _evaluate(regressors, panel.values, q0, None, 0)
    tap = TargetAwarePanel(xstar, regressors, h, q0, None, frozenset(skipped))
    return SdpcaCoefficients(gamma, intercepts), tap


def _normal_equations(design, y, ridge):
    gram = design.T @ design
    rhs = design.T @ y
    scale = max(float(np.trace(gram)) / gram.shape[0], 1.0)
    for jitter in (0.0, ridge * scale):
        a = gram + jitter * np.eye(gram.shape[0])
        if np.linalg.cond(a) < 1e12:
            return np.linalg.solve(a, rhs)
    return None
