"""Temporal regressors: construction, loss/gradient, Adam training."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from sddp.errors import ConfigError, DegenerateLossError, NumericError, ShapeError
from sddp.linalg import RngStream
from sddp.net.arch import (
    backward_batch,
    forward_batch,
    init_params,
    layout,
    param_count,
)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 3
    validation_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.patience < 1:
            raise ConfigError("patience must be at least 1")
        if not 0.0 < self.validation_fraction < 0.5:
            raise ConfigError("validation_fraction must lie in (0, 0.5)")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be positive")
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate must be nonnegative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("moment decay rates must lie in [0, 1)")

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainReport:
    epochs_run: int = 0
    best_epoch: int = 0
    best_validation_loss: float = float("inf")
    train_loss: list = field(default_factory=list)
    validation_loss: list = field(default_factory=list)
    stopped_early: bool = False
    diverged: bool = False
    diverged_epoch: Optional[int] = None

    def to_dict(self):
        return asdict(self)


class TemporalRegressor:
    """A trained or freshly initialized network mapping a D x q0 window to a scalar."""

    def __init__(self, config, params, init_stream=None):
        params = np.array(params, dtype=np.float64).reshape(-1)
        if params.shape[0] != param_count(config):
            raise ShapeError(f"expected {param_count(config)} parameters, got {params.shape[0]}")
        params.setflags(write=False)
        self.config = config
        self.params = params
        self.init_stream = init_stream

    def __repr__(self):
        return (f"TemporalRegressor({self.config.architecture}, D={self.config.input_channels}, "
                f"q0={self.config.window}, P={self.params.size})")

    @property
    def layout(self):
        return layout(self.config)

    def with_params(self, params):
        return TemporalRegressor(self.config, params, self.init_stream)

    def _windows(self, windows):
        w = np.asarray(windows, dtype=np.float64)
        d, q = self.config.input_channels, self.config.window
        if w.ndim == 2 and d == 1 and w.shape[1] == q:
            w = w[:, None, :]
        if w.ndim != 3 or w.shape[1:] != (d, q):
            raise ShapeError(f"windows must have shape (B, {d}, {q}), got {w.shape}")
        return w

    def predict(self, windows):
        """Predictions for a stack of windows ``(B, D, q0)`` (or ``(B, q0)`` when D = 1)."""
        w = self._windows(windows)
        y, _ = forward_batch(self.config, self.params[None, :], w[None])
        return y[0]

    def __call__(self, window):
        return forward(self, window)


def init_regressor(config, stream):
    return TemporalRegressor(config, init_params(config, stream),
                             init_stream=(stream.seed, stream.stream_id))


def forward(reg, window):
    window = np.asarray(window, dtype=np.float64)
    d, q = reg.config.input_channels, reg.config.window
    if window.ndim == 1 and d == 1:
        window = window[None, :]
    if window.shape != (d, q):
        raise ShapeError(f"window must have shape ({d}, {q}), got {window.shape}")
    if not np.all(np.isfinite(window)):
        raise ShapeError("window has non-finite entries")
    return float(reg.predict(window[None])[0])


def _weighted_loss(pred, targets, weights):
    """Per-member weighted MSE and its derivative with respect to predictions."""
    wsum = weights.sum(axis=1)
    resid = pred - targets
    loss = (weights * resid * resid).sum(axis=1) / wsum
    dpred = 2.0 * weights * resid / wsum[:, None]
    return loss, dpred


def loss_and_grad(reg, windows, targets, weights=None):
    """Weighted mean squared error and its exact gradient in the parameters."""
    w = reg._windows(windows)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if y.shape[0] != w.shape[0]:
        raise ShapeError(f"{w.shape[0]} windows but {y.shape[0]} targets")
    om = np.ones_like(y) if weights is None else np.asarray(weights, dtype=np.float64).reshape(-1)
    if om.shape != y.shape:
        raise ShapeError("weights must align with targets")
    if np.any(om < 0):
        raise ShapeError("weights must be nonnegative")
    if not om.sum() > 0:
        raise DegenerateLossError("all sample weights are zero")
    params = reg.params[None, :]
    pred, cache = forward_batch(reg.config, params, w[None])
    loss, dpred = _weighted_loss(pred, y[None], om[None])
    if not np.isfinite(loss[0]):
        raise NumericError("loss is not finite")
    grad = backward_batch(reg.config, params, cache, dpred)
    return float(loss[0]), grad[0]


def grad_check(reg, windows, targets, step=1e-5, weights=None, max_coords=None, seed=0):
    """Worst relative gap between analytic and central-difference gradients.

    The denominator is ``max(|analytic|, |numeric|, 1e-8)``. When
    ``max_coords`` is set (at least 200) and smaller than the parameter
    count, a seeded random subset of coordinates is checked.
    """
    if step <= 0:
        raise ConfigError("step must be positive")
    _, g = loss_and_grad(reg, windows, targets, weights)
    p = reg.params.size
    coords = np.arange(p)
    if max_coords is not None and p > max_coords:
        rng = np.random.default_rng(seed)
        coords = np.sort(rng.choice(p, size=max(200, max_coords), replace=False))
    worst = 0.0
    base = reg.params.copy()
    for i in coords:
        up = base.copy()
        up[i] += step
        dn = base.copy()
        dn[i] -= step
        lu, _ = loss_and_grad(reg.with_params(up), windows, targets, weights)
        ld, _ = loss_and_grad(reg.with_params(dn), windows, targets, weights)
        num = (lu - ld) / (2.0 * step)
        denom = max(abs(g[i]), abs(num), 1e-8)
        worst = max(worst, abs(g[i] - num) / denom)
    return worst


# --------------------------------------------------------------------------
# training


def validation_split(n, fraction):
    """Sizes ``(n_train, n_val)`` of the chronological split of ``n`` samples."""
    n_val = max(1, int(np.floor(fraction * n)))
    n_train = n - n_val
    if n_train < 2:
        raise ShapeError(f"{n} samples leave fewer than 2 for training after the validation split")
    return n_train, n_val


def train_ensemble(config, params, windows, targets, weights, tc, streams):
    """Train ``E`` independent regressors of one architecture in lock-step.

    ``params`` is ``(E, P)``; ``windows`` is ``(E, n, D, q0)``; ``targets``
    is ``(n,)`` or ``(E, n)``; ``weights`` is ``None`` or ``(E, n)``. Member
    ``e`` draws its minibatch order from ``streams[e]``. Each member stops
    on its own early-stopping clock and keeps its best-validation
    parameters, so its result is the same as training it alone.

    Returns ``(best_params, reports)``; a member whose loss becomes
    non-finite is frozen and reported with ``diverged=True``.
    """
    # overflow is expected on the way to divergence and is detected explicitly
    with np.errstate(over="ignore", invalid="ignore"):
        return _train_ensemble(config, params, windows, targets, weights, tc, streams)


def _train_ensemble(config, params, windows, targets, weights, tc, streams):
    params = np.array(params, dtype=np.float64)
    e, n = windows.shape[0], windows.shape[1]
    targets = np.broadcast_to(np.asarray(targets, dtype=np.float64), (e, n))
    weights = (np.ones((e, n)) if weights is None
               else np.asarray(weights, dtype=np.float64).reshape(e, n))
    n_tr, n_val = validation_split(n, tc.validation_fraction)
    tr_x, va_x = windows[:, :n_tr], windows[:, n_tr:]
    tr_y, va_y = targets[:, :n_tr], targets[:, n_tr:]
    tr_w, va_w = weights[:, :n_tr], weights[:, n_tr:]
    # members with no weighted validation samples fall back to the training loss
    use_train_for_val = ~(va_w.sum(axis=1) > 0)

    m = np.zeros_like(params)
    v = np.zeros_like(params)
    steps = np.zeros(e, dtype=np.int64)
    best = params.copy()
    best_loss = np.full(e, np.inf)
    since_best = np.zeros(e, dtype=np.int64)
    active = np.ones(e, dtype=bool)
    reports = [TrainReport() for _ in range(e)]
    rows = np.arange(e)[:, None]
    bs = tc.batch_size
    b1, b2, lr, eps = tc.beta1, tc.beta2, tc.learning_rate, tc.epsilon

    for epoch in range(1, tc.max_epochs + 1):
        if not active.any():
            break
        idx = np.arange(e)[active]
        perms = np.stack([streams[i].permutation(n_tr) for i in idx])
        loss_acc = np.zeros(idx.size)
        wt_acc = np.zeros(idx.size)
        bad = np.zeros(idx.size, dtype=bool)
        for start in range(0, n_tr, bs):
            sel = perms[:, start:start + bs]
            ridx = rows[idx]
            xb, yb, wb = tr_x[ridx, sel], tr_y[ridx, sel], tr_w[ridx, sel]
            wsum = wb.sum(axis=1)
            live = (wsum > 0) & ~bad
            if not live.any():
                continue
            sub = idx[live]
            pred, cache = forward_batch(config, params[sub], xb[live])
            loss, dpred = _weighted_loss(pred, yb[live], wb[live])
            finite = np.isfinite(loss)
            grad = backward_batch(config, params[sub], cache, dpred)
            finite &= np.all(np.isfinite(grad), axis=1)
            lpos = np.flatnonzero(live)
            bad[lpos[~finite]] = True
            ok = lpos[finite]
            if ok.size == 0:
                continue
            mem = idx[ok]
            g = grad[finite]
            loss_acc[ok] += loss[finite] * wsum[ok]
            wt_acc[ok] += wsum[ok]
            steps[mem] += 1
            m[mem] = b1 * m[mem] + (1.0 - b1) * g
            v[mem] = b2 * v[mem] + (1.0 - b2) * g * g
            t = steps[mem][:, None].astype(np.float64)
            mhat = m[mem] / (1.0 - b1 ** t)
            vhat = v[mem] / (1.0 - b2 ** t)
            params[mem] = params[mem] - lr * mhat / (np.sqrt(vhat) + eps)

        # validation pass for members still running
        val = np.empty(idx.size)
        split = use_train_for_val[idx]
        for mask_sel, xs, ys, ws in ((~split, va_x, va_y, va_w), (split, tr_x, tr_y, tr_w)):
            if not mask_sel.any():
                continue
            mem = idx[mask_sel]
            pred, _ = forward_batch(config, params[mem], xs[mem])
            vl, _ = _weighted_loss(pred, ys[mem], ws[mem])
            val[mask_sel] = vl
        for j, i in enumerate(idx):
            rep = reports[i]
            rep.epochs_run = epoch
            if bad[j] or not np.isfinite(val[j]) or not np.all(np.isfinite(params[i])):
                rep.diverged = True
                rep.diverged_epoch = epoch
                active[i] = False
                continue
            rep.train_loss.append(float(loss_acc[j] / wt_acc[j]) if wt_acc[j] > 0 else float("nan"))
            rep.validation_loss.append(float(val[j]))
            if val[j] < best_loss[i]:
                best_loss[i] = val[j]
                best[i] = params[i]
                rep.best_epoch = epoch
                since_best[i] = 0
            else:
                since_best[i] += 1
                if since_best[i] >= tc.patience:
                    rep.stopped_early = True
                    active[i] = False
    for i, rep in enumerate(reports):
        rep.best_validation_loss = float(best_loss[i])
    return best, reports


def train(reg, windows, targets, weights=None, tc=None):
    """Adam with bias correction, seeded per-epoch shuffles and early stopping.

    Returns the parameters of the best validation epoch and a
    :class:`TrainReport`. Raises :class:`NumericError` when the loss stops
    being finite.
    """
    tc = tc or TrainConfig()
    w = reg._windows(windows)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if y.shape[0] != w.shape[0]:
        raise ShapeError(f"{w.shape[0]} windows but {y.shape[0]} targets")
    om = None
    if weights is not None:
        om = np.asarray(weights, dtype=np.float64).reshape(1, -1)
        if om.shape[1] != y.shape[0]:
            raise ShapeError("weights must align with targets")
        if not om.sum() > 0:
            raise DegenerateLossError("all sample weights are zero")
    stream = RngStream(tc.seed, 0)
    best, reports = train_ensemble(reg.config, reg.params[None, :], w[None], y, om, tc, [stream])
    rep = reports[0]
    if rep.diverged:
        raise NumericError(f"training diverged at epoch {rep.diverged_epoch}")
    return reg.with_params(best[0]), rep
