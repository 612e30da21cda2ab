"""Synthetic factor-model panels and factor-recovery checks.

Predictors load on ``K`` latent factors ``f_t``; the target depends on the
first ``K1`` of them (``g_t``) and their ``q - 1`` lags through a link
function. The remaining ``K - K1`` factors (``zeta_t``) only drive the
predictors.
"""
from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from sddp.errors import ConfigError, NumericError, ShapeError
from sddp.factors import FactorModel, extract_factors
from sddp.linalg import RngStream, derive_seed, procrustes_residual, symmetric_eig
from sddp.net import NetConfig, TrainConfig
from sddp.panel import TimePanel, standardize
from sddp.serialize import write_json
from sddp.target_aware import fit_target_aware

LOADING_KINDS = ("linear", "nonlinear")
LINK_KINDS = ("linear", "quadratic", "sine")


@dataclass(frozen=True)
class SyntheticConfig:
    N: int = 100
    T: int = 400
    K: int = 2
    K1: int = 1
    q: int = 1
    nu: float = 1.0
    sigma_u: float = 0.0
    sigma_eps: float = 0.0
    loading_kind: str = "linear"
    link_kind: str = "linear"
    beta: object = "random"
    seed: int = 0
    horizon: int = 1
    zeta_scale: float = 1.0  # standard deviation of the irrelevant factors

    def __post_init__(self):
        for name in ("N", "T", "K", "K1", "q", "horizon"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.K1 > self.K:
            raise ConfigError(f"K1={self.K1} exceeds K={self.K}")
        if self.q > self.T / 4:
            raise ConfigError(f"q={self.q} exceeds T/4")
        if not 0.0 < self.nu <= 1.0:
            raise ConfigError(f"nu must lie in (0, 1], got {self.nu}")
        if self.sigma_u < 0 or self.sigma_eps < 0 or self.zeta_scale <= 0:
            raise ConfigError("noise scales must be nonnegative and zeta_scale positive")
        if self.loading_kind not in LOADING_KINDS:
            raise ConfigError(f"loading_kind must be one of {LOADING_KINDS}")
        if self.link_kind not in LINK_KINDS:
            raise ConfigError(f"link_kind must be one of {LINK_KINDS}")
        if isinstance(self.beta, str):
            if self.beta != "random":
                raise ConfigError("beta must be 'random' or a q x K1 matrix")
        else:
            b = np.asarray(self.beta, dtype=np.float64)
            if b.shape != (self.q, self.K1):
                raise ConfigError(f"beta must have shape ({self.q}, {self.K1}), got {b.shape}")

    def to_dict(self):
        d = asdict(self)
        if not isinstance(self.beta, str):
            d["beta"] = np.asarray(self.beta, dtype=np.float64).tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class SyntheticTruth:
    panel: TimePanel
    f: np.ndarray
    g: np.ndarray
    zeta: np.ndarray
    common: np.ndarray
    noise: np.ndarray
    loadings: dict
    beta: np.ndarray
    gstar_true: np.ndarray
    config: SyntheticConfig = field(default_factory=SyntheticConfig)


def _link(kind, s):
    if kind == "linear":
        return s
    if kind == "quadratic":
        return s + 0.5 * s * s
    return 2.0 * np.sin(s)


def _scaled_linear_loadings(b, nu):
    """Rescale so the spectrum of ``N^-nu B^T B`` sits around 1.

    A scalar rescale centers the spectrum geometrically; if the spread
    still exceeds a factor of 4 the loadings are whitened instead.
    """
    n = b.shape[0]
    gram = (b.T @ b) / n ** nu
    lam = symmetric_eig(gram).eigenvalues
    if lam[-1] <= 0:
        raise NumericError("drawn loadings are rank deficient")
    if lam[0] / lam[-1] <= 4.0:
        return b / (lam[0] * lam[-1]) ** 0.25
    dec = symmetric_eig(gram)
    inv_sqrt = dec.eigenvectors @ np.diag(dec.eigenvalues ** -0.5) @ dec.eigenvectors.T
    return b @ inv_sqrt


def simulate(cfg):
    """Draw a panel and its ground truth; deterministic in ``cfg.seed``."""
    n, t_len, k, k1, q, h = cfg.N, cfg.T, cfg.K, cfg.K1, cfg.q, cfg.horizon
    burn = h + q - 1
    fac = RngStream(cfg.seed, 1)
    load = RngStream(cfg.seed, 2)
    noise = RngStream(cfg.seed, 3)
    f_full = fac.normal((k, t_len + burn))
    f_full[k1:] *= cfg.zeta_scale
    if isinstance(cfg.beta, str):
        beta = load.normal((q, k1))
        beta /= np.linalg.norm(beta)
    else:
        beta = np.array(cfg.beta, dtype=np.float64)
    f = f_full[:, burn:]
    if cfg.loading_kind == "linear":
        b = _scaled_linear_loadings(load.normal((n, k)), cfg.nu)
        common = b @ f
        loadings = {"kind": "linear", "B": b}
    else:
        scale = n ** ((cfg.nu - 1.0) / 2.0) / np.sqrt(k)
        b = load.normal((n, k)) * scale
        c = load.normal((n, k)) * scale
        common = np.tanh(b @ f) + 0.3 * (c @ f) ** 2
        loadings = {"kind": "nonlinear", "b": b, "c": c}
    u = noise.normal((n, t_len))
    values = common + cfg.sigma_u * u
    # y_t = phi(sum_s beta_s' g_{t-h-s}) with f_full[:, burn + j] = f_j
    index = np.zeros(t_len)
    for s in range(q):
        start = burn - h - s
        index += beta[s] @ f_full[:k1, start:start + t_len]
    eps = noise.normal(t_len)
    target = _link(cfg.link_kind, index) + cfg.sigma_eps * eps
    gstar = np.vstack([f_full[:, burn - s:burn - s + t_len] for s in range(q)])
    names = [f"x{i}" for i in range(n)]
    panel = TimePanel(values, target, names=names, target_name="y", horizon_hint=h)
    return SyntheticTruth(panel, f.copy(), f[:k1].copy(), f[k1:].copy(), common,
                          cfg.sigma_u * u, loadings, beta, gstar, cfg)


@dataclass(frozen=True)
class AlignmentResult:
    residual: float
    canonical_correlations: np.ndarray
    rotation: np.ndarray


def _whiten(m, name):
    t = m.shape[1]
    dec = symmetric_eig((m @ m.T) / t)
    lam = dec.eigenvalues
    if lam[-1] <= 1e-12 * max(lam[0], 1e-300):
        raise NumericError(f"{name} factors are rank deficient; cannot whiten")
    return (dec.eigenvectors / np.sqrt(lam)).T @ m


def alignment_error(estimate, truth, start=None, center=True):
    """Rotation-aligned per-time-point error between estimated and true factors.

    Both sides are restricted to ``t >= q - 1``, demeaned over that range
    (the pipeline standardizes predictors, so estimated factors carry no
    information about the sample mean of the truth; ``center=False``
    disables this) and normalized to identity second moment. The estimate
    (``K`` rows) is compared with the ``K`` leading canonical variates of the
    stacked truth (``qK`` rows) through an orthogonal Procrustes fit. The residual equals
    ``sqrt(2 * sum(1 - rho_k))`` over the canonical correlations ``rho``.
    """
    est = estimate.factors if isinstance(estimate, FactorModel) else np.asarray(estimate, float)
    tru = truth.gstar_true if isinstance(truth, SyntheticTruth) else np.asarray(truth, float)
    if est.ndim != 2 or tru.ndim != 2 or est.shape[1] != tru.shape[1]:
        raise ShapeError(f"incompatible factor shapes {est.shape} and {tru.shape}")
    if est.shape[0] > tru.shape[0]:
        raise ShapeError(f"estimate has {est.shape[0]} factors but truth only {tru.shape[0]}")
    if start is None:
        start = truth.config.q - 1 if isinstance(truth, SyntheticTruth) else 0
    k = est.shape[0]
    est, tru = est[:, start:], tru[:, start:]
    if center:
        est = est - est.mean(axis=1, keepdims=True)
        tru = tru - tru.mean(axis=1, keepdims=True)
    e = _whiten(est, "estimated")
    g = _whiten(tru, "true")
    t = e.shape[1]
    u, rho, vt = np.linalg.svd((e @ g.T) / t)
    variates = vt[:k] @ g
    rotation, residual = procrustes_residual(e, variates)
    return AlignmentResult(residual, np.clip(rho[:k], 0.0, 1.0), rotation)


# --------------------------------------------------------------------------
# convergence study


def study_defaults():
    return (NetConfig(architecture="linear", window=1),
            TrainConfig(learning_rate=1e-2, max_epochs=200, patience=3))


def run_recovery(cfg, K=None, net=None, tc=None, q0=None):
    """Simulate, fit linear target-aware nets, extract factors and align them."""
    dnet, dtc = study_defaults()
    net = net or dnet
    tc = replace(tc or dtc, seed=derive_seed(cfg.seed, "target-aware"))
    q0 = q0 or max(cfg.q, 1)
    truth = simulate(cfg)
    panel, _ = standardize(truth.panel)
    tap = fit_target_aware(panel, cfg.horizon, q0, net, tc)
    model = extract_factors(tap.xstar, K or cfg.q * cfg.K, source="sddp")
    return truth, tap, model, alignment_error(model, truth)


def _cell(args):
    cfg, k, net, tc = args
    t0 = time.perf_counter()
    _, _, _, res = run_recovery(cfg, k, net, tc)
    return res, time.perf_counter() - t0


def convergence_study(base_cfg, n_grid, seeds, K=None, net=None, tc=None, workers=1):
    """Mean alignment residual over seeds for each N, plus a monotonicity statistic.

    Returns ``(rows, summary)``; ``rows`` holds one dict per ``(N, seed)``.
    """
    n_grid = [int(n) for n in n_grid]
    if len(n_grid) < 3:
        raise ConfigError("the N grid needs at least 3 points")
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ConfigError("the N grid must be strictly ascending")
    if not seeds:
        raise ConfigError("at least one seed is required")
    jobs = [(replace(base_cfg, N=n, seed=int(s)), K, net, tc) for n in n_grid for s in seeds]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell, jobs))
    else:
        results = [_cell(j) for j in jobs]
    rows = []
    for (cfg, _, _, _), (res, secs) in zip(jobs, results):
        rows.append({"N": cfg.N, "seed": cfg.seed, "residual": res.residual,
                     "canonical_correlations": [float(r) for r in res.canonical_correlations],
                     "runtime": secs})
    table = []
    for n in n_grid:
        r = np.array([row["residual"] for row in rows if row["N"] == n])
        table.append({"N": n, "mean_residual": float(r.mean()),
                      "std_residual": float(r.std(ddof=1)) if r.size > 1 else 0.0})
    rho = spearmanr([row["N"] for row in table], [row["mean_residual"] for row in table])[0]
    summary = {"config": base_cfg.to_dict(), "N_grid": n_grid, "seeds": [int(s) for s in seeds],
               "table": table, "spearman_rho": float(rho)}
    return rows, summary


def write_study(rows, summary, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    k = max(len(r["canonical_correlations"]) for r in rows)
    with open(directory / "convergence.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "seed", "residual"] + [f"cc{j + 1}" for j in range(k)] + ["runtime"])
        for r in rows:
            cc = r["canonical_correlations"] + [""] * (k - len(r["canonical_correlations"]))
            w.writerow([r["N"], r["seed"], repr(r["residual"])] + cc + [f"{r['runtime']:.6f}"])
    write_json(directory / "convergence.json", summary)
