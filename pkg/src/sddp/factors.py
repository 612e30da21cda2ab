"""Principal-component factor extraction and factor-count selection.

The same machinery serves the supervised route (applied to a target-aware
panel) and the unsupervised baseline (applied to the raw panel).
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from sddp.errors import ConfigError, DataError, DegenerateSpectrumError, ShapeError
from sddp.linalg import second_moment, symmetric_eig
from sddp.serialize import digest, read_json, read_matrix, write_json, write_matrix

SOURCES = ("sddp", "sdpca", "pca")


@dataclass(frozen=True)
class FactorModel:
    """Loadings ``(N, K)`` scaled so that ``B^T B / N = I`` and factors ``(K, T)``."""

    loadings: np.ndarray
    factors: np.ndarray
    K: int
    eigenvalues: np.ndarray
    source: str = "sddp"
    ratios: Optional[np.ndarray] = None
    panel_digest: Optional[str] = None

    @property
    def N(self):
        return self.loadings.shape[0]

    def project(self, panel_values):
        """Factors ``N^-1 B^T X`` of another ``(N, T')`` panel (e.g. the test range)."""
        x = np.asarray(panel_values, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] != self.N:
            raise ShapeError(f"expected a panel with {self.N} rows, got shape {x.shape}")
        return (self.loadings.T @ x) / self.N

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        write_matrix(directory / "loadings.csv", self.loadings)
        write_matrix(directory / "factors.csv", self.factors)
        write_json(directory / "factors.json", {
            "format": "sddp-factors",
            "K": int(self.K),
            "source": self.source,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "ratios": None if self.ratios is None else [float(v) for v in self.ratios],
            "panel_digest": self.panel_digest,
        })
        return directory

    @classmethod
    def load(cls, directory):
        directory = Path(directory)
        meta = read_json(directory / "factors.json")
        if meta.get("format") != "sddp-factors":
            raise ConfigError(f"{directory}: not a factor model directory")
        k = int(meta["K"])
        loadings = read_matrix(directory / "loadings.csv").reshape(-1, k)
        factors = read_matrix(directory / "factors.csv").reshape(k, -1)
        ratios = meta.get("ratios")
        return cls(loadings, factors, k, np.asarray(meta["eigenvalues"], dtype=np.float64),
                   meta["source"], None if ratios is None else np.asarray(ratios),
                   meta.get("panel_digest"))


def default_kmax(n):
    return max(1, min(n // 2, 15))


def select_num_factors(eigenvalues, kmax=None):
    """Eigenvalue-ratio rule with stabilizer ``delta = lambda_1 / N``.

    Returns ``(K, ratios)`` where ``ratios[k-1] = (l_k + d) / (l_{k+1} + d)``
    for ``k = 1..kmax``. Ties resolve to the smallest ``k``.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64).reshape(-1)
    n = lam.shape[0]
    if kmax is None:
        kmax = default_kmax(n)
    if kmax < 1:
        raise ConfigError("kmax must be at least 1")
    if n < kmax + 1:
        raise ConfigError(f"need at least kmax + 1 = {kmax + 1} eigenvalues, got {n}")
    if np.any(np.diff(lam) > 1e-12 * max(1.0, abs(lam[0]))):
        raise DataError("eigenvalues must be sorted in descending order")
    if not np.any(np.abs(lam) >= 1e-12):
        raise DegenerateSpectrumError("all eigenvalues are numerically zero")
    delta = lam[0] / n
    ratios = (lam[:kmax] + delta) / (lam[1:kmax + 1] + delta)
    return int(np.argmax(ratios)) + 1, ratios


def _correlation(sigma):
    d = np.sqrt(np.clip(np.diag(sigma), 0.0, None))
    d[d == 0] = 1.0
    c = sigma / np.outer(d, d)
    return 0.5 * (c + c.T)


def extract_factors(source_panel, K=None, source="sddp", kmax=None, correlation=False):
    """Top-``K`` principal factors of the uncentered second moment of a panel.

    With ``K=None`` the count is chosen by :func:`select_num_factors`; the
    ``correlation`` flag makes that selection use the correlation-normalized
    matrix instead (loadings always come from the second moment itself).
    """
    if source not in SOURCES:
        raise ConfigError(f"unknown factor source {source!r}; expected one of {SOURCES}")
    x = np.asarray(source_panel, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"panel must be 2-D, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DataError("panel has non-finite entries")
    n, t = x.shape
    sigma = second_moment(x)
    dec = symmetric_eig(sigma)
    ratios = None
    if K is None:
        lam = dec.eigenvalues if not correlation else symmetric_eig(_correlation(sigma)).eigenvalues
        K, ratios = select_num_factors(lam, kmax if kmax is not None else default_kmax(n))
    if not isinstance(K, (int, np.integer)) or K < 1:
        raise ConfigError(f"factor count must be a positive integer, got {K!r}")
    if K > n:
        raise ConfigError(f"factor count {K} exceeds the number of predictors {n}")
    if K > t:
        raise ConfigError(f"factor count {K} exceeds the number of time points {t}")
    # C order keeps projections bit-identical after a save/load round-trip
    loadings = np.ascontiguousarray(np.sqrt(n) * dec.eigenvectors[:, :K])
    factors = (loadings.T @ x) / n
    return FactorModel(loadings, factors, int(K), dec.eigenvalues, source, ratios, digest(x))


def pca_baseline(panel, K=None, kmax=None):
    """Unsupervised factors of the raw (standardized) predictor matrix."""
    values = panel.values if hasattr(panel, "values") else panel
    return extract_factors(values, K, source="pca", kmax=kmax)
