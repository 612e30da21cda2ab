"""Dense linear algebra and seeded randomness shared by the pipeline.

Everything works on float64 numpy arrays. Matrices are plain ``ndarray``
objects; no wrapper type is introduced.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from sddp.errors import DataError, NumericError, ShapeError

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues sorted descending, eigenvectors as matching columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def top(self, k):
        return self.eigenvalues[:k], self.eigenvectors[:, :k]


def _as_matrix(m, name="matrix"):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    return m


def fix_signs(vectors):
    """Flip columns so the largest-magnitude entry of each is positive.

    Ties resolve to the first index attaining the maximum magnitude.
    """
    vectors = np.array(vectors, dtype=np.float64, order="C", copy=True)
    if vectors.size == 0:
        return vectors
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def symmetric_eig(m, tol=1e-9):
    """Full eigendecomposition of a symmetric matrix.

    The input is symmetrized by averaging with its transpose before the
    decomposition. Asymmetry larger than ``tol * max|m|`` is rejected.
    """
    m = _as_matrix(m)
    n, p = m.shape
    if n != p:
        raise ShapeError(f"symmetric_eig needs a square matrix, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DataError("symmetric_eig input has non-finite entries")
    scale = float(np.max(np.abs(m))) if m.size else 0.0
    asym = float(np.max(np.abs(m - m.T))) if m.size else 0.0
    if asym > tol * max(scale, np.finfo(float).tiny):
        raise DataError(f"matrix is not symmetric: max|m - m^T| = {asym:.3e}")
    sym = 0.5 * (m + m.T)
    try:
        values, vectors = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigendecomposition did not converge: {exc}") from exc
    order = np.argsort(values, kind="stable")[::-1]
    values = values[order]
    vectors = fix_signs(vectors[:, order])
    return EigenDecomposition(eigenvalues=values, eigenvectors=vectors)


def second_moment(x, center=False):
    """Uncentered second moment ``T^-1 X X^T`` of an N x T panel.

    With ``center=True`` each row mean is removed first.
    """
    x = _as_matrix(x, "panel")
    t = x.shape[1]
    if t < 1:
        raise ShapeError("second_moment needs at least one column")
    if center:
        x = x - x.mean(axis=1, keepdims=True)
    s = (x @ x.T) / t
    # exact symmetry; the product is symmetric up to rounding only
    return 0.5 * (s + s.T)


def procrustes_residual(estimate, truth):
    """Best orthogonal alignment of ``truth`` onto ``estimate``.

    Returns ``(R, residual)`` where ``R`` minimizes ``||estimate - R truth||_F``
    over orthogonal matrices and ``residual`` is that minimum divided by
    ``sqrt(T)``, i.e. a per-time-point error.
    """
    est = _as_matrix(estimate, "estimate")
    tru = _as_matrix(truth, "truth")
    if est.shape != tru.shape:
        raise ShapeError(f"shape mismatch: estimate {est.shape} vs truth {tru.shape}")
    d, t = tru.shape
    sv = np.linalg.svd(tru, compute_uv=False)
    if d > t or sv[-1] <= max(d, t) * np.finfo(float).eps * sv[0]:
        raise NumericError("truth matrix is rank deficient; rotation is not identified")
    u, _, vt = np.linalg.svd(tru @ est.T)
    rotation = vt.T @ u.T
    residual = float(np.linalg.norm(est - rotation @ tru) / np.sqrt(t))
    return rotation, residual


def _entropy(seed):
    return int(seed) & _MASK64


def name_key(name):
    """Stable 32-bit integer key for a string (used in seed derivation)."""
    return zlib.crc32(str(name).encode("utf-8"))


def derive_seed(seed, *keys):
    """Derive a 64-bit seed from ``seed`` and a path of integer or string keys."""
    spawn = tuple(k if isinstance(k, (int, np.integer)) else name_key(k) for k in keys)
    spawn = tuple(_entropy(k) for k in spawn)
    ss = np.random.SeedSequence(_entropy(seed), spawn_key=spawn)
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


class RngStream:
    """A reproducible random stream identified by ``(seed, stream_id)``.

    Streams with distinct ids are spawned from the same seed sequence and
    are statistically independent.
    """

    def __init__(self, seed, stream_id=0):
        self.seed = _entropy(seed)
        self.stream_id = _entropy(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def uniform(self, size=None, low=0.0, high=1.0):
        return self.generator.uniform(low, high, size)

    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def bernoulli(self, p, size=None):
        return self.generator.random(size) < p

    def permutation(self, n):
        return self.generator.permutation(n)


def rng_stream(seed, stream_id=0):
    return RngStream(seed, stream_id)
