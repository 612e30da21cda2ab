"""Independent reference implementations used as test oracles.

Nothing here imports the package's numerical code; each routine is a
deliberately plain re-derivation of the quantity it checks.
"""
import math

import numpy as np


def jacobi_eigenvalues(a, tol=1e-14, max_sweeps=100):
    """Cyclic Jacobi rotations on a symmetric matrix; eigenvalues descending."""
    a = np.array(a, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(max_sweeps):
        off = math.sqrt(sum(a[i, j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                v = v @ rot
    order = np.argsort(np.diag(a))[::-1]
    return np.diag(a)[order], v[:, order]


def naive_second_moment(x):
    n, t = x.shape
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for s in range(t):
                acc += x[i, s] * x[j, s]
            out[i, j] = acc / t
    return out


def svd_factors(x, k):
    """Factors from the thin SVD of the panel, scaled to match N^-1 B^T X."""
    n = x.shape[0]
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    loadings = math.sqrt(n) * u[:, :k]
    return loadings, loadings.T @ x / n


def naive_causal_conv(params, window, channels, width, blocks, kernel):
    """Straight-line loops over the causal dilated convolution stack.

    ``window`` is ``(D, q0)`` with the newest step last; parameters follow
    the flat layout: per block weights ``(k, C_in, C_out)`` then biases, then
    the readout weights and bias.
    """
    d, q = window.shape
    off = 0
    h = [[float(window[c, t]) for c in range(d)] for t in range(q)]
    c_in = d
    for layer in range(blocks):
        w = params[off:off + kernel * c_in * width].reshape(kernel, c_in, width)
        off += kernel * c_in * width
        b = params[off:off + width]
        off += width
        dil = 2 ** layer
        nxt = []
        for t in range(q):
            row = []
            for o in range(width):
                acc = b[o]
                for j in range(kernel):
                    src = t - (kernel - 1 - j) * dil
                    if src < 0:
                        continue
                    for c in range(c_in):
                        acc += w[j, c, o] * h[src][c]
                row.append(max(acc, 0.0))
            nxt.append(row)
        h = nxt
        c_in = width
    rw = params[off:off + c_in]
    rb = params[off + c_in]
    return float(sum(rw[c] * h[-1][c] for c in range(c_in)) + rb)


def ols(design, y):
    """Normal-equations solve ``(A^T A) beta = A^T y``."""
    return np.linalg.solve(design.T @ design, design.T @ y)


def random_symmetric(rng, n):
    a = rng.standard_normal((n, n))
    return (a + a.T) / 2.0
