"""Shared distance kernels.

Two deliberately different implementations: `sq_dists_to_point` is the
direct-difference form used inside the seeding loops, where reference and
fast paths must agree bit for bit; `min_sq_dists` is the chunked
Gram-matrix form used for bulk cost evaluation, where throughput matters
and a ~1e-13 relative rounding slack is acceptable.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

# Cap the per-chunk scratch matrix at ~8M doubles (64 MB).
_CHUNK_BUDGET = 8_000_000


def sq_dists_to_point(X: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Exact squared distances from every row of X to the single point c."""
    return cdist(X, c.reshape(1, -1), "sqeuclidean").ravel()


def min_sq_dists(X: np.ndarray, C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-row nearest center: returns (labels, min squared distances).

    Ties go to the lowest center ordinal (argmin first occurrence).
    """
    C = np.atleast_2d(C)
    if C.shape[0] == 0:
        raise ValueError("no centers")
    n, k = X.shape[0], C.shape[0]
    csq = np.einsum("ij,ij->i", C, C)
    labels = np.empty(n, dtype=np.intp)
    md = np.empty(n, dtype=np.float64)
    chunk = max(1, _CHUNK_BUDGET // max(k, 1))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        block = X[lo:hi]
        d2 = np.einsum("ij,ij->i", block, block)[:, None] + csq[None, :]
        d2 -= 2.0 * (block @ C.T)
        lab = np.argmin(d2, axis=1)
        labels[lo:hi] = lab
        np.maximum(d2[np.arange(hi - lo), lab], 0.0, out=md[lo:hi])
    return labels, md


def cost(X: np.ndarray, C: np.ndarray) -> float:
    """Sum over rows of the squared distance to the nearest center."""
    C = np.atleast_2d(C)
    if C.shape[0] == 0:
        raise ValueError("no centers")
    if X.shape[0] * C.shape[0] <= 65_536:
        return float(cdist(X, C, "sqeuclidean").min(axis=1).sum())
    _, md = min_sq_dists(X, C)
    return float(md.sum())
