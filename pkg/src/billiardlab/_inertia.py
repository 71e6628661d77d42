"""Eigenvalue counting for symmetric banded pencils via LDL^T spectrum slicing.

The number of generalized eigenvalues of (K, M) below sigma equals the number
of negative pivots of an LDL^T factorization of K - sigma*M.  No pivoting is
used; a near-zero pivot triggers a tiny shift of sigma and a retry, which is
the standard slicing safeguard.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

try:
    from numba import njit
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False


def _ldl_band_count_py(ab):
    p1, n = ab.shape
    p = p1 - 1
    neg = 0
    scale = np.max(np.abs(ab[0])) + 1e-300
    for j in range(n):
        d = ab[0, j]
        if abs(d) < 1e-13 * scale:
            return -1, j
        if d < 0.0:
            neg += 1
        jmax = min(p, n - 1 - j)
        col = ab[1:jmax + 1, j] / d
        for i in range(1, jmax + 1):
            ab[: jmax + 1 - i, j + i] -= col[i - 1] * ab[i - 1: jmax, j]
        ab[1:jmax + 1, j] = col
    return neg, -1


if _HAVE_NUMBA:
    @njit(cache=True)
    def _ldl_band_count_nb(ab):  # pragma: no cover - exercised via wrapper
        p1, n = ab.shape
        p = p1 - 1
        neg = 0
        scale = 0.0
        for j in range(n):
            if abs(ab[0, j]) > scale:
                scale = abs(ab[0, j])
        scale += 1e-300
        for j in range(n):
            d = ab[0, j]
            if abs(d) < 1e-13 * scale:
                return -1, j
            if d < 0.0:
                neg += 1
            inv = 1.0 / d
            jmax = min(p, n - 1 - j)
            for i in range(1, jmax + 1):
                lij = ab[i, j] * inv
                for m in range(i, jmax + 1):
                    ab[m - i, j + i] -= lij * ab[m, j]
                ab[i, j] = lij
        return neg, -1


def to_lower_band(A: sp.spmatrix) -> np.ndarray:
    """Lower band storage: ab[r, c] = A[c + r, c] for r = 0..bandwidth."""
    A = A.tocoo()
    mask = A.row >= A.col
    rows = A.row[mask]
    cols = A.col[mask]
    p = int(np.max(rows - cols)) if rows.size else 0
    ab = np.zeros((p + 1, A.shape[0]))
    np.add.at(ab, (rows - cols, cols), A.data[mask])
    return ab


def count_eigs_below(K: sp.spmatrix, M: sp.spmatrix, sigma: float,
                     max_retries: int = 6) -> int:
    """Number of eigenvalues of K u = lambda M u strictly below sigma."""
    kernel = _ldl_band_count_nb if _HAVE_NUMBA else _ldl_band_count_py
    shift = sigma
    jitter = max(abs(sigma), 1.0) * 1e-9
    for attempt in range(max_retries):
        ab = to_lower_band((K - shift * M).tocsr())
        neg, where = kernel(ab)
        if neg >= 0:
            return int(neg)
        shift = sigma + jitter * (attempt + 1) * (-1) ** attempt
    raise RuntimeError(
        f"LDL^T slicing broke down near sigma = {sigma} (last pivot at row {where})")
