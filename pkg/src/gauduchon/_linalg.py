"""Batched Hermitian linear algebra for pointwise tensor kernels.

All routines accept arrays of shape (..., n, n) and broadcast the metric
against the field, so constant metrics stored with singleton axes stay
cheap.  The generalized problem g v = lambda a v is reduced by Cholesky:
with a = L L^H, the matrix M = L^{-1} g L^{-H} is Hermitian and its
eigenvalues are the generalized ones.  Eigenvectors returned by
``generalized_eigh`` are a-orthonormal columns: v^H a v = I.
"""

from __future__ import annotations

import numpy as np


def _chol_inverse(a: np.ndarray) -> np.ndarray:
    """L^{-1} for the batched Cholesky factor of a Hermitian positive a."""
    L = np.linalg.cholesky(a)
    return np.linalg.inv(L)


def _reduce(g: np.ndarray, a: np.ndarray):
    Linv = _chol_inverse(a)
    M = Linv @ g @ Linv.conj().swapaxes(-1, -2)
    M = 0.5 * (M + M.conj().swapaxes(-1, -2))
    return M, Linv


def generalized_eigenvalues(g: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Eigenvalues of g relative to a, ascending along the last axis."""
    M, _ = _reduce(g, a)
    return np.linalg.eigvalsh(M)


def generalized_eigh(g: np.ndarray, a: np.ndarray):
    """(eigenvalues ascending, a-orthonormal eigenvector columns)."""
    M, Linv = _reduce(g, a)
    w, y = np.linalg.eigh(M)
    v = Linv.conj().swapaxes(-1, -2) @ y
    return w, v

def spectral_map(g: np.ndarray, a: np.ndarray, func) -> np.ndarray:
    """Apply ``func`` to the generalized eigenvalues of g against a.

    ``func`` maps an (..., n) eigenvalue array to new (..., n) values; the
    result is reassembled as the Hermitian tensor with those eigenvalues in
    the same a-orthonormal eigenframe:  out = (L Y) diag(f(w)) (L Y)^H.
    """
    L = np.linalg.cholesky(a)
    Linv = np.linalg.inv(L)
    M = Linv @ g @ Linv.conj().swapaxes(-1, -2)
    M = 0.5 * (M + M.conj().swapaxes(-1, -2))
    w, y = np.linalg.eigh(M)
    fw = func(w)
    frame = L @ y
    out = (frame * fw[..., None, :]) @ frame.conj().swapaxes(-1, -2)
    return 0.5 * (out + out.conj().swapaxes(-1, -2))


def products_of_others(w: np.ndarray) -> np.ndarray:
    """prod_{k != i} w_k along the last axis, stable near zeros.

    Uses prefix/suffix cumulative products instead of dividing the total.
    """
    n = w.shape[-1]
    prefix = np.ones_like(w)
    suffix = np.ones_like(w)
    np.cumprod(w[..., :-1], axis=-1, out=prefix[..., 1:])
    np.cumprod(w[..., :0:-1], axis=-1, out=suffix[..., -2::-1])
    del n
    return prefix * suffix


def min_generalized_eigenvalue(g: np.ndarray, a: np.ndarray):
    """(min over all points and directions, flat index of the worst point)."""
    w = generalized_eigenvalues(g, a)
    small = w[..., 0]
    flat = small.reshape(-1)
    idx = int(np.argmin(flat))
    return float(flat[idx]), idx
