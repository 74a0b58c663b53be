"""Generalized eigenvalue calculus and the log symmetric function.

The scalar equation is driven by the symmetric function obtained from the
log-product after the complement-mean map on eigenvalues,

    value(lam) = sum_i log(mu_i),   mu_k = (1/(n-1)) sum_{i != k} lam_i,

defined on the cone where every mu_i is positive.  The map lam -> mu is
order reversing (descending lam gives ascending mu) and its gradient

    grad_k = (1/(n-1)) sum_{i != k} 1 / mu_i

is positive, so the operator is elliptic on the cone.  The derivative of
the operator with respect to the covariant tensor entries is diagonal in
the eigenframe with entries grad_k; ties between eigenvalues are harmless
because that frame formula is continuous across them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _linalg
from .errors import ConeViolation
from .grid import HermitianTensorField, metric_determinant

_CONE_RTOL = 1e-12


@dataclass(frozen=True)
class EigenPair:
    """Per-point generalized eigenvalues and alpha-orthonormal eigenvectors.

    lams is sorted descending; vectors[:, k] solves
    (alpha^{-1} g) v_k = lam_k v_k with v_i^H alpha v_j = delta_{ij}.
    """

    lams: np.ndarray
    vectors: np.ndarray


def _point_matrices(field_values: np.ndarray, grid, index: tuple) -> np.ndarray:
    idx = tuple(index[a] if field_values.shape[a] > 1 else 0
                for a in range(len(index)))
    return np.asarray(field_values[idx])


def generalized_eigenpair(g: HermitianTensorField,
                          alpha: HermitianTensorField,
                          index: tuple) -> EigenPair:
    """Eigen decomposition of g against alpha at one grid point."""
    G = _point_matrices(g.values, g.grid, index)
    A = _point_matrices(alpha.values, alpha.grid, index)
    w, v = _linalg.generalized_eigh(G, A)
    order = np.argsort(w)[::-1]
    return EigenPair(w[order], v[:, order])


def complement_mean(lams: np.ndarray) -> np.ndarray:
    """mu_k = (1/(n-1)) sum_{i != k} lam_i along the last axis."""
    lams = np.asarray(lams, dtype=float)
    n = lams.shape[-1]
    total = lams.sum(axis=-1, keepdims=True)
    return (total - lams) / (n - 1)


def complement_mean_inverse(mus: np.ndarray) -> np.ndarray:
    """Inverse of complement_mean: lam_k = sum_i mu_i - (n-1) mu_k."""
    mus = np.asarray(mus, dtype=float)
    n = mus.shape[-1]
    total = mus.sum(axis=-1, keepdims=True)
    return total - (n - 1) * mus


def _require_positive(mus: np.ndarray, context: str):
    """Strict positivity up to 1e-12 * (1 + |mu|); boundary points raise."""
    smallest = mus.min(axis=-1)
    threshold = _CONE_RTOL * (1.0 + np.abs(mus).max(axis=-1))
    bad = smallest <= threshold
    if np.any(bad):
        flat = np.atleast_1d(smallest).reshape(-1)
        idx = int(np.argmin(flat))
        raise ConeViolation(context, point=idx, eigenvalue=float(flat[idx]))


def log_complement_product(lams: np.ndarray) -> np.ndarray:
    """sum_i log mu_i with mu = complement_mean(lams).

    Raises ConeViolation when any mu_i fails strict positivity.
    """
    mus = complement_mean(lams)
    _require_positive(mus, "eigenvalues outside the solvable cone")
    return np.log(mus).sum(axis=-1)


def log_complement_gradient(lams: np.ndarray) -> np.ndarray:
    """grad_k = (1/(n-1)) sum_{i != k} 1/mu_i; positive on the cone.

    For descending lams the gradient is ascending, and the entries beyond
    the first are mutually comparable within a factor n-1.
    """
    lams = np.asarray(lams, dtype=float)
    n = lams.shape[-1]
    mus = complement_mean(lams)
    _require_positive(mus, "gradient requested outside the solvable cone")
    inv = 1.0 / mus
    total = inv.sum(axis=-1, keepdims=True)
    return (total - inv) / (n - 1)


def in_cone(lams: np.ndarray) -> bool:
    mus = complement_mean(lams)
    scale = 1.0 + float(np.abs(mus).max())
    return bool(mus.min() > _CONE_RTOL * scale)


def operator_derivative(g: HermitianTensorField,
                        alpha: HermitianTensorField,
                        index: tuple) -> np.ndarray:
    """Derivative matrix D[p, q] of the operator wrt tensor entries.

    Pairing convention: d/dt value(g + t delta) = sum_{p,q} D[p, q]
    delta_{q pbar} = trace(D @ Delta) for the matrix Delta of the
    perturbation.  In the eigenframe D is diagonal with the gradient
    entries; here D = sum_k grad_k v_k v_k^H with alpha-orthonormal v_k.
    """
    pair = generalized_eigenpair(g, alpha, index)
    grad = log_complement_gradient(pair.lams)
    V = pair.vectors
    return (V * grad[None, :]) @ V.conj().T


def c_subsolution_check(gtilde: HermitianTensorField,
                        alpha: HermitianTensorField):
    """Pointwise positivity of gtilde against alpha over the whole grid.

    For the log-product equation this is exactly the subsolution condition
    on the running iterate.  Returns (ok, min_eigenvalue, worst_flat_index).
    """
    small, idx = _linalg.min_generalized_eigenvalue(gtilde.values, alpha.values)
    return small > 0.0, small, idx


@dataclass(frozen=True)
class DichotomyReport:
    label: str
    weighted_gap: float
    min_gradient: float
    gradient_sum: float
    sum_bound: float
    sum_bound_ok: bool


def subsolution_dichotomy_probe(lams: np.ndarray, chi_diag: np.ndarray,
                                h: float, kappa: float) -> DichotomyReport:
    """Classify a spectrum against the two large-eigenvalue alternatives.

    case_a: sum_k grad_k (chi_kk - lam_k) > kappa * sum_k grad_k,
    case_b: min_k grad_k > kappa * sum_k grad_k,
    below_R otherwise (the spectrum is too tame to separate).  Also checks
    the lower bound sum_k grad_k >= n exp(-h/n), which holds with equality
    at isotropic spectra when h equals the operator value.
    """
    lams = np.asarray(lams, dtype=float)
    n = lams.shape[-1]
    grad = log_complement_gradient(lams)
    total = float(grad.sum())
    weighted_gap = float((grad * (np.asarray(chi_diag, dtype=float) - lams)).sum())
    bound = n * np.exp(-h / n)
    if weighted_gap > kappa * total:
        label = "case_a"
    elif float(grad.min()) > kappa * total:
        label = "case_b"
    else:
        label = "below_R"
    return DichotomyReport(
        label=label,
        weighted_gap=weighted_gap,
        min_gradient=float(grad.min()),
        gradient_sum=total,
        sum_bound=float(bound),
        sum_bound_ok=bool(total >= bound * (1.0 - 1e-12)),
    )


def determinant_ratio(g: HermitianTensorField,
                      alpha: HermitianTensorField) -> np.ndarray:
    """det(g)/det(alpha) pointwise; equals the eigenvalue product."""
    return metric_determinant(g.values) / metric_determinant(alpha.values)
