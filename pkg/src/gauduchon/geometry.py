"""Hermitian-geometric operators on the torus: connection, torsion,
trace-complement transform, Hodge-star powers, Chern-Ricci curvature and
the Gauduchon defect/conformal factor.

Conventions.  Tensors are stored as matrices H[i, j] = h_{i jbar}.  The
Chern connection of a metric alpha has Christoffel symbols
Gamma^k_{ij} = alpha^{k lbar} d_i alpha_{j lbar} and torsion
T^k_{ij} = Gamma^k_{ij} - Gamma^k_{ji}; the lowered torsion is
T_{ij lbar} = T^k_{ij} alpha_{k lbar}, skew in (i, j).

The star of the (n-1)-st wedge power of a positive tensor h relative to
alpha is computed in the per-point alpha-orthonormal eigenframe of h,
where it is diagonal with entries prod_{k != i} a_k; this realizes
star(h^{n-1}) / (n-1)! as a (1, 1) tensor without global exterior
calculus.  The same eigenframe calculus inverts the map.
"""

from __future__ import annotations

from math import factorial as _factorial

import numpy as np
import scipy.sparse.linalg as spla

from . import _linalg, forms
from .errors import ConeViolation, NonPositiveFactor
from .grid import (
    GridSpec,
    HermitianTensorField,
    ScalarField,
    _deriv_values,
    complex_hessian_values,
    mean_value,
    metric_determinant,
    metric_inverse,
)
from dataclasses import dataclass


@dataclass(frozen=True)
class ChristoffelField:
    """Chern connection coefficients, stored as Gamma[..., k, i, j] = Gamma^k_{ij}."""

    grid: GridSpec
    values: np.ndarray


@dataclass(frozen=True)
class TorsionField:
    """Chern torsion with both index positions.

    upper[..., k, i, j] = T^k_{ij}, lowered[..., i, j, l] = T_{ij lbar}.
    Skew-symmetry in (i, j) holds structurally.
    """

    grid: GridSpec
    upper: np.ndarray
    lowered: np.ndarray

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.lowered)))


def metric_derivatives(alpha: HermitianTensorField) -> np.ndarray:
    """d_{z^i} alpha_{j lbar}, stacked as dA[..., i, j, l]."""
    grid = alpha.grid
    n = grid.n
    parts = [_deriv_values(alpha.values, grid, i, conjugate=False) for i in range(n)]
    return np.stack(np.broadcast_arrays(*parts), axis=-3)


def chern_connection(alpha: HermitianTensorField) -> ChristoffelField:
    """Christoffel field of the Chern connection of a metric."""
    if not alpha.metric:
        raise ValueError("chern_connection requires a metric-flagged field")
    dA = metric_derivatives(alpha)
    ainv = metric_inverse(alpha.values)
    gamma = np.einsum("...kl,...ijl->...kij", ainv, dA)
    return ChristoffelField(alpha.grid, gamma)


def chern_torsion(alpha: HermitianTensorField,
                  connection: ChristoffelField | None = None) -> TorsionField:
    """Torsion of the Chern connection, upper and lowered."""
    if connection is None:
        connection = chern_connection(alpha)
    gamma = connection.values
    upper = gamma - gamma.swapaxes(-1, -2)
    lowered = np.einsum("...kij,...kl->...ijl", upper, alpha.values)
    return TorsionField(alpha.grid, upper, lowered)


def trace_complement(beta: HermitianTensorField,
                     alpha: HermitianTensorField) -> HermitianTensorField:
    """((tr_alpha beta) alpha - beta) / (n - 1).

    On eigenvalues this replaces each one by the mean of the others; it is
    exactly the tensor map applied to i ddbar u when assembling the
    equation, and the trace against alpha is preserved.
    """
    vals = trace_complement_values(beta.values, alpha.values)
    return HermitianTensorField(beta.grid, vals)


def trace_complement_values(beta: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    n = alpha.shape[-1]
    ainv = metric_inverse(alpha)
    tr = np.einsum("...ij,...ij->...", ainv, beta)
    return ((tr[..., None, None]) * alpha - beta) / (n - 1)


def trace_complement_inverse(B: HermitianTensorField,
                             alpha: HermitianTensorField) -> HermitianTensorField:
    """(tr_alpha B) alpha - (n - 1) B, the exact inverse of trace_complement."""
    n = alpha.grid.n
    ainv = metric_inverse(alpha.values)
    tr = np.einsum("...ij,...ij->...", ainv, B.values)
    vals = tr[..., None, None] * alpha.values - (n - 1) * B.values
    return HermitianTensorField(B.grid, vals)


def _require_cone(w: np.ndarray, what: str):
    small = w[..., 0]
    bad = small <= 0.0
    if bad.any():
        flat = small.reshape(-1)
        idx = int(np.argmin(flat))
        raise ConeViolation(what, point=idx, eigenvalue=float(flat[idx]))


def star_power_values(h: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    def func(w):
        _require_cone(w, "star power requires a positive tensor")
        return _linalg.products_of_others(w)

    return _linalg.spectral_map(h, alpha, func)


def star_power(h: HermitianTensorField,
               alpha: HermitianTensorField) -> HermitianTensorField:
    """(1/(n-1)!) * star_alpha(h^{n-1}) as a (1, 1) tensor field.

    In each alpha-orthonormal frame diagonalizing h with eigenvalues a_k
    the result is diagonal with entries prod_{k != i} a_k.
    """
    vals = star_power_values(h.values, alpha.values)
    return HermitianTensorField(h.grid, vals, metric=h.metric and alpha.metric)


def star_power_inverse_values(G: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    n = alpha.shape[-1]

    def func(w):
        _require_cone(w, "star power inversion left the positive cone")
        logw = np.log(w)
        tau = np.exp(logw.sum(axis=-1, keepdims=True) / (n - 1) - logw)
        return tau

    return _linalg.spectral_map(G, alpha, func)


def star_power_inverse(G: HermitianTensorField,
                       alpha: HermitianTensorField) -> HermitianTensorField:
    """The positive tensor h with star_power(h, alpha) = G.

    Eigenvalues nu_i of G against alpha map to
    tau_i = (prod_k nu_k)^{1/(n-1)} / nu_i.  Raises ConeViolation when G
    is not positive at some point.
    """
    vals = star_power_inverse_values(G.values, alpha.values)
    return HermitianTensorField(G.grid, vals, metric=True)


def chern_ricci(omega: HermitianTensorField) -> HermitianTensorField:
    """Chern-Ricci tensor -(log det omega)_{i jbar} via spectral derivatives."""
    if not omega.metric:
        raise ValueError("chern_ricci requires a metric-flagged field")
    logdet = np.log(metric_determinant(omega.values))
    vals = -complex_hessian_values(logdet.astype(np.complex128), omega.grid)
    return HermitianTensorField(omega.grid, vals)


# ---------------------------------------------------------------------------
# Gauduchon condition


def _ddbar_top_ratio(coeff_fields: dict, alpha_values: np.ndarray,
                     grid: GridSpec) -> np.ndarray:
    """Pointwise d of i ddbar(Theta) = d * alpha^n for (n-1,n-1) coefficients."""
    from .grid import _second_deriv_values

    n = grid.n
    masks = forms.nm1_coefficient_masks(n)
    total = None
    for (i, j), mask in masks.items():
        c = coeff_fields.get(mask)
        if c is None:
            continue
        dd = _second_deriv_values(c, grid, i, j)
        gi, gj = 1 << i, 1 << (n + j)
        sign = forms.wedge_sign(gi, gj) * forms.wedge_sign(gi | gj, mask)
        term = sign * dd
        total = term if total is None else total + term
    numer = 1j * total
    denom = (_factorial(n) * metric_determinant(alpha_values)
             * forms.volume_coefficient(n))
    return numer / denom


def gauduchon_defect(omega: HermitianTensorField,
                     alpha: HermitianTensorField) -> float:
    """sup |d| where i ddbar(omega^{n-1}) = d alpha^n.

    Zero (to spectral accuracy) exactly when omega is Gauduchon.
    """
    if not omega.metric:
        raise ValueError("gauduchon_defect requires a metric-flagged field")
    coeffs = forms.wedge_power_fields(omega.values, omega.grid.n - 1)
    ratio = _ddbar_top_ratio(coeffs, alpha.values, omega.grid)
    return float(np.max(np.abs(ratio)))


class _GauduchonOperator:
    """v -> i ddbar(v alpha^{n-1}) / alpha^n as a real linear grid operator."""

    def __init__(self, alpha: HermitianTensorField):
        self.grid = alpha.grid
        self.alpha_values = alpha.values
        self.coeffs = forms.wedge_power_fields(alpha.values, alpha.grid.n - 1)

    def apply(self, v: np.ndarray) -> np.ndarray:
        scaled = {m: c * v for m, c in self.coeffs.items()}
        ratio = _ddbar_top_ratio(scaled, self.alpha_values, self.grid)
        return ratio.real


def gauduchon_factor(alpha: HermitianTensorField,
                     tol: float = 1e-11,
                     max_refine: int = 6,
                     rng: np.random.Generator | None = None) -> ScalarField:
    """Positive mean-one v with i ddbar(v alpha^{n-1}) = 0.

    The Gauduchon metric in the conformal class of alpha is then
    v^{1/(n-1)} alpha.  The kernel of the defect operator is computed from
    the bordered system [defect op, 1; mean, 0] (v, rho) = (0, 1), which
    is nonsingular because the kernel is one-dimensional with a positive
    (hence non-mean-zero) generator; rho vanishes at the solution.  A sign
    change in v signals numerical failure and raises NonPositiveFactor.

    rng, when given, perturbs the initial Krylov guess; the result is
    independent of it up to solver tolerance (projective uniqueness).
    """
    if not alpha.metric:
        raise ValueError("gauduchon_factor requires a metric-flagged field")
    grid = alpha.grid
    op = _GauduchonOperator(alpha)
    shape = grid.shape
    size = int(np.prod(shape))

    import scipy.fft as sfft

    inv_sym = flat_laplacian_symbol(grid) / grid.n
    zero = (0,) * (2 * grid.n)
    inv_sym[zero] = 1.0
    inv_sym = 1.0 / inv_sym
    inv_sym[zero] = 0.0

    def matvec(y):
        v = y[:-1].reshape(shape)
        rho = y[-1]
        return np.concatenate([(op.apply(v) + rho).ravel(), [v.mean()]])

    def precond(y):
        r = y[:-1].reshape(shape).astype(np.complex128)
        s = y[-1]
        hat = sfft.fftn(r, workers=-1)
        hat *= inv_sym
        v = sfft.ifftn(hat, workers=-1).real
        v += s - v.mean()
        return np.concatenate([v.ravel(), [float(r.real.mean())]])

    A = spla.LinearOperator((size + 1, size + 1), matvec=matvec, dtype=np.float64)
    M = spla.LinearOperator((size + 1, size + 1), matvec=precond, dtype=np.float64)
    rhs = np.zeros(size + 1)
    rhs[-1] = 1.0

    x0 = np.ones(size + 1)
    x0[-1] = 0.0
    if rng is not None:
        x0[:-1] += 0.01 * rng.standard_normal(size)
    v = x0[:-1].reshape(shape)
    for _ in range(max_refine):
        resid = float(np.max(np.abs(op.apply(v / np.mean(v)))))
        if resid <= tol:
            break
        x0, info = spla.gmres(A, rhs, x0=x0, M=M, rtol=1e-14, atol=1e-14,
                              restart=80, maxiter=5)
        v = x0[:-1].reshape(shape)
    else:
        resid = float(np.max(np.abs(op.apply(v / np.mean(v)))))
        if resid > tol:
            raise NonPositiveFactor(
                f"kernel solve stalled at defect {resid:.3e} (tol {tol:.1e})")
    v = v / np.mean(v)
    if np.min(v) <= 0.0:
        raise NonPositiveFactor(
            f"computed kernel element changes sign (min {float(np.min(v)):.3e})")
    return ScalarField(grid, v.astype(np.complex128), real=True)


def gauduchon_correct(alpha: HermitianTensorField, **kwargs) -> HermitianTensorField:
    """The Gauduchon metric v^{1/(n-1)} alpha in the conformal class of alpha."""
    v = gauduchon_factor(alpha, **kwargs)
    n = alpha.grid.n
    factor = np.power(v.values.real, 1.0 / (n - 1))[..., None, None]
    return HermitianTensorField(alpha.grid, factor * alpha.values, metric=True)


def flat_laplacian_symbol(grid: GridSpec) -> np.ndarray:
    """Fourier symbol of the flat complex Laplacian (zero at the mean mode)."""
    from .grid import _wavenumbers

    N = grid.points_per_axis
    k = _wavenumbers(N)
    total = np.zeros(grid.shape)
    for a in range(2 * grid.n):
        shp = [1] * (2 * grid.n)
        shp[a] = N
        total = total + (k.reshape(shp)) ** 2
    return -np.pi ** 2 * total
