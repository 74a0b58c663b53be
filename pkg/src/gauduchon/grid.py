"""Periodic grids on the square complex torus with spectral calculus.

The domain is C^n / (Z^n + i Z^n) with unit periods.  Complex coordinates
z_j = x_j + i y_j are sampled on a uniform grid with N points per real
axis, so fields live on arrays of shape (N,)*(2n) with axes ordered
(x_1, y_1, ..., x_n, y_n).  All differentiation is done through Fourier
multipliers, which makes the Wirtinger operators

    d/dz_j    = (d/dx_j - i d/dy_j) / 2
    d/dzbar_j = (d/dx_j + i d/dy_j) / 2

exact for band-limited data.  Constant-in-space fields may be stored with
singleton axes; numpy broadcasting then keeps them cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft as _fft

from .errors import ConeViolation

_WORKERS = -1  # let scipy.fft use all available cores

# Tolerances for structural validation of field invariants.
_HERMITIAN_RTOL = 1e-12
_REAL_RTOL = 1e-12


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid over the unit torus C^n/(Z^n + iZ^n).

    n is the complex dimension (>= 2); points_per_axis the number of
    samples per real axis (power of two, >= 8).  The total point count is
    points_per_axis ** (2n).
    """

    n: int
    points_per_axis: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"complex dimension must be >= 2, got {self.n}")
        N = self.points_per_axis
        if N < 8 or (N & (N - 1)) != 0:
            raise ValueError(f"points_per_axis must be a power of two >= 8, got {N}")

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * (2 * self.n)

    @property
    def num_points(self) -> int:
        return self.points_per_axis ** (2 * self.n)

    def axis_coordinate(self, axis: int) -> np.ndarray:
        """1-d coordinate array for a real axis, broadcastable to shape."""
        N = self.points_per_axis
        t = np.arange(N) / N
        shp = [1] * (2 * self.n)
        shp[axis] = N
        return t.reshape(shp)

    def x(self, j: int) -> np.ndarray:
        """Real part coordinate of z_j (0-based j), broadcastable."""
        return self.axis_coordinate(2 * j)

    def y(self, j: int) -> np.ndarray:
        """Imaginary part coordinate of z_j (0-based j), broadcastable."""
        return self.axis_coordinate(2 * j + 1)


@lru_cache(maxsize=32)
def _wavenumbers(N: int) -> np.ndarray:
    """Integer frequencies for an N-point unit-period axis, Nyquist zeroed.

    Zeroing the Nyquist mode keeps first derivatives of real data real and
    is irrelevant for the band-limited data the tolerances assume.
    """
    k = _fft.fftfreq(N, d=1.0 / N)
    if N % 2 == 0:
        k[N // 2] = 0.0
    return k


@lru_cache(maxsize=64)
def _dz_multiplier(n: int, N: int, j: int, conjugate: bool) -> np.ndarray:
    """Fourier multiplier of d/dz_j (or d/dzbar_j) on the full grid."""
    k = _wavenumbers(N)
    kx = k.reshape([N if a == 2 * j else 1 for a in range(2 * n)])
    ky = k.reshape([N if a == 2 * j + 1 else 1 for a in range(2 * n)])
    sign = -1.0 if conjugate else 1.0
    # (2*pi*i*kx -+ i*2*pi*i*ky)/2
    m = np.pi * 1j * kx + sign * np.pi * ky
    m.setflags(write=False)
    return m


def _as_complex(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype != np.complex128:
        arr = arr.astype(np.complex128)
    return arr


def _check_broadcastable(shape, grid: GridSpec, trailing=()):
    want_ndim = 2 * grid.n + len(trailing)
    if len(shape) != want_ndim:
        raise ValueError(f"expected {want_ndim} array dims, got shape {shape}")
    for a in range(2 * grid.n):
        if shape[a] not in (1, grid.points_per_axis):
            raise ValueError(
                f"axis {a} has length {shape[a]}, expected 1 or {grid.points_per_axis}"
            )
    if tuple(shape[2 * grid.n:]) != tuple(trailing):
        raise ValueError(f"trailing dims {shape[2 * grid.n:]} != {trailing}")


@dataclass(frozen=True)
class ScalarField:
    """Complex- or real-valued function sampled on the grid.

    ``values`` must broadcast to ``grid.shape``.  A field constructed with
    ``real=True`` certifies sup |Im| <= 1e-12 * sup |value|; violation is
    an error at construction time.
    """

    grid: GridSpec
    values: np.ndarray
    real: bool = False

    def __post_init__(self):
        arr = _as_complex(self.values)
        _check_broadcastable(arr.shape, self.grid)
        if self.real:
            scale = float(np.max(np.abs(arr))) or 1.0
            worst = float(np.max(np.abs(arr.imag)))
            if worst > _REAL_RTOL * scale:
                raise ValueError(
                    f"field flagged real has imaginary part {worst:.3e} "
                    f"(scale {scale:.3e})"
                )
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def real_values(self) -> np.ndarray:
        if not self.real:
            raise ValueError("field is not flagged real")
        return self.values.real

    def materialized(self) -> np.ndarray:
        return np.broadcast_to(self.values, self.grid.shape)


@dataclass(frozen=True)
class HermitianTensorField:
    """Field of n x n Hermitian matrices h_{i jbar} (covariant (1,1) tensor).

    ``values`` has shape broadcastable to grid.shape + (n, n).  The metric
    flag certifies positive definiteness at every point.
    """

    grid: GridSpec
    values: np.ndarray
    metric: bool = False

    def __post_init__(self):
        arr = _as_complex(self.values)
        n = self.grid.n
        _check_broadcastable(arr.shape, self.grid, trailing=(n, n))
        scale = float(np.max(np.abs(arr))) or 1.0
        worst = _max_hermitian_defect(arr)
        if worst > _HERMITIAN_RTOL * scale:
            raise ValueError(
                f"matrix field is not Hermitian: defect {worst:.3e} (scale {scale:.3e})"
            )
        if self.metric:
            ok, idx, lam = _positive_definite_everywhere(arr)
            if not ok:
                raise ConeViolation(
                    "field flagged metric is not positive definite",
                    point=idx,
                    eigenvalue=lam,
                )
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def entry(self, i: int, j: int) -> np.ndarray:
        return self.values[..., i, j]

    def materialized(self) -> np.ndarray:
        n = self.grid.n
        return np.broadcast_to(self.values, self.grid.shape + (n, n))


def _max_hermitian_defect(arr: np.ndarray) -> float:
    # chunk over the leading axis to bound the temporary
    if arr.shape[0] <= 1:
        return float(np.max(np.abs(arr - arr.conj().swapaxes(-1, -2))))
    worst = 0.0
    for sl in range(arr.shape[0]):
        block = arr[sl]
        worst = max(worst, float(np.max(np.abs(block - block.conj().swapaxes(-1, -2)))))
    return worst


def _positive_definite_everywhere(arr: np.ndarray):
    """Sylvester criterion on leading principal minors, vectorized.

    Returns (ok, flat_point_index, smallest_eigenvalue_at_that_point).
    """
    n = arr.shape[-1]
    flat = arr.reshape(-1, n, n)
    bad = np.zeros(flat.shape[0], dtype=bool)
    for k in range(1, n + 1):
        minors = np.linalg.det(flat[:, :k, :k]).real
        bad |= minors <= 0.0
    if not bad.any():
        return True, None, None
    idx = int(np.argmax(bad))
    lam = float(np.linalg.eigvalsh(flat[idx])[0])
    return False, idx, lam


def metric_inverse(values: np.ndarray) -> np.ndarray:
    """Inverse metric a^{p qbar} as a matrix: transpose of the inverse.

    With H[i, j] = h_{i jbar}, the array returned satisfies
    M[p, q] = h^{p qbar}, i.e. sum_q M[p, q] H[j, q] = delta_{pj}.
    """
    return np.linalg.inv(values).swapaxes(-1, -2)


def metric_determinant(values: np.ndarray) -> np.ndarray:
    """Pointwise determinant (real for Hermitian input)."""
    return np.linalg.det(values).real


# ---------------------------------------------------------------------------
# spectral derivatives


def _fftn(arr: np.ndarray, grid: GridSpec) -> np.ndarray:
    axes = [a for a in range(2 * grid.n) if arr.shape[a] > 1]
    if not axes:
        return arr.copy()
    return _fft.fftn(arr, axes=axes, workers=_WORKERS)


def _deriv_values(arr: np.ndarray, grid: GridSpec, j: int, conjugate: bool) -> np.ndarray:
    """d/dz_j (or dzbar_j) of raw values, handling broadcast-constant axes.

    Trailing (non-grid) dimensions are carried along; only the two real
    axes of z_j are transformed, so constant directions stay singleton.
    """
    n, N = grid.n, grid.points_per_axis
    ax, ay = 2 * j, 2 * j + 1
    if arr.shape[ax] == 1 and arr.shape[ay] == 1:
        return np.zeros_like(arr)
    if arr.shape[ax] == 1 or arr.shape[ay] == 1:
        shape = list(arr.shape)
        shape[ax] = N
        shape[ay] = N
        arr = np.broadcast_to(arr, shape)
    hat = _fft.fftn(arr, axes=(ax, ay), workers=_WORKERS)
    m = _dz_multiplier(n, N, j, conjugate)
    extra = arr.ndim - 2 * n
    if extra:
        m = m.reshape(m.shape + (1,) * extra)
    hat *= m
    return _fft.ifftn(hat, axes=(ax, ay), workers=_WORKERS)


def _second_deriv_values(arr: np.ndarray, grid: GridSpec, i: int, j: int) -> np.ndarray:
    """Fused d/dz_i d/dzbar_j of raw values (one transform round trip)."""
    n, N = grid.n, grid.points_per_axis
    axes = sorted({2 * i, 2 * i + 1, 2 * j, 2 * j + 1})
    if all(arr.shape[a] == 1 for a in axes):
        return np.zeros_like(arr)
    if any(arr.shape[a] == 1 for a in axes):
        shape = list(arr.shape)
        for a in axes:
            shape[a] = N
        arr = np.broadcast_to(arr, shape)
    hat = _fft.fftn(arr, axes=axes, workers=_WORKERS)
    m = _dz_multiplier(n, N, i, conjugate=False) * _dz_multiplier(n, N, j, conjugate=True)
    extra = arr.ndim - 2 * n
    if extra:
        m = m.reshape(m.shape + (1,) * extra)
    hat *= m
    return _fft.ifftn(hat, axes=axes, workers=_WORKERS)


def dz(f: ScalarField, j: int) -> ScalarField:
    """Spectral complex derivative d f / d z_j, 0-based axis j in [0, n)."""
    if not 0 <= j < f.grid.n:
        raise IndexError(f"complex axis {j} out of range for n={f.grid.n}")
    return ScalarField(f.grid, _deriv_values(f.values, f.grid, j, conjugate=False))


def dzbar(f: ScalarField, j: int) -> ScalarField:
    """Spectral conjugate derivative d f / d zbar_j, 0-based axis j."""
    if not 0 <= j < f.grid.n:
        raise IndexError(f"complex axis {j} out of range for n={f.grid.n}")
    return ScalarField(f.grid, _deriv_values(f.values, f.grid, j, conjugate=True))


def gradient_z(u: ScalarField) -> np.ndarray:
    """All holomorphic derivatives u_p, stacked on a trailing axis."""
    grid = u.grid
    parts = [_deriv_values(u.values, grid, p, conjugate=False) for p in range(grid.n)]
    return np.stack(np.broadcast_arrays(*parts), axis=-1)


def complex_hessian_values(u_values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Raw u_{i jbar} array of shape grid.shape + (n, n).

    Uses one forward transform and multiplier products, so the (i, j) entry
    equals dzbar_j(dz_i(u)) exactly.  Hermitian for real input by k-space
    symmetry up to roundoff; enforced by averaging with the adjoint.
    """
    n, N = grid.n, grid.points_per_axis
    full = np.broadcast_to(u_values, grid.shape)
    hat = _fft.fftn(full, workers=_WORKERS)
    out = np.empty(grid.shape + (n, n), dtype=np.complex128)
    for i in range(n):
        mi = _dz_multiplier(n, N, i, conjugate=False)
        for j in range(i, n):
            mj = _dz_multiplier(n, N, j, conjugate=True)
            out[..., i, j] = _fft.ifftn(hat * (mi * mj), workers=_WORKERS)
            if j > i:
                out[..., j, i] = np.conj(out[..., i, j])
    herm = 0.5 * (out + out.conj().swapaxes(-1, -2))
    return herm


def complex_hessian(u: ScalarField) -> HermitianTensorField:
    """Mixed second derivative tensor u_{i jbar} of a real field."""
    if not u.real:
        raise ValueError("complex_hessian requires a real-flagged field")
    return HermitianTensorField(u.grid, complex_hessian_values(u.values, u.grid))


def laplacian(u: ScalarField, alpha: HermitianTensorField) -> ScalarField:
    """alpha^{k lbar} u_{k lbar}, the metric complex Laplacian."""
    hess = complex_hessian_values(u.values, u.grid)
    ainv = metric_inverse(alpha.values)
    vals = np.einsum("...kl,...kl->...", ainv, hess)
    return ScalarField(u.grid, vals)


# ---------------------------------------------------------------------------
# quadrature and norms


def integrate(f: ScalarField, vol: HermitianTensorField) -> complex:
    """Integral of f against det(vol) * Lebesgue measure on the unit torus.

    Spectral (trapezoid-exact) quadrature: the plain mean of the product.
    The flat metric gives total mass 1.
    """
    if not vol.metric:
        raise ValueError("volume field must be flagged metric")
    det = metric_determinant(vol.values)
    prod = f.values * det
    # mean over broadcast shape: sum with weights handled by broadcasting
    total = np.mean(np.broadcast_to(prod, f.grid.shape))
    return complex(total)


def mean_value(values: np.ndarray, grid: GridSpec) -> float:
    """Plain grid mean of a (broadcastable) real array."""
    return float(np.mean(np.broadcast_to(values, grid.shape).real))


def sup_norms(u: ScalarField, alpha: HermitianTensorField):
    """(sup |u|, sup |grad u|^2_alpha, sup |i ddbar u|_alpha).

    |grad u|^2_alpha = alpha^{p qbar} u_p u_qbar and the Hessian norm is the
    largest absolute generalized eigenvalue of u_{i jbar} against alpha,
    maximized over the grid.
    """
    if not u.real:
        raise ValueError("sup_norms requires a real-flagged field")
    from . import _linalg

    sup_u = float(np.max(np.abs(u.values.real)))
    du = gradient_z(u)
    ainv = metric_inverse(alpha.values)
    grad_sq = np.einsum("...pq,...p,...q->...", ainv, du, du.conj()).real
    sup_grad = float(np.max(grad_sq)) if grad_sq.size else 0.0
    hess = complex_hessian_values(u.values, u.grid)
    eigs = _linalg.generalized_eigenvalues(hess, alpha.values)
    sup_hess = float(np.max(np.abs(eigs)))
    return sup_u, sup_grad, sup_hess


def spectral_resample(f: ScalarField, new_points_per_axis: int) -> ScalarField:
    """Exact Fourier interpolation of a field to a finer (or coarser) grid.

    Modes absent from the source are zero; coarsening truncates.  Used to
    warm-start solves at higher resolution.
    """
    grid = f.grid
    new_grid = GridSpec(grid.n, new_points_per_axis)
    src = f.materialized()
    hat = _fft.fftn(src, workers=_WORKERS) / grid.num_points
    out_hat = np.zeros(new_grid.shape, dtype=np.complex128)
    N_old, N_new = grid.points_per_axis, new_points_per_axis
    keep = min(N_old, N_new) // 2
    idx_src = np.r_[0:keep, N_old - keep:N_old]
    idx_dst = np.r_[0:keep, N_new - keep:N_new]
    src_ix = np.ix_(*([idx_src] * (2 * grid.n)))
    dst_ix = np.ix_(*([idx_dst] * (2 * grid.n)))
    out_hat[dst_ix] = hat[src_ix]
    vals = _fft.ifftn(out_hat * new_grid.num_points, workers=_WORKERS)
    if f.real:
        vals = vals.real.astype(np.complex128)
    return ScalarField(new_grid, vals, real=f.real)
