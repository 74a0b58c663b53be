"""Assembly of the prescribed-volume equation on the torus.

Given a background metric alpha (ideally Gauduchon), a reference metric
alpha0 and a smooth real source f, the unknown is a real potential u and
a constant b.  The working tensor is

    s[u] = base + trace_complement(i ddbar u) + coupling * Zgrad(u),

where base is the star of alpha0^{n-1} (a positive tensor: the
subsolution condition for u = 0), trace_complement is taken against
alpha, and Zgrad couples the first derivatives of u to the torsion of
alpha through a six-term contraction.  The pointwise equation is

    log det(s[u]) - log det(alpha) = (n - 1) (f + b),

whose solution recovers a metric omega with volume ratio
omega^n / alpha^n = e^{f + b} through inversion of the star power.

The gradient coupling is linear in grad u with a coefficient tensor
C[p, i, j]:  Z_{i jbar} = C[p, i, j] u_p + conj(C[p, j, i] u_p), which is
Hermitian by construction.  In any alpha-orthonormal frame the component
C[j, i, j] vanishes identically and the covariant derivative component
nabla_{ibar} C[i, i, i] vanishes as well; both follow from the
skew-symmetry of the torsion and are exposed as runtime checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from . import _linalg, forms, geometry
from .errors import ConeViolation
from .grid import (
    GridSpec,
    HermitianTensorField,
    ScalarField,
    _deriv_values,
    _positive_definite_everywhere,
    complex_hessian_values,
    gradient_z,
    mean_value,
    metric_determinant,
    metric_inverse,
)


def gradient_coupling_coefficients(alpha: HermitianTensorField,
                                   torsion: geometry.TorsionField) -> np.ndarray:
    """Coefficient tensor C[..., p, i, j] of the torsion gradient coupling.

    C[p, i, j] = (1/(2(n-1))) ( w_p alpha_{i jbar}
                                - delta_{ip} s_j
                                - alpha^{p lbar} conj(T_{l j ibar}) ),
    with s_j = alpha^{k lbar} conj(T_{j l kbar}) and w_p = alpha^{p qbar} s_q.
    """
    n = alpha.grid.n
    A = alpha.values
    Ainv = metric_inverse(A)
    TC = np.conj(torsion.lowered)
    s = np.einsum("...kl,...jlk->...j", Ainv, TC)
    w = np.einsum("...pq,...q->...p", Ainv, s)
    term1 = w[..., :, None, None] * A[..., None, :, :]
    term3 = np.einsum("...pl,...lji->...pij", Ainv, TC)
    coeff = term1 - term3
    for p in range(n):
        coeff[..., p, p, :] = coeff[..., p, p, :] - s
    return coeff / (2.0 * (n - 1))


def gradient_coupling_values(coeff: np.ndarray, du: np.ndarray) -> np.ndarray:
    """Z_{i jbar} = C[p,i,j] u_p + conj(C[p,j,i] u_p) for stacked u_p."""
    half = np.einsum("...pij,...p->...ij", coeff, du)
    return half + np.conj(half.swapaxes(-1, -2))


@dataclass
class EquationData:
    """Background data and caches for one equation instance.

    coupling is 1 for the plain gradient term and 2 for the variant where
    the reference power is assembled under an astheno-Kahler background,
    which only doubles the torsion coupling.
    """

    grid: GridSpec
    alpha: HermitianTensorField
    alpha0: HermitianTensorField
    source: ScalarField
    coupling: float = 1.0

    def __post_init__(self):
        if self.coupling not in (1, 2, 1.0, 2.0):
            raise ValueError(f"coupling must be 1 or 2, got {self.coupling}")
        if not self.source.real:
            raise ValueError("source must be a real-flagged field")
        if not (self.alpha.metric and self.alpha0.metric):
            raise ValueError("alpha and alpha0 must be metric-flagged")
        self._alpha_inv = metric_inverse(self.alpha.values)
        self._log_det_alpha = np.log(metric_determinant(self.alpha.values))
        self.base = geometry.star_power(self.alpha0, self.alpha)
        ok, small, idx = _min_eig(self.base.values, self.alpha.values)
        if not ok:
            raise ConeViolation(
                "star of alpha0 power is not positive: no subsolution at u=0",
                point=idx, eigenvalue=small,
            )
        self.connection = geometry.chern_connection(self.alpha)
        self.torsion = geometry.chern_torsion(self.alpha, self.connection)
        self.grad_coeff = gradient_coupling_coefficients(self.alpha, self.torsion)
        self.torsion_active = self.torsion.sup_norm() > 1e-13
        self._oracle_cache = None

    @property
    def alpha_inverse(self) -> np.ndarray:
        return self._alpha_inv

    @property
    def log_det_alpha(self) -> np.ndarray:
        return self._log_det_alpha


def _min_eig(G: np.ndarray, A: np.ndarray):
    small, idx = _linalg.min_generalized_eigenvalue(G, A)
    return small > 0.0, small, idx


def gradient_coupling(u: ScalarField, data: EquationData) -> HermitianTensorField:
    """The torsion gradient tensor for a real potential (coupling excluded)."""
    if not u.real:
        raise ValueError("potential must be real-flagged")
    du = gradient_z(u)
    vals = gradient_coupling_values(data.grad_coeff, du)
    return HermitianTensorField(data.grid, vals)


def assemble_star_metric_values(u_values: np.ndarray, data: EquationData,
                                du: np.ndarray | None = None,
                                hess: np.ndarray | None = None) -> np.ndarray:
    if hess is None:
        hess = complex_hessian_values(u_values, data.grid)
    if du is None:
        du = _stacked_gradient(u_values, data.grid)
    pc = geometry.trace_complement_values(hess, data.alpha.values)
    z = gradient_coupling_values(data.grad_coeff, du)
    return data.base.values + pc + data.coupling * z


def _stacked_gradient(u_values: np.ndarray, grid: GridSpec) -> np.ndarray:
    parts = [_deriv_values(u_values, grid, p, conjugate=False) for p in range(grid.n)]
    return np.stack(np.broadcast_arrays(*parts), axis=-1)


def assemble_star_metric(u: ScalarField, data: EquationData) -> HermitianTensorField:
    """The tensor s[u] whose log-determinant drives the equation.

    Coincides with the star of omega^{n-1} for the metric omega recovered
    from u wherever s[u] is positive; for u = 0 it returns the cached base.
    """
    if not u.real:
        raise ValueError("potential must be real-flagged")
    vals = assemble_star_metric_values(u.values, data)
    return HermitianTensorField(data.grid, vals)


@dataclass(frozen=True)
class Residual:
    """Pointwise equation defect together with the constant unknown."""

    value: ScalarField
    constant: float

    def sup(self) -> float:
        return float(np.max(np.abs(self.value.values.real)))


def equation_residual(u: ScalarField, constant: float,
                      data: EquationData, t: float = 1.0) -> Residual:
    """log det(s[u]/alpha) - (n-1)(t f + constant) as a real field.

    Raises ConeViolation (with the worst point) when s[u] leaves the
    positive cone, so a solver can backtrack.
    """
    if not u.real:
        raise ValueError("potential must be real-flagged")
    svals = assemble_star_metric_values(u.values, data)
    value = residual_from_star_metric(svals, constant, data, t)
    return Residual(ScalarField(data.grid, value.astype(np.complex128), real=True),
                    float(constant))


def residual_from_star_metric(svals: np.ndarray, constant: float,
                              data: EquationData, t: float = 1.0) -> np.ndarray:
    n = data.grid.n
    ok, idx, small = _positive_definite_everywhere(svals)
    if not ok:
        raise ConeViolation("iterate left the solvable cone",
                            point=idx, eigenvalue=small)
    logdet = np.log(metric_determinant(svals)) - data.log_det_alpha
    rhs = (n - 1) * (t * data.source.values.real + constant)
    return logdet - rhs


def linearized_residual(u: ScalarField, data: EquationData,
                        delta_u: ScalarField, delta_constant: float) -> ScalarField:
    """Directional derivative of the residual at (u, constant).

    Equals trace(s[u]^{-1} delta_s) - (n-1) delta_constant with
    delta_s = trace_complement(i ddbar delta_u) + coupling * Zgrad(delta_u).
    """
    svals = assemble_star_metric_values(u.values, data)
    sinv = np.linalg.inv(svals)
    vals = apply_linearization(sinv, delta_u.values, float(delta_constant), data)
    return ScalarField(data.grid, vals.astype(np.complex128), real=True)


def apply_linearization(sinv: np.ndarray, delta_u_values: np.ndarray,
                        delta_constant: float, data: EquationData) -> np.ndarray:
    n = data.grid.n
    hess = complex_hessian_values(delta_u_values, data.grid)
    du = _stacked_gradient(delta_u_values, data.grid)
    pc = geometry.trace_complement_values(hess, data.alpha.values)
    z = gradient_coupling_values(data.grad_coeff, du)
    delta_s = pc + data.coupling * z
    trace = np.einsum("...ij,...ji->...", sinv, delta_s).real
    return trace - (n - 1) * delta_constant


def metric_from_potential(u: ScalarField, data: EquationData) -> HermitianTensorField:
    """The positive metric omega with star_power(omega) = s[u].

    Its volume ratio against alpha is det(s[u]/alpha)^{1/(n-1)} pointwise.
    """
    s = assemble_star_metric(u, data)
    return geometry.star_power_inverse(s, data.alpha)


def volume_ratio(u: ScalarField, data: EquationData) -> np.ndarray:
    """omega^n / alpha^n pointwise, computed from the star metric."""
    svals = assemble_star_metric_values(u.values, data)
    n = data.grid.n
    logdet = np.log(metric_determinant(svals)) - data.log_det_alpha
    return np.exp(logdet / (n - 1))


# ---------------------------------------------------------------------------
# oracles and structural checks


def _oracle_fields(data: EquationData):
    """Cached delbar of the (n-2) wedge power of alpha, as coefficient fields."""
    if data._oracle_cache is None:
        power = forms.wedge_power_fields(data.alpha.values, data.grid.n - 2)
        data._oracle_cache = forms.delbar_fields(power, data.grid)
    return data._oracle_cache


def gradient_coupling_star_oracle(u: ScalarField, data: EquationData,
                                  index: tuple) -> np.ndarray:
    """Brute-force evaluation of the gradient coupling at one point.

    Computes star(Re(i del u ^ delbar(alpha^{n-2}))) / (n-1)! by pointwise
    exterior algebra in an alpha-orthonormal frame and transforms the
    result back to coordinates.  This is the independent reference for the
    six-term closed form.
    """
    if not u.real:
        raise ValueError("potential must be real-flagged")
    n = data.grid.n
    du = _stacked_gradient(u.values, data.grid)
    dbar_power = _oracle_fields(data)

    idx_full = tuple(index)
    du_point = np.array([_value_at(du[..., p], data.grid, idx_full)
                         for p in range(n)])
    part = forms.fields_at_point(dbar_power, n, idx_full)
    del_u = forms.PointForm.one_form(n, holo=du_point)
    integrand = (1j * del_u.wedge(part)).real_part()

    A = _matrix_at(data.alpha.values, data.grid, idx_full)
    L = np.linalg.cholesky(A)
    E = np.linalg.inv(L).T          # honest alpha-orthonormal frame columns
    frame_form = integrand.pullback(E)
    S_frame = frame_form.star_tensor() / factorial(n - 1)
    # transform the (1,1) tensor back to coordinates
    Einv = L.T
    return Einv.T @ S_frame @ np.conj(Einv)


def _value_at(field: np.ndarray, grid: GridSpec, index: tuple):
    idx = tuple(index[a] if field.shape[a] > 1 else 0 for a in range(2 * grid.n))
    return field[idx]


def _matrix_at(field: np.ndarray, grid: GridSpec, index: tuple) -> np.ndarray:
    idx = tuple(index[a] if field.shape[a] > 1 else 0 for a in range(2 * grid.n))
    return np.asarray(field[idx])


@dataclass(frozen=True)
class CouplingStructureReport:
    """Magnitudes of the two structural identities of the coupling tensor."""

    first_identity_max: float
    second_identity_max: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return (self.first_identity_max <= self.tolerance
                and self.second_identity_max <= self.tolerance)

    def describe(self) -> str:
        state = "ok" if self.ok else "VIOLATED"
        return (f"coupling structure {state}: frame component C[j,i,j] sup "
                f"{self.first_identity_max:.3e}, covariant diagonal sup "
                f"{self.second_identity_max:.3e} (tol {self.tolerance:.1e})")


def coupling_structure_check(data: EquationData,
                             tolerance: float = 1e-9,
                             coeff_override: np.ndarray | None = None) -> CouplingStructureReport:
    """Verify the skew structure of the gradient coupling over the grid.

    In every alpha-orthonormal frame the coefficient component C[j, i, j]
    must vanish, and so must the fully diagonal component of its
    anti-holomorphic covariant derivative.  A symmetrized (corrupted)
    torsion passed through coeff_override breaks the first identity and is
    reported rather than raised.
    """
    grid = data.grid
    n = grid.n
    coeff = data.grad_coeff if coeff_override is None else coeff_override
    A = np.broadcast_to(data.alpha.values, grid.shape + (n, n))
    L = np.linalg.cholesky(A)
    E = np.linalg.inv(L).swapaxes(-1, -2)      # L^{-T} per point
    Einv = L.swapaxes(-1, -2)

    coeff_full = np.broadcast_to(coeff, grid.shape + (n, n, n))
    frame = np.einsum("...ap,...pij,...ib,...jc->...abc",
                      Einv, coeff_full, E, np.conj(E))
    first = 0.0
    for b in range(n):
        for c in range(n):
            first = max(first, float(np.max(np.abs(frame[..., c, b, c]))))

    # covariant derivative nabla_{mbar} C[p, i, j]
    #   = d_{mbar} C[p,i,j] - conj(Gamma^l_{m j}) C[p,i,l]
    dC = np.stack([_deriv_values(coeff_full, grid, m, conjugate=True)
                   for m in range(n)], axis=-1)
    gamma = np.broadcast_to(data.connection.values, grid.shape + (n, n, n))
    corr = np.einsum("...lmj,...pil->...pijm", np.conj(gamma), coeff_full)
    nabla = dC - corr
    frame4 = np.einsum("...ap,...pijm,...ib,...jc,...md->...abcd",
                       Einv, nabla, E, np.conj(E), np.conj(E))
    second = 0.0
    for a in range(n):
        second = max(second, float(np.max(np.abs(frame4[..., a, a, a, a]))))
    return CouplingStructureReport(first, second, tolerance)


def symmetrized_torsion_coefficients(data: EquationData) -> np.ndarray:
    """Coefficients built from a deliberately corrupted torsion.

    Negative control for coupling_structure_check: symmetrizing the
    lowered torsion over the wrong index pair (the bug of confusing which
    slots are skew) populates the skew diagonal and breaks the frame
    identities, which the checker must report.
    """
    lowered = data.torsion.lowered
    sym = 0.5 * (lowered + lowered.swapaxes(-1, -2))
    fake = geometry.TorsionField(data.grid, data.torsion.upper, sym)
    return gradient_coupling_coefficients(data.alpha, fake)


def aeppli_pairing(u: ScalarField, data: EquationData,
                   psi: np.ndarray) -> float:
    """Integral of (omega^{n-1} - alpha0^{n-1}) ^ psi for constant psi.

    psi is a constant Hermitian matrix representing the closed (1, 1) form
    i psi_{a bbar} dz^a ^ dzbar^b.  The difference of powers is exact, so
    the pairing vanishes to quadrature accuracy for every potential whose
    star metric stays positive.  Normalization matches ``integrate``: the
    pairing of alpha^{n-1} with alpha itself would give the alpha volume.
    """
    n = data.grid.n
    omega = metric_from_potential(u, data)
    c_omega = forms.wedge_power_fields(omega.values, n - 1)
    c_base = forms.wedge_power_fields(data.alpha0.values, n - 1)
    masks = forms.nm1_coefficient_masks(n)
    total = 0.0 + 0.0j
    for (i, j), mask in masks.items():
        diff = c_omega.get(mask, 0) - c_base.get(mask, 0)
        gi, gj = 1 << i, 1 << (n + j)
        sign = forms.wedge_sign(mask, gi) * forms.wedge_sign(mask | gi, gj)
        contrib = np.mean(np.broadcast_to(diff, data.grid.shape)) \
            * (1j * psi[i, j]) * sign
        total += contrib
    total /= forms.volume_coefficient(n) * factorial(n)
    return float(total.real) if abs(total.imag) < 1e-9 else complex(total)
