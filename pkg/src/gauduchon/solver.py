"""Damped Newton continuation for the prescribed-volume equation.

The unknowns are a mean-zero real potential u and a constant; each Newton
step solves the augmented linear system

    [ linearization   -(n-1) ] [du]   [-residual]
    [ mean               0   ] [dc] = [    0    ]

with a Krylov method (GMRES) preconditioned by the inverse of the flat
Laplacian, then backtracks until the star metric stays positive and the
sup residual strictly decreases.  The source is ramped linearly in the
continuation parameter t; the t = 0 problem is exact when the two
background metrics coincide and is otherwise a cheap warm start.

The estimator-style wrapper ``ContinuationSolver`` mirrors the
constructor-parameters / fit / trailing-underscore-attribute conventions
of scikit-learn so runs compose with generic tooling; the heavy lifting
stays in the plain functions.
"""

from __future__ import annotations

import inspect
from dataclasses import dataclass, field, fields as dataclass_fields

import numpy as np
import scipy.fft as sfft
import scipy.sparse.linalg as spla

from . import _linalg, equation, geometry
from .eigenfuncs import complement_mean_inverse
from .equation import EquationData
from .errors import ConeViolation, NoConvergence, StepFailure
from .grid import ScalarField, metric_determinant, metric_inverse, sup_norms


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and budgets for the Newton continuation."""

    newton_tol: float = 1e-9
    max_newton: int = 50
    backtrack_factor: float = 0.5
    max_backtracks: int = 20
    continuation_steps: int = 10
    min_step: float = 1e-4
    krylov_tol: float = 1e-10
    krylov_max_iters: int = 400
    krylov_restart: int = 30
    probe_kappa: float = 0.05

    def __post_init__(self):
        if self.newton_tol <= 0 or self.krylov_tol <= 0 or self.min_step <= 0:
            raise ValueError("tolerances must be positive")
        if self.continuation_steps < 1:
            raise ValueError("continuation_steps must be >= 1")
        if not 0.0 < self.backtrack_factor < 1.0:
            raise ValueError("backtrack_factor must lie in (0, 1)")


@dataclass(frozen=True)
class DiagnosticsReport:
    """Estimate-flavoured telemetry of an accepted state.

    grad_bound is 1 + sup |grad u|^2, hess_sup the sup of the Hessian
    eigenvalue norm, and their ratio is the quantity whose boundedness the
    continuous theory provides; it is monitored, not enforced.  min_nu is
    the smallest eigenvalue of the star metric against alpha (positive on
    the solvable cone), trace_min the minimum of tr_alpha(omega).
    """

    grad_bound: float
    hess_sup: float
    ratio: float
    osc: float
    min_nu: float
    trace_min: float
    probe_counts: dict
    sum_bound_violations: int


@dataclass
class SolverState:
    """(potential, constant, ramp parameter, diagnostics) snapshot."""

    u: ScalarField
    constant: float
    t: float
    diagnostics: DiagnosticsReport | None = None
    newton_iterations: int = 0

    def sup_normalized_potential(self) -> ScalarField:
        vals = self.u.values.real
        shifted = vals - float(np.max(vals))
        return ScalarField(self.u.grid, shifted.astype(np.complex128), real=True)


def _zero_state(data: EquationData) -> SolverState:
    grid = data.grid
    u0 = ScalarField(grid, np.zeros((1,) * (2 * grid.n), dtype=np.complex128),
                     real=True)
    return SolverState(u=u0, constant=0.0, t=0.0)


def _center(values: np.ndarray) -> np.ndarray:
    return values - values.mean()


class _NewtonKernel:
    """Linear algebra workspace for one Newton iterate."""

    def __init__(self, data: EquationData, svals: np.ndarray, cfg: SolverConfig):
        self.data = data
        self.cfg = cfg
        grid = data.grid
        self.grid = grid
        self.n = grid.n
        self.shape = grid.shape
        self.size = int(np.prod(self.shape))
        self.sinv = np.linalg.inv(svals)
        trace_weight = np.einsum("...ij,...ij->...", self.sinv,
                                 np.broadcast_to(data.alpha.values,
                                                 self.sinv.shape)).real
        kappa = float(np.mean(trace_weight)) / self.n
        lap = geometry.flat_laplacian_symbol(grid) * kappa
        zero = (0,) * (2 * grid.n)
        lap[zero] = 1.0
        self._inv_lap = 1.0 / lap
        self._inv_lap[zero] = 0.0

    def matvec(self, y: np.ndarray) -> np.ndarray:
        du = y[:-1].reshape(self.shape)
        dc = y[-1]
        top = equation.apply_linearization(self.sinv, du.astype(np.complex128),
                                           float(dc), self.data)
        return np.concatenate([top.ravel(), [du.mean()]])

    def precondition(self, y: np.ndarray) -> np.ndarray:
        r = y[:-1].reshape(self.shape)
        s = y[-1]
        rhat = sfft.fftn(r.astype(np.complex128), workers=-1)
        rhat *= self._inv_lap
        du = sfft.ifftn(rhat, workers=-1).real
        du += s - du.mean()
        dc = -float(r.mean()) / (self.n - 1)
        return np.concatenate([du.ravel(), [dc]])

    def solve(self, residual_values: np.ndarray):
        rhs = np.concatenate([-residual_values.ravel(), [0.0]])
        op = spla.LinearOperator((self.size + 1, self.size + 1),
                                 matvec=self.matvec, dtype=np.float64)
        M = spla.LinearOperator((self.size + 1, self.size + 1),
                                matvec=self.precondition, dtype=np.float64)
        restart = min(self.cfg.krylov_restart, self.cfg.krylov_max_iters)
        maxiter = max(1, self.cfg.krylov_max_iters // restart)
        sol, info = spla.gmres(op, rhs, M=M, rtol=self.cfg.krylov_tol, atol=0.0,
                               restart=restart, maxiter=maxiter)
        if info > 0:
            # accept the best iterate; Newton damping guards the step
            pass
        du = sol[:-1].reshape(self.shape)
        return _center(du), float(sol[-1])


def _try_residual(u_values: np.ndarray, constant: float, data: EquationData,
                  t: float):
    svals = equation.assemble_star_metric_values(
        u_values.astype(np.complex128), data)
    value = equation.residual_from_star_metric(svals, constant, data, t)
    return value, svals


def newton_solve(data: EquationData, t: float, init: SolverState,
                 cfg: SolverConfig | None = None,
                 telemetry=None) -> SolverState:
    """Newton iteration at a fixed ramp parameter t.

    The initial state must have a positive star metric; accepted steps
    strictly decrease the sup residual and stay in the cone, with cone
    exits triggering damping before failure.
    """
    cfg = cfg or SolverConfig()
    grid = data.grid
    u = np.ascontiguousarray(
        np.broadcast_to(init.u.values.real, grid.shape), dtype=np.float64)
    u = _center(u)
    constant = float(init.constant)

    res_vals, svals = _try_residual(u, constant, data, t)
    sup_res = float(np.max(np.abs(res_vals)))
    for iteration in range(cfg.max_newton + 1):
        if telemetry is not None:
            telemetry({"event": "newton", "t": t, "iteration": iteration,
                       "sup_residual": sup_res, "constant": constant})
        if sup_res <= cfg.newton_tol:
            out_u = ScalarField(grid, u.astype(np.complex128), real=True)
            return SolverState(u=out_u, constant=constant, t=t,
                               newton_iterations=iteration)
        if iteration == cfg.max_newton:
            break
        kernel = _NewtonKernel(data, svals, cfg)
        du, dc = kernel.solve(res_vals)
        step = 1.0
        accepted = False
        last_cone = None
        for _ in range(cfg.max_backtracks + 1):
            try:
                cand_u = _center(u + step * du)
                cand_c = constant + step * dc
                cand_res, cand_s = _try_residual(cand_u, cand_c, data, t)
            except ConeViolation as exc:
                last_cone = exc
                step *= cfg.backtrack_factor
                continue
            cand_sup = float(np.max(np.abs(cand_res)))
            if cand_sup < sup_res:
                u, constant = cand_u, cand_c
                res_vals, svals, sup_res = cand_res, cand_s, cand_sup
                accepted = True
                break
            step *= cfg.backtrack_factor
        if not accepted:
            if last_cone is not None:
                raise ConeViolation(
                    f"damping could not re-enter the cone at t={t:g}",
                    point=last_cone.point, eigenvalue=last_cone.eigenvalue)
            raise NoConvergence(
                f"no residual decrease after {cfg.max_backtracks} halvings "
                f"at t={t:g}", last_residual=sup_res)
    raise NoConvergence(
        f"Newton budget exhausted at t={t:g} with residual {sup_res:.3e}",
        last_residual=sup_res)


def continuation_solve(data: EquationData, cfg: SolverConfig | None = None,
                       telemetry=None, init: SolverState | None = None,
                       collect_diagnostics: bool = True) -> SolverState:
    """Ramp the source from zero to full strength, Newton-solving each step.

    When alpha0 and alpha coincide the t = 0 problem is solved by the zero
    state exactly; otherwise t = 0 is Newton-solved from zero with the
    constant initialized to kill the mean residual.  Failed steps halve
    the increment; below min_step a StepFailure carries the last good
    state.
    """
    cfg = cfg or SolverConfig()
    state = init or _zero_state(data)

    if init is None and not _same_background(data):
        r0 = equation.equation_residual(state.u, 0.0, data, t=0.0)
        b0 = float(np.mean(np.broadcast_to(r0.value.values.real,
                                           data.grid.shape))) / (data.grid.n - 1)
        state = SolverState(u=state.u, constant=b0, t=0.0)
    state = newton_solve(data, 0.0, state, cfg, telemetry)
    _record(state, data, cfg, telemetry, collect_diagnostics)

    dt0 = 1.0 / cfg.continuation_steps
    dt = dt0
    t = 0.0
    while t < 1.0 - 1e-14:
        target = min(1.0, t + dt)
        try:
            new_state = newton_solve(data, target, state, cfg, telemetry)
        except (NoConvergence, ConeViolation):
            dt *= 0.5
            if dt < cfg.min_step:
                raise StepFailure(
                    f"continuation step collapsed below {cfg.min_step:g} "
                    f"at t={t:g}", last_state=state)
            continue
        state = new_state
        t = target
        _record(state, data, cfg, telemetry, collect_diagnostics)
        dt = min(dt0, dt * 2.0)
    return state


def _same_background(data: EquationData) -> bool:
    a, b = data.alpha.values, data.alpha0.values
    if a.shape != b.shape:
        return False
    return bool(np.array_equal(a, b))


def _record(state: SolverState, data: EquationData, cfg: SolverConfig,
            telemetry, collect: bool):
    if not collect:
        return
    report = compute_diagnostics(state, data, cfg)
    state.diagnostics = report
    if telemetry is not None:
        telemetry({
            "event": "accepted", "t": state.t, "constant": state.constant,
            "newton_iterations": state.newton_iterations,
            "grad_bound": report.grad_bound, "hess_sup": report.hess_sup,
            "ratio": report.ratio, "min_nu": report.min_nu,
            "trace_min": report.trace_min,
            "probe_counts": report.probe_counts,
        })


def compute_diagnostics(state: SolverState, data: EquationData,
                        cfg: SolverConfig | None = None) -> DiagnosticsReport:
    """Estimate quantities and cone telemetry for an accepted state."""
    cfg = cfg or SolverConfig()
    grid = data.grid
    n = grid.n
    sup_u, sup_grad, sup_hess = sup_norms(state.u, data.alpha)
    grad_bound = 1.0 + sup_grad
    u_real = np.broadcast_to(state.u.values.real, grid.shape)
    osc = float(u_real.max() - u_real.min())

    svals = equation.assemble_star_metric_values(state.u.values, data)
    nus = _linalg.generalized_eigenvalues(svals, data.alpha.values)
    min_nu = float(nus[..., 0].min())

    omega_vals = geometry.star_power_inverse_values(svals, data.alpha.values)
    ainv = metric_inverse(data.alpha.values)
    trace_omega = np.einsum("...ij,...ij->...", ainv, omega_vals).real
    trace_min = float(trace_omega.min())

    lams = complement_mean_inverse(nus)
    chi_nus = _linalg.generalized_eigenvalues(data.base.values,
                                              data.alpha.values)
    chi_lams = complement_mean_inverse(chi_nus)
    grad = _gradient_from_mus(nus)
    total = grad.sum(axis=-1)
    weighted_gap = np.einsum("...k,...k->...",
                             grad, np.broadcast_to(chi_lams, lams.shape) - lams)
    case_a = weighted_gap > cfg.probe_kappa * total
    case_b = grad.min(axis=-1) > cfg.probe_kappa * total
    h_vals = (n - 1) * (state.t * data.source.values.real + state.constant)
    bound = n * np.exp(-np.broadcast_to(h_vals, total.shape) / n)
    violations = int(np.sum(total < bound * (1.0 - 1e-12)))
    counts = {
        "case_a": int(np.sum(case_a)),
        "case_b": int(np.sum(case_b & ~case_a)),
        "below_R": int(np.sum(~case_a & ~case_b)),
    }
    return DiagnosticsReport(
        grad_bound=grad_bound,
        hess_sup=sup_hess,
        ratio=sup_hess / grad_bound,
        osc=osc,
        min_nu=min_nu,
        trace_min=trace_min,
        probe_counts=counts,
        sum_bound_violations=violations,
    )


def _gradient_from_mus(mus: np.ndarray) -> np.ndarray:
    n = mus.shape[-1]
    inv = 1.0 / mus
    total = inv.sum(axis=-1, keepdims=True)
    return (total - inv) / (n - 1)


class ContinuationSolver:
    """Estimator-style front end: configure in the constructor, then fit.

    Parameters mirror SolverConfig.  After ``fit(data)`` the solution is
    exposed through trailing-underscore attributes: ``u_`` (mean-zero
    potential), ``constant_``, ``state_``, ``diagnostics_``.
    """

    def __init__(self, newton_tol=1e-9, max_newton=50, backtrack_factor=0.5,
                 max_backtracks=20, continuation_steps=10, min_step=1e-4,
                 krylov_tol=1e-10, krylov_max_iters=400, krylov_restart=30,
                 probe_kappa=0.05):
        self.newton_tol = newton_tol
        self.max_newton = max_newton
        self.backtrack_factor = backtrack_factor
        self.max_backtracks = max_backtracks
        self.continuation_steps = continuation_steps
        self.min_step = min_step
        self.krylov_tol = krylov_tol
        self.krylov_max_iters = krylov_max_iters
        self.krylov_restart = krylov_restart
        self.probe_kappa = probe_kappa

    @classmethod
    def _param_names(cls):
        sig = inspect.signature(cls.__init__)
        return [p for p in sig.parameters if p != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params) -> "ContinuationSolver":
        valid = set(self._param_names())
        for key, value in params.items():
            if key not in valid:
                raise ValueError(f"unknown parameter {key!r} for ContinuationSolver")
            setattr(self, key, value)
        return self

    def _config(self) -> SolverConfig:
        return SolverConfig(**self.get_params())

    def fit(self, data: EquationData, y=None, telemetry=None) -> "ContinuationSolver":
        state = continuation_solve(data, self._config(), telemetry=telemetry)
        self.data_ = data
        self.state_ = state
        self.u_ = state.u
        self.constant_ = state.constant
        self.diagnostics_ = state.diagnostics
        return self

    def solution_metric(self):
        """The solved metric omega (requires a previous fit)."""
        if not hasattr(self, "state_"):
            raise AttributeError("solver has not been fitted")
        return equation.metric_from_potential(self.u_, self.data_)
