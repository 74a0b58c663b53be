"""Numerical toolkit for Gauduchon metrics with prescribed volume form.

The package discretizes Hermitian metrics on the square complex torus
C^n/(Z^n + iZ^n) on a periodic grid, differentiates spectrally, and
solves the fully nonlinear equation that prescribes the volume form of a
Gauduchon metric built from a scalar potential through the star of its
(n-1)-st wedge power.  See the README for the equation, conventions and
the verification suites.
"""

from .errors import (
    ConeViolation,
    ConfigError,
    GauduchonError,
    NoConvergence,
    NonPositiveFactor,
    StepFailure,
)
from .grid import (
    GridSpec,
    HermitianTensorField,
    ScalarField,
    complex_hessian,
    dz,
    dzbar,
    integrate,
    laplacian,
    spectral_resample,
    sup_norms,
)
from .geometry import (
    ChristoffelField,
    TorsionField,
    chern_connection,
    chern_ricci,
    chern_torsion,
    gauduchon_correct,
    gauduchon_defect,
    gauduchon_factor,
    star_power,
    star_power_inverse,
    trace_complement,
    trace_complement_inverse,
)
from .eigenfuncs import (
    EigenPair,
    c_subsolution_check,
    complement_mean,
    complement_mean_inverse,
    generalized_eigenpair,
    log_complement_gradient,
    log_complement_product,
    operator_derivative,
    subsolution_dichotomy_probe,
)
from .equation import (
    EquationData,
    Residual,
    aeppli_pairing,
    assemble_star_metric,
    coupling_structure_check,
    equation_residual,
    gradient_coupling,
    gradient_coupling_star_oracle,
    linearized_residual,
    metric_from_potential,
    volume_ratio,
)
from .solver import (
    ContinuationSolver,
    DiagnosticsReport,
    SolverConfig,
    SolverState,
    compute_diagnostics,
    continuation_solve,
    newton_solve,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
