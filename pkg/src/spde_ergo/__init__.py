"""Drift-implicit Euler spectral-Galerkin simulator for 1D monotone SPDEs
with multiplicative white noise, plus a Monte Carlo ergodicity harness."""

__version__ = "0.1.0"

from .spectral import (
    SpectralCoeffs,
    PhysicalGrid,
    eigenvalue,
    eigenvalues,
    basis_eval,
    synthesize,
    analyze,
    sobolev_norm,
    resolvent_apply,
    geometric_decay_sum,
)
from .model import (
    ModelConstants,
    CoefficientModel,
    allen_cahn_model,
    paper_diffusion,
    constant_diffusion,
    heat_model,
    zero_model,
    validate_step_constraint,
    nemytskii_drift,
    nemytskii_jacobian,
    noise_matrix,
    validate_nondegeneracy,
)
from .noise import NoiseStream, gaussian_increments, multiplicative_increment
from .scheme import (
    SchemeParams,
    PathState,
    StepDiagnostics,
    PathResult,
    NonConvergenceError,
    SingularLinearSolveError,
    implicit_solve,
    dieg_step,
    convolution_update,
    random_pde_residual,
    run_path,
)
from .ergodic import (
    FUNCTIONAL_TAGS,
    INITIAL_DATA_IDS,
    functional_eval,
    initial_datum,
    MomentSeries,
    RunningAverage,
    EnsembleConfig,
    EnsembleResult,
    EnsembleError,
    run_ensemble,
    LyapunovReference,
    lyapunov_series,
    convolution_moment_report,
    agreement_check,
)

__all__ = [name for name in dir() if not name.startswith("_")]
