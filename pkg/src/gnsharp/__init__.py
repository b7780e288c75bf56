"""Sharp Gagliardo-Nirenberg constants, extremals, blow-up coefficients and a
torus simulator of the penalized minimization."""

__version__ = "0.1.0"

from .core import (
    GNParams,
    RadialProfile,
    Regime,
    blowup_regime_equivalence,
    closed_form_A,
    dpd_r,
    extremal_profile,
    log_gamma,
    sobolev_exponent,
    theta,
    validate_params,
)
from .errors import (
    AccuracyNotMet,
    DomainError,
    ExtremalityViolated,
    GNError,
    NotConverged,
    TailDivergence,
    ZeroField,
    ZeroProfile,
)
from .quadrature import (
    MomentIntegrals,
    QuadratureScheme,
    TailModel,
    blowup_coefficient,
    gn_quotient,
    moments,
    radial_integral,
    verify_extremality,
)
from .torus import (
    MinimizerDiagnostics,
    SolverOptions,
    TorusField,
    TorusGrid,
    alpha_sweep,
    concentration_profile,
    j_alpha,
    lr_normalize,
    minimize_j_alpha,
    p_dirichlet_energy,
)
