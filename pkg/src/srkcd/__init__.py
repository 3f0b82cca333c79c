"""Stochastic Runge-Kutta-Chebyshev descent (SRKCD) and stochastic RK steppers."""

from .chebyshev import RkcCoefficients, cheb_T, cheb_T_prime, rkc_coefficients
from .optimizer import (
    DivergenceError,
    OptimizerConfig,
    RunRecord,
    StepSchedule,
    momentum_step,
    rk_step,
    run,
    srkcd_step,
)
from .problems import (
    BatchSampler,
    GradientOracle,
    NonconvexProblem,
    QuadraticProblem,
    estimate_moment_constants,
    generate_nonconvex,
    generate_quadratic,
    quadratic_optimal_gd_step,
)
from .tableau import (
    ButcherTableau,
    PnPolynomial,
    ValidationReport,
    brute_force_tableau,
    explicit_euler,
    max_step_bound,
    p_polynomial,
    q_function,
    q_step_limit,
    real_stability_boundary,
    stability_function,
    tableau_from_rkc,
    validate_assumption_rk,
)

__version__ = "0.1.0"
