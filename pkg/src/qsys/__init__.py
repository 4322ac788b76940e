"""Quasi-systematic sampling on the unit interval.

Point processes with a tuning parameter r > 0 interpolating between
independent sampling (r = 1) and systematic sampling (r -> infinity),
their exact inclusion densities, unbiased Horvitz-Thompson mean and
variance estimation, and a deterministic Monte Carlo harness.
"""

from .distributions import (
    DirichletSymParams,
    GammaParams,
    RngState,
    forward_gamma_cdf,
    forward_gamma_pdf,
    sample_dirichlet_sym,
    sample_forward_gamma,
    sample_gamma,
    sample_uniform,
)
from .estimation import (
    FOLDED_INTEREST_FUNCTION,
    INTEREST_FUNCTION,
    EstimateReport,
    IntegrableFunction,
    TrueVarianceReport,
    confidence_interval,
    estimate_report,
    fold_endpoints,
    function_mean,
    ht_mean,
    oscillatory_interest_function,
    renewal_identity_residual,
    true_variance,
    var_hat_cordy,
    var_hat_syg,
)
from .numerics import (
    DomainError,
    Grid1D,
    NumericError,
    Tolerance,
    beta_cdf,
    bisect_monotone,
    integrate_1d,
    integrate_2d,
    log_gamma,
    lower_gamma_regularized,
    upper_gamma_regularized,
)
from .processes import (
    BinomialSpec,
    DensityEvaluator,
    OrderedSample,
    PoissonSpec,
    ProcessSpec,
    SampleCollisionError,
    ShapedDensity,
    SystBinomialSpec,
    SystPoissonSpec,
    SystematicSpec,
    TransformedDensityEvaluator,
    nth_order_density_syst_binomial,
    sample_binomial,
    sample_binomial_dirichlet,
    sample_poisson,
    sample_process,
    sample_syst_binomial,
    sample_syst_binomial_thinning,
    sample_syst_poisson,
    sample_systematic,
    second_order_density_syst_binomial,
    second_order_density_syst_poisson,
    syg_ratio_max,
    transform_process,
)
from .simulation import (
    DensityCurve,
    ExperimentConfig,
    SimulationSummary,
    SummaryRow,
    convergence_probe,
    density_curve,
    gap_sd_formula,
    pair_count_expectation,
    run_experiment,
)

__version__ = "0.1.0"
