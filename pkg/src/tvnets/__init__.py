"""Time-varying Granger-causality and partial-correlation network estimation.

Three-stage pipeline for high-dimensional time series: a penalised
local-linear screening stage, a weighted group-LASSO refit whose folded
concave weights come from the screening statistics, and a constrained-ell1
precision stage on the residuals, with optional low-rank factor adjustment
and a seeded Monte-Carlo benchmark harness.
"""

from .errors import (
    ConvergenceError,
    DataFormatError,
    DegenerateWindowError,
    InfeasibleError,
    InsufficientDataError,
    MissingDataError,
    NumericError,
    SelectionError,
    SingularDesignError,
    TvnetsError,
    ValidationError,
)
from .factors import FactorFit, factor_adjust, local_pca, pca_factors, select_num_factors
from .kernels import (
    EPANECHNIKOV,
    Bandwidths,
    KernelSpec,
    default_bandwidths,
    kernel_eval,
    local_linear_weights,
)
from .metrics import (
    ClassificationRecord,
    ConfusionCounts,
    ErrorReport,
    aggregate,
    average_r2,
    classification_metrics,
    estimation_error_A,
    estimation_error_Omega,
    granger_universe,
    partial_universe,
    rmse_innovations,
)
from .networks import (
    NetworkEstimate,
    granger_edges,
    order_ratios,
    partial_corr_edges,
    select_var_order,
)
from .panel import LaggedDesign, TimeSeriesPanel, build_lagged_design, load_panel, save_panel
from .pipeline import (
    BENCHMARK_METHODS,
    EstimateResult,
    estimate,
    estimate_coefficients,
    run_benchmark,
    run_replication,
    shared_gram_cache,
)
from .simulate import ScenarioSpec, ScenarioTruth, generate
from .tvclime import (
    CovariancePath,
    PrecisionPath,
    ResidualPanel,
    clime_column,
    covariance_path,
    ebic_select_lambda3,
    precision_path,
    residuals,
    symmetrize,
)
from .tvlasso import CoefficientPath, LocalLassoFit, bic_select_lambda1, local_lasso, preliminary_path
from .wglasso import (
    GroupWeights,
    ScadPenalty,
    build_weights,
    deviation_stat,
    fit_full,
    fit_oracle,
    fit_weighted_group_lasso,
    gic_select_lambda2,
    scad_derivative,
)

__version__ = "0.1.0"
