"""BIC-type model selection for sparse additive models.

Centered B-spline design matrices, least-squares submodel fits, a
semiparametric BIC criterion over size-constrained submodels, group
(adaptive) LASSO paths tuned by BIC(lambda), and a Monte Carlo harness
for selection-consistency experiments.
"""

from .basis import (
    DesignMatrix,
    SplineSpec,
    Submodel,
    auto_dim,
    build_design,
    eval_raw_basis,
    eval_raw_basis_grid,
    make_spec,
    rescale_covariates,
    submatrix,
)
from .criterion import BICRecord, PenaltySpec, bic_lambda, bic_submodel, penalty_value
from .fitting import (
    ComponentEstimate,
    FitResult,
    active_set,
    component_estimate,
    eval_component,
    fit_least_squares,
    fit_submodel,
    recover_intercept,
)
from .group_lasso import (
    GridOptions,
    PathResult,
    SolveOptions,
    TwoStageResult,
    Weights,
    adaptive_group_lasso_select,
    adaptive_weights,
    fit_group_lasso,
    kkt_residual,
    lambda_max,
    select_lambda,
    solve_path,
    unit_weights,
)
from .simulation import (
    MethodSpec,
    SelectionReport,
    SimConfig,
    gen_dataset,
    noise_sample,
    run_experiment,
)
from .subset_search import (
    BudgetExceededError,
    SearchResult,
    exhaustive_select,
    greedy_forward_select,
    screen_components,
)

__version__ = "0.1.0"
